use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use gcmac_core::simulator::TraceRecord;
use gcmac_core::{
    CompareTable, Feasibility, MetricsReport, OptimizationResult, Regime, SimMetrics, SweepAxis,
    SweepPoint,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            other => Err(format!("unknown format `{other}` (json or csv)")),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Json => "json",
            Self::Csv => "csv",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Report {
    Analysis {
        regime: Regime,
        teams: usize,
        team_size: usize,
        metrics: MetricsReport,
    },
    Optimization(OptimizationResult),
    Simulation {
        metrics: SimMetrics,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        trace: Vec<TraceRecord>,
    },
    Sweep {
        regime: Regime,
        axis: SweepAxis,
        points: Vec<SweepPoint>,
    },
    Comparison(CompareTable),
}

const NORMALIZATION_NOTE: &str =
    "# normalized columns are per-cycle bytes divided by the mean usable transmission time (1/mu_off) times the peak data rate";

fn feasibility_label(f: &Feasibility) -> String {
    let mut failed = Vec::new();
    if !f.team_budget {
        failed.push("team-budget");
    }
    if !f.false_alarm {
        failed.push("false-alarm");
    }
    if !f.detection {
        failed.push("detection");
    }
    if failed.is_empty() {
        "feasible".into()
    } else {
        failed.join("+")
    }
}

fn csv_error(e: csv::Error) -> io::Error {
    io::Error::other(e)
}

fn write_csv<W: Write>(out: &mut W, report: &Report) -> io::Result<()> {
    writeln!(out, "{NORMALIZATION_NOTE}")?;
    let mut w = csv::Writer::from_writer(out);
    let mut row = |fields: Vec<String>| w.write_record(&fields).map_err(csv_error);
    let f = |x: f64| x.to_string();
    match report {
        Report::Analysis {
            regime,
            teams,
            team_size,
            metrics,
        } => {
            row(
                [
                    "regime", "U", "q", "throughput", "overhead", "achievable", "normalization",
                    "feasibility", "pf_fused", "pd_fused",
                ]
                .map(String::from)
                .to_vec(),
            )?;
            row(vec![
                regime.to_string(),
                teams.to_string(),
                team_size.to_string(),
                f(metrics.normalized_throughput()),
                f(metrics.normalized_overhead()),
                f(metrics.normalized_achievable()),
                f(metrics.normalization),
                feasibility_label(&metrics.feasibility),
                f(metrics.feasibility.pf_fused),
                f(metrics.feasibility.pd_fused),
            ])?;
        }
        Report::Optimization(r) => {
            row(
                ["U", "q", "throughput", "overhead", "achievable", "best", "feasibility"]
                    .map(String::from)
                    .to_vec(),
            )?;
            let norm = r.best.normalization;
            for g in &r.feasible_grid {
                let best = g.teams == r.best_u && g.team_size == r.best_q;
                row(vec![
                    g.teams.to_string(),
                    g.team_size.to_string(),
                    f(g.throughput / norm),
                    f(g.overhead / norm),
                    f(g.achievable / norm),
                    best.to_string(),
                    feasibility_label(&g.feasibility),
                ])?;
            }
        }
        Report::Simulation { metrics: m, .. } => {
            row(
                [
                    "seed", "cycles", "cooperative_cycles", "discoveries", "throughput", "overhead",
                    "achievable", "misdetections", "collisions", "protocol_faults", "elapsed",
                ]
                .map(String::from)
                .to_vec(),
            )?;
            row(vec![
                m.seed.to_string(),
                m.cycles.to_string(),
                m.cooperative_cycles.to_string(),
                m.discoveries.to_string(),
                f(m.normalized_throughput()),
                f(m.normalized_overhead()),
                f(m.normalized_achievable()),
                m.misdetections.to_string(),
                m.collisions.to_string(),
                m.protocol_faults.to_string(),
                f(m.elapsed),
            ])?;
        }
        Report::Sweep { axis, points, .. } => {
            row(vec![
                axis.to_string(),
                "U".into(),
                "q".into(),
                "throughput".into(),
                "overhead".into(),
                "achievable".into(),
                "feasibility".into(),
            ])?;
            for p in points {
                match &p.result {
                    Some(r) => row(vec![
                        f(p.value),
                        r.best_u.to_string(),
                        r.best_q.to_string(),
                        f(r.best.normalized_throughput()),
                        f(r.best.normalized_overhead()),
                        f(r.best.normalized_achievable()),
                        feasibility_label(&r.best.feasibility),
                    ])?,
                    None => row(vec![
                        f(p.value),
                        String::new(),
                        String::new(),
                        String::new(),
                        String::new(),
                        String::new(),
                        format!("infeasible: {}", p.error.as_deref().unwrap_or("")),
                    ])?,
                }
            }
        }
        Report::Comparison(t) => {
            row(
                ["scheme", "runs", "throughput", "overhead", "achievable", "achievable_std"]
                    .map(String::from)
                    .to_vec(),
            )?;
            for s in &t.summary {
                row(vec![
                    s.scheme.to_string(),
                    s.runs.to_string(),
                    f(s.mean_throughput),
                    f(s.mean_overhead),
                    f(s.mean_achievable),
                    f(s.std_achievable),
                ])?;
            }
        }
    }
    w.flush()
}

pub fn emit_report<W: Write>(out: &mut W, report: &Report, format: Format) -> io::Result<()> {
    match format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut *out, report)?;
            writeln!(out)
        }
        Format::Csv => write_csv(out, report),
    }
}
