use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use gcmac_core::simulator::write_trace;
use gcmac_core::{compare_schemes, evaluate, optimize, run, run_traced, sweep, Error as CoreError};

use crate::config::{parse_config, Config, ConfigError};
use crate::report::{emit_report, Format, Report};

#[derive(Debug, Parser)]
#[command(name = "gcmac", version, about = "Cooperative spectrum sensing analytics, optimizer and MAC simulator")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON configuration file; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output file; standard output when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = Format::Json)]
    pub format: Format,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Dotted override such as `scenario.mu_on=0.02`; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// sat-ti, sat-tv, nonsat-ti or nonsat-tv.
    #[arg(long, global = true)]
    pub regime: Option<String>,
    /// exact or product-form.
    #[arg(long, global = true)]
    pub rate_pmf: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form metrics at the configured team layout.
    Analyze,
    /// Best feasible team count and size.
    Optimize,
    /// One simulation run.
    Simulate {
        #[arg(long)]
        scheme: Option<String>,
        /// Writes the event trace to this file.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Optimization across values of one parameter.
    Sweep {
        /// p, K, pf_th or rho.
        #[arg(long)]
        axis: Option<String>,
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
    },
    /// Simulated comparison of sensing schemes over several seeds.
    Compare {
        #[arg(long = "scheme")]
        schemes: Vec<String>,
        #[arg(long)]
        seeds: Option<u64>,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Infeasible(CoreError),
    #[error(transparent)]
    Core(CoreError),
    #[error("output error: {0}")]
    Io(#[from] io::Error),
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::NoFeasibleConfiguration(_) => Self::Infeasible(e),
            other => Self::Core(other),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Infeasible(_) => 3,
            Self::Core(_) | Self::Io(_) => 1,
        }
    }
}

fn json_string(s: &str) -> String {
    serde_json::Value::String(s.to_string()).to_string()
}

/// Turns command-line flags into overrides applied after `--set`.
fn flag_overrides(cli: &Cli) -> Vec<String> {
    let g = &cli.global;
    let mut out = g.set.clone();
    if let Some(s) = g.seed {
        out.push(format!("simulation.seed={s}"));
    }
    if let Some(r) = &g.regime {
        out.push(format!("regime={}", json_string(r)));
    }
    if let Some(p) = &g.rate_pmf {
        out.push(format!("scenario.rate_pmf={}", json_string(p)));
    }
    match &cli.command {
        Command::Simulate { scheme: Some(s), .. } => {
            out.push(format!("simulation.scheme={}", json_string(&s.to_ascii_lowercase())));
        }
        Command::Sweep { axis, values } => {
            if let Some(a) = axis {
                out.push(format!("sweep.axis={}", json_string(a)));
            }
            if !values.is_empty() {
                out.push(format!("sweep.values={}", serde_json::json!(values)));
            }
        }
        Command::Compare { schemes, seeds } => {
            if !schemes.is_empty() {
                let lower: Vec<String> = schemes.iter().map(|s| s.to_ascii_lowercase()).collect();
                out.push(format!("compare.schemes={}", serde_json::json!(lower)));
            }
            if let Some(n) = seeds {
                out.push(format!("compare.seeds={n}"));
            }
        }
        _ => {}
    }
    out
}

pub fn load(cli: &Cli) -> Result<Config, ConfigError> {
    parse_config(cli.global.config.as_deref(), &flag_overrides(cli))
}

pub fn build_report(cli: &Cli, cfg: &Config) -> Result<Report, CliError> {
    Ok(match &cli.command {
        Command::Analyze => Report::Analysis {
            regime: cfg.regime,
            teams: cfg.scenario.teams,
            team_size: cfg.scenario.team_size,
            metrics: evaluate(&cfg.scenario, cfg.regime)?,
        },
        Command::Optimize => Report::Optimization(optimize(&cfg.scenario, cfg.regime)?),
        Command::Simulate { trace, .. } => match trace {
            Some(path) => {
                let mut sim = cfg.simulation.clone();
                sim.trace = true;
                let (metrics, records) = run_traced(&sim)?;
                let mut w = BufWriter::new(File::create(path)?);
                write_trace(&mut w, &records)?;
                w.flush()?;
                Report::Simulation {
                    metrics,
                    trace: Vec::new(),
                }
            }
            None => Report::Simulation {
                metrics: run(&cfg.simulation)?,
                trace: Vec::new(),
            },
        },
        Command::Sweep { .. } => Report::Sweep {
            regime: cfg.regime,
            axis: cfg.sweep_axis,
            points: sweep(&cfg.scenario, cfg.regime, cfg.sweep_axis, &cfg.sweep_values)?,
        },
        Command::Compare { .. } => {
            Report::Comparison(compare_schemes(&cfg.simulation, &cfg.schemes, &cfg.seeds)?)
        }
    })
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let cfg = load(cli)?;
    let report = build_report(cli, &cfg)?;
    match &cli.global.out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            emit_report(&mut w, &report, cli.global.format)?;
            w.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            emit_report(&mut w, &report, cli.global.format)?;
        }
    }
    Ok(())
}
