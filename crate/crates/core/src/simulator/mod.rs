//! Discrete-event simulator of the group-based cooperative MAC.
//!
//! Each cycle a random source and destination reserve the control channel,
//! sense the source's channel together and, if it is busy, recruit
//! cooperators from the remaining secondary users. Teams sense disjoint
//! channels round by round until one is declared idle, after which the pair
//! transmits until the primary user returns.

mod engine;
pub mod fsm;
pub mod messages;
mod metrics;
pub(crate) mod rng;
mod trace;
mod world;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::{Load, Regime, Scenario};
use crate::error::{check_probability, invalid, Error, Result};

pub use fsm::{step_fsm, FsmEvent, FsmState, Role, StepContext, SuAgent, Transition};
pub use messages::{ControlMessage, MessageKind};
pub use metrics::{PhaseTimes, SimMetrics};
pub use trace::{write_trace, TraceRecord};

/// Cooperative sensing scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// `U` teams of `q` as configured.
    Gcss,
    /// Every candidate in one team.
    Acss,
    /// One cooperator per channel.
    Ecss,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Self::Gcss, Self::Acss, Self::Ecss];

    /// `(teams, team_size)` this scheme runs with.
    pub fn layout(self, sc: &Scenario) -> (usize, usize) {
        match self {
            Self::Gcss => (sc.teams, sc.team_size),
            Self::Acss => (1, sc.sus),
            Self::Ecss => (sc.channels.min(sc.sus), 1),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Gcss => "gcss",
            Self::Acss => "acss",
            Self::Ecss => "ecss",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gcss" => Ok(Self::Gcss),
            "acss" => Ok(Self::Acss),
            "ecss" => Ok(Self::Ecss),
            _ => Err(invalid("scheme", format!("unknown scheme `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum ControlModel {
    /// Control packets take no time and never collide.
    #[default]
    Ideal,
    /// Control packets occupy the channel for their airtime, contending
    /// replies back off, and overlapping packets are lost.
    Contended {
        #[serde(default = "default_window")]
        window: u32,
        #[serde(default = "default_max_window")]
        max_window: u32,
        /// Independent loss probability per delivery.
        #[serde(default)]
        loss: f64,
    },
}

fn default_window() -> u32 {
    16
}

fn default_max_window() -> u32 {
    1024
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlChannel {
    #[serde(default, flatten)]
    pub model: ControlModel,
    /// Control packet length (bytes).
    #[serde(default = "default_message_length")]
    pub message_length: u32,
    /// Control channel bit rate (bits/s).
    #[serde(default = "default_bitrate")]
    pub bitrate: f64,
}

fn default_message_length() -> u32 {
    40
}

fn default_bitrate() -> f64 {
    1e6
}

impl Default for ControlChannel {
    fn default() -> Self {
        Self {
            model: ControlModel::Ideal,
            message_length: default_message_length(),
            bitrate: default_bitrate(),
        }
    }
}

impl ControlChannel {
    /// Airtime of one control packet; also the backoff slot.
    pub fn airtime(&self) -> f64 {
        f64::from(self.message_length) * 8.0 / self.bitrate
    }
}

/// State of a cooperator's own link when it is recruited.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CooperatorLink {
    /// The cooperator was transmitting on an idle link when recruited.
    #[default]
    Backlogged,
    /// The link follows its own ON/OFF process across cycles.
    Persistent,
}

/// Whether channels carry state from one cycle into the next.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelMemory {
    /// Channels evolve continuously over the whole run.
    Continuous,
    /// Every cycle starts from independent stationary channel states.
    #[default]
    Renewal,
}

/// Whether primary-user activity differs per channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OccupancyModel {
    #[default]
    Independent,
    /// One primary-user process drives every channel.
    Shared,
}

/// What the source does when a data exchange goes unacknowledged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MisdetectionPolicy {
    /// Back off and retransmit, up to the retry limit.
    #[default]
    Retry,
    /// Abandon the cycle at once.
    Abandon,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub scenario: Scenario,
    #[serde(default = "default_regime")]
    pub regime: Regime,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    #[serde(default)]
    pub seed: u64,
    /// Simulated seconds.
    pub horizon: f64,
    /// Stop after this many cycles even before the horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_cycles: Option<u64>,
    #[serde(default)]
    pub control: ControlChannel,
    #[serde(default)]
    pub link: CooperatorLink,
    #[serde(default)]
    pub memory: ChannelMemory,
    #[serde(default)]
    pub occupancy: OccupancyModel,
    #[serde(default)]
    pub misdetection: MisdetectionPolicy,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    /// Record an event trace.
    #[serde(default)]
    pub trace: bool,
}

fn default_regime() -> Regime {
    Regime::SAT_TI
}

fn default_scheme() -> Scheme {
    Scheme::Gcss
}

fn default_retries() -> u32 {
    7
}

impl SimConfig {
    pub fn new(scenario: Scenario, scheme: Scheme, seed: u64, horizon: f64) -> Self {
        Self {
            scenario,
            regime: Regime::SAT_TI,
            scheme,
            seed,
            horizon,
            max_cycles: None,
            control: ControlChannel::default(),
            link: CooperatorLink::default(),
            memory: ChannelMemory::default(),
            occupancy: OccupancyModel::default(),
            misdetection: MisdetectionPolicy::default(),
            max_retries: default_retries(),
            trace: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(invalid("horizon", "must be positive"));
        }
        if self.max_cycles == Some(0) {
            return Err(invalid("max_cycles", "must be at least 1"));
        }
        let (teams, size) = self.scheme.layout(&self.scenario);
        if teams * size > self.scenario.sus {
            return Err(Error::InsufficientCandidates {
                requested: teams * size,
                available: self.scenario.sus,
            });
        }
        if !(self.control.bitrate.is_finite() && self.control.bitrate > 0.0) {
            return Err(invalid("control.bitrate", "must be positive"));
        }
        if self.control.message_length == 0 {
            return Err(invalid("control.message_length", "must be positive"));
        }
        if let ControlModel::Contended {
            window,
            max_window,
            loss,
        } = self.control.model
        {
            if window == 0 || max_window < window {
                return Err(invalid("control.window", "need 1 <= window <= max_window"));
            }
            check_probability("control.loss", loss)?;
        }
        if self.regime.load == Load::Nonsat && self.scenario.traffic.is_none() {
            return Err(invalid("scenario.traffic", "required for the non-saturated regime"));
        }
        Ok(())
    }
}

/// Runs one simulation.
pub fn run(cfg: &SimConfig) -> Result<SimMetrics> {
    Ok(run_traced(cfg)?.0)
}

/// Runs one simulation and returns the event trace, empty unless
/// `cfg.trace` is set.
pub fn run_traced(cfg: &SimConfig) -> Result<(SimMetrics, Vec<TraceRecord>)> {
    cfg.validate()?;
    engine::Engine::new(cfg)?.run()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub scheme: Scheme,
    pub seed: u64,
    pub metrics: SimMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeSummary {
    pub scheme: Scheme,
    pub runs: usize,
    pub mean_throughput: f64,
    pub mean_overhead: f64,
    pub mean_achievable: f64,
    pub std_achievable: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareTable {
    pub rows: Vec<CompareRow>,
    pub summary: Vec<SchemeSummary>,
}

impl CompareTable {
    pub fn summary_for(&self, scheme: Scheme) -> Option<&SchemeSummary> {
        self.summary.iter().find(|s| s.scheme == scheme)
    }
}

/// Runs every `(scheme, seed)` pair of `template` in parallel. Runs with the
/// same seed share channel states, votes and burst lengths.
pub fn compare_schemes(template: &SimConfig, schemes: &[Scheme], seeds: &[u64]) -> Result<CompareTable> {
    if schemes.is_empty() {
        return Err(invalid("schemes", "at least one scheme is required"));
    }
    if seeds.is_empty() {
        return Err(invalid("seeds", "at least one seed is required"));
    }
    let jobs: Vec<(Scheme, u64)> = schemes
        .iter()
        .flat_map(|&s| seeds.iter().map(move |&seed| (s, seed)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(scheme, seed)| {
            let cfg = SimConfig {
                scheme,
                seed,
                trace: false,
                ..template.clone()
            };
            run(&cfg).map(|metrics| CompareRow {
                scheme,
                seed,
                metrics,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut summary = Vec::new();
    for &scheme in schemes {
        if summary.iter().any(|s: &SchemeSummary| s.scheme == scheme) {
            continue;
        }
        let mine: Vec<&SimMetrics> = rows
            .iter()
            .filter(|r| r.scheme == scheme)
            .map(|r| &r.metrics)
            .collect();
        let n = mine.len() as f64;
        let mean = |f: fn(&SimMetrics) -> f64| mine.iter().map(|m| f(m)).sum::<f64>() / n;
        let g = mean(SimMetrics::normalized_achievable);
        let var = mine
            .iter()
            .map(|m| (m.normalized_achievable() - g).powi(2))
            .sum::<f64>()
            / (n - 1.0).max(1.0);
        summary.push(SchemeSummary {
            scheme,
            runs: mine.len(),
            mean_throughput: mean(SimMetrics::normalized_throughput),
            mean_overhead: mean(SimMetrics::normalized_overhead),
            mean_achievable: g,
            std_achievable: var.sqrt(),
        });
    }
    Ok(CompareTable { rows, summary })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::OnOffChannel;
    use crate::detection::fused_pd;
    use crate::SensingProbabilities;

    fn base(scheme: Scheme, seed: u64, cycles: u64) -> SimConfig {
        let mut cfg = SimConfig::new(Scenario::reference(), scheme, seed, 1e9);
        cfg.max_cycles = Some(cycles);
        cfg
    }

    #[test]
    fn identical_seed_is_bit_identical() {
        let mut cfg = base(Scheme::Gcss, 42, 300);
        cfg.trace = true;
        let (a, ta) = run_traced(&cfg).unwrap();
        let (b, tb) = run_traced(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        assert!(!ta.is_empty());
        cfg.seed = 43;
        assert_ne!(run(&cfg).unwrap(), a);
    }

    #[test]
    fn perfect_sensing_finds_a_channel_in_the_first_round() {
        let mut cfg = base(Scheme::Gcss, 3, 3000);
        cfg.scenario.channel = OnOffChannel::with_availability(0.999, 0.01).unwrap();
        cfg.scenario.sensing = SensingProbabilities::new(1.0, 0.0).unwrap();
        let m = run(&cfg).unwrap();
        assert!(m.discoveries > 0);
        assert_eq!(m.discovery_rounds[0], m.discoveries);
        assert!(m.discovery_rounds[1..].iter().all(|&c| c == 0));
        assert_eq!(m.direct_cycles + m.cooperative_cycles, m.cycles);
    }

    #[test]
    fn single_team_of_everyone_is_acss() {
        let acss = base(Scheme::Acss, 9, 400);
        let mut gcss = base(Scheme::Gcss, 9, 400);
        gcss.scenario.teams = 1;
        gcss.scenario.team_size = gcss.scenario.sus;
        assert_eq!(run(&acss).unwrap(), run(&gcss).unwrap());
    }

    #[test]
    fn scheme_layouts() {
        let sc = Scenario::reference();
        assert_eq!(Scheme::Gcss.layout(&sc), (2, 7));
        assert_eq!(Scheme::Acss.layout(&sc), (1, 20));
        assert_eq!(Scheme::Ecss.layout(&sc), (10, 1));
        assert_eq!("ECSS".parse::<Scheme>().unwrap(), Scheme::Ecss);
    }

    #[test]
    fn protocol_invariants_hold() {
        for model in [
            ControlModel::Ideal,
            ControlModel::Contended {
                window: 16,
                max_window: 1024,
                loss: 0.02,
            },
        ] {
            let mut cfg = base(Scheme::Gcss, 5, 1500);
            cfg.control.model = model;
            let m = run(&cfg).unwrap();
            assert_eq!(m.silenced_transmissions, 0);
            assert_eq!(m.cycles, 1500);
            assert!(m.cooperative_cycles > 0);
            if model == ControlModel::Ideal {
                assert_eq!(m.protocol_faults, 0);
                assert_eq!(m.collisions + m.lost_messages + m.stale_resets, 0);
            } else {
                assert!(m.collisions > 0);
                assert!(m.lost_messages > 0);
                assert!(m.phase_time.backoff > 0.0);
            }
            let used = m.cooperative_delivered_bytes;
            assert!(used <= m.delivered_bytes);
            assert!(m.foregone_bytes >= 0.0 && m.charged_overhead_bytes >= m.foregone_bytes);
        }
    }

    #[test]
    fn data_follows_an_idle_verdict() {
        // Every transmission start in the trace comes after an idle verdict
        // or a release within the same cycle.
        let mut cfg = base(Scheme::Gcss, 11, 400);
        cfg.trace = true;
        let (m, trace) = run_traced(&cfg).unwrap();
        assert_eq!(m.protocol_faults, 0);
        let mut granted = false;
        let mut starts = 0;
        for r in &trace {
            match (r.event.as_str(), r.kind.as_deref(), r.state) {
                ("start", _, _) => granted = false,
                ("recv", Some("S_CTS"), FsmState::WaitTCts) => granted = true,
                ("recv", Some("RESULT"), FsmState::WaitTCts) => granted = true,
                ("recv", Some("T_CTS"), FsmState::Transmitting) => {
                    assert!(granted, "transmission without a grant at {}", r.time);
                    starts += 1;
                }
                _ => {}
            }
        }
        assert!(starts > 0);
    }

    #[test]
    fn empirical_fused_detection_within_three_sigma() {
        let mut cfg = base(Scheme::Gcss, 17, 6_000);
        cfg.scenario.team_size = 5;
        cfg.scenario.teams = 3;
        let m = run(&cfg).unwrap();
        let n = m.busy_channel_verdicts as f64;
        assert!(n > 1_500.0, "{n}");
        let pd = fused_pd(5, cfg.scenario.sensing.pd).unwrap();
        let sd = (pd * (1.0 - pd) / n).sqrt();
        assert!((m.empirical_detection().unwrap() - pd).abs() < 3.0 * sd);
        let pf = crate::detection::fused_pf(5, cfg.scenario.sensing.pf).unwrap();
        let nf = m.idle_channel_verdicts as f64;
        let sd = (pf * (1.0 - pf) / nf).sqrt();
        assert!((m.empirical_false_alarm().unwrap() - pf).abs() < 3.0 * sd);
    }

    #[test]
    fn other_regimes_run() {
        for regime in Regime::ALL {
            let mut cfg = base(Scheme::Gcss, 2, 300);
            cfg.regime = regime;
            let m = run(&cfg).unwrap();
            assert!(m.delivered_bytes > 0.0, "{regime}");
            assert_eq!(m.protocol_faults, 0, "{regime}");
            assert!(m.normalized_throughput() <= 1.5, "{regime}");
        }
    }

    #[test]
    fn persistent_links_forgo_less() {
        let a = run(&base(Scheme::Gcss, 4, 2000)).unwrap();
        let mut cfg = base(Scheme::Gcss, 4, 2000);
        cfg.link = CooperatorLink::Persistent;
        let b = run(&cfg).unwrap();
        assert!(b.foregone_bytes < a.foregone_bytes);
        assert!(b.foregone_bytes > 0.0);
    }

    #[test]
    fn comparison_table() {
        let cfg = base(Scheme::Gcss, 0, 200);
        let t = compare_schemes(&cfg, &[Scheme::Gcss, Scheme::Gcss, Scheme::Ecss], &[1, 2]).unwrap();
        assert_eq!(t.rows.len(), 6);
        assert_eq!(t.rows[0], t.rows[2]);
        assert_eq!(t.rows[1], t.rows[3]);
        assert_eq!(t.summary.len(), 2);
        assert_eq!(t.summary_for(Scheme::Gcss).unwrap().runs, 4);
        assert!(compare_schemes(&cfg, &[], &[1]).is_err());
        assert!(compare_schemes(&cfg, &[Scheme::Acss], &[]).is_err());
    }

    #[test]
    fn config_validation() {
        let mut cfg = base(Scheme::Gcss, 0, 10);
        cfg.horizon = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = base(Scheme::Gcss, 0, 10);
        cfg.scenario.team_size = 11;
        assert!(matches!(
            cfg.validate(),
            Err(Error::InsufficientCandidates { requested: 22, available: 20 })
        ));
        let json = serde_json::to_string(&base(Scheme::Acss, 7, 10)).unwrap();
        let back: SimConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, base(Scheme::Acss, 7, 10));
    }
}
