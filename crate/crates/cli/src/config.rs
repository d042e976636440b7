//! Versioned JSON configuration.
//!
//! Every field is optional; omitted fields take the reference values
//! (10 channels, 20 candidate cooperators, `mu_off = 0.01`, 1 ms sensing,
//! 40-byte control packets, ten rates from 0.1 to 1.0 MB/s, detection
//! target 0.9, false-alarm limit 0.05). Overrides use dotted paths such as
//! `scenario.mu_on=0.02`; a path without a known section prefix is taken
//! relative to `scenario`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use gcmac_core::detection::threshold_for_pd;
use gcmac_core::optimizer::SweepAxis;
use gcmac_core::simulator::{
    ChannelMemory, ControlChannel, CooperatorLink, MisdetectionPolicy, OccupancyModel, Scheme,
    SimConfig,
};
use gcmac_core::{
    DetectorConfig, Error as CoreError, OnOffChannel, RateChain, RatePmfPolicy, Regime, Scenario,
    SensingProbabilities, SignalModel, TrafficParams,
};

pub const SCHEMA_VERSION: u32 = 1;

const SECTIONS: [&str; 6] = ["schema_version", "regime", "scenario", "simulation", "sweep", "compare"];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config file `{0}` does not exist")]
    Missing(String),
    #[error("cannot read `{path}`: {message}")]
    Io { path: String, message: String },
    #[error("malformed JSON at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema violation at `{field}`: {message}")]
    Schema { field: String, message: String },
    #[error("unsupported schema_version {0}; expected {SCHEMA_VERSION}")]
    Version(u64),
    #[error("invalid `{field}`: {message}")]
    Invariant { field: String, message: String },
    #[error("`{field}` = {load} makes the queue unstable (load must be below 1)")]
    UnstableQueue { field: String, load: f64 },
    #[error("bad override `{assignment}`: {message}")]
    Override { assignment: String, message: String },
}

fn invariant(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invariant {
        field: field.to_string(),
        message: message.into(),
    }
}

fn from_core(section: &str, e: CoreError) -> ConfigError {
    match e {
        CoreError::InvalidParameter { name, reason } => invariant(&format!("{section}.{name}"), reason),
        CoreError::UnstableQueue(load) => ConfigError::UnstableQueue {
            field: format!("{section}.load"),
            load,
        },
        CoreError::UnattainableTarget(t) => invariant(
            &format!("{section}.sensing.target_pd"),
            format!("{t} cannot be reached"),
        ),
        CoreError::InsufficientCandidates { requested, available } => invariant(
            &format!("{section}.sus"),
            format!("{requested} cooperators requested but only {available} available"),
        ),
        other => invariant(section, other.to_string()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RatesConfig {
    pub min: f64,
    pub max: f64,
    pub states: usize,
    /// Seconds between rate transitions.
    pub dwell: f64,
    /// Explicit rate levels; replaces the evenly spaced grid.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
}

impl Default for RatesConfig {
    fn default() -> Self {
        Self {
            min: 1e5,
            max: 1e6,
            states: 10,
            dwell: 5e-3,
            values: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensingConfig {
    pub samples: u64,
    pub snr_db: f64,
    pub target_pd: f64,
    pub model: SignalModel,
    pub channel_gain2: f64,
    /// Fixed single-user probabilities; both or neither.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pd: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pf: Option<f64>,
}

impl Default for SensingConfig {
    fn default() -> Self {
        Self {
            samples: 1000,
            snr_db: -10.0,
            target_pd: 0.9,
            model: SignalModel::Real,
            channel_gain2: 1.0,
            pd: None,
            pf: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub channels: usize,
    pub sus: usize,
    pub teams: usize,
    pub team_size: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu_on: Option<f64>,
    pub mu_off: f64,
    /// Sets `mu_on` from `mu_off`; conflicts with an explicit `mu_on`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub availability: Option<f64>,
    pub rate: f64,
    pub rates: RatesConfig,
    pub sense_duration: f64,
    pub sensing: SensingConfig,
    pub pf_threshold: f64,
    pub pd_threshold: f64,
    pub load: f64,
    pub packet_length: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_use: Option<f64>,
    pub rate_pmf: RatePmfPolicy,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            channels: 10,
            sus: 20,
            teams: 2,
            team_size: 7,
            mu_on: None,
            mu_off: 0.01,
            availability: None,
            rate: 1e6,
            rates: RatesConfig::default(),
            sense_duration: 1e-3,
            sensing: SensingConfig::default(),
            pf_threshold: 0.05,
            pd_threshold: 0.9,
            load: 0.5,
            packet_length: 1000.0,
            r_use: None,
            rate_pmf: RatePmfPolicy::Exact,
        }
    }
}

impl ScenarioConfig {
    pub fn build(&self) -> Result<Scenario, ConfigError> {
        let s = "scenario";
        let channel = match (self.mu_on, self.availability) {
            (Some(_), Some(_)) => {
                return Err(invariant(
                    "scenario.mu_on",
                    "conflicts with scenario.availability; set only one",
                ))
            }
            (Some(on), None) => OnOffChannel::new(on, self.mu_off),
            (None, Some(p)) => OnOffChannel::with_availability(p, self.mu_off),
            (None, None) => OnOffChannel::new(0.01, self.mu_off),
        }
        .map_err(|e| from_core(s, e))?;
        let rate_chain = match &self.rates.values {
            Some(v) => RateChain::birth_death(v.clone(), self.rates.dwell),
            None => RateChain::uniform_grid(self.rates.min, self.rates.max, self.rates.states, self.rates.dwell),
        }
        .map_err(|e| from_core("scenario.rates", e))?;
        let se = &self.sensing;
        let (sensing, detector) = match (se.pd, se.pf) {
            (Some(pd), Some(pf)) => (
                SensingProbabilities::new(pd, pf).map_err(|e| from_core("scenario.sensing", e))?,
                None,
            ),
            (None, None) => {
                let mut d = DetectorConfig::for_target(se.samples, se.snr_db, se.target_pd)
                    .map_err(|e| from_core("scenario.sensing", e))?;
                if se.model == SignalModel::Complex {
                    d.model = SignalModel::Complex;
                    d.channel_gain2 = se.channel_gain2;
                    d.validate().map_err(|e| from_core("scenario.sensing", e))?;
                    d.threshold =
                        threshold_for_pd(&d, se.target_pd).map_err(|e| from_core("scenario.sensing", e))?;
                }
                let p = SensingProbabilities::from_detector(&d).map_err(|e| from_core("scenario.sensing", e))?;
                (p, Some(d))
            }
            _ => {
                return Err(invariant(
                    "scenario.sensing",
                    "give both `pd` and `pf` or neither",
                ))
            }
        };
        let traffic = TrafficParams::new(self.load).map_err(|e| from_core(s, e))?;
        let sc = Scenario {
            channels: self.channels,
            sus: self.sus,
            teams: self.teams,
            team_size: self.team_size,
            channel,
            rate: self.rate,
            rate_chain,
            sense_duration: self.sense_duration,
            sensing,
            detector,
            pf_threshold: self.pf_threshold,
            pd_threshold: self.pd_threshold,
            traffic: Some(traffic),
            r_use: self.r_use,
            packet_length: self.packet_length,
            rate_pmf: self.rate_pmf,
        };
        sc.validate().map_err(|e| from_core(s, e))?;
        Ok(sc)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub scheme: Scheme,
    pub seed: u64,
    pub horizon: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_cycles: Option<u64>,
    pub control: ControlChannel,
    pub link: CooperatorLink,
    pub memory: ChannelMemory,
    pub occupancy: OccupancyModel,
    pub misdetection: MisdetectionPolicy,
    pub max_retries: u32,
    pub trace: bool,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::Gcss,
            seed: 0,
            horizon: 1e8,
            max_cycles: Some(10_000),
            control: ControlChannel::default(),
            link: CooperatorLink::default(),
            memory: ChannelMemory::default(),
            occupancy: OccupancyModel::default(),
            misdetection: MisdetectionPolicy::default(),
            max_retries: 7,
            trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// `p`, `K`, `pf_th` or `rho`.
    pub axis: String,
    pub values: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            axis: "p".into(),
            values: vec![0.5, 2.0 / 3.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    pub schemes: Vec<Scheme>,
    /// Seeds `seed .. seed + seeds`.
    pub seeds: u64,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            schemes: Scheme::ALL.to_vec(),
            seeds: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub schema_version: u32,
    pub regime: Regime,
    pub scenario: ScenarioConfig,
    pub simulation: SimulationConfig,
    pub sweep: SweepConfig,
    pub compare: CompareConfig,
}

impl Default for ConfigFile {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            regime: Regime::SAT_TI,
            scenario: ScenarioConfig::default(),
            simulation: SimulationConfig::default(),
            sweep: SweepConfig::default(),
            compare: CompareConfig::default(),
        }
    }
}

/// A validated configuration ready to run.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub regime: Regime,
    pub scenario: Scenario,
    pub simulation: SimConfig,
    pub sweep_axis: SweepAxis,
    pub sweep_values: Vec<f64>,
    pub schemes: Vec<Scheme>,
    pub seeds: Vec<u64>,
}

impl ConfigFile {
    pub fn build(&self) -> Result<Config, ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::Version(u64::from(self.schema_version)));
        }
        let scenario = self.scenario.build()?;
        let sim = &self.simulation;
        let simulation = SimConfig {
            scenario: scenario.clone(),
            regime: self.regime,
            scheme: sim.scheme,
            seed: sim.seed,
            horizon: sim.horizon,
            max_cycles: sim.max_cycles,
            control: sim.control,
            link: sim.link,
            memory: sim.memory,
            occupancy: sim.occupancy,
            misdetection: sim.misdetection,
            max_retries: sim.max_retries,
            trace: sim.trace,
        };
        simulation.validate().map_err(|e| from_core("simulation", e))?;
        let sweep_axis: SweepAxis = self
            .sweep
            .axis
            .parse()
            .map_err(|e: CoreError| invariant("sweep.axis", e.to_string()))?;
        if self.sweep.values.is_empty() {
            return Err(invariant("sweep.values", "needs at least one value"));
        }
        if self.compare.schemes.is_empty() {
            return Err(invariant("compare.schemes", "needs at least one scheme"));
        }
        if self.compare.seeds == 0 {
            return Err(invariant("compare.seeds", "needs at least one seed"));
        }
        Ok(Config {
            regime: self.regime,
            scenario,
            simulation,
            sweep_axis,
            sweep_values: self.sweep.values.clone(),
            schemes: self.compare.schemes.clone(),
            seeds: (sim.seed..sim.seed + self.compare.seeds).collect(),
        })
    }
}

/// Sets `value` at a dotted `path` inside `root`, creating objects as needed.
fn set_path(root: &mut Value, path: &str, value: Value) -> Result<(), String> {
    let mut parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err("empty path segment".into());
    }
    if !SECTIONS.contains(&parts[0]) {
        parts.insert(0, "scenario");
    }
    let (last, prefix) = parts.split_last().expect("non-empty");
    let mut node = root;
    for p in prefix {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| format!("`{p}` is inside a non-object value"))?;
        node = obj
            .entry(p.to_string())
            .or_insert_with(|| Value::Object(Map::new()));
    }
    node.as_object_mut()
        .ok_or_else(|| format!("`{last}` is inside a non-object value"))?
        .insert(last.to_string(), value);
    Ok(())
}

/// Applies `key=value` assignments. Values are read as JSON and fall back to
/// plain strings.
pub fn apply_overrides(root: &mut Value, overrides: &[String]) -> Result<(), ConfigError> {
    for a in overrides {
        let bad = |m: String| ConfigError::Override {
            assignment: a.clone(),
            message: m,
        };
        let (k, v) = a
            .split_once('=')
            .ok_or_else(|| bad("expected key=value".into()))?;
        let value = serde_json::from_str(v.trim()).unwrap_or_else(|_| Value::String(v.trim().to_string()));
        set_path(root, k.trim(), value).map_err(bad)?;
    }
    Ok(())
}

/// Parses configuration text with overrides applied last.
pub fn parse_config_str(text: &str, overrides: &[String]) -> Result<Config, ConfigError> {
    let mut root: Value = if text.trim().is_empty() {
        Value::Object(Map::new())
    } else {
        serde_json::from_str(text).map_err(|e| ConfigError::Syntax {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?
    };
    if !root.is_object() {
        return Err(ConfigError::Schema {
            field: "$".into(),
            message: "top level must be an object".into(),
        });
    }
    if let Some(v) = root.get("schema_version") {
        match v.as_u64() {
            Some(n) if n == u64::from(SCHEMA_VERSION) => {}
            Some(n) => return Err(ConfigError::Version(n)),
            None => {
                return Err(ConfigError::Schema {
                    field: "schema_version".into(),
                    message: "must be an integer".into(),
                })
            }
        }
    }
    apply_overrides(&mut root, overrides)?;
    let file: ConfigFile = serde_path_to_error::deserialize(root).map_err(|e| {
        let field = e.path().to_string();
        ConfigError::Schema {
            field,
            message: e.into_inner().to_string(),
        }
    })?;
    file.build()
}

/// Reads a configuration file; `None` yields the defaults.
pub fn parse_config(path: Option<&Path>, overrides: &[String]) -> Result<Config, ConfigError> {
    let text = match path {
        None => String::new(),
        Some(p) if !p.exists() => return Err(ConfigError::Missing(p.display().to_string())),
        Some(p) => fs::read_to_string(p).map_err(|e| ConfigError::Io {
            path: p.display().to_string(),
            message: e.to_string(),
        })?,
    };
    parse_config_str(&text, overrides)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_gives_reference_defaults() {
        let c = parse_config_str("", &[]).unwrap();
        assert_eq!(c.scenario, Scenario::reference());
        assert_eq!(c.regime, Regime::SAT_TI);
        assert_eq!(c.simulation.control.message_length, 40);
        assert_eq!(c.seeds.len(), 20);
        assert_eq!(parse_config_str("{}", &[]).unwrap(), c);
    }

    #[test]
    fn mu_on_override_moves_availability() {
        let c = parse_config_str("{}", &["mu_on=0.02".into()]).unwrap();
        assert!((c.scenario.channel.availability() - 2.0 / 3.0).abs() < 1e-15);
        let c = parse_config_str("{}", &["scenario.availability=0.5".into()]).unwrap();
        assert_eq!(c.scenario.channel.availability(), 0.5);
        let err = parse_config_str(r#"{"scenario":{"availability":0.5}}"#, &["mu_on=0.02".into()]);
        assert!(matches!(err, Err(ConfigError::Invariant { field, .. }) if field == "scenario.mu_on"));
    }

    #[test]
    fn unstable_load_is_rejected() {
        let err = parse_config_str(r#"{"scenario":{"load":1.2}}"#, &[]).unwrap_err();
        assert!(matches!(err, ConfigError::UnstableQueue { ref field, load } if field == "scenario.load" && load == 1.2));
        assert!(err.to_string().contains("scenario.load"));
    }

    #[test]
    fn distinct_diagnostics() {
        assert!(matches!(
            parse_config(Some(Path::new("/definitely/not/here.json")), &[]),
            Err(ConfigError::Missing(_))
        ));
        assert!(matches!(
            parse_config_str("{\"scenario\": ", &[]),
            Err(ConfigError::Syntax { .. })
        ));
        let e = parse_config_str(r#"{"scenario":{"chanels":3}}"#, &[]).unwrap_err();
        assert!(matches!(e, ConfigError::Schema { ref field, .. } if field == "scenario.chanels"), "{e}");
        assert!(e.to_string().contains("chanels"));
        let e = parse_config_str(r#"{"scenario":{"channels":"ten"}}"#, &[]).unwrap_err();
        assert!(matches!(e, ConfigError::Schema { ref field, .. } if field == "scenario.channels"), "{e}");
        assert!(matches!(
            parse_config_str(r#"{"schema_version":2}"#, &[]),
            Err(ConfigError::Version(2))
        ));
        let e = parse_config_str(r#"{"scenario":{"teams":11}}"#, &[]).unwrap_err();
        assert!(matches!(e, ConfigError::Invariant { ref field, .. } if field == "scenario.teams"), "{e}");
        assert!(matches!(
            parse_config_str("{}", &["noequals".into()]),
            Err(ConfigError::Override { .. })
        ));
    }

    #[test]
    fn overrides_reach_every_section() {
        let c = parse_config_str(
            "{}",
            &[
                "simulation.scheme=acss".into(),
                "simulation.seed=9".into(),
                "regime=nonsat-tv".into(),
                "sweep.axis=K".into(),
                "sweep.values=[10,20]".into(),
                "compare.seeds=3".into(),
                "rate_pmf=product-form".into(),
            ],
        )
        .unwrap();
        assert_eq!(c.simulation.scheme, Scheme::Acss);
        assert_eq!(c.regime, Regime::NONSAT_TV);
        assert_eq!(c.simulation.regime, Regime::NONSAT_TV);
        assert_eq!(c.sweep_axis, SweepAxis::Sus);
        assert_eq!(c.seeds, vec![9, 10, 11]);
        assert_eq!(c.scenario.rate_pmf, RatePmfPolicy::ProductForm);
    }

    #[test]
    fn explicit_sensing_probabilities() {
        let c = parse_config_str(r#"{"scenario":{"sensing":{"pd":0.9,"pf":0.1}}}"#, &[]).unwrap();
        assert_eq!(c.scenario.sensing.pf, 0.1);
        assert!(c.scenario.detector.is_none());
        assert!(parse_config_str(r#"{"scenario":{"sensing":{"pd":0.9}}}"#, &[]).is_err());
    }

    #[test]
    fn default_file_round_trips() {
        let text = serde_json::to_string_pretty(&ConfigFile::default()).unwrap();
        assert_eq!(
            parse_config_str(&text, &[]).unwrap(),
            parse_config_str("", &[]).unwrap()
        );
    }
}
