//! Cooperative spectrum sensing for cognitive radio networks: channel
//! models, energy detection and majority fusion, cooperator selection,
//! closed-form throughput analysis, a team-size optimizer and a
//! discrete-event simulator of the group-based MAC protocol.

pub mod analytics;
pub mod channel;
pub mod detection;
pub mod error;
pub mod optimizer;
pub mod selection;
pub mod simulator;

pub use analytics::{
    evaluate, Feasibility, Load, MetricsReport, RatePmfPolicy, Regime, Scenario, TrafficParams,
    Variation,
};
pub use channel::{ChannelTrajectory, Occupancy, OnOffChannel, RateChain};
pub use detection::{DetectorConfig, FusionOutcome, SensingProbabilities, SignalModel};
pub use error::{Constraint, Error, Result};
pub use optimizer::{optimize, sweep, GridPoint, OptimizationResult, SweepAxis, SweepPoint};
pub use selection::{CandidateSu, SelectionResult};
pub use simulator::{
    compare_schemes, run, run_traced, ChannelMemory, CompareTable, ControlChannel, ControlModel,
    CooperatorLink, MisdetectionPolicy, OccupancyModel, Scheme, SimConfig, SimMetrics,
};
