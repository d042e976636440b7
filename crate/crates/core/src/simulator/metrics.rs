use serde::{Deserialize, Serialize};

/// Seconds the source spent in each protocol phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimes {
    pub reservation: f64,
    pub sensing: f64,
    pub transmission: f64,
    pub backoff: f64,
}

/// Counters and byte volumes of one simulation run.
///
/// Per-cycle figures are taken over cooperative cycles, i.e. cycles in which
/// the pair found its own channel busy and asked for help.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimMetrics {
    pub seed: u64,
    /// Simulated seconds.
    pub elapsed: f64,
    pub cycles: u64,
    pub cooperative_cycles: u64,
    /// Cooperative cycles that released a channel for data.
    pub discoveries: u64,
    /// Cycles where the pair's own channel was declared idle.
    pub direct_cycles: u64,
    pub abandoned_cycles: u64,
    /// `discovery_rounds[i]` counts discoveries in round `i + 1`.
    pub discovery_rounds: Vec<u64>,
    pub delivered_bytes: f64,
    pub cooperative_delivered_bytes: f64,
    /// Bytes silenced cooperators could not send.
    pub foregone_bytes: f64,
    /// Forgone volume weighted by the discovery round, on discovery cycles.
    pub charged_overhead_bytes: f64,
    /// Transmissions started on a channel the primary user occupied.
    pub misdetections: u64,
    /// Team verdicts on busy channels, and how many said busy.
    pub busy_channel_verdicts: u64,
    pub busy_channel_detected: u64,
    /// Team verdicts on idle channels, and how many said busy.
    pub idle_channel_verdicts: u64,
    pub idle_channel_false_alarms: u64,
    pub control_messages: u64,
    pub collisions: u64,
    pub lost_messages: u64,
    pub protocol_faults: u64,
    pub stale_resets: u64,
    /// Data transmissions started by silenced cooperators; always zero.
    pub silenced_transmissions: u64,
    pub phase_time: PhaseTimes,
    /// Bytes dividing per-cycle volumes in the normalized figures.
    pub normalization: f64,
}

impl SimMetrics {
    fn per_cycle(&self, bytes: f64) -> f64 {
        if self.cooperative_cycles == 0 {
            0.0
        } else {
            bytes / self.cooperative_cycles as f64 / self.normalization
        }
    }

    pub fn normalized_throughput(&self) -> f64 {
        self.per_cycle(self.cooperative_delivered_bytes)
    }

    pub fn normalized_overhead(&self) -> f64 {
        self.per_cycle(self.charged_overhead_bytes)
    }

    pub fn normalized_achievable(&self) -> f64 {
        self.normalized_throughput() - self.normalized_overhead()
    }

    /// Fraction of busy-channel verdicts that detected the primary user.
    pub fn empirical_detection(&self) -> Option<f64> {
        (self.busy_channel_verdicts > 0)
            .then(|| self.busy_channel_detected as f64 / self.busy_channel_verdicts as f64)
    }

    pub fn empirical_false_alarm(&self) -> Option<f64> {
        (self.idle_channel_verdicts > 0)
            .then(|| self.idle_channel_false_alarms as f64 / self.idle_channel_verdicts as f64)
    }

    pub fn mean_discovery_round(&self) -> Option<f64> {
        let n: u64 = self.discovery_rounds.iter().sum();
        (n > 0).then(|| {
            self.discovery_rounds
                .iter()
                .enumerate()
                .map(|(i, c)| (i + 1) as f64 * *c as f64)
                .sum::<f64>()
                / n as f64
        })
    }
}
