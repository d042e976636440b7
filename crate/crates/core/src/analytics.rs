//! Closed-form throughput, sensing overhead and achievable throughput for
//! saturated and non-saturated networks over time-invariant and
//! time-varying channels.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::{OnOffChannel, RateChain};
use crate::detection::{binomial, fused_pd, fused_pf, DetectorConfig, SensingProbabilities};
use crate::error::{check_probability, invalid, Error, Result};
use crate::selection::order_stat_rate_pmf;

/// Traffic intensity of a non-saturated network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrafficParams {
    /// Offered load `rho = arrival_rate * mean_service_time`.
    pub load: f64,
}

impl TrafficParams {
    pub fn new(load: f64) -> Result<Self> {
        if !(load.is_finite() && load >= 0.0) {
            return Err(invalid("load", format!("{load} must be non-negative")));
        }
        if load >= 1.0 {
            return Err(Error::UnstableQueue(load));
        }
        Ok(Self { load })
    }

    /// Packet arrival rate (packets/s) for the given mean service time.
    pub fn arrival_rate(&self, mean_service: f64) -> f64 {
        self.load / mean_service
    }
}

/// Saturated (always backlogged) or Poisson-loaded secondary users.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Load {
    Sat,
    Nonsat,
}

/// Constant or Markov-varying channel data rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variation {
    Ti,
    Tv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Regime {
    pub load: Load,
    pub variation: Variation,
}

impl Regime {
    pub const SAT_TI: Regime = Regime {
        load: Load::Sat,
        variation: Variation::Ti,
    };
    pub const SAT_TV: Regime = Regime {
        load: Load::Sat,
        variation: Variation::Tv,
    };
    pub const NONSAT_TI: Regime = Regime {
        load: Load::Nonsat,
        variation: Variation::Ti,
    };
    pub const NONSAT_TV: Regime = Regime {
        load: Load::Nonsat,
        variation: Variation::Tv,
    };
    pub const ALL: [Regime; 4] = [Self::SAT_TI, Self::SAT_TV, Self::NONSAT_TI, Self::NONSAT_TV];
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let load = match self.load {
            Load::Sat => "sat",
            Load::Nonsat => "nonsat",
        };
        let var = match self.variation {
            Variation::Ti => "ti",
            Variation::Tv => "tv",
        };
        write!(f, "{load}-{var}")
    }
}

impl From<Regime> for String {
    fn from(r: Regime) -> String {
        r.to_string()
    }
}

impl TryFrom<String> for Regime {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        let (load, var) = lower
            .split_once(['-', 'x', '_', '/'])
            .ok_or_else(|| invalid("regime", format!("`{s}` is not of the form sat-ti")))?;
        let load = match load {
            "sat" => Load::Sat,
            "nonsat" => Load::Nonsat,
            other => return Err(invalid("regime", format!("unknown load `{other}`"))),
        };
        let variation = match var {
            "ti" => Variation::Ti,
            "tv" => Variation::Tv,
            other => return Err(invalid("regime", format!("unknown channel case `{other}`"))),
        };
        Ok(Regime { load, variation })
    }
}

/// Which expression is used for the probability that the best discovered
/// channel has rate index `m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RatePmfPolicy {
    /// Law of the maximum: `F_m^v - F_{m-1}^v`.
    #[default]
    Exact,
    /// `F_m^v * (1 - F_{m-1}^v)`; does not normalize for three or more rates.
    ProductForm,
}

impl FromStr for RatePmfPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" | "exact-pmf" => Ok(Self::Exact),
            "product-form" | "product" => Ok(Self::ProductForm),
            other => Err(invalid("rate_pmf", format!("unknown policy `{other}`"))),
        }
    }
}

impl fmt::Display for RatePmfPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Exact => "exact",
            Self::ProductForm => "product-form",
        })
    }
}

/// Full description of one cooperative-sensing configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// Licensed channels `C`.
    pub channels: usize,
    /// Candidate cooperators `K`.
    pub sus: usize,
    /// Sensing teams `U`.
    pub teams: usize,
    /// Members per team `q`.
    pub team_size: usize,
    pub channel: OnOffChannel,
    /// Data rate of the time-invariant case (bytes/s).
    pub rate: f64,
    /// Rate process of the time-varying case.
    pub rate_chain: RateChain,
    /// Duration of one sensing round `t_s` (s).
    pub sense_duration: f64,
    pub sensing: SensingProbabilities,
    /// Detector the sensing probabilities were derived from, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detector: Option<DetectorConfig>,
    pub pf_threshold: f64,
    pub pd_threshold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub traffic: Option<TrafficParams>,
    /// Rate of the cooperators' in-use channels; defaults to `rate` (TI) or
    /// the stationary mean rate (TV).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_use: Option<f64>,
    /// Packet length `l` (bytes).
    pub packet_length: f64,
    #[serde(default)]
    pub rate_pmf: RatePmfPolicy,
}

impl Scenario {
    /// The reference configuration: 10 channels, 20 candidate cooperators,
    /// `mu_on = mu_off = 0.01`, 1 ms sensing, detector at -10 dB with 1000
    /// samples tuned for a 0.9 detection probability.
    pub fn reference() -> Self {
        let detector =
            DetectorConfig::for_target(1000, -10.0, 0.9).expect("reference detector is valid");
        Self {
            channels: 10,
            sus: 20,
            teams: 2,
            team_size: 7,
            channel: OnOffChannel::new(0.01, 0.01).expect("valid rates"),
            rate: 1e6,
            rate_chain: RateChain::uniform_grid(1e5, 1e6, 10, 0.005).expect("valid chain"),
            sense_duration: 1e-3,
            sensing: SensingProbabilities::from_detector(&detector).expect("valid detector"),
            detector: Some(detector),
            pf_threshold: 0.05,
            pd_threshold: 0.9,
            traffic: Some(TrafficParams { load: 0.5 }),
            r_use: None,
            packet_length: 1000.0,
            rate_pmf: RatePmfPolicy::Exact,
        }
    }

    /// Structural validation. Team-budget and sensing-quality constraints are
    /// reported through [`Feasibility`] rather than rejected here.
    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 {
            return Err(invalid("channels", "at least one channel is required"));
        }
        if self.sus == 0 {
            return Err(invalid("sus", "at least one candidate cooperator is required"));
        }
        if self.teams == 0 || self.teams > self.channels {
            return Err(invalid(
                "teams",
                format!("{} must lie in 1..={}", self.teams, self.channels),
            ));
        }
        if self.team_size == 0 {
            return Err(invalid("team_size", "must be at least 1"));
        }
        if !(self.rate.is_finite() && self.rate > 0.0) {
            return Err(invalid("rate", "must be positive"));
        }
        if !(self.sense_duration.is_finite() && self.sense_duration > 0.0) {
            return Err(invalid("sense_duration", "must be positive"));
        }
        if !(self.packet_length.is_finite() && self.packet_length > 0.0) {
            return Err(invalid("packet_length", "must be positive"));
        }
        if let Some(r) = self.r_use {
            if !(r.is_finite() && r > 0.0) {
                return Err(invalid("r_use", "must be positive"));
            }
        }
        if let Some(t) = self.traffic {
            TrafficParams::new(t.load)?;
        }
        check_probability("pf_threshold", self.pf_threshold)?;
        check_probability("pd_threshold", self.pd_threshold)?;
        SensingProbabilities::new(self.sensing.pd, self.sensing.pf)?;
        self.rate_chain.stationary()?;
        Ok(())
    }

    /// Number of group-sensing rounds needed to cover every channel.
    pub fn rounds(&self) -> usize {
        self.channels.div_ceil(self.teams)
    }

    /// Cooperators silenced per round, `q * U`.
    pub fn cooperators(&self) -> usize {
        self.team_size * self.teams
    }

    /// Mean usable time of a discovered channel, `1 / mu_off`.
    pub fn transmission_time(&self) -> f64 {
        self.channel.mean_off_time()
    }

    pub fn max_rate(&self, variation: Variation) -> f64 {
        match variation {
            Variation::Ti => self.rate,
            Variation::Tv => self.rate_chain.max_rate(),
        }
    }

    /// Divisor turning per-cycle byte volumes into the dimensionless scale.
    pub fn normalization(&self, variation: Variation) -> f64 {
        self.transmission_time() * self.max_rate(variation)
    }

    pub fn feasibility(&self) -> Result<Feasibility> {
        let q = team_size_u32(self.team_size)?;
        let pf = fused_pf(q, self.sensing.pf)?;
        let pd = fused_pd(q, self.sensing.pd)?;
        Ok(Feasibility {
            team_budget: self.cooperators() <= self.sus,
            false_alarm: pf <= self.pf_threshold,
            detection: pd >= self.pd_threshold,
            pf_fused: pf,
            pd_fused: pd,
        })
    }

    fn traffic(&self) -> Result<TrafficParams> {
        let t = self
            .traffic
            .ok_or_else(|| invalid("traffic", "required for the non-saturated regime"))?;
        TrafficParams::new(t.load)
    }
}

fn team_size_u32(q: usize) -> Result<u32> {
    u32::try_from(q).map_err(|_| invalid("team_size", "too large"))
}

/// Constraint satisfaction of a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Feasibility {
    pub team_budget: bool,
    pub false_alarm: bool,
    pub detection: bool,
    pub pf_fused: f64,
    pub pd_fused: f64,
}

impl Feasibility {
    pub fn feasible(&self) -> bool {
        self.team_budget && self.false_alarm && self.detection
    }
}

/// Per-discovery-cycle metrics, in bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub throughput: f64,
    pub overhead: f64,
    pub achievable: f64,
    /// Probability that the first available channel is found in round `n`,
    /// indexed from round 1.
    pub per_round: Vec<f64>,
    /// `T_r * R_max`, the divisor of the normalized values.
    pub normalization: f64,
    pub feasibility: Feasibility,
}

impl MetricsReport {
    fn new(throughput: f64, overhead: f64, per_round: Vec<f64>, normalization: f64, feasibility: Feasibility) -> Self {
        Self {
            throughput,
            overhead,
            achievable: throughput - overhead,
            per_round,
            normalization,
            feasibility,
        }
    }

    pub fn normalized_throughput(&self) -> f64 {
        self.throughput / self.normalization
    }

    pub fn normalized_overhead(&self) -> f64 {
        self.overhead / self.normalization
    }

    pub fn normalized_achievable(&self) -> f64 {
        self.achievable / self.normalization
    }
}

/// Probability that a team finds its channel idle and declares it so,
/// `p * (1 - fused_pf(q))`.
pub fn success_prob(p: f64, q: u32, pf: f64) -> Result<f64> {
    check_probability("p", p)?;
    Ok(p * (1.0 - fused_pf(q, pf)?))
}

/// Probability that exactly `v` of `U` teams succeed, for `v = 1..=U`.
fn team_success_weights(teams: usize, ps: f64) -> Vec<f64> {
    let u = teams as u32;
    (1..=u)
        .map(|v| binomial(u, v) * (1.0 - ps).powi((u - v) as i32) * ps.powi(v as i32))
        .collect()
}

/// Probability that at least one of `U` teams finds an available channel in
/// a round.
pub fn p_av_one(teams: usize, ps: f64) -> Result<f64> {
    if teams == 0 {
        return Err(invalid("teams", "must be at least 1"));
    }
    check_probability("ps", ps)?;
    Ok(team_success_weights(teams, ps).iter().sum())
}

fn p_av_round_unchecked(ns: usize, p1: f64) -> f64 {
    (1.0 - p1).powi(ns as i32 - 1) * p1
}

/// Probability that the first available channel is found in round `ns`.
pub fn p_av_round(ns: usize, teams: usize, ps: f64, channels: usize) -> Result<f64> {
    if teams == 0 {
        return Err(invalid("teams", "must be at least 1"));
    }
    let rounds = channels.div_ceil(teams);
    if ns == 0 || ns > rounds {
        return Err(invalid("ns", format!("round {ns} outside 1..={rounds}")));
    }
    Ok(p_av_round_unchecked(ns, p_av_one(teams, ps)?))
}

/// Expected data a cooperator forgoes while silenced for `ts` seconds,
/// `R * integral_0^ts p00(tau) dtau`.
pub fn overhead_per_su_ti(rate: f64, ch: &OnOffChannel, ts: f64) -> Result<f64> {
    if !(ts.is_finite() && ts >= 0.0) {
        return Err(invalid("ts", format!("{ts} must be non-negative")));
    }
    let p = ch.availability();
    let beta = ch.mixing_rate();
    Ok(rate * ((1.0 - p) * ts + p * (-(beta * ts)).exp_m1() / -beta))
}

/// Probability that the best of `v` discovered channels has rate index `m`
/// (1-based).
pub fn p_rate_given_v(v: usize, m: usize, pi: &[f64], policy: RatePmfPolicy) -> Result<f64> {
    if v == 0 {
        return Err(invalid("v", "must be at least 1"));
    }
    if m == 0 || m > pi.len() {
        return Err(invalid("m", format!("rate index {m} outside 1..={}", pi.len())));
    }
    let upto = if m == pi.len() {
        1.0
    } else {
        pi[..m].iter().sum::<f64>()
    };
    let below: f64 = pi[..m - 1].iter().sum();
    let hi = upto.powi(v as i32);
    let lo = below.powi(v as i32);
    Ok(match policy {
        RatePmfPolicy::Exact => hi - lo,
        RatePmfPolicy::ProductForm => hi * (1.0 - lo),
    })
}

struct Discovery {
    p1: f64,
    rounds: usize,
    weights: Vec<f64>,
}

impl Discovery {
    fn new(sc: &Scenario) -> Result<Self> {
        sc.validate()?;
        let q = team_size_u32(sc.team_size)?;
        let ps = success_prob(sc.channel.availability(), q, sc.sensing.pf)?;
        let weights = team_success_weights(sc.teams, ps);
        Ok(Self {
            p1: weights.iter().sum(),
            rounds: sc.rounds(),
            weights,
        })
    }

    fn per_round(&self) -> Vec<f64> {
        (1..=self.rounds).map(|ns| p_av_round_unchecked(ns, self.p1)).collect()
    }

    /// `sum_ns (1 - P_av,1)^(ns-1) * round_value(ns)`.
    fn sum(&self, round_value: impl Fn(usize) -> f64) -> f64 {
        (1..=self.rounds)
            .map(|ns| (1.0 - self.p1).powi(ns as i32 - 1) * round_value(ns))
            .sum()
    }

    /// Probability mass, per rate index, that the best discovered channel in
    /// a round has that rate, jointly with at least one discovery.
    fn best_rate_mass(&self, pi: &[f64], policy: RatePmfPolicy) -> Result<Vec<f64>> {
        (1..=pi.len())
            .map(|m| {
                self.weights
                    .iter()
                    .enumerate()
                    .map(|(i, w)| Ok(w * p_rate_given_v(i + 1, m, pi, policy)?))
                    .sum()
            })
            .collect()
    }
}

fn sat_overhead(sc: &Scenario, disc: &Discovery, silenced_rate: f64) -> Result<f64> {
    let members = sc.cooperators() as f64;
    let per_su = (1..=disc.rounds)
        .map(|ns| overhead_per_su_ti(silenced_rate, &sc.channel, ns as f64 * sc.sense_duration))
        .collect::<Result<Vec<_>>>()?;
    Ok(disc.sum(|ns| ns as f64 * disc.p1 * members * per_su[ns - 1]))
}

/// Mean rate of the cooperators picked by the time-varying selection,
/// averaged over ranks `1..=min(qU, K)` of `K` stationary draws.
pub fn selected_mean_rate(sc: &Scenario) -> Result<f64> {
    let pi = sc.rate_chain.stationary()?;
    let ranks = sc.cooperators().min(sc.sus);
    let mut mass = vec![0.0; pi.len()];
    for k in 1..=ranks {
        for (acc, x) in mass.iter_mut().zip(order_stat_rate_pmf(k, sc.sus, &pi)?) {
            *acc += x;
        }
    }
    Ok(mass
        .iter()
        .zip(sc.rate_chain.rates())
        .map(|(w, r)| w / ranks as f64 * r)
        .sum())
}

/// Expected bytes delivered per discovery cycle, saturated TI case.
pub fn throughput_sat_ti(sc: &Scenario) -> Result<f64> {
    let disc = Discovery::new(sc)?;
    let value = disc.p1 * sc.transmission_time() * sc.rate;
    Ok(disc.sum(|_| value))
}

/// Expected bytes forgone by silenced cooperators per cycle, saturated TI case.
pub fn overhead_sat_ti(sc: &Scenario) -> Result<f64> {
    sat_overhead(sc, &Discovery::new(sc)?, sc.rate)
}

pub fn achievable_sat_ti(sc: &Scenario) -> Result<MetricsReport> {
    let disc = Discovery::new(sc)?;
    let value = disc.p1 * sc.transmission_time() * sc.rate;
    Ok(MetricsReport::new(
        disc.sum(|_| value),
        sat_overhead(sc, &disc, sc.rate)?,
        disc.per_round(),
        sc.normalization(Variation::Ti),
        sc.feasibility()?,
    ))
}

fn tv_round_value(sc: &Scenario, disc: &Discovery, per_discovery: impl Fn(f64) -> f64) -> Result<f64> {
    let pi = sc.rate_chain.stationary()?;
    let mass = disc.best_rate_mass(&pi, sc.rate_pmf)?;
    Ok(mass
        .iter()
        .zip(sc.rate_chain.rates())
        .map(|(w, r)| per_discovery(*w) * r)
        .sum())
}

/// Expected bytes delivered per discovery cycle, saturated TV case.
pub fn throughput_sat_tv(sc: &Scenario) -> Result<f64> {
    let disc = Discovery::new(sc)?;
    let tr = sc.transmission_time();
    let value = tv_round_value(sc, &disc, |w| w * tr)?;
    Ok(disc.sum(|_| value))
}

/// Expected bytes forgone by silenced cooperators per cycle, saturated TV case.
pub fn overhead_sat_tv(sc: &Scenario) -> Result<f64> {
    sat_overhead(sc, &Discovery::new(sc)?, selected_mean_rate(sc)?)
}

pub fn achievable_sat_tv(sc: &Scenario) -> Result<MetricsReport> {
    let disc = Discovery::new(sc)?;
    let tr = sc.transmission_time();
    let value = tv_round_value(sc, &disc, |w| w * tr)?;
    Ok(MetricsReport::new(
        disc.sum(|_| value),
        sat_overhead(sc, &disc, selected_mean_rate(sc)?)?,
        disc.per_round(),
        sc.normalization(Variation::Tv),
        sc.feasibility()?,
    ))
}

fn check_load(rho: f64) -> Result<()> {
    if !(rho.is_finite() && rho >= 0.0) {
        return Err(invalid("rho", format!("{rho} must be non-negative")));
    }
    if rho >= 1.0 {
        return Err(Error::UnstableQueue(rho));
    }
    Ok(())
}

/// Mean number of waiting packets in an M/D/1 queue.
pub fn mean_queue_md1(rho: f64) -> Result<f64> {
    check_load(rho)?;
    Ok(rho * rho / (2.0 * (1.0 - rho)))
}

/// Mean number of waiting packets in an M/G/1 queue with service-time
/// variance `service_var`.
pub fn mean_queue_mg1(lambda: f64, service_var: f64, rho: f64) -> Result<f64> {
    check_load(rho)?;
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(invalid("lambda", format!("{lambda} must be non-negative")));
    }
    if !(service_var.is_finite() && service_var >= 0.0) {
        return Err(invalid("service_var", format!("{service_var} must be non-negative")));
    }
    Ok((lambda * lambda * service_var + rho * rho) / (2.0 * (1.0 - rho)))
}

/// Mean and variance of the time to send one `l`-byte packet when the rate
/// is drawn from the chain's stationary law.
pub fn service_moments(rc: &RateChain, l: f64) -> Result<(f64, f64)> {
    if !(l.is_finite() && l > 0.0) {
        return Err(invalid("packet_length", format!("{l} must be positive")));
    }
    let pi = rc.stationary()?;
    let mean: f64 = pi.iter().zip(rc.rates()).map(|(p, r)| p * l / r).sum();
    let var: f64 = pi
        .iter()
        .zip(rc.rates())
        .map(|(p, r)| {
            let d = l / r - mean;
            p * d * d
        })
        .sum();
    Ok((mean, var))
}

struct QueueView {
    mean_queue: f64,
    r_use: f64,
}

fn nonsat_report(
    sc: &Scenario,
    disc: &Discovery,
    q: QueueView,
    round_value: f64,
    variation: Variation,
) -> Result<MetricsReport> {
    let l = sc.packet_length;
    let members = sc.cooperators() as f64;
    let overhead = disc.sum(|ns| {
        let backlog = ns as f64 * members * q.mean_queue;
        let capacity = members * (ns as f64 * sc.sense_duration) * q.r_use / l;
        disc.p1 * backlog.min(capacity) * l
    });
    Ok(MetricsReport::new(
        disc.sum(|_| round_value),
        overhead,
        disc.per_round(),
        sc.normalization(variation),
        sc.feasibility()?,
    ))
}

fn delivered_packets(sc: &Scenario, q: &QueueView) -> f64 {
    q.mean_queue.min(sc.transmission_time() * q.r_use / sc.packet_length)
}

/// Non-saturated TI metrics with M/D/1 queues.
pub fn nonsat_metrics_ti(sc: &Scenario) -> Result<MetricsReport> {
    let traffic = sc.traffic()?;
    let disc = Discovery::new(sc)?;
    let q = QueueView {
        mean_queue: mean_queue_md1(traffic.load)?,
        r_use: sc.r_use.unwrap_or(sc.rate),
    };
    let nd = delivered_packets(sc, &q);
    let value = disc.p1 * nd * sc.packet_length;
    nonsat_report(sc, &disc, q, value, Variation::Ti)
}

/// Non-saturated TV metrics with M/G/1 queues.
pub fn nonsat_metrics_tv(sc: &Scenario) -> Result<MetricsReport> {
    let traffic = sc.traffic()?;
    let disc = Discovery::new(sc)?;
    let (mean, var) = service_moments(&sc.rate_chain, sc.packet_length)?;
    let q = QueueView {
        mean_queue: mean_queue_mg1(traffic.arrival_rate(mean), var, traffic.load)?,
        r_use: match sc.r_use {
            Some(r) => r,
            None => sc.rate_chain.mean_rate()?,
        },
    };
    let nd = delivered_packets(sc, &q);
    // Packets sent depend on the queue, not on the rate of the channel found.
    let packets: f64 = disc
        .best_rate_mass(&sc.rate_chain.stationary()?, sc.rate_pmf)?
        .iter()
        .map(|w| w * nd)
        .sum();
    nonsat_report(sc, &disc, q, packets * sc.packet_length, Variation::Tv)
}

/// Evaluates the scenario in the given regime.
pub fn evaluate(sc: &Scenario, regime: Regime) -> Result<MetricsReport> {
    match (regime.load, regime.variation) {
        (Load::Sat, Variation::Ti) => achievable_sat_ti(sc),
        (Load::Sat, Variation::Tv) => achievable_sat_tv(sc),
        (Load::Nonsat, Variation::Ti) => nonsat_metrics_ti(sc),
        (Load::Nonsat, Variation::Tv) => nonsat_metrics_tv(sc),
    }
}
