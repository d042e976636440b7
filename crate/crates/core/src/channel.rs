//! Licensed-channel models: primary-user ON/OFF occupancy and the
//! finite-state Markov chain of channel data rates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Primary-user occupancy of a channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Occupancy {
    /// Primary user active; secondary users must stay off.
    On,
    /// Channel idle; usable by secondary users.
    Off,
}

/// Two-state continuous-time ON/OFF process with exponential sojourns.
///
/// `mu_on` and `mu_off` are the rate parameters (1/s) of the ON and OFF
/// durations respectively, so a mean OFF period lasts `1 / mu_off` seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OnOffChannel {
    mu_on: f64,
    mu_off: f64,
}

impl OnOffChannel {
    pub fn new(mu_on: f64, mu_off: f64) -> Result<Self> {
        if !(mu_on.is_finite() && mu_on > 0.0) {
            return Err(invalid("mu_on", format!("{mu_on} must be a positive rate")));
        }
        if !(mu_off.is_finite() && mu_off > 0.0) {
            return Err(invalid("mu_off", format!("{mu_off} must be a positive rate")));
        }
        Ok(Self { mu_on, mu_off })
    }

    /// Builds the channel whose availability is `p`, keeping `mu_off` fixed.
    pub fn with_availability(p: f64, mu_off: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(invalid("availability", format!("{p} must lie in (0, 1)")));
        }
        Self::new(p * mu_off / (1.0 - p), mu_off)
    }

    pub fn mu_on(&self) -> f64 {
        self.mu_on
    }

    pub fn mu_off(&self) -> f64 {
        self.mu_off
    }

    /// Long-run fraction of time the channel is idle, `mu_on / (mu_on + mu_off)`.
    pub fn availability(&self) -> f64 {
        self.mu_on / (self.mu_on + self.mu_off)
    }

    /// Total transition rate `mu_on + mu_off`.
    pub fn mixing_rate(&self) -> f64 {
        self.mu_on + self.mu_off
    }

    /// Mean usable transmission time on a discovered idle channel, `1 / mu_off`.
    pub fn mean_off_time(&self) -> f64 {
        1.0 / self.mu_off
    }

    /// Probability that a channel last seen idle is busy `tau` seconds later,
    /// `p - p * exp(-(mu_off + mu_on) * tau)`.
    pub fn p01(&self, tau: f64) -> Result<f64> {
        check_tau(tau)?;
        let p = self.availability();
        Ok(p - p * (-self.mixing_rate() * tau).exp())
    }

    /// Complement of [`OnOffChannel::p01`].
    pub fn p00(&self, tau: f64) -> Result<f64> {
        Ok(1.0 - self.p01(tau)?)
    }

    /// Exact probability that the process is OFF `tau` seconds after being
    /// observed in `from`.
    pub fn off_probability_after(&self, from: Occupancy, tau: f64) -> f64 {
        let p = self.availability();
        let decay = (-self.mixing_rate() * tau.max(0.0)).exp();
        match from {
            Occupancy::Off => p + (1.0 - p) * decay,
            Occupancy::On => p * (1.0 - decay),
        }
    }

    /// Mean of an exponential sojourn in `state`.
    pub fn mean_sojourn(&self, state: Occupancy) -> f64 {
        match state {
            Occupancy::On => 1.0 / self.mu_on,
            Occupancy::Off => 1.0 / self.mu_off,
        }
    }

    /// Draws a sojourn duration in `state`.
    pub fn sample_sojourn<R: Rng + ?Sized>(&self, state: Occupancy, rng: &mut R) -> f64 {
        let rate = match state {
            Occupancy::On => self.mu_on,
            Occupancy::Off => self.mu_off,
        };
        Exp::new(rate).expect("rate validated at construction").sample(rng)
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau.is_finite() && tau >= 0.0 {
        Ok(())
    } else {
        Err(invalid("tau", format!("{tau} must be a non-negative duration")))
    }
}

/// Availability of an ON/OFF channel.
pub fn availability(ch: &OnOffChannel) -> f64 {
    ch.availability()
}

/// See [`OnOffChannel::p01`].
pub fn p01(ch: &OnOffChannel, tau: f64) -> Result<f64> {
    ch.p01(tau)
}

/// See [`OnOffChannel::p00`].
pub fn p00(ch: &OnOffChannel, tau: f64) -> Result<f64> {
    ch.p00(tau)
}

const ROW_TOLERANCE: f64 = 1e-12;

/// Finite-state Markov chain over channel data rates (bytes/second).
///
/// The chain takes one transition every `dwell` seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateChain {
    rates: Vec<f64>,
    transition: Vec<Vec<f64>>,
    dwell: f64,
}

impl RateChain {
    pub fn new(rates: Vec<f64>, transition: Vec<Vec<f64>>, dwell: f64) -> Result<Self> {
        if rates.is_empty() {
            return Err(invalid("rates", "at least one rate state is required"));
        }
        if rates.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(invalid("rates", "rates must be positive and finite"));
        }
        if rates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("rates", "rates must be strictly increasing"));
        }
        let m = rates.len();
        if transition.len() != m || transition.iter().any(|row| row.len() != m) {
            return Err(invalid(
                "transition_matrix",
                format!("expected a {m}x{m} matrix"),
            ));
        }
        for (i, row) in transition.iter().enumerate() {
            if row.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(invalid(
                    "transition_matrix",
                    format!("row {i} has a negative or non-finite entry"),
                ));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_TOLERANCE {
                return Err(invalid(
                    "transition_matrix",
                    format!("row {i} sums to {sum}, not 1"),
                ));
            }
        }
        if !(dwell.is_finite() && dwell > 0.0) {
            return Err(invalid("dwell", format!("{dwell} must be positive")));
        }
        Ok(Self {
            rates,
            transition,
            dwell,
        })
    }

    /// Birth-death chain that moves one rate state up or down with
    /// probability 1/2 each per dwell epoch, holding at the two ends.
    pub fn birth_death(rates: Vec<f64>, dwell: f64) -> Result<Self> {
        let m = rates.len();
        let mut transition = vec![vec![0.0; m]; m];
        if m == 1 {
            transition[0][0] = 1.0;
            return Self::new(rates, transition, dwell);
        }
        for i in 0..m {
            let down = if i == 0 { 0 } else { i - 1 };
            let up = if i + 1 == m { i } else { i + 1 };
            transition[i][down] += 0.5;
            transition[i][up] += 0.5;
        }
        Self::new(rates, transition, dwell)
    }

    /// `states` evenly spaced rates from `min` to `max` inclusive, on a
    /// birth-death chain.
    pub fn uniform_grid(min: f64, max: f64, states: usize, dwell: f64) -> Result<Self> {
        if states == 0 {
            return Err(invalid("states", "at least one rate state is required"));
        }
        let rates = if states == 1 {
            vec![max]
        } else {
            (0..states)
                .map(|i| min + (max - min) * i as f64 / (states - 1) as f64)
                .collect()
        };
        Self::birth_death(rates, dwell)
    }

    /// Degenerate single-state chain with constant rate `rate`.
    pub fn constant(rate: f64) -> Result<Self> {
        Self::new(vec![rate], vec![vec![1.0]], 1.0)
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn transition_matrix(&self) -> &[Vec<f64>] {
        &self.transition
    }

    pub fn dwell(&self) -> f64 {
        self.dwell
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    pub fn max_rate(&self) -> f64 {
        *self.rates.last().expect("non-empty by construction")
    }

    /// Stationary distribution of the chain.
    pub fn stationary(&self) -> Result<Vec<f64>> {
        stationary(self)
    }

    /// Stationary mean rate.
    pub fn mean_rate(&self) -> Result<f64> {
        let pi = self.stationary()?;
        Ok(pi.iter().zip(&self.rates).map(|(p, r)| p * r).sum())
    }
}

/// Solves `pi P = pi`, `sum(pi) = 1` by Gaussian elimination.
///
/// Fails with [`Error::DegenerateChain`] when the chain has more than one
/// closed communicating class.
pub fn stationary(rc: &RateChain) -> Result<Vec<f64>> {
    let p = &rc.transition;
    let m = p.len();
    let closed = closed_class_count(p);
    if closed != 1 {
        return Err(Error::DegenerateChain(format!(
            "{closed} closed communicating classes"
        )));
    }
    // Rows 0..m-1 of (P^T - I), last row replaced by the normalization.
    let mut a = vec![vec![0.0; m + 1]; m];
    for (i, row) in a.iter_mut().enumerate().take(m - 1) {
        for (j, cell) in row.iter_mut().enumerate().take(m) {
            *cell = p[j][i] - if i == j { 1.0 } else { 0.0 };
        }
    }
    for j in 0..m {
        a[m - 1][j] = 1.0;
    }
    a[m - 1][m] = 1.0;

    for col in 0..m {
        let pivot = (col..m)
            .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
            .expect("non-empty range");
        if a[pivot][col].abs() < 1e-300 {
            return Err(Error::DegenerateChain("singular balance system".into()));
        }
        a.swap(col, pivot);
        let inv = 1.0 / a[col][col];
        for k in col..=m {
            a[col][k] *= inv;
        }
        for row in 0..m {
            if row != col && a[row][col] != 0.0 {
                let factor = a[row][col];
                for k in col..=m {
                    a[row][k] -= factor * a[col][k];
                }
            }
        }
    }
    let mut pi: Vec<f64> = a.iter().map(|row| row[m].max(0.0)).collect();
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|x| *x /= total);

    let residual = (0..m)
        .map(|j| ((0..m).map(|i| pi[i] * p[i][j]).sum::<f64>() - pi[j]).abs())
        .fold(0.0, f64::max);
    if residual > 1e-10 {
        return Err(Error::DegenerateChain(format!(
            "balance residual {residual:e} after solve"
        )));
    }
    Ok(pi)
}

fn closed_class_count(p: &[Vec<f64>]) -> usize {
    let m = p.len();
    let reach: Vec<Vec<bool>> = (0..m)
        .map(|start| {
            let mut seen = vec![false; m];
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(i) = stack.pop() {
                for j in 0..m {
                    if p[i][j] > 0.0 && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
            seen
        })
        .collect();
    // A state is in a closed class iff every state it reaches reaches it back.
    let mut counted = vec![false; m];
    let mut classes = 0;
    for i in 0..m {
        if counted[i] {
            continue;
        }
        let closed = (0..m).all(|j| !reach[i][j] || reach[j][i]);
        if closed {
            classes += 1;
            for j in 0..m {
                if reach[i][j] {
                    counted[j] = true;
                }
            }
        }
    }
    classes
}

/// Exact multi-step sampling of a [`RateChain`] via cached binary powers of
/// its transition matrix.
#[derive(Debug, Clone)]
pub struct RateStepper {
    powers: Vec<Vec<Vec<f64>>>,
}

impl RateStepper {
    pub fn new(rc: &RateChain) -> Self {
        let mut powers = vec![rc.transition.clone()];
        for _ in 1..64 {
            let last = powers.last().expect("seeded with one power");
            powers.push(mat_mul(last, last));
        }
        Self { powers }
    }

    /// Distribution of the state `steps` epochs after `from`.
    pub fn distribution(&self, from: usize, steps: u64) -> Vec<f64> {
        let m = self.powers[0].len();
        let mut v = vec![0.0; m];
        v[from] = 1.0;
        for (bit, power) in self.powers.iter().enumerate() {
            if steps >> bit & 1 == 1 {
                v = (0..m)
                    .map(|j| (0..m).map(|i| v[i] * power[i][j]).sum())
                    .collect();
            }
        }
        v
    }

    /// Draws the state `steps` epochs after `from` using the uniform `u`.
    pub fn advance(&self, from: usize, steps: u64, u: f64) -> usize {
        if steps == 0 {
            return from;
        }
        sample_index(&self.distribution(from, steps), u)
    }
}

fn mat_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let m = a.len();
    (0..m)
        .map(|i| {
            (0..m)
                .map(|j| (0..m).map(|k| a[i][k] * b[k][j]).sum())
                .collect()
        })
        .collect()
}

/// Inverse-CDF draw from a probability vector.
pub(crate) fn sample_index(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

/// One change point of a sampled channel trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Epoch {
    pub time: f64,
    pub occupancy: Occupancy,
    /// 0-based index into the rate chain's states.
    pub rate_state: usize,
}

/// Piecewise-constant channel path; each epoch holds until the next one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelTrajectory {
    pub epochs: Vec<Epoch>,
    pub horizon: f64,
}

impl ChannelTrajectory {
    /// Total time spent idle within `[0, horizon)`.
    pub fn off_time(&self) -> f64 {
        let mut total = 0.0;
        for (i, e) in self.epochs.iter().enumerate() {
            let end = self.epochs.get(i + 1).map_or(self.horizon, |n| n.time);
            if e.occupancy == Occupancy::Off {
                total += end - e.time;
            }
        }
        total
    }

    /// Durations of the completed (not horizon-truncated) sojourns in `state`.
    pub fn sojourns(&self, state: Occupancy) -> Vec<f64> {
        let mut out = Vec::new();
        let mut start: Option<f64> = None;
        let mut current: Option<Occupancy> = None;
        for e in &self.epochs {
            if current != Some(e.occupancy) {
                if let (Some(s), Some(c)) = (start, current) {
                    if c == state {
                        out.push(e.time - s);
                    }
                }
                // The first sojourn is left-censored at time 0.
                start = if current.is_none() { None } else { Some(e.time) };
                current = Some(e.occupancy);
            }
        }
        out
    }

    /// State of the path at time `t`.
    pub fn at(&self, t: f64) -> Epoch {
        let idx = self.epochs.partition_point(|e| e.time <= t);
        self.epochs[idx.saturating_sub(1)]
    }
}

/// Samples an ON/OFF and rate trajectory on `[0, horizon)`.
///
/// The occupancy and the rate state start from their stationary laws; the
/// rate state takes one chain transition every `rc.dwell()` seconds.
pub fn sample_trajectory(
    ch: &OnOffChannel,
    rc: &RateChain,
    horizon: f64,
    seed: u64,
) -> Result<ChannelTrajectory> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(invalid("horizon", format!("{horizon} must be positive")));
    }
    let pi = rc.stationary()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut occupancy = if rng.random::<f64>() < ch.availability() {
        Occupancy::Off
    } else {
        Occupancy::On
    };
    let mut rate_state = sample_index(&pi, rng.random());
    let mut epochs = vec![Epoch {
        time: 0.0,
        occupancy,
        rate_state,
    }];

    let mut next_flip = ch.sample_sojourn(occupancy, &mut rng);
    let mut epoch_index: u64 = 1;
    let mut next_step = rc.dwell();
    loop {
        let flip_first = next_flip <= next_step;
        let t = if flip_first { next_flip } else { next_step };
        if t >= horizon {
            break;
        }
        if flip_first {
            occupancy = match occupancy {
                Occupancy::On => Occupancy::Off,
                Occupancy::Off => Occupancy::On,
            };
            next_flip = t + ch.sample_sojourn(occupancy, &mut rng);
        } else {
            rate_state = sample_index(&rc.transition[rate_state], rng.random());
            epoch_index += 1;
            next_step = epoch_index as f64 * rc.dwell();
        }
        let last = epochs.last().expect("seeded with the initial epoch");
        if last.occupancy != occupancy || last.rate_state != rate_state {
            epochs.push(Epoch {
                time: t,
                occupancy,
                rate_state,
            });
        }
    }
    Ok(ChannelTrajectory { epochs, horizon })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ch(on: f64, off: f64) -> OnOffChannel {
        OnOffChannel::new(on, off).unwrap()
    }

    #[test]
    fn availability_examples() {
        assert_eq!(ch(1.0, 1.0).availability(), 0.5);
        assert_abs_diff_eq!(ch(0.005, 0.01).availability(), 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(ch(0.02, 0.01).availability(), 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn rejects_non_positive_rates() {
        assert!(OnOffChannel::new(0.0, 1.0).is_err());
        assert!(OnOffChannel::new(1.0, -2.0).is_err());
        assert!(OnOffChannel::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn with_availability_round_trips() {
        let c = OnOffChannel::with_availability(2.0 / 3.0, 0.01).unwrap();
        assert_abs_diff_eq!(c.availability(), 2.0 / 3.0, epsilon = 1e-14);
        assert_eq!(c.mu_off(), 0.01);
    }

    #[test]
    fn p01_examples() {
        let c = ch(1.0, 1.0);
        assert_eq!(c.p01(0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(c.p01(1.0).unwrap(), 0.5 * (1.0 - (-2.0f64).exp()), epsilon = 1e-15);
        assert_abs_diff_eq!(c.p01(1.0).unwrap(), 0.432332, epsilon = 1e-6);
        assert_abs_diff_eq!(c.p00(1.0).unwrap(), 0.567668, epsilon = 1e-6);
        assert_eq!(c.p00(0.0).unwrap(), 1.0);
        let slow = ch(0.02, 0.01);
        let tau = 50.0 / slow.mixing_rate();
        assert_abs_diff_eq!(slow.p01(tau).unwrap(), slow.availability(), epsilon = 1e-9);
    }

    #[test]
    fn negative_tau_is_rejected() {
        assert!(ch(1.0, 1.0).p01(-1e-3).is_err());
        assert!(ch(1.0, 1.0).p00(f64::INFINITY).is_err());
    }

    #[test]
    fn two_state_stationary_examples() {
        let sym = RateChain::new(vec![1.0, 2.0], vec![vec![0.5, 0.5], vec![0.5, 0.5]], 1.0).unwrap();
        let pi = sym.stationary().unwrap();
        assert_abs_diff_eq!(pi[0], 0.5, epsilon = 1e-12);
        let skew = RateChain::new(vec![1.0, 2.0], vec![vec![0.9, 0.1], vec![0.2, 0.8]], 1.0).unwrap();
        let pi = skew.stationary().unwrap();
        // Hand balance: pi1 * 0.1 = pi2 * 0.2.
        assert_abs_diff_eq!(pi[0], 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(pi[1], 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn birth_death_is_uniform() {
        let rc = RateChain::uniform_grid(1e5, 1e6, 10, 0.005).unwrap();
        let pi = rc.stationary().unwrap();
        for x in &pi {
            assert_abs_diff_eq!(*x, 0.1, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(rc.rates()[1], 2e5, epsilon = 1e-6);
        assert_eq!(rc.max_rate(), 1e6);
    }

    #[test]
    fn reducible_chain_is_degenerate() {
        let rc = RateChain::new(vec![1.0, 2.0], vec![vec![1.0, 0.0], vec![0.0, 1.0]], 1.0).unwrap();
        assert!(matches!(rc.stationary(), Err(Error::DegenerateChain(_))));
    }

    #[test]
    fn transient_state_gets_zero_mass() {
        let rc = RateChain::new(
            vec![1.0, 2.0, 3.0],
            vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.5, 0.5], vec![0.0, 0.5, 0.5]],
            1.0,
        )
        .unwrap();
        let pi = rc.stationary().unwrap();
        assert_abs_diff_eq!(pi[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(pi[1], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn invalid_chains_are_rejected() {
        assert!(RateChain::new(vec![2.0, 1.0], vec![vec![1.0, 0.0], vec![0.0, 1.0]], 1.0).is_err());
        assert!(RateChain::new(vec![1.0, 2.0], vec![vec![0.7, 0.2], vec![0.5, 0.5]], 1.0).is_err());
        assert!(RateChain::new(vec![1.0], vec![vec![1.0]], 0.0).is_err());
    }

    #[test]
    fn stepper_matches_single_steps() {
        let rc = RateChain::uniform_grid(1.0, 4.0, 4, 1.0).unwrap();
        let stepper = RateStepper::new(&rc);
        let one = stepper.distribution(0, 1);
        assert_eq!(one, vec![0.5, 0.5, 0.0, 0.0]);
        let two = stepper.distribution(0, 2);
        assert_abs_diff_eq!(two[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(two[1], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(two[2], 0.25, epsilon = 1e-15);
        let far = stepper.distribution(3, 1 << 40);
        for x in far {
            assert_abs_diff_eq!(x, 0.25, epsilon = 1e-12);
        }
    }

    #[test]
    fn trajectory_is_deterministic_per_seed() {
        let c = ch(1.0, 2.0);
        let rc = RateChain::uniform_grid(1.0, 3.0, 3, 0.5).unwrap();
        let a = sample_trajectory(&c, &rc, 100.0, 9).unwrap();
        let b = sample_trajectory(&c, &rc, 100.0, 9).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, sample_trajectory(&c, &rc, 100.0, 10).unwrap());
        assert_eq!(a.epochs[0].time, 0.0);
        assert!(a.epochs.windows(2).all(|w| w[0].time < w[1].time));
    }

    #[test]
    fn trajectory_rejects_bad_horizon() {
        let rc = RateChain::constant(1.0).unwrap();
        assert!(sample_trajectory(&ch(1.0, 1.0), &rc, 0.0, 1).is_err());
    }
}
