//! Energy-detection performance and majority-rule fusion.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc_inv;

use crate::error::{check_probability, invalid, Error, Result};

/// Gaussian tail probability `Q(x) = P{Z > x}` for a standard normal `Z`.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// Inverse of [`q_function`] on `(0, 1)`.
pub fn q_inverse(prob: f64) -> f64 {
    std::f64::consts::SQRT_2 * erfc_inv(2.0 * prob)
}

/// Received-signal model of the energy detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignalModel {
    Real,
    /// Complex baseband; the primary signal is scaled by a channel gain `|h|^2`.
    Complex,
}

/// Energy detector parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Samples per sensing period, `t_s * f_s`.
    pub samples: u64,
    pub sigma_s2: f64,
    pub sigma_w2: f64,
    /// Energy decision threshold.
    pub threshold: f64,
    pub model: SignalModel,
    /// `|h|^2`; only used by [`SignalModel::Complex`].
    pub channel_gain2: f64,
}

impl DetectorConfig {
    /// Real-model detector at the given SNR (dB) with unit noise power and
    /// its threshold set so that the single-user detection probability is
    /// `target_pd`.
    pub fn for_target(samples: u64, snr_db: f64, target_pd: f64) -> Result<Self> {
        let mut cfg = Self {
            samples,
            sigma_s2: 10f64.powf(snr_db / 10.0),
            sigma_w2: 1.0,
            threshold: 0.0,
            model: SignalModel::Real,
            channel_gain2: 1.0,
        };
        cfg.validate()?;
        cfg.threshold = threshold_for_pd(&cfg, target_pd)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(invalid("samples", "must be at least 1"));
        }
        if !(self.sigma_s2.is_finite() && self.sigma_s2 >= 0.0) {
            return Err(invalid("sigma_s2", "must be non-negative"));
        }
        if !(self.sigma_w2.is_finite() && self.sigma_w2 > 0.0) {
            return Err(invalid("sigma_w2", "must be positive"));
        }
        if !(self.channel_gain2.is_finite() && self.channel_gain2 >= 0.0) {
            return Err(invalid("channel_gain2", "must be non-negative"));
        }
        if !self.threshold.is_finite() {
            return Err(invalid("threshold", "must be finite"));
        }
        Ok(())
    }

    /// Signal power seen by the detector.
    pub fn effective_signal(&self) -> f64 {
        match self.model {
            SignalModel::Real => self.sigma_s2,
            SignalModel::Complex => self.channel_gain2 * self.sigma_s2,
        }
    }

    pub fn snr(&self) -> f64 {
        self.effective_signal() / self.sigma_w2
    }

    fn busy_stats(&self) -> (f64, f64) {
        let n = self.samples as f64;
        let power = self.effective_signal() + self.sigma_w2;
        (n * power, (2.0 * n).sqrt() * power)
    }
}

/// Single-user detection probability.
pub fn pd_single(cfg: &DetectorConfig) -> f64 {
    let (mean, sd) = cfg.busy_stats();
    q_function((cfg.threshold - mean) / sd)
}

/// Single-user false-alarm probability.
pub fn pf_single(cfg: &DetectorConfig) -> f64 {
    let n = cfg.samples as f64;
    q_function((cfg.threshold - n * cfg.sigma_w2) / ((2.0 * n).sqrt() * cfg.sigma_w2))
}

/// Threshold at which [`pd_single`] equals `target_pd`. The `threshold`
/// field of `cfg` is ignored.
pub fn threshold_for_pd(cfg: &DetectorConfig, target_pd: f64) -> Result<f64> {
    if !(target_pd > 0.0 && target_pd < 1.0) {
        return Err(Error::UnattainableTarget(target_pd));
    }
    let (mean, sd) = cfg.busy_stats();
    let mut x = q_inverse(target_pd);
    // One Newton step on Q(x) = target tidies the last few ulps of erfc_inv.
    let density = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    if density > 0.0 {
        x += (q_function(x) - target_pd) / density;
    }
    Ok(mean + x * sd)
}

fn majority(j: u32) -> u32 {
    j.div_ceil(2)
}

/// Probability that at least `ceil(j/2)` of `j` independent voters, each
/// voting "busy" with probability `p`, vote "busy".
pub fn majority_tail(j: u32, p: f64) -> Result<f64> {
    if j == 0 {
        return Err(invalid("j", "team size must be at least 1"));
    }
    check_probability("p", p)?;
    Ok(binomial_tail(j, majority(j), p))
}

/// `P{Binomial(n, p) >= k}`.
pub(crate) fn binomial_tail(n: u32, k: u32, p: f64) -> f64 {
    (k..=n).map(|y| binomial_pmf(n, y, p)).sum()
}

pub(crate) fn binomial_pmf(n: u32, k: u32, p: f64) -> f64 {
    binomial(n, k) * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32)
}

/// Binomial coefficient as a float; exact for the team sizes used here.
pub(crate) fn binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut c = 1.0;
    for i in 0..k {
        c = c * f64::from(n - i) / f64::from(i + 1);
    }
    c.round()
}

/// Team detection probability under majority fusion.
pub fn fused_pd(j: u32, pd: f64) -> Result<f64> {
    majority_tail(j, pd)
}

/// Team false-alarm probability under majority fusion.
pub fn fused_pf(j: u32, pf: f64) -> Result<f64> {
    majority_tail(j, pf)
}

/// Single-user and fused probabilities of one team.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionOutcome {
    pub team_size: u32,
    pub pd_single: f64,
    pub pf_single: f64,
    pub pd_fused: f64,
    pub pf_fused: f64,
}

impl FusionOutcome {
    pub fn new(team_size: u32, pd_single: f64, pf_single: f64) -> Result<Self> {
        Ok(Self {
            team_size,
            pd_single,
            pf_single,
            pd_fused: fused_pd(team_size, pd_single)?,
            pf_fused: fused_pf(team_size, pf_single)?,
        })
    }
}

/// Single-user detection and false-alarm probabilities shared by every SU.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensingProbabilities {
    pub pd: f64,
    pub pf: f64,
}

impl SensingProbabilities {
    pub fn new(pd: f64, pf: f64) -> Result<Self> {
        check_probability("pd", pd)?;
        check_probability("pf", pf)?;
        Ok(Self { pd, pf })
    }

    pub fn from_detector(cfg: &DetectorConfig) -> Result<Self> {
        cfg.validate()?;
        Self::new(pd_single(cfg), pf_single(cfg))
    }

    pub fn fused(&self, team_size: u32) -> Result<FusionOutcome> {
        FusionOutcome::new(team_size, self.pd, self.pf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn detector(samples: u64, sigma_s2: f64, threshold: f64) -> DetectorConfig {
        DetectorConfig {
            samples,
            sigma_s2,
            sigma_w2: 1.0,
            threshold,
            model: SignalModel::Real,
            channel_gain2: 1.0,
        }
    }

    /// Gaussian tail by composite Simpson integration of the density.
    fn tail_quadrature(x: f64) -> f64 {
        let upper = 40.0;
        let n = 200_000;
        let h = (upper - x) / n as f64;
        let f = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mut s = f(x) + f(upper);
        for i in 1..n {
            let t = x + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(t);
        }
        s * h / 3.0
    }

    /// Vote-vector enumeration of the majority rule.
    fn enumerate_majority(j: u32, p: f64) -> f64 {
        let need = j.div_ceil(2);
        (0u32..1 << j)
            .filter(|mask| mask.count_ones() >= need)
            .map(|mask| {
                (0..j)
                    .map(|b| if mask >> b & 1 == 1 { p } else { 1.0 - p })
                    .product::<f64>()
            })
            .sum()
    }

    #[test]
    fn q_function_examples() {
        assert_eq!(q_function(0.0), 0.5);
        assert_abs_diff_eq!(q_function(1.2815515655), 0.1, epsilon = 1e-9);
        for x in [-3.0, -0.5, 0.3, 1.0, 2.5, 6.0] {
            assert_abs_diff_eq!(q_function(x), tail_quadrature(x), epsilon = 1e-12);
        }
    }

    #[test]
    fn detection_examples() {
        let cfg = detector(100, 0.1, 120.0);
        let arg: f64 = 10.0 / (200f64.sqrt() * 1.1);
        assert_abs_diff_eq!(arg, 0.642824, epsilon = 1e-6);
        assert_abs_diff_eq!(pd_single(&cfg), tail_quadrature(arg), epsilon = 1e-10);
        assert_abs_diff_eq!(pd_single(&cfg), 0.260169, epsilon = 1e-6);
        assert_abs_diff_eq!(pf_single(&cfg), 0.078650, epsilon = 1e-6);
        assert_eq!(pd_single(&detector(100, 0.1, 100.0 * (0.1 + 1.0))), 0.5);
        assert_eq!(pf_single(&detector(100, 0.1, 100.0)), 0.5);
    }

    #[test]
    fn complex_unit_gain_matches_real() {
        let real = detector(250, 0.3, 300.0);
        let complex = DetectorConfig {
            model: SignalModel::Complex,
            ..real
        };
        assert_eq!(pd_single(&real), pd_single(&complex));
        assert_eq!(pf_single(&real), pf_single(&complex));
        let faded = DetectorConfig {
            channel_gain2: 0.5,
            ..complex
        };
        assert!(pd_single(&faded) < pd_single(&complex));
    }

    #[test]
    fn threshold_inverse_examples() {
        let cfg = detector(100, 0.1, 0.0);
        assert_abs_diff_eq!(threshold_for_pd(&cfg, 0.5).unwrap(), 110.0, epsilon = 1e-9);
        let lambda = threshold_for_pd(&cfg, 0.9).unwrap();
        // Bisection oracle on pd_single.
        let (mut lo, mut hi) = (0.0, 200.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if pd_single(&detector(100, 0.1, mid)) > 0.9 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert_abs_diff_eq!(lambda, lo, epsilon = 1e-7);
        assert_abs_diff_eq!(lambda, 110.0 - 1.2815515655 * 200f64.sqrt() * 1.1, epsilon = 1e-6);
        assert!(matches!(threshold_for_pd(&cfg, 1.0), Err(Error::UnattainableTarget(_))));
        assert!(matches!(threshold_for_pd(&cfg, 0.0), Err(Error::UnattainableTarget(_))));
    }

    #[test]
    fn fusion_examples() {
        assert_abs_diff_eq!(fused_pd(3, 0.9).unwrap(), 0.972, epsilon = 1e-12);
        assert_abs_diff_eq!(fused_pd(5, 0.9).unwrap(), 0.99144, epsilon = 1e-12);
        assert_abs_diff_eq!(fused_pf(3, 0.1).unwrap(), 0.028, epsilon = 1e-12);
        assert_abs_diff_eq!(fused_pf(5, 0.05).unwrap(), 0.00115813, epsilon = 1e-8);
        assert_eq!(fused_pd(1, 0.37).unwrap(), 0.37);
        assert!(fused_pd(0, 0.5).is_err());
        assert!(fused_pf(2, 1.5).is_err());
    }

    #[test]
    fn even_teams_need_half_the_votes() {
        // Two voters: a single busy vote suffices.
        assert_abs_diff_eq!(fused_pd(2, 0.9).unwrap(), 0.99, epsilon = 1e-15);
    }

    #[test]
    fn fusion_matches_enumeration() {
        for j in 1..=12 {
            for k in 0..=20 {
                let p = k as f64 / 20.0;
                assert_abs_diff_eq!(fused_pd(j, p).unwrap(), enumerate_majority(j, p), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn binomial_coefficients() {
        assert_eq!(binomial(5, 2), 10.0);
        assert_eq!(binomial(20, 10), 184_756.0);
        assert_eq!(binomial(3, 4), 0.0);
    }

    proptest! {
        #[test]
        fn q_reflection(x in -8.0f64..8.0) {
            prop_assert!((q_function(x) + q_function(-x) - 1.0).abs() < 1e-15);
        }

        #[test]
        fn threshold_round_trip(samples in 1u64..10_000, snr_db in -20.0f64..5.0, target in 0.01f64..0.99) {
            let cfg = DetectorConfig::for_target(samples, snr_db, target).unwrap();
            prop_assert!((pd_single(&cfg) - target).abs() < 1e-9);
        }

        #[test]
        fn pf_below_pd(samples in 1u64..5000, sigma_s2 in 0.01f64..2.0, threshold in 0.0f64..10_000.0) {
            let cfg = detector(samples, sigma_s2, threshold);
            prop_assert!(pf_single(&cfg) <= pd_single(&cfg));
        }

        #[test]
        fn fused_monotone_in_p(j in 1u32..16, a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(fused_pd(j, lo).unwrap() <= fused_pd(j, hi).unwrap() + 1e-15);
        }

        #[test]
        fn odd_majority_amplifies(half in 0u32..8, p in 0.5f64..1.0) {
            let j = 2 * half + 1;
            prop_assert!(fused_pd(j + 2, p).unwrap() >= fused_pd(j, p).unwrap() - 1e-15);
        }

        #[test]
        fn fused_pd_dominates_fused_pf(j in 1u32..16, a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let (pf, pd) = if a <= b { (a, b) } else { (b, a) };
            let out = FusionOutcome::new(j, pd, pf).unwrap();
            prop_assert!(out.pd_fused >= out.pf_fused - 1e-15);
        }
    }
}
