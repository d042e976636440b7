//! Cooperator selection and the order statistics of selected channel rates.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::channel::{OnOffChannel, RateChain};
use crate::detection::binomial;
use crate::error::{invalid, Error, Result};

/// A secondary user that answered a cooperation request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateSu {
    pub id: usize,
    /// Seconds since this SU last sensed its in-use channel.
    pub tau: f64,
    pub used_channel: OnOffChannel,
    /// Data rate of the in-use channel (bytes/s).
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// Selected ids, best first.
    pub chosen: Vec<usize>,
    /// Ordering key of each chosen id, aligned with `chosen`.
    pub score: Vec<f64>,
}

fn validate(candidates: &[CandidateSu], count: usize) -> Result<()> {
    if count == 0 {
        return Err(invalid("count", "must select at least one cooperator"));
    }
    if count > candidates.len() {
        return Err(Error::InsufficientCandidates {
            requested: count,
            available: candidates.len(),
        });
    }
    for c in candidates {
        if !(c.tau.is_finite() && c.tau >= 0.0) {
            return Err(invalid("tau", format!("candidate {} has tau {}", c.id, c.tau)));
        }
        if !(c.rate.is_finite() && c.rate > 0.0) {
            return Err(invalid("rate", format!("candidate {} has rate {}", c.id, c.rate)));
        }
    }
    Ok(())
}

fn select_by(
    candidates: &[CandidateSu],
    count: usize,
    key: impl Fn(&CandidateSu) -> Result<f64>,
    order: Ordering,
) -> Result<SelectionResult> {
    validate(candidates, count)?;
    let mut scored = candidates
        .iter()
        .map(|c| Ok((c.id, key(c)?)))
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(|a, b| {
        let primary = a.1.total_cmp(&b.1);
        let primary = if order == Ordering::Greater {
            primary.reverse()
        } else {
            primary
        };
        primary.then(a.0.cmp(&b.0))
    });
    scored.truncate(count);
    Ok(SelectionResult {
        chosen: scored.iter().map(|s| s.0).collect(),
        score: scored.iter().map(|s| s.1).collect(),
    })
}

/// Picks the `count` candidates whose in-use channel is most likely to have
/// been reclaimed by its primary user, i.e. highest `p01(tau)` first.
pub fn select_time_invariant(candidates: &[CandidateSu], count: usize) -> Result<SelectionResult> {
    select_by(candidates, count, |c| c.used_channel.p01(c.tau), Ordering::Greater)
}

/// Picks the `count` candidates with the smallest expected loss
/// `p00(tau) * rate`, lowest first.
pub fn select_time_varying(candidates: &[CandidateSu], count: usize) -> Result<SelectionResult> {
    select_by(
        candidates,
        count,
        |c| Ok(c.used_channel.p00(c.tau)? * c.rate),
        Ordering::Less,
    )
}

fn check_rank(k: usize, sample: usize) -> Result<()> {
    if sample == 0 {
        return Err(invalid("K", "sample size must be at least 1"));
    }
    if k == 0 || k > sample {
        return Err(invalid("k", format!("rank {k} outside 1..={sample}")));
    }
    Ok(())
}

/// Probability that at least `k` of `sample` draws fall at or below a level
/// whose CDF value is `g`.
fn at_least_k_below(k: usize, sample: usize, g: f64) -> f64 {
    (k..=sample)
        .map(|j| {
            binomial(sample as u32, j as u32) * g.powi(j as i32) * (1.0 - g).powi((sample - j) as i32)
        })
        .sum()
}

/// Distribution over rate indices of the `k`-th smallest of `sample`
/// independent draws from `pi`.
pub fn order_stat_rate_pmf(k: usize, sample: usize, pi: &[f64]) -> Result<Vec<f64>> {
    check_rank(k, sample)?;
    if pi.is_empty() || pi.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(invalid("pi", "must be a non-empty vector of probabilities"));
    }
    let total: f64 = pi.iter().sum();
    if (total - 1.0).abs() > 1e-10 {
        return Err(invalid("pi", format!("sums to {total}, not 1")));
    }
    let mut cdf = 0.0;
    let mut prev = 0.0;
    let last = pi.len() - 1;
    Ok(pi
        .iter()
        .enumerate()
        .map(|(n, x)| {
            cdf += x;
            // Pin the top of the CDF so rounding never leaks mass.
            let g = if n == last { 1.0 } else { cdf.min(1.0) };
            let f = at_least_k_below(k, sample, g);
            let mass = (f - prev).max(0.0);
            prev = f;
            mass
        })
        .collect())
}

/// Expected data rate of the `k`-th lowest-rate channel among `sample`
/// draws from the chain's stationary law.
pub fn expected_selected_rate(k: usize, sample: usize, rc: &RateChain) -> Result<f64> {
    let pmf = order_stat_rate_pmf(k, sample, &rc.stationary()?)?;
    Ok(pmf.iter().zip(rc.rates()).map(|(w, r)| w * r).sum())
}
