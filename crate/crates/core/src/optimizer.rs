//! Exhaustive search for the team count and team size that maximize
//! achievable throughput.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::{evaluate, Feasibility, MetricsReport, Regime, Scenario, TrafficParams};
use crate::channel::OnOffChannel;
use crate::error::{invalid, Constraint, Error, Result};

/// One `(U, q)` point within the team budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub teams: usize,
    pub team_size: usize,
    pub throughput: f64,
    pub overhead: f64,
    pub achievable: f64,
    pub feasibility: Feasibility,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub regime: Regime,
    pub best_u: usize,
    pub best_q: usize,
    pub best_value: f64,
    pub best: MetricsReport,
    /// Every point with `q * U <= K`, ordered by `q` then `U`.
    pub feasible_grid: Vec<GridPoint>,
    /// Constraints that exclude a neighbour of the optimum with a larger
    /// objective.
    pub binding_constraints: Vec<Constraint>,
}

fn with_teams(sc: &Scenario, teams: usize, team_size: usize) -> Scenario {
    Scenario {
        teams,
        team_size,
        ..sc.clone()
    }
}

fn better(a: &GridPoint, b: &GridPoint) -> bool {
    let ka = (a.teams * a.team_size, a.team_size);
    let kb = (b.teams * b.team_size, b.team_size);
    a.achievable > b.achievable || (a.achievable == b.achievable && ka < kb)
}

/// Maximizes achievable throughput over `q in 1..=K` and
/// `U in 1..=min(C, K / q)` subject to the fused false-alarm and detection
/// thresholds.
pub fn optimize(sc: &Scenario, regime: Regime) -> Result<OptimizationResult> {
    let template = with_teams(sc, 1, 1);
    template.validate()?;
    let budget: Vec<(usize, usize)> = (1..=sc.sus)
        .flat_map(|q| (1..=sc.channels.min(sc.sus / q)).map(move |u| (u, q)))
        .collect();
    if budget.is_empty() {
        return Err(Error::NoFeasibleConfiguration(Constraint::TeamBudget));
    }
    let grid = budget
        .par_iter()
        .map(|&(u, q)| {
            let r = evaluate(&with_teams(sc, u, q), regime)?;
            Ok(GridPoint {
                teams: u,
                team_size: q,
                throughput: r.throughput,
                overhead: r.overhead,
                achievable: r.achievable,
                feasibility: r.feasibility,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    if !grid.iter().any(|g| g.feasibility.false_alarm) {
        return Err(Error::NoFeasibleConfiguration(Constraint::FalseAlarm));
    }
    let best = grid
        .iter()
        .filter(|g| g.feasibility.feasible())
        .fold(None::<&GridPoint>, |acc, g| match acc {
            Some(b) if !better(g, b) => Some(b),
            _ => Some(g),
        })
        .ok_or(Error::NoFeasibleConfiguration(Constraint::Detection))?;

    let binding = binding_constraints(sc, regime, best)?;
    Ok(OptimizationResult {
        regime,
        best_u: best.teams,
        best_q: best.team_size,
        best_value: best.achievable,
        best: evaluate(&with_teams(sc, best.teams, best.team_size), regime)?,
        feasible_grid: grid.clone(),
        binding_constraints: binding,
    })
}

fn binding_constraints(sc: &Scenario, regime: Regime, best: &GridPoint) -> Result<Vec<Constraint>> {
    let (u, q) = (best.teams as isize, best.team_size as isize);
    let mut out = Vec::new();
    for (du, dq) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
        let (nu, nq) = (u + du, q + dq);
        if nu < 1 || nq < 1 || nu as usize > sc.channels {
            continue;
        }
        let point = with_teams(sc, nu as usize, nq as usize);
        let report = evaluate(&point, regime)?;
        if report.achievable <= best.achievable {
            continue;
        }
        let f = report.feasibility;
        for (ok, c) in [
            (f.team_budget, Constraint::TeamBudget),
            (f.false_alarm, Constraint::FalseAlarm),
            (f.detection, Constraint::Detection),
        ] {
            if !ok && !out.contains(&c) {
                out.push(c);
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Scenario parameter varied by [`sweep`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    /// Channel availability; `mu_off` is held fixed.
    Availability,
    /// Number of candidate cooperators.
    Sus,
    PfThreshold,
    /// Traffic load of the non-saturated regimes.
    Load,
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "p" | "availability" => Ok(Self::Availability),
            "K" | "k" | "sus" => Ok(Self::Sus),
            "pf_th" | "pf-threshold" | "pf_threshold" => Ok(Self::PfThreshold),
            "rho" | "load" => Ok(Self::Load),
            other => Err(invalid("axis", format!("unknown sweep axis `{other}`"))),
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Availability => "p",
            Self::Sus => "K",
            Self::PfThreshold => "pf_th",
            Self::Load => "rho",
        })
    }
}

/// Outcome of one sweep value; errors are kept per point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<OptimizationResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Applies one sweep value to a scenario.
pub fn apply_axis(sc: &Scenario, axis: SweepAxis, value: f64) -> Result<Scenario> {
    let mut out = sc.clone();
    match axis {
        SweepAxis::Availability => {
            out.channel = OnOffChannel::with_availability(value, sc.channel.mu_off())?
        }
        SweepAxis::Sus => {
            if !(value >= 1.0 && value.fract() == 0.0) {
                return Err(invalid("sus", format!("{value} is not a positive integer")));
            }
            out.sus = value as usize;
        }
        SweepAxis::PfThreshold => out.pf_threshold = value,
        SweepAxis::Load => out.traffic = Some(TrafficParams::new(value)?),
    }
    out.validate()?;
    Ok(out)
}

/// Optimizes the scenario independently at each value of `axis`.
pub fn sweep(sc: &Scenario, regime: Regime, axis: SweepAxis, values: &[f64]) -> Result<Vec<SweepPoint>> {
    if values.is_empty() {
        return Err(invalid("values", "a sweep needs at least one value"));
    }
    Ok(values
        .iter()
        .map(|&value| {
            match apply_axis(sc, axis, value).and_then(|s| optimize(&s, regime)) {
                Ok(r) => SweepPoint {
                    value,
                    result: Some(r),
                    error: None,
                },
                Err(e) => SweepPoint {
                    value,
                    result: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::{fused_pd, fused_pf, SensingProbabilities};
    use proptest::prelude::*;

    fn with_sensing(pd: f64, pf: f64) -> Scenario {
        Scenario {
            sensing: SensingProbabilities { pd, pf },
            ..Scenario::reference()
        }
    }

    /// Straight double loop over the grid with the documented tie rule.
    fn brute_force(sc: &Scenario, regime: Regime) -> Option<(usize, usize, f64)> {
        let mut best: Option<(usize, usize, f64)> = None;
        for q in 1..=sc.sus {
            let pf = fused_pf(q as u32, sc.sensing.pf).unwrap();
            let pd = fused_pd(q as u32, sc.sensing.pd).unwrap();
            if pf > sc.pf_threshold || pd < sc.pd_threshold {
                continue;
            }
            for u in 1..=sc.channels {
                if u * q > sc.sus {
                    break;
                }
                let mut s = sc.clone();
                s.teams = u;
                s.team_size = q;
                let g = evaluate(&s, regime).unwrap().achievable;
                let replace = match best {
                    None => true,
                    Some((bu, bq, bg)) => g > bg || (g == bg && (u * q, q) < (bu * bq, bq)),
                };
                if replace {
                    best = Some((u, q, g));
                }
            }
        }
        best
    }

    #[test]
    fn single_cooperator_is_forced() {
        let mut sc = with_sensing(0.9, 0.01);
        sc.sus = 1;
        let r = optimize(&sc, Regime::SAT_TI).unwrap();
        assert_eq!((r.best_u, r.best_q), (1, 1));
        assert_eq!(r.feasible_grid.len(), 1);
    }

    #[test]
    fn minimum_feasible_team_size_is_three() {
        let sc = with_sensing(0.9, 0.1);
        let min_q = (1..=20)
            .find(|&q| {
                fused_pf(q, 0.1).unwrap() <= 0.05 && fused_pd(q, 0.9).unwrap() >= 0.9
            })
            .unwrap();
        assert_eq!(min_q, 3);
        let r = optimize(&sc, Regime::SAT_TI).unwrap();
        let feasible_q = r
            .feasible_grid
            .iter()
            .filter(|g| g.feasibility.feasible())
            .map(|g| g.team_size)
            .min()
            .unwrap();
        assert_eq!(feasible_q, 3);
    }

    #[test]
    fn optimum_dominates_corner_policies() {
        let sc = with_sensing(0.9, 0.1);
        for regime in Regime::ALL {
            let r = optimize(&sc, regime).unwrap();
            for g in r.feasible_grid.iter().filter(|g| g.feasibility.feasible()) {
                assert!(r.best_value >= g.achievable);
            }
            assert!(r.best_u * r.best_q <= sc.sus);
        }
    }

    #[test]
    fn infeasible_grids_name_the_constraint() {
        let mut sc = with_sensing(0.9, 0.6);
        assert_eq!(
            optimize(&sc, Regime::SAT_TI).unwrap_err(),
            Error::NoFeasibleConfiguration(Constraint::FalseAlarm)
        );
        sc.sensing = SensingProbabilities { pd: 0.3, pf: 0.01 };
        assert_eq!(
            optimize(&sc, Regime::SAT_TI).unwrap_err(),
            Error::NoFeasibleConfiguration(Constraint::Detection)
        );
    }

    #[test]
    fn binding_constraint_at_reference_point() {
        let r = optimize(&Scenario::reference(), Regime::SAT_TI).unwrap();
        // A third team would discover channels sooner but needs 27 cooperators.
        assert_eq!(r.binding_constraints, vec![Constraint::TeamBudget]);
    }

    #[test]
    fn sweep_examples() {
        let sc = Scenario::reference();
        let pts = sweep(&sc, Regime::SAT_TI, SweepAxis::Availability, &[0.5, 2.0 / 3.0]).unwrap();
        let a = pts[0].result.as_ref().unwrap().best_value;
        let b = pts[1].result.as_ref().unwrap().best_value;
        assert!(b >= a);
        let single = sweep(&sc, Regime::SAT_TI, SweepAxis::Availability, &[0.5]).unwrap();
        assert_eq!(single[0].result.as_ref().unwrap(), &optimize(&sc, Regime::SAT_TI).unwrap());
        let bad = sweep(&sc, Regime::NONSAT_TI, SweepAxis::Load, &[0.5, 1.2]).unwrap();
        assert!(bad[0].result.is_some());
        assert!(bad[1].error.as_ref().unwrap().contains("unstable"));
        assert!(sweep(&sc, Regime::SAT_TI, SweepAxis::Load, &[]).is_err());
    }

    #[test]
    fn tightening_pf_threshold_raises_min_team_size() {
        let sc = with_sensing(0.9, 0.1);
        let values = [0.5, 0.2, 0.1, 0.05, 0.02, 0.01];
        let mut prev = 0;
        for p in sweep(&sc, Regime::SAT_TI, SweepAxis::PfThreshold, &values).unwrap() {
            let r = p.result.unwrap();
            let min_q = r
                .feasible_grid
                .iter()
                .filter(|g| g.feasibility.feasible())
                .map(|g| g.team_size)
                .min()
                .unwrap();
            let oracle = (1..=20u32)
                .find(|&q| fused_pf(q, 0.1).unwrap() <= p.value && fused_pd(q, 0.9).unwrap() >= 0.9)
                .unwrap() as usize;
            assert_eq!(min_q, oracle);
            assert!(min_q >= prev);
            prev = min_q;
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn grid_search_matches_brute_force(
            channels in 1usize..=10, sus in 1usize..=16, pd in 0.6f64..0.99, pf in 0.01f64..0.3,
            p in 0.2f64..0.9, regime_idx in 0usize..4,
        ) {
            let mut sc = with_sensing(pd, pf);
            sc.channels = channels;
            sc.sus = sus;
            sc.channel = OnOffChannel::with_availability(p, 0.01).unwrap();
            let regime = Regime::ALL[regime_idx];
            match (optimize(&sc, regime), brute_force(&sc, regime)) {
                (Ok(r), Some((u, q, g))) => {
                    prop_assert_eq!((r.best_u, r.best_q), (u, q));
                    prop_assert_eq!(r.best_value, g);
                    let f = r.best.feasibility;
                    prop_assert_eq!(f.false_alarm, fused_pf(q as u32, pf).unwrap() <= sc.pf_threshold);
                    prop_assert_eq!(f.detection, fused_pd(q as u32, pd).unwrap() >= sc.pd_threshold);
                }
                (Err(Error::NoFeasibleConfiguration(_)), None) => {}
                (a, b) => prop_assert!(false, "optimizer {:?} vs brute force {:?}", a.map(|r| (r.best_u, r.best_q)), b),
            }
        }
    }
}
