//! Monte Carlo estimates of the scaled discounted queueing cost.

use rayon::prelude::*;
use serde::Serialize;

use super::sim::{simulate, CostAccumulator};
use super::{PolicySpec, QcpError, SystemData};
use crate::hjb::{compute_v0, HjbSolution};
use crate::lp::LpAnalysis;
use crate::model::PssInstance;
use crate::stats::{mean_and_se, McEstimate};

/// Estimates `E int_0^horizon e^{-gamma t} h . X^n(t) / sqrt(n) dt` from
/// replications `0..n_reps`. Integration between events is exact. The
/// reported truncation bound is `e^{-gamma T} E[H^n_T] / gamma`, with the
/// expectation taken from the replications.
pub fn estimate_qcp_cost(
    inst: &PssInstance,
    analysis: &LpAnalysis,
    n: u64,
    policy: &PolicySpec,
    n_reps: usize,
    horizon: f64,
    seed: u64,
) -> Result<McEstimate, QcpError> {
    let data = SystemData::new(inst, analysis, n)?;
    policy.validate(inst, analysis)?;
    if n_reps < 2 {
        return Err(QcpError::TooFewReps);
    }
    if !(horizon.is_finite() && horizon >= 0.0) {
        return Err(QcpError::Horizon(horizon));
    }
    let results: Vec<(f64, f64)> = (0..n_reps as u64)
        .into_par_iter()
        .map(|rep| {
            let mut acc = CostAccumulator {
                data: &data,
                cost: 0.0,
                final_cost_rate: 0.0,
            };
            simulate(&data, policy, horizon, seed, rep, &mut acc).map(|_| (acc.cost, acc.final_cost_rate))
        })
        .collect::<Result<_, _>>()?;
    let costs: Vec<f64> = results.iter().map(|r| r.0).collect();
    let finals: Vec<f64> = results.iter().map(|r| r.1).collect();
    let (tail_rate, _) = mean_and_se(&finals);
    let truncation = (-data.gamma * horizon).exp() * tail_rate / data.gamma;
    Ok(McEstimate::from_samples(&costs, 0.0, horizon, truncation))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum BoundVerdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundEntry {
    pub n: u64,
    pub policy: String,
    pub estimate: McEstimate,
    /// `J^n - V0`.
    pub margin: f64,
    /// `margin >= -2 half_width_95`.
    pub pass: bool,
}

/// Cheapest policy at one `n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BestAtN {
    pub n: u64,
    pub policy: String,
    pub cost: f64,
    /// `(cost - V0) / V0`.
    pub relative_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub v0: f64,
    pub u0: f64,
    pub q: usize,
    pub horizon: f64,
    pub n_reps: usize,
    pub seed: u64,
    pub entries: Vec<BoundEntry>,
    pub best: Vec<BestAtN>,
    /// Whether the best cost is nonincreasing along the sorted `n` values.
    pub best_nonincreasing: bool,
    pub verdict: BoundVerdict,
}

/// Estimates the cost of every policy at every `n` and compares with `V0`.
/// All pairs share `seed`, so policies are compared under common random
/// numbers.
#[allow(clippy::too_many_arguments)]
pub fn verify_lower_bound(
    inst: &PssInstance,
    analysis: &LpAnalysis,
    hjb: &HjbSolution,
    n_list: &[u64],
    policies: &[PolicySpec],
    n_reps: usize,
    horizon: f64,
    seed: u64,
) -> Result<BoundReport, QcpError> {
    let v0 = compute_v0(inst, analysis, hjb)?;
    let q = analysis.standing()?.q;
    let mut entries = Vec::new();
    let mut best = Vec::new();
    for &n in n_list {
        let mut best_here: Option<BestAtN> = None;
        for policy in policies {
            let estimate = estimate_qcp_cost(inst, analysis, n, policy, n_reps, horizon, seed)?;
            let margin = estimate.mean - v0;
            let label = policy.label();
            if best_here.as_ref().is_none_or(|b| estimate.mean < b.cost) {
                best_here = Some(BestAtN {
                    n,
                    policy: label.clone(),
                    cost: estimate.mean,
                    relative_gap: (estimate.mean - v0) / v0,
                });
            }
            entries.push(BoundEntry {
                n,
                policy: label,
                pass: margin >= -2.0 * estimate.half_width_95,
                estimate,
                margin,
            });
        }
        best.extend(best_here);
    }
    let mut sorted = best.clone();
    sorted.sort_by_key(|b| b.n);
    let best_nonincreasing = sorted.windows(2).all(|w| w[1].cost <= w[0].cost);
    let verdict = if entries.iter().all(|e| e.pass) {
        BoundVerdict::Pass
    } else {
        BoundVerdict::Fail
    };
    Ok(BoundReport {
        v0,
        u0: hjb.u0,
        q,
        horizon,
        n_reps,
        seed,
        entries,
        best,
        best_nonincreasing,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hjb::{solve_hjb, HjbConfig};
    use crate::instances;
    use crate::lp::{analyze, AssumptionFailure};

    #[test]
    fn zero_horizon_costs_nothing() {
        let inst = instances::mm1();
        let a = analyze(&inst).unwrap();
        let e = estimate_qcp_cost(&inst, &a, 100, &PolicySpec::static_mode(0), 4, 0.0, 1).unwrap();
        assert_eq!(e.mean, 0.0);
        assert_eq!(e.half_width_95, 0.0);
    }

    #[test]
    fn estimate_is_reproducible() {
        let inst = instances::example_a1();
        let a = analyze(&inst).unwrap();
        let p = PolicySpec::c_mu(&inst);
        let x = estimate_qcp_cost(&inst, &a, 25, &p, 8, 3.0, 9).unwrap();
        let y = estimate_qcp_cost(&inst, &a, 25, &p, 8, 3.0, 9).unwrap();
        assert_eq!(x, y);
        assert!(x.mean > 0.0 && x.truncation_bound > 0.0);
    }

    #[test]
    fn refuses_without_unique_dual() {
        let inst = instances::example_d();
        let a = analyze(&inst).unwrap();
        let sol = solve_hjb(
            &[crate::lp::ModeCoefficients { b: 0.0, sigma2: 1.0 }],
            1.0,
            &HjbConfig::default_for(&[crate::lp::ModeCoefficients { b: 0.0, sigma2: 1.0 }], 1.0),
        )
        .unwrap();
        let err = verify_lower_bound(&inst, &a, &sol, &[25], &[PolicySpec::static_mode(0)], 2, 1.0, 0).unwrap_err();
        assert_eq!(err, QcpError::Assumption(AssumptionFailure::DualNotUnique));
        assert_eq!(err.to_string(), "dual not unique");
    }

    #[test]
    fn too_few_reps() {
        let inst = instances::mm1();
        let a = analyze(&inst).unwrap();
        assert_eq!(
            estimate_qcp_cost(&inst, &a, 4, &PolicySpec::static_mode(0), 1, 1.0, 0),
            Err(QcpError::TooFewReps)
        );
    }
}
