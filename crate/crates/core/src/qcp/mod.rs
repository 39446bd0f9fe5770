//! Discrete-event simulation of the `n`-th prelimit parallel server system,
//! its diffusion-scaled processes and the pathwise workload inequalities.

mod estimate;
mod policy;
mod renewal;
mod scaled;
mod sim;

pub use estimate::{
    estimate_qcp_cost, verify_lower_bound, BestAtN, BoundEntry, BoundReport, BoundVerdict,
};
pub use policy::{policy_allocation, PolicyKind, PolicySpec};
pub use renewal::{make_renewal_source, replication_rng, DistributionSpec, RenewalSource};
pub use scaled::{check_trace_inequalities, compute_scaled, InequalityReport, ScaledSeries};
pub use sim::{run_qcp, EventKind, QcpTrace};

use crate::lp::{AssumptionFailure, LpAnalysis};
use crate::model::PssInstance;
use crate::rational::to_f64;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QcpError {
    #[error(transparent)]
    Assumption(#[from] AssumptionFailure),
    #[error("scaling parameter n must be at least 1")]
    ScaleParameter,
    #[error("{what} is not positive at n = {n}; use n >= {min_n}")]
    NegativeRate { what: String, n: u64, min_n: u64 },
    #[error("horizon must be finite and nonnegative, got {0}")]
    Horizon(f64),
    #[error("invalid distribution: {0}")]
    Distribution(String),
    #[error("invalid policy: {0}")]
    Policy(String),
    #[error("at least two replications are required")]
    TooFewReps,
    #[error("workload identity residual {residual:.3e} exceeds {limit:.3e}: simulator bug")]
    IdentityBreach { residual: f64, limit: f64 },
}

/// Instance and LP data in floating point, with the `n`-dependent rates.
#[derive(Debug, Clone)]
pub(crate) struct SystemData {
    pub n: u64,
    pub sqrt_n: f64,
    pub num_classes: usize,
    pub num_servers: usize,
    pub class_of: Vec<usize>,
    pub server_of: Vec<usize>,
    pub class_acts: Vec<Vec<usize>>,
    pub server_acts: Vec<Vec<usize>>,
    pub mu: Vec<f64>,
    pub hat_lambda: Vec<f64>,
    pub hat_mu: Vec<f64>,
    pub lambda_n: Vec<f64>,
    pub mu_n: Vec<f64>,
    pub c2_arrival: Vec<f64>,
    pub c2_service: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub h: Vec<f64>,
    pub gamma: f64,
    pub q: usize,
    pub modes: Vec<Vec<f64>>,
    pub always_nonbasic: Vec<bool>,
}

/// Smallest `n` with `n a + sqrt(n) b > 0`, for `a > 0`.
fn min_admissible_n(a: f64, b: f64) -> u64 {
    if b >= 0.0 {
        return 1;
    }
    let mut n = ((b / a).powi(2)).floor().max(1.0) as u64;
    while (n as f64) * a + (n as f64).sqrt() * b <= 0.0 {
        n += 1;
    }
    n
}

impl SystemData {
    pub fn new(inst: &PssInstance, analysis: &LpAnalysis, n: u64) -> Result<Self, QcpError> {
        if n == 0 {
            return Err(QcpError::ScaleParameter);
        }
        let standing = analysis.standing()?;
        let nf = n as f64;
        let sqrt_n = nf.sqrt();
        let lambda: Vec<f64> = inst.lambda().iter().map(to_f64).collect();
        let mu: Vec<f64> = inst.mu().iter().map(to_f64).collect();
        let mut lambda_n = Vec::with_capacity(lambda.len());
        for (i, (&l, &lh)) in lambda.iter().zip(inst.hat_lambda()).enumerate() {
            let rate = nf * l + sqrt_n * lh;
            if !(rate > 0.0) {
                return Err(QcpError::NegativeRate {
                    what: format!("arrival rate of class {}", i + 1),
                    n,
                    min_n: min_admissible_n(l, lh),
                });
            }
            lambda_n.push(rate);
        }
        let mut mu_n = Vec::with_capacity(mu.len());
        for (j, (&m, &mh)) in mu.iter().zip(inst.hat_mu()).enumerate() {
            let rate = nf * m + sqrt_n * mh;
            if !(rate > 0.0) {
                return Err(QcpError::NegativeRate {
                    what: format!("service rate of activity {}", inst.activity(j)),
                    n,
                    min_n: min_admissible_n(m, mh),
                });
            }
            mu_n.push(rate);
        }
        let acts = inst.activities();
        Ok(SystemData {
            n,
            sqrt_n,
            num_classes: inst.num_classes(),
            num_servers: inst.num_servers(),
            class_of: acts.iter().map(|a| a.class).collect(),
            server_of: acts.iter().map(|a| a.server).collect(),
            class_acts: (0..inst.num_classes())
                .map(|i| inst.class_activities(i).to_vec())
                .collect(),
            server_acts: (0..inst.num_servers())
                .map(|k| inst.server_activities(k).to_vec())
                .collect(),
            mu,
            hat_lambda: inst.hat_lambda().to_vec(),
            hat_mu: inst.hat_mu().to_vec(),
            lambda_n,
            mu_n,
            c2_arrival: inst.c2_arrival().to_vec(),
            c2_service: inst.c2_service().to_vec(),
            y: standing.dual.y_f64(),
            z: standing.dual.z_f64(),
            h: inst.h().to_vec(),
            gamma: inst.gamma(),
            q: standing.q,
            modes: standing.modes.iter().map(|m| m.xi_f64()).collect(),
            always_nonbasic: standing
                .classification
                .iter()
                .map(|c| *c == crate::lp::ActivityClass::AlwaysNonbasic)
                .collect(),
        })
    }

    pub fn num_activities(&self) -> usize {
        self.class_of.len()
    }

    /// `y . x / sqrt(n)` for integer queue lengths.
    pub fn workload(&self, queue: &[i64]) -> f64 {
        queue
            .iter()
            .zip(&self.y)
            .map(|(&x, &y)| y * x as f64)
            .sum::<f64>()
            / self.sqrt_n
    }

    /// `h . x / sqrt(n)`.
    pub fn holding_cost(&self, queue: &[i64]) -> f64 {
        queue
            .iter()
            .zip(&self.h)
            .map(|(&x, &h)| h * x as f64)
            .sum::<f64>()
            / self.sqrt_n
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_n() {
        assert_eq!(min_admissible_n(1.0, 0.5), 1);
        // n - 3 sqrt(n) > 0 needs n > 9
        assert_eq!(min_admissible_n(1.0, -3.0), 10);
        assert_eq!(min_admissible_n(2.0, -1.0), 1);
    }
}
