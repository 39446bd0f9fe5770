//! Renewal streams for arrivals and services.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Gamma;
use serde::{Deserialize, Serialize};

use super::QcpError;

/// Interarrival law with mean one before rate scaling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum DistributionSpec {
    /// Gamma with shape `1/scv` and scale `scv`.
    GammaRenewal { scv: f64 },
    Deterministic,
}

impl DistributionSpec {
    /// Gamma for positive SCV, deterministic for zero.
    pub fn for_scv(scv: f64) -> Self {
        if scv == 0.0 {
            DistributionSpec::Deterministic
        } else {
            DistributionSpec::GammaRenewal { scv }
        }
    }

    pub fn scv(&self) -> f64 {
        match *self {
            DistributionSpec::GammaRenewal { scv } => scv,
            DistributionSpec::Deterministic => 0.0,
        }
    }
}

#[derive(Debug, Clone)]
enum Law {
    Gamma(Gamma<f64>),
    Fixed(f64),
}

/// An i.i.d. stream of interarrival times with mean `1/rate`.
#[derive(Debug, Clone)]
pub struct RenewalSource {
    law: Law,
    rng: ChaCha8Rng,
}

impl RenewalSource {
    pub fn next_interval(&mut self) -> f64 {
        match &self.law {
            Law::Gamma(g) => self.rng.sample(g),
            Law::Fixed(v) => *v,
        }
    }
}

impl Iterator for RenewalSource {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        Some(self.next_interval())
    }
}

/// 256-bit ChaCha key for replication `rep` under `seed`.
pub fn replication_rng(seed: u64, rep: u64, stream: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&rep.to_le_bytes());
    key[16..24].copy_from_slice(b"pss-qcp\0");
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream);
    rng
}

pub fn make_renewal_source(
    spec: DistributionSpec,
    rate: f64,
    rng: ChaCha8Rng,
) -> Result<RenewalSource, QcpError> {
    if !(rate.is_finite() && rate > 0.0) {
        return Err(QcpError::Distribution(format!("rate must be positive, got {rate}")));
    }
    let law = match spec {
        DistributionSpec::GammaRenewal { scv } => {
            if !(scv.is_finite() && scv > 0.0) {
                return Err(QcpError::Distribution(format!(
                    "gamma renewal needs a positive finite SCV, got {scv}"
                )));
            }
            let g = Gamma::new(1.0 / scv, scv / rate)
                .map_err(|e| QcpError::Distribution(e.to_string()))?;
            Law::Gamma(g)
        }
        DistributionSpec::Deterministic => Law::Fixed(1.0 / rate),
    };
    Ok(RenewalSource { law, rng })
}
