//! Simulation of the reflected workload diffusion under a feedback policy.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::hjb::FeedbackPolicy;
use crate::lp::ModeCoefficients;
use crate::stats::McEstimate;

pub const DEFAULT_STEP: f64 = 1e-3;

/// Default horizon `12 / gamma`.
pub fn default_horizon(gamma: f64) -> f64 {
    12.0 / gamma
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WcpError {
    #[error("step must be positive and finite, got {0}")]
    Step(f64),
    #[error("horizon {horizon} must be at least the step {step}")]
    Horizon { horizon: f64, step: f64 },
    #[error("initial state must be nonnegative, got {0}")]
    InitialState(f64),
    #[error("at least two paths are required")]
    TooFewPaths,
    #[error("policy selects mode {mode} but only {count} modes exist")]
    UnknownMode { mode: usize, count: usize },
    #[error("mode {0} has nonpositive variance")]
    Variance(usize),
}

/// Time-stepping scheme for the reflected diffusion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// `Z' = max(0, Z + b dt + sigma sqrt(dt) N)`.
    ProjectedEuler,
    /// Reflects at the sampled minimum of the Brownian bridge over each step,
    /// which removes the boundary bias of the projected scheme.
    #[default]
    Bridge,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WcpParams {
    pub z0: f64,
    pub step: f64,
    pub horizon: f64,
    pub scheme: Scheme,
}

impl WcpParams {
    pub fn new(gamma: f64) -> Self {
        WcpParams {
            z0: 0.0,
            step: DEFAULT_STEP,
            horizon: default_horizon(gamma),
            scheme: Scheme::default(),
        }
    }

    fn validate(&self) -> Result<(), WcpError> {
        if !(self.step.is_finite() && self.step > 0.0) {
            return Err(WcpError::Step(self.step));
        }
        if !(self.horizon.is_finite() && self.horizon >= self.step) {
            return Err(WcpError::Horizon {
                horizon: self.horizon,
                step: self.step,
            });
        }
        if !(self.z0 >= 0.0) {
            return Err(WcpError::InitialState(self.z0));
        }
        Ok(())
    }

    /// Number of uniform steps covering the horizon.
    pub fn steps(&self) -> usize {
        (self.horizon / self.step - 1e-9).ceil().max(1.0) as usize
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplePath1D {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub local_time: Vec<f64>,
    /// Mode used on `[times[k], times[k+1])`.
    pub mode_trace: Vec<usize>,
    /// `z0 + sum of b dt + sigma dB` before reflection, one entry per time.
    pub free_path: Vec<f64>,
}

/// One-dimensional Skorokhod map on the half line for a sampled path:
/// `eta(t) = max_{s <= t} psi(s)^-`, `phi = psi + eta`.
pub fn skorokhod_map(psi: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut eta = Vec::with_capacity(psi.len());
    let mut running = 0.0f64;
    for &p in psi {
        running = running.max(-p);
        eta.push(running);
    }
    let phi = psi.iter().zip(&eta).map(|(p, e)| p + e).collect();
    (phi, eta)
}

fn check_modes(coefficients: &[ModeCoefficients], policy: &FeedbackPolicy) -> Result<(), WcpError> {
    if let Some(m) = coefficients.iter().position(|c| !(c.sigma2 > 0.0)) {
        return Err(WcpError::Variance(m));
    }
    if let Some(iv) = policy.intervals.iter().find(|iv| iv.mode >= coefficients.len()) {
        return Err(WcpError::UnknownMode {
            mode: iv.mode,
            count: coefficients.len(),
        });
    }
    Ok(())
}

fn path_rng(seed: u64, path_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path_id);
    rng
}

/// One step from `z` with mode coefficients `c`. Returns the new state, the
/// local time increment and the free increment.
#[inline]
fn advance(z: f64, c: ModeCoefficients, dt: f64, scheme: Scheme, rng: &mut ChaCha8Rng) -> (f64, f64, f64) {
    let n: f64 = rng.sample(StandardNormal);
    let x = c.b * dt + c.sigma() * dt.sqrt() * n;
    match scheme {
        Scheme::ProjectedEuler => {
            let push = (-(z + x)).max(0.0);
            (z + x + push, push, x)
        }
        Scheme::Bridge => {
            let u: f64 = 1.0 - rng.random::<f64>();
            let min = 0.5 * (x - (x * x - 2.0 * c.sigma2 * dt * u.ln()).sqrt());
            let push = (-(z + min)).max(0.0);
            (z + x + push, push, x)
        }
    }
}

/// Simulates one path; `path_id` selects an independent random stream.
pub fn simulate_wcp(
    policy: &FeedbackPolicy,
    coefficients: &[ModeCoefficients],
    params: &WcpParams,
    seed: u64,
    path_id: u64,
) -> Result<SamplePath1D, WcpError> {
    params.validate()?;
    check_modes(coefficients, policy)?;
    let steps = params.steps();
    let dt = params.dt();
    let mut rng = path_rng(seed, path_id);
    let mut path = SamplePath1D {
        times: Vec::with_capacity(steps + 1),
        values: Vec::with_capacity(steps + 1),
        local_time: Vec::with_capacity(steps + 1),
        mode_trace: Vec::with_capacity(steps),
        free_path: Vec::with_capacity(steps + 1),
    };
    let (mut z, mut l, mut free) = (params.z0, 0.0, params.z0);
    path.times.push(0.0);
    path.values.push(z);
    path.local_time.push(l);
    path.free_path.push(free);
    for k in 0..steps {
        let m = policy.mode_at(z);
        let (z_next, push, x) = advance(z, coefficients[m], dt, params.scheme, &mut rng);
        z = z_next;
        l += push;
        free += x;
        path.mode_trace.push(m);
        path.times.push((k + 1) as f64 * dt);
        path.values.push(z);
        path.local_time.push(l);
        path.free_path.push(free);
    }
    Ok(path)
}

/// Upper bound on `E int_T^inf e^{-gamma t} Z_t dt` from the coefficient
/// bounds, using `Z_t <= z0 + 2 B t + 2 sup_s |M_s|` and Doob's inequality.
pub fn truncation_bound(coefficients: &[ModeCoefficients], gamma: f64, z0: f64, horizon: f64) -> f64 {
    let b = coefficients.iter().map(|c| c.b.abs()).fold(0.0, f64::max);
    let s = coefficients.iter().map(|c| c.sigma()).fold(0.0, f64::max);
    let t = horizon.max(f64::MIN_POSITIVE);
    (-gamma * t).exp()
        * (z0 / gamma
            + 2.0 * b * (t / gamma + 1.0 / (gamma * gamma))
            + 4.0 * s * (t.sqrt() / gamma + 1.0 / (2.0 * gamma * gamma * t.sqrt())))
}

/// Discounted area `int_0^T e^{-gamma t} Z_t dt` of one path, trapezoidal.
fn path_cost(
    policy: &FeedbackPolicy,
    coefficients: &[ModeCoefficients],
    gamma: f64,
    params: &WcpParams,
    seed: u64,
    path_id: u64,
) -> f64 {
    let steps = params.steps();
    let dt = params.dt();
    let decay = (-gamma * dt).exp();
    let mut rng = path_rng(seed, path_id);
    let mut z = params.z0;
    let mut disc = 1.0;
    let mut acc = 0.0;
    for _ in 0..steps {
        let m = policy.mode_at(z);
        let (z_next, _, _) = advance(z, coefficients[m], dt, params.scheme, &mut rng);
        let disc_next = disc * decay;
        acc += 0.5 * dt * (disc * z + disc_next * z_next);
        z = z_next;
        disc = disc_next;
    }
    acc
}

/// Monte Carlo estimate of the discounted workload cost. Paths use streams
/// `0..n_paths` under `seed`, so estimates for different policies with the
/// same seed share random numbers.
pub fn estimate_wcp_cost(
    policy: &FeedbackPolicy,
    coefficients: &[ModeCoefficients],
    gamma: f64,
    params: &WcpParams,
    n_paths: usize,
    seed: u64,
) -> Result<McEstimate, WcpError> {
    params.validate()?;
    check_modes(coefficients, policy)?;
    if n_paths < 2 {
        return Err(WcpError::TooFewPaths);
    }
    let costs: Vec<f64> = (0..n_paths as u64)
        .into_par_iter()
        .map(|id| path_cost(policy, coefficients, gamma, params, seed, id))
        .collect();
    Ok(McEstimate::from_samples(
        &costs,
        params.dt(),
        params.horizon,
        truncation_bound(coefficients, gamma, params.z0, params.horizon),
    ))
}
