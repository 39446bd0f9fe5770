//! The workload control problem: HJB solution, feedback policy and `V0`.
//!
//! The equation solved is
//!
//! ```text
//! min_m [ b_m u'(z) + sigma2_m / 2 u''(z) ] + z - gamma u(z) = 0,   z > 0,
//! u'(0) = 0,   u'(z_max) = 1 / gamma,
//! ```
//!
//! on a uniform grid with `grid_n` cells, using Howard policy iteration:
//! solve the tridiagonal system for a fixed mode field, then re-select the
//! minimizing mode pointwise, until the field stops changing.
//!
//! The first-derivative stencil is central wherever the cell Peclet number
//! `|b| dz / sigma2` is at most one (the operator is then still an
//! M-matrix) and upwind elsewhere.

use serde::{Deserialize, Serialize};

use crate::lp::{AssumptionFailure, LpAnalysis, ModeCoefficients};
use crate::model::PssInstance;
use crate::rational::to_f64;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HjbError {
    #[error("invalid HJB configuration: {0}")]
    Config(String),
    #[error("policy iteration did not converge in {iterations} iterations (last residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("residual {residual:.3e} exceeds tolerance {tol:.1e}; refine the grid (grid_n = {grid_n})")]
    Tolerance { residual: f64, tol: f64, grid_n: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HjbConfig {
    pub z_max: f64,
    pub grid_n: usize,
    pub tol_policy: f64,
    pub tol_residual: f64,
    pub max_iterations: usize,
}

impl HjbConfig {
    pub const DEFAULT_GRID_N: usize = 4000;
    pub const DEFAULT_TOL_RESIDUAL: f64 = 1e-7;
    pub const DEFAULT_MAX_ITERATIONS: usize = 100;

    /// `z_max = 20 max sigma / sqrt(gamma) + 20 max |b| / gamma`.
    pub fn default_z_max(coefficients: &[ModeCoefficients], gamma: f64) -> f64 {
        let s = coefficients.iter().map(|c| c.sigma()).fold(0.0, f64::max);
        let b = coefficients.iter().map(|c| c.b.abs()).fold(0.0, f64::max);
        20.0 * s / gamma.sqrt() + 20.0 * b / gamma
    }

    pub fn default_for(coefficients: &[ModeCoefficients], gamma: f64) -> HjbConfig {
        HjbConfig {
            z_max: Self::default_z_max(coefficients, gamma),
            grid_n: Self::DEFAULT_GRID_N,
            tol_policy: 1e-12,
            tol_residual: Self::DEFAULT_TOL_RESIDUAL,
            max_iterations: Self::DEFAULT_MAX_ITERATIONS,
        }
    }

    pub fn dz(&self) -> f64 {
        self.z_max / self.grid_n as f64
    }

    fn validate(&self) -> Result<(), HjbError> {
        if !(self.z_max.is_finite() && self.z_max > 0.0) {
            return Err(HjbError::Config(format!("z_max must be positive, got {}", self.z_max)));
        }
        if self.grid_n < 3 {
            return Err(HjbError::Config(format!("grid_n must be >= 3, got {}", self.grid_n)));
        }
        if !(self.tol_policy > 0.0 && self.tol_residual > 0.0) {
            return Err(HjbError::Config("tolerances must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(HjbError::Config("max_iterations must be positive".into()));
        }
        Ok(())
    }
}

/// Closed-form value of the single-mode problem:
/// `u(z) = c1 + c2 z + (c2 / c3) exp(-c3 z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SingleModeValue {
    pub b: f64,
    pub sigma2: f64,
    pub gamma: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl SingleModeValue {
    pub fn u(&self, z: f64) -> f64 {
        self.c1 + self.c2 * z + self.c2 / self.c3 * (-self.c3 * z).exp()
    }

    pub fn du(&self, z: f64) -> f64 {
        self.c2 * (1.0 - (-self.c3 * z).exp())
    }

    pub fn d2u(&self, z: f64) -> f64 {
        self.c2 * self.c3 * (-self.c3 * z).exp()
    }

    pub fn u0(&self) -> f64 {
        self.c1 + self.c2 / self.c3
    }

    /// `b u' + sigma2/2 u'' + z - gamma u`, identically zero up to rounding.
    pub fn ode_residual(&self, z: f64) -> f64 {
        self.b * self.du(z) + 0.5 * self.sigma2 * self.d2u(z) + z - self.gamma * self.u(z)
    }
}

pub fn single_mode_value(b: f64, sigma2: f64, gamma: f64) -> SingleModeValue {
    assert!(sigma2 > 0.0 && gamma > 0.0, "sigma2 and gamma must be positive");
    let c3 = (b + (b * b + 2.0 * sigma2 * gamma).sqrt()) / sigma2;
    SingleModeValue {
        b,
        sigma2,
        gamma,
        c1: b / (gamma * gamma),
        c2: 1.0 / gamma,
        c3,
    }
}

/// A mode that is best in both drift and volatility, if one exists. Ties go
/// to the smallest index.
pub fn dominant_mode(coefficients: &[ModeCoefficients]) -> Option<usize> {
    (0..coefficients.len()).find(|&m0| {
        let c0 = coefficients[m0];
        coefficients
            .iter()
            .all(|c| c0.b <= c.b && c0.sigma2 <= c.sigma2)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HjbSolution {
    pub grid: Vec<f64>,
    pub u: Vec<f64>,
    pub du: Vec<f64>,
    pub d2u: Vec<f64>,
    /// Selected mode (0-based) at each grid point.
    pub mode_at: Vec<usize>,
    pub switch_points: Vec<f64>,
    pub u0: f64,
    /// Max of `|min_m H_m + z - gamma u|` over interior points.
    pub residual_max: f64,
    /// Min over points and non-selected modes of `H_m - H_selected`, with
    /// differences inside the rounding noise of the operator counted as ties
    /// (zero).
    pub min_excess: f64,
    /// The same minimum without the noise floor.
    pub min_excess_raw: f64,
    pub iterations: usize,
    pub gamma: f64,
    pub config: HjbConfig,
}

/// Discrete operator of one mode at one interior point: coefficients of
/// `u[i-1]`, `u[i]`, `u[i+1]` in `b D1 u + sigma2/2 D2 u - gamma u`.
#[derive(Clone, Copy)]
struct Stencil {
    lower: f64,
    diag: f64,
    upper: f64,
}

fn interior_stencil(c: ModeCoefficients, gamma: f64, dz: f64) -> Stencil {
    let diff = 0.5 * c.sigma2 / (dz * dz);
    if c.b.abs() * dz <= c.sigma2 {
        let adv = 0.5 * c.b / dz;
        Stencil {
            lower: diff - adv,
            diag: -2.0 * diff - gamma,
            upper: diff + adv,
        }
    } else if c.b > 0.0 {
        Stencil {
            lower: diff,
            diag: -2.0 * diff - c.b / dz - gamma,
            upper: diff + c.b / dz,
        }
    } else {
        Stencil {
            lower: diff - c.b / dz,
            diag: -2.0 * diff + c.b / dz - gamma,
            upper: diff,
        }
    }
}

struct Discretization<'a> {
    coefficients: &'a [ModeCoefficients],
    gamma: f64,
    dz: f64,
    n: usize,
    stencils: Vec<Stencil>,
}

impl<'a> Discretization<'a> {
    fn new(coefficients: &'a [ModeCoefficients], gamma: f64, config: &HjbConfig) -> Self {
        let dz = config.dz();
        Discretization {
            coefficients,
            gamma,
            dz,
            n: config.grid_n,
            stencils: coefficients
                .iter()
                .map(|&c| interior_stencil(c, gamma, dz))
                .collect(),
        }
    }

    fn z(&self, i: usize) -> f64 {
        i as f64 * self.dz
    }

    /// `H_m(i) - gamma u_i` at any grid point, boundary conditions folded in.
    fn operator(&self, m: usize, u: &[f64], i: usize) -> f64 {
        let c = self.coefficients[m];
        let dz2 = self.dz * self.dz;
        if i == 0 {
            c.sigma2 * (u[1] - u[0]) / dz2 - self.gamma * u[0]
        } else if i == self.n {
            let g = 1.0 / self.gamma;
            c.b * g + c.sigma2 * (u[i - 1] - u[i] + self.dz * g) / dz2 - self.gamma * u[i]
        } else {
            let s = self.stencils[m];
            s.lower * u[i - 1] + s.diag * u[i] + s.upper * u[i + 1]
        }
    }

    /// Rounding-level noise of `operator` at point `i`.
    fn noise(&self, u: &[f64], i: usize) -> f64 {
        let lo = i.saturating_sub(1);
        let hi = (i + 1).min(self.n);
        let mag: f64 = u[lo..=hi].iter().map(|v| v.abs()).sum::<f64>() + self.z(i);
        let scale = self
            .stencils
            .iter()
            .map(|s| s.lower.abs() + s.diag.abs() + s.upper.abs())
            .fold(0.0, f64::max);
        64.0 * f64::EPSILON * mag * scale
    }

    fn solve_fixed(&self, modes: &[usize]) -> Vec<f64> {
        let n = self.n;
        let dz2 = self.dz * self.dz;
        let g = 1.0 / self.gamma;
        let mut lower = vec![0.0; n + 1];
        let mut diag = vec![0.0; n + 1];
        let mut upper = vec![0.0; n + 1];
        let mut rhs = vec![0.0; n + 1];
        let c0 = self.coefficients[modes[0]];
        diag[0] = -c0.sigma2 / dz2 - self.gamma;
        upper[0] = c0.sigma2 / dz2;
        rhs[0] = 0.0;
        for i in 1..n {
            let s = self.stencils[modes[i]];
            lower[i] = s.lower;
            diag[i] = s.diag;
            upper[i] = s.upper;
            rhs[i] = -self.z(i);
        }
        let cn = self.coefficients[modes[n]];
        lower[n] = cn.sigma2 / dz2;
        diag[n] = -cn.sigma2 / dz2 - self.gamma;
        rhs[n] = -self.z(n) - cn.b * g - cn.sigma2 * g / self.dz;
        thomas(&lower, &diag, &upper, &rhs)
    }

    /// Pointwise argmin. Values within rounding noise of the minimum count as
    /// ties; a tie keeps the mode of the point below when it is among the
    /// tied modes and otherwise goes to the smallest index.
    fn select(&self, u: &[f64]) -> Vec<usize> {
        let mm = self.coefficients.len();
        let mut modes = Vec::with_capacity(self.n + 1);
        let mut h = vec![0.0; mm];
        for i in 0..=self.n {
            for (m, hm) in h.iter_mut().enumerate() {
                *hm = self.operator(m, u, i);
            }
            let best = h.iter().copied().fold(f64::INFINITY, f64::min);
            let eps = self.noise(u, i);
            let tied = |m: usize| h[m] <= best + eps;
            let choice = match modes.last() {
                Some(&prev) if tied(prev) => prev,
                _ => (0..mm).find(|&m| tied(m)).unwrap(),
            };
            modes.push(choice);
        }
        modes
    }
}

fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = upper[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let denom = diag[i] - lower[i] * c[i - 1];
        c[i] = if i + 1 < n { upper[i] / denom } else { 0.0 };
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / denom;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

pub fn solve_hjb(
    coefficients: &[ModeCoefficients],
    gamma: f64,
    config: &HjbConfig,
) -> Result<HjbSolution, HjbError> {
    config.validate()?;
    if coefficients.is_empty() {
        return Err(HjbError::Config("at least one mode is required".into()));
    }
    if let Some(c) = coefficients.iter().find(|c| !(c.sigma2 > 0.0 && c.b.is_finite())) {
        return Err(HjbError::Config(format!("invalid mode coefficients {c:?}")));
    }
    if !(gamma > 0.0) {
        return Err(HjbError::Config("gamma must be positive".into()));
    }
    let disc = Discretization::new(coefficients, gamma, config);
    let n = config.grid_n;

    // start from the mode with the smallest variance
    let start = (0..coefficients.len())
        .min_by(|&a, &b| coefficients[a].sigma2.total_cmp(&coefficients[b].sigma2))
        .unwrap();
    let mut modes = vec![start; n + 1];
    let mut u = disc.solve_fixed(&modes);
    let mut iterations = 1;
    loop {
        let next = disc.select(&u);
        if next == modes {
            break;
        }
        if iterations >= config.max_iterations {
            let residual = residual_max(&disc, &u);
            return Err(HjbError::NoConvergence {
                iterations,
                residual,
            });
        }
        let next_u = disc.solve_fixed(&next);
        let change = next_u
            .iter()
            .zip(&u)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        modes = next;
        u = next_u;
        iterations += 1;
        if change <= config.tol_policy {
            modes = disc.select(&u);
            break;
        }
    }

    let residual = residual_max(&disc, &u);
    if residual > config.tol_residual {
        return Err(HjbError::Tolerance {
            residual,
            tol: config.tol_residual,
            grid_n: n,
        });
    }

    let mut min_excess = f64::INFINITY;
    let mut min_excess_raw = f64::INFINITY;
    for i in 0..=n {
        let sel = disc.operator(modes[i], &u, i);
        let eps = disc.noise(&u, i);
        for m in 0..coefficients.len() {
            if m != modes[i] {
                let e = disc.operator(m, &u, i) - sel;
                min_excess_raw = min_excess_raw.min(e);
                min_excess = min_excess.min(if e.abs() <= eps { 0.0 } else { e });
            }
        }
    }
    if coefficients.len() == 1 {
        min_excess = 0.0;
        min_excess_raw = 0.0;
    }

    let dz = disc.dz;
    let grid: Vec<f64> = (0..=n).map(|i| disc.z(i)).collect();
    let mut du = vec![0.0; n + 1];
    let mut d2u = vec![0.0; n + 1];
    d2u[0] = 2.0 * (u[1] - u[0]) / (dz * dz);
    for i in 1..n {
        du[i] = (u[i + 1] - u[i - 1]) / (2.0 * dz);
        d2u[i] = (u[i - 1] - 2.0 * u[i] + u[i + 1]) / (dz * dz);
    }
    du[n] = 1.0 / gamma;
    d2u[n] = 2.0 * (u[n - 1] - u[n] + dz / gamma) / (dz * dz);

    let mut switch_points = Vec::new();
    for i in 1..=n {
        if modes[i] != modes[i - 1] {
            let (old, new) = (modes[i - 1], modes[i]);
            let d_prev = disc.operator(new, &u, i - 1) - disc.operator(old, &u, i - 1);
            let d_here = disc.operator(new, &u, i) - disc.operator(old, &u, i);
            let frac = if d_prev > d_here {
                (d_prev / (d_prev - d_here)).clamp(0.0, 1.0)
            } else {
                0.5
            };
            switch_points.push(grid[i - 1] + frac * dz);
        }
    }

    Ok(HjbSolution {
        u0: u[0],
        grid,
        u,
        du,
        d2u,
        mode_at: modes,
        switch_points,
        residual_max: residual,
        min_excess,
        min_excess_raw,
        iterations,
        gamma,
        config: *config,
    })
}

fn residual_max(disc: &Discretization<'_>, u: &[f64]) -> f64 {
    (1..disc.n)
        .map(|i| {
            let h = (0..disc.coefficients.len())
                .map(|m| disc.operator(m, u, i))
                .fold(f64::INFINITY, f64::min);
            (h + disc.z(i)).abs()
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyInterval {
    pub lo: f64,
    pub hi: f64,
    pub mode: usize,
}

/// Piecewise-constant stationary feedback policy `z -> mode`. Intervals are
/// `[lo, hi)`; the last one extends to infinity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackPolicy {
    pub intervals: Vec<PolicyInterval>,
}

impl FeedbackPolicy {
    pub fn constant(mode: usize) -> Self {
        FeedbackPolicy {
            intervals: vec![PolicyInterval {
                lo: 0.0,
                hi: f64::INFINITY,
                mode,
            }],
        }
    }

    pub fn mode_at(&self, z: f64) -> usize {
        let idx = self.intervals.partition_point(|iv| iv.hi <= z);
        self.intervals[idx.min(self.intervals.len() - 1)].mode
    }

    pub fn thresholds(&self) -> Vec<f64> {
        self.intervals[..self.intervals.len() - 1]
            .iter()
            .map(|iv| iv.hi)
            .collect()
    }
}

/// Maximal intervals of constant mode, split at the solution's switch points.
pub fn extract_policy(solution: &HjbSolution) -> FeedbackPolicy {
    let mut intervals = Vec::new();
    let mut lo = 0.0;
    let mut current = solution.mode_at[0];
    let mut switches = solution.switch_points.iter();
    for (i, &m) in solution.mode_at.iter().enumerate().skip(1) {
        if m != current {
            let at = switches.next().copied().unwrap_or(solution.grid[i]);
            intervals.push(PolicyInterval {
                lo,
                hi: at,
                mode: current,
            });
            lo = at;
            current = m;
        }
    }
    intervals.push(PolicyInterval {
        lo,
        hi: f64::INFINITY,
        mode: current,
    });
    FeedbackPolicy { intervals }
}

/// `V0 = h_q / y*_q * u(0)`.
pub fn compute_v0(
    inst: &PssInstance,
    analysis: &LpAnalysis,
    solution: &HjbSolution,
) -> Result<f64, AssumptionFailure> {
    let standing = analysis.standing()?;
    let q = standing.q;
    Ok(inst.h()[q] / to_f64(&standing.dual.y[q]) * solution.u0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances;
    use crate::lp::analyze;

    fn mc(b: f64, sigma2: f64) -> ModeCoefficients {
        ModeCoefficients { b, sigma2 }
    }

    #[test]
    fn closed_form_constants() {
        let v = single_mode_value(0.0, 15.0 / 49.0, 1.0);
        assert!((v.c3 - 7.0 * 30f64.sqrt() / 15.0).abs() < 1e-14);
        assert!((v.u0() - 0.391_230_398).abs() < 1e-8, "{}", v.u0());
        let v = single_mode_value(0.0, 2.0, 1.0);
        assert!((v.c3 - 1.0).abs() < 1e-15);
        assert!((v.u0() - 1.0).abs() < 1e-15);
        for b in [-2.0, -0.3, 0.0, 0.7] {
            let v = single_mode_value(b, 0.8, 1.3);
            assert!(v.du(0.0).abs() < 1e-15);
            for k in 0..50 {
                let z = k as f64 * 0.2;
                assert!(v.ode_residual(z).abs() < 1e-12, "b={b} z={z}");
            }
        }
    }

    #[test]
    fn u0_decreases_towards_zero_as_drift_pushes_down() {
        let mut prev = f64::INFINITY;
        for k in 0..40 {
            let b = -(k as f64) * 0.5;
            let u0 = single_mode_value(b, 1.0, 1.0).u0();
            assert!(u0 > 0.0 && u0 < prev, "b={b}");
            prev = u0;
        }
        assert!(prev < 0.06);
    }

    #[test]
    fn dominance() {
        assert_eq!(dominant_mode(&[mc(0.0, 3.0 / 7.0), mc(0.0, 15.0 / 49.0)]), Some(1));
        assert_eq!(
            dominant_mode(&[mc(-1.0 / 7.0, 3.0 / 7.0), mc(-1.0 / 21.0, 15.0 / 49.0)]),
            None
        );
        assert_eq!(dominant_mode(&[mc(0.3, 1.0)]), Some(0));
        assert_eq!(dominant_mode(&[mc(0.0, 1.0), mc(0.0, 1.0)]), Some(0));
    }

    #[test]
    fn single_mode_matches_closed_form() {
        let c = [mc(-0.4, 0.9)];
        let cfg = HjbConfig::default_for(&c, 1.0);
        let sol = solve_hjb(&c, 1.0, &cfg).unwrap();
        let exact = single_mode_value(-0.4, 0.9, 1.0);
        let err = sol
            .grid
            .iter()
            .zip(&sol.u)
            .map(|(&z, &u)| (u - exact.u(z)).abs())
            .fold(0.0, f64::max);
        assert!(err < 5e-5, "err {err}");
        assert!(sol.switch_points.is_empty());
        assert!(sol.u.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn a1_uses_dominant_mode_everywhere() {
        let a = analyze(&instances::example_a1()).unwrap();
        let c = a.coefficients.unwrap();
        let sol = solve_hjb(&c, 1.0, &HjbConfig::default_for(&c, 1.0)).unwrap();
        assert!(sol.mode_at.iter().all(|&m| m == 1));
        let policy = extract_policy(&sol);
        assert_eq!(policy, FeedbackPolicy::constant(1));
    }

    #[test]
    fn a2_has_single_threshold() {
        let a = analyze(&instances::example_a2()).unwrap();
        let c = a.coefficients.unwrap();
        let sol = solve_hjb(&c, 1.0, &HjbConfig::default_for(&c, 1.0)).unwrap();
        assert_eq!(sol.switch_points.len(), 1);
        let policy = extract_policy(&sol);
        assert_eq!(policy.intervals.len(), 2);
        assert_eq!(policy.intervals[0].mode, 1, "sigma2 = 15/49 below");
        assert_eq!(policy.intervals[1].mode, 0, "sigma2 = 3/7 above");
        assert_eq!(policy.mode_at(0.0), 1);
        assert_eq!(policy.mode_at(1e9), 0);
    }

    #[test]
    fn bad_config_rejected() {
        let c = [mc(0.0, 1.0)];
        let mut cfg = HjbConfig::default_for(&c, 1.0);
        cfg.grid_n = 2;
        assert!(matches!(solve_hjb(&c, 1.0, &cfg), Err(HjbError::Config(_))));
    }

    #[test]
    fn v0_examples() {
        let inst = instances::mm1();
        let a = analyze(&inst).unwrap();
        let c = a.coefficients.clone().unwrap();
        assert!((c[0].sigma2 - 2.0).abs() < 1e-15);
        let sol = solve_hjb(&c, 1.0, &HjbConfig::default_for(&c, 1.0)).unwrap();
        let v0 = compute_v0(&inst, &a, &sol).unwrap();
        assert!((v0 - 1.0).abs() < 1e-4, "{v0}");

        let mut p = inst.to_parts();
        p.h[0] = 2.0;
        let doubled = PssInstance::from_parts(p).unwrap();
        let v0_2 = compute_v0(&doubled, &analyze(&doubled).unwrap(), &sol).unwrap();
        assert!((v0_2 - 2.0 * v0).abs() < 1e-12);
    }
}
