//! The static allocation LP and its dual, solved exactly.
//!
//! The primal is: minimize `rho` subject to `R xi = lambda`,
//! `G xi <= rho 1`, `xi >= 0`. The dual maximizes `y.lambda` subject to
//! `sum(z) = 1`, `y R <= z G`, `z >= 0`. Everything in this module is exact
//! rational arithmetic; floating point only appears in [`ModeCoefficients`],
//! which mixes in the second-order data.

pub mod linalg;
pub mod simplex;

use std::collections::{BTreeSet, VecDeque};

use itertools::Itertools;
use num::{One, Signed, Zero};
use serde::Serialize;

use crate::model::{ActivityId, PssInstance};
use crate::rational::{to_f64, Rational};
use simplex::{maximize, minimize, LpOutcome, StandardLp};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LpError {
    #[error("internal LP error: {0}")]
    Internal(String),
    #[error("classification cross-check failed: {0}")]
    CrossCheck(String),
    #[error(transparent)]
    Assumption(#[from] AssumptionFailure),
}

/// Which part of the standing assumption failed.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AssumptionFailure {
    #[error("EHTC fails: rho* = {0}")]
    Ehtc(String),
    #[error("full load fails: server {server} has load {load} in mode {mode}")]
    FullLoad {
        mode: usize,
        server: usize,
        load: String,
    },
    #[error("dual not unique")]
    DualNotUnique,
}

impl AssumptionFailure {
    /// 1, 2 or 3.
    pub fn part(&self) -> u8 {
        match self {
            AssumptionFailure::Ehtc(_) => 1,
            AssumptionFailure::FullLoad { .. } => 2,
            AssumptionFailure::DualNotUnique => 3,
        }
    }
}

/// An extreme point of the optimal face. `index` is 0-based; reports print
/// it 1-based.
#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    pub index: usize,
    pub xi: Vec<Rational>,
}

impl Mode {
    pub fn support(&self) -> Vec<usize> {
        (0..self.xi.len())
            .filter(|&j| self.xi[j].is_positive())
            .collect()
    }

    pub fn xi_f64(&self) -> Vec<f64> {
        self.xi.iter().map(to_f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub y: Vec<Rational>,
    pub z: Vec<Rational>,
}

impl DualSolution {
    pub fn y_f64(&self) -> Vec<f64> {
        self.y.iter().map(to_f64).collect()
    }

    pub fn z_f64(&self) -> Vec<f64> {
        self.z.iter().map(to_f64).collect()
    }

    pub fn objective(&self, lambda: &[Rational]) -> Rational {
        dot(&self.y, lambda)
    }

    /// `sum z = 1`, `z >= 0`, `y_i mu_j <= z_k`.
    pub fn is_feasible(&self, inst: &PssInstance) -> bool {
        let sum: Rational = self.z.iter().cloned().sum();
        sum.is_one()
            && self.z.iter().all(|z| !z.is_negative())
            && inst
                .activities()
                .iter()
                .zip(inst.mu())
                .all(|(a, mu)| &self.y[a.class] * mu <= self.z[a.server])
    }
}

/// A dual coordinate: `y_i` or `z_k` (0-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DualCoordinate {
    Y(usize),
    Z(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum DualOutcome {
    Unique(DualSolution),
    NonUnique {
        /// Minimizer and maximizer of `coordinate` over the dual optimal face.
        witnesses: [DualSolution; 2],
        coordinate: DualCoordinate,
        /// `[min, max]` of every coordinate over the optimal face, `y` then `z`.
        ranges: Vec<(Rational, Rational)>,
    },
}

impl DualOutcome {
    pub fn unique(&self) -> Option<&DualSolution> {
        match self {
            DualOutcome::Unique(d) => Some(d),
            DualOutcome::NonUnique { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ActivityClass {
    PotentiallyBasic,
    AlwaysNonbasic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub ehtc: bool,
    pub full_load: bool,
    pub dual_unique: bool,
    pub rho_star: Rational,
    /// First (mode, server, load) with load below `rho*`.
    pub full_load_witness: Option<(usize, usize, Rational)>,
    pub dual_witnesses: Option<[DualSolution; 2]>,
}

impl AssumptionReport {
    pub fn all_pass(&self) -> bool {
        self.ehtc && self.full_load && self.dual_unique
    }

    /// The first failing part, in order 1, 2, 3.
    pub fn first_failure(&self) -> Option<AssumptionFailure> {
        if !self.ehtc {
            return Some(AssumptionFailure::Ehtc(crate::rational::format_rational(
                &self.rho_star,
            )));
        }
        if let Some((mode, server, load)) = &self.full_load_witness {
            return Some(AssumptionFailure::FullLoad {
                mode: mode + 1,
                server: server + 1,
                load: crate::rational::format_rational(load),
            });
        }
        if !self.dual_unique {
            return Some(AssumptionFailure::DualNotUnique);
        }
        None
    }
}

/// `mu_ik = alpha_i beta_k`, normalized by `sum(beta) = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub alpha: Vec<Rational>,
    pub beta: Vec<Rational>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DecompositionVerdict {
    Decomposable(Decomposition),
    /// The rank-one relation breaks at this activity.
    NotDecomposable { witness: ActivityId },
    /// The activity graph is disconnected, so the scale of the factors is
    /// not determined by the present entries.
    Undetermined,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decomposability {
    /// Every class/server pair is an activity.
    pub full_grid: bool,
    pub verdict: DecompositionVerdict,
    /// `sum_i lambda_i / alpha_i`, when decomposable.
    pub lambda_over_alpha: Option<Rational>,
    /// Whether `(1/alpha, beta)` equals the unique dual, when both exist.
    pub matches_dual: Option<bool>,
}

/// Per-mode drift and variance of the workload diffusion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct ModeCoefficients {
    pub b: f64,
    pub sigma2: f64,
}

impl ModeCoefficients {
    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrimalSolution {
    pub rho_star: Rational,
    pub witness: Vec<Rational>,
}

/// Everything the LP layer knows about an instance.
#[derive(Debug, Clone, PartialEq)]
pub struct LpAnalysis {
    pub rho_star: Rational,
    pub primal_witness: Vec<Rational>,
    pub modes: Vec<Mode>,
    pub degenerate: Vec<bool>,
    pub dual: DualOutcome,
    pub classification: Option<Vec<ActivityClass>>,
    pub assumptions: AssumptionReport,
    pub decomposability: Decomposability,
    pub q: Option<usize>,
    pub coefficients: Option<Vec<ModeCoefficients>>,
}

/// The quantities downstream stages need once the standing assumption holds.
#[derive(Debug, Clone, Copy)]
pub struct Standing<'a> {
    pub dual: &'a DualSolution,
    pub classification: &'a [ActivityClass],
    pub q: usize,
    pub coefficients: &'a [ModeCoefficients],
    pub modes: &'a [Mode],
}

impl LpAnalysis {
    pub fn standing(&self) -> Result<Standing<'_>, AssumptionFailure> {
        if let Some(f) = self.assumptions.first_failure() {
            return Err(f);
        }
        match (
            self.dual.unique(),
            &self.classification,
            self.q,
            &self.coefficients,
        ) {
            (Some(dual), Some(classification), Some(q), Some(coefficients)) => Ok(Standing {
                dual,
                classification,
                q,
                coefficients,
                modes: &self.modes,
            }),
            _ => Err(AssumptionFailure::DualNotUnique),
        }
    }

    /// Activities tagged always nonbasic.
    pub fn always_nonbasic(&self) -> Vec<usize> {
        self.classification
            .iter()
            .flatten()
            .enumerate()
            .filter(|(_, c)| **c == ActivityClass::AlwaysNonbasic)
            .map(|(j, _)| j)
            .collect()
    }
}

fn dot(a: &[Rational], b: &[Rational]) -> Rational {
    a.iter().zip(b).fold(Rational::zero(), |acc, (x, y)| acc + x * y)
}

fn zero() -> Rational {
    Rational::zero()
}

fn one() -> Rational {
    Rational::one()
}

/// Exact optimal value `rho*` and an optimal `xi`.
pub fn solve_primal(inst: &PssInstance) -> Result<PrimalSolution, LpError> {
    let (ni, nk, nj) = (inst.num_classes(), inst.num_servers(), inst.num_activities());
    // columns: xi (J), rho, slack (K)
    let n = nj + 1 + nk;
    let mut rows = Vec::with_capacity(ni + nk);
    let mut rhs = Vec::with_capacity(ni + nk);
    for i in 0..ni {
        let mut row = vec![zero(); n];
        for &j in inst.class_activities(i) {
            row[j] = inst.mu()[j].clone();
        }
        rows.push(row);
        rhs.push(inst.lambda()[i].clone());
    }
    for k in 0..nk {
        let mut row = vec![zero(); n];
        for &j in inst.server_activities(k) {
            row[j] = one();
        }
        row[nj] = -one();
        row[nj + 1 + k] = one();
        rows.push(row);
        rhs.push(zero());
    }
    let mut objective = vec![zero(); n];
    objective[nj] = one();
    let lp = StandardLp {
        objective,
        rows,
        rhs,
    };
    match minimize(&lp) {
        LpOutcome::Optimal { x, value } => Ok(PrimalSolution {
            rho_star: value,
            witness: x[..nj].to_vec(),
        }),
        other => Err(LpError::Internal(format!("primal LP: {other:?}"))),
    }
}

/// Dual LP in standard form. Columns: `y+` (I), `y-` (I), `z` (K), slack (J).
fn dual_lp(inst: &PssInstance, face_value: Option<&Rational>) -> StandardLp {
    let (ni, nk, nj) = (inst.num_classes(), inst.num_servers(), inst.num_activities());
    let n = 2 * ni + nk + nj;
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for (j, a) in inst.activities().iter().enumerate() {
        let mu = &inst.mu()[j];
        let mut row = vec![zero(); n];
        row[a.class] = mu.clone();
        row[ni + a.class] = -mu.clone();
        row[2 * ni + a.server] = -one();
        row[2 * ni + nk + j] = one();
        rows.push(row);
        rhs.push(zero());
    }
    let mut row = vec![zero(); n];
    for k in 0..nk {
        row[2 * ni + k] = one();
    }
    rows.push(row);
    rhs.push(one());
    let mut objective = vec![zero(); n];
    for i in 0..ni {
        objective[i] = inst.lambda()[i].clone();
        objective[ni + i] = -inst.lambda()[i].clone();
    }
    if let Some(v) = face_value {
        rows.push(objective.clone());
        rhs.push(v.clone());
    }
    StandardLp {
        objective,
        rows,
        rhs,
    }
}

fn dual_point(inst: &PssInstance, x: &[Rational]) -> DualSolution {
    let (ni, nk) = (inst.num_classes(), inst.num_servers());
    DualSolution {
        y: (0..ni).map(|i| &x[i] - &x[ni + i]).collect(),
        z: (0..nk).map(|k| x[2 * ni + k].clone()).collect(),
    }
}

/// Solves the dual and decides uniqueness with `2(I+K)` auxiliary LPs over
/// the dual optimal face.
pub fn solve_dual(inst: &PssInstance, rho_star: &Rational) -> Result<DualOutcome, LpError> {
    let (ni, nk) = (inst.num_classes(), inst.num_servers());
    let (x, value) = maximize(&dual_lp(inst, None))
        .optimal()
        .ok_or_else(|| LpError::Internal("dual LP has no optimum".into()))?;
    if &value != rho_star {
        return Err(LpError::Internal(format!(
            "duality gap: dual value {value} vs rho* {rho_star}"
        )));
    }
    let point = dual_point(inst, &x);

    let mut face = dual_lp(inst, Some(rho_star));
    let n = face.objective.len();
    let coords: Vec<DualCoordinate> = (0..ni)
        .map(DualCoordinate::Y)
        .chain((0..nk).map(DualCoordinate::Z))
        .collect();
    let mut ranges = Vec::with_capacity(coords.len());
    let mut first_split: Option<(DualCoordinate, [DualSolution; 2])> = None;
    for &c in &coords {
        let mut obj = vec![zero(); n];
        match c {
            DualCoordinate::Y(i) => {
                obj[i] = one();
                obj[ni + i] = -one();
            }
            DualCoordinate::Z(k) => obj[2 * ni + k] = one(),
        }
        face.objective = obj;
        let (xmin, vmin) = minimize(&face)
            .optimal()
            .ok_or_else(|| LpError::Internal(format!("dual face min {c:?}")))?;
        let (xmax, vmax) = maximize(&face)
            .optimal()
            .ok_or_else(|| LpError::Internal(format!("dual face max {c:?}")))?;
        if vmin != vmax && first_split.is_none() {
            first_split = Some((c, [dual_point(inst, &xmin), dual_point(inst, &xmax)]));
        }
        ranges.push((vmin, vmax));
    }
    Ok(match first_split {
        None => DualOutcome::Unique(point),
        Some((coordinate, witnesses)) => DualOutcome::NonUnique {
            witnesses,
            coordinate,
            ranges,
        },
    })
}

/// Extreme points of `{xi >= 0 : R xi = lambda, G xi <= rho* 1}` by
/// exhaustive basis enumeration, sorted descending lexicographically.
pub fn enumerate_modes(inst: &PssInstance, rho_star: &Rational) -> Vec<Mode> {
    let (ni, nk, nj) = (inst.num_classes(), inst.num_servers(), inst.num_activities());
    let mats = inst.build_matrices();
    // [R 0; G I] with right-hand side [lambda; rho* 1]
    let ncols = nj + nk;
    let mut full: Vec<Vec<Rational>> = Vec::with_capacity(ni + nk);
    let mut rhs = Vec::with_capacity(ni + nk);
    for i in 0..ni {
        let mut row = mats.r[i].clone();
        row.extend((0..nk).map(|_| zero()));
        full.push(row);
        rhs.push(inst.lambda()[i].clone());
    }
    for k in 0..nk {
        let mut row: Vec<Rational> = mats.g[k]
            .iter()
            .map(|&g| Rational::from_integer(g.into()))
            .collect();
        row.extend((0..nk).map(|s| if s == k { one() } else { zero() }));
        full.push(row);
        rhs.push(rho_star.clone());
    }
    // keep a maximal independent row subset
    let mut kept: Vec<usize> = Vec::new();
    for r in 0..full.len() {
        let mut trial: Vec<Vec<Rational>> = kept.iter().map(|&k| full[k].clone()).collect();
        trial.push(full[r].clone());
        if linalg::rank(&trial) == trial.len() {
            kept.push(r);
        }
    }
    let m = kept.len();

    let mut vertices: BTreeSet<Vec<Rational>> = BTreeSet::new();
    for cols in (0..ncols).combinations(m) {
        let a: Vec<Vec<Rational>> = kept
            .iter()
            .map(|&r| cols.iter().map(|&c| full[r][c].clone()).collect())
            .collect();
        let b: Vec<Rational> = kept.iter().map(|&r| rhs[r].clone()).collect();
        let Some(sol) = linalg::solve_square(&a, &b) else {
            continue;
        };
        if sol.iter().any(Signed::is_negative) {
            continue;
        }
        let mut xi = vec![zero(); nj];
        for (&c, v) in cols.iter().zip(sol) {
            if c < nj {
                xi[c] = v;
            }
        }
        vertices.insert(xi);
    }
    vertices
        .into_iter()
        .rev()
        .enumerate()
        .map(|(index, xi)| Mode { index, xi })
        .collect()
}

/// Residual-free feasibility and the vertex criterion: the columns of
/// `[R 0; G I]` at the positive entries of `(xi, slack)` are independent.
pub fn is_vertex(inst: &PssInstance, xi: &[Rational], rho_star: &Rational) -> bool {
    let (ni, nk, nj) = (inst.num_classes(), inst.num_servers(), inst.num_activities());
    if xi.iter().any(Signed::is_negative) {
        return false;
    }
    for i in 0..ni {
        let s: Rational = inst
            .class_activities(i)
            .iter()
            .map(|&j| &inst.mu()[j] * &xi[j])
            .sum();
        if s != inst.lambda()[i] {
            return false;
        }
    }
    let mut columns: Vec<Vec<Rational>> = Vec::new();
    for k in 0..nk {
        let load: Rational = inst.server_activities(k).iter().map(|&j| xi[j].clone()).sum();
        if &load > rho_star {
            return false;
        }
        if &load < rho_star {
            let mut col = vec![zero(); ni + nk];
            col[ni + k] = one();
            columns.push(col);
        }
    }
    for j in (0..nj).filter(|&j| xi[j].is_positive()) {
        let a = inst.activity(j);
        let mut col = vec![zero(); ni + nk];
        col[a.class] = inst.mu()[j].clone();
        col[ni + a.server] = one();
        columns.push(col);
    }
    linalg::rank(&columns) == columns.len()
}

/// Tags each activity by strict comparison of `y_i mu_j` with `z_k`, then
/// cross-checks against the union of mode supports.
pub fn classify_activities(
    inst: &PssInstance,
    dual: &DualSolution,
    modes: &[Mode],
) -> Result<Vec<ActivityClass>, LpError> {
    let mut tags = Vec::with_capacity(inst.num_activities());
    for (j, a) in inst.activities().iter().enumerate() {
        let lhs = &dual.y[a.class] * &inst.mu()[j];
        let rhs = &dual.z[a.server];
        let tag = if &lhs == rhs {
            ActivityClass::PotentiallyBasic
        } else if &lhs < rhs {
            ActivityClass::AlwaysNonbasic
        } else {
            return Err(LpError::CrossCheck(format!(
                "dual infeasible at activity {a}: y mu = {lhs} > z = {rhs}"
            )));
        };
        let used = modes.iter().any(|m| m.xi[j].is_positive());
        if used != (tag == ActivityClass::PotentiallyBasic) {
            return Err(LpError::CrossCheck(format!(
                "activity {a}: tagged {tag:?} but used in a mode = {used}"
            )));
        }
        tags.push(tag);
    }
    Ok(tags)
}

/// Runs the primal, enumerates modes and decides the three parts of the
/// standing assumption.
pub fn validate_assumptions(inst: &PssInstance) -> Result<AssumptionReport, LpError> {
    let primal = solve_primal(inst)?;
    let modes = enumerate_modes(inst, &primal.rho_star);
    let dual = solve_dual(inst, &primal.rho_star)?;
    Ok(assumption_report(inst, &primal.rho_star, &modes, &dual))
}

fn assumption_report(
    inst: &PssInstance,
    rho_star: &Rational,
    modes: &[Mode],
    dual: &DualOutcome,
) -> AssumptionReport {
    // An affine function equal to rho* at every vertex equals rho* on the face.
    let mut full_load_witness = None;
    'outer: for m in modes {
        for k in 0..inst.num_servers() {
            let load: Rational = inst.server_activities(k).iter().map(|&j| m.xi[j].clone()).sum();
            if &load != rho_star {
                full_load_witness = Some((m.index, k, load));
                break 'outer;
            }
        }
    }
    let dual_witnesses = match dual {
        DualOutcome::Unique(_) => None,
        DualOutcome::NonUnique { witnesses, .. } => Some(witnesses.clone()),
    };
    AssumptionReport {
        ehtc: rho_star.is_one(),
        full_load: full_load_witness.is_none(),
        dual_unique: dual_witnesses.is_none(),
        rho_star: rho_star.clone(),
        full_load_witness,
        dual_witnesses,
    }
}

/// Tests `mu_ik = alpha_i beta_k` on the present activities.
pub fn check_decomposable(inst: &PssInstance, dual: Option<&DualSolution>) -> Decomposability {
    let (ni, nk, nj) = (inst.num_classes(), inst.num_servers(), inst.num_activities());
    let full_grid = nj == ni * nk;
    let mut alpha: Vec<Option<Rational>> = vec![None; ni];
    let mut beta: Vec<Option<Rational>> = vec![None; nk];
    beta[0] = Some(one());
    let mut queue = VecDeque::from([(false, 0usize)]); // (is_class, index)
    while let Some((is_class, idx)) = queue.pop_front() {
        let acts = if is_class {
            inst.class_activities(idx)
        } else {
            inst.server_activities(idx)
        };
        for &j in acts {
            let a = inst.activity(j);
            let mu = &inst.mu()[j];
            if is_class {
                if beta[a.server].is_none() {
                    beta[a.server] = Some(mu / alpha[idx].as_ref().unwrap());
                    queue.push_back((false, a.server));
                }
            } else if alpha[a.class].is_none() {
                alpha[a.class] = Some(mu / beta[idx].as_ref().unwrap());
                queue.push_back((true, a.class));
            }
        }
    }
    let undetermined = Decomposability {
        full_grid,
        verdict: DecompositionVerdict::Undetermined,
        lambda_over_alpha: None,
        matches_dual: None,
    };
    if alpha.iter().any(Option::is_none) || beta.iter().any(Option::is_none) {
        return undetermined;
    }
    let mut alpha: Vec<Rational> = alpha.into_iter().map(Option::unwrap).collect();
    let mut beta: Vec<Rational> = beta.into_iter().map(Option::unwrap).collect();
    for (j, a) in inst.activities().iter().enumerate() {
        if &alpha[a.class] * &beta[a.server] != inst.mu()[j] {
            return Decomposability {
                verdict: DecompositionVerdict::NotDecomposable { witness: *a },
                ..undetermined
            };
        }
    }
    let s: Rational = beta.iter().cloned().sum();
    for b in &mut beta {
        *b /= &s;
    }
    for a in &mut alpha {
        *a *= &s;
    }
    let lambda_over_alpha: Rational = inst
        .lambda()
        .iter()
        .zip(&alpha)
        .map(|(l, a)| l / a)
        .sum();
    let matches_dual = dual.map(|d| {
        d.z == beta && d.y.iter().zip(&alpha).all(|(y, a)| (y * a).is_one())
    });
    Decomposability {
        full_grid,
        verdict: DecompositionVerdict::Decomposable(Decomposition { alpha, beta }),
        lambda_over_alpha: Some(lambda_over_alpha),
        matches_dual,
    }
}

/// Drift `b(xi)` and squared diffusion coefficient `sigma(xi)^2` of the
/// workload at allocation `xi`.
pub fn mode_coefficients(inst: &PssInstance, xi: &[Rational], dual: &DualSolution) -> ModeCoefficients {
    let y = dual.y_f64();
    let xi: Vec<f64> = xi.iter().map(to_f64).collect();
    let mut b = 0.0;
    let mut sigma2 = 0.0;
    for i in 0..inst.num_classes() {
        let mut drift = inst.hat_lambda()[i];
        let mut var = to_f64(&inst.lambda()[i]) * inst.c2_arrival()[i];
        for &j in inst.class_activities(i) {
            drift -= inst.hat_mu()[j] * xi[j];
            var += to_f64(&inst.mu()[j]) * inst.c2_service()[j] * xi[j];
        }
        b += y[i] * drift;
        sigma2 += y[i] * y[i] * var;
    }
    ModeCoefficients { b, sigma2 }
}

/// `argmin_i h_i / y_i`, ties to the smallest index. Compared exactly.
pub fn select_q(h: &[f64], dual: &DualSolution) -> usize {
    let ratio = |i: usize| {
        let hi = Rational::from_float(h[i]).expect("finite cost");
        hi / &dual.y[i]
    };
    let mut best = 0;
    let mut best_ratio = ratio(0);
    for i in 1..h.len() {
        let r = ratio(i);
        if r < best_ratio {
            best = i;
            best_ratio = r;
        }
    }
    best
}

/// Full LP-layer analysis of an instance.
pub fn analyze(inst: &PssInstance) -> Result<LpAnalysis, LpError> {
    let primal = solve_primal(inst)?;
    let modes = enumerate_modes(inst, &primal.rho_star);
    if modes.is_empty() {
        return Err(LpError::Internal("optimal face has no vertex".into()));
    }
    for m in &modes {
        if !is_vertex(inst, &m.xi, &primal.rho_star) {
            return Err(LpError::Internal(format!("mode {} fails the vertex check", m.index + 1)));
        }
    }
    let dual = solve_dual(inst, &primal.rho_star)?;
    let assumptions = assumption_report(inst, &primal.rho_star, &modes, &dual);
    let basic_count = inst.num_classes() + inst.num_servers() - 1;
    let degenerate = modes.iter().map(|m| m.support().len() < basic_count).collect();
    let unique = dual.unique();
    let classification = unique
        .map(|d| classify_activities(inst, d, &modes))
        .transpose()?;
    let decomposability = check_decomposable(inst, unique);
    let q = unique.map(|d| select_q(inst.h(), d));
    let coefficients = unique.map(|d| {
        modes
            .iter()
            .map(|m| mode_coefficients(inst, &m.xi, d))
            .collect()
    });
    Ok(LpAnalysis {
        rho_star: primal.rho_star,
        primal_witness: primal.witness,
        modes,
        degenerate,
        dual,
        classification,
        assumptions,
        decomposability,
        q,
        coefficients,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances;
    use crate::rational::{int, rat};

    fn xi(v: &[(i64, i64)]) -> Vec<Rational> {
        v.iter().map(|&(n, d)| rat(n, d)).collect()
    }

    #[test]
    fn primal_trivial_and_examples() {
        let p = solve_primal(&instances::single(int(1), int(2))).unwrap();
        assert_eq!(p.rho_star, rat(1, 2));
        assert_eq!(p.witness, vec![rat(1, 2)]);
        assert_eq!(solve_primal(&instances::example_a()).unwrap().rho_star, int(1));
        assert_eq!(solve_primal(&instances::example_e()).unwrap().rho_star, int(1));
    }

    #[test]
    fn modes_example_a() {
        let modes = enumerate_modes(&instances::example_a(), &int(1));
        let got: Vec<_> = modes.iter().map(|m| m.xi.clone()).collect();
        assert_eq!(
            got,
            vec![
                xi(&[(1, 1), (1, 2), (0, 1), (1, 2)]),
                xi(&[(1, 3), (1, 1), (2, 3), (0, 1)]),
            ]
        );
    }

    #[test]
    fn modes_single() {
        let modes = enumerate_modes(&instances::mm1(), &int(1));
        assert_eq!(modes.len(), 1);
        assert_eq!(modes[0].xi, vec![int(1)]);
    }

    #[test]
    fn dual_example_a_unique() {
        let d = solve_dual(&instances::example_a(), &int(1)).unwrap();
        let d = d.unique().expect("unique");
        assert_eq!(d.y, vec![rat(1, 7), rat(1, 14)]);
        assert_eq!(d.z, vec![rat(3, 7), rat(4, 7)]);
    }

    #[test]
    fn dual_example_d_not_unique() {
        let inst = instances::example_d();
        match solve_dual(&inst, &int(1)).unwrap() {
            DualOutcome::NonUnique {
                witnesses, ranges, ..
            } => {
                assert_ne!(witnesses[0], witnesses[1]);
                for w in &witnesses {
                    assert!(w.is_feasible(&inst));
                    assert_eq!(w.objective(inst.lambda()), int(1));
                }
                // z_3 = eta ranges over [3/10, 24/73]
                assert_eq!(ranges[5], (rat(3, 10), rat(24, 73)));
            }
            other => panic!("expected non-unique, got {other:?}"),
        }
    }

    #[test]
    fn classification_examples() {
        let a = analyze(&instances::example_a()).unwrap();
        assert!(a
            .classification
            .unwrap()
            .iter()
            .all(|c| *c == ActivityClass::PotentiallyBasic));
        let s = analyze(&instances::mm1()).unwrap();
        assert_eq!(s.classification.unwrap(), vec![ActivityClass::PotentiallyBasic]);
    }

    #[test]
    fn example_d_always_nonbasic_under_interior_dual() {
        // eta = 8/25 lies inside (3/10, 24/73]; there 6 y_2 < z_3 and 7 y_3 < z_2.
        let inst = instances::example_d();
        let eta = rat(8, 25);
        let one_m = int(1) - &eta;
        let dual = DualSolution {
            y: vec![&one_m * rat(1, 7), &one_m * rat(1, 14), &eta * rat(1, 6)],
            z: vec![&one_m * rat(3, 7), &one_m * rat(4, 7), eta.clone()],
        };
        assert!(dual.is_feasible(&inst));
        let modes = enumerate_modes(&inst, &int(1));
        let tags = classify_activities(&inst, &dual, &modes).unwrap();
        let an: Vec<String> = (0..inst.num_activities())
            .filter(|&j| tags[j] == ActivityClass::AlwaysNonbasic)
            .map(|j| inst.activity(j).to_string())
            .collect();
        assert_eq!(an, vec!["(2,3)", "(3,2)"]);
    }

    #[test]
    fn assumptions() {
        let a = validate_assumptions(&instances::example_a()).unwrap();
        assert!(a.all_pass());
        let d = validate_assumptions(&instances::example_d()).unwrap();
        assert!(d.ehtc && d.full_load && !d.dual_unique);
        assert_eq!(d.first_failure().unwrap().part(), 3);
        let s = validate_assumptions(&instances::single(int(1), int(2))).unwrap();
        assert!(!s.ehtc);
        assert_eq!(s.first_failure().unwrap().part(), 1);
    }

    #[test]
    fn decomposability() {
        let a = check_decomposable(&instances::example_a(), None);
        assert!(a.full_grid);
        assert_eq!(
            a.verdict,
            DecompositionVerdict::Decomposable(Decomposition {
                alpha: vec![int(7), int(14)],
                beta: vec![rat(3, 7), rat(4, 7)],
            })
        );
        assert_eq!(a.lambda_over_alpha, Some(int(1)));
        let d = check_decomposable(&instances::example_d(), None);
        assert!(matches!(d.verdict, DecompositionVerdict::NotDecomposable { .. }));
        let e = analyze(&instances::example_e()).unwrap();
        assert_eq!(
            e.decomposability.verdict,
            DecompositionVerdict::Decomposable(Decomposition {
                alpha: vec![int(10), int(20), int(20)],
                beta: vec![rat(3, 10), rat(4, 10), rat(3, 10)],
            })
        );
        assert_eq!(e.decomposability.matches_dual, Some(true));
    }

    #[test]
    fn coefficients_a1_a2() {
        let a1 = analyze(&instances::example_a1()).unwrap();
        let c = a1.coefficients.unwrap();
        assert_eq!(c[0].b, 0.0);
        assert_eq!(c[1].b, 0.0);
        assert!((c[0].sigma2 - 3.0 / 7.0).abs() < 1e-15);
        assert!((c[1].sigma2 - 15.0 / 49.0).abs() < 1e-15);
        let a2 = analyze(&instances::example_a2()).unwrap();
        let c = a2.coefficients.unwrap();
        assert!((c[0].b + 1.0 / 7.0).abs() < 1e-15);
        assert!((c[1].b + 1.0 / 21.0).abs() < 1e-15);
    }

    #[test]
    fn q_selection() {
        let d = DualSolution {
            y: vec![rat(1, 7), rat(1, 14)],
            z: vec![rat(3, 7), rat(4, 7)],
        };
        assert_eq!(select_q(&[1.0, 1.0], &d), 0);
        assert_eq!(select_q(&[3.0, 1.0], &d), 1);
        assert_eq!(select_q(&[1.0, 0.5], &d), 0, "7 vs 7 tie goes to class 1");
    }

    #[test]
    fn degeneracy_flags() {
        let c = analyze(&instances::example_c()).unwrap();
        let flagged: Vec<_> = c
            .modes
            .iter()
            .zip(&c.degenerate)
            .filter(|(_, d)| **d)
            .map(|(m, _)| m.xi.clone())
            .collect();
        assert_eq!(flagged, vec![xi(&[(0, 1), (1, 1), (1, 1), (0, 1)])]);
    }
}
