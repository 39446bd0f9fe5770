//! Dense two-phase simplex over exact rationals.
//!
//! Problems are in standard form: minimize `c.x` subject to `A x = b`,
//! `x >= 0`. Bland's rule picks both the entering column (smallest index
//! with negative reduced cost) and the leaving row (smallest basic index
//! among ratio-test ties), so the method terminates on degenerate problems.

use num::{Signed, Zero};

use crate::rational::Rational;

#[derive(Debug, Clone)]
pub struct StandardLp {
    pub objective: Vec<Rational>,
    pub rows: Vec<Vec<Rational>>,
    pub rhs: Vec<Rational>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<Rational>, value: Rational },
    Infeasible,
    Unbounded,
}

impl LpOutcome {
    pub fn optimal(self) -> Option<(Vec<Rational>, Rational)> {
        match self {
            LpOutcome::Optimal { x, value } => Some((x, value)),
            _ => None,
        }
    }
}

struct Tableau {
    rows: Vec<Vec<Rational>>,
    rhs: Vec<Rational>,
    basis: Vec<usize>,
    cost: Vec<Rational>,
    cost_rhs: Rational,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c].clone();
        for v in self.rows[r].iter_mut() {
            *v /= &p;
        }
        self.rhs[r] /= &p;
        let pivot_row = self.rows[r].clone();
        let pivot_rhs = self.rhs[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r || row[c].is_zero() {
                continue;
            }
            let f = row[c].clone();
            for (v, pv) in row.iter_mut().zip(&pivot_row) {
                if !pv.is_zero() {
                    *v -= &f * pv;
                }
            }
            self.rhs[i] -= &f * &pivot_rhs;
        }
        if !self.cost[c].is_zero() {
            let f = self.cost[c].clone();
            for (v, pv) in self.cost.iter_mut().zip(&pivot_row) {
                if !pv.is_zero() {
                    *v -= &f * pv;
                }
            }
            self.cost_rhs -= &f * &pivot_rhs;
        }
        self.basis[r] = c;
    }

    fn set_cost(&mut self, c: &[Rational]) {
        self.cost = c.to_vec();
        self.cost_rhs = Rational::zero();
        for r in 0..self.rows.len() {
            let b = self.basis[r];
            if self.cost[b].is_zero() {
                continue;
            }
            let f = self.cost[b].clone();
            for (v, rv) in self.cost.iter_mut().zip(&self.rows[r]) {
                if !rv.is_zero() {
                    *v -= &f * rv;
                }
            }
            self.cost_rhs -= &f * &self.rhs[r];
        }
    }

    /// Runs Bland-rule iterations over columns `< allowed`. Returns false if
    /// unbounded.
    fn optimize(&mut self, allowed: usize) -> bool {
        loop {
            let Some(c) = (0..allowed).find(|&j| self.cost[j].is_negative()) else {
                return true;
            };
            let mut best: Option<(usize, Rational)> = None;
            for r in 0..self.rows.len() {
                let a = &self.rows[r][c];
                if !a.is_positive() {
                    continue;
                }
                let ratio = &self.rhs[r] / a;
                let better = match &best {
                    None => true,
                    Some((br, bv)) => {
                        ratio < *bv || (ratio == *bv && self.basis[r] < self.basis[*br])
                    }
                };
                if better {
                    best = Some((r, ratio));
                }
            }
            match best {
                Some((r, _)) => self.pivot(r, c),
                None => return false,
            }
        }
    }
}

pub fn minimize(lp: &StandardLp) -> LpOutcome {
    let m = lp.rows.len();
    let n = lp.objective.len();
    debug_assert!(lp.rows.iter().all(|r| r.len() == n));
    debug_assert_eq!(lp.rhs.len(), m);

    // Phase 1: artificial column per row, rhs made nonnegative.
    let mut rows = Vec::with_capacity(m);
    let mut rhs = Vec::with_capacity(m);
    for (r, row) in lp.rows.iter().enumerate() {
        let flip = lp.rhs[r].is_negative();
        let mut full: Vec<Rational> = row
            .iter()
            .map(|v| if flip { -v.clone() } else { v.clone() })
            .collect();
        full.extend((0..m).map(|a| {
            if a == r {
                Rational::from_integer(1.into())
            } else {
                Rational::zero()
            }
        }));
        rows.push(full);
        rhs.push(if flip { -lp.rhs[r].clone() } else { lp.rhs[r].clone() });
    }
    let mut t = Tableau {
        rows,
        rhs,
        basis: (n..n + m).collect(),
        cost: Vec::new(),
        cost_rhs: Rational::zero(),
    };
    let mut phase1 = vec![Rational::zero(); n + m];
    for v in &mut phase1[n..] {
        *v = Rational::from_integer(1.into());
    }
    t.set_cost(&phase1);
    t.optimize(n + m);
    if !t.cost_rhs.is_zero() {
        // cost_rhs holds minus the phase-1 objective
        return LpOutcome::Infeasible;
    }

    // Drive zero-level artificials out of the basis; drop redundant rows.
    let mut r = 0;
    while r < t.rows.len() {
        if t.basis[r] >= n {
            match (0..n).find(|&j| !t.rows[r][j].is_zero()) {
                Some(c) => t.pivot(r, c),
                None => {
                    t.rows.remove(r);
                    t.rhs.remove(r);
                    t.basis.remove(r);
                    continue;
                }
            }
        }
        r += 1;
    }

    let mut phase2 = lp.objective.clone();
    phase2.extend((0..m).map(|_| Rational::zero()));
    t.set_cost(&phase2);
    if !t.optimize(n) {
        return LpOutcome::Unbounded;
    }
    let mut x = vec![Rational::zero(); n];
    for (r, &b) in t.basis.iter().enumerate() {
        if b < n {
            x[b] = t.rhs[r].clone();
        }
    }
    let value = x
        .iter()
        .zip(&lp.objective)
        .fold(Rational::zero(), |acc, (xi, ci)| acc + xi * ci);
    LpOutcome::Optimal { x, value }
}

pub fn maximize(lp: &StandardLp) -> LpOutcome {
    let neg = StandardLp {
        objective: lp.objective.iter().map(|c| -c.clone()).collect(),
        rows: lp.rows.clone(),
        rhs: lp.rhs.clone(),
    };
    match minimize(&neg) {
        LpOutcome::Optimal { x, value } => LpOutcome::Optimal { x, value: -value },
        other => other,
    }
}
