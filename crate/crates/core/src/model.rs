//! Parallel server system instances.
//!
//! First-order data (arrival rates `lambda`, service rates `mu`) are exact
//! rationals so that the LP layer never needs tolerances. Everything else
//! (second-order perturbations, squared coefficients of variation, holding
//! costs, discount rate) is `f64`.

use std::collections::BTreeSet;
use std::fmt;

use num::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::rational::{serde_rational, Rational};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("instance parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error("activities[{index}]: duplicate activity ({class},{server})")]
    DuplicateActivity {
        index: usize,
        class: usize,
        server: usize,
    },
}

fn invalid(path: impl Into<String>, message: impl Into<String>) -> ModelError {
    ModelError::Invalid {
        path: path.into(),
        message: message.into(),
    }
}

/// A class/server pair. Indices are 0-based; `Display` prints 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ActivityId {
    pub class: usize,
    pub server: usize,
}

impl fmt::Display for ActivityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.class + 1, self.server + 1)
    }
}

/// Mutable template for building a [`PssInstance`].
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceParts {
    pub num_classes: usize,
    pub num_servers: usize,
    pub activities: Vec<ActivityId>,
    pub lambda: Vec<Rational>,
    pub mu: Vec<Rational>,
    pub hat_lambda: Vec<f64>,
    pub hat_mu: Vec<f64>,
    pub c2_arrival: Vec<f64>,
    pub c2_service: Vec<f64>,
    pub h: Vec<f64>,
    pub gamma: f64,
}

impl InstanceParts {
    /// First-order data only; second-order data zero, all SCVs 1, unit costs,
    /// unit discount rate.
    pub fn first_order(
        num_servers: usize,
        lambda: Vec<Rational>,
        activities: Vec<(ActivityId, Rational)>,
    ) -> Self {
        let num_classes = lambda.len();
        let (activities, mu): (Vec<_>, Vec<_>) = activities.into_iter().unzip();
        let j = activities.len();
        InstanceParts {
            num_classes,
            num_servers,
            activities,
            lambda,
            mu,
            hat_lambda: vec![0.0; num_classes],
            hat_mu: vec![0.0; j],
            c2_arrival: vec![1.0; num_classes],
            c2_service: vec![1.0; j],
            h: vec![1.0; num_classes],
            gamma: 1.0,
        }
    }
}

/// A validated PSS instance. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct PssInstance {
    parts: InstanceParts,
    by_class: Vec<Vec<usize>>,
    by_server: Vec<Vec<usize>>,
}

impl PssInstance {
    pub fn from_parts(parts: InstanceParts) -> Result<Self, ModelError> {
        let InstanceParts {
            num_classes,
            num_servers,
            ref activities,
            ..
        } = parts;
        if num_classes == 0 {
            return Err(invalid("classes", "at least one class is required"));
        }
        if num_servers == 0 {
            return Err(invalid("servers", "at least one server is required"));
        }
        if activities.is_empty() {
            return Err(invalid("activities", "at least one activity is required"));
        }
        let per_class = |name: &str, len: usize| {
            if len != num_classes {
                Err(invalid(
                    "classes",
                    format!("{name} has {len} entries, expected {num_classes}"),
                ))
            } else {
                Ok(())
            }
        };
        per_class("lambda", parts.lambda.len())?;
        per_class("hat_lambda", parts.hat_lambda.len())?;
        per_class("c2_a", parts.c2_arrival.len())?;
        per_class("h", parts.h.len())?;
        let nj = activities.len();
        let per_activity = |name: &str, len: usize| {
            if len != nj {
                Err(invalid(
                    "activities",
                    format!("{name} has {len} entries, expected {nj}"),
                ))
            } else {
                Ok(())
            }
        };
        per_activity("mu", parts.mu.len())?;
        per_activity("hat_mu", parts.hat_mu.len())?;
        per_activity("c2_s", parts.c2_service.len())?;

        let mut seen = BTreeSet::new();
        let mut by_class = vec![Vec::new(); num_classes];
        let mut by_server = vec![Vec::new(); num_servers];
        for (j, a) in activities.iter().enumerate() {
            if a.class >= num_classes {
                return Err(invalid(
                    format!("activities[{j}].i"),
                    format!("class index {} out of range 1..={num_classes}", a.class + 1),
                ));
            }
            if a.server >= num_servers {
                return Err(invalid(
                    format!("activities[{j}].k"),
                    format!("server index {} out of range 1..={num_servers}", a.server + 1),
                ));
            }
            if !seen.insert(*a) {
                return Err(ModelError::DuplicateActivity {
                    index: j,
                    class: a.class + 1,
                    server: a.server + 1,
                });
            }
            by_class[a.class].push(j);
            by_server[a.server].push(j);
        }
        if let Some(i) = by_class.iter().position(Vec::is_empty) {
            return Err(invalid(
                format!("classes[{i}]"),
                "class is not served by any activity",
            ));
        }
        if let Some(k) = by_server.iter().position(Vec::is_empty) {
            return Err(invalid(
                "activities",
                format!("server {} has no activity", k + 1),
            ));
        }

        for (i, l) in parts.lambda.iter().enumerate() {
            if !l.is_positive() {
                return Err(invalid(
                    format!("classes[{i}].lambda"),
                    "lambda must be positive",
                ));
            }
        }
        for (j, m) in parts.mu.iter().enumerate() {
            if !m.is_positive() {
                return Err(invalid(format!("activities[{j}].mu"), "mu must be positive"));
            }
        }
        for i in 0..num_classes {
            let c2 = parts.c2_arrival[i];
            if !(c2.is_finite() && c2 > 0.0) {
                return Err(invalid(
                    format!("classes[{i}].c2_a"),
                    "c2_a must be finite and strictly positive",
                ));
            }
            let h = parts.h[i];
            if !(h.is_finite() && h > 0.0) {
                return Err(invalid(format!("classes[{i}].h"), "h must be positive"));
            }
            if !parts.hat_lambda[i].is_finite() {
                return Err(invalid(
                    format!("classes[{i}].hat_lambda"),
                    "hat_lambda must be finite",
                ));
            }
        }
        for j in 0..nj {
            let c2 = parts.c2_service[j];
            if !(c2.is_finite() && c2 >= 0.0) {
                return Err(invalid(
                    format!("activities[{j}].c2_s"),
                    "c2_s must be finite and nonnegative",
                ));
            }
            if !parts.hat_mu[j].is_finite() {
                return Err(invalid(
                    format!("activities[{j}].hat_mu"),
                    "hat_mu must be finite",
                ));
            }
        }
        if !(parts.gamma.is_finite() && parts.gamma > 0.0) {
            return Err(invalid("gamma", "gamma must be positive"));
        }
        Ok(PssInstance {
            parts,
            by_class,
            by_server,
        })
    }

    pub fn parts(&self) -> &InstanceParts {
        &self.parts
    }

    pub fn to_parts(&self) -> InstanceParts {
        self.parts.clone()
    }

    pub fn num_classes(&self) -> usize {
        self.parts.num_classes
    }

    pub fn num_servers(&self) -> usize {
        self.parts.num_servers
    }

    pub fn num_activities(&self) -> usize {
        self.parts.activities.len()
    }

    pub fn activities(&self) -> &[ActivityId] {
        &self.parts.activities
    }

    pub fn activity(&self, j: usize) -> ActivityId {
        self.parts.activities[j]
    }

    pub fn position_of(&self, class: usize, server: usize) -> Option<usize> {
        self.by_class
            .get(class)?
            .iter()
            .copied()
            .find(|&j| self.parts.activities[j].server == server)
    }

    /// Activities of class `i` (the set `J_i`).
    pub fn class_activities(&self, i: usize) -> &[usize] {
        &self.by_class[i]
    }

    /// Activities of server `k` (the set `J^k`).
    pub fn server_activities(&self, k: usize) -> &[usize] {
        &self.by_server[k]
    }

    pub fn lambda(&self) -> &[Rational] {
        &self.parts.lambda
    }

    pub fn mu(&self) -> &[Rational] {
        &self.parts.mu
    }

    pub fn hat_lambda(&self) -> &[f64] {
        &self.parts.hat_lambda
    }

    pub fn hat_mu(&self) -> &[f64] {
        &self.parts.hat_mu
    }

    pub fn c2_arrival(&self) -> &[f64] {
        &self.parts.c2_arrival
    }

    pub fn c2_service(&self) -> &[f64] {
        &self.parts.c2_service
    }

    pub fn h(&self) -> &[f64] {
        &self.parts.h
    }

    pub fn gamma(&self) -> f64 {
        self.parts.gamma
    }

    /// `R` (I x J) and `G` (K x J), columns in activity order.
    pub fn build_matrices(&self) -> MatrixPair {
        let (ni, nk, nj) = (self.num_classes(), self.num_servers(), self.num_activities());
        let mut r = vec![vec![Rational::zero(); nj]; ni];
        let mut g = vec![vec![0u8; nj]; nk];
        for (j, a) in self.activities().iter().enumerate() {
            r[a.class][j] = self.parts.mu[j].clone();
            g[a.server][j] = 1;
        }
        MatrixPair { r, g }
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let doc: InstanceDoc = serde_json::from_str(text)?;
        doc.into_instance()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&InstanceDoc::from(self)).expect("instance serializes")
    }
}

/// Alias matching the operation name used throughout the docs.
pub fn load_instance(document: &[u8]) -> Result<PssInstance, ModelError> {
    let doc: InstanceDoc = serde_json::from_slice(document)?;
    doc.into_instance()
}

/// The matrices `R` and `G`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixPair {
    pub r: Vec<Vec<Rational>>,
    pub g: Vec<Vec<u8>>,
}

impl MatrixPair {
    /// Recovers the activity list from the nonzero pattern.
    pub fn activities(&self) -> Vec<ActivityId> {
        let nj = self.g.first().map_or(0, Vec::len);
        (0..nj)
            .map(|j| ActivityId {
                class: self.r.iter().position(|row| !row[j].is_zero()).unwrap_or(usize::MAX),
                server: self.g.iter().position(|row| row[j] == 1).unwrap_or(usize::MAX),
            })
            .collect()
    }
}

// ---- external format ------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassDoc {
    #[serde(with = "serde_rational")]
    pub lambda: Rational,
    #[serde(default)]
    pub hat_lambda: f64,
    pub c2_a: f64,
    pub h: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActivityDoc {
    pub i: usize,
    pub k: usize,
    #[serde(with = "serde_rational")]
    pub mu: Rational,
    #[serde(default)]
    pub hat_mu: f64,
    pub c2_s: f64,
}

/// The JSON instance document. Class and server indices are 1-based.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceDoc {
    pub classes: Vec<ClassDoc>,
    pub servers: usize,
    pub activities: Vec<ActivityDoc>,
    pub gamma: f64,
}

impl InstanceDoc {
    pub fn into_instance(self) -> Result<PssInstance, ModelError> {
        let mut activities = Vec::with_capacity(self.activities.len());
        for (j, a) in self.activities.iter().enumerate() {
            if a.i == 0 {
                return Err(invalid(format!("activities[{j}].i"), "indices are 1-based"));
            }
            if a.k == 0 {
                return Err(invalid(format!("activities[{j}].k"), "indices are 1-based"));
            }
            activities.push(ActivityId {
                class: a.i - 1,
                server: a.k - 1,
            });
        }
        PssInstance::from_parts(InstanceParts {
            num_classes: self.classes.len(),
            num_servers: self.servers,
            activities,
            lambda: self.classes.iter().map(|c| c.lambda.clone()).collect(),
            mu: self.activities.iter().map(|a| a.mu.clone()).collect(),
            hat_lambda: self.classes.iter().map(|c| c.hat_lambda).collect(),
            hat_mu: self.activities.iter().map(|a| a.hat_mu).collect(),
            c2_arrival: self.classes.iter().map(|c| c.c2_a).collect(),
            c2_service: self.activities.iter().map(|a| a.c2_s).collect(),
            h: self.classes.iter().map(|c| c.h).collect(),
            gamma: self.gamma,
        })
    }
}

impl From<&PssInstance> for InstanceDoc {
    fn from(inst: &PssInstance) -> Self {
        let p = inst.parts();
        InstanceDoc {
            classes: (0..p.num_classes)
                .map(|i| ClassDoc {
                    lambda: p.lambda[i].clone(),
                    hat_lambda: p.hat_lambda[i],
                    c2_a: p.c2_arrival[i],
                    h: p.h[i],
                })
                .collect(),
            servers: p.num_servers,
            activities: p
                .activities
                .iter()
                .enumerate()
                .map(|(j, a)| ActivityDoc {
                    i: a.class + 1,
                    k: a.server + 1,
                    mu: p.mu[j].clone(),
                    hat_mu: p.hat_mu[j],
                    c2_s: p.c2_service[j],
                })
                .collect(),
            gamma: p.gamma,
        }
    }
}
