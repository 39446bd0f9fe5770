//! Allocation policies for the queueing system.

use serde::{Deserialize, Serialize};

use super::{QcpError, SystemData};
use crate::hjb::FeedbackPolicy;
use crate::lp::LpAnalysis;
use crate::model::PssInstance;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PolicyKind {
    /// Follow LP mode `mode` (0-based).
    StaticMode { mode: usize },
    /// Pick the mode from the current scaled workload.
    WorkloadThreshold { policy: FeedbackPolicy },
    /// Each server serves its first nonempty activity in `order[k]`.
    ServerPriority { order: Vec<Vec<usize>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    #[serde(flatten)]
    pub kind: PolicyKind,
    pub work_conserving: bool,
}

impl PolicySpec {
    pub fn static_mode(mode: usize) -> Self {
        PolicySpec {
            kind: PolicyKind::StaticMode { mode },
            work_conserving: false,
        }
    }

    pub fn threshold(policy: FeedbackPolicy) -> Self {
        PolicySpec {
            kind: PolicyKind::WorkloadThreshold { policy },
            work_conserving: false,
        }
    }

    /// Priority by decreasing `h_i mu_ik` at each server; ties to the lower
    /// activity index.
    pub fn c_mu(inst: &PssInstance) -> Self {
        let order = (0..inst.num_servers())
            .map(|k| {
                let mut acts = inst.server_activities(k).to_vec();
                let key = |j: usize| inst.h()[inst.activity(j).class] * crate::rational::to_f64(&inst.mu()[j]);
                acts.sort_by(|&a, &b| key(b).total_cmp(&key(a)).then(a.cmp(&b)));
                acts
            })
            .collect();
        PolicySpec {
            kind: PolicyKind::ServerPriority { order },
            work_conserving: true,
        }
    }

    pub fn with_work_conserving(mut self, on: bool) -> Self {
        self.work_conserving = on;
        self
    }

    /// Short label such as `static:2`, `threshold` or `priority` (1-based).
    pub fn label(&self) -> String {
        let base = match &self.kind {
            PolicyKind::StaticMode { mode } => format!("static:{}", mode + 1),
            PolicyKind::WorkloadThreshold { .. } => "threshold".to_string(),
            PolicyKind::ServerPriority { .. } => "priority".to_string(),
        };
        if self.work_conserving && !matches!(self.kind, PolicyKind::ServerPriority { .. }) {
            format!("{base}+wc")
        } else {
            base
        }
    }

    pub(crate) fn validate(&self, inst: &PssInstance, analysis: &LpAnalysis) -> Result<(), QcpError> {
        let modes = analysis.modes.len();
        let check_mode = |m: usize| {
            if m < modes {
                Ok(())
            } else {
                Err(QcpError::Policy(format!("mode {} does not exist ({modes} modes)", m + 1)))
            }
        };
        match &self.kind {
            PolicyKind::StaticMode { mode } => check_mode(*mode),
            PolicyKind::WorkloadThreshold { policy } => {
                if policy.intervals.is_empty() {
                    return Err(QcpError::Policy("threshold policy has no intervals".into()));
                }
                policy.intervals.iter().try_for_each(|iv| check_mode(iv.mode))
            }
            PolicyKind::ServerPriority { order } => {
                if order.len() != inst.num_servers() {
                    return Err(QcpError::Policy(format!(
                        "priority lists for {} servers, instance has {}",
                        order.len(),
                        inst.num_servers()
                    )));
                }
                for (k, list) in order.iter().enumerate() {
                    let mut sorted = list.clone();
                    sorted.sort_unstable();
                    if sorted != inst.server_activities(k) {
                        return Err(QcpError::Policy(format!(
                            "priority list of server {} is not a permutation of its activities",
                            k + 1
                        )));
                    }
                }
                Ok(())
            }
        }
    }
}

/// Allocation `Xi` for the current queue lengths and scaled workload.
pub fn policy_allocation(
    policy: &PolicySpec,
    queue: &[i64],
    workload: f64,
    inst: &PssInstance,
    analysis: &LpAnalysis,
) -> Result<Vec<f64>, QcpError> {
    policy.validate(inst, analysis)?;
    let data = SystemData::new(inst, analysis, 1)?;
    let mut out = vec![0.0; data.num_activities()];
    allocate(policy, queue, workload, &data, &mut out);
    Ok(out)
}

pub(crate) fn allocate(policy: &PolicySpec, queue: &[i64], workload: f64, data: &SystemData, out: &mut [f64]) {
    match &policy.kind {
        PolicyKind::StaticMode { mode } => {
            follow_mode(&data.modes[*mode], policy.work_conserving, queue, data, out)
        }
        PolicyKind::WorkloadThreshold { policy: fp } => {
            let m = fp.mode_at(workload);
            follow_mode(&data.modes[m], policy.work_conserving, queue, data, out)
        }
        PolicyKind::ServerPriority { order } => {
            out.fill(0.0);
            for list in order {
                if let Some(&j) = list.iter().find(|&&j| queue[data.class_of[j]] >= 1) {
                    out[j] = 1.0;
                }
            }
        }
    }
}

fn follow_mode(xi: &[f64], work_conserving: bool, queue: &[i64], data: &SystemData, out: &mut [f64]) {
    for (j, o) in out.iter_mut().enumerate() {
        *o = if queue[data.class_of[j]] >= 1 { xi[j] } else { 0.0 };
    }
    if !work_conserving {
        return;
    }
    for acts in &data.server_acts {
        let masked: f64 = acts
            .iter()
            .filter(|&&j| queue[data.class_of[j]] < 1)
            .map(|&j| xi[j])
            .sum();
        let active: Vec<usize> = acts
            .iter()
            .copied()
            .filter(|&j| queue[data.class_of[j]] >= 1)
            .collect();
        if masked <= 0.0 || active.is_empty() {
            continue;
        }
        let weight: f64 = active.iter().map(|&j| xi[j]).sum();
        for &j in &active {
            let share = if weight > 0.0 {
                xi[j] / weight
            } else {
                1.0 / active.len() as f64
            };
            out[j] += masked * share;
        }
        // guard against rounding above full capacity
        let total: f64 = acts.iter().map(|&j| out[j]).sum();
        if total > 1.0 {
            for &j in acts {
                out[j] /= total;
            }
        }
    }
}
