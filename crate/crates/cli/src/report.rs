//! JSON report documents.

use serde::Serialize;
use serde_json::{json, Value};

use pss_core::hjb::{compute_v0, dominant_mode, FeedbackPolicy, HjbSolution};
use pss_core::lp::{DecompositionVerdict, DualCoordinate, DualOutcome, DualSolution, LpAnalysis};
use pss_core::model::PssInstance;
use pss_core::qcp::{BoundReport, InequalityReport};
use pss_core::rational::{exact_vec, ExactValue};
use pss_core::McEstimate;

use crate::{CliError, LoadedInstance};

#[derive(Debug, Clone, Serialize)]
struct InstanceRef {
    source: String,
    sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    instance: InstanceRef,
    seed: u64,
    config: Value,
    summary: String,
    result: Value,
}

/// A report body and its one-line summary.
pub struct Body {
    pub summary: String,
    pub value: Value,
}

impl Report {
    pub fn new(command: &'static str, li: &LoadedInstance, seed: u64, config: &impl Serialize, body: Body) -> Self {
        Report {
            tool: "pss",
            version: env!("CARGO_PKG_VERSION"),
            command,
            instance: InstanceRef {
                source: li.source.clone(),
                sha256: li.sha256.clone(),
            },
            seed,
            config: serde_json::to_value(config).unwrap_or(Value::Null),
            summary: body.summary,
            result: body.value,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn summary(&self) -> String {
        format!("{}: {}", self.command, self.summary)
    }

    pub fn result(&self) -> &Value {
        &self.result
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DualView {
    pub y: Vec<ExactValue>,
    pub z: Vec<ExactValue>,
}

impl From<&DualSolution> for DualView {
    fn from(d: &DualSolution) -> Self {
        DualView {
            y: exact_vec(&d.y),
            z: exact_vec(&d.z),
        }
    }
}

fn coordinate_label(c: DualCoordinate) -> String {
    match c {
        DualCoordinate::Y(i) => format!("y{}", i + 1),
        DualCoordinate::Z(k) => format!("z{}", k + 1),
    }
}

pub fn analysis(inst: &PssInstance, an: &LpAnalysis) -> Body {
    let labels: Vec<String> = inst.activities().iter().map(|a| a.to_string()).collect();
    let modes: Vec<Value> = an
        .modes
        .iter()
        .zip(&an.degenerate)
        .map(|(m, &deg)| {
            json!({
                "mode": m.index + 1,
                "xi": exact_vec(&m.xi),
                "support": m.support().iter().map(|&j| labels[j].clone()).collect::<Vec<_>>(),
                "degenerate": deg,
            })
        })
        .collect();
    let dual = match &an.dual {
        DualOutcome::Unique(d) => json!({ "unique": true, "solution": DualView::from(d) }),
        DualOutcome::NonUnique {
            witnesses,
            coordinate,
            ranges,
        } => {
            let names: Vec<String> = (0..inst.num_classes())
                .map(|i| format!("y{}", i + 1))
                .chain((0..inst.num_servers()).map(|k| format!("z{}", k + 1)))
                .collect();
            json!({
                "unique": false,
                "varying_coordinate": coordinate_label(*coordinate),
                "witnesses": [DualView::from(&witnesses[0]), DualView::from(&witnesses[1])],
                "ranges": names.iter().zip(ranges).map(|(n, (lo, hi))| json!({
                    "coordinate": n,
                    "min": ExactValue::from(lo),
                    "max": ExactValue::from(hi),
                })).collect::<Vec<_>>(),
            })
        }
    };
    let classification = an.classification.as_ref().map(|c| {
        c.iter()
            .zip(&labels)
            .map(|(tag, l)| json!({ "activity": l, "class": format!("{tag:?}") }))
            .collect::<Vec<_>>()
    });
    let dec = &an.decomposability;
    let verdict = match &dec.verdict {
        DecompositionVerdict::Decomposable(d) => json!({
            "verdict": "decomposable",
            "alpha": exact_vec(&d.alpha),
            "beta": exact_vec(&d.beta),
        }),
        DecompositionVerdict::NotDecomposable { witness } => json!({
            "verdict": "not-decomposable",
            "witness": witness.to_string(),
        }),
        DecompositionVerdict::Undetermined => json!({ "verdict": "undetermined" }),
    };
    let a = &an.assumptions;
    let failure = a.first_failure();
    let summary = match &failure {
        None => format!("{} modes, all assumptions hold", an.modes.len()),
        Some(f) => format!("assumption part {} fails: {f}", f.part()),
    };
    Body {
        summary,
        value: json!({
            "activities": labels,
            "rho_star": ExactValue::from(&an.rho_star),
            "assumptions": {
                "ehtc": a.ehtc,
                "full_load": a.full_load,
                "dual_unique": a.dual_unique,
                "all_pass": a.all_pass(),
                "failed_part": failure.as_ref().map(|f| f.part()),
                "failure": failure.as_ref().map(|f| f.to_string()),
            },
            "modes": modes,
            "dual": dual,
            "classification": classification,
            "decomposability": {
                "full_grid": dec.full_grid,
                "result": verdict,
                "lambda_over_alpha": dec.lambda_over_alpha.as_ref().map(ExactValue::from),
                "matches_dual": dec.matches_dual,
            },
            "q": an.q.map(|q| q + 1),
            "coefficients": an.coefficients,
        }),
    }
}

fn policy_view(fp: &FeedbackPolicy) -> Value {
    json!(fp
        .intervals
        .iter()
        .map(|iv| json!({
            "from": iv.lo,
            "to": if iv.hi.is_finite() { json!(iv.hi) } else { json!("inf") },
            "mode": iv.mode + 1,
        }))
        .collect::<Vec<_>>())
}

pub fn hjb(inst: &PssInstance, an: &LpAnalysis, sol: &HjbSolution) -> Result<Body, CliError> {
    let v0 = compute_v0(inst, an, sol).map_err(CliError::Assumption)?;
    let standing = an.standing().map_err(CliError::Assumption)?;
    let fp = pss_core::hjb::extract_policy(sol);
    Ok(Body {
        summary: format!("u(0) = {:.6}, V0 = {:.6}, {} switch point(s)", sol.u0, v0, sol.switch_points.len()),
        value: json!({
            "coefficients": standing.coefficients,
            "dominant_mode": dominant_mode(standing.coefficients).map(|m| m + 1),
            "u0": sol.u0,
            "v0": v0,
            "q": standing.q + 1,
            "switch_points": sol.switch_points,
            "policy": policy_view(&fp),
            "residual_max": sol.residual_max,
            "min_excess": sol.min_excess,
            "min_excess_raw": sol.min_excess_raw,
            "iterations": sol.iterations,
        }),
    })
}

/// `u` at `z` by linear interpolation on the grid.
fn value_at(sol: &HjbSolution, z: f64) -> f64 {
    let dz = sol.grid[1] - sol.grid[0];
    let x = (z / dz).max(0.0);
    let i = (x.floor() as usize).min(sol.grid.len() - 2);
    let w = (x - i as f64).min(1.0);
    sol.u[i] * (1.0 - w) + sol.u[i + 1] * w
}

pub fn wcp(sol: &HjbSolution, estimates: &[(String, McEstimate)], z0: f64) -> Body {
    let u = value_at(sol, z0);
    let rows: Vec<Value> = estimates
        .iter()
        .map(|(label, e)| {
            json!({
                "policy": label,
                "estimate": e,
                "hjb_value": u,
                "difference": e.mean - u,
                "within_ci": e.contains(u),
            })
        })
        .collect();
    let summary = estimates
        .iter()
        .map(|(l, e)| format!("{l} {:.5}±{:.5}", e.mean, e.half_width_95))
        .collect::<Vec<_>>()
        .join(", ");
    Body {
        summary: format!("u({z0}) = {u:.5}; {summary}"),
        value: json!({ "hjb_value": u, "z0": z0, "estimates": rows }),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct QcpEntry {
    pub policy: String,
    pub estimate: McEstimate,
    pub events_rep0: usize,
    pub checks: InequalityReport,
}

pub fn qcp(inst: &PssInstance, an: &LpAnalysis, sol: &HjbSolution, n: u64, entries: Vec<QcpEntry>) -> Result<Body, CliError> {
    let v0 = compute_v0(inst, an, sol).map_err(CliError::Assumption)?;
    let summary = entries
        .iter()
        .map(|e| format!("{} {:.4}±{:.4}", e.policy, e.estimate.mean, e.estimate.half_width_95))
        .collect::<Vec<_>>()
        .join(", ");
    Ok(Body {
        summary: format!("n = {n}, V0 = {v0:.4}; {summary}"),
        value: json!({ "n": n, "v0": v0, "policies": entries }),
    })
}

pub fn bound(an: &LpAnalysis, sol: &HjbSolution, fp: &FeedbackPolicy, b: BoundReport) -> Body {
    let summary = format!(
        "{:?} (V0 = {:.4}, {} estimates)",
        b.verdict,
        b.v0,
        b.entries.len()
    )
    .to_uppercase();
    Body {
        summary,
        value: json!({
            "verdict": b.verdict,
            "v0": b.v0,
            "u0": b.u0,
            "q": b.q + 1,
            "modes": an.modes.len(),
            "switch_points": sol.switch_points,
            "threshold_policy": policy_view(fp),
            "horizon": b.horizon,
            "reps": b.n_reps,
            "entries": b.entries,
            "best": b.best,
            "best_nonincreasing_in_n": b.best_nonincreasing,
        }),
    }
}
