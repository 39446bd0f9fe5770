//! Diffusion-scaled processes of a trace and the pathwise workload checks.

use serde::Serialize;

use super::{QcpError, QcpTrace, SystemData};
use crate::lp::LpAnalysis;
use crate::model::PssInstance;
use crate::wcp::skorokhod_map;

/// Scaled processes at every trace row. `f_hat_left[r]` is the left limit of
/// `F^n` at `times[r]` (counts of row `r-1`, clocks of row `r`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaledSeries {
    pub n: u64,
    pub times: Vec<f64>,
    pub x_hat: Vec<Vec<f64>>,
    pub a_hat: Vec<Vec<f64>>,
    /// `S^n_j(T^n_j(t))` centred and scaled.
    pub s_hat: Vec<Vec<f64>>,
    pub i_hat: Vec<Vec<f64>>,
    pub w_hat: Vec<f64>,
    pub l_hat: Vec<f64>,
    pub l_an: Vec<f64>,
    pub h_hat: Vec<f64>,
    pub f_hat: Vec<f64>,
    pub f_hat_left: Vec<f64>,
    /// Reflection of `F^n` evaluated at row times.
    pub reflected_f: Vec<f64>,
    /// Max over rows of `|W - F - L - L_AN|` relative to the row scale.
    pub identity_residual: f64,
}

/// Per-row magnitude used to turn absolute rounding into relative error.
fn row_scale(w: f64, f: f64, l: f64, l_an: f64) -> f64 {
    1.0 + w.abs() + f.abs() + l.abs() + l_an.abs()
}

struct Scaler<'a> {
    data: &'a SystemData,
    trace: &'a QcpTrace,
}

impl Scaler<'_> {
    fn f_hat(&self, arrivals: &[u64], departures: &[u64], t: f64, busy: &[f64]) -> f64 {
        let d = self.data;
        let sn = d.sqrt_n;
        let mut total = 0.0;
        for i in 0..d.num_classes {
            let mut term = (arrivals[i] as f64 - self.trace.lambda_n[i] * t) / sn + d.hat_lambda[i] * t;
            for &j in &d.class_acts[i] {
                term -= (departures[j] as f64 - self.trace.mu_n[j] * busy[j]) / sn;
                term -= d.hat_mu[j] * busy[j];
            }
            total += d.y[i] * term;
        }
        total
    }
}

pub fn compute_scaled(
    trace: &QcpTrace,
    inst: &PssInstance,
    analysis: &LpAnalysis,
) -> Result<ScaledSeries, QcpError> {
    let data = SystemData::new(inst, analysis, trace.n)?;
    let d = &data;
    let sn = d.sqrt_n;
    let sc = Scaler { data: d, trace };
    let rows = trace.len();
    let mut s = ScaledSeries {
        n: trace.n,
        times: trace.times.clone(),
        x_hat: Vec::with_capacity(rows),
        a_hat: Vec::with_capacity(rows),
        s_hat: Vec::with_capacity(rows),
        i_hat: Vec::with_capacity(rows),
        w_hat: Vec::with_capacity(rows),
        l_hat: Vec::with_capacity(rows),
        l_an: Vec::with_capacity(rows),
        h_hat: Vec::with_capacity(rows),
        f_hat: Vec::with_capacity(rows),
        f_hat_left: Vec::with_capacity(rows),
        reflected_f: Vec::with_capacity(rows),
        identity_residual: 0.0,
    };
    for r in 0..rows {
        let t = trace.times[r];
        let x: Vec<f64> = trace.queue[r].iter().map(|&v| v as f64 / sn).collect();
        let a: Vec<f64> = (0..d.num_classes)
            .map(|i| (trace.arrivals[r][i] as f64 - trace.lambda_n[i] * t) / sn)
            .collect();
        let sh: Vec<f64> = (0..d.num_activities())
            .map(|j| (trace.departures[r][j] as f64 - trace.mu_n[j] * trace.busy[r][j]) / sn)
            .collect();
        let ih: Vec<f64> = trace.idle[r].iter().map(|&v| sn * v).collect();
        let w = d.workload(&trace.queue[r]);
        let l: f64 = ih.iter().zip(&d.z).map(|(a, b)| a * b).sum();
        let l_an: f64 = (0..d.num_activities())
            .filter(|&j| d.always_nonbasic[j])
            .map(|j| {
                let (i, k) = (d.class_of[j], d.server_of[j]);
                (d.z[k] - d.y[i] * d.mu[j]) * trace.busy[r][j]
            })
            .sum::<f64>()
            * sn;
        let f = sc.f_hat(&trace.arrivals[r], &trace.departures[r], t, &trace.busy[r]);
        let f_left = if r == 0 {
            f
        } else {
            sc.f_hat(&trace.arrivals[r - 1], &trace.departures[r - 1], t, &trace.busy[r])
        };
        let resid = (w - f - l - l_an).abs() / row_scale(w, f, l, l_an);
        s.identity_residual = s.identity_residual.max(resid);
        s.h_hat.push(d.holding_cost(&trace.queue[r]));
        s.x_hat.push(x);
        s.a_hat.push(a);
        s.s_hat.push(sh);
        s.i_hat.push(ih);
        s.w_hat.push(w);
        s.l_hat.push(l);
        s.l_an.push(l_an);
        s.f_hat.push(f);
        s.f_hat_left.push(f_left);
    }
    // F^n is affine between events, so its running minimum is attained at
    // event times or at left limits there.
    let mut interleaved = Vec::with_capacity(2 * rows);
    for r in 0..rows {
        if r > 0 {
            interleaved.push(s.f_hat_left[r]);
        }
        interleaved.push(s.f_hat[r]);
    }
    let (phi, _) = skorokhod_map(&interleaved);
    s.reflected_f = (0..rows).map(|r| phi[if r == 0 { 0 } else { 2 * r }]).collect();

    const LIMIT: f64 = 1e-6;
    if s.identity_residual > LIMIT {
        return Err(QcpError::IdentityBreach {
            residual: s.identity_residual,
            limit: LIMIT,
        });
    }
    Ok(s)
}

/// Largest violation of each pathwise relation over the trace; zero means
/// the relation holds at every row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Default)]
pub struct InequalityReport {
    pub rows: usize,
    /// `W = F + L + L_AN`, relative.
    pub identity: f64,
    /// `W >= Gamma_1[F]` at row times and left limits, relative.
    pub workload_above_reflection: f64,
    /// `H >= h_q / y_q W`, relative.
    pub cost_above_workload: f64,
    /// `H = h_q / y_q W` when every class other than `q` is empty, relative.
    pub cost_equality: f64,
    /// Most negative queue length, as a positive number.
    pub negative_queue: f64,
    /// Largest decrease of a cumulative idleness.
    pub idle_decrease: f64,
    /// `|I_k - (t - sum T_j)|`.
    pub idle_identity: f64,
    /// `|A_i - X_i - sum D_j|`.
    pub conservation: f64,
    /// Largest `T_j` increment beyond elapsed time, or decrease.
    pub busy_lipschitz: f64,
    /// Largest per-server allocation above one.
    pub allocation_excess: f64,
    /// Rows where an empty class received service effort.
    pub allocation_to_empty: usize,
    /// Largest gap `W - Gamma_1[F]` (not a violation).
    pub max_reflection_gap: f64,
}

impl InequalityReport {
    pub fn max_violation(&self) -> f64 {
        [
            self.identity,
            self.workload_above_reflection,
            self.cost_above_workload,
            self.cost_equality,
            self.negative_queue,
            self.idle_decrease,
            self.idle_identity,
            self.conservation,
            self.busy_lipschitz,
            self.allocation_excess,
            self.allocation_to_empty as f64,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max_violation() <= tol
    }
}

pub fn check_trace_inequalities(
    trace: &QcpTrace,
    series: &ScaledSeries,
    inst: &PssInstance,
    analysis: &LpAnalysis,
) -> Result<InequalityReport, QcpError> {
    let data = SystemData::new(inst, analysis, trace.n)?;
    let d = &data;
    let ratio = d.h[d.q] / d.y[d.q];
    let mut rep = InequalityReport {
        rows: trace.len(),
        identity: series.identity_residual,
        ..Default::default()
    };

    let mut eta = 0.0f64;
    for r in 0..trace.len() {
        let w = series.w_hat[r];
        let scale = row_scale(w, series.f_hat[r], series.l_hat[r], series.l_an[r]);
        if r > 0 {
            eta = eta.max(-series.f_hat_left[r]);
            let left = series.f_hat_left[r] + eta;
            let w_left = series.w_hat[r - 1];
            let s_left = row_scale(w_left, series.f_hat_left[r], series.l_hat[r], series.l_an[r]);
            rep.workload_above_reflection = rep.workload_above_reflection.max((left - w_left) / s_left);
        }
        eta = eta.max(-series.f_hat[r]);
        let reflected = series.f_hat[r] + eta;
        rep.workload_above_reflection = rep.workload_above_reflection.max((reflected - w) / scale);
        rep.max_reflection_gap = rep.max_reflection_gap.max(w - reflected);

        let h = series.h_hat[r];
        let bound = ratio * w;
        let s144 = 1.0 + h.abs() + bound.abs();
        rep.cost_above_workload = rep.cost_above_workload.max((bound - h) / s144);
        let others_empty = (0..d.num_classes).all(|i| i == d.q || trace.queue[r][i] == 0);
        if others_empty {
            rep.cost_equality = rep.cost_equality.max((h - bound).abs() / s144);
        }

        let t = trace.times[r];
        for i in 0..d.num_classes {
            let x = trace.queue[r][i];
            rep.negative_queue = rep.negative_queue.max(-(x as f64));
            let served: u64 = d.class_acts[i].iter().map(|&j| trace.departures[r][j]).sum();
            let diff = trace.arrivals[r][i] as f64 - x as f64 - served as f64;
            rep.conservation = rep.conservation.max(diff.abs());
        }
        for (k, acts) in d.server_acts.iter().enumerate() {
            let used: f64 = acts.iter().map(|&j| trace.busy[r][j]).sum();
            rep.idle_identity = rep.idle_identity.max((trace.idle[r][k] - (t - used)).abs());
            let alloc: f64 = acts.iter().map(|&j| trace.allocation[r][j]).sum();
            rep.allocation_excess = rep.allocation_excess.max(alloc - 1.0);
            if r > 0 {
                rep.idle_decrease = rep.idle_decrease.max(trace.idle[r - 1][k] - trace.idle[r][k]);
            }
        }
        for j in 0..d.num_activities() {
            if trace.allocation[r][j] > 0.0 && trace.queue[r][d.class_of[j]] < 1 {
                rep.allocation_to_empty += 1;
            }
            if r > 0 {
                let dt = t - trace.times[r - 1];
                let dtj = trace.busy[r][j] - trace.busy[r - 1][j];
                rep.busy_lipschitz = rep.busy_lipschitz.max(dtj - dt).max(-dtj);
            }
        }
    }
    Ok(rep)
}
