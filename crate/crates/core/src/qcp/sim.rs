//! Event loop of the prelimit system.
//!
//! Each activity owns a renewal service clock that runs at the rate the
//! allocation gives it (preemptive-resume processor sharing), so the number
//! of completions of activity `j` is exactly `S_j(T_j(t))`.

use serde::Serialize;

use super::policy::allocate;
use super::renewal::{make_renewal_source, replication_rng, DistributionSpec, RenewalSource};
use super::{PolicySpec, QcpError, SystemData};
use crate::lp::LpAnalysis;
use crate::model::PssInstance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EventKind {
    Start,
    Arrival { class: usize },
    Departure { activity: usize },
    Horizon,
}

#[derive(Debug, Clone)]
pub(crate) struct State {
    pub queue: Vec<i64>,
    pub arrivals: Vec<u64>,
    pub departures: Vec<u64>,
    pub busy: Vec<f64>,
    pub idle: Vec<f64>,
}

pub(crate) trait Observer {
    /// The state is constant on `[t0, t1)`.
    fn interval(&mut self, _t0: f64, _t1: f64, _state: &State) {}
    fn event(&mut self, _t: f64, _kind: EventKind, _state: &State, _allocation: &[f64]) {}
}

/// Unscaled processes at time 0, after every event and at the horizon.
/// Row `r` holds the values at `times[r]`; `allocation[r]` is in effect on
/// `[times[r], times[r+1])`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QcpTrace {
    pub n: u64,
    pub horizon: f64,
    pub seed: u64,
    pub rep: u64,
    pub policy: String,
    pub lambda_n: Vec<f64>,
    pub mu_n: Vec<f64>,
    pub times: Vec<f64>,
    pub kinds: Vec<EventKind>,
    pub queue: Vec<Vec<i64>>,
    pub arrivals: Vec<Vec<u64>>,
    pub departures: Vec<Vec<u64>>,
    pub busy: Vec<Vec<f64>>,
    pub idle: Vec<Vec<f64>>,
    pub allocation: Vec<Vec<f64>>,
}

impl QcpTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

pub(crate) struct TraceRecorder {
    pub trace: QcpTrace,
}

impl Observer for TraceRecorder {
    fn event(&mut self, t: f64, kind: EventKind, state: &State, allocation: &[f64]) {
        let tr = &mut self.trace;
        tr.times.push(t);
        tr.kinds.push(kind);
        tr.queue.push(state.queue.clone());
        tr.arrivals.push(state.arrivals.clone());
        tr.departures.push(state.departures.clone());
        tr.busy.push(state.busy.clone());
        tr.idle.push(state.idle.clone());
        tr.allocation.push(allocation.to_vec());
    }
}

/// `int e^{-gamma t} h . X^n(t) / sqrt(n) dt`, exact for piecewise constant
/// queue lengths.
pub(crate) struct CostAccumulator<'a> {
    pub data: &'a SystemData,
    pub cost: f64,
    pub final_cost_rate: f64,
}

impl Observer for CostAccumulator<'_> {
    fn interval(&mut self, t0: f64, t1: f64, state: &State) {
        if t1 <= t0 {
            return;
        }
        let g = self.data.gamma;
        let weight = (-g * t0).exp() * -(-g * (t1 - t0)).exp_m1() / g;
        self.cost += self.data.holding_cost(&state.queue) * weight;
    }

    fn event(&mut self, _t: f64, _kind: EventKind, state: &State, _allocation: &[f64]) {
        self.final_cost_rate = self.data.holding_cost(&state.queue);
    }
}

/// Neumaier summation, so cumulative clocks stay accurate over many events.
#[derive(Debug, Clone, Copy, Default)]
struct Compensated {
    sum: f64,
    carry: f64,
}

impl Compensated {
    fn add(&mut self, v: f64) -> f64 {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry += (self.sum - t) + v;
        } else {
            self.carry += (v - t) + self.sum;
        }
        self.sum = t;
        self.sum + self.carry
    }
}

pub(crate) fn simulate<O: Observer>(
    data: &SystemData,
    policy: &PolicySpec,
    horizon: f64,
    seed: u64,
    rep: u64,
    obs: &mut O,
) -> Result<(), QcpError> {
    if !(horizon.is_finite() && horizon >= 0.0) {
        return Err(QcpError::Horizon(horizon));
    }
    let ni = data.num_classes;
    let nj = data.num_activities();
    let mut arrival_src: Vec<RenewalSource> = (0..ni)
        .map(|i| {
            make_renewal_source(
                DistributionSpec::for_scv(data.c2_arrival[i]),
                data.lambda_n[i],
                replication_rng(seed, rep, i as u64),
            )
        })
        .collect::<Result<_, _>>()?;
    let mut service_src: Vec<RenewalSource> = (0..nj)
        .map(|j| {
            make_renewal_source(
                DistributionSpec::for_scv(data.c2_service[j]),
                data.mu_n[j],
                replication_rng(seed, rep, (ni + j) as u64),
            )
        })
        .collect::<Result<_, _>>()?;
    let mut next_arrival: Vec<f64> = arrival_src.iter_mut().map(|s| s.next_interval()).collect();
    let mut remaining: Vec<f64> = service_src.iter_mut().map(|s| s.next_interval()).collect();

    let mut state = State {
        queue: vec![0; ni],
        arrivals: vec![0; ni],
        departures: vec![0; nj],
        busy: vec![0.0; nj],
        idle: vec![0.0; data.num_servers],
    };
    let mut busy_acc = vec![Compensated::default(); nj];
    let mut idle_acc = vec![Compensated::default(); data.num_servers];
    let mut alloc = vec![0.0; nj];
    allocate(policy, &state.queue, 0.0, data, &mut alloc);
    obs.event(0.0, EventKind::Start, &state, &alloc);

    let mut t = 0.0;
    loop {
        let mut t_next = f64::INFINITY;
        let mut kind = EventKind::Horizon;
        for (i, &ta) in next_arrival.iter().enumerate() {
            if ta < t_next {
                t_next = ta;
                kind = EventKind::Arrival { class: i };
            }
        }
        for j in 0..nj {
            if alloc[j] > 0.0 {
                let tc = t + remaining[j] / alloc[j];
                if tc < t_next {
                    t_next = tc;
                    kind = EventKind::Departure { activity: j };
                }
            }
        }
        let end = t_next.min(horizon);
        if end > t {
            obs.interval(t, end, &state);
            let dt = end - t;
            for j in 0..nj {
                if alloc[j] > 0.0 {
                    state.busy[j] = busy_acc[j].add(alloc[j] * dt);
                    remaining[j] = (remaining[j] - alloc[j] * dt).max(0.0);
                }
            }
            for (k, acts) in data.server_acts.iter().enumerate() {
                let used: f64 = acts.iter().map(|&j| alloc[j]).sum();
                let free = (1.0 - used).max(0.0);
                if free > 0.0 {
                    state.idle[k] = idle_acc[k].add(free * dt);
                }
            }
            t = end;
        }
        if t_next > horizon {
            if horizon > 0.0 {
                obs.event(horizon, EventKind::Horizon, &state, &alloc);
            }
            return Ok(());
        }
        match kind {
            EventKind::Arrival { class } => {
                state.queue[class] += 1;
                state.arrivals[class] += 1;
                next_arrival[class] += arrival_src[class].next_interval();
            }
            EventKind::Departure { activity } => {
                state.queue[data.class_of[activity]] -= 1;
                state.departures[activity] += 1;
                remaining[activity] = service_src[activity].next_interval();
            }
            EventKind::Start | EventKind::Horizon => unreachable!("not a simulated event"),
        }
        let w = data.workload(&state.queue);
        allocate(policy, &state.queue, w, data, &mut alloc);
        obs.event(t, kind, &state, &alloc);
    }
}

pub(crate) fn empty_trace(data: &SystemData, policy: &PolicySpec, horizon: f64, seed: u64, rep: u64) -> QcpTrace {
    QcpTrace {
        n: data.n,
        horizon,
        seed,
        rep,
        policy: policy.label(),
        lambda_n: data.lambda_n.clone(),
        mu_n: data.mu_n.clone(),
        times: Vec::new(),
        kinds: Vec::new(),
        queue: Vec::new(),
        arrivals: Vec::new(),
        departures: Vec::new(),
        busy: Vec::new(),
        idle: Vec::new(),
        allocation: Vec::new(),
    }
}

/// Simulates replication `rep` on `[0, horizon]`.
pub fn run_qcp(
    inst: &PssInstance,
    analysis: &LpAnalysis,
    n: u64,
    policy: &PolicySpec,
    horizon: f64,
    seed: u64,
    rep: u64,
) -> Result<QcpTrace, QcpError> {
    let data = SystemData::new(inst, analysis, n)?;
    policy.validate(inst, analysis)?;
    let mut rec = TraceRecorder {
        trace: empty_trace(&data, policy, horizon, seed, rep),
    };
    simulate(&data, policy, horizon, seed, rep, &mut rec)?;
    Ok(rec.trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances;
    use crate::lp::analyze;

    #[test]
    fn horizon_zero_is_empty() {
        let inst = instances::example_a();
        let a = analyze(&inst).unwrap();
        let tr = run_qcp(&inst, &a, 100, &PolicySpec::static_mode(0), 0.0, 1, 0).unwrap();
        assert_eq!(tr.len(), 1);
        assert!(tr.queue[0].iter().all(|&x| x == 0));
        assert!(tr.busy[0].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn balance_and_admissibility() {
        let inst = instances::example_a1();
        let a = analyze(&inst).unwrap();
        for policy in [
            PolicySpec::static_mode(0),
            PolicySpec::static_mode(1).with_work_conserving(true),
            PolicySpec::c_mu(&inst),
        ] {
            let tr = run_qcp(&inst, &a, 25, &policy, 5.0, 3, 0).unwrap();
            assert!(tr.len() > 100);
            for r in 0..tr.len() {
                for i in 0..2 {
                    let served: u64 = inst.class_activities(i).iter().map(|&j| tr.departures[r][j]).sum();
                    assert_eq!(tr.arrivals[r][i] as i64, tr.queue[r][i] + served as i64);
                    assert!(tr.queue[r][i] >= 0);
                }
                for k in 0..2 {
                    let s: f64 = inst.server_activities(k).iter().map(|&j| tr.allocation[r][j]).sum();
                    assert!(s <= 1.0 + 1e-12);
                    let used: f64 = inst.server_activities(k).iter().map(|&j| tr.busy[r][j]).sum();
                    assert!((tr.idle[r][k] - (tr.times[r] - used)).abs() < 1e-9);
                }
                for j in 0..4 {
                    if tr.allocation[r][j] > 0.0 {
                        assert!(tr.queue[r][inst.activity(j).class] >= 1);
                    }
                }
            }
        }
    }

    #[test]
    fn seed_determinism() {
        let inst = instances::example_a1();
        let a = analyze(&inst).unwrap();
        let p = PolicySpec::c_mu(&inst);
        let x = run_qcp(&inst, &a, 25, &p, 3.0, 42, 7).unwrap();
        let y = run_qcp(&inst, &a, 25, &p, 3.0, 42, 7).unwrap();
        assert_eq!(x, y);
        let z = run_qcp(&inst, &a, 25, &p, 3.0, 42, 8).unwrap();
        assert_ne!(x.times, z.times);
    }

    #[test]
    fn negative_rate_refused() {
        let mut p = instances::mm1().to_parts();
        p.hat_lambda[0] = -5.0;
        let inst = PssInstance::from_parts(p).unwrap();
        let a = analyze(&inst).unwrap();
        let err = run_qcp(&inst, &a, 4, &PolicySpec::static_mode(0), 1.0, 0, 0).unwrap_err();
        assert_eq!(
            err,
            QcpError::NegativeRate {
                what: "arrival rate of class 1".into(),
                n: 4,
                min_n: 26
            }
        );
    }
}
