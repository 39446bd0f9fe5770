use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pss_core::hjb::{extract_policy, solve_hjb, HjbConfig};
use pss_core::instances;
use pss_core::lp::{analyze, LpAnalysis};
use pss_core::model::InstanceParts;
use pss_core::qcp::{
    check_trace_inequalities, compute_scaled, estimate_qcp_cost, run_qcp, PolicySpec, QcpTrace,
};
use pss_core::rational::int;
use pss_core::PssInstance;

fn admissible(seed: u64) -> Option<(PssInstance, LpAnalysis)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes = rng.random_range(1..=3);
    let servers = rng.random_range(1..=3);
    let inst = instances::random_decomposable(&mut rng, classes, servers);
    let an = analyze(&inst).ok()?;
    an.assumptions.all_pass().then_some((inst, an))
}

fn policy_of(kind: u8, inst: &PssInstance, an: &LpAnalysis, mode: usize, wc: bool) -> PolicySpec {
    match kind {
        0 => PolicySpec::static_mode(mode % an.modes.len()).with_work_conserving(wc),
        1 => {
            let c = an.coefficients.as_ref().unwrap();
            let sol = solve_hjb(c, inst.gamma(), &HjbConfig::default_for(c, inst.gamma())).unwrap();
            PolicySpec::threshold(extract_policy(&sol)).with_work_conserving(wc)
        }
        _ => PolicySpec::c_mu(inst),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pathwise_inequalities_hold(
        inst_seed in any::<u64>(),
        sim_seed in any::<u64>(),
        kind in 0u8..3,
        mode in 0usize..32,
        wc in any::<bool>(),
        big in any::<bool>(),
    ) {
        let Some((inst, an)) = admissible(inst_seed) else { return Ok(()) };
        let policy = policy_of(kind, &inst, &an, mode, wc);
        let n = if big { 100 } else { 25 };
        let trace = run_qcp(&inst, &an, n, &policy, 3.0, sim_seed, 0).unwrap();
        let series = compute_scaled(&trace, &inst, &an).unwrap();
        let report = check_trace_inequalities(&trace, &series, &inst, &an).unwrap();
        prop_assert!(report.passes(1e-8), "{report:?}");
    }

    #[test]
    fn scaled_queue_is_the_unscaled_queue_over_sqrt_n(inst_seed in any::<u64>(), sim_seed in any::<u64>()) {
        let Some((inst, an)) = admissible(inst_seed) else { return Ok(()) };
        let trace = run_qcp(&inst, &an, 49, &PolicySpec::c_mu(&inst), 2.0, sim_seed, 0).unwrap();
        let series = compute_scaled(&trace, &inst, &an).unwrap();
        for (x, xh) in trace.queue.iter().zip(&series.x_hat) {
            for (&a, &b) in x.iter().zip(xh) {
                prop_assert_eq!(b, a as f64 / 7.0);
                prop_assert!((b * 7.0 - a as f64).abs() <= 4.0 * f64::EPSILON * (a.abs() as f64));
            }
        }
    }
}

#[test]
fn replications_are_reproducible_and_distinct() {
    let inst = instances::example_a1();
    let an = analyze(&inst).unwrap();
    let p = PolicySpec::static_mode(1);
    let a: QcpTrace = run_qcp(&inst, &an, 25, &p, 2.0, 4, 0).unwrap();
    assert_eq!(a, run_qcp(&inst, &an, 25, &p, 2.0, 4, 0).unwrap());
    assert_ne!(a.times, run_qcp(&inst, &an, 25, &p, 2.0, 4, 1).unwrap().times);
    assert_ne!(a.times, run_qcp(&inst, &an, 25, &p, 2.0, 5, 0).unwrap().times);
}

/// `E int_0^inf e^{-gamma t} X(t) dt / sqrt(n)` from an empty system for the
/// birth-death chain with rates `lambda n` and `mu n`, by a tridiagonal solve
/// of `(gamma - Q) v = x` on a truncated state space.
fn mm1_discounted(n: u64, lambda: f64, mu: f64, gamma: f64) -> f64 {
    let nf = n as f64;
    let (l, m) = (lambda * nf, mu * nf);
    let top = (60.0 * nf.sqrt() + 200.0) as usize;
    let mut cp = vec![0.0; top + 1];
    let mut dp = vec![0.0; top + 1];
    for x in 0..=top {
        let up = if x < top { l } else { 0.0 };
        let down = if x > 0 { m } else { 0.0 };
        let (c_prev, d_prev) = if x > 0 { (cp[x - 1], dp[x - 1]) } else { (0.0, 0.0) };
        let denom = gamma + up + down + down * c_prev;
        cp[x] = -up / denom;
        dp[x] = (x as f64 + down * d_prev) / denom;
    }
    let mut v = dp[top];
    for x in (0..top).rev() {
        v = dp[x] - cp[x] * v;
    }
    v / nf.sqrt()
}

#[test]
fn exact_oracle_limits() {
    // the scaled cost approaches the reflected Brownian motion value 1
    let v: Vec<f64> = [25, 100, 400, 1600].iter().map(|&n| mm1_discounted(n, 1.0, 1.0, 1.0)).collect();
    assert!(v.windows(2).all(|w| w[0] < w[1]) && v[3] < 1.0 && v[3] > 0.98, "{v:?}");
    // a stable queue has finite discounted cost near its stationary mean / gamma
    let stable = mm1_discounted(1, 0.5, 1.0, 1e-4) * 1e-4;
    assert!((stable - 1.0).abs() < 1e-3, "{stable}");
}

#[test]
fn mm1_cost_matches_the_exact_finite_n_value() {
    let inst = instances::mm1();
    let an = analyze(&inst).unwrap();
    let p = PolicySpec::static_mode(0);
    for (n, reps) in [(25, 4000), (100, 1500)] {
        let est = estimate_qcp_cost(&inst, &an, n, &p, reps, 12.0, 17).unwrap();
        let exact = mm1_discounted(n, 1.0, 1.0, 1.0);
        assert!(
            (est.mean - exact).abs() <= 1.5 * est.half_width_95,
            "n = {n}: {:.4} ± {:.4} vs exact {exact:.4}",
            est.mean,
            est.half_width_95
        );
    }
}

#[test]
fn mm1_time_average_matches_stationary_mean() {
    // lambda_n = n - sqrt(n), mu_n = n: rho = 0.9 at n = 100, stationary
    // mean queue rho / (1 - rho) = 9, scaled 0.9
    let mut parts = InstanceParts::first_order(
        1,
        vec![int(1)],
        vec![(pss_core::ActivityId { class: 0, server: 0 }, int(1))],
    );
    parts.hat_lambda[0] = -1.0;
    let inst = PssInstance::from_parts(parts).unwrap();
    let an = analyze(&inst).unwrap();
    let p = PolicySpec::static_mode(0);
    let (t0, t1) = (5.0, 50.0);
    let averages: Vec<f64> = (0..200)
        .map(|rep| {
            let tr = run_qcp(&inst, &an, 100, &p, t1, 23, rep).unwrap();
            let mut area = 0.0;
            for r in 0..tr.len() - 1 {
                let a = tr.times[r].max(t0);
                let b = tr.times[r + 1].max(t0);
                area += (b - a) * tr.queue[r][0] as f64;
            }
            area / (t1 - t0) / 10.0
        })
        .collect();
    let (mean, se) = pss_core::stats::mean_and_se(&averages);
    assert!((mean - 0.9).abs() <= 3.0 * se + 0.02, "{mean} ± {se}");
}

#[test]
fn static_mode_effort_fractions_approach_the_mode() {
    let inst = instances::example_a();
    let an = analyze(&inst).unwrap();
    for (m, mode) in an.modes.iter().enumerate() {
        let horizon = 20.0;
        let tr = run_qcp(&inst, &an, 400, &PolicySpec::static_mode(m), horizon, 31, 0).unwrap();
        let last = tr.busy.last().unwrap();
        for (j, xi) in mode.xi_f64().iter().enumerate() {
            let frac = last[j] / horizon;
            assert!((frac - xi).abs() <= 0.05, "mode {m} activity {j}: {frac} vs {xi}");
        }
    }
}
