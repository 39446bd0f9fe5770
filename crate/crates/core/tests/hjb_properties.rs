use proptest::prelude::*;

use pss_core::hjb::{extract_policy, solve_hjb, HjbConfig, HjbSolution};
use pss_core::instances;
use pss_core::lp::{analyze, ModeCoefficients};

/// `b/gamma^2 + z/gamma + exp(-c z)/(gamma c)`, `c` the positive root of
/// `s2/2 c^2 - b c - gamma`.
fn exact(b: f64, s2: f64, gamma: f64, z: f64) -> f64 {
    let c = (b + (b * b + 2.0 * s2 * gamma).sqrt()) / s2;
    b / (gamma * gamma) + z / gamma + (-c * z).exp() / (gamma * c)
}

fn solve(coeffs: &[ModeCoefficients], gamma: f64, grid_n: usize, z_max: Option<f64>) -> HjbSolution {
    let mut cfg = HjbConfig::default_for(coeffs, gamma);
    cfg.grid_n = grid_n;
    if let Some(z) = z_max {
        cfg.z_max = z;
    }
    solve_hjb(coeffs, gamma, &cfg).unwrap()
}

fn max_error(b: f64, s2: f64, gamma: f64, grid_n: usize) -> f64 {
    let sol = solve(&[ModeCoefficients { b, sigma2: s2 }], gamma, grid_n, None);
    sol.grid
        .iter()
        .zip(&sol.u)
        .map(|(&z, &u)| (u - exact(b, s2, gamma, z)).abs())
        .fold(0.0, f64::max)
}

fn assert_structure(sol: &HjbSolution) {
    assert!(sol.residual_max <= 1e-7, "residual {}", sol.residual_max);
    assert!(sol.min_excess >= 0.0, "excess {}", sol.min_excess);
    assert!(sol.u.windows(2).all(|w| w[1] >= w[0]), "u not nondecreasing");
}

#[test]
fn single_mode_error_is_second_order() {
    let (coarse, fine) = (max_error(0.0, 15.0 / 49.0, 1.0, 1000), max_error(0.0, 15.0 / 49.0, 1.0, 2000));
    let order = (coarse / fine).log2();
    assert!(order > 1.8, "order {order}");
}

#[test]
fn reference_instances_are_stable_under_truncation() {
    for inst in [
        instances::example_a1(),
        instances::example_a2(),
        instances::example_e(),
        instances::mm1(),
    ] {
        let an = analyze(&inst).unwrap();
        let c = an.coefficients.clone().unwrap();
        let gamma = inst.gamma();
        let base = HjbConfig::default_for(&c, gamma);
        let a = solve(&c, gamma, base.grid_n, None);
        // same cell width on twice the domain
        let b = solve(&c, gamma, 2 * base.grid_n, Some(2.0 * base.z_max));
        assert!((a.u0 - b.u0).abs() < base.tol_residual, "{} vs {}", a.u0, b.u0);
        assert_structure(&a);
    }
}

#[test]
fn example_e_policy_is_well_formed() {
    let inst = instances::example_e();
    let an = analyze(&inst).unwrap();
    let c = an.coefficients.clone().unwrap();
    let sol = solve(&c, inst.gamma(), 4000, None);
    let p = extract_policy(&sol);
    assert_eq!(p.intervals.len(), sol.switch_points.len() + 1);
    for (i, &z) in sol.grid.iter().enumerate().step_by(97) {
        if sol.switch_points.iter().all(|s| (s - z).abs() > 2.0 * sol.config.dz()) {
            assert_eq!(p.mode_at(z), sol.mode_at[i]);
        }
    }
}

fn coefficient() -> impl Strategy<Value = ModeCoefficients> {
    (-1.0f64..0.3, 0.1f64..3.0).prop_map(|(b, sigma2)| ModeCoefficients { b, sigma2 })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn single_mode_matches_closed_form(b in -1.0f64..0.5, s2 in 0.1f64..3.0, gamma in 0.5f64..2.0) {
        let err = max_error(b, s2, gamma, 4000);
        let scale = exact(b, s2, gamma, 0.0).abs().max(1.0);
        prop_assert!(err <= 5e-5 * scale, "max error {err:.3e}");
    }

    #[test]
    fn two_modes_switch_at_most_once(m1 in coefficient(), m2 in coefficient(), gamma in 0.5f64..2.0) {
        let sol = solve(&[m1, m2], gamma, 4000, None);
        assert_structure(&sol);
        prop_assert!(sol.switch_points.len() <= 1, "switches at {:?}", sol.switch_points);
    }

    #[test]
    fn several_modes_satisfy_the_hjb(modes in proptest::collection::vec(coefficient(), 1..5), gamma in 0.5f64..2.0) {
        let sol = solve(&modes, gamma, 4000, None);
        assert_structure(&sol);
        // the value never exceeds that of any single mode used alone
        for m in &modes {
            let alone = solve(std::slice::from_ref(m), gamma, 4000, Some(sol.config.z_max));
            prop_assert!(sol.u0 <= alone.u0 + 1e-9, "{} > {}", sol.u0, alone.u0);
        }
    }
}
