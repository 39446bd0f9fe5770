//! Reference instances.
//!
//! The 2x2 systems share service rates `mu = (3, 4, 6, 8)` on activities
//! `(1,1), (1,2), (2,1), (2,2)` and differ in arrival rates. The 3x3 systems
//! add a third class and server with seven activities. All second-order data
//! default to zero drift perturbation, unit SCVs, unit holding cost and
//! `gamma = 1`.

use crate::model::{ActivityId, InstanceParts, PssInstance};
use rand::Rng;

use crate::rational::{int, rat, to_f64, Rational};

fn act(i: usize, k: usize) -> ActivityId {
    ActivityId {
        class: i - 1,
        server: k - 1,
    }
}

fn build(parts: InstanceParts) -> PssInstance {
    PssInstance::from_parts(parts).expect("reference instance is valid")
}

fn two_by_two(lambda: [Rational; 2]) -> InstanceParts {
    InstanceParts::first_order(
        2,
        lambda.to_vec(),
        vec![
            (act(1, 1), int(3)),
            (act(1, 2), int(4)),
            (act(2, 1), int(6)),
            (act(2, 2), int(8)),
        ],
    )
}

fn three_by_three(mu32: i64) -> InstanceParts {
    InstanceParts::first_order(
        3,
        vec![int(5), int(4), int(6)],
        vec![
            (act(1, 1), int(3)),
            (act(1, 2), int(4)),
            (act(2, 1), int(6)),
            (act(2, 2), int(8)),
            (act(2, 3), int(6)),
            (act(3, 2), int(mu32)),
            (act(3, 3), int(6)),
        ],
    )
}

pub fn example_a() -> PssInstance {
    build(two_by_two([int(5), int(4)]))
}

pub fn example_b() -> PssInstance {
    build(two_by_two([rat(7, 2), int(7)]))
}

pub fn example_c() -> PssInstance {
    build(two_by_two([int(4), int(6)]))
}

/// Dual not unique.
pub fn example_d() -> PssInstance {
    build(three_by_three(7))
}

/// Three modes.
pub fn example_e() -> PssInstance {
    build(three_by_three(8))
}

/// Example A with `C^2_S = 4` on activity (1,1), all other SCVs 1.
pub fn example_a1() -> PssInstance {
    let mut p = example_a().to_parts();
    p.c2_service[0] = 4.0;
    build(p)
}

/// Example A1 with `hat_mu = 1` on activity (1,1).
pub fn example_a2() -> PssInstance {
    let mut p = example_a1().to_parts();
    p.hat_mu[0] = 1.0;
    build(p)
}

/// Single class, single server, `lambda = mu = 1`, Poisson primitives.
pub fn mm1() -> PssInstance {
    single(int(1), int(1))
}

pub fn single(lambda: Rational, mu: Rational) -> PssInstance {
    build(InstanceParts::first_order(
        1,
        vec![lambda],
        vec![(act(1, 1), mu)],
    ))
}

/// Looks up a reference instance by name (`a`, `a1`, `a2`, `b`, `c`, `d`,
/// `e`, `mm1`).
pub fn by_name(name: &str) -> Option<PssInstance> {
    Some(match name.to_ascii_lowercase().as_str() {
        "a" => example_a(),
        "a1" => example_a1(),
        "a2" => example_a2(),
        "b" => example_b(),
        "c" => example_c(),
        "d" => example_d(),
        "e" => example_e(),
        "mm1" => mm1(),
        _ => return None,
    })
}

/// Random instance on the full `classes x servers` activity grid with
/// decomposable first-order rates `mu_ik = alpha_i beta_k`, `sum beta = 1`
/// and `lambda_i = alpha_i p_i / sum p`, so that `rho* = 1`. With
/// probability 1/3 one rate is halved, which usually leaves that activity
/// always nonbasic. Second-order data are random: `|hat_lambda_i| <= lambda_i / 2`,
/// `|hat_mu_j| <= mu_j / 4`, SCVs in `[1/4, 4]`, costs in `[1/2, 3]` and
/// `gamma` in `[1/2, 2]`.
///
/// The result may still fail the standing assumptions; callers filter.
pub fn random_decomposable<R: Rng + ?Sized>(rng: &mut R, classes: usize, servers: usize) -> PssInstance {
    let alpha: Vec<i64> = (0..classes).map(|_| rng.random_range(1..=8)).collect();
    let w: Vec<i64> = (0..servers).map(|_| rng.random_range(1..=5)).collect();
    let p: Vec<i64> = (0..classes).map(|_| rng.random_range(1..=5)).collect();
    let (sw, sp) = (w.iter().sum::<i64>(), p.iter().sum::<i64>());
    let lambda: Vec<Rational> = (0..classes).map(|i| rat(alpha[i] * p[i], sp)).collect();
    let mut acts = Vec::new();
    for (i, &a) in alpha.iter().enumerate() {
        for (k, &wk) in w.iter().enumerate() {
            acts.push((act(i + 1, k + 1), rat(a * wk, sw)));
        }
    }
    if rng.random_bool(1.0 / 3.0) {
        let j = rng.random_range(0..acts.len());
        acts[j].1 /= int(2);
    }
    let mut parts = InstanceParts::first_order(servers, lambda, acts);
    let spread = |rng: &mut R, scale: f64| scale * rng.random_range(-1.0..=1.0);
    for i in 0..classes {
        let l = to_f64(&parts.lambda[i]);
        parts.hat_lambda[i] = spread(rng, 0.5 * l);
        parts.c2_arrival[i] = 4f64.powf(rng.random_range(-1.0..=1.0));
        parts.h[i] = rng.random_range(0.5..=3.0);
    }
    for j in 0..parts.mu.len() {
        let m = to_f64(&parts.mu[j]);
        parts.hat_mu[j] = spread(rng, 0.25 * m);
        parts.c2_service[j] = 4f64.powf(rng.random_range(-1.0..=1.0));
    }
    parts.gamma = rng.random_range(0.5..=2.0);
    build(parts)
}
