use std::path::PathBuf;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pss_core::instances;
use pss_core::model::{load_instance, InstanceParts};
use pss_core::rational::int;
use pss_core::PssInstance;

fn assert_bit_identical(a: &PssInstance, b: &PssInstance) {
    assert_eq!(a, b);
    let (pa, pb) = (a.parts(), b.parts());
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&pa.hat_lambda), bits(&pb.hat_lambda));
    assert_eq!(bits(&pa.hat_mu), bits(&pb.hat_mu));
    assert_eq!(bits(&pa.c2_arrival), bits(&pb.c2_arrival));
    assert_eq!(bits(&pa.c2_service), bits(&pb.c2_service));
    assert_eq!(bits(&pa.h), bits(&pb.h));
    assert_eq!(pa.gamma.to_bits(), pb.gamma.to_bits());
}

#[test]
fn shipped_instance_files_match_builtins() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../instances");
    for (file, name) in [
        ("example_a.json", "a"),
        ("example_a1.json", "a1"),
        ("example_a2.json", "a2"),
        ("example_b.json", "b"),
        ("example_c.json", "c"),
        ("example_d.json", "d"),
        ("example_e.json", "e"),
        ("mm1.json", "mm1"),
    ] {
        let bytes = std::fs::read(dir.join(file)).unwrap();
        let loaded = load_instance(&bytes).unwrap();
        assert_bit_identical(&loaded, &instances::by_name(name).unwrap());
    }
}

#[test]
fn matrices_follow_activity_order() {
    let inst = instances::example_e();
    let m = inst.build_matrices();
    assert_eq!(m.activities(), inst.activities());
    assert_eq!(m, inst.build_matrices());
    for (j, a) in inst.activities().iter().enumerate() {
        for i in 0..inst.num_classes() {
            let expected = if i == a.class { inst.mu()[j].clone() } else { int(0) };
            assert_eq!(m.r[i][j], expected);
        }
        for k in 0..inst.num_servers() {
            assert_eq!(m.g[k][j], u8::from(k == a.server));
        }
    }
}

fn perturbed(seed: u64, classes: usize, servers: usize, extra: &[f64]) -> PssInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut parts: InstanceParts = instances::random_decomposable(&mut rng, classes, servers).to_parts();
    // awkward binary fractions stress the float round trip
    for (slot, x) in parts.hat_mu.iter_mut().zip(extra) {
        *slot = *x;
    }
    PssInstance::from_parts(parts).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn json_round_trip_is_exact(
        seed in any::<u64>(),
        classes in 1usize..=3,
        servers in 1usize..=3,
        extra in proptest::collection::vec(-1e6f64..1e6, 0..9),
    ) {
        let inst = perturbed(seed, classes, servers, &extra);
        let text = inst.to_json();
        let back = PssInstance::from_json(&text).unwrap();
        assert_bit_identical(&inst, &back);
        prop_assert_eq!(back.to_json(), text);
    }
}
