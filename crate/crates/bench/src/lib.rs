//! Benchmark fixtures.

use pss_core::hjb::{extract_policy, solve_hjb, FeedbackPolicy, HjbConfig, HjbSolution};
use pss_core::lp::{analyze, LpAnalysis, ModeCoefficients};
use pss_core::{instances, PssInstance};

/// An instance with its LP analysis, HJB solution and threshold policy.
pub struct Fixture {
    pub instance: PssInstance,
    pub analysis: LpAnalysis,
    pub coefficients: Vec<ModeCoefficients>,
    pub hjb: HjbSolution,
    pub policy: FeedbackPolicy,
}

pub fn fixture(name: &str) -> Fixture {
    let instance = instances::by_name(name).expect("known instance");
    let analysis = analyze(&instance).expect("LP solves");
    let coefficients = analysis.coefficients.clone().expect("standing assumptions hold");
    let gamma = instance.gamma();
    let hjb = solve_hjb(&coefficients, gamma, &HjbConfig::default_for(&coefficients, gamma)).expect("HJB solves");
    let policy = extract_policy(&hjb);
    Fixture {
        instance,
        analysis,
        coefficients,
        hjb,
        policy,
    }
}
