//! Checks shared by the property tests, the oracle tests and the acceptance
//! report. Each returns `Err(description)` on the first violation.
#![allow(dead_code)]

pub mod oracles;
pub mod props;

use proptest::strategy::Strategy;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mulde::manifold::Curvature;
use mulde::models::{ModelKind, ModelOptions, ModelState};

pub type Check = Result<(), String>;

/// Runs a property with a fixed-seed runner so failures reproduce.
pub fn property<S, F>(cases: u32, strategy: S, test: F) -> Check
where
    S: Strategy,
    S::Value: std::fmt::Debug,
    F: Fn(S::Value) -> Result<(), TestCaseError>,
{
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

pub fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// A model with parameters spread well beyond the initialization scale, so
/// every code path carries non-trivial gradients.
pub fn random_model(kind: ModelKind, options: ModelOptions, ne: usize, nr: usize, dim: usize, seed: u64) -> ModelState {
    let mut m = ModelState::new(kind, dim, ne, nr, seed, options).expect("valid shape");
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(31).wrapping_add(7));
    let p = &mut m.params;
    for v in p.entity.iter_mut().chain(p.relation.iter_mut()) {
        *v = rng.gen_range(-0.3..0.3);
    }
    for v in &mut p.rotation {
        *v = rng.gen_range(-3.1..3.1);
    }
    for v in &mut p.curvature {
        *v = Curvature::raw_for(rng.gen_range(0.5..1.5));
    }
    for v in p.bias_head.iter_mut().chain(p.bias_tail.iter_mut()) {
        *v = rng.gen_range(-0.3..0.3);
    }
    m
}
