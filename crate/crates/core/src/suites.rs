//! Soundness suites comparing the computed bounds against brute-force oracles.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::engine::{self, EngineConfig};
use crate::linalg;
use crate::plant::oracle::{oracle_envelope_max, oracle_true_aenlm_1d};
use crate::plant::{PlantOracle, ScalarMap};
use crate::relaxation::{self, GeomCase};
use crate::space::InputBasis;

/// Pass/fail tally of one suite.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteReport {
    pub name: String,
    pub checks: usize,
    pub violations: usize,
    /// Largest amount by which a check failed (0 if none did).
    pub max_excess: f64,
    /// Envelope consistency warnings observed while sampling.
    pub consistency_warnings: u64,
    pub errors: Vec<String>,
}

impl SuiteReport {
    fn new(name: &str) -> Self {
        Self {
            name: name.into(),
            checks: 0,
            violations: 0,
            max_excess: 0.0,
            consistency_warnings: 0,
            errors: Vec::new(),
        }
    }

    fn check(&mut self, excess: f64) {
        self.checks += 1;
        if excess > 0.0 {
            self.violations += 1;
            self.max_excess = self.max_excess.max(excess);
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0 && self.consistency_warnings == 0 && self.errors.is_empty()
    }
}

/// Compares the lens bound, the triangle bound and their refined minimum against
/// the sphere-intersection oracle on random two-sample instances in `n ∈ {2, 3}`.
pub fn relaxation_suite(instances: usize, seed: u64) -> SuiteReport {
    const TOL: f64 = 1e-9;
    let mut rep = SuiteReport::new("relaxation");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..instances {
        let n = 2 + i % 2;
        let y1: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mut y2: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        if i % 17 == 0 {
            y2.clone_from(&y1);
        }
        let r = linalg::dist(&y1, &y2);
        let r1 = rng.random_range(0.0..3.0);
        let r2 = (r - r1).abs() + rng.random_range(0.0..3.0);
        let p: Vec<f64> = (0..n).map(|_| rng.random_range(-4.0..4.0)).collect();
        let geom = match relaxation::geometry_from_radii(&y1, &y2, r1, r2) {
            Ok(g) => g,
            Err(e) => {
                rep.errors.push(e.to_string());
                continue;
            }
        };
        let truth = match oracle_envelope_max(&y1, &y2, r1, r2, &p, 2000) {
            Ok(v) => v,
            Err(e) => {
                rep.errors.push(e.to_string());
                continue;
            }
        };
        if geom.case != GeomCase::Degenerate {
            rep.check(truth - relaxation::lens_value(&p, &geom, &y1, &y2) - TOL);
        }
        rep.check(truth - relaxation::triangle_value(&p, &geom, &y1, &y2) - TOL);
        rep.check(truth - relaxation::refined_numerator(&p, &geom, &y1, &y2) - TOL);
    }
    rep
}

/// Scalar test plants with their true Lipschitz constants.
pub fn scalar_plants() -> Vec<(&'static str, ScalarMap)> {
    vec![
        ("tanh", ScalarMap::Tanh),
        (
            "sin_perturbed",
            ScalarMap::SinPerturbed {
                amplitude: 0.1,
                frequency: 5.0,
            },
        ),
        ("linear", ScalarMap::Linear(0.7)),
    ]
}

/// Runs the engine on scalar plants over `[0, 4]` and checks at every iteration
/// that `lower ≤ Φ* ≤ Φ(k)`, `Φ*` being the dense-grid AE-NLM of the frozen surrogate.
///
/// `lipschitz_scale < 1` under-states the Lipschitz constant; the suite is then
/// expected to fail through consistency warnings or violated bounds.
pub fn engine_1d_suite(seed: u64, iterations: usize, lipschitz_scale: f64) -> SuiteReport {
    const GRID: usize = 200_001;
    let mut rep = SuiteReport::new("engine1d");
    let basis = InputBasis::scalar(0.0, 4.0, Some(0.1), 0.1).expect("valid scalar input set");
    for (name, map) in scalar_plants() {
        let l = map.lipschitz().expect("built-in maps have known constants");
        let cfg = EngineConfig {
            initial_samples: 5,
            rng_seed: seed,
            max_iters: iterations,
            lipschitz: Some(l * lipschitz_scale),
            ..EngineConfig::default()
        };
        let plant = PlantOracle::scalar(map.clone());
        let mut state = match engine::initialize(&plant, &basis, &cfg) {
            Ok(s) => s,
            Err(e) => {
                if let Some(ds) = &e.partial {
                    rep.consistency_warnings += ds.consistency_violations().len() as u64;
                }
                rep.errors.push(format!("{name}: {e}"));
                continue;
            }
        };
        let gain = state.surrogate.impulse_response()[0];
        let truth = oracle_true_aenlm_1d(&|u| map.eval(u), gain, 0.0, 4.0, GRID, 0.1);
        // Grid modulus of the ratio: slope of the numerator over ε, times the spacing.
        let modulus = (l + gain.abs()) * (4.0 / (GRID - 1) as f64) / 0.1;
        loop {
            let phi = state.phi();
            rep.check(truth - phi - 1e-9);
            rep.check(state.lower - truth - modulus - 1e-9);
            if state.finished() {
                break;
            }
            if let Err(e) = state.step(&plant) {
                rep.errors.push(format!("{name}: {e}"));
                break;
            }
        }
        rep.consistency_warnings += state.consistency_warnings;
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relaxation_suite_passes() {
        let r = relaxation_suite(200, 1);
        assert!(r.passed(), "{r:?}");
        assert!(r.checks >= 400);
    }

    #[test]
    fn engine_suite_passes_and_detects_low_lipschitz() {
        let ok = engine_1d_suite(3, 40, 1.0);
        assert!(ok.passed(), "{ok:?}");
        let bad = engine_1d_suite(3, 40, 0.3);
        assert!(!bad.passed());
        assert!(bad.consistency_warnings > 0);
    }
}
