//! Acceptance suite. Run with `cargo test --test acceptance`; prints one
//! PASS/FAIL line per criterion and exits non-zero if any criterion fails.

use std::time::{Duration, Instant};

use aenlm::engine::{self, EngineConfig, EngineState};
use aenlm::optimizer::maximize_over_cell;
use aenlm::plant::oracle::{oracle_envelope_max, oracle_true_aenlm_1d};
use aenlm::plant::{benchmark_basis, PlantOracle, ScalarMap};
use aenlm::relaxation::{geometry_from_radii, lens_value, GeomCase};
use aenlm::surrogate::fit_minimax;
use aenlm::{suites, Cell, Dataset, InputBasis, LinearSurrogate, NoiseModel, OptimizerConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Final bound of the benchmark run with design seed 1, pinned after its first computation.
const BENCHMARK_FINAL_PHI: f64 = 0.15185215975907704;

type Outcome = Result<String, String>;

fn ensure(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn scalar_basis() -> InputBasis {
    InputBasis::scalar(0.0, 4.0, Some(0.1), 0.1).unwrap()
}

fn truth_1d(map: &ScalarMap, state: &EngineState) -> f64 {
    let gain = state.surrogate.impulse_response()[0];
    oracle_true_aenlm_1d(&|u| map.eval(u), gain, 0.0, 4.0, 400_001, 0.1)
}

/// Grid modulus of `|f(u) − g u| / u` on `[0.1, 4]` with 400 001 points.
fn modulus_1d(l: f64, gain: f64) -> f64 {
    let h = 4.0 / 400_000.0;
    let num_max = (l + gain.abs()) * 4.0;
    h * ((l + gain.abs()) / 0.1 + num_max / 0.01)
}

/// Every run the suite performs, kept for the cross-cutting criteria.
struct Runs {
    states: Vec<(String, EngineState)>,
}

impl Runs {
    fn push(&mut self, name: &str, s: &EngineState) {
        self.states.push((name.to_string(), s.clone()));
    }
}

fn run_scalar(map: &ScalarMap, l: f64, iters: usize, seed: u64, noise: NoiseModel) -> EngineState {
    let plant = PlantOracle::scalar(map.clone()).with_noise(noise, seed.wrapping_add(1000));
    let cfg = EngineConfig {
        initial_samples: 5,
        rng_seed: seed,
        max_iters: iters,
        lipschitz: Some(l),
        ..EngineConfig::default()
    };
    let mut s = engine::initialize(&plant, &scalar_basis(), &cfg).unwrap();
    s.run(&plant).unwrap();
    s
}

fn benchmark_run() -> (EngineState, Duration) {
    let t = Instant::now();
    let plant = PlantOracle::benchmark_ode();
    let cfg = EngineConfig {
        alpha: 0.1,
        initial_samples: 20,
        rng_seed: 1,
        max_iters: 1000,
        lipschitz: Some(1.04),
        ..EngineConfig::default()
    };
    let mut s = engine::initialize(&plant, &benchmark_basis(), &cfg).unwrap();
    s.run(&plant).unwrap();
    (s, t.elapsed())
}

fn c1_relaxation_soundness() -> Outcome {
    let t = Instant::now();
    let rep = suites::relaxation_suite(2000, 11);
    // Near-tangent and nested configurations, where the lens degenerates.
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut extra = 0;
    let mut bad = 0;
    for i in 0..600 {
        let n = 2 + i % 2;
        let y1: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y2: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let r: f64 = y1.iter().zip(&y2).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let r1 = rng.random_range(0.0..r.max(1e-3));
        let r2 = match i % 3 {
            0 => (r - r1) * (1.0 + 1e-9),
            1 => r + r1,
            _ => (r * r + r1 * r1).sqrt(),
        };
        let p: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let g = geometry_from_radii(&y1, &y2, r1, r2).unwrap();
        let truth = oracle_envelope_max(&y1, &y2, r1, r2, &p, 4000).unwrap();
        extra += 1;
        if g.case != GeomCase::Degenerate && truth > lens_value(&p, &g, &y1, &y2) + 1e-9 {
            bad += 1;
        }
    }
    let secs = t.elapsed().as_secs_f64();
    ensure(
        rep.passed() && rep.checks >= 3000 && bad == 0 && secs < 30.0,
        format!(
            "{} checks on 2000 instances + {extra} boundary instances, {} + {bad} violations, {secs:.1} s",
            rep.checks, rep.violations
        ),
    )
}

fn c2_lens_geometry() -> Outcome {
    let s2 = std::f64::consts::SQRT_2;
    let g = geometry_from_radii(&[0.0, 0.0], &[2.0, 0.0], s2, s2).map_err(|e| e.to_string())?;
    let m = g.center.clone().unwrap_or_default();
    let d = g.d.unwrap_or(f64::NAN);
    let v = lens_value(&[1.0, -3.0], &g, &[0.0, 0.0], &[2.0, 0.0]);
    let truth = oracle_envelope_max(&[0.0, 0.0], &[2.0, 0.0], s2, s2, &[1.0, -3.0], 100).unwrap();
    ensure(
        g.case == GeomCase::Lens
            && (d - 1.0).abs() <= 1e-12
            && (m[0] - 1.0).abs() <= 1e-12
            && m[1].abs() <= 1e-12
            && (v - 4.0).abs() <= 1e-12
            && (truth - 4.0).abs() <= 1e-12,
        format!("d = {d}, M = {m:?}, bound = {v}, brute force = {truth}"),
    )
}

fn c3_scalar_exactness() -> Outcome {
    let basis = scalar_basis();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cfg = OptimizerConfig::default();
    let mut worst_excess: f64 = 0.0;
    let mut failures = 0;
    for _ in 0..100 {
        let a: f64 = rng.random_range(-1.0..1.0);
        let b: f64 = rng.random_range(-0.5..0.5);
        let c: f64 = rng.random_range(0.5..6.0);
        let l = a.abs() + (b * c).abs() + 0.05;
        let f = |u: f64| a * u + b * (c * u).sin();
        let mut ds = Dataset::new(1, 1, l, NoiseModel::None).unwrap();
        for _ in 0..rng.random_range(2..7) {
            let u = rng.random_range(0.1..4.0);
            ds.add_sample(&basis, vec![u], vec![f(u)]).unwrap();
        }
        let lo: f64 = rng.random_range(0.1..3.5);
        let hi = (lo + rng.random_range(0.05..2.0f64)).min(4.0);
        let cell = Cell::new(0, vec![lo], vec![hi]);
        let gain = rng.random_range(-1.0..1.0);
        let g = LinearSurrogate::new(vec![gain]);
        let res = maximize_over_cell(&g, &basis, &ds, &cell, &cfg).unwrap();

        let (i, j) = res.support;
        let s = ds.samples();
        let (u1, y1, u2, y2) = (s[i].amp[0], s[i].output[0], s[j].amp[0], s[j].output[0]);
        let grid = 20_001;
        let h = (hi - lo) / (grid - 1) as f64;
        let mut best: f64 = 0.0;
        let mut num_max: f64 = 0.0;
        for k in 0..grid {
            let u = lo + h * k as f64;
            let low = (y1 - l * (u - u1).abs()).max(y2 - l * (u - u2).abs());
            let high = (y1 + l * (u - u1).abs()).min(y2 + l * (u - u2).abs());
            let num = (low - gain * u).abs().max((high - gain * u).abs());
            num_max = num_max.max(num);
            best = best.max(num / u);
        }
        let modulus = h * ((l + gain.abs()) / 0.1 + num_max / 0.01);
        let below = best - res.bound;
        let above = res.bound - best - cfg.eta - modulus;
        worst_excess = worst_excess.max(below.max(above));
        if below > 1e-12 || above > 0.0 || !res.gap_met {
            failures += 1;
        }
    }
    ensure(
        failures == 0,
        format!("100 instances, {failures} outside [grid, grid + eta + modulus], worst excess {worst_excess:.2e}"),
    )
}

fn monotone_violations(s: &EngineState) -> usize {
    s.history.windows(2).filter(|w| w[1].phi > w[0].phi).count()
}

fn sandwich_violations(s: &EngineState) -> usize {
    s.history.iter().filter(|r| r.lower > r.phi).count()
}

fn c4_monotonicity(runs: &Runs) -> Outcome {
    let rows: usize = runs.states.iter().map(|(_, s)| s.history.len()).sum();
    let v: usize = runs.states.iter().map(|(_, s)| monotone_violations(s)).sum();
    ensure(v == 0, format!("{} runs, {rows} history rows, {v} increases", runs.states.len()))
}

fn c5_convergence(runs: &mut Runs) -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for (name, map) in [
        ("tanh", ScalarMap::Tanh),
        (
            "sin_perturbed",
            ScalarMap::SinPerturbed {
                amplitude: 0.1,
                frequency: 5.0,
            },
        ),
    ] {
        let l = map.lipschitz().unwrap();
        let t = Instant::now();
        let s = run_scalar(&map, l, 500, 5, NoiseModel::None);
        let secs = t.elapsed().as_secs_f64();
        let truth = truth_1d(&map, &s);
        let phi = s.phi();
        ok &= phi >= truth - 1e-12 && phi <= truth + 0.05 * l && secs < 120.0;
        lines.push(format!("{name}: phi* = {truth:.5}, phi(500) = {phi:.5}, {secs:.1} s"));
        runs.push(name, &s);
    }
    let map = ScalarMap::Linear(0.7);
    let t = Instant::now();
    let s = run_scalar(&map, 0.7, 300, 5, NoiseModel::None);
    let secs = t.elapsed().as_secs_f64();
    let phi = s.phi();
    ok &= phi <= 0.05 * 0.7 && secs < 120.0;
    lines.push(format!("linear: phi(300) = {phi:.2e} (limit {:.3})", 0.05 * 0.7));
    runs.push("linear", &s);
    ensure(ok, lines.join("; "))
}

fn c6_sandwich(runs: &mut Runs) -> Outcome {
    let v: usize = runs.states.iter().map(|(_, s)| sandwich_violations(s)).sum();
    // Termination: the run must stop at the first state whose gap is within tolerance.
    let map = ScalarMap::Tanh;
    let plant = PlantOracle::scalar(map.clone());
    let cfg = EngineConfig {
        initial_samples: 5,
        rng_seed: 2,
        max_iters: 5000,
        gap_tol: 0.05,
        lipschitz: Some(1.0),
        ..EngineConfig::default()
    };
    let mut s = engine::initialize(&plant, &scalar_basis(), &cfg).unwrap();
    s.run(&plant).unwrap();
    let gaps: Vec<f64> = s.history.iter().map(|r| r.phi - r.lower).collect();
    let stop_ok = s.k < cfg.max_iters
        && *gaps.last().unwrap() <= cfg.gap_tol
        && gaps[..gaps.len() - 1].iter().all(|g| *g > cfg.gap_tol);
    runs.push("gap_tol", &s);
    ensure(
        v == 0 && stop_ok,
        format!(
            "{v} sandwich violations over {} runs; gap_tol 0.05 stopped at k = {} with gap {:.4}",
            runs.states.len(),
            s.k,
            gaps.last().unwrap()
        ),
    )
}

fn c7_benchmark(runs: &mut Runs) -> Outcome {
    let (s, wall) = benchmark_run();
    let phi = s.phi();
    let secs = wall.as_secs_f64();
    let initial_cells = 2;
    let cells_ok = s.history[0].k == 0 && s.cells.len() == initial_cells + s.k;
    let pinned = (phi - BENCHMARK_FINAL_PHI).abs() <= 1e-9 * BENCHMARK_FINAL_PHI;
    let ok = s.k == 1000
        && phi <= 0.48
        && s.plant_queries <= 1020
        && monotone_violations(&s) == 0
        && sandwich_violations(&s) == 0
        && cells_ok
        && pinned
        && secs < 600.0;
    let detail = format!(
        "phi(1000) = {phi:.6} (pinned {BENCHMARK_FINAL_PHI:.6}), lower = {:.6}, {} plant queries, {secs:.1} s",
        s.lower, s.plant_queries
    );
    runs.push("benchmark", &s);
    ensure(ok, detail)
}

fn c8_noise(runs: &mut Runs) -> Outcome {
    let mut violations = 0;
    let mut rows = 0;
    for seed in 0..10u64 {
        for map in [
            ScalarMap::Tanh,
            ScalarMap::SinPerturbed {
                amplitude: 0.1,
                frequency: 5.0,
            },
        ] {
            let l = map.lipschitz().unwrap();
            let s = run_scalar(&map, l, 150, seed, NoiseModel::RelativeSnr(0.1));
            let truth = truth_1d(&map, &s);
            let m = modulus_1d(l, s.surrogate.impulse_response()[0]);
            for r in &s.history {
                rows += 1;
                if r.phi < truth - 1e-12 || r.lower > truth + m {
                    violations += 1;
                }
            }
            runs.push(&format!("noise{seed}"), &s);
        }
    }
    ensure(
        violations == 0,
        format!("10 seeds x 2 plants, {rows} iterations, {violations} with phi(k) < phi* or lower > phi*"),
    )
}

fn c9_determinism() -> Outcome {
    let dir = std::env::temp_dir().join(format!("aenlm-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let mut bytes = Vec::new();
    for i in 0..2 {
        let (s, _) = benchmark_run();
        let path = dir.join(format!("history{i}.csv"));
        std::fs::write(&path, s.history_csv()).map_err(|e| e.to_string())?;
        bytes.push(std::fs::read(&path).map_err(|e| e.to_string())?);
    }
    let _ = std::fs::remove_dir_all(&dir);
    ensure(
        bytes[0] == bytes[1] && !bytes[0].is_empty(),
        format!("two benchmark runs, history.csv {} bytes, identical = {}", bytes[0].len(), bytes[0] == bytes[1]),
    )
}

fn c10_minimax() -> Outcome {
    let tol = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut lines = Vec::new();
    let mut ok = true;
    for (n, d) in [(5usize, 8usize), (12, 20), (30, 20)] {
        let g: Vec<f64> = (0..n).map(|k| rng.random_range(-1.0..1.0) * 0.7f64.powi(k as i32)).collect();
        let truth = LinearSurrogate::new(g);
        let mut ds = Dataset::new(n, n, 10.0, NoiseModel::None).unwrap();
        for _ in 0..d {
            let u: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y = truth.apply(&u);
            ds.push(aenlm::Sample {
                amp: u.clone(),
                input: u,
                output: y,
            })
            .unwrap();
        }
        let fit = fit_minimax(&ds, tol).unwrap();
        ok &= fit.converged
            && fit.objective <= tol
            && fit.lower_bound <= fit.objective
            && fit.objective - fit.lower_bound <= tol;
        lines.push(format!("n = {n}: J = {:.1e}, certificate {:.1e}", fit.objective, fit.lower_bound));
    }
    ensure(ok, lines.join("; "))
}

fn main() {
    let mut runs = Runs { states: Vec::new() };
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    results.push(("1 relaxation soundness", c1_relaxation_soundness()));
    results.push(("2 lens geometry", c2_lens_geometry()));
    results.push(("3 scalar exactness", c3_scalar_exactness()));
    let c5 = c5_convergence(&mut runs);
    let c7 = c7_benchmark(&mut runs);
    let c8 = c8_noise(&mut runs);
    let c6 = c6_sandwich(&mut runs);
    results.push(("4 monotone bounds", c4_monotonicity(&runs)));
    results.push(("5 convergence to truth", c5));
    results.push(("6 sandwich and termination", c6));
    results.push(("7 benchmark reproduction", c7));
    results.push(("8 noise guarantee", c8));
    results.push(("9 determinism", c9_determinism()));
    results.push(("10 minimax certificate", c10_minimax()));

    let mut failed = 0;
    for (name, r) in &results {
        match r {
            Ok(d) => println!("criterion {name}: PASS ({d})"),
            Err(d) => {
                failed += 1;
                println!("criterion {name}: FAIL ({d})");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
