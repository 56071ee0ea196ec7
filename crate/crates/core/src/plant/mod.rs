//! Simulated plants and the brute-force oracles used to validate the bounds.

pub mod oracle;

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::envelope::NoiseModel;
use crate::linalg;
use crate::space::{build_basis, InputBasis};
use crate::surrogate::LinearSurrogate;
use crate::{Error, Result};

/// Time step of the benchmark ODE, in seconds.
pub const BENCHMARK_DT: f64 = 0.2;
/// Number of Euler steps (and output samples) of the benchmark ODE.
pub const BENCHMARK_STEPS: usize = 30;

/// Memoryless scalar nonlinearities, applied entrywise.
#[derive(Clone)]
pub enum ScalarMap {
    Linear(f64),
    Tanh,
    /// `u + amplitude · sin(frequency · u)`.
    SinPerturbed { amplitude: f64, frequency: f64 },
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl ScalarMap {
    pub fn eval(&self, u: f64) -> f64 {
        match self {
            ScalarMap::Linear(c) => c * u,
            ScalarMap::Tanh => u.tanh(),
            ScalarMap::SinPerturbed {
                amplitude,
                frequency,
            } => u + amplitude * (frequency * u).sin(),
            ScalarMap::Custom(f) => f(u),
        }
    }

    /// A valid global Lipschitz constant of the map.
    pub fn lipschitz(&self) -> Option<f64> {
        match self {
            ScalarMap::Linear(c) => Some(c.abs()),
            ScalarMap::Tanh => Some(1.0),
            ScalarMap::SinPerturbed {
                amplitude,
                frequency,
            } => Some(1.0 + (amplitude * frequency).abs()),
            ScalarMap::Custom(_) => None,
        }
    }
}

impl fmt::Debug for ScalarMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarMap::Linear(c) => write!(f, "Linear({c})"),
            ScalarMap::Tanh => write!(f, "Tanh"),
            ScalarMap::SinPerturbed {
                amplitude,
                frequency,
            } => write!(f, "SinPerturbed({amplitude}, {frequency})"),
            ScalarMap::Custom(_) => write!(f, "Custom"),
        }
    }
}

pub type CustomPlant = Arc<dyn Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync>;

#[derive(Clone)]
pub enum PlantKind {
    /// The two-state polynomial benchmark ODE under forward Euler.
    BenchmarkOde,
    LinearLti(LinearSurrogate),
    Scalar1D(ScalarMap),
    Custom(CustomPlant),
}

impl fmt::Debug for PlantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlantKind::BenchmarkOde => write!(f, "BenchmarkOde"),
            PlantKind::LinearLti(g) => write!(f, "LinearLti({:?})", g.impulse_response()),
            PlantKind::Scalar1D(m) => write!(f, "Scalar1D({m:?})"),
            PlantKind::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// An input-output experiment: maps an input trajectory to a (noisy) output trajectory.
///
/// Outputs are a pure function of `(rng_seed, amplitude)`, so repeated queries agree.
#[derive(Clone, Debug)]
pub struct PlantOracle {
    pub kind: PlantKind,
    pub dt: f64,
    pub steps: usize,
    pub noise: NoiseModel,
    pub rng_seed: u64,
}

impl PlantOracle {
    pub fn new(kind: PlantKind, steps: usize) -> Self {
        Self {
            kind,
            dt: BENCHMARK_DT,
            steps,
            noise: NoiseModel::None,
            rng_seed: 0,
        }
    }

    pub fn benchmark_ode() -> Self {
        Self::new(PlantKind::BenchmarkOde, BENCHMARK_STEPS)
    }

    pub fn linear(g: LinearSurrogate) -> Self {
        let n = g.n();
        Self::new(PlantKind::LinearLti(g), n)
    }

    pub fn scalar(map: ScalarMap) -> Self {
        Self::new(PlantKind::Scalar1D(map), 1)
    }

    pub fn with_noise(mut self, noise: NoiseModel, rng_seed: u64) -> Self {
        self.noise = noise;
        self.rng_seed = rng_seed;
        self
    }

    /// Runs the experiment at amplitude `amp`.
    pub fn query(&self, basis: &InputBasis, amp: &[f64]) -> Result<Vec<f64>> {
        if basis.n() != self.steps {
            return Err(Error::DimensionMismatch {
                expected: self.steps,
                got: basis.n(),
            });
        }
        let u = basis.amp_to_input(amp)?;
        let y = self.respond(&u)?;
        Ok(inject_noise(&y, self.noise, query_seed(self.rng_seed, amp)))
    }

    /// Noise-free response to an input trajectory.
    pub fn respond(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.steps {
            return Err(Error::DimensionMismatch {
                expected: self.steps,
                got: u.len(),
            });
        }
        match &self.kind {
            PlantKind::BenchmarkOde => simulate_benchmark(u, self.dt),
            PlantKind::LinearLti(g) => Ok(g.apply(u)),
            PlantKind::Scalar1D(m) => Ok(u.iter().map(|&x| m.eval(x)).collect()),
            PlantKind::Custom(f) => {
                let y = f(u)?;
                if y.len() != u.len() {
                    return Err(Error::Plant(format!(
                        "custom plant returned {} outputs for {} inputs",
                        y.len(),
                        u.len()
                    )));
                }
                Ok(y)
            }
        }
    }
}

/// Forward Euler with the input held constant over each step; `y_k = x₁` after step `k`.
fn simulate_benchmark(u: &[f64], dt: f64) -> Result<Vec<f64>> {
    let (mut x1, mut x2) = (0.0f64, 0.0f64);
    let mut y = Vec::with_capacity(u.len());
    for (step, &uk) in u.iter().enumerate() {
        let d1 = -3.0 * x1 + 4.0 * x2 + 2.0 * x1 * x1 - 0.2 * (3.0 * x1).sin() + uk;
        let d2 = -x1 + 0.6 * x2 - 0.5 * x1 * x1 * x1;
        x1 += dt * d1;
        x2 += dt * d2;
        if !x1.is_finite() || !x2.is_finite() {
            return Err(Error::TrajectoryDiverged { step });
        }
        y.push(x1);
    }
    Ok(y)
}

/// The two benchmark excitation signals `sin(π t / 3)` and `sin(π t)` at `t_k = k Δt`.
pub fn benchmark_signals() -> Vec<Vec<f64>> {
    let t: Vec<f64> = (0..BENCHMARK_STEPS).map(|k| k as f64 * BENCHMARK_DT).collect();
    let pi = std::f64::consts::PI;
    vec![
        t.iter().map(|t| (pi / 3.0 * t).sin()).collect(),
        t.iter().map(|t| (pi * t).sin()).collect(),
    ]
}

/// Benchmark input set: amplitudes in `[0, 4]²` minus `[0, 0.1]²`, `ε = 0.1`.
pub fn benchmark_basis() -> InputBasis {
    build_basis(
        &benchmark_signals(),
        vec![0.0, 0.0],
        vec![4.0, 4.0],
        Some(vec![0.1, 0.1]),
        0.1,
    )
    .expect("benchmark signals are independent")
}

/// Mixes the plant seed with the bit pattern of the amplitude.
fn query_seed(seed: u64, amp: &[f64]) -> u64 {
    let mut h = seed ^ 0x9e37_79b9_7f4a_7c15;
    for a in amp {
        h = splitmix(h ^ a.to_bits());
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Adds a perturbation drawn uniformly from the ball allowed by `noise`.
pub fn inject_noise(y: &[f64], noise: NoiseModel, seed: u64) -> Vec<f64> {
    let radius = match noise {
        NoiseModel::None => 0.0,
        NoiseModel::AdditiveBounded(d) => d,
        NoiseModel::RelativeSnr(d) => d * linalg::norm(y),
    };
    if radius == 0.0 || y.is_empty() {
        return y.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dir: Vec<f64> = loop {
        let v: Vec<f64> = (0..y.len()).map(|_| rng.sample(StandardNormal)).collect();
        let nv = linalg::norm(&v);
        if nv > 1e-12 {
            break linalg::scale(1.0 / nv, &v);
        }
    };
    let u: f64 = rng.random();
    let rho = radius * u.powf(1.0 / y.len() as f64);
    y.iter().zip(&dir).map(|(y, d)| y + rho * d).collect()
}
