//! Experiment configuration: a JSON document describing the plant, the input set,
//! the noise model, the engine settings and the output directory.

use std::path::{Path, PathBuf};

use aenlm::engine::EngineConfig;
use aenlm::plant::{PlantOracle, ScalarMap};
use aenlm::space::build_basis;
use aenlm::{Error, InputBasis, LinearSurrogate, NoiseModel};
use serde::Deserialize;

/// Environment variable that overrides `engine.rng_seed`.
pub const SEED_ENV: &str = "NLM_SEED";

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub plant: PlantSpec,
    pub basis: BasisSpec,
    #[serde(default = "no_noise")]
    pub noise: NoiseModel,
    /// Seed of the measurement-noise generator, independent of the design seed.
    #[serde(default)]
    pub noise_seed: u64,
    #[serde(default)]
    pub engine: EngineConfig,
    pub output_dir: PathBuf,
    #[serde(default = "default_outputs")]
    pub outputs: Vec<OutputKind>,
}

fn no_noise() -> NoiseModel {
    NoiseModel::None
}

fn default_outputs() -> Vec<OutputKind> {
    vec![
        OutputKind::History,
        OutputKind::Cells,
        OutputKind::Summary,
        OutputKind::Dataset,
        OutputKind::Surrogate,
        OutputKind::Checkpoint,
    ]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    History,
    Cells,
    Summary,
    Dataset,
    Surrogate,
    Checkpoint,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PlantSpec {
    BenchmarkOde {
        #[serde(default = "benchmark_dt")]
        dt: f64,
        #[serde(default = "benchmark_steps")]
        steps: usize,
    },
    LinearLti {
        g: Vec<f64>,
    },
    Scalar {
        map: ScalarSpec,
    },
}

fn benchmark_dt() -> f64 {
    aenlm::plant::BENCHMARK_DT
}

fn benchmark_steps() -> usize {
    aenlm::plant::BENCHMARK_STEPS
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScalarSpec {
    Linear { gain: f64 },
    Tanh,
    SinPerturbed { amplitude: f64, frequency: f64 },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisSpec {
    pub signals: SignalSpec,
    pub box_lo: Vec<f64>,
    pub box_hi: Vec<f64>,
    #[serde(default)]
    pub exclusion_hi: Option<Vec<f64>>,
    pub epsilon: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SignalSpec {
    /// `sin(ω t_k)` at `t_k = k·dt`, `k = 0..n`, one signal per angular frequency.
    Sines {
        n: usize,
        dt: f64,
        frequencies: Vec<f64>,
    },
    /// Raw signal vectors; orthonormalised on load.
    Explicit { columns: Vec<Vec<f64>> },
}

impl SignalSpec {
    fn raw(&self) -> Vec<Vec<f64>> {
        match self {
            SignalSpec::Sines { n, dt, frequencies } => frequencies
                .iter()
                .map(|w| (0..*n).map(|k| (w * k as f64 * dt).sin()).collect())
                .collect(),
            SignalSpec::Explicit { columns } => columns.clone(),
        }
    }
}

/// A validated configuration with the plant and basis constructed.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub basis: InputBasis,
    pub plant: PlantOracle,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg: Self = serde_json::from_str(&text)?;
        if let Ok(seed) = std::env::var(SEED_ENV) {
            cfg.engine.rng_seed = seed
                .trim()
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("{SEED_ENV} is not an integer: {seed:?}")))?;
        }
        Ok(cfg)
    }

    pub fn build(self) -> Result<Experiment, Error> {
        self.engine.validate()?;
        let basis = build_basis(
            &self.basis.signals.raw(),
            self.basis.box_lo.clone(),
            self.basis.box_hi.clone(),
            self.basis.exclusion_hi.clone(),
            self.basis.epsilon,
        )?;
        let plant = match &self.plant {
            PlantSpec::BenchmarkOde { dt, steps } => {
                if !(*dt > 0.0) {
                    return Err(Error::InvalidConfig(format!("dt must be positive, got {dt}")));
                }
                let mut p = PlantOracle::benchmark_ode();
                p.dt = *dt;
                p.steps = *steps;
                p
            }
            PlantSpec::LinearLti { g } => PlantOracle::linear(LinearSurrogate::new(g.clone())),
            PlantSpec::Scalar { map } => {
                let map = match map {
                    ScalarSpec::Linear { gain } => ScalarMap::Linear(*gain),
                    ScalarSpec::Tanh => ScalarMap::Tanh,
                    ScalarSpec::SinPerturbed {
                        amplitude,
                        frequency,
                    } => ScalarMap::SinPerturbed {
                        amplitude: *amplitude,
                        frequency: *frequency,
                    },
                };
                let mut p = PlantOracle::scalar(map);
                p.steps = basis.n();
                p
            }
        }
        .with_noise(self.noise, self.noise_seed);
        if plant.steps != basis.n() {
            return Err(Error::InvalidConfig(format!(
                "plant has {} time steps but the basis signals have length {}",
                plant.steps,
                basis.n()
            )));
        }
        Ok(Experiment {
            config: self,
            basis,
            plant,
        })
    }

    pub fn wants(&self, kind: OutputKind) -> bool {
        self.outputs.contains(&kind)
    }
}
