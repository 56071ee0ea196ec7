//! Sample storage and the Lipschitz envelope `E(U_D × Y_D)`.

use serde::{Deserialize, Serialize};

use crate::linalg;
use crate::space::{self, Cell, InputBasis};
use crate::{Error, Result};

/// Amplitudes closer than this are treated as the same experiment.
const DUPLICATE_TOL: f64 = 1e-12;

/// Bounded output noise model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NoiseSpec", into = "NoiseSpec")]
pub enum NoiseModel {
    #[default]
    None,
    /// `‖v‖ ≤ δ`.
    AdditiveBounded(f64),
    /// `‖v‖ ≤ δ ‖y‖`.
    RelativeSnr(f64),
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum NoiseKind {
    None,
    AdditiveBounded,
    RelativeSnr,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NoiseSpec {
    kind: NoiseKind,
    #[serde(default)]
    delta: f64,
}

impl TryFrom<NoiseSpec> for NoiseModel {
    type Error = String;

    fn try_from(spec: NoiseSpec) -> std::result::Result<Self, String> {
        if !(spec.delta >= 0.0) || !spec.delta.is_finite() {
            return Err(format!("noise delta must be finite and >= 0, got {}", spec.delta));
        }
        Ok(match spec.kind {
            NoiseKind::None => NoiseModel::None,
            NoiseKind::AdditiveBounded => NoiseModel::AdditiveBounded(spec.delta),
            NoiseKind::RelativeSnr => NoiseModel::RelativeSnr(spec.delta),
        })
    }
}

impl From<NoiseModel> for NoiseSpec {
    fn from(m: NoiseModel) -> Self {
        match m {
            NoiseModel::None => NoiseSpec {
                kind: NoiseKind::None,
                delta: 0.0,
            },
            NoiseModel::AdditiveBounded(delta) => NoiseSpec {
                kind: NoiseKind::AdditiveBounded,
                delta,
            },
            NoiseModel::RelativeSnr(delta) => NoiseSpec {
                kind: NoiseKind::RelativeSnr,
                delta,
            },
        }
    }
}

impl NoiseModel {
    pub fn delta(&self) -> f64 {
        match *self {
            NoiseModel::None => 0.0,
            NoiseModel::AdditiveBounded(d) | NoiseModel::RelativeSnr(d) => d,
        }
    }

    pub fn is_none(&self) -> bool {
        self.delta() == 0.0
    }
}

/// One evaluated experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub amp: Vec<f64>,
    pub input: Vec<f64>,
    pub output: Vec<f64>,
}

/// Pairs of samples that break `‖y_i − y_j‖ ≤ L‖u_i − u_j‖ + budget`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConsistencyWarning {
    /// `(i, j, excess)` with `excess` the amount by which the bound is exceeded.
    pub violations: Vec<(usize, usize, f64)>,
}

/// Result of [`Dataset::add_sample`].
#[derive(Clone, Debug, PartialEq)]
pub struct AddOutcome {
    /// Index of the stored sample (the existing one if merged).
    pub index: usize,
    pub merged: bool,
    pub warning: Option<ConsistencyWarning>,
}

/// Append-only sample log with its Lipschitz constant and noise model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    n: usize,
    mu: usize,
    lipschitz: f64,
    noise: NoiseModel,
    samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(n: usize, mu: usize, lipschitz: f64, noise: NoiseModel) -> Result<Self> {
        if !(lipschitz > 0.0) || !lipschitz.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "Lipschitz constant must be positive, got {lipschitz}"
            )));
        }
        Ok(Self {
            n,
            mu,
            lipschitz,
            noise,
            samples: Vec::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn mu(&self) -> usize {
        self.mu
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn set_lipschitz(&mut self, lipschitz: f64) -> Result<()> {
        if !(lipschitz > 0.0) || !lipschitz.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "Lipschitz constant must be positive, got {lipschitz}"
            )));
        }
        self.lipschitz = lipschitz;
        Ok(())
    }

    pub fn noise(&self) -> NoiseModel {
        self.noise
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Measurement-noise budget attached to sample `i` on its own.
    pub fn sample_inflation(&self, i: usize) -> f64 {
        match self.noise {
            NoiseModel::None => 0.0,
            NoiseModel::AdditiveBounded(d) => d,
            NoiseModel::RelativeSnr(d) => d * self.lipschitz * linalg::norm(&self.samples[i].amp),
        }
    }

    /// Radius inflation for a cell: `δ` for additive noise and `δ L ‖u_H‖` for
    /// relative noise, `u_H` being the largest-norm point of the cell.
    pub fn radius_inflation(&self, cell: &Cell) -> f64 {
        match self.noise {
            NoiseModel::None => 0.0,
            NoiseModel::AdditiveBounded(d) => d,
            NoiseModel::RelativeSnr(d) => {
                let corner = space::box_max_norm_corner(&cell.lo, &cell.hi);
                d * self.lipschitz * linalg::norm(&corner)
            }
        }
    }

    /// Radius inflation applied to support sample `i` inside `cell`.
    ///
    /// This is the cell inflation, raised to the sample's own budget when the
    /// sample lies farther from the origin than every point of the cell.
    pub fn support_inflation(&self, cell: &Cell, i: usize) -> f64 {
        self.radius_inflation(cell).max(self.sample_inflation(i))
    }

    /// Maps `amp` through `basis` and appends the sample.
    pub fn add_sample(
        &mut self,
        basis: &InputBasis,
        amp: Vec<f64>,
        output: Vec<f64>,
    ) -> Result<AddOutcome> {
        let input = basis.amp_to_input(&amp)?;
        self.push(Sample { amp, input, output })
    }

    /// Appends a sample whose input trajectory is already known.
    pub fn push(&mut self, sample: Sample) -> Result<AddOutcome> {
        if sample.amp.len() != self.mu {
            return Err(Error::DimensionMismatch {
                expected: self.mu,
                got: sample.amp.len(),
            });
        }
        if sample.input.len() != self.n || sample.output.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: sample.input.len().min(sample.output.len()),
            });
        }
        let new_budget = self.budget_for(&sample.amp);
        let mut violations = Vec::new();
        for (i, s) in self.samples.iter().enumerate() {
            let du = linalg::dist(&s.amp, &sample.amp);
            let dy = linalg::dist(&s.output, &sample.output);
            let budget = self.sample_inflation(i) + new_budget;
            if du <= DUPLICATE_TOL {
                let scale = 1e-9 * (1.0 + linalg::norm(&s.output));
                if dy > budget + scale {
                    return Err(Error::InconsistentData {
                        index: i,
                        deviation: dy,
                    });
                }
                return Ok(AddOutcome {
                    index: i,
                    merged: true,
                    warning: None,
                });
            }
            let excess = dy - (self.lipschitz * du + budget);
            if excess > 1e-12 * (1.0 + dy) {
                violations.push((i, self.samples.len(), excess));
            }
        }
        self.samples.push(sample);
        Ok(AddOutcome {
            index: self.samples.len() - 1,
            merged: false,
            warning: (!violations.is_empty()).then_some(ConsistencyWarning { violations }),
        })
    }

    fn budget_for(&self, amp: &[f64]) -> f64 {
        match self.noise {
            NoiseModel::None => 0.0,
            NoiseModel::AdditiveBounded(d) => d,
            NoiseModel::RelativeSnr(d) => d * self.lipschitz * linalg::norm(amp),
        }
    }

    /// True iff `(amp, y)` satisfies every envelope constraint.
    pub fn membership(&self, amp: &[f64], y: &[f64]) -> bool {
        self.samples.iter().enumerate().all(|(i, s)| {
            linalg::dist(y, &s.output)
                <= self.lipschitz * linalg::dist(amp, &s.amp) + self.sample_inflation(i)
        })
    }

    /// All pairwise envelope violations currently in the log.
    pub fn consistency_violations(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for i in 0..self.samples.len() {
            for j in (i + 1)..self.samples.len() {
                let (a, b) = (&self.samples[i], &self.samples[j]);
                let dy = linalg::dist(&a.output, &b.output);
                let bound = self.lipschitz * linalg::dist(&a.amp, &b.amp)
                    + self.sample_inflation(i)
                    + self.sample_inflation(j);
                if dy - bound > 1e-12 * (1.0 + dy) {
                    out.push((i, j, dy - bound));
                }
            }
        }
        out
    }

    /// The two samples whose amplitudes are closest to `cell`; ties go to the lower index.
    pub fn closest_two_samples(&self, cell: &Cell) -> Result<(usize, usize)> {
        if self.samples.len() < 2 {
            return Err(Error::InsufficientData {
                needed: 2,
                have: self.samples.len(),
            });
        }
        let mut best = [(f64::INFINITY, usize::MAX); 2];
        for (i, s) in self.samples.iter().enumerate() {
            let d = cell.dist_to(&s.amp);
            if d < best[0].0 {
                best[1] = best[0];
                best[0] = (d, i);
            } else if d < best[1].0 {
                best[1] = (d, i);
            }
        }
        Ok((best[0].1, best[1].1))
    }

    /// `safety · max_{i<j} ‖y_i − y_j‖ / ‖u_i − u_j‖`.
    pub fn estimate_lipschitz(&self, safety: f64) -> Result<f64> {
        if !(safety >= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "Lipschitz safety factor must be >= 1, got {safety}"
            )));
        }
        if self.samples.len() < 2 {
            return Err(Error::InsufficientData {
                needed: 2,
                have: self.samples.len(),
            });
        }
        let mut slope: Option<f64> = None;
        for i in 0..self.samples.len() {
            for j in (i + 1)..self.samples.len() {
                let (a, b) = (&self.samples[i], &self.samples[j]);
                let du = linalg::dist(&a.amp, &b.amp);
                if du <= DUPLICATE_TOL {
                    continue;
                }
                let s = linalg::dist(&a.output, &b.output) / du;
                slope = Some(slope.map_or(s, |m: f64| m.max(s)));
            }
        }
        slope.map(|s| safety * s).ok_or(Error::IdenticalAmplitudes)
    }

    pub fn to_document(&self) -> DatasetDocument {
        DatasetDocument {
            n: self.n,
            mu: self.mu,
            lipschitz: self.lipschitz,
            noise: self.noise,
            samples: self
                .samples
                .iter()
                .map(|s| SampleDocument {
                    amp: s.amp.clone(),
                    output: s.output.clone(),
                    input: Some(s.input.clone()),
                })
                .collect(),
        }
    }

    /// Rebuilds a dataset. Samples without an `input` field are mapped through
    /// `basis`, or taken as `input = amp` when `n == mu` and no basis is given.
    pub fn from_document(doc: DatasetDocument, basis: Option<&InputBasis>) -> Result<Self> {
        let mut ds = Dataset::new(doc.n, doc.mu, doc.lipschitz, doc.noise)?;
        for s in doc.samples {
            let input = match (s.input, basis) {
                (Some(u), _) => u,
                (None, Some(b)) => b.combine(&s.amp),
                (None, None) if doc.n == doc.mu => s.amp.clone(),
                (None, None) => {
                    return Err(Error::InvalidConfig(
                        "sample without input trajectory and no basis to map it".into(),
                    ))
                }
            };
            ds.push(Sample {
                amp: s.amp,
                input,
                output: s.output,
            })?;
        }
        Ok(ds)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(text: &str, basis: Option<&InputBasis>) -> Result<Self> {
        Self::from_document(serde_json::from_str(text)?, basis)
    }
}

/// On-disk dataset schema.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DatasetDocument {
    pub n: usize,
    pub mu: usize,
    #[serde(rename = "L")]
    pub lipschitz: f64,
    #[serde(default)]
    pub noise: NoiseModel,
    pub samples: Vec<SampleDocument>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SampleDocument {
    pub amp: Vec<f64>,
    pub output: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<Vec<f64>>,
}
