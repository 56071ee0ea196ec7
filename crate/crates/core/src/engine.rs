//! The iterative branch-and-bound sampling loop.
//!
//! Each step picks the cell with the largest local bound, splits it (at its
//! worst-case amplitude when that is well inside the cell, at the midpoint
//! otherwise), queries the plant at the split point, and recomputes the two
//! children's bounds from their closest sample pairs. Children are clamped by the
//! parent's bound, so the global bound `Φ(k) = max_cells bound` never increases.

use std::fmt::{self, Write as _};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::envelope::Dataset;
use crate::linalg;
use crate::optimizer::{self, OptimizerConfig};
use crate::plant::PlantOracle;
use crate::space::{self, Cell, InputBasis, SplitKind};
use crate::surrogate::{self, LinearSurrogate};
use crate::{Error, Result};

const MAX_REJECTION_DRAWS: usize = 1_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EngineConfig {
    /// Split at the worst-case amplitude only if it divides the longest edge in
    /// a ratio within `(alpha, 1/alpha)`.
    pub alpha: f64,
    pub initial_samples: usize,
    pub rng_seed: u64,
    /// Total iteration budget, counted from initialisation.
    pub max_iters: usize,
    /// Stop once `Φ(k) − lower ≤ gap_tol`.
    pub gap_tol: f64,
    /// Lipschitz constant; estimated from the initial samples when absent.
    pub lipschitz: Option<f64>,
    /// Safety factor applied to the estimated Lipschitz constant.
    pub lipschitz_safety: f64,
    /// Optimality tolerance of the surrogate fit.
    pub fit_tol: f64,
    /// Cell optimizer settings; defaults to `eta = 1e-3 · L`.
    pub optimizer: Option<OptimizerConfig>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            initial_samples: 20,
            rng_seed: 0,
            max_iters: 1000,
            gap_tol: 0.0,
            lipschitz: None,
            lipschitz_safety: 1.1,
            fit_tol: 1e-6,
            optimizer: None,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if self.initial_samples < 2 {
            return bad("at least 2 initial samples are required".into());
        }
        if !(self.gap_tol >= 0.0) {
            return bad(format!("gap_tol must be >= 0, got {}", self.gap_tol));
        }
        if let Some(l) = self.lipschitz {
            if !(l > 0.0 && l.is_finite()) {
                return bad(format!("Lipschitz constant must be positive, got {l}"));
            }
        }
        if !(self.lipschitz_safety >= 1.0) {
            return bad(format!("lipschitz_safety must be >= 1, got {}", self.lipschitz_safety));
        }
        if !(self.fit_tol > 0.0) {
            return bad(format!("fit_tol must be > 0, got {}", self.fit_tol));
        }
        if let Some(o) = &self.optimizer {
            if !(o.eta > 0.0) {
                return bad(format!("optimizer eta must be > 0, got {}", o.eta));
            }
        }
        Ok(())
    }
}

/// One row of the bound history, describing the state after `k` iterations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub k: usize,
    /// `Φ(k)`, the largest cell bound.
    pub phi: f64,
    /// Data-driven lower bound on the AE-NLM of the surrogate.
    pub lower: f64,
    /// Worst-case amplitude of the cell attaining `Φ(k)`.
    pub worst_amp: Vec<f64>,
    /// Amplitude queried by the step that produced this state.
    pub sampled_amp: Option<Vec<f64>>,
    /// Split performed by the step that produced this state.
    pub split_kind: Option<SplitKind>,
    /// Id of the cell attaining `Φ(k)`.
    pub cell_id: u64,
    /// False if some cell bound in this state was not certified to `eta`.
    pub gap_met: bool,
}

/// Outcome of the surrogate fit done at initialisation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub objective: f64,
    pub lower_bound: f64,
    pub converged: bool,
}

/// Live branch-and-bound state; serialisable as a resumable checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EngineState {
    pub config: EngineConfig,
    pub optimizer: OptimizerConfig,
    pub basis: InputBasis,
    pub dataset: Dataset,
    pub surrogate: LinearSurrogate,
    pub fit: FitSummary,
    pub cells: Vec<Cell>,
    pub history: Vec<HistoryRecord>,
    pub k: usize,
    pub lower: f64,
    pub next_id: u64,
    pub plant_queries: u64,
    pub optimizer_calls: u64,
    /// Pairwise envelope violations seen while adding samples.
    pub consistency_warnings: u64,
}

/// Initialisation failure, carrying the samples collected before it.
#[derive(Debug)]
pub struct InitError {
    pub error: Error,
    pub partial: Option<Dataset>,
}

impl fmt::Display for InitError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.error.fmt(f)
    }
}

impl std::error::Error for InitError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl From<Error> for InitError {
    fn from(error: Error) -> Self {
        Self {
            error,
            partial: None,
        }
    }
}

/// Draws `count` amplitudes uniformly from the box, rejecting the excluded
/// corner and amplitudes with `‖ū‖ < ε`.
pub fn initial_design(basis: &InputBasis, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut draws = 0;
    while out.len() < count {
        draws += 1;
        if draws > MAX_REJECTION_DRAWS {
            return Err(Error::InvalidInputSet(
                "feasible region too small for rejection sampling".into(),
            ));
        }
        let amp: Vec<f64> = basis
            .box_lo()
            .iter()
            .zip(basis.box_hi())
            .map(|(lo, hi)| rng.random_range(*lo..*hi))
            .collect();
        if basis.is_feasible(&amp) && linalg::norm(&amp) >= basis.epsilon() {
            out.push(amp);
        }
    }
    Ok(out)
}

/// Collects the initial design, fits the surrogate and bounds every initial cell.
pub fn initialize(
    plant: &PlantOracle,
    basis: &InputBasis,
    cfg: &EngineConfig,
) -> std::result::Result<EngineState, InitError> {
    cfg.validate()?;
    if plant.steps != basis.n() {
        return Err(Error::DimensionMismatch {
            expected: basis.n(),
            got: plant.steps,
        }
        .into());
    }
    let design = initial_design(basis, cfg.initial_samples, cfg.rng_seed)?;
    let mut ds = Dataset::new(basis.n(), basis.mu(), cfg.lipschitz.unwrap_or(1.0), plant.noise)?;
    let mut queries = 0;
    for amp in design {
        let y = match plant.query(basis, &amp) {
            Ok(y) => y,
            Err(error) => {
                return Err(InitError {
                    error,
                    partial: Some(ds),
                })
            }
        };
        queries += 1;
        if let Err(error) = ds.add_sample(basis, amp, y) {
            return Err(InitError {
                error,
                partial: Some(ds),
            });
        }
    }
    let keep = |error: Error, ds: &Dataset| InitError {
        error,
        partial: Some(ds.clone()),
    };
    if cfg.lipschitz.is_none() {
        let l = ds
            .estimate_lipschitz(cfg.lipschitz_safety)
            .map_err(|e| keep(e, &ds))?;
        ds.set_lipschitz(l).map_err(|e| keep(e, &ds))?;
    }
    let warnings = ds.consistency_violations().len() as u64;
    let opt = cfg
        .optimizer
        .unwrap_or_else(|| OptimizerConfig::for_lipschitz(ds.lipschitz()));

    let fit = surrogate::fit_minimax(&ds, cfg.fit_tol).map_err(|e| keep(e, &ds))?;
    let g = fit.surrogate.clone();
    let mut cells = basis.initial_partition();
    for cell in &mut cells {
        optimizer::maximize_over_cell(&g, basis, &ds, cell, &opt)
            .map_err(|e| keep(e, &ds))?
            .apply_to(cell);
    }
    let lower = surrogate::lower_bound(&g, &ds, basis.epsilon());
    let mut state = EngineState {
        config: cfg.clone(),
        optimizer: opt,
        basis: basis.clone(),
        surrogate: g,
        fit: FitSummary {
            objective: fit.objective,
            lower_bound: fit.lower_bound,
            converged: fit.converged,
        },
        next_id: cells.len() as u64,
        optimizer_calls: cells.len() as u64,
        cells,
        dataset: ds,
        history: Vec::new(),
        k: 0,
        lower,
        plant_queries: queries,
        consistency_warnings: warnings,
    };
    let row = state.snapshot(None, None);
    state.history.push(row);
    Ok(state)
}

impl EngineState {
    /// Index of the cell with the largest bound; ties go to the lowest id.
    pub fn worst_cell(&self) -> usize {
        let mut best = 0;
        for (i, c) in self.cells.iter().enumerate().skip(1) {
            let b = &self.cells[best];
            if c.bound > b.bound || (c.bound == b.bound && c.id < b.id) {
                best = i;
            }
        }
        best
    }

    /// Current global bound `Φ(k)`.
    pub fn phi(&self) -> f64 {
        self.cells[self.worst_cell()].bound
    }

    pub fn gap(&self) -> f64 {
        self.phi() - self.lower
    }

    fn snapshot(&self, sampled: Option<Vec<f64>>, kind: Option<SplitKind>) -> HistoryRecord {
        let w = &self.cells[self.worst_cell()];
        HistoryRecord {
            k: self.k,
            phi: w.bound,
            lower: self.lower,
            worst_amp: w.worst_amp.clone(),
            sampled_amp: sampled,
            split_kind: kind,
            cell_id: w.id,
            gap_met: self.cells.iter().all(|c| c.gap_met),
        }
    }

    /// Performs one iteration. On error the state is left unchanged.
    pub fn step(&mut self, plant: &PlantOracle) -> Result<()> {
        let idx = self.worst_cell();
        let parent = self.cells[idx].clone();
        let (first, mut second, kind) =
            space::split_cell(&parent, &parent.worst_amp, self.config.alpha)?;
        let query_amp = match kind {
            SplitKind::AtWorstCase => parent.worst_amp.clone(),
            SplitKind::AtMidpoint => parent.center(),
        };
        let y = plant.query(&self.basis, &query_amp)?;

        let mut ds = self.dataset.clone();
        let added = ds.add_sample(&self.basis, query_amp.clone(), y)?;
        second.id = self.next_id;
        let (first, second) = optimizer::local_bound_for_children(
            &parent,
            first,
            second,
            &self.surrogate,
            &self.basis,
            &ds,
            &self.optimizer,
        )?;

        if let Some(w) = &added.warning {
            self.consistency_warnings += w.violations.len() as u64;
        }
        if !added.merged {
            let i = added.index;
            let s = &ds.samples()[i];
            let un = linalg::norm(&s.amp);
            if un >= self.basis.epsilon() {
                let res = linalg::dist(&s.output, &self.surrogate.apply(&s.input));
                let v = (res - ds.sample_inflation(i)).max(0.0) / un;
                self.lower = self.lower.max(v);
            }
        }
        self.dataset = ds;
        self.cells[idx] = first;
        self.cells.push(second);
        self.next_id += 1;
        self.plant_queries += 1;
        self.optimizer_calls += 2;
        self.k += 1;
        let row = self.snapshot(Some(query_amp), Some(kind));
        self.history.push(row);
        Ok(())
    }

    /// True once the iteration budget or the gap tolerance is reached.
    pub fn finished(&self) -> bool {
        self.k >= self.config.max_iters || self.gap() <= self.config.gap_tol
    }

    /// Steps until [`finished`](Self::finished).
    pub fn run(&mut self, plant: &PlantOracle) -> Result<()> {
        while !self.finished() {
            self.step(plant)?;
        }
        Ok(())
    }

    /// History as CSV: `k,phi,lower,split_kind,cell_id,amp_0..amp_{mu-1}`.
    pub fn history_csv(&self) -> String {
        let mu = self.basis.mu();
        let mut out = String::from("k,phi,lower,split_kind,cell_id");
        for j in 0..mu {
            let _ = write!(out, ",amp_{j}");
        }
        out.push('\n');
        for r in &self.history {
            let kind = r.split_kind.map_or("init", SplitKind::as_str);
            let _ = write!(out, "{},{:.16e},{:.16e},{},{}", r.k, r.phi, r.lower, kind, r.cell_id);
            for a in &r.worst_amp {
                let _ = write!(out, ",{a:.16e}");
            }
            out.push('\n');
        }
        out
    }

    /// Partition dump: `[{lo, hi, bound, bound_over_L}]`.
    pub fn cells_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct CellDump<'a> {
            lo: &'a [f64],
            hi: &'a [f64],
            bound: f64,
            #[serde(rename = "bound_over_L")]
            bound_over_l: f64,
        }
        let l = self.dataset.lipschitz();
        let dump: Vec<CellDump<'_>> = self
            .cells
            .iter()
            .map(|c| CellDump {
                lo: &c.lo,
                hi: &c.hi,
                bound: c.bound,
                bound_over_l: c.bound / l,
            })
            .collect();
        Ok(serde_json::to_string_pretty(&dump)?)
    }

    pub fn to_checkpoint(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let state: Self = serde_json::from_str(text)?;
        state.config.validate()?;
        if state.cells.is_empty() || state.history.is_empty() {
            return Err(Error::InvalidConfig("checkpoint has no cells or history".into()));
        }
        Ok(state)
    }
}
