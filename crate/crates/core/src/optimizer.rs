//! Local AE-NLM inference: maximisation of the pointwise relaxation objective
//! over one cell, restricted to `‖ū‖ ≥ ε`.
//!
//! Certified mode runs a best-first subdivision of the cell. For a sub-box `B`
//! with centre `c` every input `u ∈ B` satisfies
//!
//! - `r_i(u) ≤ R_i := L · max_{v ∈ B} ‖v − u_i‖ + inflation_i`, so the output
//!   slice at `u` lies inside the two-ball intersection with radii `R_1, R_2`;
//! - `‖G(u) − G(c)‖ ≤ ΔG`, with `ΔG` from the column norms of `T(g)V` and `‖g‖₁`;
//! - `‖u‖ ≥ max(ε, dist(0, B))`.
//!
//! Hence `(refined(G(c), R_1, R_2) + ΔG) / max(ε, dist(0, B))` over-estimates the
//! objective on `B`. This never exceeds `min_i (‖y_i − G(c)‖ + ‖G‖ h + r_i(c) + L h
//! + inflation) / max(ε, ‖c‖ − h)` and tends to the objective at `c` as `B` shrinks.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::envelope::Dataset;
use crate::linalg;
use crate::relaxation::PairKernel;
use crate::space::{self, Cell, InputBasis};
use crate::surrogate::LinearSurrogate;
use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerMode {
    Certified,
    FastHeuristic,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    /// Certification gap tolerance.
    pub eta: f64,
    /// Budget of sub-box splits per cell.
    pub max_subdivisions: usize,
    pub mode: OptimizerMode,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            eta: 1e-3,
            max_subdivisions: 100_000,
            mode: OptimizerMode::Certified,
        }
    }
}

impl OptimizerConfig {
    /// Default configuration with `eta = 1e-3 · L`.
    pub fn for_lipschitz(lipschitz: f64) -> Self {
        Self {
            eta: 1e-3 * lipschitz,
            ..Self::default()
        }
    }
}

/// Outcome of [`maximize_over_cell`].
#[derive(Clone, Debug, PartialEq)]
pub struct CellBound {
    /// Upper bound on the objective over the feasible part of the cell.
    pub bound: f64,
    pub worst_amp: Vec<f64>,
    /// Objective value attained at `worst_amp`.
    pub best_value: f64,
    pub support: (usize, usize),
    /// `bound − best_value ≤ eta` was certified.
    pub gap_met: bool,
    /// The cell lies entirely in `‖ū‖ < ε`.
    pub below_epsilon: bool,
    pub evaluations: usize,
}

impl CellBound {
    /// Writes the result into `cell` without saturation.
    pub fn apply_to(&self, cell: &mut Cell) {
        cell.bound = self.bound;
        cell.worst_amp = self.worst_amp.clone();
        cell.support = self.support;
        cell.gap_met = self.gap_met;
        cell.below_epsilon = self.below_epsilon;
    }
}

/// `T(g) V` restricted to the basis, so `G(V ū) = Σ_j ū_j col_j`.
struct ProjectedSurrogate {
    columns: Vec<Vec<f64>>,
    col_norms: Vec<f64>,
    op_norm: f64,
    n: usize,
}

impl ProjectedSurrogate {
    fn new(g: &LinearSurrogate, basis: &InputBasis) -> Self {
        let columns: Vec<Vec<f64>> = basis.columns().iter().map(|v| g.apply(v)).collect();
        let col_norms = columns.iter().map(|c| linalg::norm(c)).collect();
        Self {
            columns,
            col_norms,
            op_norm: g.op_norm_bound(),
            n: basis.n(),
        }
    }

    fn apply_into(&self, amp: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (a, col) in amp.iter().zip(&self.columns) {
            linalg::axpy(*a, col, out);
        }
    }

    /// Bound on `‖G(u) − G(c)‖` for `ū` within half-widths `w` of `c`.
    fn variation(&self, half_widths: &[f64]) -> f64 {
        let h = linalg::norm(half_widths);
        let by_columns: f64 = half_widths
            .iter()
            .zip(&self.col_norms)
            .map(|(w, c)| w * c)
            .sum();
        by_columns.min(self.op_norm * h)
    }
}

/// The two-sample local inference problem for one cell.
struct LocalProblem<'a> {
    surrogate: ProjectedSurrogate,
    kernel: PairKernel,
    anchors: [&'a [f64]; 2],
    inflation: [f64; 2],
    lipschitz: f64,
    epsilon: f64,
    scratch: Vec<f64>,
    evaluations: usize,
}

impl LocalProblem<'_> {
    fn objective(&mut self, amp: &[f64]) -> Result<Option<f64>> {
        let norm = linalg::norm(amp);
        if norm < self.epsilon {
            return Ok(None);
        }
        self.evaluations += 1;
        let mut p = std::mem::take(&mut self.scratch);
        p.resize(self.surrogate.n, 0.0);
        self.surrogate.apply_into(amp, &mut p);
        let r1 = self.lipschitz * linalg::dist(amp, self.anchors[0]) + self.inflation[0];
        let r2 = self.lipschitz * linalg::dist(amp, self.anchors[1]) + self.inflation[1];
        let num = self.kernel.numerator(&p, r1, r2);
        self.scratch = p;
        Ok(Some(num? / norm))
    }

    fn over_estimate(&mut self, lo: &[f64], hi: &[f64]) -> Result<Option<f64>> {
        let corner = space::box_max_norm_corner(lo, hi);
        if linalg::norm(&corner) < self.epsilon {
            return Ok(None);
        }
        let center: Vec<f64> = lo.iter().zip(hi).map(|(l, h)| 0.5 * (l + h)).collect();
        let half: Vec<f64> = lo.iter().zip(hi).map(|(l, h)| 0.5 * (h - l)).collect();
        let mut p = std::mem::take(&mut self.scratch);
        p.resize(self.surrogate.n, 0.0);
        self.surrogate.apply_into(&center, &mut p);
        let big1 = self.lipschitz * space::box_max_dist(lo, hi, self.anchors[0]) + self.inflation[0];
        let big2 = self.lipschitz * space::box_max_dist(lo, hi, self.anchors[1]) + self.inflation[1];
        let num = self.kernel.numerator(&p, big1, big2);
        self.scratch = p;
        let origin = vec![0.0; lo.len()];
        let den = space::box_min_dist(lo, hi, &origin).max(self.epsilon);
        Ok(Some((num? + self.surrogate.variation(&half)) / den))
    }

    /// A feasible representative of the box: its centre, or the largest-norm corner.
    fn probe_point(&self, lo: &[f64], hi: &[f64]) -> Vec<f64> {
        let center: Vec<f64> = lo.iter().zip(hi).map(|(l, h)| 0.5 * (l + h)).collect();
        if linalg::norm(&center) >= self.epsilon {
            center
        } else {
            space::box_max_norm_corner(lo, hi)
        }
    }
}

struct SubBox {
    over: f64,
    seq: u64,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl PartialEq for SubBox {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for SubBox {}
impl PartialOrd for SubBox {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for SubBox {
    fn cmp(&self, other: &Self) -> Ordering {
        self.over
            .total_cmp(&other.over)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Computes the local inference of `cell` from its two closest samples.
pub fn maximize_over_cell(
    g: &LinearSurrogate,
    basis: &InputBasis,
    ds: &Dataset,
    cell: &Cell,
    cfg: &OptimizerConfig,
) -> Result<CellBound> {
    let support = ds.closest_two_samples(cell)?;
    let samples = ds.samples();
    let (s1, s2) = (&samples[support.0], &samples[support.1]);
    let mut prob = LocalProblem {
        surrogate: ProjectedSurrogate::new(g, basis),
        kernel: PairKernel::new(&s1.output, &s2.output),
        anchors: [&s1.amp, &s2.amp],
        inflation: [
            ds.support_inflation(cell, support.0),
            ds.support_inflation(cell, support.1),
        ],
        lipschitz: ds.lipschitz(),
        epsilon: basis.epsilon(),
        scratch: Vec::new(),
        evaluations: 0,
    };

    let corner = space::box_max_norm_corner(&cell.lo, &cell.hi);
    if linalg::norm(&corner) < basis.epsilon() {
        return Ok(CellBound {
            bound: 0.0,
            worst_amp: cell.center(),
            best_value: 0.0,
            support,
            gap_met: true,
            below_epsilon: true,
            evaluations: 0,
        });
    }

    let clamp = |p: &[f64]| -> Vec<f64> {
        p.iter()
            .zip(cell.lo.iter().zip(&cell.hi))
            .map(|(x, (l, h))| x.clamp(*l, *h))
            .collect()
    };
    let mut seeds = vec![
        prob.probe_point(&cell.lo, &cell.hi),
        clamp(&s1.amp),
        clamp(&s2.amp),
        corner,
    ];
    if cell.contains(&cell.worst_amp) {
        seeds.push(cell.worst_amp.clone());
    }
    let mut best = f64::NEG_INFINITY;
    let mut best_amp = seeds[0].clone();
    for s in seeds {
        if let Some(v) = prob.objective(&s)? {
            if v > best {
                best = v;
                best_amp = s;
            }
        }
    }

    let result = match cfg.mode {
        OptimizerMode::Certified => certify(&mut prob, cell, cfg, best, best_amp)?,
        OptimizerMode::FastHeuristic => heuristic(&mut prob, cell, best, best_amp)?,
    };
    let (bound, worst_amp, best_value, gap_met) = result;
    Ok(CellBound {
        bound,
        worst_amp,
        best_value,
        support,
        gap_met,
        below_epsilon: false,
        evaluations: prob.evaluations,
    })
}

fn certify(
    prob: &mut LocalProblem<'_>,
    cell: &Cell,
    cfg: &OptimizerConfig,
    mut best: f64,
    mut best_amp: Vec<f64>,
) -> Result<(f64, Vec<f64>, f64, bool)> {
    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    // Largest over-estimate among boxes too small to split further.
    let mut stuck = f64::NEG_INFINITY;
    if let Some(over) = prob.over_estimate(&cell.lo, &cell.hi)? {
        heap.push(SubBox {
            over,
            seq,
            lo: cell.lo.clone(),
            hi: cell.hi.clone(),
        });
    }
    let mut splits = 0usize;
    loop {
        let top = heap.peek().map_or(f64::NEG_INFINITY, |b| b.over);
        let upper = top.max(stuck).max(best);
        if top <= best + cfg.eta || splits >= cfg.max_subdivisions {
            let gap_met = upper - best <= cfg.eta;
            return Ok((upper, best_amp, best, gap_met));
        }
        let b = heap.pop().expect("non-empty heap");
        let (j, _) = space::longest_edge(&b.lo, &b.hi);
        let mid = 0.5 * (b.lo[j] + b.hi[j]);
        if !(b.lo[j] < mid && mid < b.hi[j]) {
            stuck = stuck.max(b.over);
            continue;
        }
        splits += 1;
        let mut left_hi = b.hi.clone();
        left_hi[j] = mid;
        let mut right_lo = b.lo.clone();
        right_lo[j] = mid;
        for (lo, hi) in [(b.lo.clone(), left_hi), (right_lo, b.hi)] {
            let probe = prob.probe_point(&lo, &hi);
            if let Some(v) = prob.objective(&probe)? {
                if v > best {
                    best = v;
                    best_amp = probe;
                }
            }
            if let Some(over) = prob.over_estimate(&lo, &hi)? {
                if over > best {
                    seq += 1;
                    heap.push(SubBox { over, seq, lo, hi });
                }
            }
        }
    }
}

/// Multistart compass search from a grid of seeds. Not certified.
fn heuristic(
    prob: &mut LocalProblem<'_>,
    cell: &Cell,
    mut best: f64,
    mut best_amp: Vec<f64>,
) -> Result<(f64, Vec<f64>, f64, bool)> {
    let mu = cell.dim();
    let per_dim: usize = match mu {
        1 => 17,
        2 => 9,
        3 => 5,
        _ => 3,
    };
    let total = per_dim.pow(mu as u32);
    let mut scored = Vec::with_capacity(total);
    for idx in 0..total {
        let mut rem = idx;
        let point: Vec<f64> = (0..mu)
            .map(|k| {
                let t = (rem % per_dim) as f64 / (per_dim - 1) as f64;
                rem /= per_dim;
                cell.lo[k] + t * (cell.hi[k] - cell.lo[k])
            })
            .collect();
        if let Some(v) = prob.objective(&point)? {
            scored.push((v, point));
        }
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let width = cell
        .lo
        .iter()
        .zip(&cell.hi)
        .map(|(l, h)| h - l)
        .fold(0.0, f64::max);
    for (mut val, mut x) in scored.into_iter().take(3) {
        let mut step = 0.25 * width;
        while step > 1e-6 * width.max(1e-300) {
            let mut improved = false;
            for k in 0..mu {
                for dir in [1.0, -1.0] {
                    let mut y = x.clone();
                    y[k] = (y[k] + dir * step).clamp(cell.lo[k], cell.hi[k]);
                    if let Some(v) = prob.objective(&y)? {
                        if v > val {
                            val = v;
                            x = y;
                            improved = true;
                        }
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        if val > best {
            best = val;
            best_amp = x;
        }
    }
    Ok((best, best_amp, best, false))
}

/// Evaluates both children of a split and saturates them by the parent's bound.
pub fn local_bound_for_children(
    parent: &Cell,
    mut first: Cell,
    mut second: Cell,
    g: &LinearSurrogate,
    basis: &InputBasis,
    ds: &Dataset,
    cfg: &OptimizerConfig,
) -> Result<(Cell, Cell)> {
    for child in [&mut first, &mut second] {
        let res = maximize_over_cell(g, basis, ds, child, cfg)?;
        res.apply_to(child);
        child.bound = child.bound.min(parent.bound);
    }
    Ok((first, second))
}
