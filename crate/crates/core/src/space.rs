//! Amplitude-parameterised input sets and their hyperrectangle cells.
//!
//! Inputs are trajectories `u = V ū` where the columns of `V` are orthonormal, so
//! every distance and norm can be evaluated on the amplitude vector `ū` directly.

use serde::{Deserialize, Serialize};

use crate::linalg;
use crate::{Error, Result};

/// Relative tolerance below which a Gram-Schmidt residual counts as linear dependence.
const RANK_TOL: f64 = 1e-9;
/// Slack allowed when testing whether an amplitude lies in a box.
const BOX_TOL: f64 = 1e-12;

/// An orthonormal signal basis together with the amplitude box it is driven over.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputBasis {
    n: usize,
    /// Basis columns, each of length `n`.
    columns: Vec<Vec<f64>>,
    box_lo: Vec<f64>,
    box_hi: Vec<f64>,
    /// Upper corner of the excluded sub-box `[box_lo, exclusion_hi]`.
    exclusion_hi: Option<Vec<f64>>,
    epsilon: f64,
}

/// Orthonormalises `raw` with modified Gram-Schmidt and attaches the amplitude box.
///
/// `exclusion_hi` is the upper corner of a sub-box anchored at `box_lo` that is
/// removed from the input set.
pub fn build_basis(
    raw: &[Vec<f64>],
    box_lo: Vec<f64>,
    box_hi: Vec<f64>,
    exclusion_hi: Option<Vec<f64>>,
    epsilon: f64,
) -> Result<InputBasis> {
    let mu = raw.len();
    if mu == 0 {
        return Err(Error::InvalidInputSet("no basis signals".into()));
    }
    let n = raw[0].len();
    if n == 0 || mu > n {
        return Err(Error::InvalidInputSet(format!(
            "need 0 < mu <= n, got mu = {mu}, n = {n}"
        )));
    }
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(mu);
    for (index, signal) in raw.iter().enumerate() {
        if signal.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: signal.len(),
            });
        }
        let original = linalg::norm(signal);
        let mut v = signal.clone();
        for q in &columns {
            let c = linalg::dot(q, &v);
            linalg::axpy(-c, q, &mut v);
        }
        let residual = linalg::norm(&v);
        if original == 0.0 || residual <= RANK_TOL * original {
            return Err(Error::DegenerateBasis { index });
        }
        columns.push(linalg::scale(1.0 / residual, &v));
    }
    InputBasis::from_orthonormal(columns, box_lo, box_hi, exclusion_hi, epsilon)
}

impl InputBasis {
    /// Builds a basis from columns that are already orthonormal (checked to 1e-10).
    pub fn from_orthonormal(
        columns: Vec<Vec<f64>>,
        box_lo: Vec<f64>,
        box_hi: Vec<f64>,
        exclusion_hi: Option<Vec<f64>>,
        epsilon: f64,
    ) -> Result<Self> {
        let mu = columns.len();
        let n = columns.first().map_or(0, Vec::len);
        if mu == 0 || n == 0 || mu > n {
            return Err(Error::InvalidInputSet(format!(
                "need 0 < mu <= n, got mu = {mu}, n = {n}"
            )));
        }
        for (i, a) in columns.iter().enumerate() {
            if a.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: a.len(),
                });
            }
            for (j, b) in columns.iter().enumerate().take(i + 1) {
                let target = if i == j { 1.0 } else { 0.0 };
                if (linalg::dot(a, b) - target).abs() > 1e-10 {
                    return Err(Error::InvalidInputSet(format!(
                        "columns {j} and {i} are not orthonormal"
                    )));
                }
            }
        }
        if box_lo.len() != mu || box_hi.len() != mu {
            return Err(Error::DimensionMismatch {
                expected: mu,
                got: box_lo.len().min(box_hi.len()),
            });
        }
        if box_lo.iter().zip(&box_hi).any(|(l, h)| !(l < h)) {
            return Err(Error::InvalidInputSet("box_lo must be < box_hi".into()));
        }
        if let Some(ex) = &exclusion_hi {
            if ex.len() != mu {
                return Err(Error::DimensionMismatch {
                    expected: mu,
                    got: ex.len(),
                });
            }
            if ex.iter().zip(&box_lo).zip(&box_hi).any(|((e, l), h)| e < l || e > h) {
                return Err(Error::InvalidInputSet(
                    "exclusion must be a sub-box anchored at box_lo".into(),
                ));
            }
        }
        if !(epsilon > 0.0) {
            return Err(Error::InvalidInputSet("epsilon must be positive".into()));
        }
        Ok(Self {
            n,
            columns,
            box_lo,
            box_hi,
            exclusion_hi,
            epsilon,
        })
    }

    /// The scalar case `n = mu = 1` with `V = [1]`.
    pub fn scalar(lo: f64, hi: f64, exclusion_hi: Option<f64>, epsilon: f64) -> Result<Self> {
        Self::from_orthonormal(
            vec![vec![1.0]],
            vec![lo],
            vec![hi],
            exclusion_hi.map(|e| vec![e]),
            epsilon,
        )
    }

    /// Trajectory length.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of basis signals.
    pub fn mu(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn box_lo(&self) -> &[f64] {
        &self.box_lo
    }

    pub fn box_hi(&self) -> &[f64] {
        &self.box_hi
    }

    pub fn exclusion_hi(&self) -> Option<&[f64]> {
        self.exclusion_hi.as_deref()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn in_box(&self, amp: &[f64]) -> bool {
        amp.len() == self.mu()
            && amp
                .iter()
                .zip(self.box_lo.iter().zip(&self.box_hi))
                .all(|(a, (l, h))| {
                    let slack = BOX_TOL * (1.0 + l.abs().max(h.abs()));
                    *a >= l - slack && *a <= h + slack
                })
    }

    /// True if `amp` lies in the open interior of the excluded corner box.
    pub fn in_exclusion(&self, amp: &[f64]) -> bool {
        match &self.exclusion_hi {
            None => false,
            Some(ex) => amp.iter().zip(ex).all(|(a, e)| a < e),
        }
    }

    /// Amplitude lies in the covered region and satisfies `‖ū‖ ≥ ε`.
    pub fn is_feasible(&self, amp: &[f64]) -> bool {
        self.in_box(amp) && !self.in_exclusion(amp) && linalg::norm(amp) >= self.epsilon
    }

    /// `V · amp`.
    pub fn amp_to_input(&self, amp: &[f64]) -> Result<Vec<f64>> {
        if amp.len() != self.mu() {
            return Err(Error::DimensionMismatch {
                expected: self.mu(),
                got: amp.len(),
            });
        }
        if !self.in_box(amp) {
            return Err(Error::OutsideBox { amp: amp.to_vec() });
        }
        Ok(self.combine(amp))
    }

    /// `V · amp` without the box check.
    pub(crate) fn combine(&self, amp: &[f64]) -> Vec<f64> {
        let mut u = vec![0.0; self.n];
        for (a, col) in amp.iter().zip(&self.columns) {
            linalg::axpy(*a, col, &mut u);
        }
        u
    }

    /// Cells covering the box minus the excluded corner.
    ///
    /// An exclusion `[lo, c]` is removed with the staircase decomposition: cell `i`
    /// spans `[lo_j, c_j]` for `j < i`, `[c_i, hi_i]` in dimension `i` and the full
    /// box range for `j > i`.
    pub fn initial_partition(&self) -> Vec<Cell> {
        let mu = self.mu();
        let boxes: Vec<(Vec<f64>, Vec<f64>)> = match &self.exclusion_hi {
            None => vec![(self.box_lo.clone(), self.box_hi.clone())],
            Some(c) => (0..mu)
                .filter(|&i| c[i] < self.box_hi[i])
                .map(|i| {
                    let mut lo = self.box_lo.clone();
                    let mut hi = self.box_hi.clone();
                    hi[..i].copy_from_slice(&c[..i]);
                    lo[i] = c[i];
                    (lo, hi)
                })
                .collect(),
        };
        boxes
            .into_iter()
            .enumerate()
            .map(|(id, (lo, hi))| Cell::new(id as u64, lo, hi))
            .collect()
    }

    /// Total volume of the covered region.
    pub fn region_volume(&self) -> f64 {
        let full = box_volume(&self.box_lo, &self.box_hi);
        match &self.exclusion_hi {
            None => full,
            Some(c) => full - box_volume(&self.box_lo, c),
        }
    }
}

/// How a cell was divided.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    /// Hyperplane through the worst-case amplitude; the plant is sampled there.
    AtWorstCase,
    /// Hyperplane through the midpoint of the longest edge; the plant is sampled at the cell centre.
    AtMidpoint,
}

impl SplitKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitKind::AtWorstCase => "worst_case",
            SplitKind::AtMidpoint => "midpoint",
        }
    }
}

/// A hyperrectangle of amplitude space with its local bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub id: u64,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Local AE-NLM bound (after saturation).
    pub bound: f64,
    /// Maximiser of the local inference.
    pub worst_amp: Vec<f64>,
    /// Sample indices generating the local envelope.
    pub support: (usize, usize),
    /// Cell lies entirely inside `‖ū‖ < ε`; `bound` is 0 by convention.
    #[serde(default)]
    pub below_epsilon: bool,
    /// The certified optimiser closed its gap on this cell.
    #[serde(default = "default_true")]
    pub gap_met: bool,
}

fn default_true() -> bool {
    true
}

impl Cell {
    /// Un-evaluated cell with zero bound and the centre as placeholder worst case.
    pub fn new(id: u64, lo: Vec<f64>, hi: Vec<f64>) -> Self {
        let worst_amp = lo.iter().zip(&hi).map(|(l, h)| 0.5 * (l + h)).collect();
        Self {
            id,
            lo,
            hi,
            bound: 0.0,
            worst_amp,
            support: (0, 0),
            below_epsilon: false,
            gap_met: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn volume(&self) -> f64 {
        box_volume(&self.lo, &self.hi)
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (l + h)).collect()
    }

    /// Index and length of the longest edge; ties go to the lowest index.
    pub fn longest_edge(&self) -> (usize, f64) {
        longest_edge(&self.lo, &self.hi)
    }

    pub fn contains(&self, amp: &[f64]) -> bool {
        amp.iter().zip(self.lo.iter().zip(&self.hi)).all(|(a, (l, h))| {
            let slack = BOX_TOL * (1.0 + l.abs().max(h.abs()));
            *a >= l - slack && *a <= h + slack
        })
    }

    /// Euclidean distance from `p` to the cell (0 inside).
    pub fn dist_to(&self, p: &[f64]) -> f64 {
        box_min_dist(&self.lo, &self.hi, p)
    }
}

pub(crate) fn box_volume(lo: &[f64], hi: &[f64]) -> f64 {
    lo.iter().zip(hi).map(|(l, h)| h - l).product()
}

pub(crate) fn longest_edge(lo: &[f64], hi: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (j, (l, h)) in lo.iter().zip(hi).enumerate() {
        if h - l > best.1 {
            best = (j, h - l);
        }
    }
    best
}

/// Distance from `p` to the nearest point of the box.
pub(crate) fn box_min_dist(lo: &[f64], hi: &[f64], p: &[f64]) -> f64 {
    lo.iter()
        .zip(hi)
        .zip(p)
        .map(|((l, h), x)| {
            let d = if x < l {
                l - x
            } else if x > h {
                x - h
            } else {
                0.0
            };
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Distance from `p` to the farthest corner of the box.
pub(crate) fn box_max_dist(lo: &[f64], hi: &[f64], p: &[f64]) -> f64 {
    lo.iter()
        .zip(hi)
        .zip(p)
        .map(|((l, h), x)| {
            let d = (x - l).abs().max((h - x).abs());
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Corner of the box with the largest Euclidean norm.
pub(crate) fn box_max_norm_corner(lo: &[f64], hi: &[f64]) -> Vec<f64> {
    lo.iter()
        .zip(hi)
        .map(|(l, h)| if h.abs() >= l.abs() { *h } else { *l })
        .collect()
}

/// Divides `cell` across its longest edge.
///
/// The hyperplane passes through `amp_star` when the resulting volume ratio lies
/// strictly inside `(alpha, 1/alpha)`, otherwise through the edge midpoint. The
/// first child keeps the parent id; the second child's id is left at 0 for the
/// caller to assign. Both children inherit the parent's bound and support.
pub fn split_cell(cell: &Cell, amp_star: &[f64], alpha: f64) -> Result<(Cell, Cell, SplitKind)> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "split parameter alpha must lie in (0, 1), got {alpha}"
        )));
    }
    if amp_star.len() != cell.dim() {
        return Err(Error::DimensionMismatch {
            expected: cell.dim(),
            got: amp_star.len(),
        });
    }
    if !cell.contains(amp_star) {
        return Err(Error::OutsideBox {
            amp: amp_star.to_vec(),
        });
    }
    let (j, edge) = cell.longest_edge();
    let (lo_j, hi_j) = (cell.lo[j], cell.hi[j]);
    let mid = 0.5 * (lo_j + hi_j);
    if !(edge > 0.0) || !(lo_j < mid && mid < hi_j) {
        return Err(Error::CellBelowResolution { edge });
    }

    let s = amp_star[j].clamp(lo_j, hi_j);
    let left = s - lo_j;
    let right = hi_j - s;
    let ratio = if right > 0.0 { left / right } else { f64::INFINITY };
    let (coord, kind) = if ratio > alpha && ratio < 1.0 / alpha {
        (s, SplitKind::AtWorstCase)
    } else {
        (mid, SplitKind::AtMidpoint)
    };

    let mut first = cell.clone();
    first.hi[j] = coord;
    let mut second = cell.clone();
    second.lo[j] = coord;
    second.id = 0;
    for child in [&mut first, &mut second] {
        child.worst_amp = amp_star
            .iter()
            .zip(child.lo.iter().zip(&child.hi))
            .map(|(a, (l, h))| a.clamp(*l, *h))
            .collect();
    }
    Ok((first, second, kind))
}
