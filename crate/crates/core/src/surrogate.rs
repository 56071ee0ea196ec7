//! Causal LTI surrogate `G(u) = T(g) u`, with `T(g)` the lower-triangular
//! Toeplitz matrix whose first column is the impulse response `g`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::envelope::Dataset;
use crate::linalg;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SurrogateDocument", into = "SurrogateDocument")]
pub struct LinearSurrogate {
    g: Vec<f64>,
    op_norm_bound: f64,
}

/// On-disk surrogate schema.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurrogateDocument {
    pub n: usize,
    pub g: Vec<f64>,
}

impl TryFrom<SurrogateDocument> for LinearSurrogate {
    type Error = String;

    fn try_from(doc: SurrogateDocument) -> std::result::Result<Self, String> {
        if doc.g.len() != doc.n {
            return Err(format!("g has length {}, expected n = {}", doc.g.len(), doc.n));
        }
        Ok(LinearSurrogate::new(doc.g))
    }
}

impl From<LinearSurrogate> for SurrogateDocument {
    fn from(s: LinearSurrogate) -> Self {
        SurrogateDocument { n: s.g.len(), g: s.g }
    }
}

impl LinearSurrogate {
    pub fn new(g: Vec<f64>) -> Self {
        // Young's inequality: ‖g * u‖₂ ≤ ‖g‖₁ ‖u‖₂.
        let op_norm_bound = g.iter().map(|v| v.abs()).sum();
        Self { g, op_norm_bound }
    }

    pub fn zero(n: usize) -> Self {
        Self::new(vec![0.0; n])
    }

    pub fn identity(n: usize) -> Self {
        let mut g = vec![0.0; n];
        g[0] = 1.0;
        Self::new(g)
    }

    pub fn n(&self) -> usize {
        self.g.len()
    }

    pub fn impulse_response(&self) -> &[f64] {
        &self.g
    }

    /// Upper bound on the spectral norm of `T(g)`.
    pub fn op_norm_bound(&self) -> f64 {
        self.op_norm_bound
    }

    /// Causal convolution `y[k] = Σ_{j ≤ k} g[k − j] u[j]`.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        convolve(&self.g, u)
    }

    pub fn toeplitz(&self) -> DMatrix<f64> {
        toeplitz(&self.g)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn convolve(g: &[f64], u: &[f64]) -> Vec<f64> {
    let n = u.len().min(g.len());
    (0..n)
        .map(|k| (0..=k).map(|j| g[k - j] * u[j]).sum())
        .collect()
}

/// Lower-triangular Toeplitz matrix with first column `c`.
pub fn toeplitz(c: &[f64]) -> DMatrix<f64> {
    let n = c.len();
    DMatrix::from_fn(n, n, |k, j| if j <= k { c[k - j] } else { 0.0 })
}

/// Data-driven lower bound `max_i (‖y_i − G u_i‖ − inflation_i)⁺ / ‖u_i‖` over
/// samples with `‖u_i‖ ≥ ε`.
pub fn lower_bound(g: &LinearSurrogate, ds: &Dataset, epsilon: f64) -> f64 {
    ds.samples()
        .iter()
        .enumerate()
        .filter_map(|(i, s)| {
            let un = linalg::norm(&s.input);
            (un >= epsilon && un > 0.0).then(|| {
                let res = linalg::dist(&s.output, &g.apply(&s.input));
                (res - ds.sample_inflation(i)).max(0.0) / un
            })
        })
        .fold(0.0, f64::max)
}

/// Result of [`fit_minimax`].
#[derive(Clone, Debug)]
pub struct MinimaxFit {
    pub surrogate: LinearSurrogate,
    /// `J(ĝ) = max_i ‖y_i − T(ĝ) u_i‖ / ‖u_i‖`.
    pub objective: f64,
    /// Certified lower bound on `min_g J(g)`.
    pub lower_bound: f64,
    pub gap: f64,
    pub converged: bool,
    pub newton_steps: usize,
}

/// Normalised residual pieces `A_i g − b_i` with `A_i = T(u_i)/‖u_i‖`, `b_i = y_i/‖u_i‖`.
struct ResidualPieces {
    a: Vec<DMatrix<f64>>,
    ata: Vec<DMatrix<f64>>,
    b: Vec<DVector<f64>>,
}

impl ResidualPieces {
    fn new(ds: &Dataset) -> Self {
        let mut a = Vec::new();
        let mut ata = Vec::new();
        let mut b = Vec::new();
        for s in ds.samples() {
            let un = linalg::norm(&s.input);
            if un == 0.0 {
                continue;
            }
            let ai = toeplitz(&s.input) / un;
            ata.push(ai.transpose() * &ai);
            a.push(ai);
            b.push(DVector::from_column_slice(&s.output) / un);
        }
        Self { a, ata, b }
    }

    fn len(&self) -> usize {
        self.a.len()
    }

    fn residual(&self, i: usize, g: &DVector<f64>) -> DVector<f64> {
        &self.a[i] * g - &self.b[i]
    }

    fn objective(&self, g: &DVector<f64>) -> f64 {
        (0..self.len())
            .map(|i| self.residual(i, g).norm())
            .fold(0.0, f64::max)
    }

    /// `min_g Σ w_i ‖A_i g − b_i‖²` via SVD of the stacked system.
    fn weighted_least_squares(&self, w: &[f64]) -> (DVector<f64>, f64) {
        let n = self.a[0].ncols();
        let rows = self.len() * self.a[0].nrows();
        let mut big = DMatrix::zeros(rows, n);
        let mut rhs = DVector::zeros(rows);
        let mut off = 0;
        for ((a, b), wi) in self.a.iter().zip(&self.b).zip(w) {
            let sw = wi.max(0.0).sqrt();
            let m = a.nrows();
            big.view_mut((off, 0), (m, n)).copy_from(&(a * sw));
            rhs.rows_mut(off, m).copy_from(&(b * sw));
            off += m;
        }
        let svd = big.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let g = svd
            .solve(&rhs, smax * 1e-13)
            .unwrap_or_else(|_| DVector::zeros(n));
        let value = (&big * &g - &rhs).norm_squared();
        (g, value)
    }
}

/// Fits `g` minimising `J(g) = max_i ‖y_i − T(g) u_i‖ / ‖u_i‖`.
///
/// The problem is solved as `min t s.t. ‖A_i g − b_i‖ ≤ t` with a log-barrier
/// Newton method. The barrier multipliers give simplex weights `w`, and
/// `sqrt(min_g Σ w_i ‖A_i g − b_i‖²)` is a lower bound on the optimum for any
/// such weights; it is recomputed independently by least squares and reported
/// as the certificate.
pub fn fit_minimax(ds: &Dataset, tol: f64) -> Result<MinimaxFit> {
    if !(tol > 0.0) {
        return Err(Error::InvalidConfig(format!("fit tolerance must be positive, got {tol}")));
    }
    let pieces = ResidualPieces::new(ds);
    let m = pieces.len();
    if m == 0 {
        return Err(Error::InsufficientData { needed: 1, have: 0 });
    }
    let n = ds.n();

    // Least-squares start.
    let (mut g, _) = pieces.weighted_least_squares(&vec![1.0 / m as f64; m]);
    let mut t = pieces.objective(&g) * 1.1 + tol;
    let mut tau = m as f64 / t;

    let mut best_g = g.clone();
    let mut best_obj = pieces.objective(&g);
    let mut best_lower = 0.0f64;
    let mut newton_steps = 0;
    let mut converged = false;

    for _outer in 0..40 {
        for _ in 0..60 {
            newton_steps += 1;
            let Some((dg, dt, decrement)) = newton_direction(&pieces, &g, t, tau) else {
                break;
            };
            if decrement < 1e-10 {
                break;
            }
            let f0 = barrier(&pieces, &g, t, tau).unwrap_or(f64::INFINITY);
            let mut step = 1.0;
            let mut moved = false;
            for _ in 0..60 {
                let gn = &g + &dg * step;
                let tn = t + dt * step;
                if let Some(f1) = barrier(&pieces, &gn, tn, tau) {
                    if f1 <= f0 - 0.25 * step * decrement {
                        g = gn;
                        t = tn;
                        moved = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            if !moved {
                break;
            }
        }

        let obj = pieces.objective(&g);
        if obj < best_obj {
            best_obj = obj;
            best_g = g.clone();
        }
        let weights: Vec<f64> = (0..m)
            .map(|i| {
                let s = t * t - pieces.residual(i, &g).norm_squared();
                2.0 * t / (tau * s.max(f64::MIN_POSITIVE))
            })
            .collect();
        let total: f64 = weights.iter().sum();
        if total > 0.0 && total.is_finite() {
            let w: Vec<f64> = weights.iter().map(|w| w / total).collect();
            let (_, value) = pieces.weighted_least_squares(&w);
            best_lower = best_lower.max(value.max(0.0).sqrt());
        }
        if best_obj - best_lower <= 0.5 * tol {
            converged = true;
            break;
        }
        tau *= 8.0;
    }
    if !converged {
        converged = best_obj - best_lower <= tol;
    }

    let mut gvec = best_g.as_slice().to_vec();
    gvec.resize(n, 0.0);
    Ok(MinimaxFit {
        surrogate: LinearSurrogate::new(gvec),
        objective: best_obj,
        lower_bound: best_lower.min(best_obj),
        gap: (best_obj - best_lower).max(0.0),
        converged,
        newton_steps,
    })
}

fn barrier(p: &ResidualPieces, g: &DVector<f64>, t: f64, tau: f64) -> Option<f64> {
    let mut f = tau * t;
    for i in 0..p.len() {
        let s = t * t - p.residual(i, g).norm_squared();
        if !(s > 0.0) || t <= 0.0 {
            return None;
        }
        f -= s.ln();
    }
    Some(f)
}

/// Newton step `(Δg, Δt)` and the squared Newton decrement.
fn newton_direction(
    p: &ResidualPieces,
    g: &DVector<f64>,
    t: f64,
    tau: f64,
) -> Option<(DVector<f64>, f64, f64)> {
    let n = g.len();
    let mut h = DMatrix::<f64>::zeros(n + 1, n + 1);
    let mut grad = DVector::<f64>::zeros(n + 1);
    grad[n] = tau;
    for i in 0..p.len() {
        let x = p.residual(i, g);
        let s = t * t - x.norm_squared();
        if !(s > 0.0) {
            return None;
        }
        let atx = p.a[i].transpose() * &x;
        let mut hgg = h.view_mut((0, 0), (n, n));
        hgg += &p.ata[i] * (2.0 / s);
        hgg.ger(4.0 / (s * s), &atx, &atx, 1.0);
        let cross = &atx * (-4.0 * t / (s * s));
        for k in 0..n {
            h[(k, n)] += cross[k];
            h[(n, k)] += cross[k];
            grad[k] += 2.0 / s * atx[k];
        }
        h[(n, n)] += -2.0 / s + 4.0 * t * t / (s * s);
        grad[n] -= 2.0 * t / s;
    }
    let scale = (0..=n).map(|k| h[(k, k)].abs()).fold(0.0, f64::max).max(1e-300);
    let mut ridge = 1e-12 * scale;
    for _ in 0..8 {
        let mut hr = h.clone();
        for k in 0..=n {
            hr[(k, k)] += ridge;
        }
        if let Some(ch) = hr.cholesky() {
            let delta = ch.solve(&(-&grad));
            let decrement = -grad.dot(&delta);
            let dg = delta.rows(0, n).into_owned();
            return Some((dg, delta[n], decrement));
        }
        ridge *= 100.0;
    }
    None
}
