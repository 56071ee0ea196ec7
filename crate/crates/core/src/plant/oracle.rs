//! Brute-force reference computations.
//!
//! These never call into the relaxation or optimizer code; they sample the
//! sets involved directly so they can serve as ground truth in tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::envelope::Dataset;
use crate::linalg;
use crate::space::{Cell, InputBasis};
use crate::surrogate::LinearSurrogate;
use crate::{Error, Result};

const INSIDE_TOL: f64 = 1e-12;

fn inside(y: &[f64], c: &[f64], r: f64) -> bool {
    linalg::dist(y, c) <= r + INSIDE_TOL * (1.0 + r)
}

fn unit(v: &[f64]) -> Option<Vec<f64>> {
    let n = linalg::norm(v);
    (n > 1e-300).then(|| linalg::scale(1.0 / n, v))
}

/// Maximum of `‖y − p‖` over `B(y1, r1) ∩ B(y2, r2)` for `n ∈ {2, 3}`.
///
/// Candidates: the farthest point of each ball from `p` when it lies in the
/// other ball, the rim where both spheres meet (two points for `n = 2`, a
/// sampled circle for `n = 3`), and `samples` random points on each sphere.
pub fn oracle_envelope_max(
    y1: &[f64],
    y2: &[f64],
    r1: f64,
    r2: f64,
    p: &[f64],
    samples: usize,
) -> Result<f64> {
    let n = y1.len();
    if !(n == 2 || n == 3) || y2.len() != n || p.len() != n {
        return Err(Error::InvalidInputSet(format!(
            "sphere oracle supports n in {{2, 3}}, got {n}"
        )));
    }
    let r = linalg::dist(y1, y2);
    if r1 + r2 < r - 1e-12 {
        return Err(Error::EmptyOutputSet {
            radii_sum: r1 + r2,
            r,
        });
    }
    let mut best = f64::NEG_INFINITY;
    let mut consider = |y: &[f64]| {
        if inside(y, y1, r1) && inside(y, y2, r2) {
            best = best.max(linalg::dist(y, p));
        }
    };

    for (c, rc) in [(y1, r1), (y2, r2)] {
        let dir = unit(&linalg::sub(c, p)).unwrap_or_else(|| {
            let mut e = vec![0.0; n];
            e[0] = 1.0;
            e
        });
        let mut far = c.to_vec();
        linalg::axpy(rc, &dir, &mut far);
        consider(&far);
    }

    if r > 0.0 {
        let e = linalg::scale(1.0 / r, &linalg::sub(y2, y1));
        let a = (r * r + r1 * r1 - r2 * r2) / (2.0 * r);
        let rho2 = r1 * r1 - a * a;
        if rho2 >= 0.0 {
            let rho = rho2.sqrt();
            let mut centre = y1.to_vec();
            linalg::axpy(a, &e, &mut centre);
            let comp = orthonormal_complement(&e);
            match n {
                2 => {
                    for s in [1.0, -1.0] {
                        let mut q = centre.clone();
                        linalg::axpy(s * rho, &comp[0], &mut q);
                        rim_point(&mut best, &q, p);
                    }
                }
                _ => {
                    let m = samples.max(64);
                    for k in 0..m {
                        let th = std::f64::consts::TAU * k as f64 / m as f64;
                        let mut q = centre.clone();
                        linalg::axpy(rho * th.cos(), &comp[0], &mut q);
                        linalg::axpy(rho * th.sin(), &comp[1], &mut q);
                        rim_point(&mut best, &q, p);
                    }
                }
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for _ in 0..samples {
        let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let Some(d) = unit(&v) else { continue };
        for (c, rc, other, ro) in [(y1, r1, y2, r2), (y2, r2, y1, r1)] {
            let mut y = c.to_vec();
            linalg::axpy(rc, &d, &mut y);
            if inside(&y, other, ro) {
                best = best.max(linalg::dist(&y, p));
            }
        }
    }

    if best == f64::NEG_INFINITY {
        // Only reachable for tangent balls within floating-point slack.
        let mut q = y1.to_vec();
        if r > 0.0 {
            linalg::axpy(r1 / r, &linalg::sub(y2, y1), &mut q);
        }
        best = linalg::dist(&q, p);
    }
    Ok(best)
}

/// Rim points lie on both spheres by construction; no membership test needed.
fn rim_point(best: &mut f64, q: &[f64], p: &[f64]) {
    *best = best.max(linalg::dist(q, p));
}

/// An orthonormal basis of the complement of the unit vector `e`.
fn orthonormal_complement(e: &[f64]) -> Vec<Vec<f64>> {
    let n = e.len();
    let mut out: Vec<Vec<f64>> = Vec::new();
    for k in 0..n {
        let mut v = vec![0.0; n];
        v[k] = 1.0;
        let c = linalg::dot(&v, e);
        linalg::axpy(-c, e, &mut v);
        for q in &out {
            let c = linalg::dot(&v, q);
            linalg::axpy(-c, q, &mut v);
        }
        if let Some(u) = unit(&v) {
            if linalg::norm(&v) > 1e-6 {
                out.push(u);
            }
        }
        if out.len() == n - 1 {
            break;
        }
    }
    out
}

/// Grid maximum of `|f(u) − gain·u| / |u|` over `u ∈ [lo, hi]`, `|u| ≥ ε`.
pub fn oracle_true_aenlm_1d(
    f: &dyn Fn(f64) -> f64,
    gain: f64,
    lo: f64,
    hi: f64,
    grid: usize,
    epsilon: f64,
) -> f64 {
    let grid = grid.max(2);
    let mut best: f64 = 0.0;
    let mut eval = |u: f64| {
        if u.abs() >= epsilon && u >= lo && u <= hi {
            best = best.max((f(u) - gain * u).abs() / u.abs());
        }
    };
    for k in 0..grid {
        eval(lo + (hi - lo) * k as f64 / (grid - 1) as f64);
    }
    eval(epsilon);
    eval(-epsilon);
    best
}

/// Grid resolution for [`oracle_full_envelope_inference`].
#[derive(Clone, Copy, Debug)]
pub struct EnvelopeGrids {
    /// Points per amplitude dimension.
    pub amp: usize,
    /// Points per output dimension (ignored for `n = 1`, where the slice is exact).
    pub output: usize,
}

/// Brute-force maximum of `‖y − G(u)‖ / ‖u‖` over gridded `(ū, y)` in the full
/// envelope of `ds`, restricted to `cell` and `‖ū‖ ≥ ε`.
pub fn oracle_full_envelope_inference(
    ds: &Dataset,
    g: &LinearSurrogate,
    basis: &InputBasis,
    cell: &Cell,
    grids: EnvelopeGrids,
) -> Result<f64> {
    let n = basis.n();
    let mu = basis.mu();
    if n > 3 || mu > 2 {
        return Err(Error::InvalidInputSet(format!(
            "full-envelope oracle supports n <= 3, mu <= 2; got n = {n}, mu = {mu}"
        )));
    }
    let per = grids.amp.max(2);
    let total = per.pow(mu as u32);
    let mut best: Option<f64> = None;
    for idx in 0..total {
        let mut rem = idx;
        let amp: Vec<f64> = (0..mu)
            .map(|k| {
                let t = (rem % per) as f64 / (per - 1) as f64;
                rem /= per;
                cell.lo[k] + t * (cell.hi[k] - cell.lo[k])
            })
            .collect();
        let un = linalg::norm(&amp);
        if un < basis.epsilon() {
            continue;
        }
        let u: Vec<f64> = {
            let mut u = vec![0.0; n];
            for (a, col) in amp.iter().zip(basis.columns()) {
                linalg::axpy(*a, col, &mut u);
            }
            u
        };
        let gu = g.apply(&u);
        let radii: Vec<f64> = ds
            .samples()
            .iter()
            .enumerate()
            .map(|(i, s)| ds.lipschitz() * linalg::dist(&amp, &s.amp) + ds.sample_inflation(i))
            .collect();
        if let Some(v) = slice_max(ds, &radii, &gu, grids.output) {
            let ratio = v / un;
            best = Some(best.map_or(ratio, |b: f64| b.max(ratio)));
        }
    }
    best.ok_or_else(|| Error::InvalidInputSet("no grid point has a feasible output".into()))
}

/// Maximum of `‖y − p‖` over the intersection of all balls `B(y_i, radii_i)`.
fn slice_max(ds: &Dataset, radii: &[f64], p: &[f64], per: usize) -> Option<f64> {
    let samples = ds.samples();
    let n = p.len();
    if n == 1 {
        let lo = samples
            .iter()
            .zip(radii)
            .map(|(s, r)| s.output[0] - r)
            .fold(f64::NEG_INFINITY, f64::max);
        let hi = samples
            .iter()
            .zip(radii)
            .map(|(s, r)| s.output[0] + r)
            .fold(f64::INFINITY, f64::min);
        return (lo <= hi + 1e-12).then(|| (lo - p[0]).abs().max((hi - p[0]).abs()));
    }
    let feasible = |y: &[f64]| {
        samples
            .iter()
            .zip(radii)
            .all(|(s, r)| inside(y, &s.output, *r))
    };
    let (k0, _) = radii
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, r)| if *r < acc.1 { (i, *r) } else { acc });
    let c = &samples[k0].output;
    let rad = radii[k0];
    let mut best: Option<f64> = None;
    let mut take = |y: &[f64]| {
        if feasible(y) {
            let v = linalg::dist(y, p);
            best = Some(best.map_or(v, |b: f64| b.max(v)));
        }
    };
    for (s, r) in samples.iter().zip(radii) {
        let dir = unit(&linalg::sub(&s.output, p)).unwrap_or_else(|| {
            let mut e = vec![0.0; n];
            e[0] = 1.0;
            e
        });
        let mut far = s.output.clone();
        linalg::axpy(*r, &dir, &mut far);
        take(&far);
    }
    let per = per.max(2);
    let total = per.pow(n as u32);
    for idx in 0..total {
        let mut rem = idx;
        let y: Vec<f64> = (0..n)
            .map(|k| {
                let t = (rem % per) as f64 / (per - 1) as f64;
                rem /= per;
                c[k] - rad + 2.0 * rad * t
            })
            .collect();
        take(&y);
    }
    best
}
