//! Pointwise upper bounds on `max_y ‖y − G(u)‖` over a two-sample envelope slice.
//!
//! For a fixed input `u` the outputs compatible with two samples form the
//! intersection of the balls `B(y1, r1)` and `B(y2, r2)`. When neither ball
//! centre lies inside the other ball the intersection is a lens contained in the
//! ball of radius `d` around the chord centre `M`; otherwise it is contained in
//! the ball around the sample that lies inside.

use serde::{Deserialize, Serialize};

use crate::linalg;
use crate::{Error, Result};

/// Below this sample separation the two balls are treated as concentric.
pub const R_TOL: f64 = 1e-10;
/// Slack on `r1 + r2 ≥ r` before the slice is declared empty.
const EMPTY_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GeomCase {
    Lens,
    Sample1Inside,
    Sample2Inside,
    Degenerate,
}

/// Geometry of the two-ball intersection at one input.
#[derive(Clone, Debug, PartialEq)]
pub struct GeomQuantities {
    /// `‖y1 − y2‖`.
    pub r: f64,
    pub r1: f64,
    pub r2: f64,
    /// Half-chord, lens case only.
    pub d: Option<f64>,
    /// Chord centre, lens case only.
    pub center: Option<Vec<f64>>,
    pub case: GeomCase,
}

fn classify(r: f64, r1: f64, r2: f64) -> GeomCase {
    if r < R_TOL {
        GeomCase::Degenerate
    } else if r2 * r2 > r1 * r1 + r * r {
        GeomCase::Sample1Inside
    } else if r1 * r1 > r2 * r2 + r * r {
        GeomCase::Sample2Inside
    } else {
        GeomCase::Lens
    }
}

/// Half-chord and distance of the chord centre from `y2` along `y1 − y2`.
fn lens_shape(r: f64, r1: f64, r2: f64) -> (f64, f64) {
    let prod = (r * r - (r2 - r1) * (r2 - r1)) * ((r1 + r2) * (r1 + r2) - r * r);
    let d = prod.max(0.0).sqrt() / (2.0 * r);
    // Equals sqrt(r2² − d²) in the lens case, without the cancellation.
    let s = ((r * r + r2 * r2 - r1 * r1) / (2.0 * r)).clamp(0.0, r2.min(r));
    (d, s)
}

fn check_nonempty(r: f64, r1: f64, r2: f64) -> Result<()> {
    if r1 + r2 < r - EMPTY_TOL {
        return Err(Error::EmptyOutputSet {
            radii_sum: r1 + r2,
            r,
        });
    }
    Ok(())
}

/// Geometry for input distances `dist1`, `dist2` to the two samples, with
/// radii `r_i = L·dist_i + inflation_i`.
pub fn geometry(
    y1: &[f64],
    y2: &[f64],
    dist1: f64,
    dist2: f64,
    lipschitz: f64,
    inflation: [f64; 2],
) -> Result<GeomQuantities> {
    geometry_from_radii(
        y1,
        y2,
        lipschitz * dist1 + inflation[0],
        lipschitz * dist2 + inflation[1],
    )
}

/// Geometry for explicit ball radii.
pub fn geometry_from_radii(y1: &[f64], y2: &[f64], r1: f64, r2: f64) -> Result<GeomQuantities> {
    if y1.len() != y2.len() {
        return Err(Error::DimensionMismatch {
            expected: y1.len(),
            got: y2.len(),
        });
    }
    let r = linalg::dist(y1, y2);
    check_nonempty(r, r1, r2)?;
    let case = classify(r, r1, r2);
    let (d, center) = if case == GeomCase::Lens {
        let (d, s) = lens_shape(r, r1, r2);
        let mut m = y2.to_vec();
        for ((mi, a), b) in m.iter_mut().zip(y1).zip(y2) {
            *mi += s * (a - b) / r;
        }
        (Some(d), Some(m))
    } else {
        (None, None)
    };
    Ok(GeomQuantities {
        r,
        r1,
        r2,
        d,
        center,
        case,
    })
}

/// Three-case bound: `‖M − G(u)‖ + d` for a lens, `‖y_i − G(u)‖ + r_i` when
/// sample `i` lies inside the other ball, and the triangle bound for concentric balls.
pub fn lens_value(g_at_u: &[f64], geom: &GeomQuantities, y1: &[f64], y2: &[f64]) -> f64 {
    match geom.case {
        GeomCase::Lens => {
            let m = geom.center.as_deref().expect("lens case carries a centre");
            linalg::dist(m, g_at_u) + geom.d.unwrap_or(0.0)
        }
        GeomCase::Sample1Inside => linalg::dist(y1, g_at_u) + geom.r1,
        GeomCase::Sample2Inside => linalg::dist(y2, g_at_u) + geom.r2,
        GeomCase::Degenerate => triangle_value(g_at_u, geom, y1, y2),
    }
}

/// `min_i (‖y_i − G(u)‖ + r_i)`, which dominates every convex weighting of the two terms.
pub fn triangle_value(g_at_u: &[f64], geom: &GeomQuantities, y1: &[f64], y2: &[f64]) -> f64 {
    (linalg::dist(y1, g_at_u) + geom.r1).min(linalg::dist(y2, g_at_u) + geom.r2)
}

/// Exact maximum for scalar outputs: the slice is an interval.
pub fn interval_value(g_at_u: &[f64], geom: &GeomQuantities, y1: &[f64], y2: &[f64]) -> Option<f64> {
    (y1.len() == 1).then(|| interval_max(y1[0], y2[0], geom.r1, geom.r2, g_at_u[0]))
}

fn interval_max(y1: f64, y2: f64, r1: f64, r2: f64, p: f64) -> f64 {
    let lo = (y1 - r1).max(y2 - r2);
    let hi = (y1 + r1).min(y2 + r2).max(lo);
    (lo - p).abs().max((hi - p).abs())
}

/// Refined numerator: the smallest of the valid bounds above.
pub fn refined_numerator(g_at_u: &[f64], geom: &GeomQuantities, y1: &[f64], y2: &[f64]) -> f64 {
    let v = lens_value(g_at_u, geom, y1, y2).min(triangle_value(g_at_u, geom, y1, y2));
    match interval_value(g_at_u, geom, y1, y2) {
        Some(exact) => v.min(exact),
        None => v,
    }
}

/// Refined numerator divided by `‖u‖`; inputs with `‖u‖ < ε` are rejected.
pub fn pointwise_objective(
    g_at_u: &[f64],
    geom: &GeomQuantities,
    y1: &[f64],
    y2: &[f64],
    u_norm: f64,
    epsilon: f64,
) -> Result<f64> {
    if u_norm < epsilon {
        return Err(Error::BelowEpsilon {
            norm: u_norm,
            epsilon,
        });
    }
    Ok(refined_numerator(g_at_u, geom, y1, y2) / u_norm)
}

/// Allocation-free evaluation of [`refined_numerator`] for a fixed sample pair.
#[derive(Clone, Debug)]
pub(crate) struct PairKernel {
    y1: Vec<f64>,
    y2: Vec<f64>,
    r: f64,
}

impl PairKernel {
    pub fn new(y1: &[f64], y2: &[f64]) -> Self {
        Self {
            y1: y1.to_vec(),
            y2: y2.to_vec(),
            r: linalg::dist(y1, y2),
        }
    }

    pub fn numerator(&self, p: &[f64], r1: f64, r2: f64) -> Result<f64> {
        let r = self.r;
        check_nonempty(r, r1, r2)?;
        if self.y1.len() == 1 {
            return Ok(interval_max(self.y1[0], self.y2[0], r1, r2, p[0]));
        }
        let (mut a1, mut a2, mut q) = (0.0, 0.0, 0.0);
        for ((y1, y2), p) in self.y1.iter().zip(&self.y2).zip(p) {
            let b1 = y1 - p;
            let b2 = y2 - p;
            a1 += b1 * b1;
            a2 += b2 * b2;
            q += (y1 - y2) * b2;
        }
        let (a1, a2) = (a1.sqrt(), a2.sqrt());
        let tri = (a1 + r1).min(a2 + r2);
        let lens = match classify(r, r1, r2) {
            GeomCase::Lens => {
                let (d, s) = lens_shape(r, r1, r2);
                // ‖M − p‖² = ‖y2 − p‖² + 2 s ⟨e, y2 − p⟩ + s²
                (a2 * a2 + 2.0 * s * q / r + s * s).max(0.0).sqrt() + d
            }
            GeomCase::Sample1Inside => a1 + r1,
            GeomCase::Sample2Inside => a2 + r2,
            GeomCase::Degenerate => tri,
        };
        Ok(lens.min(tri))
    }
}
