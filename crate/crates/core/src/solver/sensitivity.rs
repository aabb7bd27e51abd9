//! Matrix-valued chemotactic sensitivity with rotational part, its
//! pointwise cap, and the regularizing cutoffs that zero it for large cell
//! density and near the walls. With the near-wall cutoff active, the
//! no-flux condition on the cell density reduces to plain Neumann.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Nondecreasing cap `S0(c)` bounding the Frobenius norm of the matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CapFn {
    Constant(f64),
    /// Piecewise-linear `(c, S0(c))` table; clamped outside its range.
    Table(Vec<(f64, f64)>),
}

impl CapFn {
    pub fn validate(&self) -> Result<()> {
        match self {
            CapFn::Constant(v) => {
                if !(*v >= 0.0) || !v.is_finite() {
                    return Err(Error::Hypothesis {
                        id: "sensitivity-cap-nonnegative",
                        msg: format!("constant cap must be finite and >= 0, got {v}"),
                    });
                }
            }
            CapFn::Table(points) => {
                if points.is_empty() {
                    return Err(Error::Hypothesis {
                        id: "sensitivity-cap-nonnegative",
                        msg: "cap table is empty".into(),
                    });
                }
                for w in points.windows(2) {
                    if !(w[1].0 > w[0].0) {
                        return Err(Error::Hypothesis {
                            id: "sensitivity-cap-monotone",
                            msg: "cap table abscissae must be strictly increasing".into(),
                        });
                    }
                    if w[1].1 < w[0].1 {
                        return Err(Error::Hypothesis {
                            id: "sensitivity-cap-monotone",
                            msg: "cap must be nondecreasing in the attractant level".into(),
                        });
                    }
                }
                if points.iter().any(|p| !(p.1 >= 0.0) || !p.1.is_finite()) {
                    return Err(Error::Hypothesis {
                        id: "sensitivity-cap-nonnegative",
                        msg: "cap values must be finite and >= 0".into(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, c: f64) -> f64 {
        match self {
            CapFn::Constant(v) => *v,
            CapFn::Table(points) => {
                if c <= points[0].0 {
                    return points[0].1;
                }
                if c >= points[points.len() - 1].0 {
                    return points[points.len() - 1].1;
                }
                for w in points.windows(2) {
                    if c <= w[1].0 {
                        let t = (c - w[0].0) / (w[1].0 - w[0].0);
                        return w[0].1 + t * (w[1].1 - w[0].1);
                    }
                }
                points[points.len() - 1].1
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SensitivityParams {
    /// Diagonal (gradient-following) strength; must be positive.
    pub a_diag: f64,
    /// Rotational strength; movement perpendicular to the gradient.
    pub b_rot: f64,
    pub s0_cap: CapFn,
    /// Regularization scale in (0, 1): the matrix vanishes once the cell
    /// density reaches `1/eps`.
    pub eps: f64,
    /// Width of the near-wall band where the matrix is zeroed.
    pub boundary_band: f64,
}

impl SensitivityParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.a_diag > 0.0) || !self.a_diag.is_finite() {
            return Err(Error::Hypothesis {
                id: "sensitivity-diagonal-positive",
                msg: format!("a_diag must be positive, got {}", self.a_diag),
            });
        }
        if !self.b_rot.is_finite() {
            return Err(Error::Hypothesis {
                id: "sensitivity-params",
                msg: "b_rot must be finite".into(),
            });
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::Hypothesis {
                id: "sensitivity-regularization-scale",
                msg: format!("eps must lie in (0, 1), got {}", self.eps),
            });
        }
        if !(self.boundary_band >= 0.0) || !self.boundary_band.is_finite() {
            return Err(Error::Hypothesis {
                id: "sensitivity-params",
                msg: "boundary_band must be finite and >= 0".into(),
            });
        }
        self.s0_cap.validate()
    }
}

/// 2x2 matrix in row-major order.
pub type Mat2 = [[f64; 2]; 2];

pub fn frobenius(m: &Mat2) -> f64 {
    (m[0][0] * m[0][0] + m[0][1] * m[0][1] + m[1][0] * m[1][0] + m[1][1] * m[1][1]).sqrt()
}

/// Raw sensitivity `a*I + b*R` (R the quarter-turn), rescaled onto the cap
/// `S0(c)` whenever its Frobenius norm exceeds it. The position argument is
/// accepted for interface parity with spatially varying models.
pub fn sensitivity(_x: (f64, f64), _n_val: f64, c_val: f64, p: &SensitivityParams) -> Mat2 {
    let mut m = [[p.a_diag, -p.b_rot], [p.b_rot, p.a_diag]];
    let norm = frobenius(&m);
    let cap = p.s0_cap.eval(c_val);
    if norm > cap {
        let s = if norm > 0.0 { cap / norm } else { 0.0 };
        for row in m.iter_mut() {
            for v in row.iter_mut() {
                *v *= s;
            }
        }
    }
    m
}

/// C1 cubic blend: 0 for t <= 0, 1 for t >= 1.
#[inline]
pub fn smooth_blend(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        t * t * (3.0 - 2.0 * t)
    }
}

/// Density cutoff: 1 on [0, 1/(2 eps)], 0 on [1/eps, inf).
#[inline]
pub fn density_cutoff(n_val: f64, eps: f64) -> f64 {
    let hi = 1.0 / eps;
    let lo = 0.5 * hi;
    smooth_blend((hi - n_val) / (hi - lo))
}

/// Wall cutoff: 0 within `band` of the boundary, 1 beyond `2 band`.
#[inline]
pub fn wall_cutoff(dist: f64, band: f64) -> f64 {
    if band <= 0.0 {
        1.0
    } else {
        smooth_blend((dist - band) / band)
    }
}

/// Apply both cutoffs to a sensitivity matrix evaluated at a point with
/// boundary distance `dist`.
pub fn regularize_sensitivity(s: &Mat2, n_val: f64, dist: f64, p: &SensitivityParams) -> Mat2 {
    let chi = density_cutoff(n_val, p.eps) * wall_cutoff(dist, p.boundary_band);
    [
        [s[0][0] * chi, s[0][1] * chi],
        [s[1][0] * chi, s[1][1] * chi],
    ]
}
