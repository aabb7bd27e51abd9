//! Uniform Cartesian grid on a rectangle, with cell-centered scalar fields,
//! MAC-staggered vector fields, midpoint quadrature and the mirrored-ghost
//! finite-difference operators used throughout the crate.
//!
//! Scalars live at cell centers `x_i = (i + 1/2) h_x`, `y_j = (j + 1/2) h_y`.
//! Vector x-components live on vertical faces `x = i h_x` and y-components on
//! horizontal faces `y = j h_y`. Homogeneous Neumann conditions are realized
//! by mirroring the first interior cell into a ghost cell, which makes the
//! discrete divergence theorem and summation by parts hold to round-off.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

/// Uniform rectangular grid. `area` plays the role of the domain measure
/// in every quadrature below.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
}

impl Grid {
    /// Build a grid with `nx * ny` cells on a `lx * ly` rectangle.
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 cells per direction, got {nx} x {ny}"
            )));
        }
        if !(lx > 0.0) || !(ly > 0.0) || !lx.is_finite() || !ly.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "side lengths must be positive and finite, got {lx} x {ly}"
            )));
        }
        Ok(Grid { nx, ny, lx, ly })
    }

    #[inline]
    pub fn hx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    #[inline]
    pub fn hy(&self) -> f64 {
        self.ly / self.ny as f64
    }

    /// Smaller of the two spacings; the relevant length for CFL limits.
    #[inline]
    pub fn h_min(&self) -> f64 {
        self.hx().min(self.hy())
    }

    #[inline]
    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }

    #[inline]
    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    /// Cell measure for midpoint quadrature.
    #[inline]
    pub fn cell_area(&self) -> f64 {
        self.hx() * self.hy()
    }

    /// Flat index of cell (i, j); row-major with x fastest.
    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.nx && j < self.ny);
        j * self.nx + i
    }

    /// Cell-center coordinates of cell (i, j).
    #[inline]
    pub fn center(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.hx(), (j as f64 + 0.5) * self.hy())
    }

    /// Distance from a point to the rectangle boundary.
    #[inline]
    pub fn boundary_distance(&self, x: f64, y: f64) -> f64 {
        x.min(self.lx - x).min(y).min(self.ly - y)
    }

    /// Counts of x-faces and y-faces in the MAC layout.
    #[inline]
    pub fn n_faces(&self) -> (usize, usize) {
        ((self.nx + 1) * self.ny, self.nx * (self.ny + 1))
    }

    /// Flat index of the vertical face at x = i*hx in row j (i in 0..=nx).
    #[inline]
    pub fn fx_idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i <= self.nx && j < self.ny);
        j * (self.nx + 1) + i
    }

    /// Flat index of the horizontal face at y = j*hy in column i (j in 0..=ny).
    #[inline]
    pub fn fy_idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.nx && j <= self.ny);
        j * self.nx + i
    }
}

/// Boundary tag for scalar fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScalarBc {
    /// Homogeneous Neumann via ghost-cell mirroring.
    Neumann,
    /// Raw cell data with no boundary semantics (derived quantities).
    None,
}

/// Boundary tag for staggered vector fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VectorBc {
    /// No-slip velocity: normal boundary faces are exactly zero.
    DirichletZero,
    /// Face gradients of a Neumann scalar: boundary faces are zero by mirroring.
    NeumannDerived,
}

/// Cell-centered scalar field.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub bc: ScalarBc,
}

impl ScalarField {
    pub fn zeros(grid: Grid, bc: ScalarBc) -> Self {
        ScalarField {
            grid,
            values: vec![0.0; grid.n_cells()],
            bc,
        }
    }

    pub fn constant(grid: Grid, value: f64, bc: ScalarBc) -> Self {
        ScalarField {
            grid,
            values: vec![value; grid.n_cells()],
            bc,
        }
    }

    /// Build from a closure of cell-center coordinates.
    pub fn from_fn(grid: Grid, bc: ScalarBc, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.n_cells());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let (x, y) = grid.center(i, j);
                values.push(f(x, y));
            }
        }
        ScalarField { grid, values, bc }
    }

    pub fn from_values(grid: Grid, values: Vec<f64>, bc: ScalarBc) -> Result<Self> {
        if values.len() != grid.n_cells() {
            return Err(Error::InvalidGrid(format!(
                "value count {} does not match grid with {} cells",
                values.len(),
                grid.n_cells()
            )));
        }
        let field = ScalarField { grid, values, bc };
        field.check_finite("scalar")?;
        Ok(field)
    }

    pub fn check_finite(&self, name: &str) -> Result<()> {
        if let Some(index) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                field: name.to_string(),
                index,
            });
        }
        Ok(())
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.idx(i, j)]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Map values elementwise, keeping grid and tag.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
            bc: self.bc,
        }
    }

    /// Serialize as `x,y,value` rows at cell centers.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 24 + 16);
        out.push_str("x,y,value\n");
        for j in 0..self.grid.ny {
            for i in 0..self.grid.nx {
                let (x, y) = self.grid.center(i, j);
                let _ = writeln!(
                    out,
                    "{:e},{:e},{:e}",
                    x,
                    y,
                    self.values[self.grid.idx(i, j)]
                );
            }
        }
        out
    }

    /// Parse the `x,y,value` format. Rows must be in the grid's row-major
    /// cell order; coordinates are checked loosely against the grid.
    pub fn from_csv(grid: Grid, text: &str, bc: ScalarBc) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == "x,y,value" => {}
            _ => {
                return Err(Error::Csv {
                    row: 1,
                    msg: "expected header `x,y,value`".into(),
                })
            }
        }
        let mut values = Vec::with_capacity(grid.n_cells());
        for (lineno, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let parse = |s: Option<&str>, row: usize| -> Result<f64> {
                s.ok_or(Error::Csv {
                    row,
                    msg: "missing column".into(),
                })?
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Csv {
                    row,
                    msg: e.to_string(),
                })
            };
            let row = lineno + 1;
            let _x = parse(parts.next(), row)?;
            let _y = parse(parts.next(), row)?;
            values.push(parse(parts.next(), row)?);
        }
        if values.len() != grid.n_cells() {
            return Err(Error::Csv {
                row: values.len() + 1,
                msg: format!(
                    "expected {} rows for the grid, got {}",
                    grid.n_cells(),
                    values.len()
                ),
            });
        }
        ScalarField::from_values(grid, values, bc)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn read_csv(grid: Grid, path: &Path, bc: ScalarBc) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        ScalarField::from_csv(grid, &text, bc)
    }
}

/// MAC-staggered vector field: `fx` on vertical faces, `fy` on horizontal.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub grid: Grid,
    pub fx: Vec<f64>,
    pub fy: Vec<f64>,
    pub bc: VectorBc,
}

impl VectorField {
    pub fn zeros(grid: Grid, bc: VectorBc) -> Self {
        let (nfx, nfy) = grid.n_faces();
        VectorField {
            grid,
            fx: vec![0.0; nfx],
            fy: vec![0.0; nfy],
            bc,
        }
    }

    /// Build from face component vectors. `DirichletZero` and
    /// `NeumannDerived` fields must carry exactly zero boundary faces;
    /// anything else is rejected as inconsistent with the tag.
    pub fn from_components(grid: Grid, fx: Vec<f64>, fy: Vec<f64>, bc: VectorBc) -> Result<Self> {
        let (nfx, nfy) = grid.n_faces();
        if fx.len() != nfx || fy.len() != nfy {
            return Err(Error::InvalidGrid(format!(
                "face counts ({}, {}) do not match staggering ({}, {})",
                fx.len(),
                fy.len(),
                nfx,
                nfy
            )));
        }
        let field = VectorField { grid, fx, fy, bc };
        field.check_finite("vector")?;
        for j in 0..grid.ny {
            if field.fx[grid.fx_idx(0, j)] != 0.0 || field.fx[grid.fx_idx(grid.nx, j)] != 0.0 {
                return Err(Error::InvalidGrid(
                    "boundary x-faces must be zero for this tag".into(),
                ));
            }
        }
        for i in 0..grid.nx {
            if field.fy[grid.fy_idx(i, 0)] != 0.0 || field.fy[grid.fy_idx(i, grid.ny)] != 0.0 {
                return Err(Error::InvalidGrid(
                    "boundary y-faces must be zero for this tag".into(),
                ));
            }
        }
        Ok(field)
    }

    pub fn check_finite(&self, name: &str) -> Result<()> {
        if let Some(index) = self
            .fx
            .iter()
            .chain(self.fy.iter())
            .position(|v| !v.is_finite())
        {
            return Err(Error::NonFinite {
                field: name.to_string(),
                index,
            });
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.fx
            .iter()
            .chain(self.fy.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// L2 norm sqrt(sum |v|^2 h) over all faces with the cell measure.
    pub fn l2_norm(&self) -> f64 {
        let a = self.grid.cell_area();
        let s: f64 =
            self.fx.iter().map(|v| v * v).sum::<f64>() + self.fy.iter().map(|v| v * v).sum::<f64>();
        (s * a).sqrt()
    }

    /// Serialize as `x,y,vx,vy` rows with both components interpolated to
    /// cell centers. This is an analysis format; it does not round-trip the
    /// staggered data (use the per-component scalar CSVs for that).
    pub fn to_center_csv(&self) -> String {
        let g = self.grid;
        let mut out = String::with_capacity(g.n_cells() * 32 + 16);
        out.push_str("x,y,vx,vy\n");
        for j in 0..g.ny {
            for i in 0..g.nx {
                let (x, y) = g.center(i, j);
                let vx = 0.5 * (self.fx[g.fx_idx(i, j)] + self.fx[g.fx_idx(i + 1, j)]);
                let vy = 0.5 * (self.fy[g.fy_idx(i, j)] + self.fy[g.fy_idx(i, j + 1)]);
                let _ = writeln!(out, "{:e},{:e},{:e},{:e}", x, y, vx, vy);
            }
        }
        out
    }

    /// Exact face-resolved serialization: two `x,y,value` documents, one per
    /// component, with coordinates at face centers.
    pub fn to_face_csvs(&self) -> (String, String) {
        let g = self.grid;
        let mut sx = String::with_capacity(self.fx.len() * 24 + 16);
        sx.push_str("x,y,value\n");
        for j in 0..g.ny {
            for i in 0..=g.nx {
                let x = i as f64 * g.hx();
                let y = (j as f64 + 0.5) * g.hy();
                let _ = writeln!(sx, "{:e},{:e},{:e}", x, y, self.fx[g.fx_idx(i, j)]);
            }
        }
        let mut sy = String::with_capacity(self.fy.len() * 24 + 16);
        sy.push_str("x,y,value\n");
        for j in 0..=g.ny {
            for i in 0..g.nx {
                let x = (i as f64 + 0.5) * g.hx();
                let y = j as f64 * g.hy();
                let _ = writeln!(sy, "{:e},{:e},{:e}", x, y, self.fy[g.fy_idx(i, j)]);
            }
        }
        (sx, sy)
    }

    /// Parse the exact face-resolved pair written by [`to_face_csvs`].
    pub fn from_face_csvs(grid: Grid, text_x: &str, text_y: &str, bc: VectorBc) -> Result<Self> {
        let parse_one = |text: &str, expected: usize| -> Result<Vec<f64>> {
            let mut lines = text.lines().enumerate();
            match lines.next() {
                Some((_, h)) if h.trim() == "x,y,value" => {}
                _ => {
                    return Err(Error::Csv {
                        row: 1,
                        msg: "expected header `x,y,value`".into(),
                    })
                }
            }
            let mut values = Vec::with_capacity(expected);
            for (lineno, line) in lines {
                if line.trim().is_empty() {
                    continue;
                }
                let v = line.rsplit(',').next().ok_or(Error::Csv {
                    row: lineno + 1,
                    msg: "missing column".into(),
                })?;
                values.push(v.trim().parse::<f64>().map_err(|e| Error::Csv {
                    row: lineno + 1,
                    msg: e.to_string(),
                })?);
            }
            if values.len() != expected {
                return Err(Error::Csv {
                    row: values.len() + 1,
                    msg: format!("expected {} face rows, got {}", expected, values.len()),
                });
            }
            Ok(values)
        };
        let (nfx, nfy) = grid.n_faces();
        let fx = parse_one(text_x, nfx)?;
        let fy = parse_one(text_y, nfy)?;
        VectorField::from_components(grid, fx, fy, bc)
    }
}

/// Midpoint-rule integral `sum f h_x h_y`; exact for cellwise-constant data.
pub fn integrate(f: &ScalarField) -> f64 {
    f.values.iter().sum::<f64>() * f.grid.cell_area()
}

/// Domain mean `integrate(f) / area`.
pub fn mean(f: &ScalarField) -> f64 {
    integrate(f) / f.grid.area()
}

/// L1 norm `integral of |f|`.
pub fn l1_norm(f: &ScalarField) -> f64 {
    f.values.iter().map(|v| v.abs()).sum::<f64>() * f.grid.cell_area()
}

/// L2 norm `sqrt(integral of f^2)`.
pub fn l2_norm(f: &ScalarField) -> f64 {
    (f.values.iter().map(|v| v * v).sum::<f64>() * f.grid.cell_area()).sqrt()
}

/// Face-centered gradient of a Neumann scalar. Interior faces carry the
/// two-point difference; boundary faces are zero because the mirrored ghost
/// value equals the first interior value.
pub fn gradient_neumann(f: &ScalarField) -> VectorField {
    assert!(
        f.bc == ScalarBc::Neumann,
        "gradient_neumann requires a neumann-tagged field"
    );
    let g = f.grid;
    let mut out = VectorField::zeros(g, VectorBc::NeumannDerived);
    let ihx = 1.0 / g.hx();
    let ihy = 1.0 / g.hy();
    for j in 0..g.ny {
        for i in 1..g.nx {
            out.fx[g.fx_idx(i, j)] = (f.values[g.idx(i, j)] - f.values[g.idx(i - 1, j)]) * ihx;
        }
    }
    for j in 1..g.ny {
        for i in 0..g.nx {
            out.fy[g.fy_idx(i, j)] = (f.values[g.idx(i, j)] - f.values[g.idx(i, j - 1)]) * ihy;
        }
    }
    out
}

/// Five-point Laplacian with mirrored ghost cells. Its integral vanishes to
/// round-off because all face fluxes telescope and boundary fluxes are zero.
pub fn laplacian_neumann(f: &ScalarField) -> ScalarField {
    assert!(
        f.bc == ScalarBc::Neumann,
        "laplacian_neumann requires a neumann-tagged field"
    );
    let g = f.grid;
    let (nx, ny) = (g.nx, g.ny);
    let ihx2 = 1.0 / (g.hx() * g.hx());
    let ihy2 = 1.0 / (g.hy() * g.hy());
    let v = &f.values;
    let mut out = vec![0.0; g.n_cells()];
    for j in 0..ny {
        for i in 0..nx {
            let c = v[g.idx(i, j)];
            let w = if i > 0 { v[g.idx(i - 1, j)] } else { c };
            let e = if i + 1 < nx { v[g.idx(i + 1, j)] } else { c };
            let s = if j > 0 { v[g.idx(i, j - 1)] } else { c };
            let n = if j + 1 < ny { v[g.idx(i, j + 1)] } else { c };
            out[g.idx(i, j)] = (w - 2.0 * c + e) * ihx2 + (s - 2.0 * c + n) * ihy2;
        }
    }
    ScalarField {
        grid: g,
        values: out,
        bc: ScalarBc::None,
    }
}

/// Cell-centered divergence of a staggered field.
pub fn divergence(v: &VectorField) -> ScalarField {
    let g = v.grid;
    let ihx = 1.0 / g.hx();
    let ihy = 1.0 / g.hy();
    let mut out = vec![0.0; g.n_cells()];
    for j in 0..g.ny {
        for i in 0..g.nx {
            out[g.idx(i, j)] = (v.fx[g.fx_idx(i + 1, j)] - v.fx[g.fx_idx(i, j)]) * ihx
                + (v.fy[g.fy_idx(i, j + 1)] - v.fy[g.fy_idx(i, j)]) * ihy;
        }
    }
    ScalarField {
        grid: g,
        values: out,
        bc: ScalarBc::None,
    }
}

/// Face-weighted inner product `<grad f, grad g>` that pairs exactly with
/// the mirrored-ghost Laplacian: `integrate(f * laplacian(g)) = -<grad f, grad g>`.
pub fn grad_inner(a: &VectorField, b: &VectorField) -> f64 {
    debug_assert_eq!(a.grid, b.grid);
    let w = a.grid.cell_area();
    let mut s = 0.0;
    for (x, y) in a.fx.iter().zip(b.fx.iter()) {
        s += x * y;
    }
    for (x, y) in a.fy.iter().zip(b.fy.iter()) {
        s += x * y;
    }
    s * w
}

/// Dirichlet energy `integral of |grad f|^2` of a Neumann scalar.
pub fn grad_norm_sq(f: &ScalarField) -> f64 {
    let g = gradient_neumann(f);
    grad_inner(&g, &g)
}
