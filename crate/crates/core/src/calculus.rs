//! Nodal fields, the cell-centered gradient and discrete Lp norms.
//!
//! A nodal field is multilinear on every cell. The discrete gradient of a cell
//! averages the forward differences along each axis over the cell edges
//! parallel to that axis. Norms use one-point quadrature at the cell center with
//! the cell average of the corner values.

use thiserror::Error;

use crate::geometry::{corner_offsets, CellMask, Grid};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalculusError {
    #[error("field has {got} values, grid expects {expected}")]
    Length { got: usize, expected: usize },
    #[error("exponent p must be finite and > 1, got {0}")]
    BadExponent(f64),
    #[error("region mask lives on a different grid")]
    GridMismatch,
    #[error("field vanishes identically")]
    Zero,
}

pub fn check_p(p: f64) -> Result<(), CalculusError> {
    if p.is_finite() && p > 1.0 {
        Ok(())
    } else {
        Err(CalculusError::BadExponent(p))
    }
}

/// Per-cell corner layout and gradient weights of a grid.
#[derive(Debug, Clone)]
pub struct Stencil {
    pub dim: usize,
    pub ncorner: usize,
    pub offsets: [usize; 8],
    /// `weights[d][k]` is the coefficient of corner `k` in gradient component `d`.
    pub weights: [[f64; 8]; 3],
}

impl Stencil {
    pub fn new(g: &Grid) -> Stencil {
        let offs = corner_offsets(g);
        let ncorner = offs.len();
        let mut offsets = [0; 8];
        offsets[..ncorner].copy_from_slice(&offs);
        let scale = 1.0 / ((ncorner / 2) as f64 * g.h);
        let mut weights = [[0.0; 8]; 3];
        for (d, w) in weights.iter_mut().enumerate().take(g.dim) {
            for (k, wk) in w.iter_mut().enumerate().take(ncorner) {
                *wk = if k >> d & 1 == 1 { scale } else { -scale };
            }
        }
        Stencil { dim: g.dim, ncorner, offsets, weights }
    }

    /// Cell average and gradient for the cell whose lowest corner is `base`.
    #[inline]
    pub fn eval(&self, u: &[f64], base: usize) -> (f64, [f64; 3]) {
        let mut avg = 0.0;
        let mut g = [0.0; 3];
        for k in 0..self.ncorner {
            let v = u[base + self.offsets[k]];
            avg += v;
            for (d, gd) in g.iter_mut().enumerate().take(self.dim) {
                *gd += self.weights[d][k] * v;
            }
        }
        (avg / self.ncorner as f64, g)
    }
}

/// Visit every cell with its linear index and base node, in index order.
pub fn for_each_cell(g: &Grid, mut f: impl FnMut(usize, usize)) {
    let n = g.node_dims();
    let mut cell = 0;
    for z in 0..g.cells[2] {
        for y in 0..g.cells[1] {
            let row = n[0] * (y + n[1] * z);
            for x in 0..g.cells[0] {
                f(cell, row + x);
                cell += 1;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: Grid,
    pub values: Vec<f64>,
    /// Cells on which the field is meant to live; `None` means the whole grid.
    pub support: Option<CellMask>,
}

impl ScalarField {
    pub fn new(grid: &Grid, values: Vec<f64>) -> Result<ScalarField, CalculusError> {
        if values.len() != grid.n_nodes() {
            return Err(CalculusError::Length { got: values.len(), expected: grid.n_nodes() });
        }
        Ok(ScalarField { grid: grid.clone(), values, support: None })
    }

    pub fn zeros(grid: &Grid) -> ScalarField {
        ScalarField { grid: grid.clone(), values: vec![0.0; grid.n_nodes()], support: None }
    }

    pub fn from_fn(grid: &Grid, f: impl Fn([f64; 3]) -> f64) -> ScalarField {
        let values = (0..grid.n_nodes()).map(|i| f(grid.node_position(i))).collect();
        ScalarField { grid: grid.clone(), values, support: None }
    }

    /// Restricts the field to `mask`: nodes that are not a corner of a true cell are set to 0.
    pub fn with_support(mut self, mask: CellMask) -> ScalarField {
        let offs = corner_offsets(&self.grid);
        let mut keep = vec![false; self.values.len()];
        for_each_cell(&self.grid, |c, b| {
            if mask.bits[c] {
                for &o in &offs {
                    keep[b + o] = true;
                }
            }
        });
        for (v, k) in self.values.iter_mut().zip(keep) {
            if !k {
                *v = 0.0;
            }
        }
        self.support = Some(mask);
        self
    }

    /// Cell averages of the corner values.
    pub fn cell_averages(&self) -> Vec<f64> {
        let st = Stencil::new(&self.grid);
        let mut out = vec![0.0; self.grid.n_cells()];
        for_each_cell(&self.grid, |c, b| out[c] = st.eval(&self.values, b).0);
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Cell-centered vector field.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub grid: Grid,
    pub values: Vec<[f64; 3]>,
}

impl VectorField {
    pub fn magnitudes(&self) -> Vec<f64> {
        self.values
            .iter()
            .map(|v| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt())
            .collect()
    }
}

pub fn gradient(u: &ScalarField) -> VectorField {
    let st = Stencil::new(&u.grid);
    let mut values = vec![[0.0; 3]; u.grid.n_cells()];
    for_each_cell(&u.grid, |c, b| values[c] = st.eval(&u.values, b).1);
    VectorField { grid: u.grid.clone(), values }
}

/// Fields that reduce to one nonnegative magnitude per cell.
pub trait CellMagnitude {
    fn grid(&self) -> &Grid;
    fn cell_magnitudes(&self) -> Vec<f64>;
}

impl CellMagnitude for ScalarField {
    fn grid(&self) -> &Grid {
        &self.grid
    }
    fn cell_magnitudes(&self) -> Vec<f64> {
        self.cell_averages().into_iter().map(f64::abs).collect()
    }
}

impl CellMagnitude for VectorField {
    fn grid(&self) -> &Grid {
        &self.grid
    }
    fn cell_magnitudes(&self) -> Vec<f64> {
        self.magnitudes()
    }
}

/// `sum |f_c|^p h^n` over the cells of `region` (all cells when `None`).
pub fn lp_norm_pow<F: CellMagnitude>(
    f: &F,
    p: f64,
    region: Option<&CellMask>,
) -> Result<f64, CalculusError> {
    check_p(p)?;
    if let Some(r) = region {
        if &r.grid != f.grid() {
            return Err(CalculusError::GridMismatch);
        }
    }
    let m = f.cell_magnitudes();
    let mut s = 0.0;
    for (c, v) in m.iter().enumerate() {
        if region.map_or(true, |r| r.bits[c]) {
            s += v.powf(p);
        }
    }
    Ok(s * f.grid().cell_volume())
}

pub fn lp_norm<F: CellMagnitude>(f: &F, p: f64, region: Option<&CellMask>) -> Result<f64, CalculusError> {
    Ok(lp_norm_pow(f, p, region)?.powf(1.0 / p))
}

/// `||grad u||_p^p / ||u||_p^p`.
pub fn rayleigh_quotient(u: &ScalarField, p: f64) -> Result<f64, CalculusError> {
    let den = lp_norm_pow(u, p, None)?;
    if den == 0.0 || !den.is_finite() {
        return Err(CalculusError::Zero);
    }
    Ok(lp_norm_pow(&gradient(u), p, None)? / den)
}
