use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("dimension must be 1, 2 or 3")]
    BadDim,
    #[error("grid spacing must be positive and finite")]
    BadSpacing,
    #[error("grid needs at least one cell per axis")]
    Empty,
    #[error("grid has {0} cells, above the supported limit")]
    TooLarge(usize),
}

/// Upper bound on the number of cells of a single grid.
pub const MAX_CELLS: usize = 1 << 26;

/// Axis aligned box in physical coordinates. Axes at or above `dim` are ignored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Aabb {
    pub dim: usize,
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl Aabb {
    pub fn new(lo: &[f64], hi: &[f64]) -> Aabb {
        let mut b = Aabb { dim: lo.len(), lo: [0.0; 3], hi: [0.0; 3] };
        b.lo[..lo.len()].copy_from_slice(lo);
        b.hi[..hi.len()].copy_from_slice(hi);
        b
    }

    pub fn hull(&self, o: &Aabb) -> Aabb {
        let mut b = *self;
        for d in 0..self.dim {
            b.lo[d] = b.lo[d].min(o.lo[d]);
            b.hi[d] = b.hi[d].max(o.hi[d]);
        }
        b
    }

    pub fn meet(&self, o: &Aabb) -> Aabb {
        let mut b = *self;
        for d in 0..self.dim {
            b.lo[d] = b.lo[d].max(o.lo[d]);
            b.hi[d] = b.hi[d].min(o.hi[d]);
        }
        b
    }

    pub fn is_empty(&self) -> bool {
        (0..self.dim).any(|d| self.lo[d] > self.hi[d])
    }

    pub fn contains(&self, o: &Aabb, slack: f64) -> bool {
        (0..self.dim).all(|d| o.lo[d] >= self.lo[d] - slack && o.hi[d] <= self.hi[d] + slack)
    }

    pub fn dilate(&self, r: f64) -> Aabb {
        let mut b = *self;
        for d in 0..self.dim {
            b.lo[d] -= r;
            b.hi[d] += r;
        }
        b
    }

    pub fn extent(&self) -> f64 {
        (0..self.dim).map(|d| self.hi[d] - self.lo[d]).fold(0.0, f64::max)
    }
}

/// Uniform grid of closed cells `lo + h*[i, i+1]` with nodes at the cell corners.
///
/// Linear indices run with axis 0 fastest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid {
    pub dim: usize,
    pub lo: [f64; 3],
    pub h: f64,
    /// Cells per axis; unused axes hold 1.
    pub cells: [usize; 3],
}

impl Grid {
    pub fn new(dim: usize, lo: &[f64], h: f64, cells: &[usize]) -> Result<Grid, GridError> {
        if !(1..=3).contains(&dim) || lo.len() != dim || cells.len() != dim {
            return Err(GridError::BadDim);
        }
        if !(h.is_finite() && h > 0.0) {
            return Err(GridError::BadSpacing);
        }
        if cells.iter().any(|&c| c == 0) {
            return Err(GridError::Empty);
        }
        let mut g = Grid { dim, lo: [0.0; 3], h, cells: [1; 3] };
        g.lo[..dim].copy_from_slice(lo);
        g.cells[..dim].copy_from_slice(cells);
        let total = g.cells.iter().try_fold(1usize, |a, &c| a.checked_mul(c)).unwrap_or(usize::MAX);
        if total > MAX_CELLS {
            return Err(GridError::TooLarge(total));
        }
        Ok(g)
    }

    /// Smallest grid whose lattice is aligned to integer multiples of `h` and
    /// which contains `bounds` dilated by `margin`.
    pub fn covering(bounds: &Aabb, h: f64, margin: f64) -> Result<Grid, GridError> {
        if !(h.is_finite() && h > 0.0) {
            return Err(GridError::BadSpacing);
        }
        let dim = bounds.dim;
        let mut lo = vec![0.0; dim];
        let mut cells = vec![0usize; dim];
        for d in 0..dim {
            // Snap with a relative slack so that exact multiples do not pick up a spare cell.
            let a = ((bounds.lo[d] - margin) / h + 1e-9).floor();
            let b = ((bounds.hi[d] + margin) / h - 1e-9).ceil();
            lo[d] = a * h;
            cells[d] = ((b - a) as usize).max(1);
        }
        Grid::new(dim, &lo, h, &cells)
    }

    pub fn n_cells(&self) -> usize {
        self.cells[0] * self.cells[1] * self.cells[2]
    }

    pub fn node_dims(&self) -> [usize; 3] {
        let mut n = [1; 3];
        for d in 0..self.dim {
            n[d] = self.cells[d] + 1;
        }
        n
    }

    pub fn n_nodes(&self) -> usize {
        let n = self.node_dims();
        n[0] * n[1] * n[2]
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    pub fn hi(&self) -> [f64; 3] {
        let mut hi = self.lo;
        for d in 0..self.dim {
            hi[d] = self.lo[d] + self.h * self.cells[d] as f64;
        }
        hi
    }

    pub fn bounds(&self) -> Aabb {
        Aabb { dim: self.dim, lo: self.lo, hi: self.hi() }
    }

    pub fn cell_index(&self, c: [usize; 3]) -> usize {
        c[0] + self.cells[0] * (c[1] + self.cells[1] * c[2])
    }

    pub fn cell_coords(&self, idx: usize) -> [usize; 3] {
        let x = idx % self.cells[0];
        let r = idx / self.cells[0];
        [x, r % self.cells[1], r / self.cells[1]]
    }

    pub fn node_index(&self, c: [usize; 3]) -> usize {
        let n = self.node_dims();
        c[0] + n[0] * (c[1] + n[1] * c[2])
    }

    pub fn node_coords(&self, idx: usize) -> [usize; 3] {
        let n = self.node_dims();
        let x = idx % n[0];
        let r = idx / n[0];
        [x, r % n[1], r / n[1]]
    }

    /// Node index of the lowest corner of a cell.
    pub fn cell_base_node(&self, cell: usize) -> usize {
        self.node_index(self.cell_coords(cell))
    }

    pub fn node_position(&self, idx: usize) -> [f64; 3] {
        let c = self.node_coords(idx);
        let mut x = [0.0; 3];
        for d in 0..self.dim {
            x[d] = self.lo[d] + self.h * c[d] as f64;
        }
        x
    }

    pub fn cell_box(&self, idx: usize) -> Aabb {
        let c = self.cell_coords(idx);
        let mut b = Aabb { dim: self.dim, lo: [0.0; 3], hi: [0.0; 3] };
        for d in 0..self.dim {
            b.lo[d] = self.lo[d] + self.h * c[d] as f64;
            b.hi[d] = self.lo[d] + self.h * (c[d] + 1) as f64;
        }
        b
    }

    pub fn cell_center(&self, idx: usize) -> [f64; 3] {
        let b = self.cell_box(idx);
        let mut x = [0.0; 3];
        for d in 0..self.dim {
            x[d] = 0.5 * (b.lo[d] + b.hi[d]);
        }
        x
    }

    /// Whether a node lies on the outer boundary of the grid box.
    pub fn is_boundary_node(&self, idx: usize) -> bool {
        let c = self.node_coords(idx);
        (0..self.dim).any(|d| c[d] == 0 || c[d] == self.cells[d])
    }

    /// Nearest node to a physical point, if it falls inside the grid box.
    pub fn nearest_node(&self, x: &[f64]) -> Option<usize> {
        let mut c = [0usize; 3];
        for d in 0..self.dim {
            let t = ((x[d] - self.lo[d]) / self.h).round();
            if t < 0.0 || t > self.cells[d] as f64 {
                return None;
            }
            c[d] = t as usize;
        }
        Some(self.node_index(c))
    }

    /// Same index layout with every coordinate multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Grid {
        let mut g = self.clone();
        for d in 0..self.dim {
            g.lo[d] *= s;
        }
        g.h *= s;
        g
    }

    pub fn translated(&self, by: &[f64]) -> Grid {
        let mut g = self.clone();
        for d in 0..self.dim {
            g.lo[d] += by[d];
        }
        g
    }

    /// Cells whose closed box may meet `b`, as a half-open index range per axis.
    pub fn cell_range(&self, b: &Aabb) -> ([usize; 3], [usize; 3]) {
        let mut lo = [0usize; 3];
        let mut hi = [1usize; 3];
        for d in 0..self.dim {
            let a = ((b.lo[d] - self.lo[d]) / self.h).floor() - 1.0;
            let z = ((b.hi[d] - self.lo[d]) / self.h).ceil() + 1.0;
            let n = self.cells[d] as f64;
            lo[d] = a.clamp(0.0, n) as usize;
            hi[d] = z.clamp(0.0, n) as usize;
            if hi[d] < lo[d] {
                hi[d] = lo[d];
            }
        }
        (lo, hi)
    }
}
