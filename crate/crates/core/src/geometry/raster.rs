use serde::Serialize;
use thiserror::Error;

use super::grid::{Aabb, Grid};
use super::spec::{DomainSpec, Shape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskKind {
    /// Cells whose closed box lies inside the closure of the set.
    OpenSet,
    /// Cells whose closed box meets the closure of the set.
    CompactSet,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RasterError {
    #[error("spec dimension {spec} does not match grid dimension {grid}")]
    DimMismatch { spec: usize, grid: usize },
    #[error("open set is unbounded; intersect it with a box")]
    Unbounded,
    #[error("open set extends outside the grid box")]
    OutsideGrid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellMask {
    pub grid: Grid,
    pub bits: Vec<bool>,
    pub kind: MaskKind,
    /// Set when a compact set was cut off at the grid box.
    pub clipped: bool,
}

impl CellMask {
    pub fn empty(grid: &Grid, kind: MaskKind) -> CellMask {
        CellMask { grid: grid.clone(), bits: vec![false; grid.n_cells()], kind, clipped: false }
    }

    pub fn from_fn(grid: &Grid, kind: MaskKind, f: impl Fn([usize; 3]) -> bool) -> CellMask {
        let bits = (0..grid.n_cells()).map(|i| f(grid.cell_coords(i))).collect();
        CellMask { grid: grid.clone(), bits, kind, clipped: false }
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn get(&self, c: [usize; 3]) -> bool {
        self.bits[self.grid.cell_index(c)]
    }

    pub fn measure(&self) -> f64 {
        self.count() as f64 * self.grid.cell_volume()
    }

    pub fn union(&self, o: &CellMask) -> CellMask {
        assert_eq!(self.grid, o.grid, "masks live on different grids");
        let bits = self.bits.iter().zip(&o.bits).map(|(a, b)| *a || *b).collect();
        CellMask { bits, clipped: self.clipped || o.clipped, ..self.clone() }
    }

    pub fn intersection(&self, o: &CellMask) -> CellMask {
        assert_eq!(self.grid, o.grid, "masks live on different grids");
        let bits = self.bits.iter().zip(&o.bits).map(|(a, b)| *a && *b).collect();
        CellMask { bits, ..self.clone() }
    }

    pub fn is_subset_of(&self, o: &CellMask) -> bool {
        self.grid == o.grid && self.bits.iter().zip(&o.bits).all(|(a, b)| !*a || *b)
    }

    /// Shift the pattern by whole cells; cells pushed out of the grid are lost.
    pub fn shifted(&self, by: [isize; 3]) -> CellMask {
        let g = &self.grid;
        let mut out = CellMask::empty(g, self.kind);
        out.clipped = self.clipped;
        for (i, &b) in self.bits.iter().enumerate() {
            if !b {
                continue;
            }
            let c = g.cell_coords(i);
            let mut t = [0usize; 3];
            let mut ok = true;
            for d in 0..3 {
                let v = c[d] as isize + by[d];
                if v < 0 || v >= g.cells[d] as isize {
                    ok = false;
                    break;
                }
                t[d] = v as usize;
            }
            if ok {
                out.bits[g.cell_index(t)] = true;
            } else {
                out.clipped = true;
            }
        }
        out
    }

    /// Index bounding box of the true cells, half open.
    pub fn index_hull(&self) -> Option<([usize; 3], [usize; 3])> {
        let mut lo = [usize::MAX; 3];
        let mut hi = [0usize; 3];
        let mut any = false;
        for (i, &b) in self.bits.iter().enumerate() {
            if b {
                any = true;
                let c = self.grid.cell_coords(i);
                for d in 0..3 {
                    lo[d] = lo[d].min(c[d]);
                    hi[d] = hi[d].max(c[d] + 1);
                }
            }
        }
        any.then_some((lo, hi))
    }

    /// Physical bounding box of the true cells.
    pub fn hull(&self) -> Option<Aabb> {
        let (lo, hi) = self.index_hull()?;
        let g = &self.grid;
        let mut b = Aabb { dim: g.dim, lo: [0.0; 3], hi: [0.0; 3] };
        for d in 0..g.dim {
            b.lo[d] = g.lo[d] + g.h * lo[d] as f64;
            b.hi[d] = g.lo[d] + g.h * hi[d] as f64;
        }
        Some(b)
    }

    /// Bits packed into bytes, for hashing.
    pub fn packed(&self) -> Vec<u8> {
        let mut out = vec![0u8; self.bits.len().div_ceil(8)];
        for (i, &b) in self.bits.iter().enumerate() {
            if b {
                out[i / 8] |= 1 << (i % 8);
            }
        }
        out
    }
}

/// Rasterize a spec on `grid`.
pub fn rasterize(spec: &DomainSpec, grid: &Grid, kind: MaskKind) -> Result<CellMask, RasterError> {
    if spec.dim != grid.dim {
        return Err(RasterError::DimMismatch { spec: spec.dim, grid: grid.dim });
    }
    let xf = Xf::identity();
    let support = bounds(&spec.shape, &xf, grid.dim);
    let gb = grid.bounds();
    let slack = 1e-12 * gb.extent().max(1.0);
    let mut clipped = false;
    match (kind, support) {
        (MaskKind::OpenSet, None) => return Err(RasterError::Unbounded),
        (MaskKind::OpenSet, Some(b)) if !gb.contains(&b, slack) => return Err(RasterError::OutsideGrid),
        (MaskKind::CompactSet, None) => clipped = true,
        (MaskKind::CompactSet, Some(b)) => clipped = !gb.contains(&b, slack),
        _ => {}
    }
    let full = Range { lo: [0; 3], hi: grid.cells };
    let (inside, touches) = eval(&spec.shape, &xf, grid, &full);
    let bits = match kind {
        MaskKind::OpenSet => inside,
        MaskKind::CompactSet => touches,
    };
    Ok(CellMask { grid: grid.clone(), bits, kind, clipped })
}

/// Cells of `omega`'s grid meeting the closed ball `B(center, r)` but not in `omega`.
pub fn ball_complement_region(omega: &CellMask, center: &[f64], r: f64) -> CellMask {
    let g = &omega.grid;
    let mut out = CellMask::empty(g, MaskKind::CompactSet);
    let mut ball = Aabb { dim: g.dim, lo: [0.0; 3], hi: [0.0; 3] };
    for d in 0..g.dim {
        ball.lo[d] = center[d] - r;
        ball.hi[d] = center[d] + r;
    }
    out.clipped = !g.bounds().contains(&ball, 0.0);
    let (lo, hi) = g.cell_range(&ball);
    let r2 = r * r;
    for_range(&Range { lo, hi }, |c| {
        let i = g.cell_index(c);
        if !omega.bits[i] && near_dist2(&g.cell_box(i), center) <= r2 {
            out.bits[i] = true;
        }
    });
    out
}

/// Squared distance from a point to a closed box.
pub fn near_dist2(b: &Aabb, x: &[f64]) -> f64 {
    (0..b.dim)
        .map(|d| {
            let t = (b.lo[d] - x[d]).max(x[d] - b.hi[d]).max(0.0);
            t * t
        })
        .sum()
}

/// Squared distance from a point to the farthest corner of a closed box.
pub fn far_dist2(b: &Aabb, x: &[f64]) -> f64 {
    (0..b.dim)
        .map(|d| {
            let t = (x[d] - b.lo[d]).abs().max((b.hi[d] - x[d]).abs());
            t * t
        })
        .sum()
}

// Physical x maps to shape coordinates a*x + b.
#[derive(Clone, Copy)]
struct Xf {
    a: f64,
    b: [f64; 3],
}

impl Xf {
    fn identity() -> Xf {
        Xf { a: 1.0, b: [0.0; 3] }
    }

    // Child coordinates y' = (y - t) for a translate by t.
    fn translate(&self, t: &[f64]) -> Xf {
        let mut x = *self;
        for (d, td) in t.iter().enumerate() {
            x.b[d] -= td;
        }
        x
    }

    fn scale(&self, s: f64) -> Xf {
        let mut x = *self;
        x.a /= s;
        for d in 0..3 {
            x.b[d] /= s;
        }
        x
    }

    fn apply_box(&self, c: &Aabb) -> Aabb {
        let mut o = *c;
        for d in 0..c.dim {
            o.lo[d] = self.a * c.lo[d] + self.b[d];
            o.hi[d] = self.a * c.hi[d] + self.b[d];
        }
        o
    }

    // Shape-space box back to physical space.
    fn invert_box(&self, c: &Aabb) -> Aabb {
        let mut o = *c;
        for d in 0..c.dim {
            o.lo[d] = (c.lo[d] - self.b[d]) / self.a;
            o.hi[d] = (c.hi[d] - self.b[d]) / self.a;
        }
        o
    }
}

// Physical bounding box of the closure of a shape; None if unbounded.
fn bounds(s: &Shape, xf: &Xf, dim: usize) -> Option<Aabb> {
    match s {
        Shape::Ball { center, radius } => {
            let lo: Vec<f64> = center.iter().map(|c| c - radius).collect();
            let hi: Vec<f64> = center.iter().map(|c| c + radius).collect();
            Some(xf.invert_box(&Aabb::new(&lo, &hi)))
        }
        Shape::Box { lo, hi } => Some(xf.invert_box(&Aabb::new(lo, hi))),
        Shape::Point { at } => Some(xf.invert_box(&Aabb::new(at, at))),
        Shape::Union(v) => {
            let mut acc: Option<Aabb> = None;
            for c in v {
                let b = bounds(c, xf, dim)?;
                acc = Some(match acc {
                    None => b,
                    Some(a) => a.hull(&b),
                });
            }
            acc
        }
        Shape::Intersect(v) => {
            let mut acc: Option<Aabb> = None;
            for c in v {
                if let Some(b) = bounds(c, xf, dim) {
                    acc = Some(match acc {
                        None => b,
                        Some(a) => a.meet(&b),
                    });
                }
            }
            acc
        }
        Shape::Complement(_) => None,
        Shape::Translate { by, shape } => bounds(shape, &xf.translate(by), dim),
        Shape::Scale { by, shape } => bounds(shape, &xf.scale(*by), dim),
    }
}

#[derive(Clone, Copy, Debug)]
struct Range {
    lo: [usize; 3],
    hi: [usize; 3],
}

impl Range {
    fn len(&self) -> usize {
        (0..3).map(|d| self.hi[d].saturating_sub(self.lo[d])).product()
    }

    fn meet(&self, o: &Range) -> Range {
        let mut r = *self;
        for d in 0..3 {
            r.lo[d] = r.lo[d].max(o.lo[d]);
            r.hi[d] = r.hi[d].min(o.hi[d]).max(r.lo[d]);
        }
        r
    }

    // Position of a grid cell within this range.
    fn local(&self, c: [usize; 3]) -> usize {
        let w0 = self.hi[0] - self.lo[0];
        let w1 = self.hi[1] - self.lo[1];
        (c[0] - self.lo[0]) + w0 * ((c[1] - self.lo[1]) + w1 * (c[2] - self.lo[2]))
    }
}

fn for_range(r: &Range, mut f: impl FnMut([usize; 3])) {
    for z in r.lo[2]..r.hi[2] {
        for y in r.lo[1]..r.hi[1] {
            for x in r.lo[0]..r.hi[0] {
                f([x, y, z]);
            }
        }
    }
}

fn child_range(s: &Shape, xf: &Xf, grid: &Grid, r: &Range) -> Range {
    match bounds(s, xf, grid.dim) {
        Some(b) => {
            let (lo, hi) = grid.cell_range(&b);
            r.meet(&Range { lo, hi })
        }
        None => *r,
    }
}

// Copy a sub-range result into the parent range with `op`.
fn merge(dst: &mut [bool], outer: &Range, src: &[bool], inner: &Range, op: fn(bool, bool) -> bool) {
    let mut k = 0;
    for_range(inner, |c| {
        let j = outer.local(c);
        dst[j] = op(dst[j], src[k]);
        k += 1;
    });
}

// (inside, touches) over the cells of `r`.
fn eval(s: &Shape, xf: &Xf, grid: &Grid, r: &Range) -> (Vec<bool>, Vec<bool>) {
    let n = r.len();
    match s {
        Shape::Ball { .. } | Shape::Box { .. } | Shape::Point { .. } => {
            let mut ins = Vec::with_capacity(n);
            let mut tou = Vec::with_capacity(n);
            for_range(r, |c| {
                let cb = xf.apply_box(&grid.cell_box(grid.cell_index(c)));
                let (i, t) = leaf(s, &cb);
                ins.push(i);
                tou.push(t);
            });
            (ins, tou)
        }
        Shape::Union(kids) => {
            let mut ins = vec![false; n];
            let mut tou = vec![false; n];
            for k in kids {
                let kr = child_range(k, xf, grid, r);
                if kr.len() == 0 {
                    continue;
                }
                let (ki, kt) = eval(k, xf, grid, &kr);
                merge(&mut ins, r, &ki, &kr, |a, b| a || b);
                merge(&mut tou, r, &kt, &kr, |a, b| a || b);
            }
            (ins, tou)
        }
        Shape::Intersect(kids) => {
            let mut kr = *r;
            for k in kids {
                kr = child_range(k, xf, grid, &kr);
            }
            let mut ins = vec![true; kr.len()];
            let mut tou = vec![true; kr.len()];
            if kr.len() > 0 {
                for k in kids {
                    let (ki, kt) = eval(k, xf, grid, &kr);
                    for j in 0..ins.len() {
                        ins[j] &= ki[j];
                        tou[j] &= kt[j];
                    }
                }
            }
            let mut oi = vec![false; n];
            let mut ot = vec![false; n];
            merge(&mut oi, r, &ins, &kr, |_, b| b);
            merge(&mut ot, r, &tou, &kr, |_, b| b);
            (oi, ot)
        }
        Shape::Complement(k) => {
            let (ki, kt) = eval(k, xf, grid, r);
            (kt.iter().map(|t| !t).collect(), ki.iter().map(|i| !i).collect())
        }
        Shape::Translate { by, shape } => eval(shape, &xf.translate(by), grid, r),
        Shape::Scale { by, shape } => eval(shape, &xf.scale(*by), grid, r),
    }
}

fn leaf(s: &Shape, c: &Aabb) -> (bool, bool) {
    match s {
        Shape::Ball { center, radius } => {
            let r2 = radius * radius;
            (far_dist2(c, center) <= r2, near_dist2(c, center) <= r2)
        }
        Shape::Box { lo, hi } => {
            let d = c.dim;
            let inside = (0..d).all(|k| lo[k] <= c.lo[k] && c.hi[k] <= hi[k]);
            let touches = (0..d).all(|k| c.lo[k] <= hi[k] && c.hi[k] >= lo[k]);
            (inside, touches)
        }
        Shape::Point { at } => {
            let d = c.dim;
            (false, (0..d).all(|k| c.lo[k] <= at[k] && at[k] <= c.hi[k]))
        }
        _ => unreachable!("leaf called on an operator"),
    }
}

pub(crate) fn support_bounds(spec: &DomainSpec) -> Option<Aabb> {
    bounds(&spec.shape, &Xf::identity(), spec.dim)
}
