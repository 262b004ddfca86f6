//! Ball placements that meet the complement of a domain in small capacity.
//!
//! Every query `(center node, r)` is solved on a local window: the cells of the
//! closed ball's bounding box plus a margin frame, with cells outside the
//! ambient grid counted as complement. The window only depends on the region
//! relative to its center, so queries are cached by region bits.

use std::cell::RefCell;
use std::collections::HashMap;

use serde::Serialize;
use thiserror::Error;

use crate::capacity::{capacity, CapacityError, CapacityEstimate, CapacityKind};
use crate::geometry::{
    corner_offsets, edt_squared, geometric_inradius, node_distance_to_complement, CellMask, Grid,
    MaskKind,
};
use crate::solver::SolverOptions;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InradiusError {
    #[error("no candidate centers")]
    EmptySearch,
    #[error("radius must be positive")]
    BadRadius,
    #[error("gamma must lie in (0, 1)")]
    BadGamma,
    #[error("epsilons must be positive and decreasing")]
    BadEpsilons,
    #[error(transparent)]
    Capacity(#[from] CapacityError),
}

#[derive(Debug, Clone, Serialize)]
pub struct SearchOptions {
    pub kind: CapacityKind,
    /// Spacing of candidate centers, in nodes.
    pub center_pitch: usize,
    /// Re-search at pitch 1 around the best coarse centers.
    pub refine: bool,
    /// Frame around each ball window, in length units.
    pub window_margin: f64,
    /// Defaults to `h / 2`.
    pub bisection_tol: Option<f64>,
    pub solver: SolverOptions,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            kind: CapacityKind::Sobolev,
            center_pitch: 1,
            refine: true,
            window_margin: 1.0,
            bisection_tol: None,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct QueryStats {
    pub queries: usize,
    pub empty: usize,
    pub solves: usize,
    pub cache_hits: usize,
    pub pruned: usize,
}

#[derive(Hash, PartialEq, Eq)]
struct Key {
    bits: Vec<u8>,
    dims: [usize; 3],
    p: u64,
    kind: CapacityKind,
    h: u64,
}

/// Capacity queries for balls against one domain.
pub struct BallSearch<'a> {
    pub omega: &'a CellMask,
    pub p: f64,
    pub opts: SearchOptions,
    node_d2: Vec<f64>,
    // Per row of cells along axis 0, prefix counts of complement cells.
    row_prefix: Vec<u32>,
    margin_cells: usize,
    cache: RefCell<HashMap<Key, f64>>,
    floors: RefCell<HashMap<usize, f64>>,
    // Capacity of a discrete ball of radius `rung(k)` cells, keyed by (half width, k).
    balls: RefCell<HashMap<(usize, usize), f64>>,
    stats: RefCell<QueryStats>,
}

struct Region {
    grid: Grid,
    bits: Vec<bool>,
    #[cfg_attr(not(test), allow(dead_code))]
    count: usize,
    half: usize,
}

impl<'a> BallSearch<'a> {
    pub fn new(omega: &'a CellMask, p: f64, opts: SearchOptions) -> BallSearch<'a> {
        let g = &omega.grid;
        let margin_cells = ((opts.window_margin / g.h) - 1e-9).ceil().max(1.0) as usize;
        BallSearch {
            omega,
            p,
            opts,
            node_d2: node_distance_to_complement(omega),
            row_prefix: row_prefix(omega),
            margin_cells,
            cache: RefCell::new(HashMap::new()),
            floors: RefCell::new(HashMap::new()),
            balls: RefCell::new(HashMap::new()),
            stats: RefCell::new(QueryStats::default()),
        }
    }

    pub fn h(&self) -> f64 {
        self.omega.grid.h
    }

    pub fn stats(&self) -> QueryStats {
        self.stats.borrow().clone()
    }

    pub fn tol(&self) -> f64 {
        self.opts.bisection_tol.unwrap_or(0.5 * self.h())
    }

    // Squared radius in index units, padded against rounding at exact hits.
    fn rc2(&self, r: f64) -> f64 {
        let rc = r / self.h();
        rc * rc * (1.0 + 1e-12)
    }

    /// Whether the closed ball around node `c` misses every complement cell.
    pub fn is_empty(&self, c: usize, r: f64) -> bool {
        self.node_d2[c] > self.rc2(r)
    }

    /// Largest radius at which some node still has an empty ball, and that node.
    pub fn empty_radius(&self, centers: &[usize]) -> (f64, usize) {
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        for &c in centers {
            let d = self.node_d2[c];
            if d > best.0 {
                best = (d, c);
            }
        }
        (best.0.max(0.0).sqrt() * self.h(), best.1)
    }

    fn half_width(&self, r: f64) -> usize {
        (r / self.h() + 1e-12).floor() as usize + 1
    }

    fn region(&self, c: usize, r: f64, all_complement: bool) -> Region {
        let g = &self.omega.grid;
        let rh = self.half_width(r);
        let half = rh + self.margin_cells;
        let dim = g.dim;
        let w = 2 * half;
        let lo = vec![-(half as f64) * g.h; dim];
        let grid = Grid::new(dim, &lo, g.h, &vec![w; dim]).expect("window grid");
        let cc = g.node_coords(c);
        let rc2 = self.rc2(r);
        let mut bits = vec![false; grid.n_cells()];
        let mut count = 0;
        for (j, b) in bits.iter_mut().enumerate() {
            let lc = grid.cell_coords(j);
            let mut d2 = 0i64;
            let mut amb = [0usize; 3];
            let mut outside = false;
            for d in 0..dim {
                let l = lc[d] as i64;
                let t = (l - half as i64).max(half as i64 - (l + 1)).max(0);
                d2 += t * t;
                let a = cc[d] as i64 - half as i64 + l;
                if a < 0 || a >= g.cells[d] as i64 {
                    outside = true;
                } else {
                    amb[d] = a as usize;
                }
            }
            if d2 as f64 > rc2 {
                continue;
            }
            if all_complement || outside || !self.omega.bits[g.cell_index(amb)] {
                *b = true;
                count += 1;
            }
        }
        Region { grid, bits, count, half }
    }

    fn solve(&self, reg: Region) -> Result<f64, InradiusError> {
        let key = Key {
            bits: canonical(&reg.bits, reg.grid.dim, 2 * reg.half),
            dims: reg.grid.cells,
            p: self.p.to_bits(),
            kind: self.opts.kind,
            h: self.h().to_bits(),
        };
        if let Some(v) = self.cache.borrow().get(&key) {
            self.stats.borrow_mut().cache_hits += 1;
            return Ok(*v);
        }
        let mask = CellMask { grid: reg.grid, bits: reg.bits, kind: MaskKind::CompactSet, clipped: false };
        let est = capacity(&mask, self.p, self.opts.kind, &self.opts.solver)?;
        self.stats.borrow_mut().solves += 1;
        self.cache.borrow_mut().insert(key, est.value);
        Ok(est.value)
    }

    /// Capacity of the closed ball around node `c` intersected with the complement.
    pub fn query(&self, c: usize, r: f64) -> Result<f64, InradiusError> {
        self.stats.borrow_mut().queries += 1;
        if self.is_empty(c, r) {
            self.stats.borrow_mut().empty += 1;
            return Ok(0.0);
        }
        self.solve(self.region(c, r, false))
    }

    /// Full estimate (with potential) for one query, uncached.
    pub fn query_estimate(&self, c: usize, r: f64) -> Result<CapacityEstimate, InradiusError> {
        let reg = self.region(c, r, false);
        let mask = CellMask { grid: reg.grid, bits: reg.bits, kind: MaskKind::CompactSet, clipped: false };
        Ok(capacity(&mask, self.p, self.opts.kind, &self.opts.solver)?)
    }

    /// Capacity of the whole closed ball of radius `r` at this resolution.
    pub fn ball_capacity(&self, r: f64) -> Result<f64, InradiusError> {
        let c = self.omega.grid.n_nodes() / 2;
        self.solve(self.region(c, r, true))
    }

    /// Capacity of one cell in a window at least as large as any radius-`r`
    /// query uses. Any nonempty region at radius `r` has at least this capacity,
    /// since capacity only drops as the window grows.
    pub fn cell_floor(&self, r: f64) -> Result<f64, InradiusError> {
        let half = (self.half_width(r) + self.margin_cells).next_power_of_two();
        if let Some(v) = self.floors.borrow().get(&half) {
            return Ok(*v);
        }
        let v = self.single_cell(2 * half)?;
        self.floors.borrow_mut().insert(half, v);
        Ok(v)
    }

    /// Capacity of one cell centered in a window with the standard margin.
    pub fn cell_capacity(&self) -> Result<f64, InradiusError> {
        self.single_cell(2 * self.margin_cells + 1).map(|v| v.max(0.0))
    }

    fn single_cell(&self, w: usize) -> Result<f64, InradiusError> {
        let g = &self.omega.grid;
        let dim = g.dim;
        let grid = Grid::new(dim, &vec![0.0; dim], g.h, &vec![w; dim]).expect("window grid");
        let mut mask = CellMask::empty(&grid, MaskKind::CompactSet);
        let mid = [(w - 1) / 2; 3];
        let mut c = [0usize; 3];
        c[..dim].copy_from_slice(&mid[..dim]);
        mask.bits[grid.cell_index(c)] = true;
        Ok(capacity(&mask, self.p, self.opts.kind, &self.opts.solver)?.value)
    }

    fn lower_bound(&self, c: usize, r: f64, floor: f64) -> f64 {
        if self.is_empty(c, r) {
            return 0.0;
        }
        let mut lb = floor;
        if self.opts.kind == CapacityKind::Sobolev {
            // u = 1 on the region, so the mass term alone is at least its measure.
            lb = lb.max(self.region_count(c, r) as f64 * self.omega.grid.cell_volume());
        }
        lb
    }

    /// Number of complement cells within distance `r` of node `c`.
    pub fn region_count(&self, c: usize, r: f64) -> usize {
        let g = &self.omega.grid;
        let cc = g.node_coords(c);
        let rc2 = self.rc2(r);
        let rh = self.half_width(r) as i64;
        let span = |k: i64, ck: i64| (k - ck).max(ck - (k + 1)).max(0);
        let (ny, nz) = if g.dim >= 2 { (rh, if g.dim == 3 { rh } else { 0 }) } else { (0, 0) };
        let ylo = if g.dim >= 2 { cc[1] as i64 - ny } else { 0 };
        let yhi = if g.dim >= 2 { cc[1] as i64 + ny - 1 } else { 0 };
        let zlo = if g.dim == 3 { cc[2] as i64 - nz } else { 0 };
        let zhi = if g.dim == 3 { cc[2] as i64 + nz - 1 } else { 0 };
        let cx = cc[0] as i64;
        let w = g.cells[0] as i64;
        let mut total = 0usize;
        for z in zlo..=zhi {
            let tz = if g.dim == 3 { span(z, cc[2] as i64) } else { 0 };
            for y in ylo..=yhi {
                let ty = if g.dim >= 2 { span(y, cc[1] as i64) } else { 0 };
                let rest = rc2 - (ty * ty + tz * tz) as f64;
                if rest < 0.0 {
                    continue;
                }
                // cells i with span(i, cx) <= floor(sqrt(rest))
                let reach = rest.sqrt().floor() as i64;
                let a = cx - reach - 1;
                let b = cx + reach; // inclusive
                let len = (b - a + 1) as usize;
                let inside_row = (g.dim < 2 || (y >= 0 && y < g.cells[1] as i64))
                    && (g.dim < 3 || (z >= 0 && z < g.cells[2] as i64));
                if !inside_row {
                    total += len;
                    continue;
                }
                let row = (y.max(0) as usize) + g.cells[1] * (z.max(0) as usize);
                let base = row * (g.cells[0] + 1);
                let (ca, cb) = (a.max(0), (b + 1).min(w));
                let inner = if cb > ca {
                    (self.row_prefix[base + cb as usize] - self.row_prefix[base + ca as usize]) as usize
                } else {
                    0
                };
                let outer = len - (cb - ca).max(0) as usize;
                total += inner + outer;
            }
        }
        total
    }

    /// Candidate centers for radius `r`: nodes at the search pitch inside the
    /// hull of the domain dilated by `r` (the whole box for an empty domain).
    pub fn centers(&self, r: f64, pitch: usize) -> Vec<usize> {
        let g = &self.omega.grid;
        let bounds = match self.omega.hull() {
            Some(b) => b.dilate(r),
            None => g.bounds(),
        };
        let n = g.node_dims();
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        for d in 0..3 {
            if d >= g.dim {
                hi[d] = 0;
                continue;
            }
            let a = ((bounds.lo[d] - g.lo[d]) / g.h - 1e-9).ceil().max(0.0) as usize;
            let b = ((bounds.hi[d] - g.lo[d]) / g.h + 1e-9).floor().min((n[d] - 1) as f64);
            lo[d] = a;
            hi[d] = if b < a as f64 { a } else { b as usize };
        }
        let pitch = pitch.max(1);
        let mut out = Vec::new();
        let mut z = lo[2];
        while z <= hi[2] {
            let mut y = lo[1];
            while y <= hi[1] {
                let mut x = lo[0];
                while x <= hi[0] {
                    out.push(g.node_index([x, y, z]));
                    x += pitch;
                }
                y += pitch;
            }
            z += pitch;
        }
        out
    }

    fn neighbourhood(&self, c: usize, reach: usize, out: &mut Vec<usize>) {
        let g = &self.omega.grid;
        let n = g.node_dims();
        let cc = g.node_coords(c);
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        for d in 0..g.dim {
            lo[d] = cc[d].saturating_sub(reach);
            hi[d] = (cc[d] + reach).min(n[d] - 1);
        }
        for z in lo[2]..=hi[2] {
            for y in lo[1]..=hi[1] {
                for x in lo[0]..=hi[0] {
                    out.push(g.node_index([x, y, z]));
                }
            }
        }
    }

    // Largest ladder rung whose discrete ball fits inside the region.
    fn inscribed_rung(&self, reg: &Region, r: f64) -> Option<usize> {
        let g = &reg.grid;
        let offs = corner_offsets(g);
        let mut seeds = vec![false; g.n_nodes()];
        for (j, &b) in reg.bits.iter().enumerate() {
            if !b {
                let base = g.cell_base_node(j);
                for &o in &offs {
                    seeds[base + o] = true;
                }
            }
        }
        let d2 = edt_squared(g.node_dims(), &seeds).into_iter().fold(0.0, f64::max);
        let rc = r / self.h();
        (0..).take_while(|&k| rung(k) <= rc).filter(|&k| rung(k) * rung(k) < d2).last()
    }

    // Capacity of the cells within `rung(k)` of a node, in a window large enough
    // to contain every translate of a radius-`r` window that keeps the ball
    // inside the region. Bounds below every region that contains such a ball.
    fn ball_bound(&self, half: usize, r: f64, k: usize) -> Result<f64, InradiusError> {
        if let Some(v) = self.balls.borrow().get(&(half, k)) {
            return Ok(*v);
        }
        let g = &self.omega.grid;
        let dim = g.dim;
        let rho = rung(k);
        let shift = (r / g.h - rho).max(0.0).ceil() as usize;
        let w = 2 * (half + shift);
        let grid = Grid::new(dim, &vec![0.0; dim], g.h, &vec![w; dim]).expect("window grid");
        let mid = (w / 2) as f64;
        let mask = CellMask::from_fn(&grid, MaskKind::CompactSet, |lc| {
            (0..dim)
                .map(|d| {
                    let a = lc[d] as f64 - mid;
                    a.abs().max((a + 1.0).abs()).powi(2)
                })
                .sum::<f64>()
                <= rho * rho
        });
        let v = capacity(&mask, self.p, self.opts.kind, &self.opts.solver)?.value;
        self.balls.borrow_mut().insert((half, k), v);
        Ok(v)
    }

    // Query value unless a lower bound shows it exceeds `cut`.
    fn bounded_query(&self, c: usize, r: f64, cut: impl Fn(f64) -> bool) -> Result<Option<f64>, InradiusError> {
        self.stats.borrow_mut().queries += 1;
        if self.is_empty(c, r) {
            self.stats.borrow_mut().empty += 1;
            return Ok(Some(0.0));
        }
        let reg = self.region(c, r, false);
        if let Some(k) = self.inscribed_rung(&reg, r) {
            if cut(self.ball_bound(reg.half, r, k)?) {
                self.stats.borrow_mut().pruned += 1;
                return Ok(None);
            }
        }
        self.solve(reg).map(Some)
    }

    // Branch and bound minimum over `centers`; ties go to the lowest node index.
    fn minimize_over(&self, centers: &[usize], r: f64) -> Result<(f64, usize), InradiusError> {
        let floor = self.cell_floor(r)?;
        let mut order: Vec<(f64, usize)> = centers.iter().map(|&c| (self.lower_bound(c, r, floor), c)).collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut best = (f64::INFINITY, usize::MAX);
        for (i, &(lb, c)) in order.iter().enumerate() {
            if lb > best.0 {
                self.stats.borrow_mut().pruned += order.len() - i;
                break;
            }
            let bound = best.0;
            if let Some(v) = self.bounded_query(c, r, |b| b > bound)? {
                if v < best.0 || (v == best.0 && c < best.1) {
                    best = (v, c);
                }
            }
        }
        Ok(best)
    }

    fn refined(&self, r: f64, coarse: &[usize], keep: usize) -> Result<Vec<usize>, InradiusError> {
        let pitch = self.opts.center_pitch.max(1);
        if pitch == 1 || !self.opts.refine {
            return Ok(coarse.to_vec());
        }
        let floor = self.cell_floor(r)?;
        let mut scored: Vec<(f64, usize)> = Vec::new();
        for &c in coarse {
            let lb = self.lower_bound(c, r, floor);
            scored.push((lb, c));
        }
        scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut fine = coarse.to_vec();
        for &(_, c) in scored.iter().take(keep) {
            self.neighbourhood(c, pitch, &mut fine);
        }
        fine.sort_unstable();
        fine.dedup();
        Ok(fine)
    }

    /// Minimum ball-complement capacity at radius `r` and its center node.
    pub fn delta(&self, r: f64) -> Result<(f64, usize), InradiusError> {
        if !(r > 0.0) {
            return Err(InradiusError::BadRadius);
        }
        let coarse = self.centers(r, self.opts.center_pitch);
        if coarse.is_empty() {
            return Err(InradiusError::EmptySearch);
        }
        let first = self.minimize_over(&coarse, r)?;
        if self.opts.center_pitch <= 1 || !self.opts.refine {
            return Ok(first);
        }
        let mut fine = coarse.clone();
        self.neighbourhood(first.1, self.opts.center_pitch, &mut fine);
        let fine = self.refined(r, &fine, 4)?;
        self.minimize_over(&fine, r)
    }

    // Some center with capacity at most `threshold` (strictly below if `strict`).
    fn admissible(&self, r: f64, threshold: f64, strict: bool) -> Result<Option<usize>, InradiusError> {
        let pass = |v: f64| if strict { v < threshold } else { v <= threshold };
        let floor = self.cell_floor(r)?;
        if !pass(floor) {
            // Only empty regions can qualify.
            let all = self.centers(r, 1);
            return Ok(all.into_iter().find(|&c| self.is_empty(c, r)));
        }
        let coarse = self.centers(r, self.opts.center_pitch);
        let centers = self.refined(r, &coarse, 8)?;
        let mut order: Vec<(f64, usize)> = centers.iter().map(|&c| (self.lower_bound(c, r, floor), c)).collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for (i, &(lb, c)) in order.iter().enumerate() {
            if !pass(lb) {
                self.stats.borrow_mut().pruned += order.len() - i;
                return Ok(None);
            }
            if let Some(v) = self.bounded_query(c, r, |b| !pass(b))? {
                if pass(v) {
                    return Ok(Some(c));
                }
            }
        }
        Ok(None)
    }

    fn diag(&self) -> f64 {
        let g = &self.omega.grid;
        let b = g.bounds();
        (0..g.dim).map(|d| (b.hi[d] - b.lo[d]).powi(2)).sum::<f64>().sqrt()
    }

    // Largest admissible radius found by galloping up from the empty radius,
    // then bisecting to the tolerance.
    fn sup_admissible(
        &self,
        mut test: impl FnMut(f64) -> Result<Option<usize>, InradiusError>,
    ) -> Result<(f64, Option<usize>), InradiusError> {
        let all = self.centers(self.diag(), 1);
        let (r0, c0) = self.empty_radius(&all);
        let tol = self.tol();
        let top = self.diag();
        let mut lo = r0;
        let mut witness = (c0 != usize::MAX && r0 > 0.0).then_some(c0);
        let mut step = tol;
        let hi;
        loop {
            let r = lo + step;
            if r >= top {
                match test(top)? {
                    Some(c) => return Ok((top, Some(c))),
                    None => {
                        hi = top;
                        break;
                    }
                }
            }
            match test(r)? {
                Some(c) => {
                    lo = r;
                    witness = Some(c);
                    step *= 2.0;
                }
                None => {
                    hi = r;
                    break;
                }
            }
        }
        let mut hi = hi;
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            match test(mid)? {
                Some(c) => {
                    lo = mid;
                    witness = Some(c);
                }
                None => hi = mid,
            }
        }
        Ok((lo, witness))
    }

    /// `sup { r : some center has capacity < eps }`.
    pub fn epsilon_radius(&self, eps: f64) -> Result<(f64, Option<usize>), InradiusError> {
        self.sup_admissible(|r| self.admissible(r, eps, true))
    }

    /// `sup { r : some center has capacity <= gamma * C(ball of radius r) }`.
    pub fn gamma_radius(&self, gamma: f64) -> Result<f64, InradiusError> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(InradiusError::BadGamma);
        }
        let (r, _) = self.sup_admissible(|r| {
            let t = gamma * self.ball_capacity(r)?;
            self.admissible(r, t, false)
        })?;
        Ok(r)
    }

    pub fn node_position(&self, c: usize) -> Vec<f64> {
        let g = &self.omega.grid;
        g.node_position(c)[..g.dim].to_vec()
    }
}

fn row_prefix(omega: &CellMask) -> Vec<u32> {
    let g = &omega.grid;
    let w = g.cells[0];
    let rows = g.n_cells() / w;
    let mut out = vec![0u32; rows * (w + 1)];
    for row in 0..rows {
        let base = row * (w + 1);
        for i in 0..w {
            let comp = !omega.bits[row * w + i];
            out[base + i + 1] = out[base + i] + comp as u32;
        }
    }
    out
}

// Ladder of inscribed-ball radii, in cells.
fn rung(k: usize) -> f64 {
    2f64.powf(1.0 + 0.5 * k as f64)
}

// Smallest packing of a cubic window of side `w` over its axis permutations and reflections.
fn canonical(bits: &[bool], dim: usize, w: usize) -> Vec<u8> {
    let perms: &[[usize; 3]] = match dim {
        1 => &[[0, 1, 2]],
        2 => &[[0, 1, 2], [1, 0, 2]],
        _ => &[[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]],
    };
    let mut best: Option<Vec<u8>> = None;
    let mut buf = vec![false; bits.len()];
    for perm in perms {
        for flip in 0..1usize << dim {
            let mut src = [0usize; 3];
            for (j, out) in buf.iter_mut().enumerate() {
                let t = [j % w, (j / w) % w, j / (w * w)];
                for d in 0..dim {
                    let v = t[perm[d]];
                    src[d] = if flip >> d & 1 == 1 { w - 1 - v } else { v };
                }
                *out = bits[src[0] + w * (src[1] + w * src[2])];
            }
            let packed = pack(&buf);
            if best.as_ref().is_none_or(|b| packed < *b) {
                best = Some(packed);
            }
        }
    }
    best.unwrap_or_default()
}

fn pack(bits: &[bool]) -> Vec<u8> {
    let mut out = vec![0u8; bits.len().div_ceil(8)];
    for (i, &b) in bits.iter().enumerate() {
        if b {
            out[i / 8] |= 1 << (i % 8);
        }
    }
    out
}

/// Capacity of `closed ball(center, r)` minus `omega`, solved on a local window.
/// The center is snapped to the nearest grid node.
pub fn ball_complement_capacity(
    omega: &CellMask,
    center: &[f64],
    r: f64,
    p: f64,
    opts: &SearchOptions,
) -> Result<CapacityEstimate, InradiusError> {
    if !(r > 0.0) {
        return Err(InradiusError::BadRadius);
    }
    let s = BallSearch::new(omega, p, opts.clone());
    let c = omega.grid.nearest_node(center).ok_or(InradiusError::EmptySearch)?;
    s.query_estimate(c, r)
}

pub fn delta_r(omega: &CellMask, r: f64, p: f64, opts: &SearchOptions) -> Result<(f64, Vec<f64>), InradiusError> {
    let s = BallSearch::new(omega, p, opts.clone());
    let (v, c) = s.delta(r)?;
    Ok((v, s.node_position(c)))
}

pub fn mazya_shubin_radius(omega: &CellMask, gamma: f64, p: f64, opts: &SearchOptions) -> Result<f64, InradiusError> {
    BallSearch::new(omega, p, opts.clone()).gamma_radius(gamma)
}

#[derive(Debug, Clone, Serialize)]
pub struct EpsilonPoint {
    pub epsilon: f64,
    pub radius: f64,
    pub center: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GammaPoint {
    pub gamma: f64,
    pub radius: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DeltaPoint {
    pub r: f64,
    pub delta: f64,
    pub gamma: f64,
    pub center: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct InradiusReport {
    pub p: f64,
    pub h: f64,
    pub kind: CapacityKind,
    pub rho_hat: f64,
    pub epsilon_curve: Vec<EpsilonPoint>,
    pub gamma_curve: Vec<GammaPoint>,
    pub geometric_inradius: f64,
    pub deltas: Vec<DeltaPoint>,
    pub cell_capacity: f64,
    pub center_pitch: usize,
    pub bisection_tol: f64,
    pub stats: QueryStats,
}

/// Default epsilon schedule: fractions of the single-cell capacity.
pub fn default_epsilons(cell_capacity: f64) -> Vec<f64> {
    [1e-1, 1e-2, 1e-3, 1e-4].iter().map(|f| f * cell_capacity).collect()
}

pub struct InradiusRequest<'a> {
    /// Decreasing; `None` uses [`default_epsilons`].
    pub epsilons: Option<&'a [f64]>,
    pub gammas: &'a [f64],
    pub radii: &'a [f64],
}

pub fn strict_inradius(
    omega: &CellMask,
    p: f64,
    req: &InradiusRequest,
    opts: &SearchOptions,
) -> Result<InradiusReport, InradiusError> {
    let s = BallSearch::new(omega, p, opts.clone());
    let cell = s.cell_capacity()?;
    let eps = match req.epsilons {
        Some(e) => e.to_vec(),
        None => default_epsilons(cell),
    };
    if eps.is_empty() || eps.iter().any(|e| !(*e > 0.0)) || eps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(InradiusError::BadEpsilons);
    }
    let mut epsilon_curve = Vec::new();
    for &e in &eps {
        let (r, c) = s.epsilon_radius(e)?;
        epsilon_curve.push(EpsilonPoint { epsilon: e, radius: r, center: c.map(|c| s.node_position(c)) });
    }
    let rho_hat = epsilon_curve.last().map(|p| p.radius).unwrap_or(0.0);
    let mut gamma_curve = Vec::new();
    for &g in req.gammas {
        gamma_curve.push(GammaPoint { gamma: g, radius: s.gamma_radius(g)? });
    }
    let mut deltas = Vec::new();
    for &r in req.radii {
        let (d, c) = s.delta(r)?;
        let full = s.ball_capacity(r)?;
        deltas.push(DeltaPoint { r, delta: d, gamma: d / full, center: s.node_position(c) });
    }
    Ok(InradiusReport {
        p,
        h: omega.grid.h,
        kind: opts.kind,
        rho_hat,
        epsilon_curve,
        gamma_curve,
        geometric_inradius: geometric_inradius(omega),
        deltas,
        cell_capacity: cell,
        center_pitch: opts.center_pitch,
        bisection_tol: s.tol(),
        stats: s.stats(),
    })
}
