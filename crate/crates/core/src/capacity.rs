//! Sobolev and Wiener p-capacity of cell sets.
//!
//! The potential is 1 on every corner of a cell of `K`, 0 on the outer boundary
//! of the grid box, and takes values in `[0, 1]` elsewhere. The Sobolev energy
//! is `||u||_p^p + ||grad u||_p^p`, the Wiener energy drops the first term.

use serde::Serialize;
use thiserror::Error;

use crate::calculus::{
    check_p, gradient, lp_norm_pow, CalculusError, ScalarField,
};
use crate::geometry::{
    corner_offsets, edt_squared, grid_for, rasterize, support_bounds, CellMask, DomainSpec,
    GeometryError, Grid, MaskKind,
};
use crate::solver::{NodeState, Problem, ProblemSpec, SolverOptions, SolverStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CapacityKind {
    Sobolev,
    Wiener,
}

impl CapacityKind {
    pub fn mass_weight(self) -> f64 {
        match self {
            CapacityKind::Sobolev => 1.0,
            CapacityKind::Wiener => 0.0,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CapacityError {
    #[error("capacity needs a compact-set mask")]
    NotCompact,
    #[error("set touches the outer boundary of the grid box")]
    TouchesFrame,
    #[error(transparent)]
    Calculus(#[from] CalculusError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Serialize)]
pub struct CapacityEstimate {
    pub value: f64,
    pub kind: CapacityKind,
    pub p: f64,
    pub h: f64,
    /// Distance from the set's cells to the grid box boundary.
    pub margin: f64,
    pub cells: usize,
    pub solver: SolverStats,
    #[serde(skip)]
    pub potential: ScalarField,
}

/// Discrete energy of a potential, without regularization.
pub fn capacity_energy(u: &ScalarField, p: f64, kind: CapacityKind) -> Result<f64, CalculusError> {
    let g = lp_norm_pow(&gradient(u), p, None)?;
    Ok(match kind {
        CapacityKind::Sobolev => lp_norm_pow(u, p, None)? + g,
        CapacityKind::Wiener => g,
    })
}

pub fn sobolev_capacity(k: &CellMask, p: f64, opts: &SolverOptions) -> Result<CapacityEstimate, CapacityError> {
    capacity(k, p, CapacityKind::Sobolev, opts)
}

pub fn wiener_capacity(k: &CellMask, p: f64, opts: &SolverOptions) -> Result<CapacityEstimate, CapacityError> {
    capacity(k, p, CapacityKind::Wiener, opts)
}

pub fn capacity(
    k: &CellMask,
    p: f64,
    kind: CapacityKind,
    opts: &SolverOptions,
) -> Result<CapacityEstimate, CapacityError> {
    check_p(p)?;
    if k.kind != MaskKind::CompactSet {
        return Err(CapacityError::NotCompact);
    }
    let g = &k.grid;
    let nodes = k_nodes(k);
    let margin = match k.index_hull() {
        Some((lo, hi)) => {
            let mut m = f64::INFINITY;
            for d in 0..g.dim {
                m = m.min(lo[d] as f64).min((g.cells[d] - hi[d]) as f64);
            }
            m * g.h
        }
        None => f64::INFINITY,
    };
    if (0..g.n_nodes()).any(|i| nodes[i] && g.is_boundary_node(i)) {
        return Err(CapacityError::TouchesFrame);
    }
    let count = k.count();
    if count == 0 {
        return Ok(CapacityEstimate {
            value: 0.0,
            kind,
            p,
            h: g.h,
            margin,
            cells: 0,
            solver: SolverStats { converged: true, ..Default::default() },
            potential: ScalarField::zeros(g),
        });
    }
    let mut u = initial_potential(g, &nodes, kind);
    let states: Vec<NodeState> = (0..g.n_nodes())
        .map(|i| {
            if nodes[i] || g.is_boundary_node(i) {
                NodeState::Fixed
            } else {
                NodeState::Free { lo: 0.0, hi: 1.0 }
            }
        })
        .collect();
    let prob = Problem::new(
        &ProblemSpec {
            grid: g,
            p,
            mass_weight: kind.mass_weight(),
            grad_weight: 1.0,
            nodes: &states,
            loads: None,
            eps: opts.eps,
        },
        &u,
    );
    let solver = prob.minimize(&mut u, opts);
    let potential = ScalarField::new(g, u)?;
    let value = capacity_energy(&potential, p, kind)?;
    Ok(CapacityEstimate { value, kind, p, h: g.h, margin, cells: count, solver, potential })
}

/// Corner nodes of the cells of `k`.
pub fn k_nodes(k: &CellMask) -> Vec<bool> {
    let g = &k.grid;
    let offs = corner_offsets(g);
    let mut nodes = vec![false; g.n_nodes()];
    for (c, &b) in k.bits.iter().enumerate() {
        if b {
            let base = g.cell_base_node(c);
            for &o in &offs {
                nodes[base + o] = true;
            }
        }
    }
    nodes
}

// 1 on K, decaying linearly with distance to 0 at the nearest point of the box
// boundary; the Sobolev guess also decays exponentially at unit rate.
fn initial_potential(g: &Grid, k_nodes: &[bool], kind: CapacityKind) -> Vec<f64> {
    let d2 = edt_squared(g.node_dims(), k_nodes);
    let reach = (0..g.n_nodes())
        .filter(|&i| g.is_boundary_node(i))
        .map(|i| d2[i])
        .fold(f64::INFINITY, f64::min)
        .sqrt()
        .max(1.0);
    d2.iter()
        .enumerate()
        .map(|(i, &d)| {
            if g.is_boundary_node(i) {
                return 0.0;
            }
            let lin = (1.0 - d.sqrt() / reach).max(0.0);
            match kind {
                CapacityKind::Sobolev => lin.min((-d.sqrt() * g.h).exp()),
                CapacityKind::Wiener => lin,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingGrid {
    /// Every dilate is rasterized on one grid with the base spacing.
    FixedSpacing,
    /// The grid is dilated with the set, so each dilate is the same index problem.
    Dilated,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingRow {
    pub s: f64,
    pub capacity: f64,
    /// `s^n max(1, s^-p) C(K)`.
    pub bound: f64,
    pub ratio: f64,
    pub holds: bool,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingReport {
    pub p: f64,
    pub kind: CapacityKind,
    pub base: f64,
    pub tolerance: f64,
    pub grid: ScalingGrid,
    pub rows: Vec<ScalingRow>,
    pub translation: TranslationCheck,
}

/// Capacity of `K + shift` on the grid shifted by the same amount.
#[derive(Debug, Clone, Serialize)]
pub struct TranslationCheck {
    pub shift: Vec<f64>,
    pub capacity: f64,
    pub identical: bool,
}

impl ScalingReport {
    pub fn all_hold(&self) -> bool {
        self.rows.iter().all(|r| r.holds) && self.translation.identical
    }
}

pub struct ScalingSetup {
    pub h: f64,
    pub margin: f64,
    pub grid: ScalingGrid,
    /// Relative slack allowed on the bound.
    pub tolerance: f64,
}

pub fn scaling_bound(n: usize, p: f64, s: f64) -> f64 {
    s.powi(n as i32) * 1f64.max(s.powf(-p))
}

/// Capacities of dilates `sK` against the bound `s^n max(1, s^-p) C(K)`.
pub fn capacity_scaling_report(
    k: &DomainSpec,
    p: f64,
    kind: CapacityKind,
    scales: &[f64],
    setup: &ScalingSetup,
    opts: &SolverOptions,
) -> Result<ScalingReport, CapacityError> {
    let n = k.dim;
    let (base, rows, base_grid) = match setup.grid {
        ScalingGrid::Dilated => {
            let mask = rasterize(k, &grid_for(k, setup.h, setup.margin)?, MaskKind::CompactSet)
                .map_err(GeometryError::from)?;
            let base = capacity(&mask, p, kind, opts)?;
            let mut rows = Vec::new();
            for &s in scales {
                let gs = mask.grid.scaled(s);
                let ms = rasterize(&k.scaled(s), &gs, MaskKind::CompactSet).map_err(GeometryError::from)?;
                rows.push((s, capacity(&ms, p, kind, opts)?));
            }
            (base, rows, mask.grid)
        }
        ScalingGrid::FixedSpacing => {
            let mut hull = support_bounds(k).ok_or(GeometryError::Raster(crate::geometry::RasterError::Unbounded))?;
            for &s in scales {
                if let Some(b) = support_bounds(&k.scaled(s)) {
                    hull = hull.hull(&b);
                }
            }
            let grid = Grid::covering(&hull, setup.h, setup.margin).map_err(GeometryError::from)?;
            let raster = |spec: &DomainSpec| rasterize(spec, &grid, MaskKind::CompactSet).map_err(GeometryError::from);
            let base = capacity(&raster(k)?, p, kind, opts)?;
            let mut rows = Vec::new();
            for &s in scales {
                rows.push((s, capacity(&raster(&k.scaled(s))?, p, kind, opts)?));
            }
            (base, rows, grid)
        }
    };
    let rows = rows
        .into_iter()
        .map(|(s, est)| {
            let bound = scaling_bound(n, p, s) * base.value;
            ScalingRow {
                s,
                capacity: est.value,
                bound,
                ratio: est.value / bound,
                holds: est.value <= bound * (1.0 + setup.tolerance),
                converged: est.solver.converged,
            }
        })
        .collect();
    let mut shift = vec![0.0; n];
    shift[0] = 3.0 * base_grid.h;
    let moved = rasterize(&k.translated(&shift), &base_grid.translated(&shift), MaskKind::CompactSet)
        .map_err(GeometryError::from)?;
    let moved = capacity(&moved, p, kind, opts)?.value;
    let translation = TranslationCheck { shift, capacity: moved, identical: moved == base.value };
    Ok(ScalingReport { p, kind, base: base.value, tolerance: setup.tolerance, grid: setup.grid, rows, translation })
}
