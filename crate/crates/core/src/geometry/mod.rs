//! Domain specs, grids and conservative rasterization.

mod edt;
mod grid;
mod raster;
mod spec;

pub use edt::{corner_offsets, edt_squared, geometric_inradius, node_distance_to_complement};
pub use grid::{Aabb, Grid, GridError, MAX_CELLS};
pub use raster::{
    ball_complement_region, far_dist2, near_dist2, rasterize, CellMask, MaskKind, RasterError,
};
pub use spec::{DomainSpec, Shape, SpecError, MAX_DEPTH, MAX_LATTICE_COPIES};

/// Grid aligned to multiples of `h` covering the support of `spec` plus `margin`.
pub fn grid_for(spec: &DomainSpec, h: f64, margin: f64) -> Result<Grid, GeometryError> {
    let b = support_bounds(spec).ok_or(GeometryError::Raster(RasterError::Unbounded))?;
    Ok(Grid::covering(&b, h, margin)?)
}

/// Bounding box of the closure of the spec's set, if bounded.
pub fn support_bounds(spec: &DomainSpec) -> Option<Aabb> {
    raster::support_bounds(spec)
}

/// Rasterize `spec` on a grid built by [`grid_for`].
pub fn rasterize_with_margin(
    spec: &DomainSpec,
    h: f64,
    margin: f64,
    kind: MaskKind,
) -> Result<CellMask, GeometryError> {
    let grid = grid_for(spec, h, margin)?;
    Ok(rasterize(spec, &grid, kind)?)
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Raster(#[from] RasterError),
}
