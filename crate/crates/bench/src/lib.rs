//! Problem fixtures shared by the benchmarks.

use capradius::geometry::{rasterize_with_margin, CellMask, DomainSpec, MaskKind, Shape};

/// Closed disk of radius `r` at the origin, rasterized with a frame of width 1.
pub fn disk_compact(r: f64, h: f64) -> CellMask {
    let spec = DomainSpec::new(2, Shape::ball(&[0.0, 0.0], r)).expect("disk");
    rasterize_with_margin(&spec, h, 1.0, MaskKind::CompactSet).expect("raster")
}

/// Closed 3-D ball of radius `r` at the origin.
pub fn ball3_compact(r: f64, h: f64) -> CellMask {
    let spec = DomainSpec::new(3, Shape::ball(&[0.0; 3], r)).expect("ball");
    rasterize_with_margin(&spec, h, 0.5, MaskKind::CompactSet).expect("raster")
}

/// Open unit square.
pub fn square_open(h: f64) -> CellMask {
    let spec = DomainSpec::new(2, Shape::cube(&[0.0, 0.0], &[1.0, 1.0])).expect("square");
    rasterize_with_margin(&spec, h, 0.25, MaskKind::OpenSet).expect("raster")
}

/// Unit disk minus a closed disk of radius 0.1 at (0.3, 0).
pub fn holed_disk_open(h: f64) -> CellMask {
    let spec = DomainSpec::new(2, Shape::ball(&[0.0, 0.0], 1.0).minus(Shape::ball(&[0.3, 0.0], 0.1)))
        .expect("holed disk");
    rasterize_with_margin(&spec, h, 0.25, MaskKind::OpenSet).expect("raster")
}
