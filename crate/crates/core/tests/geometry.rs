use capradius::geometry::{
    ball_complement_region, geometric_inradius, rasterize, CellMask, DomainSpec, Grid, MaskKind, Shape, SpecError,
};
use proptest::prelude::*;

fn grid2(lo: f64, h: f64, n: usize) -> Grid {
    Grid::new(2, &[lo, lo], h, &[n, n]).unwrap()
}

fn spec2(shape: Shape) -> DomainSpec {
    DomainSpec::new(2, shape).unwrap()
}

// Corners of cell (i, j) on a square grid.
fn corners(g: &Grid, i: usize, j: usize) -> [[f64; 2]; 4] {
    let (x0, y0) = (g.lo[0] + g.h * i as f64, g.lo[1] + g.h * j as f64);
    let (x1, y1) = (x0 + g.h, y0 + g.h);
    [[x0, y0], [x1, y0], [x0, y1], [x1, y1]]
}

#[test]
fn parse_round_trip() {
    let text = r#"{"dim": 2, "shape": {"ball": {"center": [0, 0], "r": 1}}}"#;
    let spec = DomainSpec::parse(text).unwrap();
    assert_eq!(spec.shape, Shape::ball(&[0.0, 0.0], 1.0));
    assert_eq!(spec.shape.leaf_count(), 1);
    assert_eq!(DomainSpec::parse(&spec.canonical_json()).unwrap(), spec);
}

#[test]
fn parse_rejects_negative_radius() {
    let e = DomainSpec::parse(r#"{"dim": 2, "shape": {"ball": {"center": [0, 0], "r": -1}}}"#).unwrap_err();
    assert!(matches!(e, SpecError::Invalid { .. }), "{e:?}");
}

#[test]
fn parse_rejects_inverted_box_and_unknown_shape() {
    let inverted = r#"{"dim": 2, "shape": {"box": {"lo": [1, 0], "hi": [0, 1]}}}"#;
    assert!(matches!(DomainSpec::parse(inverted), Err(SpecError::Invalid { .. })));
    let unknown = r#"{"dim": 2, "shape": {"torus": {}}}"#;
    assert!(matches!(DomainSpec::parse(unknown), Err(SpecError::Invalid { .. })));
}

#[test]
fn syntax_errors_report_position() {
    match DomainSpec::parse("{\"dim\": 2,\n  \"shape\": }") {
        Err(SpecError::Syntax { line, column, .. }) => {
            assert_eq!(line, 2);
            assert!(column > 1);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn union_with_complement_structure() {
    let text = r#"{"dim": 2, "shape": {"union": [
        {"box": {"lo": [0, 0], "hi": [1, 1]}},
        {"complement": {"ball": {"center": [0, 0], "r": 1}}}]}}"#;
    let s = DomainSpec::parse(text).unwrap().shape;
    // box and ball leaves under a union and a complement node
    assert_eq!(s.leaf_count(), 2);
    assert_eq!(s.node_count(), 2);
    assert_eq!(s.depth(), 3);
}

#[test]
fn lattice_expands_to_translates() {
    let text = r#"{"dim": 2, "shape": {"lattice": {"of": {"ball": {"center": [0, 0], "r": 0.1}},
        "pitch": [1, 2], "counts": [3, 2]}}}"#;
    let s = DomainSpec::parse(text).unwrap().shape;
    let Shape::Union(kids) = &s else { panic!("{s:?}") };
    assert_eq!(kids.len(), 6);
    assert_eq!(kids[4], Shape::ball(&[0.0, 0.0], 0.1).translate(&[1.0, 2.0]));
    let big = r#"{"dim": 2, "shape": {"lattice": {"of": {"point": [0, 0]}, "pitch": [1, 1], "counts": [101, 100]}}}"#;
    assert!(matches!(DomainSpec::parse(big), Err(SpecError::LatticeTooLarge { .. })));
}

#[test]
fn depth_limit() {
    let mut s = Shape::ball(&[0.0, 0.0], 1.0);
    for _ in 0..32 {
        s = s.complement();
    }
    assert!(matches!(DomainSpec::new(2, s), Err(SpecError::TooDeep { .. })));
}

#[test]
fn aligned_box_fills_grid() {
    let m = rasterize(&spec2(Shape::cube(&[0.0, 0.0], &[1.0, 1.0])), &grid2(0.0, 0.25, 4), MaskKind::OpenSet).unwrap();
    assert_eq!(m.count(), 16);
    assert_eq!(m.bits.len(), 16);
}

#[test]
fn disjoint_intersection_is_empty() {
    let s = spec2(Shape::Intersect(vec![Shape::ball(&[-0.5, 0.0], 0.3), Shape::ball(&[0.5, 0.0], 0.3)]));
    for kind in [MaskKind::OpenSet, MaskKind::CompactSet] {
        assert!(rasterize(&s, &grid2(-1.0, 1.0 / 16.0, 32), kind).unwrap().is_empty());
    }
}

#[test]
fn inner_disk_matches_corner_predicate() {
    let h = 1.0 / 64.0;
    let g = grid2(-1.0, h, 128);
    let m = rasterize(&spec2(Shape::ball(&[0.0, 0.0], 1.0)), &g, MaskKind::OpenSet).unwrap();
    let mut expected = 0;
    for j in 0..128 {
        for i in 0..128 {
            let inside = corners(&g, i, j).iter().all(|c| c[0] * c[0] + c[1] * c[1] <= 1.0);
            assert_eq!(m.get([i, j, 0]), inside, "cell {i} {j}");
            expected += inside as usize;
        }
    }
    assert_eq!(m.count(), expected);
    assert_eq!(expected, 12596);
    // about one boundary layer short of the area
    let area = std::f64::consts::PI / (h * h);
    assert!((m.count() as f64 / area - 1.0).abs() < 0.025);
}

#[test]
fn outer_disk_matches_near_point_predicate() {
    let g = grid2(-1.0, 1.0 / 16.0, 32);
    let m = rasterize(&spec2(Shape::ball(&[0.1, -0.2], 0.55)), &g, MaskKind::CompactSet).unwrap();
    for j in 0..32 {
        for i in 0..32 {
            let c = corners(&g, i, j);
            let nx = 0.1f64.clamp(c[0][0], c[3][0]);
            let ny = (-0.2f64).clamp(c[0][1], c[3][1]);
            let meets = (nx - 0.1).powi(2) + (ny + 0.2).powi(2) <= 0.55 * 0.55;
            assert_eq!(m.get([i, j, 0]), meets, "cell {i} {j}");
        }
    }
}

#[test]
fn open_set_outside_grid_is_an_error() {
    let s = spec2(Shape::ball(&[0.0, 0.0], 2.0));
    assert!(rasterize(&s, &grid2(-1.0, 0.125, 16), MaskKind::OpenSet).is_err());
    let m = rasterize(&s, &grid2(-1.0, 0.125, 16), MaskKind::CompactSet).unwrap();
    assert!(m.clipped);
}

#[test]
fn point_touches_its_cells() {
    let g = grid2(0.0, 0.25, 4);
    let m = rasterize(&spec2(Shape::point(&[0.5, 0.5])), &g, MaskKind::CompactSet).unwrap();
    assert_eq!(m.count(), 4);
    assert!(rasterize(&spec2(Shape::point(&[0.5, 0.5])), &g, MaskKind::OpenSet).unwrap().is_empty());
}

#[test]
fn ball_complement_of_full_box_is_empty() {
    let g = grid2(-1.0, 1.0 / 16.0, 32);
    let full = CellMask::from_fn(&g, MaskKind::OpenSet, |_| true);
    assert!(ball_complement_region(&full, &[0.0, 0.0], 0.5).is_empty());
}

#[test]
fn ball_complement_of_empty_set_is_the_outer_ball() {
    let g = grid2(-1.0, 1.0 / 16.0, 32);
    let empty = CellMask::empty(&g, MaskKind::OpenSet);
    let region = ball_complement_region(&empty, &[0.25, 0.0], 0.5);
    let ball = rasterize(&spec2(Shape::ball(&[0.25, 0.0], 0.5)), &g, MaskKind::CompactSet).unwrap();
    assert_eq!(region.bits, ball.bits);
    assert_eq!(region.kind, MaskKind::CompactSet);
}

#[test]
fn ball_complement_of_disk_is_annulus() {
    let h = 1.0 / 16.0;
    let g = grid2(-3.0, h, 96);
    let omega = rasterize(&spec2(Shape::ball(&[0.0, 0.0], 1.0)), &g, MaskKind::OpenSet).unwrap();
    let region = ball_complement_region(&omega, &[0.0, 0.0], 2.0);
    for j in 0..96 {
        for i in 0..96 {
            let c = corners(&g, i, j);
            let far = c.iter().map(|p| p[0] * p[0] + p[1] * p[1]).fold(0.0, f64::max);
            let nx = 0f64.clamp(c[0][0], c[3][0]);
            let ny = 0f64.clamp(c[0][1], c[3][1]);
            let expected = far > 1.0 && nx * nx + ny * ny <= 4.0;
            assert_eq!(region.get([i, j, 0]), expected, "cell {i} {j}");
        }
    }
}

#[test]
fn geometric_inradius_examples() {
    let h = 1.0 / 32.0;
    let sq = rasterize(&spec2(Shape::cube(&[0.0, 0.0], &[1.0, 1.0])), &grid2(-0.25, h, 48), MaskKind::OpenSet).unwrap();
    assert!((geometric_inradius(&sq) - 0.5).abs() <= h);
    for r in [0.3, 0.7, 1.0] {
        let b = rasterize(&spec2(Shape::ball(&[0.0, 0.0], r)), &grid2(-1.25, h, 80), MaskKind::OpenSet).unwrap();
        // inner cells lose up to a diagonal of one cell along the boundary
        let rho = geometric_inradius(&b);
        assert!(rho <= r && r - rho <= 1.5 * h, "r {r}: {rho}");
    }
    assert_eq!(geometric_inradius(&CellMask::empty(&grid2(0.0, h, 8), MaskKind::OpenSet)), 0.0);
}

#[test]
fn grid_budget_and_alignment() {
    assert!(Grid::new(3, &[0.0; 3], 1.0, &[512, 512, 512]).is_err());
    let b = capradius::geometry::Aabb { dim: 2, lo: [0.0, 0.0, 0.0], hi: [1.0, 2.0, 0.0] };
    let g = Grid::covering(&b, 0.25, 0.5).unwrap();
    assert_eq!(&g.cells[..2], &[8, 12]);
    assert_eq!(&g.lo[..2], &[-0.5, -0.5]);
}

fn dyadic(lo: i32, hi: i32) -> impl Strategy<Value = f64> {
    (lo..hi).prop_map(|k| k as f64 / 64.0)
}

fn leaf() -> impl Strategy<Value = Shape> {
    prop_oneof![
        (dyadic(-32, 32), dyadic(-32, 32), dyadic(4, 30)).prop_map(|(x, y, r)| Shape::ball(&[x, y], r)),
        (dyadic(-40, 20), dyadic(-40, 20), dyadic(2, 30), dyadic(2, 30))
            .prop_map(|(x, y, w, v)| Shape::cube(&[x, y], &[x + w, y + v])),
    ]
}

fn shape() -> impl Strategy<Value = Shape> {
    leaf().prop_recursive(3, 8, 3, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 1..3).prop_map(Shape::Union),
            prop::collection::vec(inner, 1..3).prop_map(Shape::Intersect),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rasterization_is_monotone_under_union(a in shape(), b in shape()) {
        let g = grid2(-2.0, 1.0 / 16.0, 64);
        let big = spec2(Shape::Union(vec![a.clone(), b]));
        for kind in [MaskKind::OpenSet, MaskKind::CompactSet] {
            let small = rasterize(&spec2(a.clone()), &g, kind).unwrap();
            let large = rasterize(&big, &g, kind).unwrap();
            prop_assert!(small.is_subset_of(&large));
        }
    }

    #[test]
    fn inner_is_inside_outer(a in shape()) {
        let g = grid2(-2.0, 1.0 / 16.0, 64);
        let s = spec2(a);
        let inner = rasterize(&s, &g, MaskKind::OpenSet).unwrap();
        let outer = rasterize(&s, &g, MaskKind::CompactSet).unwrap();
        prop_assert!(inner.bits.iter().zip(&outer.bits).all(|(i, o)| !*i || *o));
    }

    #[test]
    fn translation_by_grid_steps_shifts_bits(a in shape(), kx in -8isize..8, ky in -8isize..8) {
        let h = 1.0 / 16.0;
        let g = grid2(-3.0, h, 96);
        let s = spec2(a);
        for kind in [MaskKind::OpenSet, MaskKind::CompactSet] {
            let m = rasterize(&s, &g, kind).unwrap();
            let t = rasterize(&s.translated(&[kx as f64 * h, ky as f64 * h]), &g, kind).unwrap();
            prop_assert_eq!(t.count(), m.count());
            prop_assert_eq!(&t.bits, &m.shifted([kx, ky, 0]).bits);
        }
    }

    #[test]
    fn inradius_is_monotone(a in shape(), b in shape()) {
        let g = grid2(-2.0, 1.0 / 16.0, 64);
        let small = rasterize(&spec2(a.clone()), &g, MaskKind::OpenSet).unwrap();
        let large = rasterize(&spec2(Shape::Union(vec![a, b])), &g, MaskKind::OpenSet).unwrap();
        prop_assert!(geometric_inradius(&small) <= geometric_inradius(&large));
    }
}
