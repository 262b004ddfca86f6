use capradius::calculus::{gradient, lp_norm, lp_norm_pow, rayleigh_quotient, CalculusError, ScalarField};
use capradius::geometry::{CellMask, Grid, MaskKind};
use proptest::prelude::*;
use std::f64::consts::PI;

fn line(h: f64) -> Grid {
    Grid::new(1, &[0.0], h, &[(1.0 / h).round() as usize]).unwrap()
}

fn square(h: f64) -> Grid {
    let n = (1.0 / h).round() as usize;
    Grid::new(2, &[0.0, 0.0], h, &[n, n]).unwrap()
}

#[test]
fn constant_has_zero_gradient() {
    let g = square(0.125);
    let grad = gradient(&ScalarField::from_fn(&g, |_| 3.5));
    assert!(grad.magnitudes().iter().all(|&m| m == 0.0));
}

#[test]
fn affine_gradients_are_exact() {
    let g = Grid::new(3, &[-0.5, 0.0, 0.25], 0.125, &[6, 5, 4]).unwrap();
    let f = ScalarField::from_fn(&g, |x| 2.0 * x[0] - 3.0 * x[1] + 0.5 * x[2] + 1.0);
    let grad = gradient(&f);
    for c in 0..g.n_cells() {
        let v = &grad.values[c];
        assert!((v[0] - 2.0).abs() < 1e-12 && (v[1] + 3.0).abs() < 1e-12 && (v[2] - 0.5).abs() < 1e-12);
    }
    let e1 = gradient(&ScalarField::from_fn(&g, |x| x[0]));
    assert!(e1.values.iter().all(|v| (v[0] - 1.0).abs() < 1e-12 && v[1].abs() < 1e-12 && v[2].abs() < 1e-12));
}

#[test]
fn square_gradient_is_twice_the_center() {
    let h = 0.25;
    let g = line(h);
    let grad = gradient(&ScalarField::from_fn(&g, |x| x[0] * x[0]));
    for c in 0..4 {
        let mid = (c as f64 + 0.5) * h;
        assert!((grad.values[c][0] - 2.0 * mid).abs() < 1e-14);
    }
}

#[test]
fn norm_examples() {
    let g = square(1.0 / 16.0);
    for p in [1.1, 2.0, 4.5] {
        let one = lp_norm(&ScalarField::from_fn(&g, |_| 1.0), p, None).unwrap();
        assert!((one - 1.0).abs() < 1e-12);
        assert_eq!(lp_norm(&ScalarField::zeros(&g), p, None).unwrap(), 0.0);
    }
    let x = ScalarField::from_fn(&line(1.0 / 256.0), |x| x[0]);
    assert!((lp_norm(&x, 2.0, None).unwrap() - 3f64.powf(-0.5)).abs() < 1e-4);
}

#[test]
fn norm_over_region() {
    let g = square(0.25);
    let half = CellMask::from_fn(&g, MaskKind::OpenSet, |c| c[0] < 2);
    let one = ScalarField::from_fn(&g, |_| 1.0);
    assert!((lp_norm_pow(&one, 3.0, Some(&half)).unwrap() - 0.5).abs() < 1e-14);
    let other = CellMask::empty(&square(0.125), MaskKind::OpenSet);
    assert_eq!(lp_norm(&one, 2.0, Some(&other)), Err(CalculusError::GridMismatch));
    assert_eq!(lp_norm(&one, 1.0, None), Err(CalculusError::BadExponent(1.0)));
}

#[test]
fn affine_cell_averages_integrate_exactly() {
    let g = Grid::new(2, &[-1.0, 0.5], 0.2, &[7, 3]).unwrap();
    let f = ScalarField::from_fn(&g, |x| 1.5 * x[0] + 0.25 * x[1] - 2.0);
    let sum: f64 = f.cell_averages().iter().sum::<f64>() * g.cell_volume();
    // integral over [-1, 0.4] x [0.5, 1.1]
    let exact = 1.4 * 0.6 * (1.5 * -0.3 + 0.25 * 0.8 - 2.0);
    assert!((sum - exact).abs() < 1e-13);
}

#[test]
fn hat_quotient() {
    let f = ScalarField::from_fn(&line(1.0 / 256.0), |x| 1.0 - (2.0 * x[0] - 1.0).abs());
    let q = rayleigh_quotient(&f, 2.0).unwrap();
    assert!((q / 12.0 - 1.0).abs() < 1e-4, "{q}");
}

#[test]
fn sine_quotient() {
    let f = ScalarField::from_fn(&line(1.0 / 512.0), |x| (PI * x[0]).sin());
    let q = rayleigh_quotient(&f, 2.0).unwrap();
    assert!((q / (PI * PI) - 1.0).abs() < 0.005, "{q}");
}

#[test]
fn zero_field_quotient_is_an_error() {
    assert_eq!(rayleigh_quotient(&ScalarField::zeros(&line(0.25)), 2.0), Err(CalculusError::Zero));
}

#[test]
fn support_mask_zeroes_outside_nodes() {
    let g = square(0.25);
    let mask = CellMask::from_fn(&g, MaskKind::OpenSet, |c| c[0] == 1 && c[1] == 1);
    let f = ScalarField::from_fn(&g, |_| 1.0).with_support(mask);
    let nonzero = f.values.iter().filter(|&&v| v != 0.0).count();
    assert_eq!(nonzero, 4);
}

#[test]
fn length_is_checked() {
    assert!(matches!(ScalarField::new(&line(0.25), vec![0.0; 4]), Err(CalculusError::Length { .. })));
}

fn field(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, (n + 1) * (n + 1))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn quotient_is_homogeneous(v in field(8), c in prop_oneof![-10.0f64..-0.1, 0.1f64..10.0], p in 1.1f64..5.0) {
        let g = square(0.125);
        let f = ScalarField::new(&g, v.clone()).unwrap();
        prop_assume!(lp_norm_pow(&f, p, None).unwrap() > 1e-6);
        let cf = ScalarField::new(&g, v.iter().map(|x| c * x).collect()).unwrap();
        let (a, b) = (rayleigh_quotient(&f, p).unwrap(), rayleigh_quotient(&cf, p).unwrap());
        prop_assert!((a - b).abs() <= 1e-12 * a.abs());
    }

    #[test]
    fn gradient_norm_triangle(u in field(8), w in field(8), p in 1.1f64..5.0) {
        let g = square(0.125);
        let sum = ScalarField::new(&g, u.iter().zip(&w).map(|(a, b)| a + b).collect()).unwrap();
        let (fu, fw) = (ScalarField::new(&g, u).unwrap(), ScalarField::new(&g, w).unwrap());
        let lhs = lp_norm(&gradient(&sum), p, None).unwrap();
        let rhs = lp_norm(&gradient(&fu), p, None).unwrap() + lp_norm(&gradient(&fw), p, None).unwrap();
        prop_assert!(lhs <= rhs * (1.0 + 1e-12));
    }

    #[test]
    fn affine_gradient_exact(a in -5.0f64..5.0, b in -5.0f64..5.0, c in -5.0f64..5.0) {
        let g = square(0.125);
        let grad = gradient(&ScalarField::from_fn(&g, |x| a * x[0] + b * x[1] + c));
        for v in &grad.values {
            prop_assert!((v[0] - a).abs() < 1e-11 && (v[1] - b).abs() < 1e-11);
        }
    }
}
