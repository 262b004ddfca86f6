use capradius::calculus::{gradient, lp_norm, rayleigh_quotient, ScalarField};
use capradius::eigen::{
    extension_norm_estimate, interior_nodes, p_dirichlet_solve, principal_rayleigh, EigenError, EigenOptions,
};
use capradius::geometry::{CellMask, Grid, MaskKind};
use capradius::SolverOptions;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn interval(h: f64) -> CellMask {
    let g = Grid::new(1, &[0.0], h, &[(1.0 / h).round() as usize]).unwrap();
    CellMask::from_fn(&g, MaskKind::OpenSet, |_| true)
}

// Square [a, b)^2 in cell indices on an n x n grid of spacing h starting at 0.
fn square(h: f64, n: usize, a: usize, b: usize) -> CellMask {
    let g = Grid::new(2, &[0.0, 0.0], h, &[n, n]).unwrap();
    CellMask::from_fn(&g, MaskKind::OpenSet, |c| (a..b).contains(&c[0]) && (a..b).contains(&c[1]))
}

fn eig(m: &CellMask, p: f64) -> capradius::eigen::EigenEstimate {
    let e = principal_rayleigh(m, p, &EigenOptions::default()).unwrap();
    assert!(e.converged, "p {p}: residual {}", e.residual);
    e
}

#[test]
fn interval_eigenvalue() {
    let h = 1.0 / 512.0;
    let e = eig(&interval(h), 2.0);
    assert!((e.lambda / (PI * PI) - 1.0).abs() < 0.01, "{}", e.lambda);
    // sin(pi x) at the nodes: forward differences against two-point averages
    // of the mass give (2/h tan(pi h/2))^2 exactly
    let exact = (2.0 / h * (PI * h / 2.0).tan()).powi(2);
    assert!((e.lambda / exact - 1.0).abs() < 1e-8, "{} {exact}", e.lambda);
}

#[test]
fn square_eigenvalue() {
    let e = eig(&square(1.0 / 128.0, 128, 0, 128), 2.0);
    assert!((e.lambda / (2.0 * PI * PI) - 1.0).abs() < 0.02, "{}", e.lambda);
}

#[test]
fn eigenpair_invariants() {
    let m = square(1.0 / 32.0, 40, 4, 36);
    for p in [1.5, 2.0, 3.0] {
        let e = eig(&m, p);
        let u = &e.eigenfield;
        assert!((lp_norm(u, p, None).unwrap() - 1.0).abs() < 1e-9);
        assert!((rayleigh_quotient(u, p).unwrap() / e.lambda - 1.0).abs() < 1e-9);
        let free = interior_nodes(&m);
        for (i, &v) in u.values.iter().enumerate() {
            if free[i] {
                assert!(v > 0.0, "p {p} node {i}: {v}");
            } else {
                assert_eq!(v, 0.0);
            }
        }
        for w in e.history.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-10), "p {p}: {:?}", w);
        }
    }
}

#[test]
fn weak_form_against_random_tests() {
    let m = square(1.0 / 32.0, 40, 4, 36);
    let free = interior_nodes(&m);
    let g = &m.grid;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for p in [1.5, 2.0, 3.0] {
        let e = eig(&m, p);
        let gu = gradient(&e.eigenfield);
        let au = e.eigenfield.cell_averages();
        for _ in 0..100 {
            let chi: Vec<f64> = free.iter().map(|&f| if f { rng.gen_range(-1.0..1.0) } else { 0.0 }).collect();
            let chi = ScalarField::new(g, chi).unwrap();
            let gc = gradient(&chi);
            let ac = chi.cell_averages();
            let (mut a, mut b, mut scale) = (0.0, 0.0, 0.0);
            for c in 0..g.n_cells() {
                let (x, y) = (gu.values[c], gc.values[c]);
                let n = (x[0] * x[0] + x[1] * x[1]).sqrt();
                let dotp = x[0] * y[0] + x[1] * y[1];
                let w = if n > 0.0 { n.powf(p - 2.0) } else { 0.0 };
                a += w * dotp;
                if au[c] != 0.0 {
                    b += au[c].abs().powf(p - 2.0) * au[c] * ac[c];
                }
                scale += n.powf(p - 1.0) * (y[0] * y[0] + y[1] * y[1]).sqrt();
            }
            let rel = (a - e.lambda * b).abs() / scale;
            assert!(rel < 1e-5, "p {p}: {rel}");
        }
    }
}

#[test]
fn scaled_domain_scales_eigenvalue() {
    for p in [1.5, 2.0, 3.0] {
        let m = square(1.0 / 16.0, 24, 4, 20);
        let mut big = m.clone();
        big.grid = m.grid.scaled(2.0);
        let (a, b) = (eig(&m, p).lambda, eig(&big, p).lambda);
        assert!((b * 2f64.powf(p) / a - 1.0).abs() < 1e-6, "p {p}: {a} {b}");
    }
}

#[test]
fn monotone_under_inclusion() {
    let small = square(1.0 / 16.0, 24, 6, 18);
    let large = square(1.0 / 16.0, 24, 4, 20);
    for p in [1.5, 3.0] {
        assert!(eig(&large, p).lambda <= eig(&small, p).lambda * (1.0 + 1e-6));
    }
}

#[test]
fn translation_by_cells() {
    let a = square(1.0 / 16.0, 24, 4, 14);
    let b = a.shifted([5, 3, 0]);
    let (la, lb) = (eig(&a, 2.5).lambda, eig(&b, 2.5).lambda);
    assert!((la - lb).abs() <= 1e-12 * la, "{la} {lb}");
}

#[test]
fn disconnected_domain_reports_components() {
    let g = Grid::new(2, &[0.0, 0.0], 1.0 / 16.0, &[32, 16]).unwrap();
    let m = CellMask::from_fn(&g, MaskKind::OpenSet, |c| {
        (2..14).contains(&c[1]) && ((2..14).contains(&c[0]) || (18..26).contains(&c[0]))
    });
    let opts = EigenOptions { per_component: true, ..Default::default() };
    let e = principal_rayleigh(&m, 2.0, &opts).unwrap();
    assert_eq!(e.components, 2);
    let lams = e.component_lambdas.unwrap();
    assert_eq!(lams.len(), 2);
    let lo = lams.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!((e.lambda / lo - 1.0).abs() < 1e-6, "{} {lams:?}", e.lambda);
    assert!(lams[0] < lams[1]);
}

#[test]
fn eigen_errors() {
    let g = Grid::new(2, &[0.0, 0.0], 0.25, &[4, 4]).unwrap();
    let single = CellMask::from_fn(&g, MaskKind::OpenSet, |c| c[0] == 1 && c[1] == 1);
    assert!(matches!(principal_rayleigh(&single, 2.0, &EigenOptions::default()), Err(EigenError::EmptyDomain)));
    let compact = CellMask::from_fn(&g, MaskKind::CompactSet, |_| true);
    assert!(matches!(principal_rayleigh(&compact, 2.0, &EigenOptions::default()), Err(EigenError::NotOpen)));
}

#[test]
fn dirichlet_zero_data() {
    let m = square(1.0 / 16.0, 16, 0, 16);
    let z = ScalarField::zeros(&m.grid);
    for p in [1.5, 3.0] {
        let s = p_dirichlet_solve(&m, p, &z, None, &SolverOptions::default()).unwrap();
        assert!(s.field.max_abs() < 1e-12);
    }
}

#[test]
fn dirichlet_affine_data_is_reproduced() {
    let m = square(1.0 / 16.0, 16, 0, 16);
    let b = ScalarField::from_fn(&m.grid, |x| x[0]);
    let free = interior_nodes(&m);
    let start = ScalarField::new(
        &m.grid,
        b.values.iter().zip(&free).map(|(&v, &f)| if f { 0.3 } else { v }).collect(),
    )
    .unwrap();
    for p in [1.5, 2.0, 4.0] {
        let s = p_dirichlet_solve(&m, p, &start, None, &SolverOptions::default()).unwrap();
        let err = s.field.values.iter().zip(&b.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-7, "p {p}: {err}");
    }
}

#[test]
fn dirichlet_poisson_parabola() {
    let m = interval(1.0 / 256.0);
    let loads = vec![1.0; m.grid.n_cells()];
    let s = p_dirichlet_solve(&m, 2.0, &ScalarField::zeros(&m.grid), Some(&loads), &SolverOptions::default()).unwrap();
    let top = s.field.values.iter().cloned().fold(f64::MIN, f64::max);
    assert!((top - 0.125).abs() < 1e-4, "{top}");
    for (i, v) in s.field.values.iter().enumerate() {
        let x = i as f64 / 256.0;
        assert!((v - x * (1.0 - x) / 2.0).abs() < 1e-4);
    }
}

#[test]
fn extension_norm_examples() {
    let few = extension_norm_estimate(1.0, 2.0, 2, 8, 2, 7).unwrap();
    let many = extension_norm_estimate(1.0, 2.0, 2, 8, 6, 7).unwrap();
    assert!(few.estimate >= 1.0);
    assert_eq!(&many.per_trial[..2], &few.per_trial[..]);
    assert!(many.estimate >= few.estimate);
    // the cutoff gradient term scales like R^-p, so the estimate decreases in R
    let wide = extension_norm_estimate(2.0, 2.0, 2, 8, 6, 7).unwrap();
    assert!(wide.estimate >= 1.0 && wide.estimate <= many.estimate, "{} {}", wide.estimate, many.estimate);
    let fine = extension_norm_estimate(1.0, 2.0, 2, 16, 6, 7).unwrap();
    assert!((fine.estimate / many.estimate - 1.0).abs() < 0.02, "{} {}", fine.estimate, many.estimate);
    let p3 = extension_norm_estimate(1.0, 3.0, 1, 16, 3, 1).unwrap();
    assert!(p3.per_trial.iter().all(|&q| q >= 1.0));
}
