//! First Dirichlet eigenvalue of the p-Laplacian, Dirichlet problems, and the
//! reflection extension operator on cubes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::calculus::{
    check_p, for_each_cell, gradient, lp_norm_pow, rayleigh_quotient, CalculusError, ScalarField,
    Stencil,
};
use crate::geometry::{
    corner_offsets, node_distance_to_complement, CellMask, Grid, GridError, MaskKind,
};
use crate::solver::{NodeState, Problem, ProblemSpec, SolverOptions, SolverStats};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EigenError {
    #[error("domain mask must be an open-set mask")]
    NotOpen,
    #[error("domain has no interior nodes at this resolution")]
    EmptyDomain,
    #[error(transparent)]
    Calculus(#[from] CalculusError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, Serialize)]
pub struct EigenOptions {
    pub max_outer: usize,
    /// Relative change of the eigenvalue between sweeps.
    pub lambda_tol: f64,
    /// Relative nodal residual of the eigen equation.
    pub residual_tol: f64,
    pub inner: SolverOptions,
    /// Also report the eigenvalue of every connected component.
    pub per_component: bool,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions {
            max_outer: 500,
            lambda_tol: 1e-10,
            residual_tol: 1e-7,
            inner: SolverOptions { rel_tol: 1e-14, max_iter: 200, ..Default::default() },
            per_component: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EigenEstimate {
    pub lambda: f64,
    pub p: f64,
    pub h: f64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Eigenvalue after every sweep, starting with the initial guess.
    pub history: Vec<f64>,
    pub components: usize,
    pub component_lambdas: Option<Vec<f64>>,
    /// Normalized so that `||u||_p = 1`, positive on the dominant component.
    #[serde(skip)]
    pub eigenfield: ScalarField,
}

/// Nodes whose incident cells all lie in `omega`.
pub fn interior_nodes(omega: &CellMask) -> Vec<bool> {
    let g = &omega.grid;
    let offs = corner_offsets(g);
    let mut bad = vec![false; g.n_nodes()];
    for i in 0..g.n_nodes() {
        if g.is_boundary_node(i) {
            bad[i] = true;
        }
    }
    for (c, &b) in omega.bits.iter().enumerate() {
        if !b {
            let base = g.cell_base_node(c);
            for &o in &offs {
                bad[base + o] = true;
            }
        }
    }
    bad.into_iter().map(|b| !b).collect()
}

/// Connected components of the interior nodes, linked when they share a cell.
/// Returns a label per node (`usize::MAX` off the interior) and the count.
pub fn node_components(g: &Grid, free: &[bool]) -> (Vec<usize>, usize) {
    let offs = corner_offsets(g);
    let mut parent: Vec<usize> = (0..g.n_nodes()).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for_each_cell(g, |_, b| {
        let mut first = None;
        for &o in &offs {
            let n = b + o;
            if !free[n] {
                continue;
            }
            match first {
                None => first = Some(n),
                Some(f) => {
                    let (a, c) = (find(&mut parent, f), find(&mut parent, n));
                    if a != c {
                        parent[a.max(c)] = a.min(c);
                    }
                }
            }
        }
    });
    let mut label = vec![usize::MAX; g.n_nodes()];
    let mut root_label = std::collections::HashMap::new();
    for i in 0..g.n_nodes() {
        if free[i] {
            let r = find(&mut parent, i);
            let next = root_label.len();
            label[i] = *root_label.entry(r).or_insert(next);
        }
    }
    let count = root_label.len();
    (label, count)
}

// Cell loads |ubar|^(p-2) ubar scaled by lambda.
fn eigen_loads(st: &Stencil, g: &Grid, u: &[f64], p: f64, lambda: f64, out: &mut [f64]) {
    for_each_cell(g, |c, b| {
        let a = st.eval(u, b).0;
        out[c] = lambda * a.abs().powf(p - 2.0) * a;
    });
    for v in out.iter_mut() {
        if !v.is_finite() {
            *v = 0.0;
        }
    }
}

/// Nodal residual `grad(N/p)(u) - lambda grad(M/p)(u)` relative to `grad(N/p)(u)`,
/// measured on the free nodes. `N` and `M` are the gradient and mass p-norms;
/// `eps` smooths `|grad u|` the same way the solver does (0 for none).
pub fn eigen_residual(u: &ScalarField, p: f64, lambda: f64, free: &[bool], eps: f64) -> f64 {
    let g = &u.grid;
    let st = Stencil::new(g);
    let mut a = vec![0.0; g.n_nodes()];
    let mut m = vec![0.0; g.n_nodes()];
    let inv = 1.0 / st.ncorner as f64;
    for_each_cell(g, |_, b| {
        let (avg, gr) = st.eval(&u.values, b);
        let s2 = gr[0] * gr[0] + gr[1] * gr[1] + gr[2] * gr[2] + eps * eps;
        let coef = if s2 > 0.0 { s2.powf(0.5 * p - 1.0) } else { 0.0 };
        let mv = if avg != 0.0 { avg.abs().powf(p - 2.0) * avg } else { 0.0 };
        for k in 0..st.ncorner {
            let n = b + st.offsets[k];
            let mut t = 0.0;
            for d in 0..st.dim {
                t += gr[d] * st.weights[d][k];
            }
            a[n] += coef * t;
            m[n] += mv * inv;
        }
    });
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..g.n_nodes() {
        if free[i] {
            num += (a[i] - lambda * m[i]).powi(2);
            den += a[i].powi(2).max((lambda * m[i]).powi(2));
        }
    }
    if den == 0.0 {
        0.0
    } else {
        (num / den).sqrt()
    }
}

pub fn principal_rayleigh(omega: &CellMask, p: f64, opts: &EigenOptions) -> Result<EigenEstimate, EigenError> {
    check_p(p)?;
    if omega.kind != MaskKind::OpenSet {
        return Err(EigenError::NotOpen);
    }
    let g = &omega.grid;
    let free = interior_nodes(omega);
    if !free.iter().any(|&f| f) {
        return Err(EigenError::EmptyDomain);
    }
    let (labels, ncomp) = node_components(g, &free);
    let mut est = inverse_iteration(omega, p, &free, opts)?;
    est.components = ncomp;
    if opts.per_component && ncomp > 1 {
        let mut lams = Vec::with_capacity(ncomp);
        for comp in 0..ncomp {
            let sub: Vec<bool> = labels.iter().map(|&l| l == comp).collect();
            lams.push(inverse_iteration(omega, p, &sub, opts)?.lambda);
        }
        est.component_lambdas = Some(lams);
    }
    Ok(est)
}

fn normalize(u: &mut ScalarField, p: f64) -> Result<(), CalculusError> {
    let n = lp_norm_pow(u, p, None)?.powf(1.0 / p);
    if n == 0.0 || !n.is_finite() {
        return Err(CalculusError::Zero);
    }
    u.values.iter_mut().for_each(|v| *v /= n);
    Ok(())
}

fn inverse_iteration(
    omega: &CellMask,
    p: f64,
    free: &[bool],
    opts: &EigenOptions,
) -> Result<EigenEstimate, EigenError> {
    let g = &omega.grid;
    let st = Stencil::new(g);
    let d2 = node_distance_to_complement(omega);
    let init: Vec<f64> = (0..g.n_nodes()).map(|i| if free[i] { d2[i].sqrt() * g.h } else { 0.0 }).collect();
    let mut u = ScalarField::new(g, init)?;
    normalize(&mut u, p)?;
    let mut lambda = rayleigh_quotient(&u, p)?;
    let mut history = vec![lambda];
    let states: Vec<NodeState> = free
        .iter()
        .map(|&f| if f { NodeState::Free { lo: f64::NEG_INFINITY, hi: f64::INFINITY } } else { NodeState::Fixed })
        .collect();
    let mut loads = vec![0.0; g.n_cells()];
    let mut prob = Problem::new(
        &ProblemSpec {
            grid: g,
            p,
            mass_weight: 0.0,
            grad_weight: 1.0 / p,
            nodes: &states,
            loads: Some(&loads),
            eps: opts.inner.eps,
        },
        &u.values,
    );
    let mut converged = false;
    let eps = if p < 2.0 { opts.inner.eps } else { 0.0 };
    let mut residual = eigen_residual(&u, p, lambda, free, eps);
    let mut iterations = 0;
    for it in 0..opts.max_outer {
        iterations = it + 1;
        eigen_loads(&st, g, &u.values, p, lambda, &mut loads);
        prob.set_loads(&loads);
        let mut v = u.values.clone();
        prob.minimize_warm(&mut v, &opts.inner);
        let mut next = ScalarField::new(g, v)?;
        if normalize(&mut next, p).is_err() {
            break;
        }
        let nl = rayleigh_quotient(&next, p)?;
        if !nl.is_finite() {
            break;
        }
        let change = (lambda - nl).abs() / nl.abs().max(1e-300);
        u = next;
        lambda = nl;
        history.push(lambda);
        residual = eigen_residual(&u, p, lambda, free, eps);
        if change <= opts.lambda_tol && residual <= opts.residual_tol {
            converged = true;
            break;
        }
    }
    // sign convention: positive mass
    if u.values.iter().sum::<f64>() < 0.0 {
        u.values.iter_mut().for_each(|v| *v = -*v);
    }
    let support = omega.clone();
    Ok(EigenEstimate {
        lambda,
        p,
        h: g.h,
        residual,
        iterations,
        converged,
        history,
        components: 1,
        component_lambdas: None,
        eigenfield: u.with_support(support),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DirichletSolution {
    pub energy: f64,
    pub solver: SolverStats,
    #[serde(skip)]
    pub field: ScalarField,
}

/// Minimize `(1/p) ||grad u||_p^p - sum_c f_c ubar_c h^n` over fields equal to
/// `boundary` off the interior nodes of `omega`.
pub fn p_dirichlet_solve(
    omega: &CellMask,
    p: f64,
    boundary: &ScalarField,
    rhs: Option<&[f64]>,
    opts: &SolverOptions,
) -> Result<DirichletSolution, EigenError> {
    check_p(p)?;
    let g = &omega.grid;
    if boundary.grid != *g {
        return Err(CalculusError::GridMismatch.into());
    }
    let free = interior_nodes(omega);
    let states: Vec<NodeState> = free
        .iter()
        .map(|&f| if f { NodeState::Free { lo: f64::NEG_INFINITY, hi: f64::INFINITY } } else { NodeState::Fixed })
        .collect();
    let mut u = boundary.values.clone();
    let prob = Problem::new(
        &ProblemSpec {
            grid: g,
            p,
            mass_weight: 0.0,
            grad_weight: 1.0 / p,
            nodes: &states,
            loads: rhs,
            eps: opts.eps,
        },
        &u,
    );
    let solver = prob.minimize(&mut u, opts);
    let energy = prob.energy(&u);
    Ok(DirichletSolution { energy, solver, field: ScalarField::new(g, u)? })
}

#[derive(Debug, Clone, Serialize)]
pub struct ExtensionNormEstimate {
    /// Largest ratio `||E u||_{1,p} / ||u||_{1,p}` found.
    pub estimate: f64,
    pub per_trial: Vec<f64>,
    pub r: f64,
    pub p: f64,
    pub dim: usize,
    pub cells_per_side: usize,
    pub seed: u64,
}

/// Even reflection across the faces of `[0, R]^n` into `(-R, 2R)^n`, times a
/// product cutoff equal to 1 on the cube and vanishing on the outer boundary.
pub struct Extension {
    pub inner: Grid,
    pub outer: Grid,
    /// Trial fields are interpolated from this grid of half the resolution;
    /// checkerboard-like modes have almost no discrete W^{1,p} norm and would
    /// otherwise dominate the ascent.
    pub coarse: Grid,
    m: usize,
    // outer node -> inner node
    source: Vec<usize>,
    cutoff: Vec<f64>,
    // inner node -> (coarse node, weight)
    prolong: Vec<Vec<(usize, f64)>>,
}

fn smoothstep(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * s * (s * (6.0 * s - 15.0) + 10.0)
}

impl Extension {
    pub fn new(r: f64, dim: usize, cells_per_side: usize) -> Result<Extension, GridError> {
        let m = 2 * cells_per_side.div_ceil(2).max(1);
        let h = r / m as f64;
        let inner = Grid::new(dim, &vec![0.0; dim], h, &vec![m; dim])?;
        let coarse = Grid::new(dim, &vec![0.0; dim], 2.0 * h, &vec![m / 2; dim])?;
        let prolong = (0..inner.n_nodes())
            .map(|i| {
                let c = inner.node_coords(i);
                let mut terms = vec![([0usize; 3], 1.0)];
                for d in 0..dim {
                    let half = c[d] / 2;
                    if c[d] % 2 == 0 {
                        terms.iter_mut().for_each(|t| t.0[d] = half);
                    } else {
                        terms = terms
                            .into_iter()
                            .flat_map(|(mut a, w)| {
                                let mut b = a;
                                a[d] = half;
                                b[d] = half + 1;
                                [(a, 0.5 * w), (b, 0.5 * w)]
                            })
                            .collect();
                    }
                }
                terms.into_iter().map(|(cc, w)| (coarse.node_index(cc), w)).collect()
            })
            .collect();
        let outer = Grid::new(dim, &vec![-r; dim], h, &vec![3 * m; dim])?;
        let mut source = Vec::with_capacity(outer.n_nodes());
        let mut cutoff = Vec::with_capacity(outer.n_nodes());
        for i in 0..outer.n_nodes() {
            let c = outer.node_coords(i);
            let mut ic = [0usize; 3];
            let mut z = 1.0;
            for d in 0..dim {
                let k = c[d];
                ic[d] = if k < m {
                    z *= smoothstep(k as f64 / m as f64);
                    2 * m - k - m
                } else if k > 2 * m {
                    z *= smoothstep((3 * m - k) as f64 / m as f64);
                    4 * m - k - m
                } else {
                    k - m
                };
            }
            source.push(inner.node_index(ic));
            cutoff.push(z);
        }
        Ok(Extension { inner, outer, coarse, m, source, cutoff, prolong })
    }

    /// Interpolates coarse nodal values onto the inner grid.
    pub fn interpolate(&self, c: &[f64]) -> Vec<f64> {
        self.prolong.iter().map(|t| t.iter().map(|&(j, w)| w * c[j]).sum()).collect()
    }

    fn restrict(&self, fine: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for (t, &f) in self.prolong.iter().zip(fine) {
            for &(j, w) in t {
                out[j] += w * f;
            }
        }
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        self.source.iter().zip(&self.cutoff).map(|(&s, &z)| z * u[s]).collect()
    }

    pub fn cells_per_side(&self) -> usize {
        self.m
    }
}

fn w1p_pow(u: &ScalarField, p: f64) -> f64 {
    lp_norm_pow(u, p, None).unwrap() + lp_norm_pow(&gradient(u), p, None).unwrap()
}

// Ratio ||Eu||^p / ||u||^p and its gradient in u.
fn ratio_and_grad(ext: &Extension, u: &[f64], p: f64, grad: &mut [f64]) -> f64 {
    let inner = &ext.inner;
    let outer = &ext.outer;
    let (d, gd) = energy_grad(inner, u, p);
    let eu = ext.apply(u);
    let (a, ga) = energy_grad(outer, &eu, p);
    grad.iter_mut().for_each(|x| *x = 0.0);
    for (i, g) in ga.iter().enumerate() {
        grad[ext.source[i]] += ext.cutoff[i] * g;
    }
    for i in 0..grad.len() {
        grad[i] = (grad[i] * d - a * gd[i]) / (d * d);
    }
    a / d
}

fn coarse_ratio(ext: &Extension, c: &[f64], p: f64, grad: &mut [f64]) -> f64 {
    let u = ext.interpolate(c);
    let mut fine = vec![0.0; u.len()];
    let q = ratio_and_grad(ext, &u, p, &mut fine);
    ext.restrict(&fine, grad);
    q
}

// W^{1,p} energy sum and its nodal gradient, unregularized.
fn energy_grad(g: &Grid, u: &[f64], p: f64) -> (f64, Vec<f64>) {
    let st = Stencil::new(g);
    let inv = 1.0 / st.ncorner as f64;
    let vol = g.cell_volume();
    let mut e = 0.0;
    let mut out = vec![0.0; g.n_nodes()];
    for_each_cell(g, |_, b| {
        let (avg, gr) = st.eval(u, b);
        let s = (gr[0] * gr[0] + gr[1] * gr[1] + gr[2] * gr[2]).sqrt();
        e += avg.abs().powf(p) + s.powf(p);
        let dm = p * avg.abs().powf(p - 1.0) * avg.signum();
        let ds = if s > 0.0 { p * s.powf(p - 2.0) } else { 0.0 };
        for k in 0..st.ncorner {
            let mut t = dm * inv;
            for d in 0..st.dim {
                t += ds * gr[d] * st.weights[d][k];
            }
            out[b + st.offsets[k]] += t * vol;
        }
    });
    (e * vol, out)
}

fn random_start(rng: &mut ChaCha8Rng, g: &Grid) -> Vec<f64> {
    let n = g.n_nodes();
    let kind = rng.gen_range(0..3);
    let m = g.cells[0] as f64;
    match kind {
        0 => (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        1 => {
            // sum of a few low modes
            let modes: Vec<([f64; 3], f64, f64)> = (0..6)
                .map(|_| {
                    let mut k = [0.0; 3];
                    for kd in k.iter_mut().take(g.dim) {
                        *kd = rng.gen_range(0..4) as f64 * std::f64::consts::PI;
                    }
                    (k, rng.gen_range(-1.0..1.0), rng.gen_range(0.0..std::f64::consts::TAU))
                })
                .collect();
            (0..n)
                .map(|i| {
                    let c = g.node_coords(i);
                    modes
                        .iter()
                        .map(|(k, a, ph)| {
                            let t: f64 = (0..g.dim).map(|d| k[d] * c[d] as f64 / m).sum();
                            a * (t + ph).cos()
                        })
                        .sum()
                })
                .collect()
        }
        _ => {
            // bump near a random corner of the cube
            let corner: Vec<f64> = (0..g.dim).map(|_| if rng.gen_bool(0.5) { 0.0 } else { m }).collect();
            let w = rng.gen_range(0.5..(m / 2.0).max(1.0));
            (0..n)
                .map(|i| {
                    let c = g.node_coords(i);
                    let r2: f64 = (0..g.dim).map(|d| (c[d] as f64 - corner[d]).powi(2)).sum();
                    (-r2 / (w * w)).exp()
                })
                .collect()
        }
    }
}

/// One local ascent of the extension ratio from a random start.
pub fn extension_trial(ext: &Extension, p: f64, seed: u64, trial: u64, steps: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    let mut u = random_start(&mut rng, &ext.coarse);
    let n = u.len();
    let mut grad = vec![0.0; n];
    let mut q = coarse_ratio(ext, &u, p, &mut grad);
    let mut step = 1.0;
    let mut trial_u = vec![0.0; n];
    let mut tg = vec![0.0; n];
    for _ in 0..steps {
        let scale = u.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        let gn = grad.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        let mut improved = false;
        for _ in 0..30 {
            for i in 0..n {
                trial_u[i] = u[i] + step * scale / gn * grad[i];
            }
            let qt = coarse_ratio(ext, &trial_u, p, &mut tg);
            if qt.is_finite() && qt > q {
                std::mem::swap(&mut u, &mut trial_u);
                std::mem::swap(&mut grad, &mut tg);
                q = qt;
                step *= 2.0;
                improved = true;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    q.powf(1.0 / p)
}

/// Lower estimate of the operator norm of the extension by local ascent from
/// `trials` random starts. Trial `i` depends only on `(seed, i)`.
pub fn extension_norm_estimate(
    r: f64,
    p: f64,
    dim: usize,
    cells_per_side: usize,
    trials: usize,
    seed: u64,
) -> Result<ExtensionNormEstimate, EigenError> {
    check_p(p)?;
    let ext = Extension::new(r, dim, cells_per_side)?;
    let per_trial: Vec<f64> = (0..trials as u64).into_par_iter().map(|t| extension_trial(&ext, p, seed, t, 200)).collect();
    let estimate = per_trial.iter().cloned().fold(0.0, f64::max);
    Ok(ExtensionNormEstimate { estimate, per_trial, r, p, dim, cells_per_side: ext.cells_per_side(), seed })
}

/// `||E u||_{1,p} / ||u||_{1,p}` for a given field on the cube.
pub fn extension_ratio(ext: &Extension, u: &[f64], p: f64) -> f64 {
    let a = w1p_pow(&ScalarField::new(&ext.outer, ext.apply(u)).unwrap(), p);
    let d = w1p_pow(&ScalarField::new(&ext.inner, u.to_vec()).unwrap(), p);
    (a / d).powf(1.0 / p)
}
