//! Minimization of discrete p-energies
//!
//! ```text
//! E(u) = h^n sum_c [ a (ubar_c^2 + em^2)^(p/2) + b (|g_c|^2 + eg^2)^(p/2) - f_c ubar_c ]
//! ```
//!
//! over nodal fields with fixed nodes and box bounds on the free nodes.

use std::cell::{Cell, RefCell};
use std::rc::Rc;

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::sparse::linalg::cholesky::{
    factorize_symbolic_cholesky, CholeskySymbolicParams, LltRef, SymbolicCholesky,
};
use faer::sparse::linalg::SupernodalThreshold;
use faer::sparse::{SparseColMatRef, SymbolicSparseColMat};
use faer::{Conj, Mat, MatMut, Par, Side};
use serde::Serialize;

use crate::calculus::{for_each_cell, Stencil};
use crate::geometry::Grid;

const NONE: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Projected Newton with a sparse Cholesky inner solve.
    ProjectedNewton,
    /// Accelerated projected gradient with backtracking and restarts.
    AcceleratedGradient,
}

/// Linear solver for the Newton systems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearSolver {
    /// Cholesky, except conjugate gradients for large 3-D problems.
    Auto,
    Cholesky,
    /// Conjugate gradients with a symmetric Gauss-Seidel preconditioner.
    ConjugateGradient,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverOptions {
    pub method: Method,
    /// Stop once the predicted energy decrease is below `rel_tol * |E|`.
    pub rel_tol: f64,
    pub max_iter: usize,
    /// Smoothing `eps` of `|x|` inside `(|x|^2 + eps^2)^(p/2)`, used for `p < 2`.
    pub eps: f64,
    pub linear: LinearSolver,
}

/// Free-node count above which `LinearSolver::Auto` leaves Cholesky in 3-D.
pub const CG_THRESHOLD_3D: usize = 20_000;

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            method: Method::ProjectedNewton,
            rel_tol: 1e-10,
            max_iter: 400,
            eps: 1e-10,
            linear: LinearSolver::Auto,
        }
    }
}

impl SolverOptions {
    pub fn accelerated() -> Self {
        SolverOptions { method: Method::AcceleratedGradient, rel_tol: 1e-12, max_iter: 200_000, ..Default::default() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SolverStats {
    pub iterations: usize,
    /// Last predicted energy decrease (Newton) or last actual decrease (gradient).
    pub final_decrement: f64,
    pub max_bound_violation: f64,
    pub converged: bool,
    pub regularization: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeState {
    Fixed,
    Free { lo: f64, hi: f64 },
}

/// A p-energy over a grid, with its sparsity pattern prepared for Newton steps.
pub struct Problem {
    grid: Grid,
    st: Stencil,
    p: f64,
    mass_w: f64,
    grad_w: f64,
    em2: Cell<f64>,
    eg2: Cell<f64>,
    eg2_target: f64,
    /// Cells touching at least one free node, with their base nodes.
    cells: Vec<(u32, u32)>,
    loads: Vec<f64>,
    free_of: Vec<u32>,
    free: Vec<u32>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    const_energy: f64,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    // Per active cell, the value slot of each lower-triangle corner pair (k >= l).
    slots: Vec<u32>,
    pattern: RefCell<Option<Rc<SymbolicCholesky<usize>>>>,
    // Cached factor when the Hessian does not depend on u.
    fixed_factor: RefCell<Option<Factor>>,
}

// Numeric sparse Cholesky factor with its solve workspace.
struct Factor {
    symbolic: Rc<SymbolicCholesky<usize>>,
    values: Vec<f64>,
    buf: RefCell<MemBuffer>,
}

impl Factor {
    fn solve(&self, rhs: MatMut<'_, f64>) {
        let mut buf = self.buf.borrow_mut();
        LltRef::new(&self.symbolic, &self.values).solve_in_place_with_conj(Conj::No, rhs, Par::Seq, MemStack::new(&mut buf));
    }
}

pub struct ProblemSpec<'a> {
    pub grid: &'a Grid,
    pub p: f64,
    pub mass_weight: f64,
    pub grad_weight: f64,
    pub nodes: &'a [NodeState],
    /// Per-cell load `f_c`; zero when `None`.
    pub loads: Option<&'a [f64]>,
    pub eps: f64,
}

fn pair_count(nc: usize) -> usize {
    nc * (nc + 1) / 2
}

impl Problem {
    /// `u0` supplies the values of fixed nodes.
    pub fn new(spec: &ProblemSpec, u0: &[f64]) -> Problem {
        let g = spec.grid;
        let st = Stencil::new(g);
        let nc = st.ncorner;
        let p = spec.p;
        let eg2 = if p < 2.0 { spec.eps * spec.eps } else { 0.0 };
        let em2 = eg2;
        let mut free_of = vec![NONE; g.n_nodes()];
        let mut free = Vec::new();
        let mut lo = Vec::new();
        let mut hi = Vec::new();
        for (i, s) in spec.nodes.iter().enumerate() {
            if let NodeState::Free { lo: a, hi: b } = *s {
                free_of[i] = free.len() as u32;
                free.push(i as u32);
                lo.push(a);
                hi.push(b);
            }
        }
        let mut cells = Vec::new();
        let mut const_cells = Vec::new();
        for_each_cell(g, |c, b| {
            if (0..nc).any(|k| free_of[b + st.offsets[k]] != NONE) {
                cells.push((c as u32, b as u32));
            } else {
                const_cells.push((c as u32, b as u32));
            }
        });
        let loads = match spec.loads {
            Some(l) => l.to_vec(),
            None => vec![0.0; g.n_cells()],
        };

        // Lower-triangle pattern over free variables.
        let nf = free.len();
        let mut pairs: Vec<(u32, u32)> = Vec::with_capacity(cells.len() * pair_count(nc));
        for i in 0..nf {
            pairs.push((i as u32, i as u32));
        }
        for &(_, b) in &cells {
            let ids: Vec<u32> = (0..nc).map(|k| free_of[b as usize + st.offsets[k]]).collect();
            for k in 0..nc {
                for l in 0..=k {
                    let (a, c) = (ids[k], ids[l]);
                    if a != NONE && c != NONE {
                        pairs.push((a.min(c), a.max(c)));
                    }
                }
            }
        }
        // (col, row) with row >= col
        pairs.sort_unstable();
        pairs.dedup();
        let mut col_ptr = vec![0usize; nf + 1];
        let mut row_idx = Vec::with_capacity(pairs.len());
        for &(c, r) in &pairs {
            col_ptr[c as usize + 1] += 1;
            row_idx.push(r as usize);
        }
        for j in 0..nf {
            col_ptr[j + 1] += col_ptr[j];
        }
        let find = |row: u32, col: u32| -> u32 {
            let (r, c) = (row.max(col) as usize, row.min(col) as usize);
            let seg = &row_idx[col_ptr[c]..col_ptr[c + 1]];
            (col_ptr[c] + seg.binary_search(&r).expect("pattern entry")) as u32
        };
        let mut slots = Vec::with_capacity(cells.len() * pair_count(nc));
        for &(_, b) in &cells {
            let ids: Vec<u32> = (0..nc).map(|k| free_of[b as usize + st.offsets[k]]).collect();
            for k in 0..nc {
                for l in 0..=k {
                    let (a, c) = (ids[k], ids[l]);
                    slots.push(if a != NONE && c != NONE { find(a, c) } else { NONE });
                }
            }
        }

        let mut prob = Problem {
            grid: g.clone(),
            st,
            p,
            mass_w: spec.mass_weight,
            grad_w: spec.grad_weight,
            em2: Cell::new(em2),
            eg2: Cell::new(eg2),
            eg2_target: eg2,
            cells,
            loads,
            free_of,
            free,
            lo,
            hi,
            const_energy: 0.0,
            col_ptr,
            row_idx,
            slots,
            pattern: RefCell::new(None),
            fixed_factor: RefCell::new(None),
        };
        let mut e = 0.0;
        for &(c, b) in &const_cells {
            e += prob.cell_energy(u0, c as usize, b as usize);
        }
        prob.const_energy = e * g.cell_volume();
        prob
    }

    pub fn n_free(&self) -> usize {
        self.free.len()
    }

    pub fn free_nodes(&self) -> &[u32] {
        &self.free
    }

    pub fn regularization(&self) -> f64 {
        self.eg2_target.sqrt()
    }

    /// Replace the per-cell loads. Fixed-node cells must carry no load.
    pub fn set_loads(&mut self, loads: &[f64]) {
        self.loads.copy_from_slice(loads);
    }

    // Hessian independent of u: quadratic energy without active bounds.
    fn is_quadratic(&self) -> bool {
        self.p == 2.0 && self.lo.iter().all(|v| *v == f64::NEG_INFINITY) && self.hi.iter().all(|v| *v == f64::INFINITY)
    }

    #[inline]
    fn cell_energy(&self, u: &[f64], c: usize, b: usize) -> f64 {
        let (avg, g) = self.st.eval(u, b);
        let s = g[0] * g[0] + g[1] * g[1] + g[2] * g[2];
        let mut e = -self.loads[c] * avg;
        if self.mass_w != 0.0 {
            e += self.mass_w * (avg * avg + self.em2.get()).powf(0.5 * self.p);
        }
        if self.grad_w != 0.0 {
            e += self.grad_w * (s + self.eg2.get()).powf(0.5 * self.p);
        }
        e
    }

    /// Regularized energy including the contribution of all-fixed cells.
    pub fn energy(&self, u: &[f64]) -> f64 {
        let mut e = 0.0;
        for &(c, b) in &self.cells {
            e += self.cell_energy(u, c as usize, b as usize);
        }
        e * self.grid.cell_volume() + self.const_energy
    }

    /// Gradient with respect to the free variables; returns the energy.
    pub fn gradient(&self, u: &[f64], out: &mut [f64]) -> f64 {
        out.iter_mut().for_each(|x| *x = 0.0);
        let nc = self.st.ncorner;
        let inv = 1.0 / nc as f64;
        let p = self.p;
        let mut e = 0.0;
        for &(c, b) in &self.cells {
            let (c, b) = (c as usize, b as usize);
            let (avg, g) = self.st.eval(u, b);
            let s = g[0] * g[0] + g[1] * g[1] + g[2] * g[2];
            let mut dm = -self.loads[c];
            e -= self.loads[c] * avg;
            if self.mass_w != 0.0 {
                let q = avg * avg + self.em2.get();
                e += self.mass_w * q.powf(0.5 * p);
                dm += self.mass_w * p * avg * q.powf(0.5 * p - 1.0);
            }
            let mut a = 0.0;
            if self.grad_w != 0.0 {
                let q = s + self.eg2.get();
                e += self.grad_w * q.powf(0.5 * p);
                a = self.grad_w * p * q.powf(0.5 * p - 1.0);
            }
            for k in 0..nc {
                let f = self.free_of[b + self.st.offsets[k]];
                if f == NONE {
                    continue;
                }
                let mut gk = dm * inv;
                for (d, gd) in g.iter().enumerate().take(self.st.dim) {
                    gk += a * gd * self.st.weights[d][k];
                }
                out[f as usize] += gk;
            }
        }
        let vol = self.grid.cell_volume();
        out.iter_mut().for_each(|x| *x *= vol);
        e * vol + self.const_energy
    }

    /// Assemble the (floored, positive semidefinite) Newton matrix.
    fn assemble(&self, u: &[f64], vals: &mut [f64]) {
        vals.iter_mut().for_each(|x| *x = 0.0);
        let nc = self.st.ncorner;
        let inv = 1.0 / nc as f64;
        let p = self.p;
        // Floors keep the matrix definite where the p > 2 energy is degenerate.
        let (mut gmax, mut amax) = (0.0f64, 0.0f64);
        if p > 2.0 {
            for &(_, b) in &self.cells {
                let (avg, g) = self.st.eval(u, b as usize);
                gmax = gmax.max((g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt());
                amax = amax.max(avg.abs());
            }
        }
        let gfloor = if p > 2.0 { p * (1e-3 * gmax.max(1e-12)).powf(p - 2.0) } else { 0.0 };
        let mfloor = if p > 2.0 { p * (p - 1.0) * (1e-3 * amax.max(1e-12)).powf(p - 2.0) } else { 0.0 };
        let mut local = [0.0f64; 36];
        for (ci, &(_, b)) in self.cells.iter().enumerate() {
            let b = b as usize;
            let (avg, g) = self.st.eval(u, b);
            let s = g[0] * g[0] + g[1] * g[1] + g[2] * g[2];
            let mut mm = 0.0;
            if self.mass_w != 0.0 {
                let q = avg * avg + self.em2.get();
                let v = p * q.powf(0.5 * p - 1.0) + p * (p - 2.0) * avg * avg * q.powf(0.5 * p - 2.0);
                mm = self.mass_w * v.max(mfloor) * inv * inv;
            }
            let (mut a, mut bb) = (0.0, 0.0);
            if self.grad_w != 0.0 {
                let q = s + self.eg2.get();
                a = p * q.powf(0.5 * p - 1.0);
                if s > 0.0 {
                    bb = p * (p - 2.0) * q.powf(0.5 * p - 2.0);
                }
                if a < gfloor {
                    a = gfloor;
                    bb = 0.0;
                }
                a *= self.grad_w;
                bb *= self.grad_w;
            }
            // projections of corner weights on g
            let mut wg = [0.0f64; 8];
            for (k, w) in wg.iter_mut().enumerate().take(nc) {
                for (d, gd) in g.iter().enumerate().take(self.st.dim) {
                    *w += gd * self.st.weights[d][k];
                }
            }
            let mut t = 0;
            for k in 0..nc {
                for l in 0..=k {
                    let mut ww = 0.0;
                    for d in 0..self.st.dim {
                        ww += self.st.weights[d][k] * self.st.weights[d][l];
                    }
                    local[t] = mm + a * ww + bb * wg[k] * wg[l];
                    t += 1;
                }
            }
            let sl = &self.slots[ci * pair_count(nc)..(ci + 1) * pair_count(nc)];
            for (t, &slot) in sl.iter().enumerate() {
                if slot != NONE {
                    vals[slot as usize] += local[t];
                }
            }
        }
        let vol = self.grid.cell_volume();
        vals.iter_mut().for_each(|x| *x *= vol);
    }

    fn diag_positions(&self) -> Vec<usize> {
        (0..self.free.len()).map(|j| self.col_ptr[j]).collect()
    }

    fn symbolic(&self) -> SymbolicSparseColMat<usize> {
        let n = self.free.len();
        SymbolicSparseColMat::new_checked(n, n, self.col_ptr.clone(), None, self.row_idx.clone())
    }

    fn factor(&self, sym: &SymbolicSparseColMat<usize>, vals: &[f64]) -> Option<Factor> {
        let mat = SparseColMatRef::new(sym.as_ref(), vals);
        let mut pat = self.pattern.borrow_mut();
        if pat.is_none() {
            let params = CholeskySymbolicParams {
                supernodal_flop_ratio_threshold: SupernodalThreshold::FORCE_SUPERNODAL,
                ..Default::default()
            };
            *pat = Some(Rc::new(factorize_symbolic_cholesky(sym.as_ref(), Side::Lower, Default::default(), params).ok()?));
        }
        let symbolic = pat.as_ref().unwrap().clone();
        let mut values = vec![0.0; symbolic.len_val()];
        let req = symbolic
            .factorize_numeric_llt_scratch::<f64>(Par::Seq, Default::default())
            .or(symbolic.solve_in_place_scratch::<f64>(1, Par::Seq));
        let mut buf = MemBuffer::try_new(req).ok()?;
        symbolic
            .factorize_numeric_llt(
                &mut values,
                mat,
                Side::Lower,
                Default::default(),
                Par::Seq,
                MemStack::new(&mut buf),
                Default::default(),
            )
            .ok()?;
        Some(Factor { symbolic, values, buf: RefCell::new(buf) })
    }

    // y = A x for the symmetric matrix stored as its lower triangle, diagonal first.
    fn sym_matvec(&self, vals: &[f64], x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..x.len() {
            let k0 = self.col_ptr[j];
            y[j] += vals[k0] * x[j];
            for k in k0 + 1..self.col_ptr[j + 1] {
                let i = self.row_idx[k];
                y[i] += vals[k] * x[j];
                y[j] += vals[k] * x[i];
            }
        }
    }

    // z = M^-1 r with M = (D + L) D^-1 (D + L^T).
    fn sgs_apply(&self, vals: &[f64], r: &[f64], z: &mut [f64]) {
        let n = r.len();
        let mut w = r.to_vec();
        for j in 0..n {
            let k0 = self.col_ptr[j];
            w[j] /= vals[k0];
            for k in k0 + 1..self.col_ptr[j + 1] {
                w[self.row_idx[k]] -= vals[k] * w[j];
            }
            w[j] *= vals[k0];
        }
        for j in (0..n).rev() {
            let k0 = self.col_ptr[j];
            let mut s = w[j];
            for k in k0 + 1..self.col_ptr[j + 1] {
                s -= vals[k] * z[self.row_idx[k]];
            }
            z[j] = s / vals[k0];
        }
    }

    // Preconditioned conjugate gradients from `x`, to a relative residual of 1e-10.
    fn pcg(&self, vals: &[f64], b: &[f64], x: &mut [f64]) -> bool {
        let n = b.len();
        let dot = |a: &[f64], c: &[f64]| a.iter().zip(c).map(|(x, y)| x * y).sum::<f64>();
        let bn = dot(b, b).sqrt();
        if bn == 0.0 {
            return true;
        }
        let mut r = vec![0.0; n];
        self.sym_matvec(vals, x, &mut r);
        for j in 0..n {
            r[j] = b[j] - r[j];
        }
        let mut z = vec![0.0; n];
        self.sgs_apply(vals, &r, &mut z);
        let mut d = z.clone();
        let mut rz = dot(&r, &z);
        let mut q = vec![0.0; n];
        for _ in 0..10 * n.max(100) {
            if dot(&r, &r).sqrt() <= 1e-10 * bn {
                return true;
            }
            self.sym_matvec(vals, &d, &mut q);
            let dq = dot(&d, &q);
            if !(dq > 0.0) {
                return false;
            }
            let a = rz / dq;
            for j in 0..n {
                x[j] += a * d[j];
                r[j] -= a * q[j];
            }
            self.sgs_apply(vals, &r, &mut z);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for j in 0..n {
                d[j] = z[j] + beta * d[j];
            }
        }
        // An inexact direction is still usable.
        dot(&r, &r).sqrt() <= 1e-3 * bn
    }

    fn project(&self, u: &mut [f64]) {
        for (j, &node) in self.free.iter().enumerate() {
            let v = &mut u[node as usize];
            *v = v.clamp(self.lo[j], self.hi[j]);
        }
    }

    fn max_gradient(&self, u: &[f64]) -> f64 {
        let mut m = 0.0f64;
        for &(_, b) in &self.cells {
            let g = self.st.eval(u, b as usize).1;
            m = m.max(g[0] * g[0] + g[1] * g[1] + g[2] * g[2]);
        }
        m.sqrt()
    }

    fn bound_violation(&self, u: &[f64]) -> f64 {
        let mut m = 0.0f64;
        for (j, &node) in self.free.iter().enumerate() {
            let v = u[node as usize];
            m = m.max(self.lo[j] - v).max(v - self.hi[j]);
        }
        m
    }

    /// Minimize in place. `u` holds fixed values and the starting point.
    pub fn minimize(&self, u: &mut [f64], opts: &SolverOptions) -> SolverStats {
        self.run(u, opts, false)
    }

    /// Like [`Problem::minimize`] for a start close to the minimizer: Newton is
    /// first tried without smoothing continuation.
    pub fn minimize_warm(&self, u: &mut [f64], opts: &SolverOptions) -> SolverStats {
        self.run(u, opts, true)
    }

    fn run(&self, u: &mut [f64], opts: &SolverOptions, warm: bool) -> SolverStats {
        self.project(u);
        let stats = match opts.method {
            Method::ProjectedNewton => {
                // Smoothing continuation for p < 2: the regularized energy has a
                // tiny region of fast Newton convergence when eps is small.
                let target = self.eg2_target;
                let mut spent = 0;
                if target > 0.0 && warm {
                    let saved = u.to_vec();
                    let st = self.newton(u, &SolverOptions { max_iter: 12, ..opts.clone() });
                    if st.converged {
                        return self.finish(u, st);
                    }
                    spent += st.iterations;
                    u.copy_from_slice(&saved);
                }
                let gmax = self.max_gradient(u);
                let mut eps2 = if target > 0.0 { (1e-2 * gmax * gmax).max(target) } else { 0.0 };
                while eps2 > target {
                    self.eg2.set(eps2);
                    self.em2.set(eps2);
                    let stage = SolverOptions { rel_tol: opts.rel_tol.max(1e-9), ..opts.clone() };
                    spent += self.newton(u, &stage).iterations;
                    eps2 = (eps2 * 1e-3).max(target);
                    if eps2 <= target * 1.000001 {
                        break;
                    }
                }
                self.eg2.set(target);
                self.em2.set(target);
                let mut st = self.newton(u, opts);
                st.iterations += spent;
                st
            }
            Method::AcceleratedGradient => self.accelerated(u, opts),
        };
        self.finish(u, stats)
    }

    fn finish(&self, u: &[f64], mut stats: SolverStats) -> SolverStats {
        stats.max_bound_violation = self.bound_violation(u);
        stats.regularization = self.regularization();
        stats
    }

    fn newton(&self, u: &mut [f64], opts: &SolverOptions) -> SolverStats {
        let nf = self.free.len();
        let mut stats = SolverStats::default();
        if nf == 0 {
            stats.converged = true;
            return stats;
        }
        let sym = self.symbolic();
        let diag = self.diag_positions();
        let mut vals = vec![0.0; self.row_idx.len()];
        let mut grad = vec![0.0; nf];
        let mut active = vec![false; nf];
        let mut trial = u.to_vec();
        let iterative = match opts.linear {
            LinearSolver::Auto => self.grid.dim == 3 && nf > CG_THRESHOLD_3D,
            LinearSolver::Cholesky => false,
            LinearSolver::ConjugateGradient => true,
        };
        let quadratic = self.is_quadratic() && !iterative;
        let mut cg_x = vec![0.0; if iterative { nf } else { 0 }];
        let mut e = self.gradient(u, &mut grad);
        for it in 0..opts.max_iter {
            stats.iterations = it + 1;
            let cached = quadratic && self.fixed_factor.borrow().is_some();
            if !cached {
                self.assemble(u, &mut vals);
            }
            // Binding bounds: at a bound with the gradient pushing outward.
            let mut any_active = false;
            for j in 0..nf {
                let v = u[self.free[j] as usize];
                let dg = if cached { 1.0 } else { vals[diag[j]].max(1e-300) };
                let w = (v - (v - grad[j] / dg).clamp(self.lo[j], self.hi[j])).abs();
                let tb = w.min(1e-9);
                active[j] = (v <= self.lo[j] + tb && grad[j] > 0.0) || (v >= self.hi[j] - tb && grad[j] < 0.0);
                any_active |= active[j];
            }
            if any_active {
                for j in 0..nf {
                    for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                        let i = self.row_idx[k];
                        if active[i] || active[j] {
                            vals[k] = if i == j { 1.0 } else { 0.0 };
                        }
                    }
                }
            }
            let mut rhs = Mat::<f64>::from_fn(nf, 1, |j, _| if active[j] { 0.0 } else { -grad[j] });
            let solved = if iterative {
                let b: Vec<f64> = (0..nf).map(|j| rhs[(j, 0)]).collect();
                cg_x.iter_mut().for_each(|x| *x = 0.0);
                let ok = self.pcg(&vals, &b, &mut cg_x);
                for j in 0..nf {
                    rhs[(j, 0)] = cg_x[j];
                }
                ok
            } else if quadratic {
                let mut ff = self.fixed_factor.borrow_mut();
                if ff.is_none() {
                    *ff = self.factor(&sym, &vals);
                }
                match ff.as_ref() {
                    Some(f) => {
                        f.solve(rhs.as_mut());
                        true
                    }
                    None => false,
                }
            } else {
                match self.factor(&sym, &vals) {
                    Some(f) => {
                        f.solve(rhs.as_mut());
                        true
                    }
                    None => false,
                }
            };
            let mut dir: Vec<f64> = (0..nf).map(|j| rhs[(j, 0)]).collect();
            if !solved || dir.iter().any(|x| !x.is_finite()) {
                // Diagonally scaled steepest descent.
                for j in 0..nf {
                    dir[j] = if active[j] { 0.0 } else { -grad[j] / vals[diag[j]].max(1e-300) };
                }
            }
            let dec2: f64 = (0..nf).map(|j| -grad[j] * dir[j]).sum();
            stats.final_decrement = 0.5 * dec2;
            // Always try one step so warm starts near the minimizer still move.
            if dec2 <= 0.0 || (it > 0 && 0.5 * dec2 <= opts.rel_tol * e.abs().max(1e-300)) {
                stats.converged = true;
                return stats;
            }
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                trial.copy_from_slice(u);
                let mut slope = 0.0;
                for j in 0..nf {
                    let node = self.free[j] as usize;
                    let v = (u[node] + t * dir[j]).clamp(self.lo[j], self.hi[j]);
                    slope += grad[j] * (v - u[node]);
                    trial[node] = v;
                }
                if slope < 0.0 {
                    let et = self.energy(&trial);
                    // Near the minimizer the decrease drops below the rounding
                    // noise of the energy sum; the full Newton step is then kept.
                    let noise = t == 1.0 && (et - e).abs() <= 1e-13 * e.abs();
                    if et <= e + 1e-4 * slope || noise {
                        accepted = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !accepted {
                // No representable decrease left along the Newton direction.
                stats.converged = 0.5 * dec2 <= 1e3 * opts.rel_tol.max(1e-13) * e.abs().max(1e-300);
                return stats;
            }
            u.copy_from_slice(&trial);
            e = self.gradient(u, &mut grad);
        }
        stats
    }

    fn accelerated(&self, u: &mut [f64], opts: &SolverOptions) -> SolverStats {
        let nf = self.free.len();
        let mut stats = SolverStats::default();
        if nf == 0 {
            stats.converged = true;
            return stats;
        }
        let mut x = u.to_vec();
        let mut y = u.to_vec();
        let mut xn = u.to_vec();
        let mut gy = vec![0.0; nf];
        let mut big_l = self.grid.h.powi(self.grid.dim as i32 - 2);
        let mut tk = 1.0f64;
        let mut ex = self.energy(&x);
        let mut small = 0;
        for it in 0..opts.max_iter {
            stats.iterations = it + 1;
            let ey = self.gradient(&y, &mut gy);
            // backtracking on the local Lipschitz estimate
            let mut en;
            loop {
                xn.copy_from_slice(&y);
                let mut lin = 0.0;
                let mut sq = 0.0;
                for j in 0..nf {
                    let node = self.free[j] as usize;
                    let v = (y[node] - gy[j] / big_l).clamp(self.lo[j], self.hi[j]);
                    let d = v - y[node];
                    lin += gy[j] * d;
                    sq += d * d;
                    xn[node] = v;
                }
                en = self.energy(&xn);
                if en <= ey + lin + 0.5 * big_l * sq + 1e-15 * ey.abs() || big_l > 1e300 {
                    break;
                }
                big_l *= 2.0;
            }
            let drop = ex - en;
            if en > ex {
                // restart momentum from the best point
                tk = 1.0;
                y.copy_from_slice(&x);
                continue;
            }
            stats.final_decrement = drop;
            let tn = 0.5 * (1.0 + (1.0 + 4.0 * tk * tk).sqrt());
            let beta = (tk - 1.0) / tn;
            for &node in &self.free {
                let node = node as usize;
                y[node] = xn[node] + beta * (xn[node] - x[node]);
            }
            self.project(&mut y);
            x.copy_from_slice(&xn);
            ex = en;
            tk = tn;
            big_l *= 0.9;
            if drop <= opts.rel_tol * ex.abs() {
                small += 1;
                if small >= 20 {
                    stats.converged = true;
                    break;
                }
            } else {
                small = 0;
            }
        }
        u.copy_from_slice(&x);
        stats
    }
}
