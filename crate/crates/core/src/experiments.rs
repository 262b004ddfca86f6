//! Inequality checks and experiments built from the eigenvalue, capacity and
//! inradius estimates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::calculus::{lp_norm, lp_norm_pow, CalculusError, ScalarField};
use crate::capacity::{capacity, k_nodes, CapacityError, CapacityKind};
use crate::eigen::{extension_norm_estimate, p_dirichlet_solve, principal_rayleigh, EigenError, EigenOptions};
use crate::geometry::{
    edt_squared, grid_for, rasterize, rasterize_with_margin, CellMask, DomainSpec, GeometryError, Grid,
    MaskKind, Shape,
};
use crate::inradius::{strict_inradius, BallSearch, InradiusError, InradiusRequest, SearchOptions};
use crate::report::{Flag, Report};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("radius {r} does not exceed the capacitary inradius estimate {rho}")]
    RadiusTooSmall { r: f64, rho: f64 },
    #[error("obstacles must be nested, shrinking and contained in the domain")]
    BadObstacles,
    #[error("the vanishing set has zero capacity at this resolution")]
    Inconclusive,
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Capacity(#[from] CapacityError),
    #[error(transparent)]
    Eigen(#[from] EigenError),
    #[error(transparent)]
    Inradius(#[from] InradiusError),
    #[error(transparent)]
    Calculus(#[from] CalculusError),
}

impl From<crate::geometry::RasterError> for ExperimentError {
    fn from(e: crate::geometry::RasterError) -> Self {
        ExperimentError::Geometry(e.into())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Settings {
    pub h: f64,
    /// Frame around the domain's bounding box.
    pub margin: f64,
    /// Multiplicative slack on inequality checks.
    pub tol: f64,
    pub seed: u64,
    pub eigen: EigenOptions,
    pub search: SearchOptions,
    /// Resolution of the cube used for extension norm estimates.
    pub extension_cells: usize,
    pub extension_trials: usize,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            h: 1.0 / 32.0,
            margin: 0.25,
            tol: 0.05,
            seed: 0,
            eigen: EigenOptions::default(),
            search: SearchOptions::default(),
            extension_cells: 8,
            extension_trials: 8,
        }
    }
}

impl Settings {
    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("settings serialize")
    }
}

pub fn unit_ball(dim: usize) -> DomainSpec {
    DomainSpec::new(dim, Shape::ball(&vec![0.0; dim], 1.0)).expect("unit ball")
}

fn rho_hat(omega: &CellMask, p: f64, search: &SearchOptions) -> Result<f64, ExperimentError> {
    let req = InradiusRequest { epsilons: None, gammas: &[], radii: &[] };
    Ok(strict_inradius(omega, p, &req, search)?.rho_hat)
}

#[derive(Debug, Clone, Serialize)]
pub struct LowerRecord {
    pub r: f64,
    pub delta: f64,
    pub gamma: f64,
    pub ball_capacity: f64,
    pub center: Vec<f64>,
    pub extension_norm: f64,
    /// `delta / (R^n ||E_R||^p)`.
    pub lhs_extension: f64,
    pub extension_holds: bool,
    /// `lambda R^p / gamma`, or `lambda (1 + R^p) / gamma` when `p >= n`.
    pub empirical_c: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundsReport {
    pub domain: String,
    pub dim: usize,
    pub p: f64,
    pub h: f64,
    pub lambda_hat: f64,
    pub rho_hat: f64,
    pub ball_lambda: f64,
    /// `rho^p lambda`.
    pub upper_lhs: f64,
    /// `ball_lambda / (rho^p lambda)`.
    pub upper_margin: f64,
    pub upper_holds: bool,
    /// Margin below 1: the discrete pair violates the continuum inequality.
    pub negative_slack: bool,
    pub lower: Vec<LowerRecord>,
    pub empirical_c_spread: Option<f64>,
    pub lower_holds: Option<bool>,
    pub converged: bool,
    pub tol: f64,
}

impl BoundsReport {
    pub fn flags(&self) -> Vec<Flag> {
        let mut f = vec![
            Flag::new(
                "upper_bound",
                self.upper_holds,
                format!("rho^p lambda = {} vs ball lambda {} (tol {})", self.upper_lhs, self.ball_lambda, self.tol),
            ),
            Flag::new("eigen_converged", self.converged, String::new()),
        ];
        if let Some(ok) = self.lower_holds {
            f.push(Flag::new(
                "lower_bounds",
                ok,
                format!("empirical C spread {:?}", self.empirical_c_spread),
            ));
        }
        f
    }
}

struct Base {
    omega: CellMask,
    lambda: f64,
    rho: f64,
    ball_lambda: f64,
    converged: bool,
}

fn base(spec: &DomainSpec, p: f64, s: &Settings) -> Result<Base, ExperimentError> {
    let omega = rasterize_with_margin(spec, s.h, s.margin, MaskKind::OpenSet)?;
    let lam = principal_rayleigh(&omega, p, &s.eigen)?;
    let rho = rho_hat(&omega, p, &s.search)?;
    let ball = rasterize_with_margin(&unit_ball(spec.dim), s.h, s.margin, MaskKind::OpenSet)?;
    let (ball_lambda, ball_ok) = if ball.grid == omega.grid && ball.bits == omega.bits {
        (lam.lambda, lam.converged)
    } else {
        let b = principal_rayleigh(&ball, p, &s.eigen)?;
        (b.lambda, b.converged)
    };
    Ok(Base { omega, lambda: lam.lambda, rho, ball_lambda, converged: lam.converged && ball_ok })
}

fn bounds(id: &str, spec: &DomainSpec, p: f64, radii: &[f64], s: &Settings) -> Result<BoundsReport, ExperimentError> {
    let b = base(spec, p, s)?;
    for &r in radii {
        if !(r > b.rho) {
            return Err(ExperimentError::RadiusTooSmall { r, rho: b.rho });
        }
    }
    let n = spec.dim;
    let lhs = b.rho.powf(p) * b.lambda;
    let mut lower = Vec::new();
    if !radii.is_empty() {
        let search = BallSearch::new(&b.omega, p, s.search.clone());
        for &r in radii {
            let (delta, c) = search.delta(r)?;
            let full = search.ball_capacity(r)?;
            let gamma = delta / full;
            let ext = extension_norm_estimate(r, p, n, s.extension_cells, s.extension_trials, s.seed)?.estimate;
            let lhs_extension = delta / (r.powi(n as i32) * ext.powf(p));
            let weight = if p < n as f64 { r.powf(p) } else { 1.0 + r.powf(p) };
            lower.push(LowerRecord {
                r,
                delta,
                gamma,
                ball_capacity: full,
                center: search.node_position(c),
                extension_norm: ext,
                lhs_extension,
                extension_holds: lhs_extension <= b.lambda * (1.0 + s.tol),
                empirical_c: b.lambda * weight / gamma,
            });
        }
    }
    let (spread, lower_holds) = if lower.is_empty() {
        (None, None)
    } else {
        let cs: Vec<f64> = lower.iter().map(|l| l.empirical_c).collect();
        let lo = cs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = cs.iter().cloned().fold(0.0, f64::max);
        let spread = hi / lo;
        let ok = lower.iter().all(|l| l.extension_holds) && lo > 0.0 && hi.is_finite() && spread <= 10.0;
        (Some(spread), Some(ok))
    };
    Ok(BoundsReport {
        domain: id.to_string(),
        dim: n,
        p,
        h: b.omega.grid.h,
        lambda_hat: b.lambda,
        rho_hat: b.rho,
        ball_lambda: b.ball_lambda,
        upper_lhs: lhs,
        upper_margin: b.ball_lambda / lhs,
        upper_holds: lhs <= b.ball_lambda * (1.0 + s.tol),
        negative_slack: b.ball_lambda < lhs,
        lower,
        empirical_c_spread: spread,
        lower_holds,
        converged: b.converged,
        tol: s.tol,
    })
}

/// `rho^p lambda(omega) <= lambda(unit ball)` at matched resolution.
pub fn check_upper_bound(id: &str, spec: &DomainSpec, p: f64, s: &Settings) -> Result<BoundsReport, ExperimentError> {
    bounds(id, spec, p, &[], s)
}

/// Lower bounds through `delta_R` and `gamma_R` for each radius, which must
/// exceed the capacitary inradius estimate.
pub fn check_lower_bounds(
    id: &str,
    spec: &DomainSpec,
    p: f64,
    radii: &[f64],
    s: &Settings,
) -> Result<BoundsReport, ExperimentError> {
    if radii.is_empty() {
        return Err(ExperimentError::Invalid("no radii given".into()));
    }
    bounds(id, spec, p, radii, s)
}

/// Upper bound checks over `(domain, p)` pairs, evaluated in parallel and
/// returned in input order.
pub fn upper_bound_suite(
    domains: &[(String, DomainSpec)],
    ps: &[f64],
    s: &Settings,
) -> Vec<Result<BoundsReport, ExperimentError>> {
    let jobs: Vec<(&String, &DomainSpec, f64)> =
        domains.iter().flat_map(|(id, d)| ps.iter().map(move |&p| (id, d, p))).collect();
    jobs.par_iter().map(|(id, d, p)| check_upper_bound(id, d, *p, s)).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct ContinuityRow {
    pub j: usize,
    pub capacity: f64,
    pub lambda: f64,
    /// `|lambda_j - lambda(D)| / lambda(D)`.
    pub gap: f64,
    pub converged: bool,
    /// `||h_j||_p^p` for the p-harmonic `h_j` with boundary values of the
    /// eigenfunction of `D` (scaled to maximum 1).
    pub harmonic_norm: Option<f64>,
    /// `2^(p-1) (2C + 1) C_p(K_j)` with `C = lambda(D)^(-1/p)`.
    pub harmonic_bound: Option<f64>,
    pub harmonic_holds: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ContinuityCurve {
    pub p: f64,
    pub lambda_d: f64,
    pub rows: Vec<ContinuityRow>,
    /// Eigenvalues nonincreasing in `j` and bounded below by `lambda(D)`, to 1e-6 relative.
    pub monotone: bool,
    pub last_gap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ContinuityReport {
    pub domain: String,
    pub h: f64,
    pub curves: Vec<ContinuityCurve>,
}

impl ContinuityReport {
    pub fn curve(&self, p: f64) -> Option<&ContinuityCurve> {
        self.curves.iter().find(|c| c.p == p)
    }

    pub fn flags(&self) -> Vec<Flag> {
        let mut f = Vec::new();
        for c in &self.curves {
            f.push(Flag::new(format!("monotone_p{}", c.p), c.monotone, format!("last gap {}", c.last_gap)));
            if c.rows.iter().any(|r| r.harmonic_holds.is_some()) {
                let ok = c.rows.iter().all(|r| r.harmonic_holds != Some(false));
                f.push(Flag::new(format!("harmonic_bound_p{}", c.p), ok, String::new()));
            }
        }
        f
    }
}

const MONOTONE_SLACK: f64 = 1e-6;

/// Eigenvalues of `D` minus each obstacle against the obstacles' capacities.
/// With `diagnostic`, also the p-harmonic decomposition bound for each one.
pub fn continuity_experiment(
    id: &str,
    d: &DomainSpec,
    obstacles: &[DomainSpec],
    ps: &[f64],
    diagnostic: bool,
    s: &Settings,
) -> Result<ContinuityReport, ExperimentError> {
    let grid = grid_for(d, s.h, s.margin)?;
    let dmask = rasterize(d, &grid, MaskKind::OpenSet)?;
    let mut ks = Vec::new();
    for k in obstacles {
        if k.dim != d.dim {
            return Err(ExperimentError::BadObstacles);
        }
        let km = rasterize(k, &grid, MaskKind::CompactSet)?;
        if km.clipped || !km.is_subset_of(&dmask) {
            return Err(ExperimentError::BadObstacles);
        }
        if let Some(prev) = ks.last() {
            if !km.is_subset_of(prev) {
                return Err(ExperimentError::BadObstacles);
            }
        }
        ks.push(km);
    }
    let domains: Vec<CellMask> = ks
        .iter()
        .map(|k| {
            let bits = dmask.bits.iter().zip(&k.bits).map(|(&a, &b)| a && !b).collect();
            CellMask { grid: grid.clone(), bits, kind: MaskKind::OpenSet, clipped: false }
        })
        .collect();
    let curves: Vec<Result<ContinuityCurve, ExperimentError>> = ps
        .par_iter()
        .map(|&p| {
            let base = principal_rayleigh(&dmask, p, &s.eigen)?;
            let ld = base.lambda;
            let phi = if diagnostic {
                let m = base.eigenfield.max_abs().max(1e-300);
                let v = base.eigenfield.values.iter().map(|x| x.max(0.0) / m).collect();
                Some(ScalarField::new(&grid, v)?)
            } else {
                None
            };
            let mut rows = Vec::new();
            for (j, (k, dj)) in ks.iter().zip(&domains).enumerate() {
                let cap = capacity(k, p, CapacityKind::Sobolev, &s.search.solver)?.value;
                let e = principal_rayleigh(dj, p, &s.eigen)?;
                let (mut hn, mut hb, mut hok) = (None, None, None);
                if let Some(phi) = &phi {
                    let sol = p_dirichlet_solve(dj, p, phi, None, &s.search.solver)?;
                    let norm = lp_norm_pow(&sol.field, p, Some(dj))?;
                    let c = ld.powf(-1.0 / p);
                    let bound = 2f64.powf(p - 1.0) * (2.0 * c + 1.0) * cap;
                    hn = Some(norm);
                    hb = Some(bound);
                    hok = Some(norm <= bound * (1.0 + s.tol));
                }
                rows.push(ContinuityRow {
                    j: j + 1,
                    capacity: cap,
                    lambda: e.lambda,
                    gap: (e.lambda - ld).abs() / ld,
                    converged: e.converged,
                    harmonic_norm: hn,
                    harmonic_bound: hb,
                    harmonic_holds: hok,
                });
            }
            let mut monotone = rows.iter().all(|r| r.lambda >= ld * (1.0 - MONOTONE_SLACK));
            for w in rows.windows(2) {
                monotone &= w[1].lambda <= w[0].lambda * (1.0 + MONOTONE_SLACK);
            }
            let last_gap = rows.last().map(|r| r.gap).unwrap_or(0.0);
            Ok(ContinuityCurve { p, lambda_d: ld, rows, monotone, last_gap })
        })
        .collect();
    Ok(ContinuityReport { domain: id.to_string(), h: grid.h, curves: curves.into_iter().collect::<Result<_, _>>()? })
}

/// Obstacles `K_j = closed ball(center, radius 2^-j)` for `j = 1..=count`.
pub fn shrinking_balls(center: &[f64], count: usize) -> Vec<DomainSpec> {
    (1..=count)
        .map(|j| DomainSpec::new(center.len(), Shape::ball(center, 2f64.powi(-(j as i32)))).expect("ball"))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct PoincareReport {
    pub side: f64,
    pub dim: usize,
    pub p: f64,
    pub h: f64,
    pub samples: usize,
    /// Largest `||f||_p / ||grad f||_p` over the samples.
    pub max_ratio: f64,
    pub capacity: f64,
    pub extension_norm: f64,
    /// `(side^n)^(1/p) ||E|| / C_p(K)^(1/p)`.
    pub rhs: f64,
    /// `rhs / max_ratio`.
    pub slack: f64,
    pub holds: bool,
    pub seed: u64,
}

impl PoincareReport {
    pub fn flags(&self) -> Vec<Flag> {
        vec![Flag::new("vanishing_set_poincare", self.holds, format!("slack {}", self.slack))]
    }
}

// Sum of 8 Gaussian bumps with widths in [4h, side/4].
fn random_field(g: &Grid, side: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let dim = g.dim;
    let smin = 4.0 * g.h;
    let smax = (side / 4.0).max(smin * 1.000001);
    let bumps: Vec<(Vec<f64>, f64, f64)> = (0..8)
        .map(|_| {
            let c: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.0..side)).collect();
            (c, rng.gen_range(smin..smax), rng.gen_range(-1.0..1.0))
        })
        .collect();
    (0..g.n_nodes())
        .map(|i| {
            let x = g.node_position(i);
            bumps
                .iter()
                .map(|(c, w, a)| {
                    let r2: f64 = (0..dim).map(|d| (x[d] - c[d]).powi(2)).sum();
                    a * (-r2 / (2.0 * w * w)).exp()
                })
                .sum()
        })
        .collect()
}

fn smoothstep(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * s * (s * (6.0 * s - 15.0) + 10.0)
}

/// Largest `||f||_p / ||grad f||_p` over random smooth fields on `(0, side)^n`
/// that vanish near `K`, against the bound by the capacity of `K`.
pub fn vanishing_set_poincare_check(
    side: f64,
    k: &DomainSpec,
    p: f64,
    samples: usize,
    s: &Settings,
) -> Result<PoincareReport, ExperimentError> {
    let n = k.dim;
    let m = (side / s.h).round().max(1.0) as usize;
    let g = Grid::new(n, &vec![0.0; n], side / m as f64, &vec![m; n]).map_err(GeometryError::from)?;
    let km = rasterize(k, &g, MaskKind::CompactSet)?;
    if km.is_empty() || km.clipped {
        return Err(ExperimentError::Invalid("K must be nonempty and inside the cube".into()));
    }
    let kw = rasterize_with_margin(k, g.h, s.search.window_margin, MaskKind::CompactSet)?;
    let cap = capacity(&kw, p, CapacityKind::Sobolev, &s.search.solver)?.value;
    if !(cap > 1e-12) {
        return Err(ExperimentError::Inconclusive);
    }
    let d2 = edt_squared(g.node_dims(), &k_nodes(&km));
    let width = (4.0 * g.h).max(side / 8.0);
    let cut: Vec<f64> = d2.iter().map(|&d| smoothstep((d.sqrt() * g.h - g.h) / width)).collect();
    let ratios: Vec<f64> = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
            rng.set_stream(i);
            let f: Vec<f64> = random_field(&g, side, &mut rng).iter().zip(&cut).map(|(a, b)| a * b).collect();
            let f = ScalarField::new(&g, f).expect("grid");
            let num = lp_norm(&f, p, None).expect("p");
            let den = lp_norm(&crate::calculus::gradient(&f), p, None).expect("p");
            if den > 0.0 {
                num / den
            } else {
                0.0
            }
        })
        .collect();
    let max_ratio = ratios.iter().cloned().fold(0.0, f64::max);
    let ext = extension_norm_estimate(side, p, n, s.extension_cells, s.extension_trials, s.seed)?.estimate;
    let rhs = side.powi(n as i32).powf(1.0 / p) * ext / cap.powf(1.0 / p);
    Ok(PoincareReport {
        side,
        dim: n,
        p,
        h: g.h,
        samples,
        max_ratio,
        capacity: cap,
        extension_norm: ext,
        rhs,
        slack: rhs / max_ratio,
        holds: max_ratio <= rhs,
        seed: s.seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// `(0, L)^2`.
    Squares,
    /// `(0, 1) x (0, L)`.
    Strips,
    /// `(0, L)^2` minus closed disks of radius 0.1 centered at the half-integer lattice.
    PerforatedPlane,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Squares => "squares",
            Family::Strips => "strips",
            Family::PerforatedPlane => "perforated_plane",
        }
    }

    pub fn parse(s: &str) -> Option<Family> {
        match s {
            "squares" => Some(Family::Squares),
            "strips" => Some(Family::Strips),
            "perforated_plane" | "perforated" => Some(Family::PerforatedPlane),
            _ => None,
        }
    }

    pub fn spec(self, l: f64) -> DomainSpec {
        let shape = match self {
            Family::Squares => Shape::cube(&[0.0, 0.0], &[l, l]),
            Family::Strips => Shape::cube(&[0.0, 0.0], &[1.0, l]),
            Family::PerforatedPlane => {
                let k = l.floor().max(1.0) as usize;
                let mut holes = Vec::with_capacity(k * k);
                for i in 0..k {
                    for j in 0..k {
                        holes.push(Shape::ball(&[i as f64 + 0.5, j as f64 + 0.5], 0.1));
                    }
                }
                Shape::cube(&[0.0, 0.0], &[l, l]).minus(Shape::Union(holes))
            }
        };
        DomainSpec::new(2, shape).expect("family member")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Vanishing,
    Growing,
    Bounded,
    Unclear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// Eigenvalue bounded below and inradius bounded.
    Holds,
    /// Eigenvalue tends to zero while the inradius grows.
    FailsInLimit,
    Inconclusive,
}

#[derive(Debug, Clone, Serialize)]
pub struct FamilyRow {
    pub l: f64,
    pub lambda: f64,
    pub rho: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct FamilySummary {
    pub family: Family,
    pub p: f64,
    pub rows: Vec<FamilyRow>,
    pub lambda_trend: Trend,
    pub rho_trend: Trend,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceReport {
    pub h: f64,
    pub summaries: Vec<FamilySummary>,
}

impl EquivalenceReport {
    pub fn flags(&self) -> Vec<Flag> {
        self.summaries
            .iter()
            .map(|s| {
                Flag::new(
                    format!("{}_p{}", s.family.name(), s.p),
                    s.verdict != Verdict::Inconclusive,
                    format!("{:?}", s.verdict),
                )
            })
            .collect()
    }
}

/// Log-log slope of the eigenvalue in `L` at or below this reads as decay to zero.
pub const VANISHING_SLOPE: f64 = -1.0;
/// Ratio window for successive eigenvalues of a stabilized family.
pub const STABLE_RATIO: (f64, f64) = (0.8, 1.25);

pub fn lambda_trend(rows: &[FamilyRow]) -> Trend {
    if rows.len() < 2 {
        return Trend::Unclear;
    }
    let (a, b) = (&rows[0], &rows[rows.len() - 1]);
    let slope = (b.lambda / a.lambda).ln() / (b.l / a.l).ln();
    let last = b.lambda / rows[rows.len() - 2].lambda;
    if slope <= VANISHING_SLOPE {
        Trend::Vanishing
    } else if slope > 0.5 * VANISHING_SLOPE && last >= STABLE_RATIO.0 && last <= STABLE_RATIO.1 {
        Trend::Bounded
    } else {
        Trend::Unclear
    }
}

/// Inradius growing at least like `L / 4`, or its last step within `2h`.
pub fn rho_trend(rows: &[FamilyRow], h: f64) -> Trend {
    if rows.len() < 2 {
        return Trend::Unclear;
    }
    let (a, b) = (&rows[0], &rows[rows.len() - 1]);
    let prev = &rows[rows.len() - 2];
    if b.rho - a.rho >= 0.25 * (b.l - a.l) {
        Trend::Growing
    } else if (b.rho - prev.rho).abs() <= 2.0 * h {
        Trend::Bounded
    } else {
        Trend::Unclear
    }
}

pub fn verdict(lambda: Trend, rho: Trend) -> Verdict {
    match (lambda, rho) {
        (Trend::Bounded, Trend::Bounded) => Verdict::Holds,
        (Trend::Vanishing, Trend::Growing) => Verdict::FailsInLimit,
        _ => Verdict::Inconclusive,
    }
}

/// Eigenvalue and inradius along each family and size list, for each `p`.
pub fn equivalence_suite(
    families: &[(Family, Vec<f64>)],
    ps: &[f64],
    s: &Settings,
) -> Result<EquivalenceReport, ExperimentError> {
    let mut jobs = Vec::new();
    for (f, ls) in families {
        for &p in ps {
            for &l in ls {
                jobs.push((*f, p, l));
            }
        }
    }
    let rows: Vec<Result<FamilyRow, ExperimentError>> = jobs
        .par_iter()
        .map(|&(f, p, l)| {
            let omega = rasterize_with_margin(&f.spec(l), s.h, s.margin, MaskKind::OpenSet)?;
            let e = principal_rayleigh(&omega, p, &s.eigen)?;
            let rho = rho_hat(&omega, p, &s.search)?;
            Ok(FamilyRow { l, lambda: e.lambda, rho, converged: e.converged })
        })
        .collect();
    let mut rows = rows.into_iter();
    let mut summaries = Vec::new();
    for (f, ls) in families {
        for &p in ps {
            let rs: Vec<FamilyRow> = rows.by_ref().take(ls.len()).collect::<Result<_, _>>()?;
            let lt = lambda_trend(&rs);
            let rt = rho_trend(&rs, s.h);
            summaries.push(FamilySummary { family: *f, p, rows: rs, lambda_trend: lt, rho_trend: rt, verdict: verdict(lt, rt) });
        }
    }
    Ok(EquivalenceReport { h: s.h, summaries })
}

/// Wrap a result in a report document with the settings as provenance.
pub fn document(command: &str, input: Value, s: &Settings, results: &impl Serialize, flags: Vec<Flag>) -> Report {
    let grid = json!({ "h": s.h, "margin": s.margin });
    let mut inp = json!({ "command": command, "settings": s.to_value() });
    if let (Value::Object(a), Value::Object(b)) = (&mut inp, input) {
        a.extend(b);
    }
    Report::new(inp, s.seed, grid, serde_json::to_value(results).expect("results serialize"), flags)
}
