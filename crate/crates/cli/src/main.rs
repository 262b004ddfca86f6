use std::path::{Path, PathBuf};
use std::process::ExitCode;

use capradius::capacity::{capacity, CapacityKind};
use capradius::eigen::principal_rayleigh;
use capradius::experiments::{
    check_lower_bounds, continuity_experiment, document, equivalence_suite, shrinking_balls, upper_bound_suite,
    vanishing_set_poincare_check, ExperimentError, Family, Settings,
};
use capradius::geometry::{rasterize_with_margin, DomainSpec, MaskKind};
use capradius::inradius::{strict_inradius, BallSearch, InradiusRequest, SearchOptions};
use capradius::report::{content_hash, curve_csv, sorted, CurveRow, Flag, Report};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "capradius", version, about = "Capacities, p-Laplacian eigenvalues and capacitary inradius on grids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sobolev or Wiener p-capacity of a compact set.
    Capacity(SpecArgs),
    /// First Dirichlet eigenvalue of the p-Laplacian.
    Eigen(SpecArgs),
    /// Capacitary inradius, plus optional gamma and delta curves.
    Inradius(InradiusArgs),
    /// Inequality checks.
    Verify {
        #[command(subcommand)]
        check: Verify,
    },
    /// Tabulate one quantity along one varied axis.
    Sweep(SweepArgs),
}

#[derive(Subcommand)]
enum Verify {
    Upper(UpperArgs),
    Lower(LowerArgs),
    Continuity(ContinuityArgs),
    Poincare(PoincareArgs),
    Equivalence(EquivalenceArgs),
}

#[derive(Args, Serialize, Clone)]
struct Common {
    #[arg(long, default_value_t = 1.0 / 32.0, value_parser = positive)]
    h: f64,
    /// Frame around the domain's bounding box.
    #[arg(long, default_value_t = 0.25, value_parser = nonnegative)]
    margin: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Multiplicative slack on inequality checks.
    #[arg(long, default_value_t = 0.05, value_parser = nonnegative)]
    tol: f64,
    #[arg(long, value_enum, default_value_t = Kind::Sobolev)]
    kind: Kind,
    /// Spacing of candidate ball centers, in grid nodes.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pitch: u64,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    #[serde(skip)]
    jobs: Option<usize>,
    #[arg(long, default_value = ".")]
    #[serde(skip)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(ValueEnum, Serialize, Clone, Copy, PartialEq)]
#[serde(rename_all = "lowercase")]
enum Kind {
    Sobolev,
    Wiener,
}

#[derive(ValueEnum, Serialize, Clone, Copy, PartialEq)]
#[serde(rename_all = "lowercase")]
enum Format {
    Json,
    Csv,
}

#[derive(ValueEnum, Serialize, Clone, Copy, PartialEq)]
#[serde(rename_all = "snake_case")]
enum FamilyArg {
    Squares,
    Strips,
    PerforatedPlane,
}

impl FamilyArg {
    fn family(self) -> Family {
        match self {
            FamilyArg::Squares => Family::Squares,
            FamilyArg::Strips => Family::Strips,
            FamilyArg::PerforatedPlane => Family::PerforatedPlane,
        }
    }
}

#[derive(Args, Serialize)]
struct SpecArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, required = true, value_delimiter = ',', value_parser = exponent)]
    p: Vec<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
}

#[derive(Args, Serialize)]
struct InradiusArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, required = true, value_delimiter = ',', value_parser = exponent)]
    p: Vec<f64>,
    /// Decreasing capacity thresholds; defaults to fractions of one cell's capacity.
    #[arg(long, value_delimiter = ',', value_parser = positive)]
    eps: Vec<f64>,
    #[arg(long = "gamma-grid", value_delimiter = ',', value_parser = unit_open)]
    gamma_grid: Vec<f64>,
    #[arg(long = "R", value_delimiter = ',', value_parser = positive)]
    radii: Vec<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
}

#[derive(Args, Serialize)]
struct UpperArgs {
    #[arg(long, required = true)]
    spec: Vec<PathBuf>,
    #[arg(long, required = true, value_delimiter = ',', value_parser = exponent)]
    p: Vec<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
}

#[derive(Args, Serialize)]
struct LowerArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, required = true, value_delimiter = ',', value_parser = exponent)]
    p: Vec<f64>,
    #[arg(long = "R", required = true, value_delimiter = ',', value_parser = positive)]
    radii: Vec<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
}

#[derive(Args, Serialize)]
struct ContinuityArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, required = true, value_delimiter = ',', value_parser = exponent)]
    p: Vec<f64>,
    /// Obstacle files, largest first. Without any, closed balls of radius 2^-j around --center.
    #[arg(long)]
    obstacle: Vec<PathBuf>,
    #[arg(long, default_value_t = 6)]
    levels: usize,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    center: Vec<f64>,
    /// Also bound the p-harmonic part of the eigenfunction.
    #[arg(long)]
    diagnostic: bool,
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
}

#[derive(Args, Serialize)]
struct PoincareArgs {
    /// The vanishing set.
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    side: f64,
    #[arg(long, required = true, value_delimiter = ',', value_parser = exponent)]
    p: Vec<f64>,
    #[arg(long, default_value_t = 200)]
    samples: usize,
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
}

#[derive(Args, Serialize)]
struct EquivalenceArgs {
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [FamilyArg::Squares, FamilyArg::Strips, FamilyArg::PerforatedPlane])]
    family: Vec<FamilyArg>,
    #[arg(long = "L", value_delimiter = ',', default_values_t = [1.0, 2.0, 4.0, 8.0], value_parser = positive)]
    lengths: Vec<f64>,
    #[arg(long, required = true, value_delimiter = ',', value_parser = exponent)]
    p: Vec<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
}

#[derive(ValueEnum, Serialize, Clone, Copy, PartialEq, Debug)]
#[serde(rename_all = "kebab-case")]
enum Quantity {
    Eigen,
    Capacity,
    Rho,
    GammaRadius,
    EpsilonRadius,
    Delta,
}

#[derive(Args, Serialize)]
struct SweepArgs {
    #[arg(long, conflicts_with = "family")]
    spec: Option<PathBuf>,
    /// Domain family, for sweeps over L.
    #[arg(long, value_enum)]
    family: Option<FamilyArg>,
    /// `AXIS=V1,V2,...` with AXIS one of h, p, R, L, gamma, eps. Give exactly one.
    #[arg(long)]
    vary: Vec<String>,
    #[arg(long, value_enum)]
    quantity: Option<Quantity>,
    #[arg(long, value_delimiter = ',', value_parser = exponent)]
    p: Vec<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
}

fn positive(s: &str) -> Result<f64, String> {
    let v = number(s)?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{s} is not a positive number"))
    }
}

fn nonnegative(s: &str) -> Result<f64, String> {
    let v = number(s)?;
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{s} is not a nonnegative number"))
    }
}

fn exponent(s: &str) -> Result<f64, String> {
    let v = number(s)?;
    if v > 1.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("p = {s} is not in (1, inf)"))
    }
}

fn unit_open(s: &str) -> Result<f64, String> {
    let v = number(s)?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("{s} is not in (0, 1)"))
    }
}

/// Decimal or `a/b`.
fn number(s: &str) -> Result<f64, String> {
    let bad = || format!("{s} is not a number");
    match s.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|_| bad())?;
            let b: f64 = b.trim().parse().map_err(|_| bad())?;
            Ok(a / b)
        }
        None => s.trim().parse().map_err(|_| bad()),
    }
}

enum Failure {
    Usage(String),
    Solver(String),
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::RadiusTooSmall { .. }
            | ExperimentError::BadObstacles
            | ExperimentError::Invalid(_)
            | ExperimentError::Geometry(_) => Failure::Usage(e.to_string()),
            other => Failure::Solver(other.to_string()),
        }
    }
}

fn solver<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Solver(e.to_string())
}

#[derive(Default)]
struct Outcome {
    files: Vec<(String, String)>,
    passed: bool,
    converged: bool,
}

impl Outcome {
    fn new() -> Outcome {
        Outcome { files: Vec::new(), passed: true, converged: true }
    }

    /// Queue `name.json`, or one CSV per curve.
    fn emit(&mut self, name: &str, rep: &Report, curves: Vec<(String, Vec<CurveRow>)>, format: Format) {
        self.passed &= rep.passed();
        match format {
            Format::Json => self.files.push((format!("{name}.json"), rep.to_json())),
            Format::Csv => {
                let comment = provenance(rep);
                for (suffix, rows) in curves {
                    let file = if suffix.is_empty() { format!("{name}.csv") } else { format!("{name}_{suffix}.csv") };
                    self.files.push((file, curve_csv(&rows, Some(&comment))));
                }
            }
        }
    }
}

fn provenance(rep: &Report) -> String {
    let input = sorted(&rep.input);
    format!("input_hash={} input={}", content_hash(&input), serde_json::to_string(&input).expect("json"))
}

fn read_spec(path: &Path) -> Result<DomainSpec, Failure> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("--spec {}: {e}", path.display())))?;
    DomainSpec::parse(&text).map_err(|e| Failure::Usage(format!("--spec {}: {e}", path.display())))
}

fn settings(c: &Common) -> Settings {
    let kind = match c.kind {
        Kind::Sobolev => CapacityKind::Sobolev,
        Kind::Wiener => CapacityKind::Wiener,
    };
    Settings {
        h: c.h,
        margin: c.margin,
        tol: c.tol,
        seed: c.seed,
        search: SearchOptions { kind, center_pitch: c.pitch as usize, ..Default::default() },
        ..Default::default()
    }
}

fn config(args: &impl Serialize) -> Value {
    serde_json::to_value(args).expect("arguments serialize")
}

fn spec_input(path: &Path, spec: &DomainSpec) -> Value {
    json!({ "path": path.display().to_string(), "domain": spec.to_value() })
}

fn row(parameter: f64, value: f64) -> CurveRow {
    CurveRow { parameter, value, tolerance: None, pass: None }
}

fn run_capacity(a: &SpecArgs) -> Result<Outcome, Failure> {
    let spec = read_spec(&a.spec)?;
    let s = settings(&a.common);
    let k = rasterize_with_margin(&spec, s.h, s.margin, MaskKind::CompactSet).map_err(|e| Failure::Usage(e.to_string()))?;
    let mut out = Outcome::new();
    let mut results = Vec::new();
    let mut flags = Vec::new();
    for &p in &a.p {
        let est = capacity(&k, p, s.search.kind, &s.search.solver).map_err(solver)?;
        out.converged &= est.solver.converged;
        flags.push(Flag::new(format!("converged_p{p}"), est.solver.converged, ""));
        results.push(est);
    }
    let rows = results.iter().map(|e| row(e.p, e.value)).collect();
    let input = json!({ "config": config(a), "spec": spec_input(&a.spec, &spec) });
    let rep = document("capacity", input, &s, &json!({ "estimates": results }), flags);
    out.emit("capacity", &rep, vec![(String::new(), rows)], a.common.format);
    Ok(out)
}

fn run_eigen(a: &SpecArgs) -> Result<Outcome, Failure> {
    let spec = read_spec(&a.spec)?;
    let s = settings(&a.common);
    let om = rasterize_with_margin(&spec, s.h, s.margin, MaskKind::OpenSet).map_err(|e| Failure::Usage(e.to_string()))?;
    let mut out = Outcome::new();
    let mut results = Vec::new();
    let mut flags = Vec::new();
    for &p in &a.p {
        let est = principal_rayleigh(&om, p, &s.eigen).map_err(solver)?;
        out.converged &= est.converged;
        flags.push(Flag::new(format!("converged_p{p}"), est.converged, format!("residual {}", est.residual)));
        results.push(est);
    }
    let rows = results.iter().map(|e| row(e.p, e.lambda)).collect();
    let input = json!({ "config": config(a), "spec": spec_input(&a.spec, &spec) });
    let rep = document("eigen", input, &s, &json!({ "estimates": results }), flags);
    out.emit("eigen", &rep, vec![(String::new(), rows)], a.common.format);
    Ok(out)
}

fn run_inradius(a: &InradiusArgs) -> Result<Outcome, Failure> {
    let spec = read_spec(&a.spec)?;
    if !a.eps.is_empty() && a.eps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Failure::Usage("--eps must be strictly decreasing".into()));
    }
    let s = settings(&a.common);
    let om = rasterize_with_margin(&spec, s.h, s.margin, MaskKind::OpenSet).map_err(|e| Failure::Usage(e.to_string()))?;
    let req = InradiusRequest {
        epsilons: if a.eps.is_empty() { None } else { Some(&a.eps) },
        gammas: &a.gamma_grid,
        radii: &a.radii,
    };
    let mut reports = Vec::new();
    let mut curves = Vec::new();
    for &p in &a.p {
        let r = strict_inradius(&om, p, &req, &s.search).map_err(solver)?;
        curves.push((format!("p{p}_epsilon"), r.epsilon_curve.iter().map(|e| row(e.epsilon, e.radius)).collect()));
        if !r.gamma_curve.is_empty() {
            curves.push((format!("p{p}_gamma"), r.gamma_curve.iter().map(|g| row(g.gamma, g.radius)).collect()));
        }
        if !r.deltas.is_empty() {
            curves.push((format!("p{p}_delta"), r.deltas.iter().map(|d| row(d.r, d.delta)).collect()));
        }
        reports.push(r);
    }
    let mut out = Outcome::new();
    let input = json!({ "config": config(a), "spec": spec_input(&a.spec, &spec) });
    let rep = document("inradius", input, &s, &json!({ "reports": reports }), vec![]);
    out.emit("inradius", &rep, curves, a.common.format);
    Ok(out)
}

fn run_upper(a: &UpperArgs) -> Result<Outcome, Failure> {
    let mut domains = Vec::new();
    let mut specs = Vec::new();
    for path in &a.spec {
        let spec = read_spec(path)?;
        let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        specs.push(spec_input(path, &spec));
        domains.push((id, spec));
    }
    let s = settings(&a.common);
    let reports = upper_bound_suite(&domains, &a.p, &s).into_iter().collect::<Result<Vec<_>, _>>()?;
    let mut out = Outcome::new();
    let mut flags = Vec::new();
    let mut curves: Vec<(String, Vec<CurveRow>)> = Vec::new();
    for r in &reports {
        out.converged &= r.converged;
        for f in r.flags() {
            flags.push(Flag::new(format!("{}_p{}_{}", r.domain, r.p, f.name), f.pass, f.detail));
        }
        let curve = CurveRow {
            parameter: r.p,
            value: r.upper_margin,
            tolerance: Some(r.tol),
            pass: Some(r.upper_holds),
        };
        match curves.iter_mut().find(|(d, _)| *d == r.domain) {
            Some((_, rows)) => rows.push(curve),
            None => curves.push((r.domain.clone(), vec![curve])),
        }
    }
    let input = json!({ "config": config(a), "specs": specs });
    let rep = document("verify upper", input, &s, &json!({ "checks": reports }), flags);
    out.emit("verify_upper", &rep, curves, a.common.format);
    Ok(out)
}

fn run_lower(a: &LowerArgs) -> Result<Outcome, Failure> {
    let spec = read_spec(&a.spec)?;
    let s = settings(&a.common);
    let id = a.spec.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let mut out = Outcome::new();
    let mut reports = Vec::new();
    let mut flags = Vec::new();
    let mut curves = Vec::new();
    for &p in &a.p {
        let r = check_lower_bounds(&id, &spec, p, &a.radii, &s)?;
        out.converged &= r.converged;
        for f in r.flags() {
            flags.push(Flag::new(format!("p{p}_{}", f.name), f.pass, f.detail));
        }
        let rows = r
            .lower
            .iter()
            .map(|l| CurveRow {
                parameter: l.r,
                value: l.lhs_extension,
                tolerance: Some(r.lambda_hat * (1.0 + r.tol)),
                pass: Some(l.extension_holds),
            })
            .collect();
        curves.push((format!("p{p}"), rows));
        reports.push(r);
    }
    let input = json!({ "config": config(a), "spec": spec_input(&a.spec, &spec) });
    let rep = document("verify lower", input, &s, &json!({ "checks": reports }), flags);
    out.emit("verify_lower", &rep, curves, a.common.format);
    Ok(out)
}

fn run_continuity(a: &ContinuityArgs) -> Result<Outcome, Failure> {
    let spec = read_spec(&a.spec)?;
    let mut obstacles = Vec::new();
    let mut obstacle_inputs = Vec::new();
    for path in &a.obstacle {
        let k = read_spec(path)?;
        obstacle_inputs.push(spec_input(path, &k));
        obstacles.push(k);
    }
    if obstacles.is_empty() {
        let center = if a.center.is_empty() { vec![0.0; spec.dim] } else { a.center.clone() };
        if center.len() != spec.dim {
            return Err(Failure::Usage(format!("--center needs {} coordinates", spec.dim)));
        }
        if a.levels == 0 {
            return Err(Failure::Usage("--levels must be positive".into()));
        }
        obstacles = shrinking_balls(&center, a.levels);
        obstacle_inputs = obstacles.iter().map(|k| k.to_value()).collect();
    }
    let s = settings(&a.common);
    let r = continuity_experiment(
        &a.spec.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
        &spec,
        &obstacles,
        &a.p,
        a.diagnostic,
        &s,
    )?;
    let mut out = Outcome::new();
    out.converged = r.curves.iter().all(|c| c.rows.iter().all(|r| r.converged));
    let curves = r
        .curves
        .iter()
        .map(|c| (format!("p{}", c.p), c.rows.iter().map(|r| row(r.j as f64, r.lambda)).collect()))
        .collect();
    let input = json!({ "config": config(a), "spec": spec_input(&a.spec, &spec), "obstacles": obstacle_inputs });
    let rep = document("verify continuity", input, &s, &r, r.flags());
    out.emit("verify_continuity", &rep, curves, a.common.format);
    Ok(out)
}

fn run_poincare(a: &PoincareArgs) -> Result<Outcome, Failure> {
    let spec = read_spec(&a.spec)?;
    let s = settings(&a.common);
    let mut out = Outcome::new();
    let mut results = Vec::new();
    let mut flags = Vec::new();
    let mut rows = Vec::new();
    for &p in &a.p {
        match vanishing_set_poincare_check(a.side, &spec, p, a.samples, &s) {
            Ok(r) => {
                flags.extend(r.flags().into_iter().map(|f| Flag::new(format!("p{p}_{}", f.name), f.pass, f.detail)));
                rows.push(CurveRow { parameter: p, value: r.max_ratio, tolerance: Some(r.rhs), pass: Some(r.holds) });
                results.push(serde_json::to_value(&r).expect("report"));
            }
            Err(ExperimentError::Inconclusive) => {
                flags.push(Flag::new(format!("p{p}_vanishing_set_poincare"), false, "inconclusive: zero capacity"));
                results.push(json!({ "p": p, "inconclusive": true }));
            }
            Err(e) => return Err(e.into()),
        }
    }
    let input = json!({ "config": config(a), "spec": spec_input(&a.spec, &spec) });
    let rep = document("verify poincare", input, &s, &json!({ "checks": results }), flags);
    out.emit("verify_poincare", &rep, vec![(String::new(), rows)], a.common.format);
    Ok(out)
}

fn run_equivalence(a: &EquivalenceArgs) -> Result<Outcome, Failure> {
    if a.lengths.len() < 2 {
        return Err(Failure::Usage("--L needs at least two sizes".into()));
    }
    let s = settings(&a.common);
    let families: Vec<(Family, Vec<f64>)> = a.family.iter().map(|f| (f.family(), a.lengths.clone())).collect();
    let r = equivalence_suite(&families, &a.p, &s)?;
    let mut out = Outcome::new();
    out.converged = r.summaries.iter().all(|f| f.rows.iter().all(|r| r.converged));
    let curves = r
        .summaries
        .iter()
        .map(|f| (format!("{}_p{}", f.family.name(), f.p), f.rows.iter().map(|r| row(r.l, r.lambda)).collect()))
        .collect();
    let input = json!({ "config": config(a) });
    let rep = document("verify equivalence", input, &s, &r, r.flags());
    out.emit("verify_equivalence", &rep, curves, a.common.format);
    Ok(out)
}

const AXES: [&str; 6] = ["h", "p", "R", "L", "gamma", "eps"];

fn run_sweep(a: &SweepArgs) -> Result<Outcome, Failure> {
    let [axis] = a.vary.as_slice() else {
        return Err(Failure::Usage(format!("--vary must be given exactly once, got {}", a.vary.len())));
    };
    let Some((name, list)) = axis.split_once('=') else {
        return Err(Failure::Usage(format!("--vary {axis}: expected AXIS=V1,V2,...")));
    };
    if !AXES.contains(&name) {
        return Err(Failure::Usage(format!("--vary {axis}: unknown axis {name}")));
    }
    let values = list
        .split(',')
        .filter(|v| !v.trim().is_empty())
        .map(|v| if name == "p" { exponent(v) } else { positive(v) })
        .collect::<Result<Vec<f64>, _>>()
        .map_err(|e| Failure::Usage(format!("--vary: {e}")))?;
    if values.is_empty() {
        return Err(Failure::Usage("--vary: empty value list".into()));
    }
    let quantity = match (name, a.quantity) {
        ("gamma", None | Some(Quantity::GammaRadius)) => Quantity::GammaRadius,
        ("eps", None | Some(Quantity::EpsilonRadius)) => Quantity::EpsilonRadius,
        ("R", None | Some(Quantity::Delta)) => Quantity::Delta,
        (_, None) => Quantity::Eigen,
        ("h" | "p" | "L", Some(q @ (Quantity::Eigen | Quantity::Capacity | Quantity::Rho))) => q,
        (_, Some(q)) => return Err(Failure::Usage(format!("--quantity {q:?} cannot be swept over {name}"))),
    };
    if name == "gamma" && values.iter().any(|g| *g >= 1.0) {
        return Err(Failure::Usage("--vary gamma: values must lie in (0, 1)".into()));
    }
    let p_fixed = match (name, a.p.as_slice()) {
        ("p", []) => None,
        ("p", _) => return Err(Failure::Usage("--p conflicts with --vary p".into())),
        (_, [p]) => Some(*p),
        _ => return Err(Failure::Usage("--p must be a single exponent".into())),
    };
    let spec = match (name, &a.spec, a.family) {
        ("L", None, Some(_)) => None,
        ("L", _, _) => return Err(Failure::Usage("--vary L needs --family and no --spec".into())),
        (_, Some(path), None) => Some(read_spec(path)?),
        _ => return Err(Failure::Usage("--spec is required".into())),
    };
    let s = settings(&a.common);
    let mut converged = true;
    let mut rows = Vec::new();
    let point = |spec: &DomainSpec, h: f64, p: f64, converged: &mut bool| -> Result<f64, Failure> {
        let kind = if quantity == Quantity::Capacity { MaskKind::CompactSet } else { MaskKind::OpenSet };
        let m = rasterize_with_margin(spec, h, s.margin, kind).map_err(|e| Failure::Usage(e.to_string()))?;
        Ok(match quantity {
            Quantity::Eigen => {
                let e = principal_rayleigh(&m, p, &s.eigen).map_err(solver)?;
                *converged &= e.converged;
                e.lambda
            }
            Quantity::Capacity => {
                let c = capacity(&m, p, s.search.kind, &s.search.solver).map_err(solver)?;
                *converged &= c.solver.converged;
                c.value
            }
            _ => {
                let req = InradiusRequest { epsilons: None, gammas: &[], radii: &[] };
                strict_inradius(&m, p, &req, &s.search).map_err(solver)?.rho_hat
            }
        })
    };
    match name {
        "h" | "p" | "L" => {
            for &v in &values {
                let (h, p) = match name {
                    "h" => (v, p_fixed.unwrap()),
                    "p" => (s.h, v),
                    _ => (s.h, p_fixed.unwrap()),
                };
                let member;
                let d = match &spec {
                    Some(d) => d,
                    None => {
                        member = a.family.unwrap().family().spec(v);
                        &member
                    }
                };
                rows.push(row(v, point(d, h, p, &mut converged)?));
            }
        }
        _ => {
            let spec = spec.as_ref().unwrap();
            let p = p_fixed.unwrap();
            let om =
                rasterize_with_margin(spec, s.h, s.margin, MaskKind::OpenSet).map_err(|e| Failure::Usage(e.to_string()))?;
            let search = BallSearch::new(&om, p, s.search.clone());
            for &v in &values {
                let value = match quantity {
                    Quantity::GammaRadius => search.gamma_radius(v).map_err(solver)?,
                    Quantity::EpsilonRadius => search.epsilon_radius(v).map_err(solver)?.0,
                    _ => search.delta(v).map_err(solver)?.0,
                };
                rows.push(row(v, value));
            }
        }
    }
    let input = json!({
        "config": config(a),
        "axis": name,
        "values": values,
        "quantity": quantity,
        "spec": match (&a.spec, &spec) { (Some(path), Some(d)) => spec_input(path, d), _ => Value::Null },
    });
    let flags = vec![Flag::new("converged", converged, "")];
    let rep = document("sweep", input, &s, &json!({ "rows": rows }), flags);
    let mut out = Outcome::new();
    out.converged = converged;
    out.files.push(("sweep.json".into(), rep.to_json()));
    out.files.push(("sweep.csv".into(), curve_csv(&rows, Some(&provenance(&rep)))));
    Ok(out)
}

fn common(c: &Command) -> &Common {
    match c {
        Command::Capacity(a) | Command::Eigen(a) => &a.common,
        Command::Inradius(a) => &a.common,
        Command::Sweep(a) => &a.common,
        Command::Verify { check } => match check {
            Verify::Upper(a) => &a.common,
            Verify::Lower(a) => &a.common,
            Verify::Continuity(a) => &a.common,
            Verify::Poincare(a) => &a.common,
            Verify::Equivalence(a) => &a.common,
        },
    }
}

fn dispatch(c: &Command) -> Result<Outcome, Failure> {
    match c {
        Command::Capacity(a) => run_capacity(a),
        Command::Eigen(a) => run_eigen(a),
        Command::Inradius(a) => run_inradius(a),
        Command::Sweep(a) => run_sweep(a),
        Command::Verify { check } => match check {
            Verify::Upper(a) => run_upper(a),
            Verify::Lower(a) => run_lower(a),
            Verify::Continuity(a) => run_continuity(a),
            Verify::Poincare(a) => run_poincare(a),
            Verify::Equivalence(a) => run_equivalence(a),
        },
    }
}

fn write_all(dir: &Path, files: &[(String, String)]) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, text) in files {
        std::fs::write(dir.join(name), text)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let c = common(&cli.command);
    if let Some(jobs) = c.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be positive");
            return ExitCode::from(2);
        }
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global().expect("thread pool");
    }
    let outcome = match dispatch(&cli.command) {
        Ok(o) => o,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            return ExitCode::from(2);
        }
        Err(Failure::Solver(m)) => {
            eprintln!("error: {m}");
            return ExitCode::from(3);
        }
    };
    if let Err(e) = write_all(&c.out, &outcome.files) {
        eprintln!("error: --out {}: {e}", c.out.display());
        return ExitCode::from(2);
    }
    for (name, _) in &outcome.files {
        println!("{}", c.out.join(name).display());
    }
    let code = status(&outcome);
    match code {
        3 => eprintln!("solver did not converge"),
        1 => eprintln!("check failed"),
        _ => {}
    }
    ExitCode::from(code)
}

/// Non-convergence outranks a failed check.
fn status(o: &Outcome) -> u8 {
    if !o.converged {
        3
    } else if !o.passed {
        1
    } else {
        0
    }
}
