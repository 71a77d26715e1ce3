use clap::{Args, Parser, Subcommand, ValueEnum};
use lpbm::asplund::{p_sum, SumOptions};
use lpbm::funcgrid::{build_gaussian, build_indicator_box, build_power, GridFile};
use lpbm::functionals::{
    entropy, integral_f_log_f, lp_surface_measure, surface_measure, total_mass, DiscreteMeasure, LpMeasureOptions,
};
use lpbm::inequalities::{
    check_minkowski_type, check_prekopa_leindler, check_prekopa_leindler_many, check_santalo,
    check_t_logconcavity, random_class_a0, require_class, sup_distance, CheckConfig, TPath,
};
use lpbm::legendre::{conjugate_fast, conjugate_oracle, default_dual_spec};
use lpbm::minkowski_solver::{forward_measure, solve, SolveResult, SolverConfig};
use lpbm::report::{reports_to_csv, MarginReport};
use lpbm::variation::{
    delta_j_decomposition_check, delta_j_integral, delta_j_numeric, delta_j_self_closed, VariationMethod,
    VariationOptions, VariationResult, DEFAULT_SCHEDULE,
};
use lpbm::{ClassTag, Error, GridFunction, GridSpec, LogConcaveFn, Result};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_VALIDATION: u8 = 2;
const EXIT_ORACLE: u8 = 3;
const EXIT_MARGIN: u8 = 4;
const EXIT_INFEASIBLE: u8 = 5;
const ORACLE_TOL: f64 = 1e-12;

#[derive(Parser)]
#[command(name = "lpbm", version, about = "Lp Brunn-Minkowski toolkit for log-concave functions on grids")]
struct Cli {
    /// Symmetric grid as DIM:RADIUS:N, e.g. 1:6:1025
    #[arg(long, global = true)]
    grid: Option<String>,
    #[arg(long, global = true, default_value_t = 2.0)]
    p: f64,
    /// Margin tolerance for checks
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output file (stdout when absent)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample a builder potential on the grid
    Build(BuildArgs),
    /// Legendre-Fenchel conjugate of a grid function
    Conjugate {
        input: PathBuf,
        /// Cross-check against the brute-force conjugate
        #[arg(long)]
        oracle: bool,
        /// Dual grid as DIM:RADIUS:N (default: from the slopes of the input)
        #[arg(long)]
        dual: Option<String>,
    },
    /// Lp Asplund sum alpha.f (+)_p beta.g
    Sum {
        f: PathBuf,
        g: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
    },
    /// Total mass J(f)
    Mass { input: PathBuf },
    /// Entropy Ent(f)
    Entropy { input: PathBuf },
    /// Surface-area measure of f
    Measure(MeasureArgs),
    /// First variation dJ_p(f, g)
    Variation(VariationArgs),
    /// Run a suite of inequality checks
    Check(CheckArgs),
    /// Solve the Lp Minkowski problem for a discrete measure
    Solve(SolveArgs),
    /// Gaussian -> measure -> solve -> Euler-Lagrange check
    Roundtrip(RoundtripArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BuildKind {
    Gaussian,
    Box,
    Power,
    Random,
}

#[derive(Args)]
struct BuildArgs {
    #[arg(value_enum)]
    kind: BuildKind,
    /// Gaussian / power scale s
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    /// Box half-widths, comma separated
    #[arg(long, value_delimiter = ',', default_value = "1")]
    radius: Vec<f64>,
    /// Power exponent q > 1
    #[arg(long, default_value_t = 2.0)]
    q: f64,
    /// Class tag to declare (verified)
    #[arg(long)]
    tag: Option<String>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MeasureKind {
    Surface,
    Lp,
}

#[derive(Args)]
struct MeasureArgs {
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = MeasureKind::Surface)]
    kind: MeasureKind,
    #[arg(long)]
    merge_radius: Option<f64>,
    #[arg(long)]
    eps_omega: Option<f64>,
    /// Multiplies every weight
    #[arg(long, default_value_t = 1.0)]
    normalization: f64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Numeric,
    Integral,
    SelfClosed,
}

#[derive(Args)]
struct VariationArgs {
    f: PathBuf,
    /// Perturbation g (defaults to f)
    g: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = MethodArg::Numeric)]
    method: MethodArg,
    /// Decreasing t schedule, comma separated
    #[arg(long, value_delimiter = ',')]
    schedule: Option<Vec<f64>>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Suite {
    Pl,
    Logconcavity,
    Minkowski,
    Santalo,
    VariationCrosscheck,
    All,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(value_enum)]
    suite: Suite,
    /// First input (replaces the built-in fixtures)
    #[arg(long)]
    f: Option<PathBuf>,
    /// Second input
    #[arg(long)]
    g: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    /// Discrete measure (JSON, or CSV with a .csv extension)
    nu: PathBuf,
    /// Solver configuration JSON
    #[arg(long)]
    config: Option<PathBuf>,
    /// Also write the objective history as CSV
    #[arg(long)]
    history: Option<PathBuf>,
    #[arg(long)]
    n_pieces: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
}

#[derive(Args)]
struct RoundtripArgs {
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    #[arg(long, default_value_t = 0.5)]
    eps_omega: f64,
    #[arg(long, default_value_t = 16)]
    n_pieces: usize,
    #[arg(long, default_value_t = 4)]
    restarts: usize,
    /// Also write the generated measure
    #[arg(long)]
    nu_out: Option<PathBuf>,
}

/// Result of a command: text to emit and whether a margin failed.
struct Output {
    text: String,
    margin_failed: bool,
}

impl Output {
    fn ok(text: String) -> Self {
        Output { text, margin_failed: false }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::OracleMismatch(_) => EXIT_ORACLE,
        Error::Infeasible(_) => EXIT_INFEASIBLE,
        _ => EXIT_VALIDATION,
    }
}

fn parse_grid(s: &str) -> Result<GridSpec> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || Error::Validation(format!("grid must look like DIM:RADIUS:N, got {s:?}"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let dim: usize = parts[0].trim().parse().map_err(|_| bad())?;
    let r: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
    GridSpec::symmetric(dim, r, n)
}

fn grid_or(cli: &Cli, default: &str) -> Result<GridSpec> {
    parse_grid(cli.grid.as_deref().unwrap_or(default))
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::Validation(format!("cannot read {}: {e}", path.display())))
}

fn load_fn(path: &Path) -> Result<LogConcaveFn> {
    let g: GridFile = serde_json::from_str(&read(path)?)
        .map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
    g.into_fn()
}

fn load_measure(path: &Path) -> Result<DiscreteMeasure> {
    let text = read(path)?;
    if path.extension().is_some_and(|e| e == "csv") {
        DiscreteMeasure::from_csv(&text)
    } else {
        DiscreteMeasure::from_json(&text)
    }
}

fn json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

fn grid_csv(g: &GridFunction) -> String {
    let spec = g.spec();
    let mut s = String::from(if spec.dim == 1 { "x0,phi\n" } else { "x0,x1,phi\n" });
    for i in 0..spec.len() {
        let x = spec.node(i);
        let v = g.values()[i];
        let v = if v.is_finite() { format!("{v}") } else { "inf".to_string() };
        if spec.dim == 1 {
            s.push_str(&format!("{},{v}\n", x[0]));
        } else {
            s.push_str(&format!("{},{},{v}\n", x[0], x[1]));
        }
    }
    s
}

fn emit_fn(cli: &Cli, f: &LogConcaveFn) -> Result<String> {
    match cli.format {
        Format::Json => json(&GridFile::from_fn(f)),
        Format::Csv => Ok(grid_csv(f.phi())),
    }
}

fn scalars(cli: &Cli, pairs: &[(&str, f64)]) -> Result<String> {
    match cli.format {
        Format::Json => {
            let m: serde_json::Map<String, serde_json::Value> =
                pairs.iter().map(|(k, v)| (k.to_string(), serde_json::json!(v))).collect();
            json(&m)
        }
        Format::Csv => {
            let head: Vec<&str> = pairs.iter().map(|p| p.0).collect();
            let row: Vec<String> = pairs.iter().map(|p| p.1.to_string()).collect();
            Ok(format!("{}\n{}\n", head.join(","), row.join(",")))
        }
    }
}

fn cmd_build(cli: &Cli, a: &BuildArgs) -> Result<Output> {
    let spec = grid_or(cli, "1:6:1025")?;
    let (phi, default_tag) = match a.kind {
        BuildKind::Gaussian => (build_gaussian(&spec, a.scale)?, ClassTag::A0Prime),
        BuildKind::Box => {
            let r = if a.radius.len() == 1 { vec![a.radius[0]; spec.dim] } else { a.radius.clone() };
            (build_indicator_box(&spec, &r)?, ClassTag::A0)
        }
        BuildKind::Power => {
            let tag = if a.q >= 2.0 { ClassTag::A0Prime } else { ClassTag::A0 };
            (build_power(&spec, a.q, a.scale)?, tag)
        }
        BuildKind::Random => (random_class_a0(&spec, cli.seed)?.into_phi(), ClassTag::A0),
    };
    let tag = match &a.tag {
        Some(t) => ClassTag::parse(t)?,
        None => default_tag,
    };
    let f = LogConcaveFn::checked(phi, tag, 1e-9)?;
    Ok(Output::ok(emit_fn(cli, &f)?))
}

fn cmd_conjugate(cli: &Cli, input: &Path, oracle: bool, dual: Option<&str>) -> Result<Output> {
    let f = load_fn(input)?;
    let dspec = match dual {
        Some(d) => parse_grid(d)?,
        None => default_dual_spec(f.phi())?,
    };
    let star = conjugate_fast(f.phi(), &dspec)?;
    if oracle {
        let slow = conjugate_oracle(f.phi(), &dspec)?;
        let d = sup_distance(&star, &slow);
        if d > ORACLE_TOL {
            return Err(Error::OracleMismatch(format!("fast and brute-force conjugates differ by {d:e}")));
        }
    }
    let text = match cli.format {
        Format::Json => json(&GridFile::from_grid(&star))?,
        Format::Csv => grid_csv(&star),
    };
    Ok(Output::ok(text))
}

fn cmd_sum(cli: &Cli, f: &Path, g: &Path, alpha: f64, beta: f64) -> Result<Output> {
    let (f, g) = (load_fn(f)?, load_fn(g)?);
    let r = p_sum(&f, &g, alpha, beta, cli.p, &SumOptions::default())?;
    Ok(Output::ok(emit_fn(cli, &r.result)?))
}

fn cmd_mass(cli: &Cli, input: &Path) -> Result<Output> {
    let f = load_fn(input)?;
    Ok(Output::ok(scalars(cli, &[("mass", total_mass(&f))])?))
}

fn cmd_entropy(cli: &Cli, input: &Path) -> Result<Output> {
    let f = load_fn(input)?;
    let e = entropy(&f)?;
    Ok(Output::ok(scalars(
        cli,
        &[("entropy", e), ("mass", total_mass(&f)), ("integral_f_log_f", integral_f_log_f(&f))],
    )?))
}

fn cmd_measure(cli: &Cli, a: &MeasureArgs) -> Result<Output> {
    let f = load_fn(&a.input)?;
    if !(a.normalization > 0.0 && a.normalization.is_finite()) {
        return Err(Error::Validation("normalization must be positive".into()));
    }
    let push = match a.kind {
        MeasureKind::Surface => surface_measure(&f, a.merge_radius)?,
        MeasureKind::Lp => {
            lp_surface_measure(&f, cli.p, &LpMeasureOptions { merge_radius: a.merge_radius, eps_omega: a.eps_omega })?
        }
    };
    let mu = push.measure.scaled(a.normalization);
    Ok(Output::ok(match cli.format {
        Format::Json => json(&mu)?,
        Format::Csv => mu.to_csv(),
    }))
}

fn cmd_variation(cli: &Cli, a: &VariationArgs) -> Result<Output> {
    let f = load_fn(&a.f)?;
    let g = match &a.g {
        Some(p) => load_fn(p)?,
        None => f.clone(),
    };
    let schedule = a.schedule.clone().unwrap_or_else(|| DEFAULT_SCHEDULE.to_vec());
    let opts = VariationOptions::default();
    let r: VariationResult = match a.method {
        MethodArg::Numeric => delta_j_numeric(&f, &g, cli.p, &schedule, &opts)?,
        MethodArg::Integral => delta_j_integral(&f, &g, cli.p, &opts)?,
        MethodArg::SelfClosed => delta_j_self_closed(&f, cli.p)?,
    };
    Ok(Output::ok(match cli.format {
        Format::Json => json(&r)?,
        Format::Csv => format!("value\n{}\n", r.value),
    }))
}

fn a0p(spec: &GridSpec, s: f64) -> Result<LogConcaveFn> {
    Ok(LogConcaveFn::new(build_gaussian(spec, s)?, ClassTag::A0Prime))
}

fn a0_box(spec: &GridSpec, r: f64) -> Result<LogConcaveFn> {
    Ok(LogConcaveFn::new(build_indicator_box(spec, &vec![r; spec.dim])?, ClassTag::A0))
}

struct Inputs {
    f: Option<LogConcaveFn>,
    g: Option<LogConcaveFn>,
}

fn suite_pl(cli: &Cli, cfg: &CheckConfig, inp: &Inputs) -> Result<Vec<MarginReport>> {
    let lambdas = [0.25, 0.5, 0.75];
    if let (Some(f), Some(g)) = (&inp.f, &inp.g) {
        return check_prekopa_leindler_many(f, g, &lambdas, cli.p, cfg);
    }
    let spec = grid_or(cli, "1:12:1025")?;
    let mut out = Vec::new();
    for k in 0..5u64 {
        let f = random_class_a0(&spec, cli.seed.wrapping_mul(1000).wrapping_add(2 * k))?;
        let g = random_class_a0(&spec, cli.seed.wrapping_mul(1000).wrapping_add(2 * k + 1))?;
        out.extend(check_prekopa_leindler_many(&f, &g, &lambdas, cli.p, cfg)?);
    }
    let gauss = a0p(&GridSpec::symmetric(1, 6.0, 1025)?, 1.0)?;
    out.push(check_prekopa_leindler(&gauss, &gauss, 0.5, cli.p, cfg)?);
    Ok(out)
}

fn suite_logconcavity(cli: &Cli, cfg: &CheckConfig, inp: &Inputs) -> Result<Vec<MarginReport>> {
    let dil: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
    let interp: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
    let pairs = match (&inp.f, &inp.g) {
        (Some(f), Some(g)) => vec![(f.clone(), g.clone())],
        _ => {
            let gs = GridSpec::symmetric(1, 6.0, 1025)?;
            let bs = GridSpec::symmetric(1, 3.0, 1025)?;
            vec![(a0p(&gs, 1.0)?, a0p(&gs, 2.0)?), (a0_box(&bs, 1.0)?, a0_box(&bs, 2.0)?)]
        }
    };
    let mut out = Vec::new();
    for (f, g) in &pairs {
        out.push(check_t_logconcavity(f, g, cli.p, &dil, TPath::Dilation, cfg)?);
        out.push(check_t_logconcavity(f, g, cli.p, &interp, TPath::Interpolation, cfg)?);
    }
    Ok(out)
}

fn suite_minkowski(cli: &Cli, cfg: &CheckConfig, inp: &Inputs) -> Result<Vec<MarginReport>> {
    let m = VariationMethod::FiniteDifference;
    if let (Some(f), Some(g)) = (&inp.f, &inp.g) {
        return Ok(vec![check_minkowski_type(f, g, cli.p, m, cfg)?]);
    }
    let gs = GridSpec::symmetric(1, 6.0, 2049)?;
    let (f, g) = (a0p(&gs, 1.0)?, a0p(&gs, 2.0)?);
    Ok(vec![check_minkowski_type(&f, &f, cli.p, m, cfg)?, check_minkowski_type(&f, &g, cli.p, m, cfg)?])
}

fn suite_santalo(_cli: &Cli, cfg: &CheckConfig, inp: &Inputs) -> Result<Vec<MarginReport>> {
    if let Some(f) = &inp.f {
        return Ok(vec![check_santalo(f, None, cfg)?]);
    }
    let gs = GridSpec::symmetric(1, 6.0, 1025)?;
    let bs = GridSpec::symmetric(1, 3.0, 1025)?;
    Ok(vec![check_santalo(&a0p(&gs, 1.0)?, None, cfg)?, check_santalo(&a0_box(&bs, 1.0)?, None, cfg)?])
}

fn relative(name: &str, a: f64, b: f64, rel_tol: f64) -> MarginReport {
    let d = (a - b).abs() / a.abs().max(b.abs());
    MarginReport::with_margin(name, a, b, -d, rel_tol, rel_tol).param("relative_discrepancy", d)
}

fn suite_variation(cli: &Cli, _cfg: &CheckConfig, inp: &Inputs) -> Result<Vec<MarginReport>> {
    let (f, g) = match (&inp.f, &inp.g) {
        (Some(f), Some(g)) => (f.clone(), g.clone()),
        (Some(f), None) => (f.clone(), f.clone()),
        _ => {
            let gs = GridSpec::symmetric(1, 6.0, 2049)?;
            (a0p(&gs, 1.0)?, a0p(&gs, 0.5)?)
        }
    };
    let opts = VariationOptions::default();
    let p = cli.p;
    let mut out = Vec::new();
    let num_ff = delta_j_numeric(&f, &f, p, &DEFAULT_SCHEDULE, &opts)?.value;
    out.push(relative("variation:self_closed", num_ff, delta_j_self_closed(&f, p)?.value, 1e-2));
    if f.tag() >= ClassTag::A0Prime && g.tag() >= ClassTag::A0Prime {
        let num = delta_j_numeric(&f, &g, p, &DEFAULT_SCHEDULE, &opts)?.value;
        out.push(relative("variation:integral", num, delta_j_integral(&f, &g, p, &opts)?.value, 2e-2));
    }
    out.push(delta_j_decomposition_check(&f, &g, p, &DEFAULT_SCHEDULE, 3e-2, &opts)?);
    Ok(out)
}

fn cmd_check(cli: &Cli, a: &CheckArgs) -> Result<Output> {
    let load = |p: &Option<PathBuf>| -> Result<Option<LogConcaveFn>> {
        match p {
            Some(p) => {
                let f = load_fn(p)?;
                require_class(&f, ClassTag::A0)?;
                Ok(Some(f))
            }
            None => Ok(None),
        }
    };
    let inp = Inputs { f: load(&a.f)?, g: load(&a.g)? };
    let mut cfg = CheckConfig::default();
    if let Some(t) = cli.tol {
        cfg.tol = t;
    }
    let suites: &[Suite] = match a.suite {
        Suite::All => &[Suite::Pl, Suite::Logconcavity, Suite::Minkowski, Suite::Santalo, Suite::VariationCrosscheck],
        ref s => std::slice::from_ref(s),
    };
    let mut reports = Vec::new();
    for s in suites {
        reports.extend(match s {
            Suite::Pl => suite_pl(cli, &cfg, &inp)?,
            Suite::Logconcavity => suite_logconcavity(cli, &cfg, &inp)?,
            Suite::Minkowski => suite_minkowski(cli, &cfg, &inp)?,
            Suite::Santalo => suite_santalo(cli, &cfg, &inp)?,
            Suite::VariationCrosscheck => suite_variation(cli, &cfg, &inp)?,
            Suite::All => unreachable!(),
        });
    }
    let failed = reports.iter().any(|r| !r.pass);
    let text = match cli.format {
        Format::Json => json(&reports)?,
        Format::Csv => reports_to_csv(&reports),
    };
    Ok(Output { text, margin_failed: failed })
}

fn solve_output(cli: &Cli, r: &SolveResult) -> Result<String> {
    match cli.format {
        Format::Json => json(r),
        Format::Csv => Ok(r.history_csv()),
    }
}

fn cmd_solve(cli: &Cli, a: &SolveArgs) -> Result<(Output, Option<String>)> {
    let nu = load_measure(&a.nu)?;
    let mut cfg = match &a.config {
        Some(p) => serde_json::from_str::<SolverConfig>(&read(p)?)
            .map_err(|e| Error::Validation(format!("{}: {e}", p.display())))?,
        None => {
            let mut c = SolverConfig::for_measure(&nu, cli.p)?;
            c.seed = cli.seed;
            c
        }
    };
    if let Some(g) = &cli.grid {
        let spec = parse_grid(g)?;
        cfg.grid = spec.clone();
        cfg.dual_grid = spec;
    }
    if let Some(n) = a.n_pieces {
        cfg.n_pieces = n;
    }
    if let Some(r) = a.restarts {
        cfg.restarts = r;
    }
    let r = solve(&nu, &cfg)?;
    let hist = a.history.as_ref().map(|_| r.history_csv());
    Ok((Output::ok(solve_output(cli, &r)?), hist))
}

fn cmd_roundtrip(cli: &Cli, a: &RoundtripArgs) -> Result<(Output, Option<String>)> {
    let spec = grid_or(cli, "1:6:1025")?;
    let f = a0p(&spec, a.scale)?;
    let j = total_mass(&f);
    let opts = LpMeasureOptions { merge_radius: None, eps_omega: Some(a.eps_omega) };
    let nu = forward_measure(&f, cli.p, 1.0 / j, &opts)?;
    let mut cfg = SolverConfig::for_measure(&nu, cli.p)?;
    cfg.seed = cli.seed;
    cfg.n_pieces = a.n_pieces;
    cfg.restarts = a.restarts;
    let r = solve(&nu, &cfg)?;
    let failed = !(r.el_report.as_ref().is_some_and(|e| e.pass) && r.tau_estimate.is_some());
    let nu_text = match &a.nu_out {
        Some(_) => Some(json(&nu)?),
        None => None,
    };
    Ok((Output { text: solve_output(cli, &r)?, margin_failed: failed }, nu_text))
}

fn run(cli: &Cli) -> Result<(Output, Vec<(PathBuf, String)>)> {
    let mut extra = Vec::new();
    let out = match &cli.cmd {
        Cmd::Build(a) => cmd_build(cli, a)?,
        Cmd::Conjugate { input, oracle, dual } => cmd_conjugate(cli, input, *oracle, dual.as_deref())?,
        Cmd::Sum { f, g, alpha, beta } => cmd_sum(cli, f, g, *alpha, *beta)?,
        Cmd::Mass { input } => cmd_mass(cli, input)?,
        Cmd::Entropy { input } => cmd_entropy(cli, input)?,
        Cmd::Measure(a) => cmd_measure(cli, a)?,
        Cmd::Variation(a) => cmd_variation(cli, a)?,
        Cmd::Check(a) => cmd_check(cli, a)?,
        Cmd::Solve(a) => {
            let (o, hist) = cmd_solve(cli, a)?;
            if let (Some(p), Some(h)) = (&a.history, hist) {
                extra.push((p.clone(), h));
            }
            o
        }
        Cmd::Roundtrip(a) => {
            let (o, nu) = cmd_roundtrip(cli, a)?;
            if let (Some(p), Some(n)) = (&a.nu_out, nu) {
                extra.push((p.clone(), n));
            }
            o
        }
    };
    Ok((out, extra))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if !(cli.p.is_finite()) {
        eprintln!("error: --p must be finite");
        return ExitCode::from(EXIT_VALIDATION);
    }
    let (out, extra) = match run(&cli) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e));
        }
    };
    let write = |path: &Path, text: &str| -> std::io::Result<()> { std::fs::write(path, text) };
    for (path, text) in &extra {
        if let Err(e) = write(path, text) {
            eprintln!("error: cannot write {}: {e}", path.display());
            return ExitCode::from(EXIT_VALIDATION);
        }
    }
    match &cli.out {
        Some(p) => {
            if let Err(e) = write(p, &out.text) {
                eprintln!("error: cannot write {}: {e}", p.display());
                return ExitCode::from(EXIT_VALIDATION);
            }
        }
        None => print!("{}", out.text),
    }
    if out.margin_failed {
        eprintln!("margin failure");
        return ExitCode::from(EXIT_MARGIN);
    }
    ExitCode::SUCCESS
}
