//! Command-line front door: one subcommand per module, TOML/JSON inputs,
//! JSON + CSV reports. Exit code 0 means every certificate and residual
//! passed; 1 means a certificate failed (diagnostics as JSON on stdout);
//! 2 means the input was rejected before any mathematics ran.

use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::coords::{Chart, CoordsError};
use crate::entireq;
use crate::factor1d::{self, Factor1dError};
use crate::factorgroup::{self, CoordKernel, GroupError, ProductExpKernel, ZeroKernel};
use crate::fixtures::{self, FixtureError};
use crate::repmodel::{MatrixRep, Orbit};
use crate::weights::{self, Tau, WeightError};

#[derive(Parser, Serialize)]
#[command(name = "expfactor", about = "certified bounded factorization toolkit")]
struct Cli {
    /// Directory for the JSON report and CSV artifacts
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Seed for randomly generated test vectors
    #[arg(long, global = true, default_value_t = 7)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Serialize)]
enum Command {
    /// Validate an algebra file: bilinearity, antisymmetry, Jacobi, solvability
    CheckAlgebra { algebra: PathBuf },
    /// Evaluate the chart and its inverse at a coordinate point
    Coords(CoordsArgs),
    /// Symbolic pullback of the invariant field of a basis element
    Pullback(PullbackArgs),
    /// Verify the unit-determinant change-of-frame structure
    HaarCheck { algebra: PathBuf },
    /// Build the weight sigma from tau bounds and certify its axioms
    Weights(WeightsArgs),
    /// Build the strip-entire multiplier Q over a weight and certify it
    EntireQ(EntireQArgs),
    /// Factor a one-parameter orbit family as gamma = chi * h
    Factor1d(Factor1dArgs),
    /// Iterate the factorization over all chart axes and verify v = Pi(chi)v'
    FactorGroup(FactorGroupArgs),
    /// Weighted-decay membership report for a kernel pushed through the chart
    PushforwardCheck(PushforwardArgs),
}

#[derive(Args, Serialize)]
struct CoordsArgs {
    #[arg(long)]
    algebra: PathBuf,
    /// comma-separated chart coordinates "t1,..,sm"
    #[arg(long)]
    point: String,
}

#[derive(Args, Serialize)]
struct PullbackArgs {
    #[arg(long)]
    algebra: PathBuf,
    /// basis element by name or zero-based index
    #[arg(long)]
    element: String,
    /// pull back the right-invariant field instead of the left-invariant one
    #[arg(long)]
    right: bool,
}

#[derive(Args, Serialize)]
struct WeightsArgs {
    /// tau bound spec: linear:c | power:c:p | logpower:c:p (repeatable)
    #[arg(long, required = true)]
    tau: Vec<String>,
    #[arg(long)]
    tmax: f64,
}

#[derive(Args, Serialize)]
struct EntireQArgs {
    /// TOML/JSON file with `jumps = [t1, ...]` or `log_jumps = [u1, ...]`
    #[arg(long)]
    sigma: PathBuf,
    /// strip half-width Lambda
    #[arg(long)]
    strip: f64,
    /// product order K
    #[arg(long)]
    order: usize,
    /// real window half-width for the certificates
    #[arg(long)]
    window: f64,
}

#[derive(Args, Serialize)]
struct Factor1dArgs {
    /// rep descriptor: {dim, generator (row-major), vectors?}
    #[arg(long)]
    rep: PathBuf,
    /// vector family file {vectors = [[..], ..]}; falls back to the rep file
    #[arg(long)]
    vectors: Option<PathBuf>,
    /// number of seeded random unit vectors when no file provides any
    #[arg(long, default_value_t = 3)]
    random_vectors: usize,
    /// window half-width T
    #[arg(long)]
    window: f64,
    #[arg(long)]
    tol: f64,
    /// grid size (power of two)
    #[arg(long, default_value_t = 8192)]
    grid: usize,
}

#[derive(Args, Serialize)]
struct FactorGroupArgs {
    #[arg(long)]
    algebra: PathBuf,
    /// optional rep override: {dim, group_model (rational strings), model_dim}
    #[arg(long)]
    rep: Option<PathBuf>,
    #[arg(long)]
    vectors: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    random_vectors: usize,
    /// per-axis window half-width T
    #[arg(long)]
    window: f64,
    #[arg(long)]
    tol: f64,
    #[arg(long, default_value_t = 8192)]
    grid: usize,
    /// quadrature points per axis for the grid routes (0 = dimension default)
    #[arg(long, default_value_t = 0)]
    quad_pts: usize,
}

#[derive(Args, Serialize)]
struct PushforwardArgs {
    #[arg(long)]
    algebra: PathBuf,
    /// kernel spec: productexp:rate | zero
    #[arg(long)]
    kernel: String,
    /// comma-separated decay rates to test
    #[arg(long)]
    lambda_ladder: String,
    #[arg(long, default_value_t = 6.0)]
    window: f64,
    #[arg(long, default_value_t = 41)]
    pts: usize,
}

enum CliError {
    BadInput(String),
    Certificate(Value),
}

impl From<FixtureError> for CliError {
    fn from(e: FixtureError) -> CliError {
        match e {
            FixtureError::Lie(l) => {
                CliError::Certificate(json!({"kind": "algebra", "message": l.to_string()}))
            }
            other => CliError::BadInput(other.to_string()),
        }
    }
}

impl From<CoordsError> for CliError {
    fn from(e: CoordsError) -> CliError {
        match e {
            CoordsError::NoModel | CoordsError::UnsupportedElement => {
                CliError::BadInput(e.to_string())
            }
            other => CliError::Certificate(json!({"kind": "coords", "message": other.to_string()})),
        }
    }
}

impl From<WeightError> for CliError {
    fn from(e: WeightError) -> CliError {
        CliError::Certificate(json!({"kind": "weights", "message": e.to_string()}))
    }
}

impl From<entireq::EntireQError> for CliError {
    fn from(e: entireq::EntireQError) -> CliError {
        CliError::Certificate(json!({"kind": "entire-q", "message": e.to_string()}))
    }
}

impl From<Factor1dError> for CliError {
    fn from(e: Factor1dError) -> CliError {
        CliError::Certificate(json!({"kind": "factor1d", "message": e.to_string()}))
    }
}

impl From<GroupError> for CliError {
    fn from(e: GroupError) -> CliError {
        match e {
            GroupError::Coords(c) => CliError::from(c),
            other => {
                CliError::Certificate(json!({"kind": "factor-group", "message": other.to_string()}))
            }
        }
    }
}

struct Report {
    json: Value,
    csv: Vec<(String, String)>,
}

/// Parse and execute; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    let out_dir = cli.out_dir.clone();
    let config = json!({
        "seed": cli.seed,
        "out_dir": out_dir.to_string_lossy(),
        "command": serde_json::to_value(&cli.command).unwrap_or(Value::Null),
    });
    match execute(&cli) {
        Ok(mut report) => {
            report.json["config"] = config;
            let text = serde_json::to_string_pretty(&report.json).unwrap();
            if emit(&out_dir, &format!("{}.json", command_name(&cli.command)), &text).is_err() {
                eprintln!("cannot write report to {}", out_dir.display());
                return 2;
            }
            for (name, content) in &report.csv {
                if emit(&out_dir, name, content).is_err() {
                    eprintln!("cannot write {} to {}", name, out_dir.display());
                    return 2;
                }
            }
            println!("{}", text);
            0
        }
        Err(CliError::Certificate(diag)) => {
            let text = serde_json::to_string_pretty(&json!({
                "status": "certificate-failure",
                "diagnostics": diag,
                "config": config,
            }))
            .unwrap();
            let _ = emit(&out_dir, "failure.json", &text);
            println!("{}", text);
            1
        }
        Err(CliError::BadInput(msg)) => {
            eprintln!("bad input: {}", msg);
            2
        }
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::CheckAlgebra { .. } => "check-algebra",
        Command::Coords(_) => "coords",
        Command::Pullback(_) => "pullback",
        Command::HaarCheck { .. } => "haar-check",
        Command::Weights(_) => "weights",
        Command::EntireQ(_) => "entire-q",
        Command::Factor1d(_) => "factor1d",
        Command::FactorGroup(_) => "factor-group",
        Command::PushforwardCheck(_) => "pushforward-check",
    }
}

fn emit(dir: &Path, name: &str, content: &str) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(name), content)
}

fn num(x: f64) -> Value {
    serde_json::Number::from_f64(x)
        .map(Value::Number)
        .unwrap_or_else(|| Value::String(format!("{}", x)))
}

fn parse_floats(s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|e| CliError::BadInput(format!("bad number {:?}: {}", p, e)))
        })
        .collect()
}

fn positive(x: f64, what: &str) -> Result<(), CliError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(CliError::BadInput(format!("{} must be positive", what)))
    }
}

fn check_tol(tol: f64) -> Result<(), CliError> {
    if (1e-12..f64::INFINITY).contains(&tol) {
        Ok(())
    } else {
        Err(CliError::BadInput("tolerance must be >= 1e-12".into()))
    }
}

#[derive(Deserialize)]
struct RawRep {
    dim: usize,
    #[serde(default)]
    generator: Option<Vec<f64>>,
    #[serde(default)]
    group_model: Option<Vec<Vec<String>>>,
    #[serde(default)]
    model_dim: Option<usize>,
    #[serde(default)]
    vectors: Option<Vec<Vec<f64>>>,
}

#[derive(Deserialize)]
struct RawVectors {
    vectors: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
struct RawSigma {
    #[serde(default)]
    jumps: Option<Vec<f64>>,
    #[serde(default)]
    log_jumps: Option<Vec<f64>>,
}

fn read_structured<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::BadInput(format!("{}: {}", path.display(), e)))?;
    if path.extension().map(|e| e == "json").unwrap_or(false) {
        serde_json::from_str(&text).map_err(|e| CliError::BadInput(format!("{}: {}", path.display(), e)))
    } else {
        toml::from_str(&text).map_err(|e| CliError::BadInput(format!("{}: {}", path.display(), e)))
    }
}

fn load_vectors(
    explicit: Option<&PathBuf>,
    from_rep: Option<Vec<Vec<f64>>>,
    dim: usize,
    random: usize,
    seed: u64,
) -> Result<Vec<DVector<f64>>, CliError> {
    let rows: Vec<Vec<f64>> = if let Some(path) = explicit {
        read_structured::<RawVectors>(path)?.vectors
    } else if let Some(v) = from_rep {
        v
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..random)
            .map(|_| {
                let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let n = v.iter().map(|c| c * c).sum::<f64>().sqrt();
                v.into_iter().map(|c| c / n).collect()
            })
            .collect()
    };
    rows.iter()
        .map(|r| {
            if r.len() == dim {
                Ok(DVector::from_row_slice(r))
            } else {
                Err(CliError::BadInput(format!(
                    "vector has length {}, rep dimension is {}",
                    r.len(),
                    dim
                )))
            }
        })
        .collect()
}

fn parse_tau(spec: &str) -> Result<Tau, CliError> {
    let parts: Vec<&str> = spec.split(':').collect();
    let arg = |i: usize| -> Result<f64, CliError> {
        parts
            .get(i)
            .ok_or_else(|| CliError::BadInput(format!("tau spec {:?} is missing arguments", spec)))?
            .parse::<f64>()
            .map_err(|e| CliError::BadInput(format!("tau spec {:?}: {}", spec, e)))
    };
    match parts[0] {
        "linear" => Ok(Tau::Linear(arg(1)?)),
        "power" => Ok(Tau::Power(arg(1)?, arg(2)?)),
        "logpower" => Ok(Tau::LogPower(arg(1)?, arg(2)?)),
        other => Err(CliError::BadInput(format!("unknown tau kind {:?}", other))),
    }
}

fn parse_kernel(spec: &str, dim: usize) -> Result<Box<dyn CoordKernel>, CliError> {
    if spec == "zero" {
        return Ok(Box::new(ZeroKernel { dim }));
    }
    if let Some(rate) = spec.strip_prefix("productexp:") {
        let rate: f64 = rate
            .parse()
            .map_err(|e| CliError::BadInput(format!("kernel rate: {}", e)))?;
        positive(rate, "kernel rate")?;
        return Ok(Box::new(ProductExpKernel { dim, rate }));
    }
    Err(CliError::BadInput(format!("unknown kernel spec {:?}", spec)))
}

fn csv(header: &str, rows: &[Vec<f64>]) -> String {
    let mut out = String::from(header);
    out.push('\n');
    for row in rows {
        let line: Vec<String> = row.iter().map(|x| format!("{:.17e}", x)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

fn execute(cli: &Cli) -> Result<Report, CliError> {
    match &cli.command {
        Command::CheckAlgebra { algebra } => {
            let spec = fixtures::load_algebra(algebra)?;
            let basis = spec.alg.adapted_basis();
            Ok(Report {
                json: json!({
                    "status": "pass",
                    "dim": spec.alg.dim,
                    "names": spec.alg.basis_names,
                    "a_part": basis.a_part.len(),
                    "n_part": basis.n_part.len(),
                    "has_matrix_model": spec.models.is_some(),
                    "model_dim": spec.model_dim,
                }),
                csv: vec![],
            })
        }
        Command::Coords(args) => {
            let spec = fixtures::load_algebra(&args.algebra)?;
            let chart = Chart::new(spec)?;
            let point = parse_floats(&args.point)?;
            if point.len() != chart.dim() {
                return Err(CliError::BadInput(format!(
                    "point has {} coordinates, chart needs {}",
                    point.len(),
                    chart.dim()
                )));
            }
            let g = chart.phi(&point)?;
            let back = chart.phi_inv(&g)?;
            let roundtrip = point
                .iter()
                .zip(&back)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            Ok(Report {
                json: json!({
                    "status": "pass",
                    "labels": chart.labels,
                    "point": point.iter().map(|&x| num(x)).collect::<Vec<_>>(),
                    "phi": (0..g.nrows()).map(|i| {
                        (0..g.ncols()).map(|j| num(g[(i, j)])).collect::<Vec<_>>()
                    }).collect::<Vec<_>>(),
                    "phi_inv": back.iter().map(|&x| num(x)).collect::<Vec<_>>(),
                    "roundtrip_error": num(roundtrip),
                    "norm_surrogate": num(chart.norm_surrogate_coords(&point)),
                }),
                csv: vec![],
            })
        }
        Command::Pullback(args) => {
            let spec = fixtures::load_algebra(&args.algebra)?;
            let names = spec.alg.basis_names.clone();
            let dim = spec.alg.dim;
            let chart = Chart::new(spec)?;
            let index = names
                .iter()
                .position(|n| n == &args.element)
                .or_else(|| args.element.parse::<usize>().ok().filter(|&i| i < dim))
                .ok_or_else(|| {
                    CliError::BadInput(format!("unknown basis element {:?}", args.element))
                })?;
            let mut coords = vec![crate::rational::rat_i(0); dim];
            coords[index] = crate::rational::rat_i(1);
            let op = if args.right {
                chart.pullback_right(&coords)?
            } else {
                chart.pullback_left(&coords)?
            };
            let terms: Vec<Value> = op
                .terms
                .iter()
                .map(|(c, alpha)| {
                    json!({
                        "coefficient": c.display_with(&chart.labels),
                        "orders": alpha,
                    })
                })
                .collect();
            Ok(Report {
                json: json!({
                    "status": "pass",
                    "element": names[index],
                    "side": if args.right { "right" } else { "left" },
                    "labels": chart.labels,
                    "terms": terms,
                }),
                csv: vec![],
            })
        }
        Command::HaarCheck { algebra } => {
            let spec = fixtures::load_algebra(algebra)?;
            let chart = Chart::new(spec)?;
            let report = chart.haar_check()?;
            Ok(Report {
                json: json!({
                    "status": "pass",
                    "det": report.det.to_string(),
                    "frame_inverse": report.matrix,
                }),
                csv: vec![],
            })
        }
        Command::Weights(args) => {
            positive(args.tmax, "tmax")?;
            let taus: Vec<Tau> = args
                .tau
                .iter()
                .map(|s| parse_tau(s))
                .collect::<Result<_, _>>()?;
            let sigma = weights::build_sigma_auto(&taus, args.tmax)?;
            let jumps = sigma.jumps();
            let grid = weights::log_grid(1.0, args.tmax, 2000);
            // sigma/log t only grows past the second jump (it is 1/log t on
            // the first branch)
            let gamma_from = jumps.get(1).copied().unwrap_or(args.tmax);
            let axioms = weights::check_weight_axioms(|t| sigma.eval(t), &grid, gamma_from)?;
            let rows: Vec<Vec<f64>> = weights::log_grid(1.0, args.tmax, 500)
                .into_iter()
                .map(|t| {
                    let s = sigma.eval(t);
                    let doubling = if 2.0 * t <= args.tmax && s > 0.0 {
                        sigma.eval(2.0 * t) / s
                    } else {
                        f64::NAN
                    };
                    let over_log = if t > 1.0 { s / t.ln() } else { f64::NAN };
                    vec![t, s, doubling, over_log]
                })
                .collect();
            Ok(Report {
                json: json!({
                    "status": "pass",
                    "jumps": jumps.iter().map(|&t| num(t)).collect::<Vec<_>>(),
                    "log_jumps": sigma.log_jumps().iter().map(|&u| num(u)).collect::<Vec<_>>(),
                    "c_alpha": num(axioms.c_alpha),
                    "gamma_margin": num(axioms.gamma_margin),
                }),
                csv: vec![(
                    "weights.csv".into(),
                    csv("t,sigma,sigma2t_over_sigmat,sigma_over_logt", &rows),
                )],
            })
        }
        Command::EntireQ(args) => {
            positive(args.strip, "strip")?;
            positive(args.window, "window")?;
            let raw: RawSigma = read_structured(&args.sigma)?;
            let sigma = match (raw.jumps, raw.log_jumps) {
                (Some(j), _) => weights::WeightFunction::from_jumps(j),
                (None, Some(u)) => weights::WeightFunction::from_log_jumps(u),
                (None, None) => {
                    return Err(CliError::BadInput(
                        "sigma file needs `jumps` or `log_jumps`".into(),
                    ))
                }
            };
            let q = entireq::build_q(&sigma, args.strip, args.order, args.window)?;
            let rows: Vec<Vec<f64>> = (0..=800)
                .map(|i| {
                    let x = -args.window + 2.0 * args.window * i as f64 / 800.0;
                    vec![x, q.eval_real(x).ln(), sigma.eval(x.abs())]
                })
                .collect();
            Ok(Report {
                json: json!({
                    "status": "pass",
                    "lambda": num(q.lambda),
                    "order": q.roots.len(),
                    "roots": q.roots.iter().map(|&r| num(r)).collect::<Vec<_>>(),
                    "a_fit": num(q.a_fit),
                    "strips": q.strip_certificates.iter().map(|c| json!({
                        "strip": num(c.strip),
                        "inf_lower": num(c.inf_lower),
                        "sup_upper": num(c.sup_upper),
                    })).collect::<Vec<_>>(),
                    "decay_order": q.decay.order,
                    "decay_constant": num(q.decay.constant),
                }),
                csv: vec![("entire-q.csv".into(), csv("x,log_q,sigma", &rows))],
            })
        }
        Command::Factor1d(args) => {
            positive(args.window, "window")?;
            check_tol(args.tol)?;
            if !args.grid.is_power_of_two() {
                return Err(CliError::BadInput("grid must be a power of two".into()));
            }
            let raw: RawRep = read_structured(&args.rep)?;
            let gen = raw
                .generator
                .as_ref()
                .ok_or_else(|| CliError::BadInput("rep file needs `generator`".into()))?;
            if gen.len() != raw.dim * raw.dim {
                return Err(CliError::BadInput("generator has wrong size".into()));
            }
            let m = DMatrix::from_row_slice(raw.dim, raw.dim, gen);
            let rep = MatrixRep::one_param(m.clone());
            let b = load_vectors(
                args.vectors.as_ref(),
                raw.vectors,
                raw.dim,
                args.random_vectors,
                cli.seed,
            )?;
            let res = factor1d::factorize(&rep, &b, args.window, args.grid, args.tol)?;
            let mut json = json!({
                "status": "pass",
                "lambda": num(res.lambda),
                "strip": num(res.strip),
                "mu": num(res.mu),
                "sigma_jumps": res.sigma.jumps().iter().map(|&t| num(t)).collect::<Vec<_>>(),
                "chi_roots": res.chi.roots.iter().map(|&r| num(r)).collect::<Vec<_>>(),
                "chi_decay_constant": num(res.chi_decay_constant),
                "residual1": res.residual1.iter().map(|&r| num(r)).collect::<Vec<_>>(),
                "residual2": res.residual2.iter().map(|&r| num(r)).collect::<Vec<_>>(),
                "orbit_residual": res.orbit_residual.iter().map(|&r| num(r)).collect::<Vec<_>>(),
                "b_prime_norms": res.h0.iter().map(|v| num(v.norm())).collect::<Vec<_>>(),
            });
            if b.len() >= 2 {
                let sim = factor1d::simultaneity_check(&res);
                json["simultaneity"] = json!({
                    "max_residual": num(sim.max_residual),
                    "bprime_bound": num(sim.bprime_bound),
                });
            }
            // sample curves for the first vector
            let mut rows = vec![];
            if !b.is_empty() {
                let grid = res.grid;
                let gamma = Orbit::sample(&rep, b[0].clone(), grid);
                let conv =
                    factor1d::convolve_chi_orbit(&res.chi, &m, &res.h[0], grid.step());
                for i in 0..grid.n {
                    let t = grid.t(i);
                    rows.push(vec![
                        t,
                        res.chi.eval(t),
                        gamma.samples[i].norm(),
                        res.h[0][i].norm(),
                        (&gamma.samples[i] - &conv[i]).norm(),
                    ]);
                }
            }
            Ok(Report {
                json,
                csv: vec![(
                    "factor1d.csv".into(),
                    csv("t,chi,gamma_norm,h_norm,conv_residual", &rows),
                )],
            })
        }
        Command::FactorGroup(args) => {
            positive(args.window, "window")?;
            check_tol(args.tol)?;
            if !args.grid.is_power_of_two() {
                return Err(CliError::BadInput("grid must be a power of two".into()));
            }
            let mut spec = fixtures::load_algebra(&args.algebra)?;
            if let Some(rep_path) = &args.rep {
                let raw: RawRep = read_structured(rep_path)?;
                let model = raw
                    .group_model
                    .ok_or_else(|| CliError::BadInput("rep file needs `group_model`".into()))?;
                if model.len() != spec.alg.dim {
                    return Err(CliError::BadInput(
                        "group_model must have one matrix per basis element".into(),
                    ));
                }
                let md = raw.model_dim.unwrap_or(raw.dim);
                let mut models = Vec::with_capacity(model.len());
                for flat in &model {
                    if flat.len() != md * md {
                        return Err(CliError::BadInput("group_model entry has wrong size".into()));
                    }
                    let mut mat = vec![vec![crate::rational::rat_i(0); md]; md];
                    for (idx, s) in flat.iter().enumerate() {
                        mat[idx / md][idx % md] =
                            fixtures::parse_rat(s).map_err(|e| CliError::BadInput(e.to_string()))?;
                    }
                    models.push(mat);
                }
                spec.models = Some(models);
                spec.model_dim = md;
            }
            if spec.models.is_none() {
                return Err(CliError::BadInput(
                    "algebra has no matrix model; provide one via --rep".into(),
                ));
            }
            let model_dim = spec.model_dim;
            let chart = Chart::new(spec)?;
            let b = load_vectors(
                args.vectors.as_ref(),
                None,
                model_dim,
                args.random_vectors,
                cli.seed,
            )?;
            let iter =
                factorgroup::iterate_factorization(&chart, &b, args.window, args.grid, args.tol)?;
            let mut opts = factorgroup::QuadratureOptions::standard(chart.dim(), args.tol);
            if args.quad_pts > 1 {
                opts.pts = args.quad_pts;
            }
            let res = factorgroup::pushforward_and_verify(&chart, &b, &iter, &opts)?;
            let axes: Vec<Value> = iter
                .axes
                .iter()
                .map(|a| {
                    json!({
                        "axis": a.axis,
                        "label": a.label,
                        "lambda": num(a.result.lambda),
                        "chi_roots": a.result.chi.roots.iter().map(|&r| num(r)).collect::<Vec<_>>(),
                        "residual1": a.result.residual1.iter().map(|&r| num(r)).collect::<Vec<_>>(),
                        "residual2": a.result.residual2.iter().map(|&r| num(r)).collect::<Vec<_>>(),
                    })
                })
                .collect();
            let certs: Vec<Value> = res
                .chi_certificates
                .iter()
                .map(|c| {
                    json!({
                        "operator": c.label,
                        "lambda": num(c.lambda),
                        "sups": c.sups.iter().map(|&s| num(s)).collect::<Vec<_>>(),
                        "diverging": c.diverging,
                    })
                })
                .collect();
            let mut rows = vec![];
            for (k, ker) in res.phi.kernels.iter().enumerate() {
                for i in 0..=400 {
                    let x = -opts.window + 2.0 * opts.window * i as f64 / 400.0;
                    rows.push(vec![k as f64, x, ker.eval(x)]);
                }
            }
            Ok(Report {
                json: json!({
                    "status": "pass",
                    "axes": axes,
                    "residuals": res.residuals.iter().map(|&r| num(r)).collect::<Vec<_>>(),
                    "route_agreement": num(res.route_agreement),
                    "grid_residuals": res.grid_residuals.iter().map(|&r| num(r)).collect::<Vec<_>>(),
                    "b_prime_norms": res.b_prime.iter().map(|v| num(v.norm())).collect::<Vec<_>>(),
                    "chi_certificates": certs,
                }),
                csv: vec![("factor-group-chi.csv".into(), csv("axis,x,chi", &rows))],
            })
        }
        Command::PushforwardCheck(args) => {
            positive(args.window, "window")?;
            if args.pts < 3 {
                return Err(CliError::BadInput("pts must be at least 3".into()));
            }
            let spec = fixtures::load_algebra(&args.algebra)?;
            let chart = Chart::new(spec)?;
            let kernel = parse_kernel(&args.kernel, chart.dim())?;
            let lambdas = parse_floats(&args.lambda_ladder)?;
            if lambdas.is_empty() {
                return Err(CliError::BadInput("lambda ladder is empty".into()));
            }
            let report = factorgroup::pushforward_membership(
                &chart,
                kernel.as_ref(),
                &lambdas,
                args.window,
                args.pts,
            )?;
            let entries: Vec<Value> = report
                .entries
                .iter()
                .map(|e| {
                    json!({
                        "operator": e.label,
                        "lambda": num(e.lambda),
                        "windows": e.windows.iter().map(|&w| num(w)).collect::<Vec<_>>(),
                        "sups": e.sups.iter().map(|&s| num(s)).collect::<Vec<_>>(),
                        "diverging": e.diverging,
                    })
                })
                .collect();
            let mut rows = vec![];
            for k in 0..chart.dim() {
                for i in 0..=400 {
                    let x = -args.window + 2.0 * args.window * i as f64 / 400.0;
                    let mut point = vec![0.0; chart.dim()];
                    point[k] = x;
                    rows.push(vec![k as f64, x, kernel.value(&point)]);
                }
            }
            Ok(Report {
                json: json!({
                    "status": "pass",
                    "entries": entries,
                }),
                csv: vec![(
                    "pushforward-kernel.csv".into(),
                    csv("axis,x,kernel", &rows),
                )],
            })
        }
    }
}
