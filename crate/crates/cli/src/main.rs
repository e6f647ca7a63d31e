//! `fbmv`: sample fBm, evaluate pathwise integrals, solve, check and run
//! Monte Carlo viability experiments from JSON configs.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or config error,
//! 3 checker verdict FAIL.

mod config;

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::Utc;
use clap::{Parser, Subcommand, ValueEnum};
use fbm_viability::coeff::{default_alpha, CoefficientField};
use fbm_viability::fbm::{derive_seed, FbmSampler, HurstParameter, SampleOptions, SamplingMethod};
use fbm_viability::frac::{lambda_alpha, norm_w_alpha_1, stieltjes_integral, FracOrder};
use fbm_viability::mc::{run_experiment, InitialCondition};
use fbm_viability::sde::{convergence_study, solve_euler, ConvergenceReference, SolveOptions};
use fbm_viability::viability::{check_constraint, ConstraintSet};
use fbm_viability::GridFunction;
use serde_json::{json, Value};

use crate::config::{hash_value, load_config, LoadedConfig};

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Runtime(String),
    CheckFailed,
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Runtime(_) => 1,
            Failure::Usage(_) => 2,
            Failure::CheckFailed => 3,
        }
    }
}

fn usage(e: impl ToString) -> Failure {
    Failure::Usage(e.to_string())
}

fn runtime(e: impl ToString) -> Failure {
    Failure::Runtime(e.to_string())
}

#[derive(Parser)]
#[command(name = "fbmv", version, about = "Pathwise fBm calculus and viability experiments")]
struct Cli {
    /// JSON experiment config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Validate inputs and print the plan without writing anything.
    #[arg(long, global = true)]
    dry_run: bool,
    /// Base directory for outputs.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Circulant,
    Cholesky,
}

impl From<MethodArg> for SamplingMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Circulant => SamplingMethod::CirculantEmbedding,
            MethodArg::Cholesky => SamplingMethod::Cholesky,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Case {
    /// b = 0, σ = λx against x0·exp(λB).
    Geometric,
    /// Constant drift and noise; exact at the nodes.
    Additive,
    /// Constant drift, σ ≡ 0.
    ZeroNoise,
    /// Coefficients and start point from --config against the finest level.
    Config,
}

#[derive(Subcommand)]
enum Command {
    /// Sample one fBm path on [0, T] and write it as CSV.
    GenerateFbm {
        #[arg(long, value_parser = parse_hurst)]
        hurst: HurstParameter,
        #[arg(long)]
        steps: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        t_end: f64,
        #[arg(long, value_enum, default_value = "circulant")]
        method: MethodArg,
    },
    /// Generalized Stieltjes integral of two CSV paths on a shared grid.
    Integrate {
        #[arg(long)]
        f: PathBuf,
        #[arg(long)]
        g: PathBuf,
        /// Fractional order; defaults from the `hurst` metadata of g.
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        t: Option<f64>,
        #[arg(long)]
        s: Option<f64>,
    },
    /// Solve one path of the configured equation.
    Solve {
        /// Path index; the driver seed is derived from the master seed.
        #[arg(long, default_value_t = 0)]
        path: usize,
        #[arg(long, default_value = "solution.csv")]
        out: PathBuf,
    },
    /// Run the deterministic checker and print its report.
    Check,
    /// Checker plus Monte Carlo, written to a fresh run directory.
    Run,
    /// Euler convergence study over nested levels.
    Convergence {
        /// Comma separated powers of two, at least three.
        #[arg(long, value_delimiter = ',', required = true)]
        levels: Vec<usize>,
        #[arg(long, value_enum, default_value = "geometric")]
        case: Case,
        #[arg(long, value_parser = parse_hurst, default_value = "0.75")]
        hurst: HurstParameter,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long, default_value = "convergence.csv")]
        out: PathBuf,
    },
}

fn parse_hurst(s: &str) -> Result<HurstParameter, String> {
    let v: f64 = s.parse().map_err(|e| format!("{s:?} is not a number: {e}"))?;
    HurstParameter::new(v).map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(m) | Failure::Runtime(m) => eprintln!("error: {m}"),
                Failure::CheckFailed => {}
            }
            ExitCode::from(f.code())
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(runtime)?;
    }
    match &cli.command {
        Command::GenerateFbm {
            hurst,
            steps,
            seed,
            out,
            t_end,
            method,
        } => generate_fbm(cli, *hurst, *steps, *seed, out, *t_end, (*method).into()),
        Command::Integrate { f, g, alpha, t, s } => integrate(cli, f, g, *alpha, *t, *s),
        Command::Solve { path, out } => solve(cli, *path, out),
        Command::Check => check(cli),
        Command::Run => run(cli),
        Command::Convergence {
            levels,
            case,
            hurst,
            seed,
            lambda,
            out,
        } => convergence(cli, levels, *case, *hurst, *seed, *lambda, out),
    }
}

fn require_config(cli: &Cli) -> Result<LoadedConfig, Failure> {
    let path = cli.config.as_ref().ok_or_else(|| usage("this command needs --config PATH"))?;
    load_config(path)
}

fn resolve(cli: &Cli, out: &Path) -> PathBuf {
    match &cli.out_dir {
        Some(dir) if out.is_relative() => dir.join(out),
        _ => out.to_path_buf(),
    }
}

fn create_file(path: &Path) -> Result<BufWriter<File>, Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| runtime(format!("{}: {e}", parent.display())))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn write_json(path: &Path, value: &Value) -> Result<(), Failure> {
    let mut w = create_file(path)?;
    let mut text = serde_json::to_string_pretty(value).map_err(runtime)?;
    text.push('\n');
    w.write_all(text.as_bytes()).and_then(|_| w.flush()).map_err(runtime)
}

fn with_hash(value: Value, hash: &str) -> Value {
    match value {
        Value::Object(mut map) => {
            map.insert("config_hash".into(), Value::String(hash.to_string()));
            Value::Object(map)
        }
        other => json!({ "config_hash": hash, "value": other }),
    }
}

fn generate_fbm(
    cli: &Cli,
    hurst: HurstParameter,
    steps: usize,
    seed: u64,
    out: &Path,
    t_end: f64,
    method: SamplingMethod,
) -> Result<(), Failure> {
    let params = json!({
        "command": "generate-fbm",
        "hurst": hurst.value(),
        "steps": steps,
        "seed": seed,
        "t_end": t_end,
        "method": method.as_str(),
    });
    let hash = hash_value(&params);
    let options = SampleOptions {
        method,
        ..SampleOptions::default()
    };
    let sampler = FbmSampler::new(hurst, 0.0, t_end, steps, &options).map_err(usage)?;
    let target = resolve(cli, out);
    if cli.dry_run {
        println!("plan: sample fBm H={} n={steps} seed={seed} on [0, {t_end}] -> {}", hurst.value(), target.display());
        return Ok(());
    }
    let path = sampler.sample(seed);
    let mut meta = path.metadata();
    meta.push(("config_hash".into(), hash));
    let mut w = create_file(&target)?;
    path.grid().write_csv(&mut w, &meta).map_err(runtime)?;
    w.flush().map_err(runtime)?;
    println!("H={} n={steps} seed={seed} B_T={}", hurst.value(), path.terminal());
    Ok(())
}

fn read_grid(path: &Path) -> Result<(GridFunction, Vec<(String, String)>), Failure> {
    let file = File::open(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    GridFunction::read_csv(BufReader::new(file)).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn integrate(
    cli: &Cli,
    f_path: &Path,
    g_path: &Path,
    alpha: Option<f64>,
    t: Option<f64>,
    s: Option<f64>,
) -> Result<(), Failure> {
    let (f, _) = read_grid(f_path)?;
    let (g, g_meta) = read_grid(g_path)?;
    let hurst = g_meta
        .iter()
        .find(|(k, _)| k == "hurst")
        .map(|(_, v)| v.parse::<f64>().map_err(usage).and_then(|h| HurstParameter::new(h).map_err(usage)))
        .transpose()?;
    let alpha = match (alpha, hurst) {
        (Some(a), _) => FracOrder::new(a).map_err(usage)?,
        (None, Some(h)) => default_alpha(h, 0.5).map_err(usage)?,
        (None, None) => return Err(usage("--alpha is required when g carries no hurst metadata")),
    };
    if let Some(h) = hurst {
        alpha.check_young(h.value()).map_err(usage)?;
    }
    let t = t.unwrap_or(g.t0());
    let s = s.unwrap_or(g.t_end());
    let (a, b) = (g.index_of(t).map_err(usage)?, g.index_of(s).map_err(usage)?);
    let f = f.slice(a, b).map_err(usage)?;
    let g = g.slice(a, b).map_err(usage)?;
    if cli.dry_run {
        println!("plan: integrate {} against {} on [{t}, {s}] with alpha {}", f_path.display(), g_path.display(), alpha.value());
        return Ok(());
    }
    let integral = stieltjes_integral(&f, &g, alpha, t, s).map_err(usage)?;
    let lambda = lambda_alpha(&g, alpha, t, s).map_err(runtime)?;
    let norm = norm_w_alpha_1(&f, alpha).map_err(runtime)?;
    let report = json!({
        "integral": integral,
        "alpha": alpha.value(),
        "t": t,
        "s": s,
        "lambda_alpha": lambda,
        "norm_w_alpha_1": norm,
        "duality_bound": lambda * norm,
    });
    println!("{}", serde_json::to_string_pretty(&report).map_err(runtime)?);
    Ok(())
}

fn solve(cli: &Cli, index: usize, out: &Path) -> Result<(), Failure> {
    let loaded = require_config(cli)?;
    let exp = loaded.config.experiment_config()?;
    if exp.constraint == ConstraintSet::ComparisonCone {
        return Err(usage("solve takes a single field; use `run` for comparison configs"));
    }
    let x0 = match &exp.x0 {
        InitialCondition::Fixed { x } => x.clone(),
        InitialCondition::BoundaryUniform => {
            let pts = exp.constraint.boundary_sample(exp.n_paths);
            pts[index % pts.len()].clone()
        }
    };
    let seed = derive_seed(exp.master_seed, index as u64);
    let target = resolve(cli, out);
    if cli.dry_run {
        println!("plan: solve path {index} (seed {seed}) from {x0:?} with {} steps -> {}", exp.n_steps, target.display());
        return Ok(());
    }
    let driver = FbmSampler::new(exp.hurst, exp.t, exp.t_end, exp.n_steps, &SampleOptions::default())
        .map_err(runtime)?
        .sample(seed);
    let options = SolveOptions {
        alpha: exp.alpha,
        lambda_diagnostic: exp.lambda_diagnostic,
    };
    let sol = solve_euler(&exp.coefficients, &x0, exp.t, exp.t_end, &driver, &options).map_err(runtime)?;
    let mut meta = sol.metadata();
    meta.push(("config_hash".into(), loaded.hash.clone()));
    let mut w = create_file(&target)?;
    sol.values.write_csv(&mut w, &meta).map_err(runtime)?;
    w.flush().map_err(runtime)?;
    println!("path {index} seed {seed} X(T) = {:?} max_step_increment {}", sol.terminal(), sol.diagnostics.max_step_increment);
    Ok(())
}

fn check(cli: &Cli) -> Result<(), Failure> {
    let loaded = require_config(cli)?;
    let exp = loaded.config.experiment_config()?;
    if cli.dry_run {
        println!("plan: check {} with {} boundary samples", exp.constraint.name(), exp.check.boundary_samples);
        return Ok(());
    }
    let report =
        check_constraint(&exp.constraint, &exp.coefficients, exp.upper.as_ref(), &exp.check).map_err(runtime)?;
    println!("{}", serde_json::to_string_pretty(&report).map_err(runtime)?);
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::CheckFailed)
    }
}

/// A new directory `run-<UTC timestamp>-<hash prefix>` under `base`, never
/// reusing an existing one.
fn create_run_dir(base: &Path, hash: &str) -> io::Result<PathBuf> {
    fs::create_dir_all(base)?;
    let stem = format!("run-{}-{}", Utc::now().format("%Y%m%dT%H%M%S%.3fZ"), &hash[..12]);
    for k in 0.. {
        let name = if k == 0 { stem.clone() } else { format!("{stem}-{k}") };
        let dir = base.join(name);
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e),
        }
    }
    unreachable!()
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let loaded = require_config(cli)?;
    let exp = loaded.config.experiment_config()?;
    let base = cli.out_dir.clone().unwrap_or_else(|| loaded.config.output_dir.clone());
    if cli.dry_run {
        println!(
            "plan: {} on {} with {} paths x {} steps, H={}, master seed {}; would write report.json, paths.csv, provenance.json under {}/run-<timestamp>-{}",
            if exp.constraint == ConstraintSet::ComparisonCone { "comparison" } else { "viability" },
            exp.constraint.name(),
            exp.n_paths,
            exp.n_steps,
            exp.hurst.value(),
            exp.master_seed,
            base.display(),
            &loaded.hash[..12]
        );
        return Ok(());
    }
    let dir = create_run_dir(&base, &loaded.hash).map_err(|e| runtime(format!("{}: {e}", base.display())))?;
    let seeds: Vec<u64> = (0..exp.n_paths as u64).map(|i| derive_seed(exp.master_seed, i)).collect();
    let provenance = json!({
        "config": loaded.canonical,
        "versions": {
            "fbm-viability": fbm_viability::VERSION,
            "fbmv": env!("CARGO_PKG_VERSION"),
        },
        "sampling": SamplingMethod::CirculantEmbedding.as_str(),
        "master_seed": exp.master_seed,
        "path_seeds": seeds,
    });
    write_json(&dir.join("provenance.json"), &with_hash(provenance, &loaded.hash))?;
    let check =
        check_constraint(&exp.constraint, &exp.coefficients, exp.upper.as_ref(), &exp.check).map_err(runtime)?;
    write_json(&dir.join("check.json"), &with_hash(serde_json::to_value(&check).map_err(runtime)?, &loaded.hash))?;

    let report = match run_experiment(&exp) {
        Ok(r) => r,
        Err(e) => {
            let err = json!({ "error": e.to_string() });
            write_json(&dir.join("error.json"), &with_hash(err, &loaded.hash))?;
            eprintln!("partial outputs kept in {}", dir.display());
            return Err(runtime(e));
        }
    };
    write_json(&dir.join("report.json"), &with_hash(serde_json::to_value(&report).map_err(runtime)?, &loaded.hash))?;
    let mut w = create_file(&dir.join("paths.csv"))?;
    writeln!(w, "# config_hash: {}", loaded.hash).map_err(runtime)?;
    report.write_paths_csv(&mut w).map_err(runtime)?;
    w.flush().map_err(runtime)?;

    println!("{}", report.summary_line());
    eprintln!("outputs in {}", dir.display());
    if report.check.passed() {
        Ok(())
    } else {
        Err(Failure::CheckFailed)
    }
}

#[allow(clippy::too_many_arguments)]
fn convergence(
    cli: &Cli,
    levels: &[usize],
    case: Case,
    hurst: HurstParameter,
    seed: u64,
    lambda: f64,
    out: &Path,
) -> Result<(), Failure> {
    if levels.len() < 3 {
        return Err(usage(format!("need at least 3 levels for a fit, got {}", levels.len())));
    }
    if let Some(l) = levels.iter().find(|l| !l.is_power_of_two()) {
        return Err(usage(format!("level {l} is not a power of two")));
    }
    if levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(usage("levels must be strictly increasing"));
    }
    let constant = |b: &str, s: &str| CoefficientField::parse(1, &[b], &[s]).map_err(usage);
    let (cf, x0, t, t_end, hurst, seed, reference, hash) = match case {
        Case::Config => {
            let loaded = require_config(cli)?;
            let exp = loaded.config.experiment_config()?;
            let x0 = match exp.x0 {
                InitialCondition::Fixed { x } => x,
                InitialCondition::BoundaryUniform => exp.constraint.boundary_sample(1).remove(0),
            };
            let seed = derive_seed(exp.master_seed, 0);
            (exp.coefficients, x0, exp.t, exp.t_end, exp.hurst, seed, ConvergenceReference::FinestLevel, loaded.hash)
        }
        other => {
            let (cf, x0, reference) = match other {
                Case::Geometric => (
                    constant("0", &format!("{lambda} * x1"))?,
                    vec![1.0],
                    ConvergenceReference::Geometric { lambda },
                ),
                Case::Additive => (constant("0.5", "1")?, vec![0.0], ConvergenceReference::FinestLevel),
                _ => (constant("1", "0")?, vec![0.0], ConvergenceReference::FinestLevel),
            };
            let params = json!({
                "command": "convergence",
                "case": cf.source_text(),
                "hurst": hurst.value(),
                "seed": seed,
                "levels": levels,
            });
            (cf, x0, 0.0, 1.0, hurst, seed, reference, hash_value(&params))
        }
    };
    let target = resolve(cli, out);
    if cli.dry_run {
        println!("plan: convergence of {} over levels {levels:?} -> {}", cf.source_text(), target.display());
        return Ok(());
    }
    let rate = convergence_study(&cf, &x0, t, t_end, hurst, seed, levels, reference).map_err(|e| match e {
        fbm_viability::Error::InvalidParameter { .. } => usage(e),
        other => runtime(other),
    })?;
    let mut w = create_file(&target)?;
    writeln!(w, "# config_hash: {hash}").map_err(runtime)?;
    writeln!(w, "level,error").map_err(runtime)?;
    for e in &rate.errors {
        writeln!(w, "{},{}", e.level, e.error).map_err(runtime)?;
        println!("level {} error {:.6e}", e.level, e.error);
    }
    w.flush().map_err(runtime)?;
    match (rate.exact, rate.order) {
        (true, _) => println!("exact"),
        (false, Some(p)) => println!("order {p:.4}"),
        (false, None) => println!("order n/a"),
    }
    Ok(())
}
