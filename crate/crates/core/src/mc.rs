//! Monte Carlo experiments: many driver paths, one solve per path, and the
//! largest excursion of each solution outside the constraint set.
//!
//! Paths are independent work units run on the rayon pool. Per-path results
//! are collected in index order, so reports do not depend on the schedule.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeff::CoefficientField;
use crate::error::{invalid, Error, Result};
use crate::fbm::{derive_seed, holder_seminorm, FbmPath, FbmSampler, HurstParameter, SampleOptions};
use crate::frac::{lambda_alpha, stieltjes_integral, FracOrder};
use crate::grid::GridFunction;
use crate::sde::{solve_euler, SolveOptions};
use crate::viability::{check_constraint, CheckReport, CheckSettings, ConstraintSet};

/// Starting point of every path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "policy", deny_unknown_fields)]
pub enum InitialCondition {
    /// The same point for every path; `[x0, y0]` for comparison runs.
    Fixed { x: Vec<f64> },
    /// Path `i` starts at point `i` of the deterministic boundary sample.
    BoundaryUniform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub hurst: HurstParameter,
    pub t: f64,
    pub t_end: f64,
    pub n_steps: usize,
    pub n_paths: usize,
    pub master_seed: u64,
    pub coefficients: CoefficientField,
    /// Second field of a comparison run.
    pub upper: Option<CoefficientField>,
    pub constraint: ConstraintSet,
    pub membership_tol: f64,
    pub x0: InitialCondition,
    pub check: CheckSettings,
    pub alpha: Option<FracOrder>,
    /// Computes `Λ_α` of every driver (quadratic in `n_steps`).
    pub lambda_diagnostic: bool,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(invalid("n_paths", "must be at least 1"));
        }
        if self.n_steps == 0 {
            return Err(invalid("n_steps", "must be at least 1"));
        }
        if !(self.membership_tol > 0.0) {
            return Err(invalid("membership_tol", "must be positive"));
        }
        if !(self.t_end > self.t && self.t >= 0.0) {
            return Err(invalid("interval", format!("need 0 <= t < T, got [{}, {}]", self.t, self.t_end)));
        }
        self.constraint.validate()?;
        let dim = match self.constraint {
            ConstraintSet::ComparisonCone => {
                let upper = self
                    .upper
                    .as_ref()
                    .ok_or_else(|| invalid("coefficients_upper", "comparison runs need a second field"))?;
                for cf in [&self.coefficients, upper] {
                    if cf.dim() != 1 {
                        return Err(invalid("coefficients", "comparison fields must be one-dimensional"));
                    }
                }
                2
            }
            _ => {
                if self.coefficients.dim() != self.constraint.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: self.constraint.dim(),
                        found: self.coefficients.dim(),
                    });
                }
                self.constraint.dim()
            }
        };
        if let InitialCondition::Fixed { x } = &self.x0 {
            if x.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: x.len(),
                });
            }
        }
        Ok(())
    }

    fn start(&self, i: usize, boundary: &[Vec<f64>]) -> Vec<f64> {
        match &self.x0 {
            InitialCondition::Fixed { x } => x.clone(),
            InitialCondition::BoundaryUniform => boundary[i % boundary.len()].clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSummary {
    pub index: usize,
    pub seed: u64,
    /// Largest signed excursion over the grid; absent after a blow-up.
    pub excursion: Option<f64>,
    pub violated: bool,
    pub blowup: bool,
    pub blowup_time: Option<f64>,
    pub lambda_alpha: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

impl Stats {
    fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        Some(Self {
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            mean: values.iter().sum::<f64>() / values.len() as f64,
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub kind: String,
    pub constraint: ConstraintSet,
    pub hurst: f64,
    pub n_steps: usize,
    pub n_paths: usize,
    pub master_seed: u64,
    pub membership_tol: f64,
    pub alpha_used: f64,
    pub check: CheckReport,
    pub violations: usize,
    pub blowups: usize,
    pub violation_fraction: f64,
    /// Worst signed excursion over paths that did not blow up.
    pub max_excursion: Option<f64>,
    pub lambda_alpha_stats: Option<Stats>,
    pub paths: Vec<PathSummary>,
}

impl ExperimentReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| invalid("report", e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    /// One row per path: `index,seed,excursion,violated,blowup`.
    pub fn write_paths_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "index,seed,excursion,violated,blowup")?;
        for p in &self.paths {
            let exc = p.excursion.map_or_else(|| "nan".to_string(), |e| e.to_string());
            writeln!(w, "{},{},{},{},{}", p.index, p.seed, exc, p.violated as u8, p.blowup as u8)?;
        }
        Ok(())
    }

    pub fn summary_line(&self) -> String {
        format!(
            "verdict {:?} violation_fraction {} max_excursion {}",
            self.check.verdict,
            self.violation_fraction,
            self.max_excursion.map_or_else(|| "n/a".to_string(), |e| e.to_string())
        )
        .replace("Pass", "PASS")
        .replace("Fail", "FAIL")
    }
}

/// One driver path and the excursion it produced.
fn run_path(
    config: &ExperimentConfig,
    sampler: &FbmSampler,
    i: usize,
    boundary: &[Vec<f64>],
    options: &SolveOptions,
) -> Result<PathSummary> {
    let seed = derive_seed(config.master_seed, i as u64);
    let driver = sampler.sample(seed);
    let x0 = config.start(i, boundary);
    let lambda = if config.lambda_diagnostic {
        let alpha = match options.alpha {
            Some(a) => a,
            None => crate::coeff::default_alpha(config.hurst, 0.5)?,
        };
        Some(lambda_alpha(driver.grid(), alpha, config.t, config.t_end)?)
    } else {
        None
    };
    let outcome = excursion(config, &driver, &x0, options);
    let (excursion, blowup_time) = match outcome {
        Ok(e) => (Some(e), None),
        Err(Error::BlowUp { time }) => (None, Some(time)),
        Err(e) => return Err(e),
    };
    let blowup = blowup_time.is_some();
    Ok(PathSummary {
        index: i,
        seed,
        excursion,
        violated: blowup || excursion.is_some_and(|e| e > config.membership_tol),
        blowup,
        blowup_time,
        lambda_alpha: lambda,
    })
}

fn excursion(config: &ExperimentConfig, driver: &FbmPath, x0: &[f64], options: &SolveOptions) -> Result<f64> {
    let (t, t_end) = (config.t, config.t_end);
    match &config.constraint {
        ConstraintSet::ComparisonCone => {
            let upper = config.upper.as_ref().expect("validated");
            let lo = solve_euler(&config.coefficients, &x0[..1], t, t_end, driver, options)?;
            let hi = solve_euler(upper, &x0[1..], t, t_end, driver, options)?;
            Ok(lo
                .values
                .values()
                .iter()
                .zip(hi.values.values())
                .map(|(x, y)| x - y)
                .fold(f64::NEG_INFINITY, f64::max))
        }
        set => {
            let sol = solve_euler(&config.coefficients, x0, t, t_end, driver, options)?;
            let g = &sol.values;
            Ok((0..=g.n_steps())
                .map(|k| set.signed_distance(g.node(k)))
                .fold(f64::NEG_INFINITY, f64::max))
        }
    }
}

fn run(config: &ExperimentConfig, kind: &str) -> Result<ExperimentReport> {
    config.validate()?;
    let check = check_constraint(&config.constraint, &config.coefficients, config.upper.as_ref(), &config.check)?;
    let sampler = FbmSampler::new(config.hurst, config.t, config.t_end, config.n_steps, &SampleOptions::default())?;
    let boundary = config.constraint.boundary_sample(config.n_paths);
    let options = SolveOptions {
        alpha: config.alpha,
        lambda_diagnostic: false,
    };
    let alpha_used = match config.alpha {
        Some(a) => a.value(),
        None => crate::coeff::default_alpha(config.hurst, 0.5)?.value(),
    };
    let paths = (0..config.n_paths)
        .into_par_iter()
        .map(|i| run_path(config, &sampler, i, &boundary, &options))
        .collect::<Result<Vec<_>>>()?;
    let violations = paths.iter().filter(|p| p.violated).count();
    let blowups = paths.iter().filter(|p| p.blowup).count();
    let max_excursion = paths.iter().filter_map(|p| p.excursion).reduce(f64::max);
    let lambdas: Vec<f64> = paths.iter().filter_map(|p| p.lambda_alpha).collect();
    Ok(ExperimentReport {
        kind: kind.to_string(),
        constraint: config.constraint.clone(),
        hurst: config.hurst.value(),
        n_steps: config.n_steps,
        n_paths: config.n_paths,
        master_seed: config.master_seed,
        membership_tol: config.membership_tol,
        alpha_used,
        check,
        violations,
        blowups,
        violation_fraction: violations as f64 / config.n_paths as f64,
        max_excursion,
        lambda_alpha_stats: Stats::of(&lambdas),
        paths,
    })
}

/// Viability of a sphere, ball or annulus.
pub fn run_viability(config: &ExperimentConfig) -> Result<ExperimentReport> {
    if matches!(config.constraint, ConstraintSet::HalfLine | ConstraintSet::ComparisonCone) {
        return Err(invalid("constraint", "viability runs need a sphere, ball or annulus"));
    }
    run(config, "viability")
}

/// Positivity: `K = [0, ∞)` in one dimension.
pub fn run_positivity(config: &ExperimentConfig) -> Result<ExperimentReport> {
    if config.constraint != ConstraintSet::HalfLine {
        return Err(invalid("constraint", "positivity runs need the half line"));
    }
    run(config, "positivity")
}

/// Comparison of two coupled solutions driven by the same path; the
/// excursion is `max_s (X_s - Y_s)`.
pub fn run_comparison(config: &ExperimentConfig) -> Result<ExperimentReport> {
    if config.constraint != ConstraintSet::ComparisonCone {
        return Err(invalid("constraint", "comparison runs need the comparison cone"));
    }
    run(config, "comparison")
}

/// Dispatches on the constraint kind.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    match config.constraint {
        ConstraintSet::HalfLine => run_positivity(config),
        ConstraintSet::ComparisonCone => run_comparison(config),
        _ => run_viability(config),
    }
}

/// Both sides of the two local bounds on a window `[t, t + h̄]`:
///
/// ```text
/// (a) |∫_τ^s U dr|     <= D (s-t)^{1-α} (s-τ)
/// (b) |∫_τ^s V dB^H|   <= C D̃ Λ_α(B^H) (s-t)^m (s-τ)^{1-α},   m = min{β, 1-α}
/// ```
///
/// with `D`, `D̃` the empirical `(1-α)`- and `m`-Hölder seminorms of `U`, `V`
/// and `C = 1/(1-α) + 1/((m-α)(m-α+1))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalBoundReport {
    pub d_r: f64,
    pub d_tilde: f64,
    pub lambda_alpha: f64,
    pub constant: f64,
    pub m: f64,
    pub max_ratio_a: f64,
    pub max_ratio_b: f64,
    /// `(τ, s)` of the largest ratio in each bound.
    pub worst_a: (f64, f64),
    pub worst_b: (f64, f64),
    pub pairs: usize,
}

fn trapezoid(u: &GridFunction, from: usize, to: usize) -> Vec<f64> {
    let h = u.step();
    let mut acc = vec![0.0; u.dim()];
    for k in from..to {
        for (c, a) in acc.iter_mut().enumerate() {
            *a += 0.5 * h * (u.node(k)[c] + u.node(k + 1)[c]);
        }
    }
    acc
}

fn euclid(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn ratio(lhs: f64, rhs: f64) -> f64 {
    if lhs == 0.0 {
        0.0
    } else {
        lhs / rhs
    }
}

/// Evaluates both bounds on a `grid_size × grid_size` lattice of grid nodes
/// `τ < s` in `[t, t + h̄]`. `U`, `V` and the driver share one grid, and
/// `β` enters only through `m = min{β, 1-α}`.
#[allow(clippy::too_many_arguments)]
pub fn local_bound_diagnostic(
    u: &GridFunction,
    v: &GridFunction,
    driver: &GridFunction,
    alpha: FracOrder,
    beta: f64,
    t: f64,
    h_bar: f64,
    grid_size: usize,
) -> Result<LocalBoundReport> {
    let al = alpha.value();
    let m = beta.min(1.0 - al);
    if !(m > al) {
        return Err(invalid("beta", format!("need min(beta, 1 - alpha) > alpha, got {m}")));
    }
    if u.n_steps() != driver.n_steps() || v.n_steps() != driver.n_steps() || driver.dim() != 1 {
        return Err(invalid("processes", "U, V and a scalar driver must share one grid"));
    }
    let a = driver.index_of(t)?;
    let b = driver.index_of(t + h_bar)?;
    if b <= a {
        return Err(invalid("h_bar", "window must contain at least one step"));
    }
    for (name, f) in [("U", u), ("V", v)] {
        if euclid(f.node(a)) != 0.0 {
            return Err(invalid(name, "must vanish at t"));
        }
    }
    let d_r = holder_seminorm(&u.slice(a, b)?, 1.0 - al)?;
    let d_tilde = holder_seminorm(&v.slice(a, b)?, m)?;
    let lambda = lambda_alpha(driver, alpha, t, t + h_bar)?;
    let constant = 1.0 / (1.0 - al) + 1.0 / ((m - al) * (m - al + 1.0));
    let nodes: Vec<usize> = {
        let k = grid_size.max(2);
        let mut idx: Vec<usize> = (0..k).map(|j| a + ((b - a) * j).div_ceil(k - 1)).collect();
        idx.dedup();
        idx
    };
    let mut report = LocalBoundReport {
        d_r,
        d_tilde,
        lambda_alpha: lambda,
        constant,
        m,
        max_ratio_a: 0.0,
        max_ratio_b: 0.0,
        worst_a: (t, t),
        worst_b: (t, t),
        pairs: 0,
    };
    for (p, &ti) in nodes.iter().enumerate() {
        for &si in &nodes[p + 1..] {
            let (tau, s) = (driver.time(ti), driver.time(si));
            let (st, sr) = (s - t, s - tau);
            let ra = ratio(euclid(&trapezoid(u, ti, si)), d_r * st.powf(1.0 - al) * sr);
            let integral = stieltjes_integral(v, driver, alpha, tau, s)?;
            let rb = ratio(euclid(&integral), constant * d_tilde * lambda * st.powf(m) * sr.powf(1.0 - al));
            if ra > report.max_ratio_a {
                report.max_ratio_a = ra;
                report.worst_a = (tau, s);
            }
            if rb > report.max_ratio_b {
                report.max_ratio_b = rb;
                report.worst_b = (tau, s);
            }
            report.pairs += 1;
        }
    }
    Ok(report)
}
