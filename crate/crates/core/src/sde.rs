//! Pathwise Euler scheme for `dX = b(r, X) dr + σ(r, X) dB^H`.
//!
//! The scheme is the left-point rule
//! `X_{k+1} = X_k + b(t_k, X_k) h + σ(t_k, X_k) ΔB_k`, whose noise sums converge
//! to the generalized Stieltjes integral when the Hölder orders of the
//! integrand and the driver sum above one.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::coeff::{default_alpha, CoefficientField};
use crate::error::{invalid, Error, Result};
use crate::fbm::{FbmPath, FbmSampler, HurstParameter, SampleOptions};
use crate::frac::{lambda_alpha, FracOrder};
use crate::grid::GridFunction;

/// States with a larger Euclidean norm abort the solve.
pub const BLOW_UP_THRESHOLD: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    /// Largest `|X_{k+1} - X_k|`.
    pub max_step_increment: f64,
    /// `Λ_α` of the driver over the solve interval, when requested.
    pub lambda_alpha_driver: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolveOptions {
    /// Fractional order recorded with the solution; defaults to the midpoint
    /// of `(1 - H, 1/2)`.
    pub alpha: Option<FracOrder>,
    pub lambda_diagnostic: bool,
}

/// A solution on the driver's grid restricted to `[t, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionPath {
    pub x0: Vec<f64>,
    pub values: GridFunction,
    pub driver_seed: u64,
    pub hurst: HurstParameter,
    pub alpha_used: FracOrder,
    pub diagnostics: SolveDiagnostics,
    /// `∑_k σ(t_k, X_k) ΔB_k` over the whole interval.
    pub noise_sum: Vec<f64>,
    pub source: String,
}

impl SolutionPath {
    pub fn t(&self) -> f64 {
        self.values.t0()
    }

    pub fn t_end(&self) -> f64 {
        self.values.t_end()
    }

    pub fn terminal(&self) -> &[f64] {
        self.values.node(self.values.n_steps())
    }

    pub fn metadata(&self) -> Vec<(String, String)> {
        let mut m = vec![
            ("coefficients".to_string(), self.source.clone()),
            ("seed".to_string(), self.driver_seed.to_string()),
            ("hurst".to_string(), self.hurst.value().to_string()),
            ("alpha_used".to_string(), self.alpha_used.value().to_string()),
            ("n_steps".to_string(), self.values.n_steps().to_string()),
            ("max_step_increment".to_string(), self.diagnostics.max_step_increment.to_string()),
        ];
        if let Some(l) = self.diagnostics.lambda_alpha_driver {
            m.push(("lambda_alpha_driver".to_string(), l.to_string()));
        }
        m
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        self.values.write_csv(w, &self.metadata())
    }
}

fn resolve_alpha(hurst: HurstParameter, options: &SolveOptions) -> Result<FracOrder> {
    match options.alpha {
        Some(a) => Ok(a),
        None => default_alpha(hurst, 0.5),
    }
}

/// Solves on the driver nodes between `t` and `t_end`.
pub fn solve_euler(
    cf: &CoefficientField,
    x0: &[f64],
    t: f64,
    t_end: f64,
    driver: &FbmPath,
    options: &SolveOptions,
) -> Result<SolutionPath> {
    let d = cf.dim();
    if x0.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: x0.len(),
        });
    }
    if let Some(i) = x0.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            location: format!("initial state component {i}"),
        });
    }
    let grid = driver.grid();
    let a = grid.index_of(t)?;
    let b = grid.index_of(t_end)?;
    if b <= a {
        return Err(invalid("interval", format!("need t < T, got [{t}, {t_end}]")));
    }
    let alpha_used = resolve_alpha(driver.hurst(), options)?;
    let h = grid.step();
    let path = driver.values();
    let mut values = Vec::with_capacity((b - a + 1) * d);
    values.extend_from_slice(x0);
    let mut x = x0.to_vec();
    let mut drift = vec![0.0; d];
    let mut diffusion = vec![0.0; d];
    let mut noise_sum = vec![0.0; d];
    let mut max_step = 0.0f64;
    for k in a..b {
        let tk = grid.time(k);
        cf.drift_into(tk, &x, &mut drift)?;
        cf.diffusion_into(tk, &x, &mut diffusion)?;
        let db = path[k + 1] - path[k];
        let mut step_sq = 0.0;
        let mut norm_sq = 0.0;
        for i in 0..d {
            let noise = diffusion[i] * db;
            noise_sum[i] += noise;
            let dx = drift[i] * h + noise;
            x[i] += dx;
            step_sq += dx * dx;
            norm_sq += x[i] * x[i];
        }
        max_step = max_step.max(step_sq.sqrt());
        if !(norm_sq.sqrt() <= BLOW_UP_THRESHOLD) {
            return Err(Error::BlowUp { time: grid.time(k + 1) });
        }
        values.extend_from_slice(&x);
    }
    let lambda_alpha_driver = if options.lambda_diagnostic {
        Some(lambda_alpha(grid, alpha_used, t, t_end)?)
    } else {
        None
    };
    Ok(SolutionPath {
        x0: x0.to_vec(),
        values: GridFunction::new(grid.time(a), grid.time(b), d, values)?,
        driver_seed: driver.seed(),
        hurst: driver.hurst(),
        alpha_used,
        diagnostics: SolveDiagnostics {
            max_step_increment: max_step,
            lambda_alpha_driver,
        },
        noise_sum,
        source: cf.source_text(),
    })
}

/// `X(s) = x0 · exp(λ B(s))` on the driver's grid, the solution of
/// `dX = λ X dB^H` started at `x0` at the driver's origin.
pub fn exact_geometric(driver: &FbmPath, lambda: f64, x0: f64) -> Result<SolutionPath> {
    let vals: Vec<f64> = driver.values().iter().map(|b| x0 * (lambda * b).exp()).collect();
    let values = GridFunction::from_scalar(driver.t0(), driver.t_end(), vals)?;
    let alpha_used = default_alpha(driver.hurst(), 0.5)?;
    let max_step = values.values().windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
    Ok(SolutionPath {
        x0: vec![x0],
        values,
        driver_seed: driver.seed(),
        hurst: driver.hurst(),
        alpha_used,
        diagnostics: SolveDiagnostics {
            max_step_increment: max_step,
            lambda_alpha_driver: None,
        },
        noise_sum: vec![x0 * ((lambda * driver.terminal()).exp() - 1.0)],
        source: format!("exact geometric, lambda = {lambda}"),
    })
}

/// What the levels of a convergence study are compared against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ConvergenceReference {
    /// The solve on the finest level.
    FinestLevel,
    /// `x0 · exp(λ B)` on the finest driver.
    Geometric { lambda: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelError {
    pub level: usize,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub errors: Vec<LevelError>,
    /// Fitted `p` in `error ~ n^{-p}`; absent when the scheme is exact.
    pub order: Option<f64>,
    pub exact: bool,
}

/// Relative size below which every level error counts as exact.
const EXACT_TOL: f64 = 1e-12;

/// Solves each level on restrictions of one driver path sampled at the
/// finest level and reports the sup-norm error at the coarse nodes.
#[allow(clippy::too_many_arguments)]
pub fn convergence_study(
    cf: &CoefficientField,
    x0: &[f64],
    t: f64,
    t_end: f64,
    hurst: HurstParameter,
    seed: u64,
    levels: &[usize],
    reference: ConvergenceReference,
) -> Result<RateReport> {
    if levels.len() < 2 {
        return Err(invalid("levels", "need at least two levels"));
    }
    for w in levels.windows(2) {
        if !(w[0] < w[1] && w[0] > 0 && w[1] % w[0] == 0) {
            return Err(invalid(
                "levels",
                format!("levels must be strictly increasing and nested, got {} then {}", w[0], w[1]),
            ));
        }
    }
    let finest = *levels.last().expect("nonempty");
    let driver = FbmSampler::new(hurst, t, t_end, finest, &SampleOptions::default())?.sample(seed);
    let options = SolveOptions::default();
    let reference_path = match reference {
        ConvergenceReference::FinestLevel => solve_euler(cf, x0, t, t_end, &driver, &options)?,
        ConvergenceReference::Geometric { lambda } => {
            if x0.len() != 1 {
                return Err(Error::DimensionMismatch {
                    expected: 1,
                    found: x0.len(),
                });
            }
            exact_geometric(&driver, lambda, x0[0])?
        }
    };
    let compared = match reference {
        ConvergenceReference::FinestLevel => &levels[..levels.len() - 1],
        ConvergenceReference::Geometric { .. } => levels,
    };
    let scale = 1.0 + reference_path.values.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut errors = Vec::with_capacity(compared.len());
    for &level in compared {
        let factor = finest / level;
        let coarse = solve_euler(cf, x0, t, t_end, &driver.coarsen(factor)?, &options)?;
        let error = (0..=level)
            .map(|k| {
                let a = coarse.values.node(k);
                let b = reference_path.values.node(k * factor);
                a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt()
            })
            .fold(0.0, f64::max);
        errors.push(LevelError { level, error });
    }
    let exact = errors.iter().all(|e| e.error <= EXACT_TOL * scale);
    let order = if exact { None } else { fitted_order(&errors) };
    Ok(RateReport { errors, order, exact })
}

/// Least-squares slope of `-ln error` against `ln n`.
fn fitted_order(errors: &[LevelError]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = errors
        .iter()
        .filter(|e| e.error > 0.0)
        .map(|e| ((e.level as f64).ln(), -e.error.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}
