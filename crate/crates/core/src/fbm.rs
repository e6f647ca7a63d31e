//! Exact sampling of fractional Brownian motion and path diagnostics.
//!
//! Paths are built from fractional Gaussian noise (the increment sequence),
//! sampled either by circulant embedding (Davies–Harte / Wood–Chan) or by a
//! dense Cholesky factor of the increment covariance, then cumulatively
//! summed. By self-similarity the unit-step noise is generated first and
//! scaled by `h^H`, so the embedding spectrum does not depend on the step.

use std::io::Write;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::GridFunction;

/// Hurst index of the driving noise.
///
/// Any value in `(0, 1)` can be constructed; only `(1/2, 1)` is in the
/// working range of the integral and solver, see [`HurstParameter::is_standard`].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct HurstParameter(f64);

impl HurstParameter {
    pub fn new(value: f64) -> Result<Self> {
        if !(value > 0.0 && value < 1.0) {
            return Err(invalid(
                "hurst parameter",
                format!("{value} is outside the open interval (0, 1)"),
            ));
        }
        Ok(Self(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// `true` when `1/2 < H < 1`. Smaller values are diagnostics-only.
    pub fn is_standard(self) -> bool {
        self.0 > 0.5
    }
}

impl TryFrom<f64> for HurstParameter {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Self::new(value)
    }
}

impl From<HurstParameter> for f64 {
    fn from(h: HurstParameter) -> f64 {
        h.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMethod {
    #[default]
    CirculantEmbedding,
    Cholesky,
}

impl SamplingMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            SamplingMethod::CirculantEmbedding => "circulant_embedding",
            SamplingMethod::Cholesky => "cholesky",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleOptions {
    pub method: SamplingMethod,
    /// Fall back to Cholesky when the embedding is not nonnegative definite.
    pub allow_fallback: bool,
    /// Eigenvalues of the unit-step embedding in `[eigen_floor, 0)` are
    /// clipped to zero; anything below counts as an embedding failure.
    pub eigen_floor: f64,
}

impl Default for SampleOptions {
    fn default() -> Self {
        Self {
            method: SamplingMethod::CirculantEmbedding,
            allow_fallback: true,
            eigen_floor: -1e-9,
        }
    }
}

/// `Cov(B_s, B_t) = (t^{2H} + s^{2H} - |t-s|^{2H}) / 2`.
pub fn fbm_covariance(s: f64, t: f64, hurst: HurstParameter) -> Result<f64> {
    if !(s >= 0.0 && t >= 0.0) {
        return Err(invalid("time", format!("covariance needs s, t >= 0, got ({s}, {t})")));
    }
    let two_h = 2.0 * hurst.value();
    Ok(0.5 * (t.powf(two_h) + s.powf(two_h) - (t - s).abs().powf(two_h)))
}

/// Autocovariance of unit-step fractional Gaussian noise at lag `k`.
pub fn fgn_autocovariance(k: usize, hurst: HurstParameter) -> f64 {
    let two_h = 2.0 * hurst.value();
    let k = k as f64;
    0.5 * ((k + 1.0).powf(two_h) - 2.0 * k.powf(two_h) + (k - 1.0).abs().powf(two_h))
}

/// Per-path seed derived from a master seed (SplitMix64 finalizer applied to
/// `master + (index + 1) * 0x9E3779B97F4A7C15`). Independent of scheduling.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A sampled path on a uniform grid, starting at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct FbmPath {
    hurst: HurstParameter,
    seed: u64,
    method: SamplingMethod,
    fallback_used: bool,
    grid: GridFunction,
}

impl FbmPath {
    /// Wraps externally produced values (e.g. read back from CSV).
    pub fn from_values(
        hurst: HurstParameter,
        t0: f64,
        t_end: f64,
        values: Vec<f64>,
        seed: u64,
        method: SamplingMethod,
    ) -> Result<Self> {
        if values.first() != Some(&0.0) {
            return Err(invalid("fbm path", "values[0] must be 0"));
        }
        Ok(Self {
            hurst,
            seed,
            method,
            fallback_used: false,
            grid: GridFunction::from_scalar(t0, t_end, values)?,
        })
    }

    pub fn hurst(&self) -> HurstParameter {
        self.hurst
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Method that actually produced the values.
    pub fn method(&self) -> SamplingMethod {
        self.method
    }

    pub fn fallback_used(&self) -> bool {
        self.fallback_used
    }

    pub fn t0(&self) -> f64 {
        self.grid.t0()
    }

    pub fn t_end(&self) -> f64 {
        self.grid.t_end()
    }

    pub fn n_steps(&self) -> usize {
        self.grid.n_steps()
    }

    pub fn step(&self) -> f64 {
        self.grid.step()
    }

    pub fn values(&self) -> &[f64] {
        self.grid.values()
    }

    pub fn terminal(&self) -> f64 {
        *self.grid.values().last().unwrap()
    }

    pub fn grid(&self) -> &GridFunction {
        &self.grid
    }

    /// Exact restriction to every `factor`-th node (sums of increments).
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        Ok(Self {
            grid: self.grid.coarsen(factor)?,
            ..self.clone()
        })
    }

    pub fn metadata(&self) -> Vec<(String, String)> {
        vec![
            ("hurst".into(), self.hurst.value().to_string()),
            ("seed".into(), self.seed.to_string()),
            ("method".into(), self.method.as_str().into()),
            ("n_steps".into(), self.n_steps().to_string()),
            ("fallback_used".into(), self.fallback_used.to_string()),
        ]
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        self.grid.write_csv(w, &self.metadata())
    }
}

/// Reusable sampler for a fixed `(H, grid)`; the spectral factor or Cholesky
/// factor is computed once and shared by every call to [`FbmSampler::sample`].
pub struct FbmSampler {
    hurst: HurstParameter,
    t0: f64,
    t_end: f64,
    n_steps: usize,
    method: SamplingMethod,
    fallback_used: bool,
    kernel: Kernel,
}

enum Kernel {
    Circulant {
        sqrt_eigs: Vec<f64>,
        fft: Arc<dyn Fft<f64>>,
    },
    Cholesky(DMatrix<f64>),
}

impl FbmSampler {
    pub fn new(
        hurst: HurstParameter,
        t0: f64,
        t_end: f64,
        n_steps: usize,
        options: &SampleOptions,
    ) -> Result<Self> {
        if n_steps == 0 {
            return Err(invalid("n_steps", "must be at least 1"));
        }
        if !(t0.is_finite() && t_end.is_finite() && t_end > t0) {
            return Err(invalid("time interval", format!("need t0 < T, got [{t0}, {t_end}]")));
        }
        let (kernel, method, fallback_used) = match options.method {
            SamplingMethod::Cholesky => (cholesky_kernel(hurst, n_steps)?, SamplingMethod::Cholesky, false),
            SamplingMethod::CirculantEmbedding => {
                let eigs = circulant_eigenvalues(hurst, n_steps);
                let min = eigs.iter().copied().fold(f64::INFINITY, f64::min);
                if min < options.eigen_floor {
                    if !options.allow_fallback {
                        return Err(Error::EmbeddingFailed { min_eigenvalue: min });
                    }
                    (cholesky_kernel(hurst, n_steps)?, SamplingMethod::Cholesky, true)
                } else {
                    let m = eigs.len() as f64;
                    let sqrt_eigs = eigs.iter().map(|&l| (l.max(0.0) / m).sqrt()).collect();
                    let fft = FftPlanner::new().plan_fft_forward(eigs.len());
                    (
                        Kernel::Circulant { sqrt_eigs, fft },
                        SamplingMethod::CirculantEmbedding,
                        false,
                    )
                }
            }
        };
        Ok(Self {
            hurst,
            t0,
            t_end,
            n_steps,
            method,
            fallback_used,
            kernel,
        })
    }

    pub fn fallback_used(&self) -> bool {
        self.fallback_used
    }

    pub fn sample(&self, seed: u64) -> FbmPath {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.n_steps;
        let increments: Vec<f64> = match &self.kernel {
            Kernel::Circulant { sqrt_eigs, fft } => {
                let mut buf: Vec<Complex<f64>> = sqrt_eigs
                    .iter()
                    .map(|&s| {
                        let re: f64 = StandardNormal.sample(&mut rng);
                        let im: f64 = StandardNormal.sample(&mut rng);
                        Complex::new(s * re, s * im)
                    })
                    .collect();
                fft.process(&mut buf);
                buf[..n].iter().map(|c| c.re).collect()
            }
            Kernel::Cholesky(l) => {
                let z: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
                (0..n)
                    .map(|i| (0..=i).map(|j| l[(i, j)] * z[j]).sum())
                    .collect()
            }
        };
        let scale = ((self.t_end - self.t0) / n as f64).powf(self.hurst.value());
        let mut values = Vec::with_capacity(n + 1);
        let mut acc = 0.0;
        values.push(0.0);
        for dx in increments {
            acc += dx * scale;
            values.push(acc);
        }
        FbmPath {
            hurst: self.hurst,
            seed,
            method: self.method,
            fallback_used: self.fallback_used,
            grid: GridFunction::from_scalar(self.t0, self.t_end, values)
                .expect("sampler produces finite values"),
        }
    }
}

/// Eigenvalues of the size-`2n` circulant embedding of unit-step fGn.
pub fn circulant_eigenvalues(hurst: HurstParameter, n_steps: usize) -> Vec<f64> {
    let m = 2 * n_steps;
    let mut row: Vec<Complex<f64>> = (0..m)
        .map(|j| {
            let lag = if j <= n_steps { j } else { m - j };
            Complex::new(fgn_autocovariance(lag, hurst), 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(m).process(&mut row);
    row.into_iter().map(|c| c.re).collect()
}

fn cholesky_kernel(hurst: HurstParameter, n: usize) -> Result<Kernel> {
    let gamma: Vec<f64> = (0..n).map(|k| fgn_autocovariance(k, hurst)).collect();
    let cov = DMatrix::from_fn(n, n, |i, j| gamma[i.abs_diff(j)]);
    let chol = cov
        .cholesky()
        .ok_or_else(|| invalid("covariance", "fGn covariance is not positive definite"))?;
    Ok(Kernel::Cholesky(chol.l()))
}

/// Samples one path with the default options for `method`.
pub fn sample_fbm(
    hurst: HurstParameter,
    t0: f64,
    t_end: f64,
    n_steps: usize,
    seed: u64,
    method: SamplingMethod,
) -> Result<FbmPath> {
    let options = SampleOptions {
        method,
        ..SampleOptions::default()
    };
    Ok(FbmSampler::new(hurst, t0, t_end, n_steps, &options)?.sample(seed))
}

/// Which grid pairs a Hölder seminorm scan visits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PairScan {
    /// Every pair `r < s`: O(n²).
    #[default]
    Exact,
    /// Only pairs whose index gap is a power of two: O(n log n), a lower bound.
    Dyadic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HolderEstimate {
    pub value: f64,
    /// `false` when the dyadic approximation was used.
    pub exact: bool,
}

/// `sup_{r<s} |f(s) - f(r)| / (s - r)^mu` over grid pairs, Euclidean norm.
pub fn holder_seminorm(f: &GridFunction, mu: f64) -> Result<f64> {
    Ok(holder_seminorm_with(f, mu, PairScan::Exact)?.value)
}

pub fn holder_seminorm_with(f: &GridFunction, mu: f64, scan: PairScan) -> Result<HolderEstimate> {
    if !(mu > 0.0 && mu < 1.0) {
        return Err(invalid("hölder exponent", format!("{mu} is outside (0, 1)")));
    }
    let n = f.n_steps();
    let h = f.step();
    let dim = f.dim();
    let vals = f.values();
    let dist = |i: usize, j: usize| -> f64 {
        (0..dim)
            .map(|c| {
                let d = vals[j * dim + c] - vals[i * dim + c];
                d * d
            })
            .sum::<f64>()
            .sqrt()
    };
    let weights: Vec<f64> = (0..=n).map(|k| (k as f64 * h).powf(-mu)).collect();
    let mut best = 0.0f64;
    match scan {
        PairScan::Exact => {
            for gap in 1..=n {
                let w = weights[gap];
                for i in 0..=n - gap {
                    best = best.max(dist(i, i + gap) * w);
                }
            }
        }
        PairScan::Dyadic => {
            let mut gap = 1;
            while gap <= n {
                let w = weights[gap];
                for i in 0..=n - gap {
                    best = best.max(dist(i, i + gap) * w);
                }
                gap *= 2;
            }
        }
    }
    Ok(HolderEstimate {
        value: best,
        exact: scan == PairScan::Exact,
    })
}

/// Largest difference quotient `max_k |f(t_{k+1}) - f(t_k)| / h`.
///
/// For fBm this grows like `h^{H-1}` as the grid is refined.
pub fn roughness_diagnostic(f: &GridFunction) -> Result<f64> {
    if f.n_steps() < 2 {
        return Err(invalid("n_steps", "roughness needs at least 2 steps"));
    }
    let h = f.step();
    let dim = f.dim();
    let v = f.values();
    let max = (0..f.n_steps())
        .map(|k| {
            (0..dim)
                .map(|c| (v[(k + 1) * dim + c] - v[k * dim + c]).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max);
    Ok(max / h)
}
