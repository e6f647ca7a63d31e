//! Deterministic viability conditions for the constraint-set catalog.
//!
//! Every checker is a falsifier over a finite, deterministic sample of
//! boundary points and times: a FAIL carries concrete witnesses, a PASS means
//! no violation was found at the sampled resolution.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::coeff::CoefficientField;
use crate::error::{invalid, Error, Result};
use crate::sampling::halton;

pub const DEFAULT_TOL: f64 = 1e-9;
const PASS_NOTE: &str = "no violation found at resolution";

/// Constant constraint sets `K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConstraintSet {
    Sphere { rho: f64, d: usize },
    Ball { rho: f64, d: usize },
    Annulus { r_in: f64, r_out: f64, d: usize },
    /// `[0, ∞)` in one dimension.
    HalfLine,
    /// `{(x, y) : y - x >= 0}` in two dimensions.
    ComparisonCone,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

impl ConstraintSet {
    pub fn validate(&self) -> Result<()> {
        let positive_dim = |d: usize| {
            if d == 0 {
                Err(invalid("constraint", "dimension must be positive"))
            } else {
                Ok(())
            }
        };
        match *self {
            ConstraintSet::Sphere { rho, d } | ConstraintSet::Ball { rho, d } => {
                positive_dim(d)?;
                if !(rho > 0.0 && rho.is_finite()) {
                    return Err(invalid("rho", format!("{rho} must be positive")));
                }
            }
            ConstraintSet::Annulus { r_in, r_out, d } => {
                positive_dim(d)?;
                if !(r_in > 0.0 && r_in < r_out && r_out.is_finite()) {
                    return Err(invalid("annulus", format!("need 0 < r_in < r_out, got {r_in}, {r_out}")));
                }
            }
            ConstraintSet::HalfLine | ConstraintSet::ComparisonCone => {}
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match *self {
            ConstraintSet::Sphere { d, .. } | ConstraintSet::Ball { d, .. } | ConstraintSet::Annulus { d, .. } => d,
            ConstraintSet::HalfLine => 1,
            ConstraintSet::ComparisonCone => 2,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ConstraintSet::Sphere { .. } => "sphere",
            ConstraintSet::Ball { .. } => "ball",
            ConstraintSet::Annulus { .. } => "annulus",
            ConstraintSet::HalfLine => "half_line",
            ConstraintSet::ComparisonCone => "comparison_cone",
        }
    }

    /// Signed excursion: positive outside `K`, zero or negative inside. For
    /// the sphere this is the distance `||x| - ρ|`; for the comparison cone it
    /// is the gap `x - y`.
    pub fn signed_distance(&self, x: &[f64]) -> f64 {
        match *self {
            ConstraintSet::Sphere { rho, .. } => (norm(x) - rho).abs(),
            ConstraintSet::Ball { rho, .. } => norm(x) - rho,
            ConstraintSet::Annulus { r_in, r_out, .. } => {
                let r = norm(x);
                (r_in - r).max(r - r_out)
            }
            ConstraintSet::HalfLine => -x[0],
            ConstraintSet::ComparisonCone => x[0] - x[1],
        }
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.dim() && self.signed_distance(x) <= tol
    }

    /// Deterministic points on `∂K`.
    pub fn boundary_sample(&self, n: usize) -> Vec<Vec<f64>> {
        match *self {
            ConstraintSet::Sphere { rho, d } | ConstraintSet::Ball { rho, d } => sphere_points(d, rho, n),
            ConstraintSet::Annulus { r_in, r_out, d } => {
                let mut pts = sphere_points(d, r_in, n.div_ceil(2));
                pts.extend(sphere_points(d, r_out, n.div_ceil(2)));
                pts
            }
            ConstraintSet::HalfLine => vec![vec![0.0]],
            ConstraintSet::ComparisonCone => linspace(-2.0, 2.0, n.max(2)).into_iter().map(|z| vec![z, z]).collect(),
        }
    }
}

/// Evenly spaced points including both ends.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![a],
        _ => (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect(),
    }
}

/// Deterministic points on `ρ S^{d-1}`: `±ρ` for `d = 1`; the angles
/// `2πk/n` (starting at `θ = 0`) for `d = 2`; otherwise the `2d` axis points
/// followed by Halton points pushed through the normal quantile and
/// normalized.
pub fn sphere_points(d: usize, rho: f64, n: usize) -> Vec<Vec<f64>> {
    match d {
        0 => vec![],
        1 => vec![vec![rho], vec![-rho]],
        2 => (0..n.max(1))
            .map(|k| {
                let th = std::f64::consts::TAU * k as f64 / n.max(1) as f64;
                vec![rho * th.cos(), rho * th.sin()]
            })
            .collect(),
        _ => {
            let mut pts = Vec::with_capacity(n.max(2 * d));
            for i in 0..d {
                for sign in [1.0, -1.0] {
                    let mut p = vec![0.0; d];
                    p[i] = sign * rho;
                    pts.push(p);
                }
            }
            let normal = Normal::standard();
            let mut idx = 0u64;
            while pts.len() < n {
                let z: Vec<f64> = halton(idx, d).into_iter().map(|u| normal.inverse_cdf(u)).collect();
                idx += 1;
                let r = norm(&z);
                if r > 1e-12 {
                    pts.push(z.iter().map(|v| rho * v / r).collect());
                }
            }
            pts
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub t: f64,
    pub x: Vec<f64>,
    pub clause: String,
    pub lhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub verdict: Verdict,
    pub tolerance: f64,
    pub witnesses: Vec<Witness>,
    pub samples: usize,
    pub note: String,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

/// Sampling resolution and slack shared by the checkers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckSettings {
    pub t_grid: Vec<f64>,
    pub boundary_samples: usize,
    /// Spatial grid for scalar checks such as comparison.
    pub z_grid: Vec<f64>,
    pub tol: f64,
    pub max_witnesses: usize,
}

impl Default for CheckSettings {
    fn default() -> Self {
        Self {
            t_grid: linspace(0.0, 1.0, 11),
            boundary_samples: 256,
            z_grid: linspace(-2.0, 2.0, 81),
            tol: DEFAULT_TOL,
            max_witnesses: 5,
        }
    }
}

/// Collects violations and keeps the worst ones.
struct Collector {
    tol: f64,
    samples: usize,
    found: Vec<(f64, usize, Witness)>,
}

impl Collector {
    fn new(tol: f64) -> Self {
        Self {
            tol,
            samples: 0,
            found: Vec::new(),
        }
    }

    /// Records a clause evaluation; `excess > 0` (or NaN) is a violation.
    fn record(&mut self, t: f64, x: &[f64], clause: &str, lhs: f64, excess: f64) {
        self.samples += 1;
        if excess > 0.0 || excess.is_nan() {
            let key = if excess.is_nan() { f64::INFINITY } else { excess };
            let order = self.found.len();
            self.found.push((
                key,
                order,
                Witness {
                    t,
                    x: x.to_vec(),
                    clause: clause.to_string(),
                    lhs,
                },
            ));
        }
    }

    fn equality(&mut self, t: f64, x: &[f64], clause: &str, lhs: f64) {
        let tol = self.tol;
        self.record(t, x, clause, lhs, lhs.abs() - tol);
    }

    fn at_most_zero(&mut self, t: f64, x: &[f64], clause: &str, lhs: f64) {
        let tol = self.tol;
        self.record(t, x, clause, lhs, lhs - tol);
    }

    fn at_least_zero(&mut self, t: f64, x: &[f64], clause: &str, lhs: f64) {
        let tol = self.tol;
        self.record(t, x, clause, lhs, -lhs - tol);
    }

    fn finish(mut self, max_witnesses: usize) -> CheckReport {
        self.found.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let verdict = if self.found.is_empty() { Verdict::Pass } else { Verdict::Fail };
        let note = match verdict {
            Verdict::Pass => PASS_NOTE.to_string(),
            Verdict::Fail => format!("{} violating evaluations out of {}", self.found.len(), self.samples),
        };
        CheckReport {
            verdict,
            tolerance: self.tol,
            witnesses: self.found.into_iter().take(max_witnesses.max(1)).map(|f| f.2).collect(),
            samples: self.samples,
            note,
        }
    }
}

fn require_dim(cf: &CoefficientField, d: usize) -> Result<()> {
    if cf.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: cf.dim(),
        });
    }
    Ok(())
}

/// Boundary clauses on one shell; `drift_sign` is `0` for equality, `-1` for
/// `⟨x, b⟩ <= 0` and `+1` for `⟨x, b⟩ >= 0`.
fn shell_clauses(
    col: &mut Collector,
    cf: &CoefficientField,
    points: &[Vec<f64>],
    drift_sign: i8,
    settings: &CheckSettings,
) -> Result<()> {
    for &t in &settings.t_grid {
        for x in points {
            let (b, s) = cf.eval_field(t, x)?;
            let xb = dot(x, &b);
            match drift_sign {
                0 => col.equality(t, x, "<x,b> = 0", xb),
                -1 => col.at_most_zero(t, x, "<x,b> <= 0", xb),
                _ => col.at_least_zero(t, x, "<x,b> >= 0", xb),
            }
            col.equality(t, x, "<x,sigma> = 0", dot(x, &s));
        }
    }
    Ok(())
}

/// `⟨x, b⟩ = 0` and `⟨x, σ⟩ = 0` on `|x| = ρ`.
pub fn check_sphere(cf: &CoefficientField, rho: f64, settings: &CheckSettings) -> Result<CheckReport> {
    ConstraintSet::Sphere { rho, d: cf.dim() }.validate()?;
    let mut col = Collector::new(settings.tol);
    let pts = sphere_points(cf.dim(), rho, settings.boundary_samples);
    shell_clauses(&mut col, cf, &pts, 0, settings)?;
    Ok(col.finish(settings.max_witnesses))
}

/// `⟨x, b⟩ <= 0` and `⟨x, σ⟩ = 0` on `|x| = ρ`; interior points impose nothing.
pub fn check_ball(cf: &CoefficientField, rho: f64, settings: &CheckSettings) -> Result<CheckReport> {
    ConstraintSet::Ball { rho, d: cf.dim() }.validate()?;
    let mut col = Collector::new(settings.tol);
    let pts = sphere_points(cf.dim(), rho, settings.boundary_samples);
    shell_clauses(&mut col, cf, &pts, -1, settings)?;
    Ok(col.finish(settings.max_witnesses))
}

/// Inward drift on the outer shell, outward drift on the inner shell, and
/// `⟨x, σ⟩ = 0` on both.
pub fn check_annulus(cf: &CoefficientField, r_in: f64, r_out: f64, settings: &CheckSettings) -> Result<CheckReport> {
    ConstraintSet::Annulus { r_in, r_out, d: cf.dim() }.validate()?;
    let mut col = Collector::new(settings.tol);
    let n = settings.boundary_samples;
    shell_clauses(&mut col, cf, &sphere_points(cf.dim(), r_out, n), -1, settings)?;
    shell_clauses(&mut col, cf, &sphere_points(cf.dim(), r_in, n), 1, settings)?;
    Ok(col.finish(settings.max_witnesses))
}

/// `b(t, 0) >= 0` and `σ(t, 0) = 0`.
pub fn check_positivity(cf: &CoefficientField, settings: &CheckSettings) -> Result<CheckReport> {
    require_dim(cf, 1)?;
    let mut col = Collector::new(settings.tol);
    for &t in &settings.t_grid {
        let (b, s) = cf.eval_field(t, &[0.0])?;
        col.at_least_zero(t, &[0.0], "b(t,0) >= 0", b[0]);
        col.equality(t, &[0.0], "sigma(t,0) = 0", s[0]);
    }
    Ok(col.finish(settings.max_witnesses))
}

/// `b₁(t, z) <= b₂(t, z)` and `σ₁(t, z) = σ₂(t, z)` on the `(t, z)` grid.
pub fn check_comparison(
    lower: &CoefficientField,
    upper: &CoefficientField,
    settings: &CheckSettings,
) -> Result<CheckReport> {
    require_dim(lower, 1)?;
    require_dim(upper, 1)?;
    let mut col = Collector::new(settings.tol);
    for &t in &settings.t_grid {
        for &z in &settings.z_grid {
            let (b1, s1) = lower.eval_field(t, &[z])?;
            let (b2, s2) = upper.eval_field(t, &[z])?;
            col.at_most_zero(t, &[z], "b1 <= b2", b1[0] - b2[0]);
            col.equality(t, &[z], "sigma1 = sigma2", s1[0] - s2[0]);
        }
    }
    Ok(col.finish(settings.max_witnesses))
}

/// Dispatches to the checker matching `constraint`. The comparison cone
/// needs the second field.
pub fn check_constraint(
    constraint: &ConstraintSet,
    cf: &CoefficientField,
    upper: Option<&CoefficientField>,
    settings: &CheckSettings,
) -> Result<CheckReport> {
    constraint.validate()?;
    if !matches!(constraint, ConstraintSet::ComparisonCone) {
        require_dim(cf, constraint.dim())?;
    }
    match *constraint {
        ConstraintSet::Sphere { rho, .. } => check_sphere(cf, rho, settings),
        ConstraintSet::Ball { rho, .. } => check_ball(cf, rho, settings),
        ConstraintSet::Annulus { r_in, r_out, .. } => check_annulus(cf, r_in, r_out, settings),
        ConstraintSet::HalfLine => check_positivity(cf, settings),
        ConstraintSet::ComparisonCone => {
            let upper = upper.ok_or_else(|| invalid("coefficients_upper", "comparison needs a second field"))?;
            check_comparison(cf, upper, settings)
        }
    }
}

/// Catalog maps `φ : R^d → R^m` with an analytic right inverse of `φ′`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "map", rename_all = "snake_case", deny_unknown_fields)]
pub enum TransformKind {
    /// `φ(x) = |x|²`.
    SquaredNorm { d: usize },
    /// `φ(x, y) = y - x`.
    Difference,
}

/// A catalog map together with its validity band `a ≤ |x| ≤ b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformMap {
    pub kind: TransformKind,
    pub band_lo: f64,
    pub band_hi: f64,
}

type Matrix = Vec<Vec<f64>>;

impl TransformMap {
    pub fn squared_norm(d: usize, band_lo: f64, band_hi: f64) -> Result<Self> {
        Self::new(TransformKind::SquaredNorm { d }, band_lo, band_hi)
    }

    pub fn difference(band_lo: f64, band_hi: f64) -> Result<Self> {
        Self::new(TransformKind::Difference, band_lo, band_hi)
    }

    pub fn new(kind: TransformKind, band_lo: f64, band_hi: f64) -> Result<Self> {
        if let TransformKind::SquaredNorm { d: 0 } = kind {
            return Err(invalid("transform", "dimension must be positive"));
        }
        if !(band_lo >= 0.0 && band_lo < band_hi && band_hi.is_finite()) {
            return Err(invalid("band", format!("need 0 <= a < b, got [{band_lo}, {band_hi}]")));
        }
        Ok(Self { kind, band_lo, band_hi })
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            TransformKind::SquaredNorm { .. } => "squared_norm",
            TransformKind::Difference => "difference",
        }
    }

    pub fn domain_dim(&self) -> usize {
        match self.kind {
            TransformKind::SquaredNorm { d } => d,
            TransformKind::Difference => 2,
        }
    }

    pub fn image_dim(&self) -> usize {
        1
    }

    pub fn in_band(&self, x: &[f64]) -> bool {
        let r = norm(x);
        x.len() == self.domain_dim() && r >= self.band_lo && r <= self.band_hi
    }

    pub fn phi(&self, x: &[f64]) -> Vec<f64> {
        match self.kind {
            TransformKind::SquaredNorm { .. } => vec![dot(x, x)],
            TransformKind::Difference => vec![x[1] - x[0]],
        }
    }

    /// `φ′(x)`, an `m × d` matrix.
    pub fn jacobian(&self, x: &[f64]) -> Matrix {
        match self.kind {
            TransformKind::SquaredNorm { .. } => vec![x.iter().map(|v| 2.0 * v).collect()],
            TransformKind::Difference => vec![vec![-1.0, 1.0]],
        }
    }

    /// `φ′(x)⁺`, a `d × m` matrix with `φ′ φ′⁺ = I`.
    pub fn right_inverse(&self, x: &[f64]) -> Matrix {
        match self.kind {
            TransformKind::SquaredNorm { .. } => {
                let r2 = dot(x, x);
                x.iter().map(|v| vec![v / (2.0 * r2)]).collect()
            }
            TransformKind::Difference => vec![vec![-0.5], vec![0.5]],
        }
    }

    /// `[φ′(x)⁺]′` flattened: entry `(i, l)` is `∂(φ′⁺)_i / ∂x_l` (`m = 1`).
    pub fn right_inverse_derivative(&self, x: &[f64]) -> Matrix {
        match self.kind {
            TransformKind::SquaredNorm { d } => {
                let r2 = dot(x, x);
                (0..d)
                    .map(|i| {
                        (0..d)
                            .map(|l| {
                                let delta = if i == l { 1.0 } else { 0.0 };
                                delta / (2.0 * r2) - x[i] * x[l] / (r2 * r2)
                            })
                            .collect()
                    })
                    .collect()
            }
            TransformKind::Difference => vec![vec![0.0; 2]; 2],
        }
    }

    /// Bound `M` on the Frobenius norm of `[φ′⁺]′` over the band:
    /// `√d / (2a²)` for the squared norm.
    pub fn bound_m(&self) -> f64 {
        match self.kind {
            TransformKind::SquaredNorm { d } => (d as f64).sqrt() / (2.0 * self.band_lo * self.band_lo),
            TransformKind::Difference => 0.0,
        }
    }

    /// Lipschitz bound `L` of `[φ′⁺]′` over the band: `√(3d-2) / a³` for the
    /// squared norm.
    pub fn bound_l(&self) -> f64 {
        match self.kind {
            TransformKind::SquaredNorm { d } => (3.0 * d as f64 - 2.0).sqrt() / self.band_lo.powi(3),
            TransformKind::Difference => 0.0,
        }
    }

    /// Shrunken band `a + ε ≤ |x| ≤ b - ε`; `ε` defaults to `0.1 (b - a)`.
    pub fn inverse_image_band(&self, eps: Option<f64>) -> Result<(f64, f64)> {
        let eps = eps.unwrap_or(0.1 * (self.band_hi - self.band_lo));
        let (lo, hi) = (self.band_lo + eps, self.band_hi - eps);
        if !(eps >= 0.0 && lo <= hi) {
            return Err(invalid("epsilon", format!("{eps} leaves an empty band")));
        }
        Ok((lo, hi))
    }
}

fn mat_vec(m: &Matrix, v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| dot(row, v)).collect()
}

/// `(φ′(x) b(t, x), φ′(x) σ(t, x))` for `x` in the band.
pub fn pushforward_pair(phi: &TransformMap, t: f64, x: &[f64], cf: &CoefficientField) -> Result<(Vec<f64>, Vec<f64>)> {
    if !phi.in_band(x) {
        return Err(invalid(
            "x",
            format!("point with |x| = {} is outside the band [{}, {}]", norm(x), phi.band_lo, phi.band_hi),
        ));
    }
    let (b, s) = cf.eval_field(t, x)?;
    let j = phi.jacobian(x);
    Ok((mat_vec(&j, &b), mat_vec(&j, &s)))
}

fn frobenius_diff(a: &Matrix, b: &Matrix) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(u, v)| (u - v) * (u - v))
        .sum::<f64>()
        .sqrt()
}

/// Band points: radii from a Halton coordinate (the first at `|x| = a`),
/// directions from the sphere sampler.
fn band_points(phi: &TransformMap, n: usize) -> Vec<Vec<f64>> {
    let d = phi.domain_dim();
    let dirs = sphere_points(d, 1.0, n.max(2 * d));
    (0..n)
        .map(|k| {
            let u = if k == 0 { 0.0 } else { crate::sampling::radical_inverse(k as u64, 2) };
            let r = phi.band_lo + u * (phi.band_hi - phi.band_lo);
            dirs[(k * 7919) % dirs.len()].iter().map(|v| r * v).collect()
        })
        .collect()
}

/// Falsifier for membership of `φ` in the class of maps with a bounded,
/// Lipschitz right-inverse derivative on the band.
///
/// Checks `φ′ φ′⁺ = I`, a central-difference estimate of `[φ′⁺]′` against
/// `M`, and pairwise Lipschitz ratios of `[φ′⁺]′` against `L`.
pub fn verify_class_h(phi: &TransformMap, n_samples: usize, tol: f64) -> CheckReport {
    let m_bound = phi.bound_m();
    let l_bound = phi.bound_l();
    let mut col = Collector::new(tol);
    let pts = band_points(phi, n_samples.max(2));
    let d = phi.domain_dim();
    let mut derivs = Vec::with_capacity(pts.len());
    for x in &pts {
        let j = phi.jacobian(x);
        let p = phi.right_inverse(x);
        let id_err = (0..phi.image_dim())
            .map(|a| {
                (0..phi.image_dim())
                    .map(|c| {
                        let v: f64 = (0..d).map(|k| j[a][k] * p[k][c]).sum();
                        let target = if a == c { 1.0 } else { 0.0 };
                        (v - target).powi(2)
                    })
                    .sum::<f64>()
            })
            .sum::<f64>()
            .sqrt();
        col.record(0.0, x, "phi' phi'+ = I", id_err, id_err - 1e-10);

        let step = 1e-6 * norm(x).max(1e-3);
        let mut fd = vec![vec![0.0; d]; d];
        let mut xp = x.clone();
        let mut xm = x.clone();
        for l in 0..d {
            xp[l] = x[l] + step;
            xm[l] = x[l] - step;
            let (rp, rm) = (phi.right_inverse(&xp), phi.right_inverse(&xm));
            for i in 0..d {
                fd[i][l] = (rp[i][0] - rm[i][0]) / (xp[l] - xm[l]);
            }
            xp[l] = x[l];
            xm[l] = x[l];
        }
        let fd_norm = fd.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
        let slack = 1e-5 * fd_norm + tol;
        let excess = if m_bound.is_finite() { fd_norm - m_bound - slack } else { f64::NAN };
        col.record(0.0, x, "|[phi'+]'| <= M", fd_norm, excess);
        derivs.push(phi.right_inverse_derivative(x));
    }
    for k in 1..pts.len() {
        let dx = pts[k].iter().zip(&pts[k - 1]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        if dx == 0.0 {
            continue;
        }
        let ratio = frobenius_diff(&derivs[k], &derivs[k - 1]) / dx;
        let excess = if l_bound.is_finite() { ratio - l_bound * (1.0 + 1e-9) - tol } else { f64::NAN };
        col.record(0.0, &pts[k], "Lipschitz ratio of [phi'+]' <= L", ratio, excess);
    }
    col.finish(5)
}

/// `y = (4/π) arctan(x) - 1`, mapping `[0, ∞)` onto `[-1, 1)`.
pub fn arctan_rescale(x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(invalid("x", format!("{x} is negative")));
    }
    Ok(4.0 / std::f64::consts::PI * x.atan() - 1.0)
}

/// Inverse of [`arctan_rescale`] on `[-1, 1)`.
pub fn arctan_rescale_inverse(y: f64) -> Result<f64> {
    if !(-1.0..1.0).contains(&y) {
        return Err(invalid("y", format!("{y} is outside [-1, 1)")));
    }
    Ok((std::f64::consts::FRAC_PI_4 * (y + 1.0)).tan())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field(d: usize, b: &[&str], s: &[&str]) -> CoefficientField {
        CoefficientField::parse(d, b, s).unwrap()
    }

    #[test]
    fn sphere_examples() {
        let set = CheckSettings::default();
        assert!(check_sphere(&CoefficientField::rotation(1.0, 1.0), 1.0, &set).unwrap().passed());
        let r = check_sphere(&field(2, &["x1", "x2"], &["0", "0"]), 2.0, &set).unwrap();
        assert_eq!(r.verdict, Verdict::Fail);
        assert!((r.witnesses[0].lhs - 4.0).abs() < 1e-12);
        let r = check_sphere(&field(2, &["0", "0"], &["1", "0"]), 1.5, &set).unwrap();
        assert_eq!(r.witnesses[0].x, vec![1.5, 0.0]);
        assert_eq!(r.witnesses[0].lhs, 1.5);
        assert_eq!(r.witnesses[0].clause, "<x,sigma> = 0");
    }

    #[test]
    fn ball_examples() {
        let set = CheckSettings::default();
        let inward = field(2, &["-x1", "-x2"], &["(1 - x1^2 - x2^2) * 0.3", "(1 - x1^2 - x2^2) * 0.2"]);
        assert!(check_ball(&inward, 1.0, &set).unwrap().passed());
        let r = check_ball(&field(2, &["x1", "x2"], &["0", "0"]), 1.0, &set).unwrap();
        assert!(!r.passed());
        assert!((r.witnesses[0].lhs - 1.0).abs() < 1e-12);
        let tangential = field(2, &["-x2", "x1"], &["0", "0"]);
        assert!(check_ball(&tangential, 1.0, &set).unwrap().passed());
    }

    #[test]
    fn annulus_examples() {
        let set = CheckSettings::default();
        let good = field(
            2,
            &["(1 - (x1^2 + x2^2)^0.5) * x1", "(1 - (x1^2 + x2^2)^0.5) * x2"],
            &["-x2", "x1"],
        );
        assert!(check_annulus(&good, 0.5, 2.0, &set).unwrap().passed());
        let r = check_annulus(&field(2, &["x1", "x2"], &["0", "0"]), 0.5, 2.0, &set).unwrap();
        assert!(!r.passed());
        assert!(r.witnesses.iter().all(|w| (norm(&w.x) - 2.0).abs() < 1e-12));
        let r = check_annulus(&field(2, &["0", "0"], &["x1", "x2"]), 0.5, 2.0, &set).unwrap();
        let radii: Vec<f64> = r.witnesses.iter().map(|w| norm(&w.x)).collect();
        assert!(radii.iter().all(|r| (r - 2.0).abs() < 1e-12));
        let all = CheckSettings {
            max_witnesses: 10_000,
            ..set
        };
        let r = check_annulus(&field(2, &["0", "0"], &["x1", "x2"]), 0.5, 2.0, &all).unwrap();
        assert!(r.witnesses.iter().any(|w| (norm(&w.x) - 0.5).abs() < 1e-12));
    }

    #[test]
    fn positivity_examples() {
        let set = CheckSettings::default();
        assert!(check_positivity(&field(1, &["1 - x1"], &["x1"]), &set).unwrap().passed());
        let r = check_positivity(&field(1, &["1"], &["1"]), &set).unwrap();
        assert_eq!(r.witnesses[0].clause, "sigma(t,0) = 0");
        assert_eq!(r.witnesses[0].lhs, 1.0);
        let r = check_positivity(&field(1, &["-1 + x1"], &["0"]), &set).unwrap();
        assert_eq!(r.witnesses[0].lhs, -1.0);
    }

    #[test]
    fn comparison_examples() {
        let set = CheckSettings::default();
        let lo = field(1, &["-x1"], &["x1"]);
        let hi = field(1, &["-x1 + 1"], &["x1"]);
        assert!(check_comparison(&lo, &hi, &set).unwrap().passed());
        let r = check_comparison(&field(1, &["0"], &["x1"]), &field(1, &["0"], &["2*x1"]), &set).unwrap();
        assert!(!r.passed());
        assert_eq!(r.witnesses[0].x[0].abs(), 2.0);
        let settings = CheckSettings {
            z_grid: vec![1.0],
            ..CheckSettings::default()
        };
        let r = check_comparison(&field(1, &["0"], &["x1"]), &field(1, &["0"], &["2*x1"]), &settings).unwrap();
        assert_eq!((r.witnesses[0].x[0], r.witnesses[0].lhs), (1.0, -1.0));
        let s = field(1, &["sin(x1)"], &["0"]);
        assert!(check_comparison(&s, &s, &set).unwrap().passed());
    }

    #[test]
    fn pushforward_examples() {
        let phi = TransformMap::squared_norm(2, 0.25, 4.0).unwrap();
        let cf = field(2, &["3", "5"], &["7", "11"]);
        assert_eq!(pushforward_pair(&phi, 0.0, &[1.0, 0.0], &cf).unwrap(), (vec![6.0], vec![14.0]));
        let diff = TransformMap::difference(0.0, 10.0).unwrap();
        assert_eq!(pushforward_pair(&diff, 0.0, &[1.0, 2.0], &cf).unwrap(), (vec![2.0], vec![4.0]));
        assert!(pushforward_pair(&phi, 0.0, &[0.1, 0.0], &cf).is_err());
        let zero = field(2, &["0", "0"], &["0", "0"]);
        assert_eq!(pushforward_pair(&phi, 0.0, &[0.0, 1.0], &zero).unwrap(), (vec![0.0], vec![0.0]));
    }

    #[test]
    fn class_h_examples() {
        let sq = TransformMap::squared_norm(2, 0.25, 4.0).unwrap();
        assert!(verify_class_h(&sq, 2000, 1e-9).passed());
        let diff = TransformMap::difference(0.0, 10.0).unwrap();
        assert!(verify_class_h(&diff, 500, 1e-9).passed());
        let bad = TransformMap::squared_norm(2, 0.0, 4.0).unwrap();
        let r = verify_class_h(&bad, 500, 1e-9);
        assert!(!r.passed());
        assert!(norm(&r.witnesses[0].x) < 0.05, "{:?}", r.witnesses[0]);
    }

    #[test]
    fn band_shrinks_by_default_epsilon() {
        let sq = TransformMap::squared_norm(2, 0.25, 4.0).unwrap();
        let (lo, hi) = sq.inverse_image_band(None).unwrap();
        assert!((lo - 0.625).abs() < 1e-15 && (hi - 3.625).abs() < 1e-15);
        assert!(sq.inverse_image_band(Some(3.0)).is_err());
    }

    #[test]
    fn arctan_examples() {
        assert_eq!(arctan_rescale(0.0).unwrap(), -1.0);
        assert!(arctan_rescale(1.0).unwrap().abs() < 1e-15);
        assert!((arctan_rescale(1e12).unwrap() - 1.0).abs() < 1e-6);
        assert!(arctan_rescale(-1.0).is_err());
        assert!(arctan_rescale_inverse(1.0).is_err());
        for x in [0.0, 0.3, 1.0, 7.5, 1e3] {
            let back = arctan_rescale_inverse(arctan_rescale(x).unwrap()).unwrap();
            assert!((back - x).abs() <= 1e-9 * (1.0 + x), "{x} {back}");
        }
    }

    #[test]
    fn sphere_sampler_is_on_the_sphere() {
        for d in 1..6 {
            let pts = sphere_points(d, 2.5, 100);
            assert!(pts.iter().all(|p| (norm(p) - 2.5).abs() < 1e-12));
        }
        assert_eq!(sphere_points(2, 1.0, 4)[0], vec![1.0, 0.0]);
    }

    #[test]
    fn constraint_json_is_strict() {
        let c: ConstraintSet = serde_json::from_str(r#"{"kind":"sphere","rho":1.0,"d":2}"#).unwrap();
        assert_eq!(c, ConstraintSet::Sphere { rho: 1.0, d: 2 });
        assert!(serde_json::from_str::<ConstraintSet>(r#"{"kind":"sphere","rho":1.0,"d":2,"x":1}"#).is_err());
        let h: ConstraintSet = serde_json::from_str(r#"{"kind":"half_line"}"#).unwrap();
        assert_eq!(h.signed_distance(&[-0.5]), 0.5);
    }
}
