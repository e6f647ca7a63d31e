//! Sampling-based regularity audit of a coefficient field.
//!
//! The audit is a falsifier: constants are running maxima of pairwise ratios
//! over a finite, seeded sample of the box, and exponents are log-log fits of
//! the worst increment against the increment scale on a fixed probe set. A
//! PASS means no violation was found at the sampled resolution.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::field::{alpha_zero, CoefficientField, Regularity};
use crate::error::{invalid, Result};
use crate::sampling::halton;

const AUDIT_SEED: u64 = 0x5EED_A0D1;
const PROBE_BASE_POINTS: u64 = 128;
const PROBE_SCALES: i32 = 16;
const EXPONENT_MARGIN: f64 = 0.9;
const LIPSCHITZ_FLOOR: f64 = 0.75;
const HOLDER_FLOOR: f64 = 0.05;

/// Time interval and coordinate box over which coefficients are audited.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditBox {
    pub t0: f64,
    pub t1: f64,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl AuditBox {
    /// `[t0, t1] × [a, b]^d`.
    pub fn cube(d: usize, t0: f64, t1: f64, a: f64, b: f64) -> Self {
        Self {
            t0,
            t1,
            lo: vec![a; d],
            hi: vec![b; d],
        }
    }

    fn validate(&self, d: usize) -> Result<()> {
        if self.lo.len() != d || self.hi.len() != d {
            return Err(invalid("audit box", format!("bounds must have {d} components")));
        }
        let finite = self.lo.iter().chain(&self.hi).chain([&self.t0, &self.t1]).all(|v| v.is_finite());
        if !finite || self.t1 < self.t0 || self.lo.iter().zip(&self.hi).any(|(a, b)| b < a) {
            return Err(invalid("audit box", "bounds must be finite with lo <= hi"));
        }
        Ok(())
    }

    fn at(&self, u: &[f64]) -> AuditPoint {
        AuditPoint {
            t: self.t0 + u[0] * (self.t1 - self.t0),
            x: self.lo.iter().zip(&self.hi).zip(&u[1..]).map(|((a, b), v)| a + v * (b - a)).collect(),
        }
    }

    fn corners(&self) -> Vec<Vec<f64>> {
        let d = self.lo.len();
        (0..1usize << d.min(12))
            .map(|mask| (0..d).map(|i| if mask >> i & 1 == 1 { self.hi[i] } else { self.lo[i] }).collect())
            .collect()
    }

    fn radius(&self) -> f64 {
        self.corners().iter().map(|c| norm(c)).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum AuditStatus {
    Pass,
    Warn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditPoint {
    pub t: f64,
    pub x: Vec<f64>,
}

/// The sampled pair with the worst ratio for a condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditWitness {
    pub p: AuditPoint,
    pub q: AuditPoint,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditCondition {
    pub name: String,
    pub status: AuditStatus,
    pub detail: String,
    pub witness: Option<AuditWitness>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub regularity: Regularity,
    /// `α₀` from the fitted exponents scaled by the safety margin.
    pub alpha0: Option<f64>,
    pub n_samples: usize,
    pub conditions: Vec<AuditCondition>,
    pub note: String,
}

impl RegularityReport {
    pub fn all_pass(&self) -> bool {
        self.conditions.iter().all(|c| c.status == AuditStatus::Pass)
    }

    pub fn condition(&self, name: &str) -> Option<&AuditCondition> {
        self.conditions.iter().find(|c| c.name == name)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt()
}

fn pow_or_one(h: f64, e: f64) -> f64 {
    if e == 0.0 {
        1.0
    } else {
        h.powf(e)
    }
}

type VecFn<'a> = dyn Fn(f64, &[f64]) -> Result<Vec<f64>> + 'a;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Direction {
    Time,
    Space,
}

#[derive(Debug, Default)]
struct Probe {
    /// Log-log slope of the worst increment against the scale, or 1 when
    /// no increment rises above the noise floor.
    exponent: f64,
    worst: Option<AuditWitness>,
    failure: Option<(AuditPoint, String)>,
}

/// Fits the increment exponent of `f` along one direction.
fn probe(bx: &AuditBox, dir: Direction, f: &VecFn) -> Probe {
    let d = bx.lo.len();
    let mut out = Probe::default();
    let mut maxima = vec![0.0f64; PROBE_SCALES as usize];
    let mut scale_h = vec![f64::NAN; PROBE_SCALES as usize];
    let mut size = 0.0f64;
    let spans: Vec<f64> = match dir {
        Direction::Time => vec![bx.t1 - bx.t0],
        Direction::Space => bx.lo.iter().zip(&bx.hi).map(|(a, b)| b - a).collect(),
    };
    // time probes also start from t0, where power-type singularities sit
    let extra = if dir == Direction::Time { PROBE_BASE_POINTS / 8 } else { 0 };
    for i in 0..PROBE_BASE_POINTS + extra {
        let mut u = halton(i % PROBE_BASE_POINTS, d + 1);
        if i >= PROBE_BASE_POINTS {
            u[0] = 0.0;
        }
        let p = bx.at(&u);
        let fp = match f(p.t, &p.x) {
            Ok(v) => v,
            Err(e) => {
                out.failure.get_or_insert((p, e.to_string()));
                continue;
            }
        };
        size = size.max(norm(&fp));
        for (axis, &span) in spans.iter().enumerate() {
            if span <= 0.0 {
                continue;
            }
            for k in 0..PROBE_SCALES {
                let h = span * 0.5f64.powi(k + 1);
                let mut q = p.clone();
                let (coord, upper) = match dir {
                    Direction::Time => (&mut q.t, bx.t1),
                    Direction::Space => (&mut q.x[axis], bx.hi[axis]),
                };
                *coord = if *coord + h <= upper { *coord + h } else { *coord - h };
                let realized = match dir {
                    Direction::Time => (q.t - p.t).abs(),
                    Direction::Space => (q.x[axis] - p.x[axis]).abs(),
                };
                let fq = match f(q.t, &q.x) {
                    Ok(v) => v,
                    Err(e) => {
                        out.failure.get_or_insert((q, e.to_string()));
                        continue;
                    }
                };
                let delta = dist(&fp, &fq);
                let k = k as usize;
                maxima[k] = maxima[k].max(delta);
                scale_h[k] = span * 0.5f64.powi(k as i32 + 1);
                let ratio = delta / realized;
                if out.worst.as_ref().map_or(delta > 0.0, |w| ratio > w.ratio) {
                    out.worst = Some(AuditWitness { p: p.clone(), q, ratio });
                }
            }
        }
    }
    let floor = 1e-10 * (1.0 + size);
    let pts: Vec<(f64, f64)> = maxima
        .iter()
        .zip(&scale_h)
        .filter(|(m, h)| **m > floor && h.is_finite())
        .map(|(m, h)| (h.ln(), m.ln()))
        .collect();
    out.exponent = if pts.len() < 2 { 1.0 } else { slope(&pts) };
    out
}

fn slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

fn condition(name: &str, warn: bool, detail: String, witness: Option<AuditWitness>) -> AuditCondition {
    AuditCondition {
        name: name.to_string(),
        status: if warn { AuditStatus::Warn } else { AuditStatus::Pass },
        detail,
        witness,
    }
}

fn failure_condition(name: &str, failure: Option<(AuditPoint, String)>) -> Option<AuditCondition> {
    failure.map(|(p, msg)| {
        condition(
            name,
            true,
            format!("evaluation failed: {msg}"),
            Some(AuditWitness {
                p: p.clone(),
                q: p,
                ratio: f64::INFINITY,
            }),
        )
    })
}

/// `σ`, `b` and `∂σ` at both points of a pair.
type PairValues = (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>);

/// Audits `cf` on `bx` with `n_samples` random pairs.
///
/// Exponents come from a fixed probe set, so the constants, which are
/// running maxima over a prefix-stable pair stream, never decrease as
/// `n_samples` grows.
pub fn audit_regularity(cf: &CoefficientField, bx: &AuditBox, n_samples: usize) -> Result<RegularityReport> {
    let d = cf.dim();
    bx.validate(d)?;
    let fd_step = 1e-5 * (1.0 + bx.radius());
    let sigma = |t: f64, x: &[f64]| cf.diffusion(t, x);
    let drift = |t: f64, x: &[f64]| cf.drift(t, x);
    let grad = |t: f64, x: &[f64]| Ok(cf.grad_sigma(t, x, fd_step)?.concat());

    let sigma_x = probe(bx, Direction::Space, &sigma);
    let sigma_t = probe(bx, Direction::Time, &sigma);
    let grad_x = probe(bx, Direction::Space, &grad);
    let drift_x = probe(bx, Direction::Space, &drift);
    let drift_t = probe(bx, Direction::Time, &drift);

    let beta = sigma_t.exponent.clamp(0.0, 1.0);
    let delta = grad_x.exponent.clamp(0.0, 1.0);
    let mu = drift_t.exponent.clamp(0.0, 1.0);
    let alpha0 = alpha_zero((EXPONENT_MARGIN * beta).min(1.0), (EXPONENT_MARGIN * delta).min(1.0)).ok();

    let mut reg = Regularity {
        beta,
        delta,
        mu,
        ..Regularity::default()
    };
    let mut stream_failure = None;
    for c in bx.corners() {
        match cf.drift(bx.t1, &c) {
            Ok(b) => reg.l0 = reg.l0.max(norm(&b) / (1.0 + norm(&c))),
            Err(e) => {
                stream_failure.get_or_insert((AuditPoint { t: bx.t1, x: c }, e.to_string()));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(AUDIT_SEED);
    let uniform = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..=d).map(|_| rng.random::<f64>()).collect() };
    for i in 0..n_samples {
        let u = uniform(&mut rng);
        let mut v = uniform(&mut rng);
        let near = rng.random::<f64>() < 0.5;
        if near {
            let scale = 10f64.powf(-4.0 * rng.random::<f64>());
            for (vk, uk) in v.iter_mut().zip(&u) {
                *vk = (uk + scale * (*vk - 0.5)).clamp(0.0, 1.0);
            }
        }
        match i % 3 {
            0 => v[0] = u[0],
            1 => v[1..].copy_from_slice(&u[1..]),
            _ => {}
        }
        let p = bx.at(&u);
        let q = bx.at(&v);
        let (dt, dx) = ((p.t - q.t).abs(), dist(&p.x, &q.x));
        let pair = (|| -> Result<PairValues> {
            Ok((sigma(p.t, &p.x)?, sigma(q.t, &q.x)?, drift(p.t, &p.x)?, drift(q.t, &q.x)?, grad(p.t, &p.x)?, grad(q.t, &q.x)?))
        })();
        let (sp, sq, bp, bq, gp, gq) = match pair {
            Ok(v) => v,
            Err(e) => {
                stream_failure.get_or_insert((p, e.to_string()));
                continue;
            }
        };
        reg.l0 = reg.l0.max(norm(&bp) / (1.0 + norm(&p.x))).max(norm(&bq) / (1.0 + norm(&q.x)));
        if dt == 0.0 && dx == 0.0 {
            continue;
        }
        let m0 = dist(&sp, &sq) / (pow_or_one(dt, beta) + dx);
        let l_r = dist(&bp, &bq) / (pow_or_one(dt, mu) + dx);
        let m_r = dist(&gp, &gq) / (pow_or_one(dt, beta) + pow_or_one(dx, delta));
        for (slot, val) in [(&mut reg.m0, m0), (&mut reg.l_r, l_r), (&mut reg.m_r, m_r)] {
            if val.is_finite() {
                *slot = slot.max(val);
            }
        }
    }

    let mut conditions = Vec::new();
    conditions.push(condition(
        "sigma Lipschitz in x",
        sigma_x.exponent < LIPSCHITZ_FLOOR || sigma_x.failure.is_some(),
        format!("increment exponent {:.3}", sigma_x.exponent),
        sigma_x.worst,
    ));
    conditions.push(condition(
        "sigma Hölder in t",
        beta <= HOLDER_FLOOR,
        format!("beta {beta:.3}"),
        sigma_t.worst,
    ));
    conditions.push(condition(
        "grad sigma Hölder in x",
        delta <= HOLDER_FLOOR || grad_x.failure.is_some(),
        format!("delta {delta:.3}"),
        grad_x.worst,
    ));
    conditions.push(condition(
        "b Lipschitz in x",
        drift_x.exponent < LIPSCHITZ_FLOOR || drift_x.failure.is_some(),
        format!("increment exponent {:.3}", drift_x.exponent),
        drift_x.worst,
    ));
    let mu_ok = alpha0.is_some_and(|a0| mu > 1.0 - a0);
    conditions.push(condition(
        "b Hölder in t",
        !mu_ok,
        match alpha0 {
            Some(a0) => format!("mu {mu:.3}, need mu > 1 - alpha0 = {:.3}", 1.0 - a0),
            None => format!("mu {mu:.3}, alpha0 undefined"),
        },
        drift_t.worst,
    ));
    conditions.push(growth_condition(cf, bx));
    let failure = sigma_x
        .failure
        .or(sigma_t.failure)
        .or(grad_x.failure)
        .or(drift_x.failure)
        .or(drift_t.failure)
        .or(stream_failure);
    conditions.push(
        failure_condition("finite on box", failure)
            .unwrap_or_else(|| condition("finite on box", false, "all samples finite".into(), None)),
    );

    Ok(RegularityReport {
        regularity: reg,
        alpha0,
        n_samples,
        conditions,
        note: "sampling-based falsifier: no violation found at resolution unless a condition warns".into(),
    })
}

/// Checks that `|b(t, x)| / (1 + |x|)` stays bounded along rays leaving the box.
fn growth_condition(cf: &CoefficientField, bx: &AuditBox) -> AuditCondition {
    const NAME: &str = "b linear growth";
    let d = cf.dim();
    let base = bx.radius().max(1.0);
    let mut dirs: Vec<Vec<f64>> = bx.corners().into_iter().filter(|c| norm(c) > 0.0).collect();
    dirs.extend((0..16).map(|i| halton(i, d).iter().map(|u| 2.0 * u - 1.0).collect()));
    let mut ratios = [0.0f64; 9];
    let mut worst: Option<AuditWitness> = None;
    for dir in dirs.iter().filter(|v| norm(v) > 0.0) {
        let unit: Vec<f64> = dir.iter().map(|v| v / norm(dir)).collect();
        for (j, slot) in ratios.iter_mut().enumerate() {
            let x: Vec<f64> = unit.iter().map(|u| u * base * 2f64.powi(j as i32)).collect();
            match cf.drift(bx.t1, &x) {
                Ok(b) => {
                    let r = norm(&b) / (1.0 + norm(&x));
                    *slot = slot.max(r);
                    if j == 8 && worst.as_ref().is_none_or(|w| r > w.ratio) {
                        let p = AuditPoint { t: bx.t1, x };
                        worst = Some(AuditWitness { p: p.clone(), q: p, ratio: r });
                    }
                }
                Err(e) => {
                    return failure_condition(NAME, Some((AuditPoint { t: bx.t1, x }, e.to_string())))
                        .expect("failure present");
                }
            }
        }
    }
    let warn = ratios[8] > 4.0 * ratios[4] + 1e-12;
    condition(
        NAME,
        warn,
        format!("|b|/(1+|x|) {:.3e} at radius {:.1e}, {:.3e} at {:.1e}", ratios[4], base * 16.0, ratios[8], base * 256.0),
        worst,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_field_passes_with_expected_constants() {
        let cf = CoefficientField::parse(1, &["-x1"], &["x1"]).unwrap();
        let r = audit_regularity(&cf, &AuditBox::cube(1, 0.0, 1.0, -2.0, 2.0), 3000).unwrap();
        assert!(r.all_pass(), "{r:#?}");
        assert!((r.regularity.m0 - 1.0).abs() < 1e-9);
        assert!((r.regularity.l0 - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.regularity.l_r - 1.0).abs() < 1e-9);
        assert_eq!(r.regularity.beta, 1.0);
        assert!(r.regularity.m_r < 1e-4);
    }

    #[test]
    fn zero_field_has_zero_constants() {
        let cf = CoefficientField::parse(1, &["0"], &["0"]).unwrap();
        let r = audit_regularity(&cf, &AuditBox::cube(1, 0.0, 1.0, -2.0, 2.0), 500).unwrap();
        assert!(r.all_pass());
        let g = r.regularity;
        assert_eq!((g.m0, g.l0, g.l_r, g.m_r), (0.0, 0.0, 0.0, 0.0));
        assert_eq!(r.alpha0, Some(0.9 / 1.9));
    }

    #[test]
    fn step_diffusion_warns_near_origin() {
        let cf = CoefficientField::parse(1, &["0"], &["x1 / abs(x1)"]).unwrap();
        let r = audit_regularity(&cf, &AuditBox::cube(1, 0.0, 1.0, -2.0, 2.0), 500).unwrap();
        let c = r.condition("sigma Lipschitz in x").unwrap();
        assert_eq!(c.status, AuditStatus::Warn);
        let w = c.witness.as_ref().unwrap();
        assert!(w.p.x[0].abs() < 0.1 && w.q.x[0].abs() < 0.1, "{w:?}");
    }

    #[test]
    fn superlinear_drift_warns() {
        let cf = CoefficientField::parse(1, &["x1^2"], &["0"]).unwrap();
        let r = audit_regularity(&cf, &AuditBox::cube(1, 0.0, 1.0, -1.0, 1.0), 100).unwrap();
        assert_eq!(r.condition("b linear growth").unwrap().status, AuditStatus::Warn);
        assert_eq!(r.condition("b Lipschitz in x").unwrap().status, AuditStatus::Pass);
    }

    #[test]
    fn rough_time_dependence_is_fitted() {
        let cf = CoefficientField::parse(1, &["0"], &["t^0.3"]).unwrap();
        let r = audit_regularity(&cf, &AuditBox::cube(1, 0.0, 1.0, -1.0, 1.0), 100).unwrap();
        assert!((r.regularity.beta - 0.3).abs() < 0.05, "{}", r.regularity.beta);
    }

    #[test]
    fn constants_grow_monotonically_with_samples() {
        let cf = CoefficientField::parse(2, &["sin(3*x1) * x2", "tanh(x1 - t)"], &["x2 * cos(t)", "exp(-x1^2)"]).unwrap();
        let bx = AuditBox::cube(2, 0.0, 1.0, -1.5, 1.5);
        let mut prev = Regularity::default();
        for n in [10, 100, 1000] {
            let g = audit_regularity(&cf, &bx, n).unwrap().regularity;
            assert!(g.m0 >= prev.m0 && g.l0 >= prev.l0 && g.l_r >= prev.l_r && g.m_r >= prev.m_r);
            prev = g;
        }
    }
}
