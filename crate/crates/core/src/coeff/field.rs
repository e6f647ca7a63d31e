use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::expr::{parse_expression, Expr};
use crate::error::{invalid, Error, Result};
use crate::fbm::HurstParameter;
use crate::frac::FracOrder;

/// Regularity constants of a coefficient pair, as estimated by the audit.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Regularity {
    pub m0: f64,
    pub l0: f64,
    pub l_r: f64,
    pub m_r: f64,
    pub beta: f64,
    pub delta: f64,
    pub mu: f64,
}

/// Drift `b` and diffusion `σ`, both `R^d`-valued functions of `(t, x)`.
/// The diffusion multiplies a scalar fBm.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    d: usize,
    b: Vec<Expr>,
    sigma: Vec<Expr>,
    pub regularity: Option<Regularity>,
}

impl CoefficientField {
    pub fn new(d: usize, b: Vec<Expr>, sigma: Vec<Expr>) -> Result<Self> {
        if d == 0 {
            return Err(invalid("dimension", "d must be positive"));
        }
        for (name, comps) in [("b", &b), ("sigma", &sigma)] {
            if comps.len() != d {
                return Err(invalid(
                    "coefficients",
                    format!("{name} has {} components, expected {d}", comps.len()),
                ));
            }
            if let Some(e) = comps.iter().find(|e| e.max_var() > d) {
                return Err(invalid(
                    "coefficients",
                    format!("{name} component `{e}` references x{} but d = {d}", e.max_var()),
                ));
            }
        }
        Ok(Self {
            d,
            b,
            sigma,
            regularity: None,
        })
    }

    /// Parses one expression per component.
    pub fn parse<S: AsRef<str>>(d: usize, b: &[S], sigma: &[S]) -> Result<Self> {
        let parse_all = |v: &[S]| -> Result<Vec<Expr>> {
            v.iter()
                .map(|s| parse_expression(s.as_ref()).map_err(Error::from))
                .collect()
        };
        Self::new(d, parse_all(b)?, parse_all(sigma)?)
    }

    /// `b = f x + f1`, `σ = g x + g1` in one dimension.
    pub fn linear(f: f64, f1: f64, g: f64, g1: f64) -> Self {
        let affine = |a: f64, c: f64| Expr::num(a) * Expr::var(1) + Expr::num(c);
        Self::new(1, vec![affine(f, f1)], vec![affine(g, g1)]).expect("catalog field is valid")
    }

    /// Planar rotation fields `b = ω_b (-x2, x1)`, `σ = ω_σ (-x2, x1)`.
    pub fn rotation(omega_b: f64, omega_sigma: f64) -> Self {
        let rot = |w: f64| {
            vec![
                Expr::num(w) * -Expr::var(2),
                Expr::num(w) * Expr::var(1),
            ]
        };
        Self::new(2, rot(omega_b), rot(omega_sigma)).expect("catalog field is valid")
    }

    /// `b = r x (1 - x)`, `σ = s x (1 - x)` in one dimension.
    pub fn logistic(rate: f64, noise: f64) -> Self {
        let shape = |c: f64| {
Expr::num(c) * Expr::var(1) * (Expr::num(1.0) - Expr::var(1))
        };
        Self::new(1, vec![shape(rate)], vec![shape(noise)]).expect("catalog field is valid")
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn drift_exprs(&self) -> &[Expr] {
        &self.b
    }

    pub fn diffusion_exprs(&self) -> &[Expr] {
        &self.sigma
    }

    /// Printed form of every component, for provenance records.
    pub fn source_text(&self) -> String {
        let join = |v: &[Expr]| v.iter().map(Expr::to_string).collect::<Vec<_>>().join("; ");
        format!("b = [{}], sigma = [{}]", join(&self.b), join(&self.sigma))
    }

    fn eval_into(exprs: &[Expr], t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        for (i, (e, slot)) in exprs.iter().zip(out.iter_mut()).enumerate() {
            *slot = e.eval(t, x).map_err(|source| Error::Eval { component: i, source })?;
        }
        Ok(())
    }

    pub fn drift_into(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        Self::eval_into(&self.b, t, x, out)
    }

    pub fn diffusion_into(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        Self::eval_into(&self.sigma, t, x, out)
    }

    pub fn drift(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let mut out = vec![0.0; self.d];
        self.drift_into(t, x, &mut out)?;
        Ok(out)
    }

    pub fn diffusion(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let mut out = vec![0.0; self.d];
        self.diffusion_into(t, x, &mut out)?;
        Ok(out)
    }

    /// `(b(t, x), σ(t, x))`.
    pub fn eval_field(&self, t: f64, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        Ok((self.drift(t, x)?, self.diffusion(t, x)?))
    }

    /// Central-difference Jacobian `J[i][l] = ∂σ^i/∂x_l`. The divisor is the
    /// realized difference of the perturbed arguments, so linear fields are
    /// reproduced without step-size error.
    pub fn grad_sigma(&self, t: f64, x: &[f64], h_fd: f64) -> Result<Vec<Vec<f64>>> {
        if !(h_fd > 0.0) {
            return Err(invalid("finite-difference step", format!("{h_fd} must be positive")));
        }
        self.check_dim(x)?;
        let mut jac = vec![vec![0.0; self.d]; self.d];
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        let mut sp = vec![0.0; self.d];
        let mut sm = vec![0.0; self.d];
        for l in 0..self.d {
            xp[l] = x[l] + h_fd;
            xm[l] = x[l] - h_fd;
            let span = xp[l] - xm[l];
            self.diffusion_into(t, &xp, &mut sp)?;
            self.diffusion_into(t, &xm, &mut sm)?;
            for i in 0..self.d {
                jac[i][l] = (sp[i] - sm[i]) / span;
            }
            xp[l] = x[l];
            xm[l] = x[l];
        }
        Ok(jac)
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                found: x.len(),
            });
        }
        Ok(())
    }

    /// Builds a field from its JSON configuration fragment, either
    /// `{"d": 1, "b": ["1 - x1"], "sigma": ["x1"]}` or a catalog entry such as
    /// `{"catalog": "linear", "f": 0.0, "f1": 1.0, "g": 0.0, "g1": 0.0}`.
    pub fn from_json(value: &Value) -> Result<Self> {
        let spec: CoeffSpec = serde_json::from_value(value.clone())
            .map_err(|e| invalid("coefficients", e.to_string()))?;
        spec.build()
    }
}

/// Serialized form of a coefficient field.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum CoeffSpec {
    Expressions(ExpressionSpec),
    Catalog(CatalogSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpressionSpec {
    pub d: usize,
    pub b: Vec<String>,
    pub sigma: Vec<String>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "catalog", rename_all = "snake_case", deny_unknown_fields)]
pub enum CatalogSpec {
    Linear { f: f64, f1: f64, g: f64, g1: f64 },
    Rotation {
        #[serde(default = "one")]
        omega_b: f64,
        #[serde(default = "one")]
        omega_sigma: f64,
    },
    Logistic { rate: f64, noise: f64 },
}

impl<'de> Deserialize<'de> for CoeffSpec {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let v = Value::deserialize(de)?;
        let is_catalog = v.get("catalog").is_some();
        if is_catalog {
            serde_json::from_value(v).map(CoeffSpec::Catalog).map_err(D::Error::custom)
        } else {
            serde_json::from_value(v).map(CoeffSpec::Expressions).map_err(D::Error::custom)
        }
    }
}

impl CoeffSpec {
    pub fn build(&self) -> Result<CoefficientField> {
        match self {
            CoeffSpec::Expressions(e) => CoefficientField::parse(e.d, &e.b, &e.sigma),
            CoeffSpec::Catalog(CatalogSpec::Linear { f, f1, g, g1 }) => {
                Ok(CoefficientField::linear(*f, *f1, *g, *g1))
            }
            CoeffSpec::Catalog(CatalogSpec::Rotation { omega_b, omega_sigma }) => {
                Ok(CoefficientField::rotation(*omega_b, *omega_sigma))
            }
            CoeffSpec::Catalog(CatalogSpec::Logistic { rate, noise }) => {
                Ok(CoefficientField::logistic(*rate, *noise))
            }
        }
    }
}

/// `α₀ = min{1/2, β, δ/(1+δ)}` for `0 < β, δ <= 1`.
pub fn alpha_zero(beta: f64, delta: f64) -> Result<f64> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(invalid("beta", format!("{beta} is outside (0, 1]")));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(invalid("delta", format!("{delta} is outside (0, 1]")));
    }
    Ok(0.5f64.min(beta).min(delta / (1.0 + delta)))
}

/// Midpoint of `(1 - H, α₀)`, the admissible range of the fractional order.
pub fn default_alpha(hurst: HurstParameter, alpha0: f64) -> Result<FracOrder> {
    let lo = 1.0 - hurst.value();
    if !(alpha0 - lo > 1e-12) {
        return Err(invalid(
            "fractional order",
            format!("interval (1 - H, α₀) is empty: 1 - H = {lo} >= α₀ = {alpha0}"),
        ));
    }
    FracOrder::new(0.5 * (lo + alpha0))
}
