use std::path::{Path, PathBuf};

use fbm_viability::coeff::CoeffSpec;
use fbm_viability::fbm::HurstParameter;
use fbm_viability::frac::FracOrder;
use fbm_viability::mc::{ExperimentConfig, InitialCondition};
use fbm_viability::viability::{CheckSettings, ConstraintSet};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::Failure;

fn one() -> f64 {
    1.0
}

fn one_path() -> usize {
    1
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FbmSection {
    pub hurst: HurstParameter,
    #[serde(default)]
    pub t: f64,
    #[serde(default = "one")]
    pub t_end: f64,
    pub n_steps: usize,
    #[serde(default = "one_path")]
    pub n_paths: usize,
    pub master_seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub membership_tol: f64,
    pub x0: InitialCondition,
    #[serde(default)]
    pub check: CheckSettings,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub lambda_diagnostic: bool,
}

/// Top-level experiment document. Unknown keys are rejected at every level.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub fbm: FbmSection,
    pub coefficients: CoeffSpec,
    #[serde(default)]
    pub coefficients_upper: Option<CoeffSpec>,
    pub constraint: ConstraintSet,
    pub experiment: ExperimentSection,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

/// A parsed config together with the hash of its canonical JSON form.
pub struct LoadedConfig {
    pub config: RunConfig,
    pub canonical: Value,
    pub hash: String,
}

/// Byte offset of a 1-based `(line, column)` position in `text`.
fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let start: usize = text.split_inclusive('\n').take(line.saturating_sub(1)).map(str::len).sum();
    start + column.saturating_sub(1)
}

pub fn parse_config(text: &str) -> Result<LoadedConfig, Failure> {
    let config: RunConfig = serde_json::from_str(text).map_err(|e| {
        let offset = byte_offset(text, e.line(), e.column());
        let what = if e.is_data() { "invalid config" } else { "malformed JSON" };
        Failure::Usage(format!("{what} at byte offset {offset} (line {}, column {}): {e}", e.line(), e.column()))
    })?;
    let canonical: Value = serde_json::from_str(text).map_err(|e| Failure::Usage(e.to_string()))?;
    let hash = hash_value(&canonical);
    Ok(LoadedConfig { config, canonical, hash })
}

pub fn load_config(path: &Path) -> Result<LoadedConfig, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
    parse_config(&text)
}

/// SHA-256 of the compact JSON serialization with sorted keys.
pub fn hash_value(value: &Value) -> String {
    let bytes = serde_json::to_vec(value).expect("json values serialize");
    hex::encode(Sha256::digest(&bytes))
}

impl RunConfig {
    pub fn experiment_config(&self) -> Result<ExperimentConfig, Failure> {
        let usage = |e: fbm_viability::Error| Failure::Usage(e.to_string());
        if !self.fbm.hurst.is_standard() {
            return Err(Failure::Usage(format!(
                "hurst parameter {} must lie in (1/2, 1) for solves",
                self.fbm.hurst.value()
            )));
        }
        let alpha = match self.experiment.alpha {
            Some(a) => {
                let a = FracOrder::new(a).map_err(usage)?;
                a.check_young(self.fbm.hurst.value()).map_err(usage)?;
                Some(a)
            }
            None => None,
        };
        let cfg = ExperimentConfig {
            hurst: self.fbm.hurst,
            t: self.fbm.t,
            t_end: self.fbm.t_end,
            n_steps: self.fbm.n_steps,
            n_paths: self.fbm.n_paths,
            master_seed: self.fbm.master_seed,
            coefficients: self.coefficients.build().map_err(usage)?,
            upper: self.coefficients_upper.as_ref().map(CoeffSpec::build).transpose().map_err(usage)?,
            constraint: self.constraint.clone(),
            membership_tol: self.experiment.membership_tol,
            x0: self.experiment.x0.clone(),
            check: self.experiment.check.clone(),
            alpha,
            lambda_diagnostic: self.experiment.lambda_diagnostic,
        };
        cfg.validate().map_err(usage)?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offsets_count_bytes_across_lines() {
        let text = "{\n  \"a\": 1,\n  x\n}";
        assert_eq!(&text[byte_offset(text, 3, 3)..byte_offset(text, 3, 3) + 1], "x");
        assert_eq!(byte_offset(text, 1, 1), 0);
    }

    #[test]
    fn hash_ignores_formatting_and_key_order() {
        let a: Value = serde_json::from_str(r#"{"x": 1, "y": [1, 2]}"#).unwrap();
        let b: Value = serde_json::from_str("{\"y\":[1,2],\n\"x\":1}").unwrap();
        assert_eq!(hash_value(&a), hash_value(&b));
        assert_eq!(hash_value(&a).len(), 64);
    }
}
