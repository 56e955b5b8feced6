//! Strict JSON run configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::coeffs::{CoefficientFamily, ReactionFamily};
use crate::error::{invalid, Error, Result};
use crate::experiments::{
    default_coefficient, default_domain, AppendixConfig, ForcingSpec, OperatorSpec, RaySpec,
    RegimeConfig, SweepSpec, VerifyConfig,
};
use crate::grid::DomainSpec;
use crate::solvers::SolverOptions;

/// How solution fields are written.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldFormat {
    Binary,
    Csv,
    #[default]
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    /// Run directory; `--out` takes precedence.
    pub dir: String,
    pub field_format: FieldFormat,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: "fracvar-out".into(),
            field_format: FieldFormat::Both,
        }
    }
}

/// Scales and amplitude of the weighted-form convergence table. Domain,
/// order and coefficient come from the top-level sections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AppendixSpec {
    pub levels: u32,
    pub amplitude: f64,
}

impl Default for AppendixSpec {
    fn default() -> Self {
        let d = AppendixConfig::default();
        Self {
            levels: d.levels,
            amplitude: d.amplitude,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_domain")]
    pub domain: DomainSpec,
    #[serde(default)]
    pub operator: OperatorSpec,
    #[serde(default = "default_coefficient")]
    pub coefficient: CoefficientFamily,
    #[serde(default)]
    pub reaction: Option<ReactionFamily>,
    #[serde(default)]
    pub forcing: ForcingSpec,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub sweep: SweepSpec,
    #[serde(default)]
    pub ray: RaySpec,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub appendix: AppendixSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            domain: default_domain(),
            operator: OperatorSpec::default(),
            coefficient: default_coefficient(),
            reaction: None,
            forcing: ForcingSpec::Zero,
            solver: SolverOptions::default(),
            sweep: SweepSpec::default(),
            ray: RaySpec::default(),
            verify: VerifyConfig::default(),
            appendix: AppendixSpec::default(),
            output: OutputSpec::default(),
        }
    }
}

impl RunConfig {
    pub fn regime(&self) -> RegimeConfig {
        RegimeConfig {
            domain: self.domain.clone(),
            operator: self.operator.clone(),
            coefficient: self.coefficient,
            reaction: self.reaction,
            forcing: self.forcing.clone(),
            solver: self.solver,
            sweep: self.sweep.clone(),
            ray: self.ray,
        }
    }

    pub fn appendix(&self) -> AppendixConfig {
        AppendixConfig {
            domain: self.domain.clone(),
            operator: self.operator.clone(),
            coefficient: self.coefficient,
            levels: self.appendix.levels,
            amplitude: self.appendix.amplitude,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.regime().validate()?;
        self.verify.validate()?;
        self.appendix().validate()?;
        if self.output.dir.is_empty() {
            return Err(invalid("output.dir", "must not be empty"));
        }
        Ok(())
    }

    /// Pretty JSON with every default spelled out.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Parse, reject unknown keys, and validate ranges.
pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "domain": {"dim": 1, "bounds": [[0, 1]], "nodes": [128]},
        "operator": {"s": 0.5},
        "coefficient": {"family": "paper", "A": 1, "B": 2, "p": 1.5},
        "reaction": {"family": "saturating", "nu": 1}
    }"#;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = parse_config_str(MINIMAL).unwrap();
        assert_eq!(cfg.solver, SolverOptions::default());
        assert_eq!(cfg.seed, 0);
        let again = parse_config_str(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn out_of_range_order_names_the_key() {
        let text = MINIMAL.replace("\"s\": 0.5", "\"s\": 1.5");
        let err = parse_config_str(&text).unwrap_err().to_string();
        assert!(err.contains("operator.s"), "{err}");
    }

    #[test]
    fn unknown_key_is_rejected() {
        let text = MINIMAL.replace("\"reaction\"", "\"reactoin\"");
        let err = parse_config_str(&text).unwrap_err().to_string();
        assert!(err.contains("reactoin"), "{err}");
    }

    #[test]
    fn syntax_error_reports_position() {
        let err = parse_config_str("{\n  \"seed\": ,\n}")
            .unwrap_err()
            .to_string();
        assert!(err.contains("line 2"), "{err}");
    }
}
