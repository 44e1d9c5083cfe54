//! JSON run configuration. Every block is optional; command-line flags
//! override whatever the file provides, and unset values fall back to the
//! estimator defaults.

use std::path::{Path, PathBuf};

use dpmnl::data::AttributeSpec;
use dpmnl::mnl::UtilitySpace;
use dpmnl::simgen::ExperimentId;
use dpmnl::stick::ConcentrationPrior;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Not echoed into the outputs, so runs into different directories stay
    /// byte-identical.
    #[serde(skip_serializing)]
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    /// Worker cap; results do not depend on it, so it is not echoed either.
    #[serde(skip_serializing)]
    pub threads: Option<usize>,
    pub data: DataConfig,
    pub simulate: SimulateConfig,
    pub model: ModelConfig,
    pub crossval: CrossvalConfig,
    pub summarize: SummarizeConfig,
    pub dp_demo: DpDemoConfig,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub path: Option<PathBuf>,
    /// Attribute columns in utility order; defaults to the simulation
    /// schema `ivtt, ovtt, cost`.
    pub attributes: Option<Vec<AttributeSpec>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub experiment: Option<ExperimentId>,
    pub n_individuals: Option<usize>,
    pub n_tasks: Option<usize>,
    pub n_alternatives: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Mnl,
    Lc,
    Dpm,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub kind: Option<ModelKind>,
    pub space: Option<UtilitySpace>,
    /// Latent classes for a single LC fit.
    pub k: Option<usize>,
    /// LC sweep range; the BIC-best model is the one reported.
    pub k_min: Option<usize>,
    pub k_max: Option<usize>,
    pub n_starts: Option<usize>,
    pub truncation: Option<usize>,
    pub prior_scale: Option<f64>,
    pub alpha_prior: Option<ConcentrationPrior>,
    pub rel_tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub inner_tol: Option<f64>,
    pub inner_max_iter: Option<usize>,
    pub occupancy_threshold: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CrossvalConfig {
    pub folds: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SummarizeConfig {
    /// A `mixture.json` written by `estimate`.
    pub mixture: Option<PathBuf>,
    pub percentiles: Option<Vec<f64>>,
    pub draws: Option<usize>,
    pub bandwidth: Option<f64>,
    pub grid_points: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DpDemoConfig {
    pub alphas: Option<Vec<f64>>,
    pub draws: Option<usize>,
    pub truncation: Option<usize>,
    pub bins: Option<usize>,
    /// Histogram range `[lo, hi]`; draws outside land in the tail rows.
    pub range: Option<[f64; 2]>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }
}

/// `Some` from the flag wins over `Some` from the file.
pub(crate) fn merge<T>(slot: &mut Option<T>, flag: Option<T>) {
    if flag.is_some() {
        *slot = flag;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let err = serde_json::from_str::<RunConfig>(r#"{"seed": 1, "sede": 2}"#).unwrap_err();
        assert!(err.to_string().contains("unknown field"));
        let err = serde_json::from_str::<RunConfig>(r#"{"model": {"kind": "dpm", "trunc": 5}}"#).unwrap_err();
        assert!(err.to_string().contains("unknown field"));
    }

    #[test]
    fn parses_a_full_block() {
        let c: RunConfig = serde_json::from_str(
            r#"{"seed": 7, "simulate": {"experiment": "III", "n_individuals": 50},
                "model": {"kind": "lc", "space": "wtp", "k_min": 1, "k_max": 3,
                          "alpha_prior": {"shape": 2.0, "scale": 2.0}}}"#,
        )
        .unwrap();
        assert_eq!(c.seed, Some(7));
        assert_eq!(c.simulate.experiment, Some(ExperimentId::III));
        assert_eq!(c.model.kind, Some(ModelKind::Lc));
        assert_eq!(c.model.space, Some(UtilitySpace::Wtp));
    }

    #[test]
    fn bad_experiment_is_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"simulate": {"experiment": "V"}}"#).is_err());
    }

    #[test]
    fn flags_win() {
        let mut slot = Some(3);
        merge(&mut slot, None);
        assert_eq!(slot, Some(3));
        merge(&mut slot, Some(9));
        assert_eq!(slot, Some(9));
    }

    #[test]
    fn echo_omits_machine_specific_fields() {
        let c = RunConfig { output_dir: Some("/tmp/x".into()), threads: Some(4), ..RunConfig::default() };
        let s = serde_json::to_string(&c).unwrap();
        assert!(!s.contains("output_dir") && !s.contains("threads"));
    }
}
