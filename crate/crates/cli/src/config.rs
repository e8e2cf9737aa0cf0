use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Plugin,
    Search,
    Constrained,
    BayesOracle,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Plugin => "plugin",
            Algorithm::Search => "search",
            Algorithm::Constrained => "constrained",
            Algorithm::BayesOracle => "bayes-oracle",
        }
    }
}

/// One flat, versioned description of a run. Every key is top level so a
/// config diff reads line by line, and unknown keys are rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub algorithms: Vec<Algorithm>,
    pub deltas: Vec<f64>,
    pub seeds: Vec<u64>,

    /// Synthetic problem name: linear1d, sine1d, smooth-nd, or atoms.
    #[serde(default)]
    pub problem: Option<String>,
    #[serde(default)]
    pub problem_frequency: Option<u32>,
    #[serde(default)]
    pub problem_amplitude: Option<f64>,
    #[serde(default)]
    pub problem_dimension: Option<usize>,
    /// Atom table for `problem = "atoms"`: location columns, then mass, eta.
    #[serde(default)]
    pub atoms_csv: Option<PathBuf>,

    /// LIBSVM dataset path; mutually exclusive with `problem`.
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    /// How raw labels map to -1/+1: "sign" or "parity".
    #[serde(default = "default_label_map")]
    pub label_map: String,

    #[serde(default = "default_train_size")]
    pub train_size: usize,
    #[serde(default = "default_unlabeled_size")]
    pub unlabeled_size: usize,
    #[serde(default = "default_test_size")]
    pub test_size: usize,
    /// Sample sizes for the rates verb; n and m grow together.
    #[serde(default)]
    pub sizes: Vec<usize>,

    #[serde(default = "default_lepski_scale")]
    pub lepski_scale: f64,
    #[serde(default = "default_slack_scale")]
    pub slack_scale: f64,
    #[serde(default)]
    pub smoothness_scale: Option<f64>,
    #[serde(default)]
    pub smoothness_exponent: Option<f64>,

    #[serde(default = "default_feature_dim")]
    pub feature_dim: usize,
    /// Kernel bandwidth of the random features. Unset means the median
    /// pairwise distance of each run's training points, which suits smooth
    /// targets; fast-varying targets need a smaller value.
    #[serde(default)]
    pub feature_sigma: Option<f64>,
    #[serde(default = "default_solver_iterations")]
    pub solver_iterations: usize,
    #[serde(default = "default_c_relax")]
    pub c_relax: f64,

    /// Saved model JSON for the eval verb.
    #[serde(default)]
    pub model: Option<PathBuf>,

    #[serde(default = "default_svg")]
    pub svg: bool,
}

fn default_label_map() -> String {
    "sign".into()
}
fn default_train_size() -> usize {
    2000
}
fn default_unlabeled_size() -> usize {
    2000
}
fn default_test_size() -> usize {
    10_000
}
fn default_lepski_scale() -> f64 {
    0.03
}
fn default_slack_scale() -> f64 {
    0.1
}
fn default_feature_dim() -> usize {
    80
}
fn default_solver_iterations() -> usize {
    500
}
fn default_c_relax() -> f64 {
    1.0
}
fn default_svg() -> bool {
    true
}

pub const PROBLEM_NAMES: [&str; 4] = ["linear1d", "sine1d", "smooth-nd", "atoms"];

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let config: RunConfig =
            toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            bail!("config version {} is not supported; this build reads version {CONFIG_VERSION}", self.version);
        }
        if self.algorithms.is_empty() {
            bail!("algorithms must list at least one of plugin, search, constrained, bayes-oracle");
        }
        if self.deltas.is_empty() {
            bail!("deltas must list at least one budget");
        }
        for &d in &self.deltas {
            if !(d.is_finite() && d > 0.0 && d < 1.0) {
                bail!("deltas must lie strictly inside (0, 1), got {d}");
            }
        }
        if self.seeds.is_empty() {
            bail!("seeds must list at least one seed");
        }
        match (&self.problem, &self.dataset) {
            (Some(_), Some(_)) => bail!("set either problem or dataset, not both"),
            (None, None) => bail!("set a problem name or a dataset path"),
            _ => {}
        }
        if let Some(name) = &self.problem {
            if !PROBLEM_NAMES.contains(&name.as_str()) {
                bail!("unknown problem {name:?}; choose one of {}", PROBLEM_NAMES.join(", "));
            }
            match name.as_str() {
                "sine1d" => {
                    if self.problem_frequency.is_none() || self.problem_amplitude.is_none() {
                        bail!("sine1d needs problem_frequency and problem_amplitude");
                    }
                }
                "smooth-nd" => {
                    if self.problem_dimension.is_none() || self.problem_amplitude.is_none() {
                        bail!("smooth-nd needs problem_dimension and problem_amplitude");
                    }
                }
                "atoms" => {
                    if self.atoms_csv.is_none() {
                        bail!("problem \"atoms\" needs atoms_csv");
                    }
                }
                _ => {}
            }
        }
        if self.dataset.is_some() && self.algorithms.contains(&Algorithm::BayesOracle) {
            bail!("bayes-oracle needs a synthetic problem; a dataset has no known distribution");
        }
        if !matches!(self.label_map.as_str(), "sign" | "parity") {
            bail!("label_map must be \"sign\" or \"parity\", got {:?}", self.label_map);
        }
        for (name, v) in [
            ("train_size", self.train_size),
            ("unlabeled_size", self.unlabeled_size),
            ("test_size", self.test_size),
            ("feature_dim", self.feature_dim),
            ("solver_iterations", self.solver_iterations),
        ] {
            if v == 0 {
                bail!("{name} must be at least 1");
            }
        }
        if self.sizes.iter().any(|&n| n == 0) {
            bail!("sizes must all be at least 1");
        }
        for (name, v) in [("lepski_scale", self.lepski_scale), ("slack_scale", self.slack_scale)] {
            if !(v.is_finite() && v > 0.0) {
                bail!("{name} must be positive, got {v}");
            }
        }
        if let Some(s) = self.feature_sigma {
            if !(s.is_finite() && s > 0.0) {
                bail!("feature_sigma must be positive, got {s}");
            }
        }
        match (self.smoothness_scale, self.smoothness_exponent) {
            (None, None) => {}
            (Some(scale), Some(exponent)) => {
                if !(scale.is_finite() && scale > 0.0) {
                    bail!("smoothness_scale must be positive, got {scale}");
                }
                if !(exponent > 0.0 && exponent <= 1.0) {
                    bail!("smoothness_exponent must lie in (0, 1], got {exponent}");
                }
            }
            _ => bail!("smoothness_scale and smoothness_exponent come as a pair"),
        }
        if !(1.0..=2.0).contains(&self.c_relax) {
            bail!("c_relax must lie in [1, 2], got {}", self.c_relax);
        }
        Ok(())
    }
}
