//! Versioned JSON persistence for trained models. Grids are stored as
//! sorted (index, positives, total) triples and Fourier projections as
//! their generating seed, so files are compact and byte-stable.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::histogram::{BandwidthLadder, GridStats, HistogramEstimator};
use crate::plugin::PluginClassifier;
use crate::policy::AbstainPolicy;
use crate::surrogate::{FourierFeatures, SurrogateModel};

pub const FORMAT_VERSION: u32 = 1;

/// A persistable trained model.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Histogram(HistogramEstimator),
    Plugin(PluginClassifier),
    Surrogate(SurrogateModel),
}

#[derive(Serialize, Deserialize)]
struct HistogramRepr {
    n: usize,
    mu_min: f64,
    dimension: usize,
    levels: usize,
    global_positives: u64,
    grids: Vec<Vec<(u64, u64, u64)>>,
    slack_scale: f64,
}

#[derive(Serialize, Deserialize)]
struct PluginRepr {
    delta: f64,
    slack: f64,
    gamma: f64,
    band: f64,
    band_probability: f64,
    never_abstain: bool,
    interior_mass: f64,
    band_mass: f64,
    estimator: HistogramRepr,
}

#[derive(Serialize, Deserialize)]
struct SurrogateRepr {
    input_dim: usize,
    feature_dim: usize,
    sigma: f64,
    seed: u64,
    score_weights: Vec<f64>,
    score_bias: f64,
    reject_weights: Vec<f64>,
    reject_bias: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum Repr {
    Histogram(HistogramRepr),
    Plugin(PluginRepr),
    Surrogate(SurrogateRepr),
}

#[derive(Serialize, Deserialize)]
struct FileRepr {
    format_version: u32,
    #[serde(flatten)]
    model: Repr,
}

fn histogram_repr(est: &HistogramEstimator) -> HistogramRepr {
    let ladder = est.ladder();
    HistogramRepr {
        n: ladder.sample_size(),
        mu_min: ladder.mu_min(),
        dimension: ladder.dimension(),
        levels: ladder.levels(),
        global_positives: est.global_positives(),
        grids: est.grids().iter().map(|g| g.sorted_cells()).collect(),
        slack_scale: est.slack_scale(),
    }
}

fn histogram_from(repr: HistogramRepr) -> Result<HistogramEstimator> {
    let ladder = BandwidthLadder::from_parts(repr.n, repr.mu_min, repr.dimension, repr.levels)?;
    let grids = repr
        .grids
        .iter()
        .enumerate()
        .map(|(k, cells)| GridStats::from_parts(ladder.bandwidth(k + 1), cells))
        .collect::<Result<Vec<_>>>()?;
    HistogramEstimator::from_parts(ladder, grids, repr.global_positives, repr.slack_scale)
}

impl Model {
    pub fn to_json(&self) -> String {
        let repr = match self {
            Model::Histogram(est) => Repr::Histogram(histogram_repr(est)),
            Model::Plugin(p) => Repr::Plugin(PluginRepr {
                delta: p.delta(),
                slack: p.slack(),
                gamma: p.gamma(),
                band: p.band(),
                band_probability: p.band_probability(),
                never_abstain: p.never_abstain(),
                interior_mass: p.interior_mass(),
                band_mass: p.band_mass(),
                estimator: histogram_repr(p.estimator()),
            }),
            Model::Surrogate(s) => Repr::Surrogate(SurrogateRepr {
                input_dim: s.features().input_dim(),
                feature_dim: s.features().feature_dim(),
                sigma: s.features().sigma(),
                seed: s.features().seed(),
                score_weights: s.score_weights().to_vec(),
                score_bias: s.score_bias(),
                reject_weights: s.reject_weights().to_vec(),
                reject_bias: s.reject_bias(),
            }),
        };
        let file = FileRepr { format_version: FORMAT_VERSION, model: repr };
        serde_json::to_string_pretty(&file).expect("model serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Model> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::ModelFormat(format!("invalid JSON: {e}")))?;
        let version = value
            .get("format_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::ModelFormat("missing format_version".into()))?;
        if version != FORMAT_VERSION as u64 {
            return Err(Error::ModelFormat(format!(
                "format_version {version} is not supported (expected {FORMAT_VERSION})"
            )));
        }
        let file: FileRepr =
            serde_json::from_value(value).map_err(|e| Error::ModelFormat(e.to_string()))?;
        Ok(match file.model {
            Repr::Histogram(r) => Model::Histogram(histogram_from(r)?),
            Repr::Plugin(r) => {
                let estimator = histogram_from(r.estimator)?;
                Model::Plugin(PluginClassifier::from_parts(
                    estimator,
                    r.delta,
                    r.slack,
                    r.gamma,
                    r.band,
                    r.band_probability,
                    r.never_abstain,
                    r.interior_mass,
                    r.band_mass,
                )?)
            }
            Repr::Surrogate(r) => {
                let features = FourierFeatures::new(r.input_dim, r.feature_dim, r.sigma, r.seed)?;
                Model::Surrogate(SurrogateModel::from_parts(
                    features,
                    r.score_weights,
                    r.score_bias,
                    r.reject_weights,
                    r.reject_bias,
                )?)
            }
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Model> {
        let text = std::fs::read_to_string(path)?;
        Model::from_json(&text)
    }

    /// The decision policy this model implements; a bare estimator has
    /// no abstention rule attached and returns None.
    pub fn as_policy(&self) -> Option<&dyn AbstainPolicy> {
        match self {
            Model::Histogram(_) => None,
            Model::Plugin(p) => Some(p),
            Model::Surrogate(s) => Some(s),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Model::Histogram(_) => "histogram",
            Model::Plugin(_) => "plugin",
            Model::Surrogate(_) => "surrogate",
        }
    }
}
