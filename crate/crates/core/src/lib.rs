//! Binary classification with a bounded rate of abstention.
//!
//! The library covers the full pipeline: synthetic problems with known
//! optimal behavior ([`problems`]), adaptive histogram regression
//! ([`histogram`]), a calibrated plug-in classifier that spends an
//! abstention budget ([`plugin`]), hinge-trained scoring pairs on random
//! Fourier features ([`surrogate`]), bisection over the abstention cost
//! ([`search`]), dataset ingestion and splitting ([`data`]), and model
//! persistence ([`model`]).

pub mod data;
mod error;
pub mod histogram;
pub mod model;
pub mod plugin;
pub mod policy;
pub mod problems;
pub mod search;
pub mod surrogate;

pub use data::{LabeledSet, PointSet};
pub use error::{Error, Result};
pub use histogram::{BandwidthLadder, HistogramEstimator};
pub use model::Model;
pub use plugin::{Metrics, PluginClassifier};
pub use policy::{AbstainPolicy, Decision, DecisionProbs};
pub use problems::{AbstainRule, Problem};
pub use search::{SearchResult, SearchStep};
pub use surrogate::{FourierFeatures, SurrogateModel};
