//! The decision interface shared by every rule in this crate.
//!
//! A rule maps a point to probabilities over the three outcomes
//! (predict -1, predict +1, abstain). Randomized rules realize the
//! abstention coin through the caller-supplied uniform draw, so a
//! fixed draw always yields the same decision.

use crate::error::Result;

/// Outcome of a single classification decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Decision {
    Negative,
    Positive,
    Abstain,
}

impl Decision {
    /// The declared label, or `None` when the rule abstains.
    pub fn label(self) -> Option<i8> {
        match self {
            Decision::Negative => Some(-1),
            Decision::Positive => Some(1),
            Decision::Abstain => None,
        }
    }
}

/// Probabilities the rule assigns to each outcome at a fixed point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecisionProbs {
    pub negative: f64,
    pub positive: f64,
    pub abstain: f64,
}

impl DecisionProbs {
    pub const NEGATIVE: Self = Self { negative: 1.0, positive: 0.0, abstain: 0.0 };
    pub const POSITIVE: Self = Self { negative: 0.0, positive: 1.0, abstain: 0.0 };
    pub const ABSTAIN: Self = Self { negative: 0.0, positive: 0.0, abstain: 1.0 };
}

/// A classifier with a reject option.
pub trait AbstainPolicy {
    /// Outcome probabilities at `x`.
    fn decision_probs(&self, x: &[f64]) -> Result<DecisionProbs>;

    /// Resolve the decision at `x` using the uniform draw `u` in [0, 1):
    /// abstain when `u` falls below the abstention probability, otherwise
    /// declare the label the rule puts its mass on.
    fn decide(&self, x: &[f64], u: f64) -> Result<Decision> {
        let p = self.decision_probs(x)?;
        if u < p.abstain {
            Ok(Decision::Abstain)
        } else if p.positive >= p.negative {
            Ok(Decision::Positive)
        } else {
            Ok(Decision::Negative)
        }
    }

    /// Boundaries of the rule's piecewise-constant structure on [0, 1],
    /// for one-dimensional inputs. Exact risk integration splits the
    /// domain at these points. `None` means no known structure.
    fn breakpoints_1d(&self) -> Option<Vec<f64>> {
        None
    }
}
