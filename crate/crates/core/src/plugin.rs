//! Classifier built on top of a histogram estimate: an empirical
//! threshold picks the abstention region, a transition band around it
//! abstains with a calibrated probability, and everything else declares
//! the estimated sign.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{LabeledSet, PointSet};
use crate::error::{Error, Result};
use crate::histogram::{adaptive_error_bound, statistical_error, HistogramEstimator};
use crate::policy::{AbstainPolicy, DecisionProbs};
use crate::problems::Smoothness;

/// Calibration slack for an unlabeled sample of size `m`:
/// scale * sqrt(72 ln(4m) / m), clipped to [0, 1].
pub fn abstention_slack(m: usize, scale: f64) -> f64 {
    assert!(m >= 1, "unlabeled sample must be nonempty");
    let m = m as f64;
    (scale * (72.0 * (4.0 * m).ln() / m).sqrt()).clamp(0.0, 1.0)
}

/// Distances to 1/2 closer than this are treated as one candidate, so a
/// tie that exact arithmetic would see survives the rounding in the
/// subtraction.
const TIE: f64 = 1e-12;

/// Largest threshold gamma from {0} and the observed |estimate - 1/2|
/// values whose empirical mass stays within `delta - slack`; zero when
/// no candidate qualifies.
pub fn estimate_threshold(estimates: &[f64], delta: f64, slack: f64) -> f64 {
    let budget = delta - slack;
    let m = estimates.len() as f64;
    let mut scores: Vec<f64> = estimates.iter().map(|v| (v - 0.5).abs()).collect();
    scores.sort_unstable_by(f64::total_cmp);
    let mut gamma = 0.0f64;
    let mut i = 0;
    while i < scores.len() {
        let mut j = i + 1;
        while j < scores.len() && scores[j] - scores[j - 1] <= TIE {
            j += 1;
        }
        if j as f64 / m <= budget {
            gamma = scores[j - 1];
        }
        i = j;
    }
    gamma
}

/// Threshold, band probability, and the empirical masses they were
/// derived from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub gamma: f64,
    pub band_probability: f64,
    pub never_abstain: bool,
    /// Empirical mass of |estimate - 1/2| <= gamma.
    pub interior_mass: f64,
    /// Empirical mass of gamma < |estimate - 1/2| <= gamma + band.
    pub band_mass: f64,
}

/// Pick the threshold and the band abstention probability from estimates
/// at the unlabeled points. A budget smaller than the slack cannot be
/// certified, so calibration then disables abstention outright.
pub fn calibrate(estimates: &[f64], delta: f64, slack: f64, band: f64) -> Result<Calibration> {
    if estimates.is_empty() {
        return Err(Error::EmptyData);
    }
    check_delta(delta)?;
    if !(0.0..=1.0).contains(&band) {
        return Err(Error::InvalidParameter { name: "band", reason: format!("must lie in [0, 1], got {band}") });
    }
    if delta - slack <= 0.0 {
        return Ok(Calibration {
            gamma: 0.0,
            band_probability: 0.0,
            never_abstain: true,
            interior_mass: 0.0,
            band_mass: 0.0,
        });
    }
    let gamma = estimate_threshold(estimates, delta, slack);
    let m = estimates.len() as f64;
    let mass = |limit: f64| {
        estimates.iter().filter(|v| (**v - 0.5).abs() <= limit + TIE).count() as f64 / m
    };
    let p1 = mass(gamma);
    let p2 = mass(gamma + band);
    let denom = p2 - p1 - 2.0 * slack;
    let band_probability = if p1 < delta - 5.0 * slack && denom > 0.0 {
        ((delta - 5.0 * slack - p1) / denom).clamp(0.0, 1.0)
    } else {
        0.0
    };
    Ok(Calibration { gamma, band_probability, never_abstain: false, interior_mass: p1, band_mass: p2 - p1 })
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter { name: "delta", reason: format!("must lie in (0, 1), got {delta}") });
    }
    Ok(())
}

/// Band width around the threshold. With known smoothness this is twice
/// the adaptive accuracy bound; otherwise it falls back to the 90th
/// percentile of nine statistical errors at the bandwidths chosen on the
/// unlabeled points, clipped to [0, 1/2].
pub fn band_for(
    estimator: &HistogramEstimator,
    unlabeled: &PointSet,
    smoothness: Option<&Smoothness>,
) -> Result<f64> {
    let ladder = estimator.ladder();
    if let Some(s) = smoothness {
        return Ok(2.0 * adaptive_error_bound(ladder.sample_size(), ladder.mu_min(), s.scale, s.exponent, ladder.dimension()));
    }
    if unlabeled.is_empty() {
        return Err(Error::EmptyData);
    }
    let n_mu = ladder.sample_size() as f64 * ladder.mu_min();
    let mut spreads = Vec::with_capacity(unlabeled.len());
    for x in unlabeled.iter() {
        let h = estimator.adaptive_bandwidth(x)?;
        spreads.push(9.0 * statistical_error(n_mu, h, ladder.dimension()));
    }
    spreads.sort_unstable_by(f64::total_cmp);
    let rank = ((0.9 * spreads.len() as f64).ceil() as usize).clamp(1, spreads.len());
    Ok(spreads[rank - 1].clamp(0.0, 0.5))
}

/// Histogram-backed classifier with a hard abstention region, a
/// randomized transition band, and declaration elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct PluginClassifier {
    estimator: HistogramEstimator,
    delta: f64,
    slack: f64,
    gamma: f64,
    band: f64,
    band_probability: f64,
    never_abstain: bool,
    interior_mass: f64,
    band_mass: f64,
}

impl PluginClassifier {
    /// Calibrate a classifier from a fitted estimator and unlabeled
    /// points: threshold and band probability from the estimates there,
    /// with `slack` already computed for the unlabeled sample size.
    pub fn build(
        estimator: HistogramEstimator,
        unlabeled: &PointSet,
        delta: f64,
        slack: f64,
        band: f64,
    ) -> Result<Self> {
        check_delta(delta)?;
        if unlabeled.is_empty() {
            return Err(Error::EmptyData);
        }
        if unlabeled.dim() != estimator.ladder().dimension() {
            return Err(Error::DimensionMismatch {
                expected: estimator.ladder().dimension(),
                got: unlabeled.dim(),
            });
        }
        if !(0.0..=1.0).contains(&slack) {
            return Err(Error::InvalidParameter {
                name: "slack",
                reason: format!("must lie in [0, 1], got {slack}"),
            });
        }
        let estimates = unlabeled.iter().map(|x| estimator.predict_eta(x)).collect::<Result<Vec<_>>>()?;
        let cal = calibrate(&estimates, delta, slack, band)?;
        Ok(Self {
            estimator,
            delta,
            slack,
            gamma: cal.gamma,
            band: if cal.never_abstain { 0.0 } else { band },
            band_probability: cal.band_probability,
            never_abstain: cal.never_abstain,
            interior_mass: cal.interior_mass,
            band_mass: cal.band_mass,
        })
    }

    /// Reassemble a calibrated classifier from stored parts.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        estimator: HistogramEstimator,
        delta: f64,
        slack: f64,
        gamma: f64,
        band: f64,
        band_probability: f64,
        never_abstain: bool,
        interior_mass: f64,
        band_mass: f64,
    ) -> Result<Self> {
        check_delta(delta)?;
        for (name, v, hi) in [
            ("slack", slack, 1.0),
            ("gamma", gamma, 0.5),
            ("band", band, 1.0),
            ("band_probability", band_probability, 1.0),
            ("interior_mass", interior_mass, 1.0),
            ("band_mass", band_mass, 1.0),
        ] {
            if !(0.0..=hi).contains(&v) {
                return Err(Error::InvalidParameter { name, reason: format!("must lie in [0, {hi}], got {v}") });
            }
        }
        Ok(Self {
            estimator,
            delta,
            slack,
            gamma,
            band,
            band_probability,
            never_abstain,
            interior_mass,
            band_mass,
        })
    }

    pub fn estimator(&self) -> &HistogramEstimator {
        &self.estimator
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn slack(&self) -> f64 {
        self.slack
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn band(&self) -> f64 {
        self.band
    }

    pub fn band_probability(&self) -> f64 {
        self.band_probability
    }

    pub fn never_abstain(&self) -> bool {
        self.never_abstain
    }

    /// Empirical mass of the hard abstention region on the calibration
    /// points.
    pub fn interior_mass(&self) -> f64 {
        self.interior_mass
    }

    /// Empirical mass of the transition band on the calibration points.
    pub fn band_mass(&self) -> f64 {
        self.band_mass
    }
}

impl AbstainPolicy for PluginClassifier {
    fn decision_probs(&self, x: &[f64]) -> Result<DecisionProbs> {
        let eta = self.estimator.predict_eta(x)?;
        let d = eta - 0.5;
        if self.never_abstain {
            return Ok(if d >= 0.0 { DecisionProbs::POSITIVE } else { DecisionProbs::NEGATIVE });
        }
        let a = d.abs();
        if a <= self.gamma {
            Ok(DecisionProbs::ABSTAIN)
        } else if a <= self.gamma + self.band {
            let declare = 1.0 - self.band_probability;
            Ok(if d > 0.0 {
                DecisionProbs { negative: 0.0, positive: declare, abstain: self.band_probability }
            } else {
                DecisionProbs { negative: declare, positive: 0.0, abstain: self.band_probability }
            })
        } else if d > 0.0 {
            Ok(DecisionProbs::POSITIVE)
        } else {
            Ok(DecisionProbs::NEGATIVE)
        }
    }

    fn breakpoints_1d(&self) -> Option<Vec<f64>> {
        let ladder = self.estimator.ladder();
        if ladder.dimension() != 1 {
            return None;
        }
        // Every grid boundary in the ladder is a multiple of 1 / levels,
        // so the decision probabilities are constant between those points.
        let n = ladder.levels();
        Some((1..n).map(|i| i as f64 / n as f64).collect())
    }
}

/// Test-set performance of a policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    /// Fraction of all test points that were declared with the wrong label.
    pub risk: f64,
    /// Fraction of all test points the policy abstained on.
    pub rejection_rate: f64,
    /// Fraction of declared points that got the right label; 1 when
    /// nothing was declared.
    pub accuracy_on_accepted: f64,
    /// Risk minus a reference risk, when one is known.
    pub excess_risk: Option<f64>,
}

impl Metrics {
    pub fn with_excess_against(mut self, reference_risk: f64) -> Self {
        self.excess_risk = Some(self.risk - reference_risk);
        self
    }
}

/// Run a policy over a labeled test set, drawing the randomization for
/// band decisions from the given seed.
pub fn evaluate<P: AbstainPolicy + ?Sized>(policy: &P, test: &LabeledSet, seed: u64) -> Result<Metrics> {
    use rand::Rng;
    if test.is_empty() {
        return Err(Error::EmptyData);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut abstained = 0usize;
    let mut wrong = 0usize;
    let mut right = 0usize;
    for (x, &y) in test.points.iter().zip(&test.labels) {
        let u: f64 = rng.gen();
        match policy.decide(x, u)?.label() {
            None => abstained += 1,
            Some(l) if l == y => right += 1,
            Some(_) => wrong += 1,
        }
    }
    let total = test.len() as f64;
    let declared = right + wrong;
    Ok(Metrics {
        risk: wrong as f64 / total,
        rejection_rate: abstained as f64 / total,
        accuracy_on_accepted: if declared == 0 { 1.0 } else { right as f64 / declared as f64 },
        excess_risk: None,
    })
}
