//! Bisection over the abstention cost: train at the bracket midpoint,
//! measure rejection on the unlabeled sample with a generalization pad,
//! and narrow toward the largest rejection that still fits the budget.

use crate::data::{LabeledSet, PointSet};
use crate::error::{Error, Result};
use crate::plugin::{evaluate, Metrics};
use crate::surrogate::{rejection_rate, train_fixed_cost, FourierFeatures, SolverConfig, SurrogateModel};

/// One bisection round: the cost probed, the empirical rejection on the
/// unlabeled sample, the padded value Q compared against the budget, and
/// the trained model's objective.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchStep {
    pub iteration: usize,
    pub lambda: f64,
    pub rejection: f64,
    pub q: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Q landed in the caller-supplied interval.
    IntervalHit,
    /// Q came within the tolerance just below the budget.
    ToleranceHit,
    /// Rounds ran out; the feasible probe closest to the budget was kept.
    MaxIterations,
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StopReason::IntervalHit => "interval-hit",
            StopReason::ToleranceHit => "tolerance-hit",
            StopReason::MaxIterations => "max-iterations",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    /// Pad added to the empirical rejection; defaults to 0.1 / sqrt(m).
    pub alpha: Option<f64>,
    /// Stop once 0 <= delta - Q <= tolerance.
    pub tolerance: f64,
    /// Explicit acceptance interval for Q; replaces the tolerance rule.
    pub interval: Option<(f64, f64)>,
    pub max_rounds: usize,
    pub solver: SolverConfig,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self { alpha: None, tolerance: 0.01, interval: None, max_rounds: 12, solver: SolverConfig::default() }
    }
}

pub struct SearchResult {
    pub lambda_star: f64,
    pub model: SurrogateModel,
    pub iterations: usize,
    pub trace: Vec<SearchStep>,
    pub stop_reason: StopReason,
}

impl SearchResult {
    /// The trace row the returned model came from.
    pub fn chosen_step(&self) -> &SearchStep {
        self.trace
            .iter()
            .find(|s| s.lambda == self.lambda_star)
            .expect("lambda_star always comes from the trace")
    }
}

/// Bisect the abstention cost over (0, 1/2) until the padded rejection
/// Q sits just under the budget.
pub fn run_search(
    labeled: &LabeledSet,
    unlabeled: &PointSet,
    features: &FourierFeatures,
    delta: f64,
    config: &SearchConfig,
) -> Result<SearchResult> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter { name: "delta", reason: format!("must lie in (0, 1), got {delta}") });
    }
    if !(config.tolerance > 0.0) {
        return Err(Error::InvalidParameter {
            name: "tolerance",
            reason: format!("must be positive, got {}", config.tolerance),
        });
    }
    if config.max_rounds == 0 {
        return Err(Error::InvalidParameter { name: "max_rounds", reason: "must be at least 1".into() });
    }
    if unlabeled.is_empty() {
        return Err(Error::EmptyData);
    }
    let alpha = config.alpha.unwrap_or(0.1 / (unlabeled.len() as f64).sqrt());
    let mut lower = 0.0f64;
    let mut upper = 0.5f64;
    let mut trace = Vec::with_capacity(config.max_rounds);
    let mut best: Option<(f64, SurrogateModel, usize)> = None;
    for k in 1..=config.max_rounds {
        let lambda = 0.5 * (lower + upper);
        let fit = train_fixed_cost(labeled, features.clone(), lambda, &config.solver)?;
        let rejection = rejection_rate(&fit.model, unlabeled)?;
        let q = rejection + alpha;
        trace.push(SearchStep { iteration: k, lambda, rejection, q, objective: fit.objective });
        let stopped = match config.interval {
            Some((lo, hi)) => lo <= q && q <= hi,
            None => 0.0 <= delta - q && delta - q <= config.tolerance,
        };
        if stopped {
            let reason = if config.interval.is_some() { StopReason::IntervalHit } else { StopReason::ToleranceHit };
            return Ok(SearchResult { lambda_star: lambda, model: fit.model, iterations: k, trace, stop_reason: reason });
        }
        if q <= delta {
            upper = lambda;
            if best.as_ref().map_or(true, |(bq, _, _)| q > *bq) {
                best = Some((q, fit.model, k));
            }
        } else {
            lower = lambda;
        }
    }
    match best {
        Some((_, model, k)) => Ok(SearchResult {
            lambda_star: trace[k - 1].lambda,
            model,
            iterations: config.max_rounds,
            trace,
            stop_reason: StopReason::MaxIterations,
        }),
        None => Err(Error::SearchExhausted { delta, iterations: config.max_rounds, trace }),
    }
}

/// Score the searched model on a labeled test set.
pub fn evaluate_search(result: &SearchResult, test: &LabeledSet) -> Result<Metrics> {
    evaluate(&result.model, test, 0)
}

/// Render a trace as CSV with columns iter, lambda, rejection, Q, objective.
pub fn trace_csv(steps: &[SearchStep]) -> String {
    let mut out = String::from("iter,lambda,rejection,Q,objective\n");
    for s in steps {
        out.push_str(&format!("{},{},{},{},{}\n", s.iteration, s.lambda, s.rejection, s.q, s.objective));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::two_gaussians;

    fn setup(n: usize, seed: u64) -> (LabeledSet, PointSet, FourierFeatures) {
        let labeled = two_gaussians(n, 2, 0.25, seed).unwrap();
        let unlabeled = two_gaussians(n, 2, 0.25, seed + 1).unwrap().points;
        let ff = FourierFeatures::new(2, 40, 0.5, 3).unwrap();
        (labeled, unlabeled, ff)
    }

    fn quick_config() -> SearchConfig {
        SearchConfig {
            solver: SolverConfig { iterations: 300, ..SolverConfig::default() },
            ..SearchConfig::default()
        }
    }

    #[test]
    fn first_round_probes_the_middle_and_brackets_halve() {
        let (labeled, unlabeled, ff) = setup(300, 41);
        let result = run_search(&labeled, &unlabeled, &ff, 0.3, &quick_config()).unwrap();
        assert_eq!(result.trace[0].lambda, 0.25);
        assert_eq!(result.iterations, result.trace.len());

        let alpha = 0.1 / (unlabeled.len() as f64).sqrt();
        let (mut lower, mut upper) = (0.0f64, 0.5f64);
        for step in &result.trace {
            assert_eq!(step.lambda, 0.5 * (lower + upper));
            assert!(step.lambda > 0.0 && step.lambda < 0.5);
            assert!((step.q - (step.rejection + alpha)).abs() < 1e-15);
            if step.q <= 0.3 {
                upper = step.lambda;
            } else {
                lower = step.lambda;
            }
        }

        let chosen = result.chosen_step();
        assert!(chosen.q <= 0.3, "terminal Q {} above the budget", chosen.q);
        match result.stop_reason {
            StopReason::ToleranceHit => {
                assert!(0.3 - chosen.q <= 0.01 + 1e-15);
                assert_eq!(chosen.lambda, result.trace.last().unwrap().lambda);
            }
            StopReason::MaxIterations => {
                let best = result
                    .trace
                    .iter()
                    .filter(|s| s.q <= 0.3)
                    .map(|s| s.q)
                    .fold(f64::NEG_INFINITY, f64::max);
                assert_eq!(chosen.q, best);
            }
            StopReason::IntervalHit => panic!("no interval was configured"),
        }

        let again = run_search(&labeled, &unlabeled, &ff, 0.3, &quick_config()).unwrap();
        assert_eq!(result.trace, again.trace);
    }

    #[test]
    fn wide_interval_stops_on_the_first_round() {
        let (labeled, unlabeled, ff) = setup(200, 51);
        // Q carries the additive pad, so the padded value can sit above 1.
        let config = SearchConfig { interval: Some((0.0, 2.0)), ..quick_config() };
        let result = run_search(&labeled, &unlabeled, &ff, 0.3, &config).unwrap();
        assert_eq!(result.iterations, 1);
        assert_eq!(result.stop_reason, StopReason::IntervalHit);
        assert_eq!(result.lambda_star, 0.25);
    }

    #[test]
    fn impossible_budget_reports_exhaustion_with_trace() {
        let (labeled, unlabeled, ff) = setup(200, 61);
        let config = SearchConfig { max_rounds: 2, ..quick_config() };
        // The pad alone exceeds this budget, so no probe can qualify.
        match run_search(&labeled, &unlabeled, &ff, 0.001, &config) {
            Err(Error::SearchExhausted { delta, iterations, trace }) => {
                assert_eq!(delta, 0.001);
                assert_eq!(iterations, 2);
                assert_eq!(trace.len(), 2);
            }
            other => panic!("expected exhaustion, got {:?}", other.map(|r| r.lambda_star)),
        }
    }

    #[test]
    fn exhaustion_keeps_the_feasible_probe_closest_to_budget() {
        // Well-separated classes keep the rejection rate low, so probes
        // stay feasible and round exhaustion has something to fall back on.
        let labeled = two_gaussians(200, 2, 0.05, 71).unwrap();
        let unlabeled = two_gaussians(200, 2, 0.05, 72).unwrap().points;
        let ff = FourierFeatures::new(2, 40, 0.5, 3).unwrap();
        let config = SearchConfig { max_rounds: 2, ..quick_config() };
        let result = run_search(&labeled, &unlabeled, &ff, 0.9, &config).unwrap();
        assert_eq!(result.stop_reason, StopReason::MaxIterations);
        let best = result.trace.iter().filter(|s| s.q <= 0.9).map(|s| s.q).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(result.chosen_step().q, best);
    }

    #[test]
    fn abstain_everywhere_model_scores_rejection_one() {
        let ff = FourierFeatures::new(2, 10, 0.5, 1).unwrap();
        let model = SurrogateModel::from_parts(ff, vec![0.0; 10], 0.0, vec![0.0; 10], -1.0).unwrap();
        let result = SearchResult {
            lambda_star: 0.25,
            model,
            iterations: 1,
            trace: vec![SearchStep { iteration: 1, lambda: 0.25, rejection: 1.0, q: 1.0, objective: 0.0 }],
            stop_reason: StopReason::MaxIterations,
        };
        let test = two_gaussians(100, 2, 0.2, 5).unwrap();
        let metrics = evaluate_search(&result, &test).unwrap();
        assert_eq!(metrics.rejection_rate, 1.0);
        assert_eq!(metrics.risk, 0.0);
        assert_eq!(metrics.accuracy_on_accepted, 1.0);
    }

    #[test]
    fn trace_csv_is_exact() {
        let steps = vec![
            SearchStep { iteration: 1, lambda: 0.25, rejection: 0.5, q: 0.51, objective: 0.75 },
            SearchStep { iteration: 2, lambda: 0.125, rejection: 0.25, q: 0.26, objective: 0.5 },
        ];
        assert_eq!(
            trace_csv(&steps),
            "iter,lambda,rejection,Q,objective\n1,0.25,0.5,0.51,0.75\n2,0.125,0.25,0.26,0.5\n"
        );
    }
}
