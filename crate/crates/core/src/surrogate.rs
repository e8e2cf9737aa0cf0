//! Hinge-based training of a scoring pair (h, r) on random Fourier
//! features: h carries the label, r decides whether to declare at all.
//! One path trades abstention off through a fixed cost, the other keeps
//! a rejection surrogate under an explicit budget via an outer multiplier
//! search.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{LabeledSet, PointSet};
use crate::error::{Error, Result};
use crate::policy::{AbstainPolicy, DecisionProbs};

/// Random cosine features approximating a Gaussian kernel with width
/// `sigma`. The projection is regenerated from the seed, so a model file
/// only needs to store the scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierFeatures {
    input_dim: usize,
    feature_dim: usize,
    sigma: f64,
    seed: u64,
    weights: Vec<f64>,
    offsets: Vec<f64>,
}

impl FourierFeatures {
    pub fn new(input_dim: usize, feature_dim: usize, sigma: f64, seed: u64) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::InvalidParameter { name: "input_dim", reason: "must be at least 1".into() });
        }
        if feature_dim == 0 {
            return Err(Error::InvalidParameter { name: "feature_dim", reason: "must be at least 1".into() });
        }
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidParameter { name: "sigma", reason: format!("must be positive, got {sigma}") });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0 / sigma).unwrap();
        let weights = (0..input_dim * feature_dim).map(|_| normal.sample(&mut rng)).collect();
        let offsets = (0..feature_dim).map(|_| rng.gen::<f64>() * std::f64::consts::TAU).collect();
        Ok(Self { input_dim, feature_dim, sigma, seed, weights, offsets })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn embed(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch { expected: self.input_dim, got: x.len() });
        }
        let scale = (2.0 / self.feature_dim as f64).sqrt();
        let mut z = Vec::with_capacity(self.feature_dim);
        for f in 0..self.feature_dim {
            let row = &self.weights[f * self.input_dim..(f + 1) * self.input_dim];
            let phase: f64 = row.iter().zip(x).map(|(w, c)| w * c).sum::<f64>() + self.offsets[f];
            z.push(scale * phase.cos());
        }
        Ok(z)
    }

    /// Embed every point into one flat row-major buffer.
    pub fn embed_set(&self, points: &PointSet) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(points.len() * self.feature_dim);
        for x in points.iter() {
            out.extend_from_slice(&self.embed(x)?);
        }
        Ok(out)
    }
}

/// Kernel width from the median pairwise distance of a subsample,
/// floored at 1e-6 so duplicate-heavy data still yields a usable width.
pub fn median_sigma(points: &PointSet, seed: u64) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::EmptyData);
    }
    let mut idx: Vec<usize> = (0..points.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..idx.len()).rev() {
        idx.swap(i, rng.gen_range(0..=i));
    }
    idx.truncate(256);
    let mut dists = Vec::with_capacity(idx.len() * (idx.len() - 1) / 2);
    for (a, &i) in idx.iter().enumerate() {
        for &j in &idx[a + 1..] {
            let d: f64 = points
                .point(i)
                .iter()
                .zip(points.point(j))
                .map(|(p, q)| (p - q) * (p - q))
                .sum();
            dists.push(d.sqrt());
        }
    }
    dists.sort_unstable_by(f64::total_cmp);
    Ok(dists[dists.len() / 2].max(1e-6))
}

pub fn hinge(t: f64) -> f64 {
    (1.0 - t).max(0.0)
}

/// Surrogate loss of the scoring pair at one labeled example: the margin
/// hinge plus `lambda` times the declaration hinge on r.
pub fn fixed_cost_loss(y: i8, h: f64, r: f64, lambda: f64) -> f64 {
    hinge((y as f64 * h - r) / 2.0) + lambda * hinge(r)
}

/// Generalization slack for the rejection estimate of a norm-bounded
/// score on `m` points: (2 B R + sqrt(2 ln 2m)) / sqrt(m).
pub fn norm_slack(m: usize, weight_bound: f64, feature_bound: f64) -> f64 {
    assert!(m >= 1, "need at least one point");
    let m = m as f64;
    (2.0 * weight_bound * feature_bound + (2.0 * (2.0 * m).ln()).sqrt()) / m.sqrt()
}

/// Linear scoring pair on the embedded features: declares sign(h) when
/// r is positive and abstains otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateModel {
    features: FourierFeatures,
    score_weights: Vec<f64>,
    score_bias: f64,
    reject_weights: Vec<f64>,
    reject_bias: f64,
}

impl SurrogateModel {
    pub fn from_parts(
        features: FourierFeatures,
        score_weights: Vec<f64>,
        score_bias: f64,
        reject_weights: Vec<f64>,
        reject_bias: f64,
    ) -> Result<Self> {
        if score_weights.len() != features.feature_dim() || reject_weights.len() != features.feature_dim() {
            return Err(Error::DimensionMismatch {
                expected: features.feature_dim(),
                got: score_weights.len().max(reject_weights.len()),
            });
        }
        Ok(Self { features, score_weights, score_bias, reject_weights, reject_bias })
    }

    pub fn features(&self) -> &FourierFeatures {
        &self.features
    }

    pub fn score_weights(&self) -> &[f64] {
        &self.score_weights
    }

    pub fn score_bias(&self) -> f64 {
        self.score_bias
    }

    pub fn reject_weights(&self) -> &[f64] {
        &self.reject_weights
    }

    pub fn reject_bias(&self) -> f64 {
        self.reject_bias
    }

    /// (h, r) at a raw input point.
    pub fn scores(&self, x: &[f64]) -> Result<(f64, f64)> {
        let z = self.features.embed(x)?;
        Ok(self.scores_embedded(&z))
    }

    fn scores_embedded(&self, z: &[f64]) -> (f64, f64) {
        (dot(&self.score_weights, z) + self.score_bias, dot(&self.reject_weights, z) + self.reject_bias)
    }
}

impl AbstainPolicy for SurrogateModel {
    fn decision_probs(&self, x: &[f64]) -> Result<DecisionProbs> {
        let (h, r) = self.scores(x)?;
        Ok(if r <= 0.0 {
            DecisionProbs::ABSTAIN
        } else if h >= 0.0 {
            DecisionProbs::POSITIVE
        } else {
            DecisionProbs::NEGATIVE
        })
    }
}

/// Fraction of points the model abstains on.
pub fn rejection_rate(model: &SurrogateModel, points: &PointSet) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::EmptyData);
    }
    let mut rejected = 0usize;
    for x in points.iter() {
        if model.scores(x)?.1 <= 0.0 {
            rejected += 1;
        }
    }
    Ok(rejected as f64 / points.len() as f64)
}

/// Mean declaration hinge of r over the points; the quantity the
/// budgeted trainer constrains.
pub fn mean_reject_hinge(model: &SurrogateModel, points: &PointSet) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::EmptyData);
    }
    let mut total = 0.0;
    for x in points.iter() {
        total += hinge(model.scores(x)?.1);
    }
    Ok(total / points.len() as f64)
}

/// Mean fixed-cost loss of the model over a labeled set, plus the ridge
/// term on both weight vectors.
pub fn fixed_cost_objective(model: &SurrogateModel, labeled: &LabeledSet, lambda: f64, ridge: f64) -> Result<f64> {
    if labeled.is_empty() {
        return Err(Error::EmptyData);
    }
    let mut total = 0.0;
    for (x, &y) in labeled.points.iter().zip(&labeled.labels) {
        let (h, r) = model.scores(x)?;
        total += fixed_cost_loss(y, h, r, lambda);
    }
    Ok(total / labeled.len() as f64
        + ridge * (sum_sq(&model.score_weights) + sum_sq(&model.reject_weights)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub iterations: usize,
    pub step: f64,
    pub ridge: f64,
    /// Pick the ridge from {1e-5 .. 1e5} on a held-out fifth instead of
    /// using `ridge` directly.
    pub grid_search_ridge: bool,
    /// Seed for the grid-search holdout split.
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { iterations: 2000, step: 1.0, ridge: 0.0, grid_search_ridge: false, seed: 0 }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidParameter { name: "iterations", reason: "must be at least 1".into() });
        }
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(Error::InvalidParameter { name: "step", reason: format!("must be positive, got {}", self.step) });
        }
        if !(self.ridge >= 0.0) || !self.ridge.is_finite() {
            return Err(Error::InvalidParameter { name: "ridge", reason: format!("must be nonnegative, got {}", self.ridge) });
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Params {
    wh: Vec<f64>,
    bh: f64,
    wr: Vec<f64>,
    br: f64,
}

impl Params {
    fn zeros(d: usize) -> Self {
        Self { wh: vec![0.0; d], bh: 0.0, wr: vec![0.0; d], br: 0.0 }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sum_sq(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

fn axpy(out: &mut [f64], a: f64, z: &[f64]) {
    for (o, &v) in out.iter_mut().zip(z) {
        *o += a * v;
    }
}

/// Full-batch subgradient descent on
///   (1/n) sum [hinge((y h - r)/2) + lambda hinge(r)]
/// + (nu/m) sum_unlabeled hinge(r)
/// + ridge (|wh|^2 + |wr|^2)
/// with step/sqrt(t) steps, returning the average of the last half of
/// the iterates and the per-iteration objective values.
fn solve(
    zl: &[f64],
    labels: &[i8],
    zu: &[f64],
    d: usize,
    lambda: f64,
    nu: f64,
    ridge: f64,
    iterations: usize,
    step: f64,
    init: Params,
) -> (Params, Vec<f64>) {
    let n = labels.len();
    let m = zu.len() / d.max(1);
    let inv_n = 1.0 / n as f64;
    let mut p = init;
    let mut objectives = Vec::with_capacity(iterations);
    let tail_start = iterations / 2;
    let mut avg = Params::zeros(d);
    let mut averaged = 0usize;
    let mut gwh = vec![0.0; d];
    let mut gwr = vec![0.0; d];
    for t in 0..iterations {
        gwh.fill(0.0);
        gwr.fill(0.0);
        let mut gbh = 0.0;
        let mut gbr = 0.0;
        let mut obj = 0.0;
        for i in 0..n {
            let z = &zl[i * d..(i + 1) * d];
            let h = dot(&p.wh, z) + p.bh;
            let r = dot(&p.wr, z) + p.br;
            let y = labels[i] as f64;
            let margin = (y * h - r) / 2.0;
            obj += inv_n * hinge(margin);
            if margin < 1.0 {
                let c = 0.5 * inv_n;
                axpy(&mut gwh, -y * c, z);
                gbh -= y * c;
                axpy(&mut gwr, c, z);
                gbr += c;
            }
            if lambda > 0.0 {
                obj += inv_n * lambda * hinge(r);
                if r < 1.0 {
                    axpy(&mut gwr, -lambda * inv_n, z);
                    gbr -= lambda * inv_n;
                }
            }
        }
        if nu > 0.0 && m > 0 {
            let w = nu / m as f64;
            for j in 0..m {
                let z = &zu[j * d..(j + 1) * d];
                let r = dot(&p.wr, z) + p.br;
                obj += w * hinge(r);
                if r < 1.0 {
                    axpy(&mut gwr, -w, z);
                    gbr -= w;
                }
            }
        }
        if ridge > 0.0 {
            obj += ridge * (sum_sq(&p.wh) + sum_sq(&p.wr));
            axpy(&mut gwh, 2.0 * ridge, &p.wh);
            axpy(&mut gwr, 2.0 * ridge, &p.wr);
        }
        objectives.push(obj);
        let lr = step / ((t + 1) as f64).sqrt();
        axpy(&mut p.wh, -lr, &gwh);
        axpy(&mut p.wr, -lr, &gwr);
        p.bh -= lr * gbh;
        p.br -= lr * gbr;
        if t >= tail_start {
            axpy(&mut avg.wh, 1.0, &p.wh);
            axpy(&mut avg.wr, 1.0, &p.wr);
            avg.bh += p.bh;
            avg.br += p.br;
            averaged += 1;
        }
    }
    let inv = 1.0 / averaged as f64;
    for v in avg.wh.iter_mut().chain(avg.wr.iter_mut()) {
        *v *= inv;
    }
    avg.bh *= inv;
    avg.br *= inv;
    (avg, objectives)
}

fn embedded_objective(zl: &[f64], labels: &[i8], d: usize, p: &Params, lambda: f64, ridge: f64) -> f64 {
    let inv_n = 1.0 / labels.len() as f64;
    let mut obj = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let z = &zl[i * d..(i + 1) * d];
        let h = dot(&p.wh, z) + p.bh;
        let r = dot(&p.wr, z) + p.br;
        obj += inv_n * fixed_cost_loss(y, h, r, lambda);
    }
    obj + ridge * (sum_sq(&p.wh) + sum_sq(&p.wr))
}

fn embedded_reject_hinge(zu: &[f64], d: usize, p: &Params) -> f64 {
    let m = zu.len() / d;
    let mut total = 0.0;
    for j in 0..m {
        let z = &zu[j * d..(j + 1) * d];
        total += hinge(dot(&p.wr, z) + p.br);
    }
    total / m as f64
}

fn assemble(features: FourierFeatures, p: Params) -> SurrogateModel {
    SurrogateModel {
        features,
        score_weights: p.wh,
        score_bias: p.bh,
        reject_weights: p.wr,
        reject_bias: p.br,
    }
}

pub struct FixedCostFit {
    pub model: SurrogateModel,
    /// Objective value of the returned (averaged) parameters.
    pub objective: f64,
    /// Objective value at the start of each iteration.
    pub objectives: Vec<f64>,
}

/// Train the scoring pair under a fixed abstention cost `lambda`.
pub fn train_fixed_cost(
    labeled: &LabeledSet,
    features: FourierFeatures,
    lambda: f64,
    config: &SolverConfig,
) -> Result<FixedCostFit> {
    if labeled.is_empty() {
        return Err(Error::EmptyData);
    }
    if labeled.points.dim() != features.input_dim() {
        return Err(Error::DimensionMismatch { expected: features.input_dim(), got: labeled.points.dim() });
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter { name: "lambda", reason: format!("must be nonnegative, got {lambda}") });
    }
    config.validate()?;
    let d = features.feature_dim();
    let zl = features.embed_set(&labeled.points)?;
    let ridge = if config.grid_search_ridge {
        pick_ridge(&zl, &labeled.labels, d, lambda, config)?
    } else {
        config.ridge
    };
    let (p, objectives) = solve(&zl, &labeled.labels, &[], d, lambda, 0.0, ridge, config.iterations, config.step, Params::zeros(d));
    let objective = embedded_objective(&zl, &labeled.labels, d, &p, lambda, ridge);
    Ok(FixedCostFit { model: assemble(features, p), objective, objectives })
}

fn pick_ridge(zl: &[f64], labels: &[i8], d: usize, lambda: f64, config: &SolverConfig) -> Result<f64> {
    let n = labels.len();
    if n < 2 {
        return Err(Error::InvalidParameter {
            name: "grid_search_ridge",
            reason: "needs at least two labeled points".into(),
        });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for i in (1..n).rev() {
        idx.swap(i, rng.gen_range(0..=i));
    }
    let holdout = (n / 5).max(1);
    let gather = |ids: &[usize]| {
        let mut z = Vec::with_capacity(ids.len() * d);
        let mut y = Vec::with_capacity(ids.len());
        for &i in ids {
            z.extend_from_slice(&zl[i * d..(i + 1) * d]);
            y.push(labels[i]);
        }
        (z, y)
    };
    let (zh, yh) = gather(&idx[..holdout]);
    let (zt, yt) = gather(&idx[holdout..]);
    let mut best = (f64::INFINITY, 0.0);
    for exp in -5i32..=5 {
        let ridge = 10f64.powi(exp);
        let (p, _) = solve(&zt, &yt, &[], d, lambda, 0.0, ridge, config.iterations, config.step, Params::zeros(d));
        let score = embedded_objective(&zh, &yh, d, &p, lambda, 0.0);
        if score < best.0 {
            best = (score, ridge);
        }
    }
    Ok(best.1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstrainedConfig {
    /// Scales the budget: the rejection surrogate must stay within
    /// c_relax * delta - alpha.
    pub c_relax: f64,
    /// Slack subtracted from the budget; defaults to 0.1 / sqrt(m).
    pub alpha: Option<f64>,
    pub multiplier_max: f64,
    pub bisection_steps: usize,
    /// Accept a feasible solve once the constraint sits within this
    /// distance below the budget.
    pub tolerance: f64,
    pub solver: SolverConfig,
}

impl Default for ConstrainedConfig {
    fn default() -> Self {
        Self {
            c_relax: 1.0,
            alpha: None,
            multiplier_max: 100.0,
            bisection_steps: 40,
            tolerance: 0.01,
            solver: SolverConfig::default(),
        }
    }
}

pub struct ConstrainedFit {
    pub model: SurrogateModel,
    /// Classification part of the objective at the returned parameters.
    pub objective: f64,
    /// Mean declaration hinge over the unlabeled points.
    pub constraint_value: f64,
    pub budget: f64,
    pub multiplier: f64,
}

/// Train the scoring pair while keeping the mean declaration hinge on
/// the unlabeled sample within the abstention budget, bisecting the
/// constraint multiplier and keeping the best feasible solve.
pub fn train_constrained(
    labeled: &LabeledSet,
    unlabeled: &PointSet,
    features: FourierFeatures,
    delta: f64,
    config: &ConstrainedConfig,
) -> Result<ConstrainedFit> {
    if labeled.is_empty() || unlabeled.is_empty() {
        return Err(Error::EmptyData);
    }
    if labeled.points.dim() != features.input_dim() {
        return Err(Error::DimensionMismatch { expected: features.input_dim(), got: labeled.points.dim() });
    }
    if unlabeled.dim() != features.input_dim() {
        return Err(Error::DimensionMismatch { expected: features.input_dim(), got: unlabeled.dim() });
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter { name: "delta", reason: format!("must lie in (0, 1), got {delta}") });
    }
    config.solver.validate()?;
    if !(config.multiplier_max >= 0.0) || !config.multiplier_max.is_finite() {
        return Err(Error::InvalidParameter {
            name: "multiplier_max",
            reason: format!("must be nonnegative, got {}", config.multiplier_max),
        });
    }
    let alpha = config.alpha.unwrap_or(0.1 / (unlabeled.len() as f64).sqrt());
    let budget = config.c_relax * delta - alpha;
    if budget <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "budget",
            reason: format!("c_relax * delta - alpha = {budget} leaves no room to declare abstentions"),
        });
    }
    let d = features.feature_dim();
    let zl = features.embed_set(&labeled.points)?;
    let zu = features.embed_set(unlabeled)?;
    let run = |nu: f64, init: Params| {
        let (p, _) = solve(&zl, &labeled.labels, &zu, d, 0.0, nu, config.solver.ridge, config.solver.iterations, config.solver.step, init);
        let cv = embedded_reject_hinge(&zu, d, &p);
        let obj = embedded_objective(&zl, &labeled.labels, d, &p, 0.0, config.solver.ridge);
        (p, cv, obj)
    };

    let mut best: Option<(Params, f64, f64, f64)> = None;
    let keep_best = |p: &Params, cv: f64, obj: f64, nu: f64, best: &mut Option<(Params, f64, f64, f64)>| {
        if cv <= budget && best.as_ref().map_or(true, |b| obj < b.2) {
            *best = Some((p.clone(), cv, obj, nu));
        }
    };

    let (p0, cv0, obj0) = run(0.0, Params::zeros(d));
    keep_best(&p0, cv0, obj0, 0.0, &mut best);
    let mut lowest_cv = cv0;
    let mut last = p0;
    if best.is_none() {
        let (pm, cvm, objm) = run(config.multiplier_max, last.clone());
        lowest_cv = lowest_cv.min(cvm);
        keep_best(&pm, cvm, objm, config.multiplier_max, &mut best);
        if best.is_none() {
            return Err(Error::ConstraintInfeasible {
                budget,
                best_constraint: lowest_cv,
                multiplier_max: config.multiplier_max,
            });
        }
        last = pm;
        let (mut lo, mut hi) = (0.0f64, config.multiplier_max);
        for _ in 0..config.bisection_steps {
            if best.as_ref().is_some_and(|b| budget - b.1 <= config.tolerance) {
                break;
            }
            let mid = 0.5 * (lo + hi);
            let (p, cv, obj) = run(mid, last);
            lowest_cv = lowest_cv.min(cv);
            if cv <= budget {
                hi = mid;
                keep_best(&p, cv, obj, mid, &mut best);
            } else {
                lo = mid;
            }
            last = p;
        }
    }
    let (p, constraint_value, objective, multiplier) = best.expect("a feasible solve was recorded");
    Ok(ConstrainedFit {
        model: assemble(features, p),
        objective,
        constraint_value,
        budget,
        multiplier,
    })
}
