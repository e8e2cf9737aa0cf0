//! Synthetic problem catalog with exact abstention oracles.
//!
//! Each problem fixes a distribution on the unit cube together with the
//! conditional positive-class probability `eta`. For a rejection budget
//! `delta`, the optimal rule abstains on the band where `eta` is closest
//! to 1/2, chosen as wide as the budget allows; when the band edge carries
//! point mass, the rule abstains there with just enough probability to
//! spend the budget exactly. The catalog provides that rule, its risk,
//! and (for finite-support problems) an independent greedy construction
//! of the same optimum.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{LabeledSet, PointSet};
use crate::error::{Error, Result};
use crate::policy::{AbstainPolicy, Decision, DecisionProbs};

/// Quadrature resolution used by the continuous oracles.
pub const DEFAULT_RESOLUTION: usize = 100_000;

const BISECTION_STEPS: usize = 200;
const STREAM_LABELED: u64 = 1;
const STREAM_UNLABELED: u64 = 2;

/// A support point of a finite distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub location: Vec<f64>,
    pub mass: f64,
    pub eta: f64,
}

/// Hölder continuity of `eta`: |eta(x) - eta(y)| <= scale * |x - y|^exponent.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Smoothness {
    pub scale: f64,
    pub exponent: f64,
}

/// Optional distributional metadata, used to size estimator tolerances.
/// `margin_*` bounds the mass near the decision boundary from above
/// (P(|eta - 1/2| <= t) <= scale * t^exponent), `detect_*` from below.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Assumptions {
    pub margin_scale: Option<f64>,
    pub margin_exponent: Option<f64>,
    pub detect_scale: Option<f64>,
    pub detect_exponent: Option<f64>,
    pub smoothness: Option<Smoothness>,
    pub density_min: Option<f64>,
    pub density_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    /// eta(x) = x on [0, 1], uniform inputs.
    Linear1d,
    /// eta(x) = 1/2 + amplitude * sin(2 pi frequency x), uniform inputs.
    Sine1d { frequency: u32, amplitude: f64 },
    /// eta(x) = 1/2 + amplitude * prod_d sin(2 pi x_d), uniform inputs.
    SmoothNd { dimension: usize, amplitude: f64 },
    /// Finite support with per-atom mass and eta.
    Atoms { atoms: Vec<Atom> },
}

/// A classification problem with known distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    kind: Kind,
    assumptions: Assumptions,
}

impl Problem {
    pub fn linear1d() -> Self {
        Self {
            kind: Kind::Linear1d,
            assumptions: Assumptions {
                margin_scale: Some(2.0),
                margin_exponent: Some(1.0),
                detect_scale: Some(2.0),
                detect_exponent: Some(1.0),
                smoothness: Some(Smoothness { scale: 1.0, exponent: 1.0 }),
                density_min: Some(1.0),
                density_max: Some(1.0),
            },
        }
    }

    pub fn sine1d(frequency: u32, amplitude: f64) -> Result<Self> {
        if frequency == 0 {
            return Err(Error::InvalidParameter { name: "frequency", reason: "must be at least 1".into() });
        }
        check_amplitude(amplitude)?;
        Ok(Self {
            kind: Kind::Sine1d { frequency, amplitude },
            assumptions: Assumptions {
                margin_scale: Some(1.0 / amplitude),
                margin_exponent: Some(1.0),
                detect_scale: Some(2.0 / (std::f64::consts::PI * amplitude)),
                detect_exponent: Some(1.0),
                smoothness: Some(Smoothness {
                    scale: std::f64::consts::TAU * frequency as f64 * amplitude,
                    exponent: 1.0,
                }),
                density_min: Some(1.0),
                density_max: Some(1.0),
            },
        })
    }

    pub fn smooth_nd(dimension: usize, amplitude: f64) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::InvalidParameter { name: "dimension", reason: "must be at least 1".into() });
        }
        check_amplitude(amplitude)?;
        Ok(Self {
            kind: Kind::SmoothNd { dimension, amplitude },
            assumptions: Assumptions {
                smoothness: Some(Smoothness {
                    scale: std::f64::consts::TAU * amplitude * (dimension as f64).sqrt(),
                    exponent: 1.0,
                }),
                density_min: Some(1.0),
                density_max: Some(1.0),
                ..Assumptions::default()
            },
        })
    }

    pub fn atoms(atoms: Vec<Atom>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::EmptyData);
        }
        let dim = atoms[0].location.len();
        if dim == 0 {
            return Err(Error::InvalidParameter { name: "atom location", reason: "must have dimension >= 1".into() });
        }
        let mut total = 0.0;
        for atom in &atoms {
            if atom.location.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: atom.location.len() });
            }
            for &c in &atom.location {
                if !(0.0..=1.0).contains(&c) {
                    return Err(Error::OutsideDomain { value: c });
                }
            }
            if !(atom.mass > 0.0) {
                return Err(Error::InvalidParameter { name: "atom mass", reason: format!("must be positive, got {}", atom.mass) });
            }
            if !(0.0..=1.0).contains(&atom.eta) {
                return Err(Error::InvalidParameter { name: "atom eta", reason: format!("must lie in [0, 1], got {}", atom.eta) });
            }
            total += atom.mass;
        }
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidParameter { name: "atom masses", reason: format!("must sum to 1, got {total}") });
        }
        for i in 0..atoms.len() {
            for j in i + 1..atoms.len() {
                if atoms[i].location == atoms[j].location {
                    return Err(Error::InvalidParameter {
                        name: "atom locations",
                        reason: format!("duplicate location {:?}", atoms[i].location),
                    });
                }
            }
        }
        Ok(Self { kind: Kind::Atoms { atoms }, assumptions: Assumptions::default() })
    }

    /// Load an atoms problem from CSV whose final two columns are named
    /// `mass` and `eta`; every preceding column is a location coordinate.
    pub fn atoms_from_csv(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().flexible(false).from_reader(text.as_bytes());
        let headers = reader.headers().map_err(|e| Error::Parse { line: 1, reason: format!("bad header: {e}") })?.clone();
        let cols = headers.len();
        if cols < 3 || &headers[cols - 2] != "mass" || &headers[cols - 1] != "eta" {
            return Err(Error::Parse {
                line: 1,
                reason: "header must be location columns followed by mass,eta".into(),
            });
        }
        let mut atoms = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let lineno = i + 2;
            let record = record.map_err(|e| Error::Parse { line: lineno, reason: e.to_string() })?;
            if record.len() != cols {
                return Err(Error::Parse { line: lineno, reason: format!("expected {cols} cells, got {}", record.len()) });
            }
            let cell = |j: usize| -> Result<f64> {
                record[j].trim().parse().map_err(|_| Error::Parse {
                    line: lineno,
                    reason: format!("bad numeric cell {:?}", &record[j]),
                })
            };
            let mut location = Vec::with_capacity(cols - 2);
            for j in 0..cols - 2 {
                location.push(cell(j)?);
            }
            atoms.push(Atom { location, mass: cell(cols - 2)?, eta: cell(cols - 1)? });
        }
        Self::atoms(atoms)
    }

    pub fn dimension(&self) -> usize {
        match &self.kind {
            Kind::Linear1d | Kind::Sine1d { .. } => 1,
            Kind::SmoothNd { dimension, .. } => *dimension,
            Kind::Atoms { atoms } => atoms[0].location.len(),
        }
    }

    pub fn assumptions(&self) -> &Assumptions {
        &self.assumptions
    }

    pub fn is_atomic(&self) -> bool {
        matches!(self.kind, Kind::Atoms { .. })
    }

    pub fn atom_list(&self) -> Option<&[Atom]> {
        match &self.kind {
            Kind::Atoms { atoms } => Some(atoms),
            _ => None,
        }
    }

    /// Conditional probability of the positive class at `x`.
    pub fn eta(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dimension() {
            return Err(Error::DimensionMismatch { expected: self.dimension(), got: x.len() });
        }
        for &c in x {
            if !(0.0..=1.0).contains(&c) {
                return Err(Error::OutsideDomain { value: c });
            }
        }
        match &self.kind {
            Kind::Linear1d => Ok(x[0]),
            Kind::Sine1d { frequency, amplitude } => {
                Ok(0.5 + amplitude * (std::f64::consts::TAU * *frequency as f64 * x[0]).sin())
            }
            Kind::SmoothNd { amplitude, .. } => {
                let mut p = 1.0;
                for &c in x {
                    p *= (std::f64::consts::TAU * c).sin();
                }
                Ok(0.5 + amplitude * p)
            }
            Kind::Atoms { atoms } => atoms
                .iter()
                .find(|a| a.location.as_slice() == x)
                .map(|a| a.eta)
                .ok_or(Error::NotAnAtom),
        }
    }

    /// Draw `n` labeled examples; the feature stream and the label coin
    /// both derive from `seed` but are independent of the unlabeled stream.
    pub fn sample_labeled(&self, n: usize, seed: u64) -> Result<LabeledSet> {
        if n == 0 {
            return Err(Error::EmptyData);
        }
        let mut rng = stream_rng(seed, STREAM_LABELED);
        let mut points = PointSet::with_capacity(self.dimension(), n);
        let mut labels = Vec::with_capacity(n);
        let mut buf = vec![0.0; self.dimension()];
        for _ in 0..n {
            let eta = self.draw_point(&mut rng, &mut buf);
            points.push(&buf);
            labels.push(if rng.gen::<f64>() < eta { 1 } else { -1 });
        }
        Ok(LabeledSet { points, labels })
    }

    /// Draw `m` unlabeled feature vectors on an independent stream.
    pub fn sample_unlabeled(&self, m: usize, seed: u64) -> Result<PointSet> {
        if m == 0 {
            return Err(Error::EmptyData);
        }
        let mut rng = stream_rng(seed, STREAM_UNLABELED);
        let mut points = PointSet::with_capacity(self.dimension(), m);
        let mut buf = vec![0.0; self.dimension()];
        for _ in 0..m {
            self.draw_point(&mut rng, &mut buf);
            points.push(&buf);
        }
        Ok(points)
    }

    fn draw_point(&self, rng: &mut ChaCha8Rng, buf: &mut [f64]) -> f64 {
        match &self.kind {
            Kind::Atoms { atoms } => {
                let u = rng.gen::<f64>();
                let mut acc = 0.0;
                let mut chosen = atoms.len() - 1;
                for (i, atom) in atoms.iter().enumerate() {
                    acc += atom.mass;
                    if u < acc {
                        chosen = i;
                        break;
                    }
                }
                buf.copy_from_slice(&atoms[chosen].location);
                atoms[chosen].eta
            }
            _ => {
                for c in buf.iter_mut() {
                    *c = rng.gen::<f64>();
                }
                self.eta(buf).expect("sampled point lies in the domain")
            }
        }
    }

    /// Mass of the band where `eta` sits within `gamma` of 1/2:
    /// P(|eta(X) - 1/2| <= gamma).
    pub fn level_mass(&self, gamma: f64) -> Result<f64> {
        match &self.kind {
            Kind::Linear1d => Ok((2.0 * gamma).clamp(0.0, 1.0)),
            Kind::Atoms { atoms } => Ok(atoms
                .iter()
                .filter(|a| (a.eta - 0.5).abs() <= gamma)
                .map(|a| a.mass)
                .sum()),
            _ => {
                let sample = self.sorted_distance_sample(DEFAULT_RESOLUTION);
                Ok(sample.partition_point(|&d| d <= gamma) as f64 / sample.len() as f64)
            }
        }
    }

    /// Distances |eta - 1/2| over a midpoint quadrature grid, sorted.
    fn sorted_distance_sample(&self, resolution: usize) -> Vec<f64> {
        let mut sample = Vec::new();
        self.for_each_quadrature_node(resolution, |_, eta| sample.push((eta - 0.5).abs()));
        sample.sort_unstable_by(|a, b| a.partial_cmp(b).expect("distances are finite"));
        sample
    }

    /// Visit midpoint quadrature nodes of the unit cube with equal weights.
    fn for_each_quadrature_node(&self, resolution: usize, mut visit: impl FnMut(&[f64], f64)) {
        let d = self.dimension();
        let per_axis = if d == 1 {
            resolution.max(2)
        } else {
            ((resolution as f64).powf(1.0 / d as f64).floor() as usize).max(2)
        };
        let mut x = vec![0.0; d];
        let mut idx = vec![0usize; d];
        loop {
            for (c, &i) in x.iter_mut().zip(idx.iter()) {
                *c = (i as f64 + 0.5) / per_axis as f64;
            }
            let eta = self.eta(&x).expect("quadrature node lies in the domain");
            visit(&x, eta);
            let mut axis = d;
            loop {
                if axis == 0 {
                    return;
                }
                axis -= 1;
                idx[axis] += 1;
                if idx[axis] < per_axis {
                    break;
                }
                idx[axis] = 0;
            }
        }
    }

    /// The widest abstention half-width whose band mass stays within
    /// `delta`: sup{gamma > 0 : P(|eta - 1/2| <= gamma) <= delta}, with 0
    /// for an empty feasible set. Accepts the closed interval [0, 1];
    /// delta = 0 never abstains and delta = 1 may absorb everything.
    pub fn bayes_threshold(&self, delta: f64) -> Result<f64> {
        check_delta(delta)?;
        match &self.kind {
            Kind::Linear1d => Ok((delta / 2.0).min(0.5)),
            Kind::Atoms { atoms } => {
                let mut pairs: Vec<(f64, f64)> =
                    atoms.iter().map(|a| ((a.eta - 0.5).abs(), a.mass)).collect();
                pairs.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).expect("finite"));
                let mut cum = 0.0;
                for &(d, mass) in &pairs {
                    cum += mass;
                    if cum > delta {
                        return Ok(d);
                    }
                }
                Ok(0.5)
            }
            _ => {
                let sample = self.sorted_distance_sample(DEFAULT_RESOLUTION);
                let total = sample.len() as f64;
                let feasible = |gamma: f64| sample.partition_point(|&d| d <= gamma) as f64 / total <= delta;
                let (mut lo, mut hi) = (0.0, 0.5);
                if feasible(hi) {
                    return Ok(hi);
                }
                for _ in 0..BISECTION_STEPS {
                    let mid = 0.5 * (lo + hi);
                    if feasible(mid) {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                Ok(lo)
            }
        }
    }

    /// The optimal rule at budget `delta`: abstain strictly inside the
    /// band, declare strictly outside, and on the band edge abstain with
    /// the probability that spends the budget exactly.
    pub fn bayes_rule(&self, delta: f64) -> Result<AbstainRule> {
        let gamma = self.bayes_threshold(delta)?;
        let (interior, edge) = self.band_masses(gamma);
        let closure = interior + edge;
        let c0 = if closure > interior {
            ((delta - interior) / (closure - interior)).clamp(0.0, 1.0)
        } else {
            0.0
        };
        Ok(AbstainRule { problem: self.clone(), gamma, c0 })
    }

    /// (mass strictly inside the band, mass exactly on its edge).
    fn band_masses(&self, gamma: f64) -> (f64, f64) {
        match &self.kind {
            Kind::Linear1d => {
                let interior = (2.0 * gamma).clamp(0.0, 1.0);
                (interior, 0.0)
            }
            Kind::Atoms { atoms } => {
                let mut interior = 0.0;
                let mut edge = 0.0;
                for a in atoms {
                    let d = (a.eta - 0.5).abs();
                    if d < gamma {
                        interior += a.mass;
                    } else if d == gamma {
                        edge += a.mass;
                    }
                }
                (interior, edge)
            }
            _ => {
                let sample = self.sorted_distance_sample(DEFAULT_RESOLUTION);
                let total = sample.len() as f64;
                let below = sample.partition_point(|&d| d < gamma) as f64 / total;
                let at_or_below = sample.partition_point(|&d| d <= gamma) as f64 / total;
                (below, at_or_below - below)
            }
        }
    }

    /// Risk of the optimal rule at budget `delta`.
    pub fn bayes_risk(&self, delta: f64) -> Result<f64> {
        check_delta(delta)?;
        match &self.kind {
            Kind::Linear1d => {
                let gamma = (delta / 2.0).min(0.5);
                Ok((0.5 - gamma) * (0.5 - gamma))
            }
            _ => {
                let rule = self.bayes_rule(delta)?;
                Ok(expected_outcome(self, &rule, DEFAULT_RESOLUTION)?.risk)
            }
        }
    }
}

fn check_amplitude(amplitude: f64) -> Result<()> {
    if amplitude > 0.0 && amplitude <= 0.5 {
        Ok(())
    } else {
        Err(Error::InvalidParameter { name: "amplitude", reason: format!("must lie in (0, 0.5], got {amplitude}") })
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if delta.is_finite() && (0.0..=1.0).contains(&delta) {
        Ok(())
    } else {
        Err(Error::InvalidParameter { name: "delta", reason: format!("must lie in [0, 1], got {delta}") })
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Where a point falls relative to an abstention band.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Negative,
    Positive,
    Abstain,
    EdgeNegative,
    EdgePositive,
}

/// The optimal randomized rule: abstain inside the band, declare outside,
/// and on the edge abstain with probability `c0`.
#[derive(Debug, Clone)]
pub struct AbstainRule {
    problem: Problem,
    pub gamma: f64,
    pub c0: f64,
}

impl AbstainRule {
    pub fn region(&self, x: &[f64]) -> Result<Region> {
        let eta = self.problem.eta(x)?;
        let d = eta - 0.5;
        Ok(if d.abs() < self.gamma {
            Region::Abstain
        } else if d.abs() == self.gamma {
            if d >= 0.0 { Region::EdgePositive } else { Region::EdgeNegative }
        } else if d > 0.0 {
            Region::Positive
        } else {
            Region::Negative
        })
    }

    pub fn classify(&self, x: &[f64], u: f64) -> Result<Decision> {
        self.decide(x, u)
    }
}

impl AbstainPolicy for AbstainRule {
    fn decision_probs(&self, x: &[f64]) -> Result<DecisionProbs> {
        Ok(match self.region(x)? {
            Region::Abstain => DecisionProbs::ABSTAIN,
            Region::Negative => DecisionProbs::NEGATIVE,
            Region::Positive => DecisionProbs::POSITIVE,
            Region::EdgeNegative => DecisionProbs { negative: 1.0 - self.c0, positive: 0.0, abstain: self.c0 },
            Region::EdgePositive => DecisionProbs { negative: 0.0, positive: 1.0 - self.c0, abstain: self.c0 },
        })
    }

    fn breakpoints_1d(&self) -> Option<Vec<f64>> {
        match self.problem.kind {
            Kind::Linear1d => Some(vec![0.5 - self.gamma, 0.5 + self.gamma]),
            _ => None,
        }
    }
}

/// Expected risk and abstention rate of a rule under a known problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RuleOutcome {
    pub risk: f64,
    pub abstention: f64,
}

/// Integrate a rule's error and abstention probabilities against the
/// problem distribution: exact sums for atoms, midpoint quadrature with
/// roughly `resolution` nodes otherwise. Rules that expose breakpoints
/// are treated as constant between them.
pub fn expected_outcome(
    problem: &Problem,
    policy: &impl AbstainPolicy,
    resolution: usize,
) -> Result<RuleOutcome> {
    if let Some(atoms) = problem.atom_list() {
        let mut risk = 0.0;
        let mut abstention = 0.0;
        for atom in atoms {
            let p = policy.decision_probs(&atom.location)?;
            risk += atom.mass * (p.negative * atom.eta + p.positive * (1.0 - atom.eta));
            abstention += atom.mass * p.abstain;
        }
        return Ok(RuleOutcome { risk, abstention });
    }

    if problem.dimension() == 1 {
        if let Some(breaks) = policy.breakpoints_1d() {
            let mut edges: Vec<f64> = breaks.into_iter().filter(|b| (0.0..=1.0).contains(b)).collect();
            edges.push(0.0);
            edges.push(1.0);
            edges.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite"));
            edges.dedup();
            let mut risk = 0.0;
            let mut abstention = 0.0;
            for w in edges.windows(2) {
                let (a, b) = (w[0], w[1]);
                let len = b - a;
                if len <= 0.0 {
                    continue;
                }
                let p = policy.decision_probs(&[0.5 * (a + b)])?;
                let nodes = ((resolution as f64 * len).ceil() as usize).clamp(8, resolution);
                let mut eta_integral = 0.0;
                for i in 0..nodes {
                    let x = a + (i as f64 + 0.5) * len / nodes as f64;
                    eta_integral += problem.eta(&[x])?;
                }
                eta_integral *= len / nodes as f64;
                risk += p.negative * eta_integral + p.positive * (len - eta_integral);
                abstention += p.abstain * len;
            }
            return Ok(RuleOutcome { risk, abstention });
        }
    }

    let mut risk = 0.0;
    let mut abstention = 0.0;
    let mut count = 0usize;
    let mut err: Option<Error> = None;
    problem.for_each_quadrature_node(resolution, |x, eta| {
        if err.is_some() {
            return;
        }
        match policy.decision_probs(x) {
            Ok(p) => {
                risk += p.negative * eta + p.positive * (1.0 - eta);
                abstention += p.abstain;
                count += 1;
            }
            Err(e) => err = Some(e),
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    Ok(RuleOutcome { risk: risk / count as f64, abstention: abstention / count as f64 })
}

/// The greedy optimum for a finite-support problem: spend the abstention
/// budget on atoms in order of ambiguity, splitting the marginal atom
/// fractionally, and declare the majority label everywhere else.
#[derive(Debug, Clone, PartialEq)]
pub struct GreedyAllocation {
    pub risk: f64,
    /// Per-atom abstention probability, in the problem's atom order.
    pub abstain_fraction: Vec<f64>,
    /// Per-atom declared label when not abstaining.
    pub declared: Vec<i8>,
}

pub fn greedy_oracle(problem: &Problem, delta: f64) -> Result<GreedyAllocation> {
    check_delta(delta)?;
    let atoms = problem.atom_list().ok_or(Error::NotAtomic)?;
    let mut order: Vec<usize> = (0..atoms.len()).collect();
    order.sort_by(|&i, &j| {
        let di = (atoms[i].eta - 0.5).abs();
        let dj = (atoms[j].eta - 0.5).abs();
        di.partial_cmp(&dj).expect("finite").then(i.cmp(&j))
    });
    let mut budget = delta;
    let mut abstain_fraction = vec![0.0; atoms.len()];
    let mut declared = vec![0i8; atoms.len()];
    let mut risk = 0.0;
    for &i in &order {
        let atom = &atoms[i];
        let take = budget.min(atom.mass);
        budget -= take;
        abstain_fraction[i] = take / atom.mass;
        declared[i] = if atom.eta >= 0.5 { 1 } else { -1 };
        risk += (atom.mass - take) * atom.eta.min(1.0 - atom.eta);
    }
    Ok(GreedyAllocation { risk, abstain_fraction, declared })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "expected {b} within {tol}, got {a} (diff {})", (a - b).abs());
    }

    fn three_atoms() -> Problem {
        Problem::atoms(vec![
            Atom { location: vec![0.1], mass: 1.0 / 3.0, eta: 0.5 },
            Atom { location: vec![0.5], mass: 1.0 / 3.0, eta: 0.9 },
            Atom { location: vec![0.9], mass: 1.0 / 3.0, eta: 0.1 },
        ])
        .unwrap()
    }

    #[test]
    fn linear_threshold_and_risk_are_closed_form() {
        let p = Problem::linear1d();
        close(p.bayes_threshold(0.2).unwrap(), 0.1, 1e-12);
        close(p.bayes_risk(0.2).unwrap(), 0.16, 1e-12);
        close(p.bayes_risk(0.0).unwrap(), 0.25, 1e-12);
        close(p.bayes_threshold(1e-9).unwrap(), 5e-10, 1e-15);
    }

    #[test]
    fn linear_rule_regions() {
        let p = Problem::linear1d();
        let rule = p.bayes_rule(0.2).unwrap();
        assert_eq!(rule.c0, 0.0);
        assert_eq!(rule.region(&[0.2]).unwrap(), Region::Negative);
        assert_eq!(rule.region(&[0.5]).unwrap(), Region::Abstain);
        assert_eq!(rule.region(&[0.8]).unwrap(), Region::Positive);
        assert_eq!(rule.classify(&[0.5], 0.99).unwrap(), Decision::Abstain);
        assert_eq!(rule.classify(&[0.8], 0.0).unwrap(), Decision::Positive);
    }

    #[test]
    fn sine_threshold_matches_arcsine_law() {
        // For eta = 1/2 + A sin(2 pi k x), the band mass is
        // (2/pi) asin(gamma/A), so the threshold is A sin(pi delta / 2)
        // and the risk is (1 - delta)/2 - A (2/pi) cos(pi delta / 2).
        let p = Problem::sine1d(3, 0.4).unwrap();
        close(p.bayes_threshold(0.3).unwrap(), 0.1815961998958187, 1e-4);
        close(p.bayes_risk(0.3).unwrap(), 0.12310705175726852, 1e-4);
        close(p.bayes_risk(0.0).unwrap(), 0.24535209105296746, 1e-4);

        let q = Problem::sine1d(1, 0.5).unwrap();
        close(q.bayes_threshold(0.5).unwrap(), 0.35355339059327373, 1e-4);
        close(q.bayes_risk(0.5).unwrap(), 0.02492092096072346, 1e-4);
    }

    #[test]
    fn smooth2_matches_brute_force_quadrature() {
        let p = Problem::smooth_nd(2, 0.4).unwrap();
        close(p.bayes_threshold(0.3).unwrap(), 0.07209671156391596, 3e-3);
        close(p.bayes_risk(0.3).unwrap(), 0.1973929421519221, 3e-3);
    }

    #[test]
    fn atoms_rule_spends_budget_exactly() {
        let p = three_atoms();
        let rule = p.bayes_rule(0.5).unwrap();
        close(rule.gamma, 0.4, 1e-12);
        close(rule.c0, 0.25, 1e-12);
        let outcome = expected_outcome(&p, &rule, 1).unwrap();
        close(outcome.abstention, 0.5, 1e-12);
        close(outcome.risk, 0.05, 1e-12);

        let greedy = greedy_oracle(&p, 0.5).unwrap();
        close(greedy.risk, 0.05, 1e-12);
    }

    #[test]
    fn atoms_tight_budget_randomizes_on_center() {
        // With delta below the central atom's mass, the band is empty and
        // the rule abstains on the exact-center atom with probability
        // delta / (1/3).
        let p = three_atoms();
        let rule = p.bayes_rule(0.2).unwrap();
        close(rule.gamma, 0.0, 0.0);
        close(rule.c0, 0.6, 1e-12);
        let outcome = expected_outcome(&p, &rule, 1).unwrap();
        close(outcome.abstention, 0.2, 1e-12);
        close(outcome.risk, greedy_oracle(&p, 0.2).unwrap().risk, 1e-12);
    }

    #[test]
    fn classify_uses_the_uniform_draw_on_the_edge() {
        let p = three_atoms();
        let rule = p.bayes_rule(0.5).unwrap();
        assert_eq!(rule.region(&[0.5]).unwrap(), Region::EdgePositive);
        assert_eq!(rule.classify(&[0.5], 0.1).unwrap(), Decision::Abstain);
        assert_eq!(rule.classify(&[0.5], 0.9).unwrap(), Decision::Positive);
        assert_eq!(rule.classify(&[0.9], 0.1).unwrap(), Decision::Abstain);
        assert_eq!(rule.classify(&[0.9], 0.9).unwrap(), Decision::Negative);
    }

    #[test]
    fn greedy_handles_full_abstention() {
        let p = three_atoms();
        let g = greedy_oracle(&p, 1.0).unwrap();
        close(g.risk, 0.0, 1e-12);
        assert!(g.abstain_fraction.iter().all(|&q| (q - 1.0).abs() < 1e-9));
    }

    #[test]
    fn greedy_matches_rule_on_random_problems() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..100 {
            let k = rng.gen_range(1..=12);
            let dim = rng.gen_range(1..=3);
            let mut atoms = Vec::with_capacity(k);
            let mut weights: Vec<f64> = (0..k).map(|_| rng.gen::<f64>() + 1e-3).collect();
            let total: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= total);
            for (i, &mass) in weights.iter().enumerate() {
                let mut location: Vec<f64> = (0..dim).map(|_| rng.gen()).collect();
                location[0] = (i as f64 + 0.5) / k as f64;
                atoms.push(Atom { location, mass, eta: rng.gen() });
            }
            let p = Problem::atoms(atoms).unwrap();
            let delta = rng.gen::<f64>();
            let bayes = p.bayes_risk(delta).unwrap();
            let greedy = greedy_oracle(&p, delta).unwrap().risk;
            close(bayes, greedy, 1e-9);
        }
    }

    #[test]
    fn random_feasible_rules_never_beat_the_oracle() {
        struct FixedAllocation<'a> {
            atoms: &'a [Atom],
            abstain: Vec<f64>,
            declare_positive: Vec<bool>,
        }
        impl AbstainPolicy for FixedAllocation<'_> {
            fn decision_probs(&self, x: &[f64]) -> crate::error::Result<DecisionProbs> {
                let i = self.atoms.iter().position(|a| a.location.as_slice() == x).unwrap();
                let q = self.abstain[i];
                Ok(if self.declare_positive[i] {
                    DecisionProbs { negative: 0.0, positive: 1.0 - q, abstain: q }
                } else {
                    DecisionProbs { negative: 1.0 - q, positive: 0.0, abstain: q }
                })
            }
        }

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = three_atoms();
        let atoms = p.atom_list().unwrap();
        for trial in 0..200 {
            let delta = rng.gen::<f64>();
            let bayes = p.bayes_risk(delta).unwrap();
            let mut abstain: Vec<f64> = (0..3).map(|_| rng.gen()).collect();
            let spent: f64 = abstain.iter().zip(atoms).map(|(q, a)| q * a.mass).sum();
            if spent > delta {
                let scale = delta / spent;
                abstain.iter_mut().for_each(|q| *q *= scale);
            }
            // Half the trials declare optimally, half at random.
            let declare_positive: Vec<bool> = atoms
                .iter()
                .map(|a| if trial % 2 == 0 { a.eta >= 0.5 } else { rng.gen() })
                .collect();
            let rule = FixedAllocation { atoms, abstain, declare_positive };
            let outcome = expected_outcome(&p, &rule, 1).unwrap();
            assert!(outcome.abstention <= delta + 1e-12);
            assert!(outcome.risk >= bayes - 1e-9, "risk {} beat oracle {bayes}", outcome.risk);
        }
    }

    #[test]
    fn risk_is_monotone_in_the_budget() {
        let problems = vec![
            Problem::linear1d(),
            Problem::sine1d(2, 0.35).unwrap(),
            Problem::smooth_nd(2, 0.4).unwrap(),
            three_atoms(),
        ];
        for p in &problems {
            let mut last = f64::INFINITY;
            for step in 0..20 {
                let delta = step as f64 * 0.05;
                let risk = p.bayes_risk(delta).unwrap();
                assert!(
                    risk <= last + 1e-9,
                    "risk increased from {last} to {risk} at delta {delta}"
                );
                last = risk;
            }
        }
    }

    #[test]
    fn threshold_band_mass_stays_within_budget() {
        let problems = vec![
            Problem::linear1d(),
            Problem::sine1d(2, 0.35).unwrap(),
            Problem::smooth_nd(2, 0.4).unwrap(),
            three_atoms(),
        ];
        for p in &problems {
            for step in 1..20 {
                let delta = step as f64 * 0.05;
                let gamma = p.bayes_threshold(delta).unwrap();
                // Strictly-inside mass never exceeds the budget.
                let (interior, _) = p.band_masses(gamma);
                assert!(
                    interior <= delta + 1e-9,
                    "interior mass {interior} exceeds delta {delta}"
                );
            }
        }
    }

    #[test]
    fn rule_outcome_agrees_with_closed_forms() {
        let p = Problem::linear1d();
        for &delta in &[0.0, 0.1, 0.3, 0.6] {
            let rule = p.bayes_rule(delta).unwrap();
            let outcome = expected_outcome(&p, &rule, DEFAULT_RESOLUTION).unwrap();
            close(outcome.risk, p.bayes_risk(delta).unwrap(), 1e-9);
            close(outcome.abstention, delta, 1e-9);
        }
    }

    #[test]
    fn sampling_is_reproducible_and_atom_masses_concentrate() {
        let p = three_atoms();
        let a = p.sample_labeled(1000, 3).unwrap();
        let b = p.sample_labeled(1000, 3).unwrap();
        assert_eq!(a, b);
        let u = p.sample_unlabeled(1000, 3).unwrap();
        assert_ne!(a.points, u, "labeled and unlabeled streams differ");

        let big = p.sample_unlabeled(100_000, 11).unwrap();
        let first = big.iter().filter(|x| x[0] == 0.1).count() as f64 / 100_000.0;
        close(first, 1.0 / 3.0, 0.01);
    }

    #[test]
    fn labels_follow_eta() {
        let p = Problem::linear1d();
        let s = p.sample_labeled(200_000, 5).unwrap();
        let high: Vec<_> = s.points.iter().zip(&s.labels).filter(|(x, _)| x[0] > 0.8).collect();
        let pos = high.iter().filter(|(_, &y)| y == 1).count() as f64 / high.len() as f64;
        close(pos, 0.9, 0.01);
    }

    #[test]
    fn eta_rejects_out_of_domain_points() {
        let p = Problem::linear1d();
        assert!(matches!(p.eta(&[1.5]), Err(Error::OutsideDomain { .. })));
        assert!(matches!(p.eta(&[0.1, 0.2]), Err(Error::DimensionMismatch { .. })));
        let a = three_atoms();
        assert!(matches!(a.eta(&[0.2]), Err(Error::NotAnAtom)));
    }

    #[test]
    fn atoms_load_from_csv() {
        let text = "x0,mass,eta\n0.1,0.333333333333,0.5\n0.5,0.333333333333,0.9\n0.9,0.333333333334,0.1\n";
        let p = Problem::atoms_from_csv(text).unwrap();
        assert_eq!(p.dimension(), 1);
        close(p.bayes_threshold(0.5).unwrap(), 0.4, 1e-9);
        assert!(Problem::atoms_from_csv("x0,mass\n0.1,1.0\n").is_err());
    }

    #[test]
    fn delta_validation() {
        let p = Problem::linear1d();
        assert!(p.bayes_threshold(-0.1).is_err());
        assert!(p.bayes_threshold(1.1).is_err());
        assert!(p.bayes_threshold(f64::NAN).is_err());
    }
}
