//! Histogram regression over a ladder of dyadic-free bandwidths, with a
//! per-point data-driven bandwidth choice.
//!
//! A ladder fixes the grid resolutions; fitting tallies label counts per
//! cell at every resolution in one pass each. At query time the estimator
//! walks the ladder from finest to coarsest and keeps the largest
//! bandwidth whose estimate stays within the statistical slack of every
//! finer one, then returns that grid's cell average.

use std::collections::HashMap;

use crate::data::LabeledSet;
use crate::error::{Error, Result};

/// Grid resolutions 1/N, 2/N, ..., 1 tied to a sample size and a lower
/// bound on the input density.
#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthLadder {
    n: usize,
    mu_min: f64,
    dimension: usize,
    levels: usize,
}

impl BandwidthLadder {
    /// Size the ladder for a sample of `n` points: the finest grid uses
    /// N = floor((n mu_min / (16 ln n))^(1/dimension)) cells per axis,
    /// floored at one.
    pub fn for_sample(n: usize, mu_min: f64, dimension: usize) -> Result<Self> {
        Self::validate(n, mu_min, dimension)?;
        let levels = if n <= 1 {
            1
        } else {
            let base = n as f64 * mu_min / (16.0 * (n as f64).ln());
            let root = snap(base.powf(1.0 / dimension as f64));
            (root.floor() as usize).max(1)
        };
        Ok(Self { n, mu_min, dimension, levels })
    }

    /// Assemble a ladder directly from stored parts; trusts `levels`.
    pub fn from_parts(n: usize, mu_min: f64, dimension: usize, levels: usize) -> Result<Self> {
        Self::validate(n, mu_min, dimension)?;
        if levels == 0 {
            return Err(Error::InvalidParameter { name: "levels", reason: "must be at least 1".into() });
        }
        Ok(Self { n, mu_min, dimension, levels })
    }

    fn validate(n: usize, mu_min: f64, dimension: usize) -> Result<()> {
        if n == 0 {
            return Err(Error::EmptyData);
        }
        if dimension == 0 {
            return Err(Error::InvalidParameter { name: "dimension", reason: "must be at least 1".into() });
        }
        if !(mu_min > 0.0) || !mu_min.is_finite() {
            return Err(Error::InvalidParameter { name: "mu_min", reason: format!("must be positive, got {mu_min}") });
        }
        if (n as f64) * mu_min < 1.0 {
            return Err(Error::InvalidParameter {
                name: "mu_min",
                reason: format!("effective sample size n * mu_min = {} is below 1", n as f64 * mu_min),
            });
        }
        Ok(())
    }

    pub fn sample_size(&self) -> usize {
        self.n
    }

    pub fn mu_min(&self) -> f64 {
        self.mu_min
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    /// Bandwidth of ladder level `k` (1-based): k / levels.
    pub fn bandwidth(&self, k: usize) -> f64 {
        k as f64 / self.levels as f64
    }

    pub fn bandwidths(&self) -> impl Iterator<Item = f64> + '_ {
        (1..=self.levels).map(|k| self.bandwidth(k))
    }
}

/// Number of grid cells per axis at bandwidth `h`: ceil(1/h), with a snap
/// against float noise when 1/h is within rounding of an integer.
pub fn cells_per_axis(h: f64) -> Result<usize> {
    if !(h > 0.0 && h <= 1.0) {
        return Err(Error::InvalidParameter { name: "bandwidth", reason: format!("must lie in (0, 1], got {h}") });
    }
    Ok(snap(1.0 / h).ceil() as usize)
}

fn snap(v: f64) -> f64 {
    if (v - v.round()).abs() < 1e-9 {
        v.round()
    } else {
        v
    }
}

fn validate_slack_scale(scale: f64) -> Result<()> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::InvalidParameter {
            name: "slack_scale",
            reason: format!("must be positive and finite, got {scale}"),
        });
    }
    Ok(())
}

/// Flat row-major index of the grid cell containing `x` at bandwidth `h`;
/// the first axis varies slowest and x_d = 1 lands in the last cell.
pub fn cell_index(h: f64, x: &[f64]) -> Result<u64> {
    let cpa = cells_per_axis(h)? as u64;
    let mut flat: u64 = 0;
    for &c in x {
        if !(0.0..=1.0).contains(&c) {
            return Err(Error::OutsideDomain { value: c });
        }
        let axis = ((c / h).floor() as u64).min(cpa - 1);
        flat = flat
            .checked_mul(cpa)
            .and_then(|f| f.checked_add(axis))
            .ok_or(Error::IndexOverflow)?;
    }
    Ok(flat)
}

/// Sampling-noise scale of a cell average at bandwidth `h` when the
/// effective sample size is `n_mu` = n * mu_min:
/// sqrt(32 ln(n_mu) / (n_mu h^dimension)).
pub fn statistical_error(n_mu: f64, h: f64, dimension: usize) -> f64 {
    assert!(n_mu >= 1.0, "effective sample size must be at least 1");
    assert!(h > 0.0 && h <= 1.0, "bandwidth must lie in (0, 1]");
    (32.0 * n_mu.ln() / (n_mu * h.powi(dimension as i32))).sqrt()
}

/// Worst-case smoothing bias of a cell average over a cell of side `h`
/// for an eta that is (scale, exponent)-Hölder: scale * (sqrt(d) h)^exponent.
pub fn bias_bound(scale: f64, exponent: f64, dimension: usize, h: f64) -> f64 {
    scale * ((dimension as f64).sqrt() * h).powf(exponent)
}

/// High-probability accuracy of the adaptive estimate, clipped to 1/2:
/// 9 L^(d/(2b+d)) d^(bd/(2(2b+d))) (32 ln(n mu)/mu)^(b/(2b+d)) n^(-b/(2b+d)).
pub fn adaptive_error_bound(n: usize, mu_min: f64, scale: f64, exponent: f64, dimension: usize) -> f64 {
    let d = dimension as f64;
    let b = exponent;
    let e = b / (2.0 * b + d);
    let raw = 9.0
        * scale.powf(d / (2.0 * b + d))
        * d.powf(b * d / (2.0 * (2.0 * b + d)))
        * (32.0 * (n as f64 * mu_min).ln() / mu_min).powf(e)
        * (n as f64).powf(-e);
    raw.min(0.5)
}

/// Per-cell label tallies at one bandwidth, stored sparsely by flat index.
#[derive(Debug, Clone, PartialEq)]
pub struct GridStats {
    h: f64,
    counts: HashMap<u64, (u64, u64)>,
}

impl GridStats {
    fn tally(h: f64, data: &LabeledSet) -> Result<Self> {
        let mut counts: HashMap<u64, (u64, u64)> = HashMap::new();
        for (x, &y) in data.points.iter().zip(&data.labels) {
            let idx = cell_index(h, x)?;
            let entry = counts.entry(idx).or_insert((0, 0));
            if y == 1 {
                entry.0 += 1;
            }
            entry.1 += 1;
        }
        Ok(Self { h, counts })
    }

    /// Rebuild a grid from stored (index, positives, total) triples.
    pub fn from_parts(h: f64, cells: &[(u64, u64, u64)]) -> Result<Self> {
        cells_per_axis(h)?;
        let mut counts = HashMap::with_capacity(cells.len());
        for &(idx, positives, total) in cells {
            if positives > total || total == 0 {
                return Err(Error::ModelFormat(format!(
                    "cell {idx} has {positives} positives out of {total}"
                )));
            }
            if counts.insert(idx, (positives, total)).is_some() {
                return Err(Error::ModelFormat(format!("duplicate cell index {idx}")));
            }
        }
        Ok(Self { h, counts })
    }

    pub fn bandwidth(&self) -> f64 {
        self.h
    }

    /// Positive fraction of the cell containing `x`, or `fallback` when
    /// the cell saw no data.
    pub fn value(&self, x: &[f64], fallback: f64) -> Result<f64> {
        let idx = cell_index(self.h, x)?;
        Ok(match self.counts.get(&idx) {
            Some(&(positives, total)) => positives as f64 / total as f64,
            None => fallback,
        })
    }

    pub fn occupied_cells(&self) -> usize {
        self.counts.len()
    }

    pub fn total_count(&self) -> u64 {
        self.counts.values().map(|&(_, t)| t).sum()
    }

    /// (index, positives, total) triples sorted by index.
    pub fn sorted_cells(&self) -> Vec<(u64, u64, u64)> {
        let mut cells: Vec<_> = self.counts.iter().map(|(&i, &(p, t))| (i, p, t)).collect();
        cells.sort_unstable_by_key(|&(i, _, _)| i);
        cells
    }
}

/// Label-count grids at every ladder bandwidth, plus the global positive
/// fraction used for empty cells.
///
/// `slack_scale` multiplies the four-error comparison slack in the
/// bandwidth rule. The theoretical constant (scale 1) is so conservative
/// at practical sample sizes that the rule never leaves the coarsest
/// grid; a scale around 0.1 keeps the same shape while letting the rule
/// discriminate.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramEstimator {
    ladder: BandwidthLadder,
    grids: Vec<GridStats>,
    global_positives: u64,
    slack_scale: f64,
    slack4: Vec<f64>,
}

impl HistogramEstimator {
    /// Tally `data` at every ladder bandwidth, with the unscaled slack.
    pub fn fit(data: &LabeledSet, ladder: BandwidthLadder) -> Result<Self> {
        Self::fit_scaled(data, ladder, 1.0)
    }

    /// Tally `data` with the comparison slack damped by `slack_scale`.
    pub fn fit_scaled(data: &LabeledSet, ladder: BandwidthLadder, slack_scale: f64) -> Result<Self> {
        validate_slack_scale(slack_scale)?;
        if data.is_empty() {
            return Err(Error::EmptyData);
        }
        if data.points.dim() != ladder.dimension() {
            return Err(Error::DimensionMismatch { expected: ladder.dimension(), got: data.points.dim() });
        }
        let global_positives = data.labels.iter().filter(|&&y| y == 1).count() as u64;
        let grids = ladder
            .bandwidths()
            .map(|h| GridStats::tally(h, data))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::assemble(ladder, grids, global_positives, slack_scale))
    }

    /// Rebuild an estimator from stored parts. Grid bandwidths must match
    /// the ladder's levels in order.
    pub fn from_parts(
        ladder: BandwidthLadder,
        grids: Vec<GridStats>,
        global_positives: u64,
        slack_scale: f64,
    ) -> Result<Self> {
        validate_slack_scale(slack_scale)?;
        if grids.len() != ladder.levels() {
            return Err(Error::ModelFormat(format!(
                "expected {} grids, got {}",
                ladder.levels(),
                grids.len()
            )));
        }
        for (k, grid) in grids.iter().enumerate() {
            if (grid.bandwidth() - ladder.bandwidth(k + 1)).abs() > 1e-12 {
                return Err(Error::ModelFormat(format!(
                    "grid {} has bandwidth {}, ladder expects {}",
                    k,
                    grid.bandwidth(),
                    ladder.bandwidth(k + 1)
                )));
            }
        }
        if global_positives > ladder.sample_size() as u64 {
            return Err(Error::ModelFormat("more positives than samples".into()));
        }
        Ok(Self::assemble(ladder, grids, global_positives, slack_scale))
    }

    fn assemble(
        ladder: BandwidthLadder,
        grids: Vec<GridStats>,
        global_positives: u64,
        slack_scale: f64,
    ) -> Self {
        let n_mu = ladder.sample_size() as f64 * ladder.mu_min();
        let slack4 = ladder
            .bandwidths()
            .map(|h| slack_scale * 4.0 * statistical_error(n_mu, h, ladder.dimension()))
            .collect();
        Self { ladder, grids, global_positives, slack_scale, slack4 }
    }

    pub fn ladder(&self) -> &BandwidthLadder {
        &self.ladder
    }

    pub fn slack_scale(&self) -> f64 {
        self.slack_scale
    }

    pub fn grids(&self) -> &[GridStats] {
        &self.grids
    }

    pub fn global_positives(&self) -> u64 {
        self.global_positives
    }

    /// Positive fraction over the whole sample; the empty-cell fallback.
    pub fn global_fraction(&self) -> f64 {
        self.global_positives as f64 / self.ladder.sample_size() as f64
    }

    /// Cell average at ladder level `k` (1-based).
    pub fn value_at_level(&self, k: usize, x: &[f64]) -> Result<f64> {
        self.grids[k - 1].value(x, self.global_fraction())
    }

    /// The chosen bandwidth at `x`: the largest h whose estimate differs
    /// from every finer estimate h' by at most four statistical errors
    /// at h'.
    pub fn adaptive_bandwidth(&self, x: &[f64]) -> Result<f64> {
        Ok(self.adaptive(x)?.0)
    }

    /// The estimate at the chosen bandwidth.
    pub fn predict_eta(&self, x: &[f64]) -> Result<f64> {
        Ok(self.adaptive(x)?.1)
    }

    fn adaptive(&self, x: &[f64]) -> Result<(f64, f64)> {
        let fallback = self.global_fraction();
        let mut lower = f64::NEG_INFINITY;
        let mut upper = f64::INFINITY;
        let mut best: Option<(f64, f64)> = None;
        for (grid, &bound) in self.grids.iter().zip(&self.slack4) {
            let v = grid.value(x, fallback)?;
            lower = lower.max(v - bound);
            upper = upper.min(v + bound);
            if v >= lower && v <= upper {
                best = Some((grid.bandwidth(), v));
            }
        }
        Ok(best.expect("the finest bandwidth always satisfies its own slack"))
    }
}
