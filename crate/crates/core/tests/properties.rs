use std::collections::BTreeMap;

use proptest::prelude::*;

use abstain_core::data::{
    parse_libsvm, serialize_libsvm, NormalizeTransform, PointSet, RawDataset,
};
use abstain_core::histogram::{
    cell_index, cells_per_axis, statistical_error, BandwidthLadder, HistogramEstimator,
};
use abstain_core::plugin::estimate_threshold;
use abstain_core::{AbstainPolicy, Decision, LabeledSet};

fn labeled(dim: usize, coords: Vec<f64>, labels: Vec<bool>) -> LabeledSet {
    let points = PointSet::from_rows(dim, coords).unwrap();
    let labels = labels.into_iter().map(|b| if b { 1 } else { -1 }).collect();
    LabeledSet::new(points, labels).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn every_point_lands_in_a_cell_that_contains_it(
        dim in 1usize..=3,
        h in 0.01f64..=1.0,
        raw in prop::collection::vec(0.0f64..=1.0, 3),
    ) {
        let x = &raw[..dim];
        let cpa = cells_per_axis(h).unwrap() as u64;
        let flat = cell_index(h, x).unwrap();
        prop_assert!(flat < cpa.pow(dim as u32));
        // Unpack row-major, axis 0 slowest, and check the cell bounds.
        let mut rest = flat;
        let mut axes = vec![0u64; dim];
        for d in (0..dim).rev() {
            axes[d] = rest % cpa;
            rest /= cpa;
        }
        for (idx, &c) in axes.iter().zip(x) {
            let lo = *idx as f64 * h;
            let hi = (*idx as f64 + 1.0) * h;
            prop_assert!(c >= lo - 1e-12, "coordinate {c} below cell start {lo}");
            prop_assert!(c <= hi + 1e-12 || *idx == cpa - 1, "coordinate {c} above cell end {hi}");
        }
    }

    #[test]
    fn tallies_conserve_the_sample_count(
        dim in 1usize..=2,
        levels in 1usize..=5,
        rows in prop::collection::vec((prop::collection::vec(0.0f64..=1.0, 2), any::<bool>()), 1..40),
    ) {
        let n = rows.len();
        let mut coords = Vec::with_capacity(n * dim);
        let mut labels = Vec::with_capacity(n);
        for (point, label) in &rows {
            coords.extend_from_slice(&point[..dim]);
            labels.push(*label);
        }
        let data = labeled(dim, coords, labels);
        let ladder = BandwidthLadder::from_parts(n, 1.0, dim, levels).unwrap();
        let est = HistogramEstimator::fit(&data, ladder).unwrap();
        for grid in est.grids() {
            prop_assert_eq!(grid.total_count(), n as u64);
            prop_assert!(grid.occupied_cells() <= n);
        }
    }

    #[test]
    fn adaptive_estimates_stay_probabilities_and_obey_the_rule(
        scale in 0.05f64..=1.0,
        rows in prop::collection::vec((0.0f64..=1.0, any::<bool>()), 4..60),
        queries in prop::collection::vec(0.0f64..=1.0, 3),
    ) {
        let n = rows.len();
        let (coords, labels): (Vec<f64>, Vec<bool>) = rows.into_iter().unzip();
        let data = labeled(1, coords, labels);
        let ladder = BandwidthLadder::from_parts(n, 1.0, 1, 4).unwrap();
        let est = HistogramEstimator::fit_scaled(&data, ladder, scale).unwrap();
        for q in queries {
            let x = [q];
            let eta = est.predict_eta(&x).unwrap();
            prop_assert!((0.0..=1.0).contains(&eta));
            let h_hat = est.adaptive_bandwidth(&x).unwrap();
            for k in 1..=est.ladder().levels() {
                let h = est.ladder().bandwidth(k);
                if h <= h_hat {
                    let v = est.value_at_level(k, &x).unwrap();
                    let slack = 4.0 * statistical_error(n as f64, h, 1);
                    prop_assert!((eta - v).abs() <= slack);
                }
            }
        }
    }

    #[test]
    fn threshold_is_feasible_and_maximal(
        estimates in prop::collection::vec(0.0f64..=1.0, 1..40),
        delta in 0.01f64..=0.99,
        slack in 0.0f64..=0.5,
    ) {
        let gamma = estimate_threshold(&estimates, delta, slack);
        let budget = delta - slack;
        let m = estimates.len() as f64;
        let mass = |limit: f64| {
            estimates.iter().filter(|v| (**v - 0.5).abs() <= limit + 1e-12).count() as f64 / m
        };
        if gamma > 0.0 {
            prop_assert!(mass(gamma) <= budget);
        }
        // No qualifying candidate sits beyond the chosen one.
        let mut scores: Vec<f64> = estimates.iter().map(|v| (v - 0.5).abs()).collect();
        scores.sort_unstable_by(f64::total_cmp);
        for (i, &s) in scores.iter().enumerate() {
            let group_max = i + 1 == scores.len() || scores[i + 1] - s > 1e-12;
            if group_max && s > gamma + 1e-12 {
                prop_assert!(mass(s) > budget, "candidate {s} beyond gamma {gamma} also fits");
            }
        }
    }

    #[test]
    fn libsvm_text_round_trips(
        rows in prop::collection::vec(
            (prop::collection::vec(prop_oneof![Just(0.0f64), -10.0f64..=10.0], 3), 0usize..=2),
            1..20,
        ),
    ) {
        let dim = 3;
        let names = ["+1", "-1", "7"];
        let mut coords = Vec::new();
        let mut labels = Vec::new();
        for (i, (point, label)) in rows.iter().enumerate() {
            let mut point = point.clone();
            if i == 0 {
                // Pin the last column so the parsed width matches.
                point[dim - 1] = 1.5;
            }
            coords.extend_from_slice(&point);
            labels.push(names[*label].to_string());
        }
        let ds = RawDataset { features: PointSet::from_rows(dim, coords).unwrap(), labels };
        let back = parse_libsvm(&serialize_libsvm(&ds)).unwrap();
        prop_assert_eq!(back.labels, ds.labels);
        prop_assert_eq!(back.features.dim(), ds.features.dim());
        for (a, b) in back.features.iter().zip(ds.features.iter()) {
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn normalization_lands_in_the_cube_and_is_stable(
        rows in prop::collection::vec(prop::collection::vec(-100.0f64..=100.0, 2), 1..30),
    ) {
        let coords: Vec<f64> = rows.iter().flatten().copied().collect();
        let points = PointSet::from_rows(2, coords).unwrap();
        let transform = NormalizeTransform::fit(&points).unwrap();
        let scaled = transform.apply(&points).unwrap();
        for row in scaled.iter() {
            for &v in row {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
        // Re-fitting on the output gives a transform that fixes it.
        let again = NormalizeTransform::fit(&scaled).unwrap().apply(&scaled).unwrap();
        for (a, b) in again.iter().zip(scaled.iter()) {
            for (x, y) in a.iter().zip(b) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn plugin_decisions_are_probabilities_that_match_decide(
        positives in 0u64..=10,
        gamma in 0.0f64..=0.5,
        band in 0.0f64..=0.4,
        c_hat in 0.0f64..=1.0,
        x in 0.0f64..=1.0,
        u in 0.0f64..1.0,
    ) {
        use abstain_core::histogram::GridStats;
        use abstain_core::PluginClassifier;
        let ladder = BandwidthLadder::from_parts(10, 1.0, 1, 1).unwrap();
        let grid = GridStats::from_parts(1.0, &[(0, positives, 10)]).unwrap();
        let est = HistogramEstimator::from_parts(ladder, vec![grid], positives, 1.0).unwrap();
        let policy =
            PluginClassifier::from_parts(est, 0.3, 0.0, gamma, band, c_hat, false, 0.0, 0.0).unwrap();
        let p = policy.decision_probs(&[x]).unwrap();
        for v in [p.negative, p.positive, p.abstain] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!((p.negative + p.positive + p.abstain - 1.0).abs() <= 1e-12);
        let d = policy.decide(&[x], u).unwrap();
        let expect = if u < p.abstain {
            Decision::Abstain
        } else if p.positive >= p.negative {
            Decision::Positive
        } else {
            Decision::Negative
        };
        prop_assert_eq!(d, expect);
    }

    #[test]
    fn label_maps_partition_the_raw_labels(
        picks in prop::collection::vec(0usize..=1, 5..30),
        seed in any::<u64>(),
    ) {
        use abstain_core::data::{split, Part, SplitSpec};
        let names = ["yes", "no"];
        let n = picks.len();
        let coords: Vec<f64> = (0..n * 2).map(|i| (i % 7) as f64).collect();
        let labels: Vec<String> = picks.iter().map(|p| names[*p].to_string()).collect();
        let ds = RawDataset { features: PointSet::from_rows(2, coords).unwrap(), labels };
        let mut map = BTreeMap::new();
        map.insert("yes".to_string(), 1i8);
        map.insert("no".to_string(), -1i8);
        let out = split(&ds, &SplitSpec::new(seed, map)).unwrap();
        let total = out.labeled.len() + out.unlabeled.len() + out.test.len();
        prop_assert_eq!(total, n);
        prop_assert_eq!(out.manifest.len(), n);
        let mut seen = vec![false; n];
        for (row, part) in &out.manifest {
            prop_assert!(!seen[*row]);
            seen[*row] = true;
            let _ = match part {
                Part::Labeled | Part::Unlabeled | Part::Test => (),
            };
        }
    }
}
