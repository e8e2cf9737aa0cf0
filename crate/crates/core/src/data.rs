//! Dataset containers, parsers, and the preprocessing pipeline.
//!
//! External data flows in as LIBSVM or headered CSV, is min-max scaled
//! into the unit cube, and is split into labeled / unlabeled / test parts
//! with a seeded shuffle so every run is reproducible from its config.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Dense points stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    dim: usize,
    coords: Vec<f64>,
}

impl PointSet {
    pub fn new(dim: usize) -> Self {
        Self { dim, coords: Vec::new() }
    }

    pub fn with_capacity(dim: usize, points: usize) -> Self {
        Self { dim, coords: Vec::with_capacity(dim * points) }
    }

    pub fn from_rows(dim: usize, rows: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter { name: "dimension", reason: "must be at least 1".into() });
        }
        if rows.len() % dim != 0 {
            return Err(Error::DimensionMismatch { expected: dim, got: rows.len() % dim });
        }
        Ok(Self { dim, coords: rows })
    }

    pub fn push(&mut self, point: &[f64]) {
        debug_assert_eq!(point.len(), self.dim);
        self.coords.extend_from_slice(point);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 { 0 } else { self.coords.len() / self.dim }
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }
}

/// Points with labels in {-1, +1}.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    pub points: PointSet,
    pub labels: Vec<i8>,
}

impl LabeledSet {
    pub fn new(points: PointSet, labels: Vec<i8>) -> Result<Self> {
        if points.len() != labels.len() {
            return Err(Error::DimensionMismatch { expected: points.len(), got: labels.len() });
        }
        if labels.iter().any(|&y| y != -1 && y != 1) {
            return Err(Error::InvalidParameter { name: "label", reason: "labels must be -1 or +1".into() });
        }
        Ok(Self { points, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Parsed but not yet mapped or scaled: feature rows plus raw label tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    pub features: PointSet,
    pub labels: Vec<String>,
}

impl RawDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Parse LIBSVM text: `label index:value ...` per line, indices 1-based and
/// strictly ascending within a line. Omitted indices are zero. Blank lines
/// are skipped; `#` starts a comment.
pub fn parse_libsvm(text: &str) -> Result<RawDataset> {
    let mut rows: Vec<(String, Vec<(usize, f64)>)> = Vec::new();
    let mut max_index = 0usize;
    for (lineno, raw_line) in text.lines().enumerate() {
        let line = match raw_line.find('#') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let label = parts.next().expect("non-empty line").to_string();
        let mut entries: Vec<(usize, f64)> = Vec::new();
        for tok in parts {
            let (idx_str, val_str) = tok.split_once(':').ok_or_else(|| Error::Parse {
                line: lineno + 1,
                reason: format!("expected index:value, got {tok:?}"),
            })?;
            let idx: usize = idx_str.parse().map_err(|_| Error::Parse {
                line: lineno + 1,
                reason: format!("bad feature index {idx_str:?}"),
            })?;
            if idx == 0 {
                return Err(Error::Parse { line: lineno + 1, reason: "feature indices are 1-based".into() });
            }
            let val: f64 = val_str.parse().map_err(|_| Error::Parse {
                line: lineno + 1,
                reason: format!("bad feature value {val_str:?}"),
            })?;
            if !val.is_finite() {
                return Err(Error::Parse { line: lineno + 1, reason: format!("non-finite feature value {val_str}") });
            }
            if let Some(&(last, _)) = entries.last() {
                if idx <= last {
                    return Err(Error::Parse {
                        line: lineno + 1,
                        reason: format!("feature indices must be strictly ascending ({last} then {idx})"),
                    });
                }
            }
            entries.push((idx, val));
        }
        max_index = max_index.max(entries.last().map(|&(i, _)| i).unwrap_or(0));
        rows.push((label, entries));
    }
    if rows.is_empty() {
        return Err(Error::EmptyData);
    }
    let dim = max_index.max(1);
    let mut features = PointSet::with_capacity(dim, rows.len());
    let mut labels = Vec::with_capacity(rows.len());
    let mut buf = vec![0.0; dim];
    for (label, entries) in rows {
        buf.iter_mut().for_each(|v| *v = 0.0);
        for (idx, val) in entries {
            buf[idx - 1] = val;
        }
        features.push(&buf);
        labels.push(label);
    }
    Ok(RawDataset { features, labels })
}

/// Write LIBSVM text for `ds`, omitting zero features. Values print in the
/// shortest form that parses back to the identical float.
pub fn serialize_libsvm(ds: &RawDataset) -> String {
    let mut out = String::new();
    for (row, label) in ds.features.iter().zip(&ds.labels) {
        out.push_str(label);
        for (j, &v) in row.iter().enumerate() {
            if v != 0.0 {
                out.push_str(&format!(" {}:{}", j + 1, v));
            }
        }
        out.push('\n');
    }
    out
}

/// Parse a headered CSV into features plus raw labels, taking the label from
/// `label_column` and every other column, in file order, as a feature.
pub fn parse_csv_dataset(text: &str, label_column: &str) -> Result<RawDataset> {
    let mut reader = csv::ReaderBuilder::new().flexible(false).from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse { line: 1, reason: format!("bad header: {e}") })?
        .clone();
    let label_pos = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::Parse { line: 1, reason: format!("no column named {label_column:?}") })?;
    let dim = headers.len().saturating_sub(1);
    if dim == 0 {
        return Err(Error::Parse { line: 1, reason: "need at least one feature column".into() });
    }
    let mut features = PointSet::new(dim);
    let mut labels = Vec::new();
    let mut buf = Vec::with_capacity(dim);
    for (i, record) in reader.records().enumerate() {
        let lineno = i + 2;
        let record = record.map_err(|e| Error::Parse { line: lineno, reason: e.to_string() })?;
        if record.len() != headers.len() {
            return Err(Error::Parse {
                line: lineno,
                reason: format!("expected {} cells, got {}", headers.len(), record.len()),
            });
        }
        buf.clear();
        for (j, cell) in record.iter().enumerate() {
            if j == label_pos {
                labels.push(cell.to_string());
            } else {
                let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                    line: lineno,
                    reason: format!("bad numeric cell {cell:?} in column {:?}", &headers[j]),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse { line: lineno, reason: format!("non-finite cell {cell:?}") });
                }
                buf.push(v);
            }
        }
        features.push(&buf);
    }
    if labels.is_empty() {
        return Err(Error::EmptyData);
    }
    Ok(RawDataset { features, labels })
}

/// Per-feature min-max scaling into [0, 1], fit once and reapplied verbatim.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizeTransform {
    mins: Vec<f64>,
    spans: Vec<f64>,
}

impl NormalizeTransform {
    pub fn fit(points: &PointSet) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyData);
        }
        let dim = points.dim();
        let mut mins = vec![f64::INFINITY; dim];
        let mut maxs = vec![f64::NEG_INFINITY; dim];
        for row in points.iter() {
            for (j, &v) in row.iter().enumerate() {
                mins[j] = mins[j].min(v);
                maxs[j] = maxs[j].max(v);
            }
        }
        let spans = mins.iter().zip(&maxs).map(|(lo, hi)| hi - lo).collect();
        Ok(Self { mins, spans })
    }

    /// Scale into the unit cube. A feature that was constant when the
    /// transform was fit maps to 0; values outside the fitted range clip
    /// to [0, 1].
    pub fn apply(&self, points: &PointSet) -> Result<PointSet> {
        if points.dim() != self.mins.len() {
            return Err(Error::DimensionMismatch { expected: self.mins.len(), got: points.dim() });
        }
        let mut out = PointSet::with_capacity(points.dim(), points.len());
        let mut buf = vec![0.0; points.dim()];
        for row in points.iter() {
            for (j, &v) in row.iter().enumerate() {
                buf[j] = if self.spans[j] > 0.0 {
                    ((v - self.mins[j]) / self.spans[j]).clamp(0.0, 1.0)
                } else {
                    0.0
                };
            }
            out.push(&buf);
        }
        Ok(out)
    }
}

/// Which part of the split a row landed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    Labeled,
    Unlabeled,
    Test,
}

impl Part {
    pub fn name(self) -> &'static str {
        match self {
            Part::Labeled => "labeled",
            Part::Unlabeled => "unlabeled",
            Part::Test => "test",
        }
    }
}

/// How to split a dataset: part fractions, the shuffle seed, and the map
/// from raw label tokens to {-1, +1}.
#[derive(Debug, Clone)]
pub struct SplitSpec {
    pub fractions: (f64, f64, f64),
    pub seed: u64,
    pub label_map: BTreeMap<String, i8>,
}

impl SplitSpec {
    pub fn new(seed: u64, label_map: BTreeMap<String, i8>) -> Self {
        Self { fractions: (0.6, 0.2, 0.2), seed, label_map }
    }
}

/// The usual {-1,+1} and {0,1} encodings.
pub fn sign_label_map() -> BTreeMap<String, i8> {
    [("-1", -1), ("+1", 1), ("1", 1), ("0", -1)]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
}

/// Binarize integer class tokens by parity: even maps to -1, odd to +1.
pub fn parity_label_map(labels: &[String]) -> Result<BTreeMap<String, i8>> {
    let mut map = BTreeMap::new();
    for label in labels {
        let v: i64 = label.trim().parse().map_err(|_| Error::InvalidParameter {
            name: "label",
            reason: format!("parity mapping needs integer labels, got {label:?}"),
        })?;
        map.insert(label.clone(), if v.rem_euclid(2) == 0 { -1 } else { 1 });
    }
    Ok(map)
}

/// Result of splitting a dataset.
#[derive(Debug, Clone)]
pub struct SplitOutput {
    pub labeled: LabeledSet,
    pub unlabeled: PointSet,
    pub test: LabeledSet,
    /// (original row index, part) in shuffled order, for audit.
    pub manifest: Vec<(usize, Part)>,
}

/// Shuffle rows with the split seed, then cut contiguously into labeled,
/// unlabeled, and test parts. The unlabeled part drops its labels.
pub fn split(ds: &RawDataset, spec: &SplitSpec) -> Result<SplitOutput> {
    let n = ds.len();
    if n == 0 {
        return Err(Error::EmptyData);
    }
    let (fl, fu, ft) = spec.fractions;
    if fl < 0.0 || fu < 0.0 || ft < 0.0 || (fl + fu + ft - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter {
            name: "fractions",
            reason: format!("must be nonnegative and sum to 1, got ({fl}, {fu}, {ft})"),
        });
    }
    for label in &ds.labels {
        if !spec.label_map.contains_key(label) {
            return Err(Error::InvalidParameter {
                name: "label_map",
                reason: format!("no mapping for observed label {label:?}"),
            });
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }

    let n_labeled = (fl * n as f64).floor() as usize;
    let n_unlabeled = (fu * n as f64).floor() as usize;
    let n_test = n - n_labeled - n_unlabeled;
    if n_labeled == 0 || n_unlabeled == 0 || n_test == 0 {
        return Err(Error::InvalidParameter {
            name: "fractions",
            reason: format!("split of {n} rows leaves an empty part ({n_labeled}/{n_unlabeled}/{n_test})"),
        });
    }

    let dim = ds.features.dim();
    let mut labeled = LabeledSet { points: PointSet::with_capacity(dim, n_labeled), labels: Vec::new() };
    let mut unlabeled = PointSet::with_capacity(dim, n_unlabeled);
    let mut test = LabeledSet { points: PointSet::with_capacity(dim, n_test), labels: Vec::new() };
    let mut manifest = Vec::with_capacity(n);
    for (pos, &row) in order.iter().enumerate() {
        let part = if pos < n_labeled {
            Part::Labeled
        } else if pos < n_labeled + n_unlabeled {
            Part::Unlabeled
        } else {
            Part::Test
        };
        manifest.push((row, part));
        let x = ds.features.point(row);
        let y = spec.label_map[&ds.labels[row]];
        match part {
            Part::Labeled => {
                labeled.points.push(x);
                labeled.labels.push(y);
            }
            Part::Unlabeled => unlabeled.push(x),
            Part::Test => {
                test.points.push(x);
                test.labels.push(y);
            }
        }
    }
    Ok(SplitOutput { labeled, unlabeled, test, manifest })
}

/// Render a split manifest as CSV.
pub fn manifest_csv(manifest: &[(usize, Part)]) -> String {
    let mut out = String::from("row,part\n");
    for &(row, part) in manifest {
        out.push_str(&format!("{},{}\n", row, part.name()));
    }
    out
}

/// Draw a balanced two-class sample where class +1 centers at (0.7, ..., 0.7)
/// and class -1 at (0.3, ..., 0.3), isotropic normal noise `sigma`, each
/// coordinate clamped into [0, 1].
pub fn two_gaussians(n: usize, dim: usize, sigma: f64, seed: u64) -> Result<LabeledSet> {
    if n == 0 {
        return Err(Error::EmptyData);
    }
    if dim == 0 {
        return Err(Error::InvalidParameter { name: "dimension", reason: "must be at least 1".into() });
    }
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter { name: "sigma", reason: format!("must be positive, got {sigma}") });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).expect("finite sigma");
    let mut points = PointSet::with_capacity(dim, n);
    let mut labels = Vec::with_capacity(n);
    let mut buf = vec![0.0; dim];
    for _ in 0..n {
        let y: i8 = if rng.gen::<bool>() { 1 } else { -1 };
        let center = if y == 1 { 0.7 } else { 0.3 };
        for c in buf.iter_mut() {
            *c = (center + noise.sample(&mut rng)).clamp(0.0, 1.0);
        }
        points.push(&buf);
        labels.push(y);
    }
    Ok(LabeledSet { points, labels })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn libsvm_parses_sparse_rows() {
        let ds = parse_libsvm("+1 1:0.5 3:2.0\n-1 2:1.25\n").unwrap();
        assert_eq!(ds.features.dim(), 3);
        assert_eq!(ds.features.point(0), &[0.5, 0.0, 2.0]);
        assert_eq!(ds.features.point(1), &[0.0, 1.25, 0.0]);
        assert_eq!(ds.labels, vec!["+1", "-1"]);
    }

    #[test]
    fn libsvm_rejects_unordered_indices() {
        let err = parse_libsvm("+1 2:1 1:2\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 1),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn libsvm_reports_bad_line_numbers() {
        let err = parse_libsvm("+1 1:1\n-1 1:x\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn libsvm_roundtrip_is_exact() {
        let text = "+1 1:0.1 2:0.30000000000000004\n-1 2:1e-300\n5 1:3.141592653589793\n";
        let ds = parse_libsvm(text).unwrap();
        let back = parse_libsvm(&serialize_libsvm(&ds)).unwrap();
        assert_eq!(ds, back);
    }

    #[test]
    fn csv_parses_with_header() {
        let ds = parse_csv_dataset("a,label,b\n0.5,pos,1.5\n0.25,neg,2.5\n", "label").unwrap();
        assert_eq!(ds.features.point(0), &[0.5, 1.5]);
        assert_eq!(ds.labels, vec!["pos", "neg"]);
    }

    #[test]
    fn csv_rejects_ragged_rows() {
        let err = parse_csv_dataset("a,label\n1.0,pos,extra\n", "label").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn normalize_maps_to_unit_cube_and_clips() {
        let train = PointSet::from_rows(2, vec![0.0, 5.0, 10.0, 5.0, 4.0, 5.0]).unwrap();
        let t = NormalizeTransform::fit(&train).unwrap();
        let scaled = t.apply(&train).unwrap();
        assert_eq!(scaled.point(0), &[0.0, 0.0]);
        assert_eq!(scaled.point(1), &[1.0, 0.0]);
        assert_eq!(scaled.point(2), &[0.4, 0.0]);

        let test = PointSet::from_rows(2, vec![-3.0, 7.0]).unwrap();
        let scaled = t.apply(&test).unwrap();
        assert_eq!(scaled.point(0), &[0.0, 0.0]);
    }

    #[test]
    fn split_sizes_follow_fractions() {
        let n = 100;
        let mut features = PointSet::new(1);
        let mut labels = Vec::new();
        for i in 0..n {
            features.push(&[i as f64 / n as f64]);
            labels.push(if i % 2 == 0 { "+1".to_string() } else { "-1".to_string() });
        }
        let ds = RawDataset { features, labels };
        let mut spec = SplitSpec::new(7, sign_label_map());
        spec.fractions = (0.5, 0.25, 0.25);
        let out = split(&ds, &spec).unwrap();
        assert_eq!(out.labeled.len(), 50);
        assert_eq!(out.unlabeled.len(), 25);
        assert_eq!(out.test.len(), 25);
        assert_eq!(out.manifest.len(), 100);

        let again = split(&ds, &spec).unwrap();
        assert_eq!(out.labeled, again.labeled);
        assert_eq!(out.manifest, again.manifest);

        let mut seen: Vec<usize> = out.manifest.iter().map(|&(r, _)| r).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn split_rejects_empty_parts() {
        let ds = RawDataset {
            features: PointSet::from_rows(1, vec![0.1, 0.2, 0.3]).unwrap(),
            labels: vec!["+1".into(), "-1".into(), "+1".into()],
        };
        let mut spec = SplitSpec::new(1, sign_label_map());
        spec.fractions = (0.9, 0.05, 0.05);
        assert!(split(&ds, &spec).is_err());
    }

    #[test]
    fn split_requires_total_label_map() {
        let ds = RawDataset {
            features: PointSet::from_rows(1, vec![0.1; 10]).unwrap(),
            labels: (0..10).map(|i| if i < 9 { "+1".into() } else { "weird".into() }).collect(),
        };
        let spec = SplitSpec::new(1, sign_label_map());
        assert!(split(&ds, &spec).is_err());
    }

    #[test]
    fn parity_map_binarizes_digits() {
        let labels: Vec<String> = ["3", "8", "0", "7"].iter().map(|s| s.to_string()).collect();
        let map = parity_label_map(&labels).unwrap();
        assert_eq!(map["3"], 1);
        assert_eq!(map["8"], -1);
        assert_eq!(map["0"], -1);
        assert_eq!(map["7"], 1);

        let ds = RawDataset {
            features: PointSet::from_rows(1, vec![0.0; 4]).unwrap(),
            labels,
        };
        let mut spec = SplitSpec::new(3, map);
        spec.fractions = (0.5, 0.25, 0.25);
        let out = split(&ds, &spec).unwrap();
        assert_eq!(out.labeled.len() + out.unlabeled.len() + out.test.len(), 4);
    }

    #[test]
    fn two_gaussian_sample_is_seeded_and_clipped() {
        let a = two_gaussians(500, 2, 0.15, 9).unwrap();
        let b = two_gaussians(500, 2, 0.15, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.points.iter().flatten().all(|&v| (0.0..=1.0).contains(&v)));
        let pos = a.labels.iter().filter(|&&y| y == 1).count();
        assert!(pos > 150 && pos < 350, "balanced classes, got {pos}/500");
    }
}
