//! Datasets: CSV ingestion, synthetic Gaussian classes, stratified splits.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub n_classes: usize,
    /// Word for each dense id, when the data came from text.
    pub vocabulary: Option<Vec<String>>,
    /// Set when feature columns hold categorical ids in `[0, categories)`
    /// rather than real values.
    pub categories: Option<usize>,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        let ds = Dataset {
            features,
            labels,
            n_classes,
            vocabulary: None,
            categories: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.rows() != self.labels.len() {
            return Err(Error::invalid("feature rows and labels differ in length"));
        }
        if let Some(&y) = self.labels.iter().find(|&&y| y >= self.n_classes) {
            return Err(Error::invalid(format!(
                "label {y} out of range for {} classes",
                self.n_classes
            )));
        }
        if !self.features.all_finite() {
            return Err(Error::invalid("features contain non-finite values"));
        }
        if let Some(v) = &self.vocabulary {
            let mut seen = std::collections::HashSet::new();
            if !v.iter().all(|w| seen.insert(w)) {
                return Err(Error::invalid("vocabulary has duplicate words"));
            }
        }
        Ok(())
    }

    /// Rows `idx`, keeping vocabulary and class count.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            n_classes: self.n_classes,
            vocabulary: self.vocabulary.clone(),
            categories: self.categories,
        }
    }
}

fn parse_err(line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        line: line as usize,
        message: message.into(),
    }
}

/// Reads rows of `d` numeric features followed by an integer label.
///
/// The first line is a header only if none of its cells is numeric. `N` is
/// `declared_classes` when given, otherwise the largest label plus one.
pub fn ingest_csv(path: &Path, declared_classes: Option<usize>) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_error)?;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut width: Option<usize> = None;
    for (idx, rec) in reader.records().enumerate() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(idx as u64 + 1, |p| p.line());
        if idx == 0 && rec.iter().all(|c| c.parse::<f64>().is_err()) {
            continue;
        }
        if rec.len() == 1 && rec.get(0) == Some("") {
            continue;
        }
        if rec.len() < 2 {
            return Err(parse_err(line, "need at least one feature and a label"));
        }
        match width {
            None => width = Some(rec.len()),
            Some(w) if w != rec.len() => {
                return Err(parse_err(line, format!("expected {w} columns, found {}", rec.len())));
            }
            _ => {}
        }
        let n = rec.len();
        for (c, cell) in rec.iter().take(n - 1).enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(line, format!("column {}: '{cell}' is not a number", c + 1)))?;
            if !v.is_finite() {
                return Err(Error::invalid(format!("line {line}: non-finite feature '{cell}'")));
            }
            data.push(v);
        }
        let cell = &rec[n - 1];
        let y: usize = cell
            .parse()
            .map_err(|_| parse_err(line, format!("label '{cell}' is not a non-negative integer")))?;
        labels.push(y);
    }
    let Some(w) = width else {
        return Err(Error::invalid(format!("{} has no data rows", path.display())));
    };
    let max_label = labels.iter().copied().max().unwrap_or(0);
    let n_classes = match declared_classes {
        Some(n) if max_label >= n => {
            return Err(Error::invalid(format!("label {max_label} out of range for N={n}")));
        }
        Some(n) => n,
        None => max_label + 1,
    };
    Dataset::new(Matrix::from_vec(labels.len(), w - 1, data), labels, n_classes)
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => parse_err(line.unwrap_or(0), format!("{other:?}")),
    }
}

/// `n_classes` centres uniform in `[-1, 1]^dim`, `per_class` samples around
/// each with isotropic Gaussian noise of standard deviation `spread`.
/// Samples are ordered class by class.
pub fn synth_gaussian(n_classes: usize, dim: usize, per_class: usize, spread: f64, seed: u64) -> Result<Dataset> {
    if n_classes < 2 || dim == 0 || per_class == 0 {
        return Err(Error::invalid("need N >= 2, d >= 1 and per_class >= 1"));
    }
    if !(spread >= 0.0 && spread.is_finite()) {
        return Err(Error::invalid("spread must be a non-negative number"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centres: Vec<f64> = (0..n_classes * dim).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let noise = Normal::new(0.0, spread).map_err(|e| Error::invalid(e.to_string()))?;
    let mut data = Vec::with_capacity(n_classes * per_class * dim);
    let mut labels = Vec::with_capacity(n_classes * per_class);
    for c in 0..n_classes {
        let centre = &centres[c * dim..(c + 1) * dim];
        for _ in 0..per_class {
            data.extend(centre.iter().map(|&m| m + noise.sample(&mut rng)));
            labels.push(c);
        }
    }
    Dataset::new(Matrix::from_vec(labels.len(), dim, data), labels, n_classes)
}

/// Per-class shuffle, then the first `round(count * test_fraction)` of each
/// class go to the test side. Both index lists come back sorted.
pub fn stratified_split(labels: &[usize], test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::invalid("test fraction must lie in [0, 1)"));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &y) in labels.iter().enumerate() {
        by_class.entry(y).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for idx in by_class.values_mut() {
        idx.shuffle(&mut rng);
        let n_test = (idx.len() as f64 * test_fraction).round() as usize;
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Fisher-Yates permutation of `0..n` for relabelling experiments.
pub fn label_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    perm
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn csv_basic_and_inferred_classes() {
        let f = write("0.5,1.0,0\n-1,2,2\n3,4,1\n");
        let ds = ingest_csv(f.path(), None).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.dim(), 2);
        assert_eq!(ds.n_classes, 3);
        assert_eq!(ds.features.row(1), &[-1.0, 2.0]);
    }

    #[test]
    fn csv_header_detection() {
        let f = write("x1,x2,label\n1,2,0\n");
        assert_eq!(ingest_csv(f.path(), None).unwrap().len(), 1);
        // a numeric first line is data
        let f = write("1,2,1\n3,4,0\n");
        assert_eq!(ingest_csv(f.path(), None).unwrap().len(), 2);
    }

    #[test]
    fn csv_errors_name_the_line() {
        let f = write("1,2,0\n1,abc,1\n");
        match ingest_csv(f.path(), None) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        let f = write("1,2,0\n1,2,3,1\n");
        match ingest_csv(f.path(), None) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        let f = write("1,2,0\n1,2,1.5\n");
        assert!(matches!(ingest_csv(f.path(), None), Err(Error::Parse { line: 2, .. })));
        let f = write("1,2,5\n");
        assert!(matches!(ingest_csv(f.path(), Some(3)), Err(Error::InvalidArgument(_))));
        let f = write("1,nan,0\n");
        assert!(matches!(ingest_csv(f.path(), None), Err(Error::InvalidArgument(_))));
        let f = write("");
        assert!(ingest_csv(f.path(), None).is_err());
    }

    #[test]
    fn synth_shapes_and_balance() {
        let ds = synth_gaussian(4, 2, 10, 0.1, 3).unwrap();
        assert_eq!(ds.len(), 40);
        for c in 0..4 {
            assert_eq!(ds.labels.iter().filter(|&&y| y == c).count(), 10);
        }
        assert_eq!(ds, synth_gaussian(4, 2, 10, 0.1, 3).unwrap());
        assert!(synth_gaussian(1, 2, 10, 0.1, 3).is_err());
        assert!(synth_gaussian(4, 2, 10, -1.0, 3).is_err());
    }

    #[test]
    fn zero_spread_puts_samples_on_centres() {
        let ds = synth_gaussian(3, 2, 5, 0.0, 8).unwrap();
        for c in 0..3 {
            let first = ds.features.row(c * 5).to_vec();
            for r in 0..5 {
                assert_eq!(ds.features.row(c * 5 + r), first.as_slice());
            }
            assert!(first.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn stratified_split_is_balanced_and_disjoint() {
        let ds = synth_gaussian(10, 2, 60, 0.1, 1).unwrap();
        let (tr, te) = stratified_split(&ds.labels, 0.2, 7).unwrap();
        assert_eq!(tr.len(), 480);
        assert_eq!(te.len(), 120);
        for c in 0..10 {
            assert_eq!(te.iter().filter(|&&i| ds.labels[i] == c).count(), 12);
        }
        let mut all: Vec<usize> = tr.iter().chain(&te).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..600).collect::<Vec<_>>());
        assert_eq!((tr.clone(), te.clone()), stratified_split(&ds.labels, 0.2, 7).unwrap());
    }

    #[test]
    fn permutation_is_a_bijection() {
        let mut p = label_permutation(50, 3);
        p.sort_unstable();
        assert_eq!(p, (0..50).collect::<Vec<_>>());
    }
}
