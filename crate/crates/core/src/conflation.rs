//! Label conflation: how often annotators mistake one label for another.
//!
//! Counts are taken over ordered pairs of distinct annotators within a
//! document, so every unordered pair `{a, b}` adds one to both `[a][b]` and
//! `[b][a]` and a concordant pair adds two to the diagonal.

use std::fmt;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::{Dataset, LabelScheme};

#[derive(Debug, Clone, PartialEq)]
pub struct ConflationMatrix {
    scheme: LabelScheme,
    /// Indexed by scheme position (ascending label value).
    counts: Vec<Vec<u64>>,
    smoothing: f64,
    row_probs: Vec<Vec<f64>>,
}

impl ConflationMatrix {
    /// Builds a matrix from counts indexed in the scheme's ascending order.
    pub fn from_counts(scheme: LabelScheme, counts: Vec<Vec<u64>>) -> Result<Self> {
        let k = scheme.len();
        if counts.len() != k || counts.iter().any(|row| row.len() != k) {
            return Err(Error::Config(format!("conflation counts must be {k}x{k}")));
        }
        for a in 0..k {
            for b in (a + 1)..k {
                if counts[a][b] != counts[b][a] {
                    return Err(Error::Config(format!(
                        "conflation counts are not symmetric at ({}, {})",
                        scheme.value_at(a),
                        scheme.value_at(b)
                    )));
                }
            }
        }
        let mut matrix = Self {
            scheme,
            counts,
            smoothing: 0.0,
            row_probs: Vec::new(),
        };
        matrix.normalize();
        Ok(matrix)
    }

    /// Builds a matrix from counts whose axes follow `order`, a permutation
    /// of the scheme's label values.
    pub fn from_ordered_counts(
        scheme: LabelScheme,
        order: &[i64],
        counts: &[Vec<u64>],
    ) -> Result<Self> {
        let k = scheme.len();
        if order.len() != k || counts.len() != k || counts.iter().any(|r| r.len() != k) {
            return Err(Error::Config(format!("conflation counts must be {k}x{k}")));
        }
        let mut positions = Vec::with_capacity(k);
        for &value in order {
            let idx = scheme.index_of(value).ok_or_else(|| {
                Error::Config(format!("label {value} in matrix axis is not in the scheme"))
            })?;
            if positions.contains(&idx) {
                return Err(Error::Config(format!(
                    "label {value} repeated in matrix axis"
                )));
            }
            positions.push(idx);
        }
        let mut grid = vec![vec![0u64; k]; k];
        for (i, row) in counts.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                grid[positions[i]][positions[j]] = c;
            }
        }
        Self::from_counts(scheme, grid)
    }

    /// The pair counts observed on the 343-page controversy corpus.
    pub fn controversy_reference() -> Self {
        Self::from_ordered_counts(
            LabelScheme::controversy(),
            &[2, 1, 0, -1],
            &[
                vec![237, 83, 23, 48],
                vec![83, 182, 27, 53],
                vec![23, 27, 133, 92],
                vec![48, 53, 92, 594],
            ],
        )
        .expect("reference counts are valid")
    }

    /// Identity-like matrix: only diagonal mass.
    pub fn identity(scheme: LabelScheme) -> Self {
        let k = scheme.len();
        let counts = (0..k)
            .map(|a| (0..k).map(|b| u64::from(a == b)).collect())
            .collect();
        Self::from_counts(scheme, counts).expect("square and symmetric")
    }

    /// Adds `alpha` to every cell before row normalization. Raw counts are
    /// kept unchanged.
    pub fn with_smoothing(mut self, alpha: f64) -> Result<Self> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::Config(format!(
                "smoothing must be >= 0, got {alpha}"
            )));
        }
        self.smoothing = alpha;
        self.normalize();
        Ok(self)
    }

    fn normalize(&mut self) {
        let k = self.scheme.len();
        let alpha = self.smoothing;
        self.row_probs = (0..k)
            .map(|a| {
                let row_sum = self.counts[a].iter().sum::<u64>() as f64 + alpha * k as f64;
                if row_sum > 0.0 {
                    self.counts[a]
                        .iter()
                        .map(|&c| (c as f64 + alpha) / row_sum)
                        .collect()
                } else {
                    (0..k).map(|b| if a == b { 1.0 } else { 0.0 }).collect()
                }
            })
            .collect();
    }

    pub fn scheme(&self) -> &LabelScheme {
        &self.scheme
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn smoothing(&self) -> f64 {
        self.smoothing
    }

    /// Count for the pair `(a, b)` of label values.
    pub fn count(&self, a: i64, b: i64) -> Option<u64> {
        Some(self.counts[self.scheme.index_of(a)?][self.scheme.index_of(b)?])
    }

    pub fn row_sum(&self, value: i64) -> Option<u64> {
        self.scheme
            .index_of(value)
            .map(|i| self.counts[i].iter().sum())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }

    /// `trace / total`; the pooled pairwise agreement of the source data.
    pub fn agreement(&self) -> Option<f64> {
        let total = self.total();
        (total > 0).then(|| self.trace() as f64 / total as f64)
    }

    /// Row-normalized distributions, indexed like `counts`.
    pub fn row_probs(&self) -> &[Vec<f64>] {
        &self.row_probs
    }

    /// Conflation distribution over the scheme (ascending order) given the
    /// label `value`. `None` if `value` is not a scheme label.
    pub fn row_distribution(&self, value: i64) -> Option<&[f64]> {
        self.scheme
            .index_of(value)
            .map(|i| self.row_probs[i].as_slice())
    }

    /// Marginal label frequencies from row sums.
    pub fn marginal(&self) -> Vec<f64> {
        let total = self.total() as f64;
        let k = self.counts.len();
        if total == 0.0 {
            return vec![1.0 / k as f64; k];
        }
        self.counts
            .iter()
            .map(|row| row.iter().sum::<u64>() as f64 / total)
            .collect()
    }

    /// Draws a conflated label for `value`.
    pub fn sample<R: Rng + ?Sized>(&self, value: i64, rng: &mut R) -> Option<i64> {
        let row = self.row_distribution(value)?;
        Some(self.scheme.value_at(sample_index(row, rng)))
    }

    pub fn to_file_format(&self) -> MatrixFile {
        let order: Vec<i64> = self.scheme.values().rev().collect();
        let counts = order
            .iter()
            .map(|&a| order.iter().map(|&b| self.count(a, b).unwrap()).collect())
            .collect();
        MatrixFile {
            scheme: self.scheme.clone(),
            values: order,
            counts,
            smoothing: self.smoothing,
        }
    }

    pub fn from_file_format(file: MatrixFile) -> Result<Self> {
        Self::from_ordered_counts(file.scheme, &file.values, &file.counts)?
            .with_smoothing(file.smoothing)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let file = File::open(path)?;
        let parsed: MatrixFile = serde_json::from_reader(BufReader::new(file))?;
        Self::from_file_format(parsed)
    }

    pub fn from_json_str(json: &str) -> Result<Self> {
        Self::from_file_format(serde_json::from_str(json)?)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(&self.to_file_format()).expect("plain data serializes")
    }
}

/// On-disk matrix layout. `values` names the axis order of `counts`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixFile {
    pub scheme: LabelScheme,
    pub values: Vec<i64>,
    pub counts: Vec<Vec<u64>>,
    #[serde(default)]
    pub smoothing: f64,
}

/// Inverse-CDF draw over a probability vector.
pub(crate) fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_nonzero = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_nonzero = i;
            acc += p;
            if u < acc {
                return i;
            }
        }
    }
    // rounding left u just above the cumulative sum
    last_nonzero
}

/// Counts ordered pairs of distinct annotators within each document.
pub fn learn_conflation(dataset: &Dataset) -> Result<ConflationMatrix> {
    let scheme = dataset.scheme();
    let k = scheme.len();
    let mut counts = vec![vec![0u64; k]; k];
    let mut any_pairs = false;
    for doc in dataset.documents() {
        if doc.labels.len() < 2 {
            continue;
        }
        any_pairs = true;
        let idx: Vec<usize> = doc
            .labels
            .iter()
            .map(|&l| scheme.index_of(l).expect("validated"))
            .collect();
        for (i, &a) in idx.iter().enumerate() {
            for (j, &b) in idx.iter().enumerate() {
                if i != j {
                    counts[a][b] += 1;
                }
            }
        }
    }
    if !any_pairs {
        return Err(Error::ConflationUnlearnable);
    }
    ConflationMatrix::from_counts(scheme.clone(), counts)
}

/// Aligned table, highest label first, one row per label.
impl fmt::Display for ConflationMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let order: Vec<i64> = self.scheme.values().rev().collect();
        let name_w = self
            .scheme
            .labels()
            .iter()
            .map(|(_, n)| n.len())
            .max()
            .unwrap_or(0)
            .max(4);
        let cell_w = order
            .iter()
            .map(|v| v.to_string().len())
            .chain(self.counts.iter().flatten().map(|c| c.to_string().len()))
            .max()
            .unwrap_or(1)
            .max(3);
        write!(f, "{:<name_w$} {:>cell_w$} |", "Text", "#")?;
        for v in &order {
            write!(f, " {v:>cell_w$}")?;
        }
        writeln!(f)?;
        writeln!(
            f,
            "{}",
            "-".repeat(name_w + 3 + (cell_w + 1) * (order.len() + 1))
        )?;
        for &a in &order {
            let name = self.scheme.name_of(a).unwrap_or("");
            write!(f, "{name:<name_w$} {a:>cell_w$} |")?;
            for &b in &order {
                write!(f, " {:>cell_w$}", self.count(a, b).unwrap())?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label::{agreement_probability, Document};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ds(docs: &[&[i64]]) -> Dataset {
        let docs = docs
            .iter()
            .enumerate()
            .map(|(i, l)| Document::new(format!("d{i}"), l.to_vec()))
            .collect();
        Dataset::new(LabelScheme::controversy(), docs).unwrap()
    }

    #[test]
    fn two_document_fixture() {
        let m = learn_conflation(&ds(&[&[1, 1], &[1, 0]])).unwrap();
        assert_eq!(m.count(1, 1), Some(2));
        assert_eq!(m.count(1, 0), Some(1));
        assert_eq!(m.count(0, 1), Some(1));
        assert_eq!(m.total(), 4);
        assert_eq!(m.count(2, 2), Some(0));
        assert_eq!(m.count(0, 0), Some(0));
    }

    #[test]
    fn unanimous_is_diagonal_only() {
        let m = learn_conflation(&ds(&[&[2, 2, 2], &[-1, -1], &[0]])).unwrap();
        for a in -1..=2 {
            for b in -1..=2 {
                if a != b {
                    assert_eq!(m.count(a, b), Some(0));
                }
            }
        }
        assert_eq!(m.trace(), 6 + 2);
    }

    #[test]
    fn unlearnable_without_pairs() {
        assert!(matches!(
            learn_conflation(&ds(&[&[1], &[2]])),
            Err(Error::ConflationUnlearnable)
        ));
    }

    #[test]
    fn reference_row_normalization() {
        let m = ConflationMatrix::controversy_reference();
        let row = m.row_distribution(2).unwrap();
        // ascending order: -1, 0, 1, 2
        let expected = [48.0 / 391.0, 23.0 / 391.0, 83.0 / 391.0, 237.0 / 391.0];
        for (got, want) in row.iter().zip(expected) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!((row[3] - 0.606).abs() < 5e-4);
        assert!((row[2] - 0.212).abs() < 5e-4);
        assert!((row[1] - 0.059).abs() < 5e-4);
        assert!((row[0] - 0.123).abs() < 5e-4);
        assert_eq!(m.total(), 1798);
        assert_eq!(m.trace(), 1146);
    }

    #[test]
    fn zero_row_falls_back_to_identity() {
        let m = learn_conflation(&ds(&[&[1, 1]])).unwrap();
        assert_eq!(m.row_distribution(2).unwrap(), &[0.0, 0.0, 0.0, 1.0]);
        let id = ConflationMatrix::identity(LabelScheme::controversy());
        assert_eq!(id.row_distribution(0).unwrap(), &[0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn smoothing_changes_probs_not_counts() {
        let m = learn_conflation(&ds(&[&[1, 1]]))
            .unwrap()
            .with_smoothing(1.0)
            .unwrap();
        assert_eq!(m.count(1, 1), Some(2));
        let row = m.row_distribution(1).unwrap();
        assert!((row[2] - 3.0 / 6.0).abs() < 1e-12);
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(m.clone().with_smoothing(-1.0).is_err());
    }

    #[test]
    fn asymmetric_counts_rejected() {
        let scheme = LabelScheme::new(vec![(0, "n".into()), (1, "p".into())], 0.5).unwrap();
        assert!(ConflationMatrix::from_counts(scheme, vec![vec![1, 2], vec![3, 1]]).is_err());
    }

    #[test]
    fn trace_over_total_matches_agreement() {
        let d = ds(&[&[2, 1, -1], &[0, 0, 1], &[2, 2], &[-1]]);
        let m = learn_conflation(&d).unwrap();
        assert_eq!(m.agreement().unwrap(), agreement_probability(&d).unwrap());
    }

    #[test]
    fn file_format_round_trip() {
        let m = ConflationMatrix::controversy_reference();
        let file = m.to_file_format();
        assert_eq!(file.values, vec![2, 1, 0, -1]);
        assert_eq!(file.counts[0], vec![237, 83, 23, 48]);
        let json = m.to_json_pretty();
        let back =
            ConflationMatrix::from_file_format(serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn table_layout() {
        let text = ConflationMatrix::controversy_reference().to_string();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].contains("Text"));
        assert!(lines[2].starts_with("Very Controversial"));
        assert!(lines[2].trim_end().ends_with("237  83  23  48"));
        assert!(lines[5].starts_with("Clearly Non-Controversial"));
    }

    #[test]
    fn row_sampling_converges() {
        let m = ConflationMatrix::controversy_reference();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 200_000;
        let mut freq = [0usize; 4];
        for _ in 0..n {
            let v = m.sample(0, &mut rng).unwrap();
            freq[m.scheme().index_of(v).unwrap()] += 1;
        }
        let probs = m.row_distribution(0).unwrap();
        // chi-square with 3 dof; 16.27 is the 0.999 quantile
        let chi2: f64 = freq
            .iter()
            .zip(probs)
            .map(|(&o, &p)| {
                let e = p * n as f64;
                (o as f64 - e).powi(2) / e
            })
            .sum();
        assert!(chi2 < 16.27, "chi2 = {chi2}");
    }
}
