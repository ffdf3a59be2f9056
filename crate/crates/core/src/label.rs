//! Label vocabulary, annotated documents and dataset ingestion.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordinal label vocabulary plus the boundary used to binarize values.
///
/// Labels are stored sorted by value, ascending. A value is in the positive
/// class iff it is `>= positive_threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawScheme", into = "RawScheme")]
pub struct LabelScheme {
    labels: Vec<(i64, String)>,
    positive_threshold: f64,
}

#[derive(Serialize, Deserialize)]
struct RawScheme {
    labels: Vec<(i64, String)>,
    positive_threshold: f64,
}

impl TryFrom<RawScheme> for LabelScheme {
    type Error = Error;

    fn try_from(raw: RawScheme) -> Result<Self> {
        LabelScheme::new(raw.labels, raw.positive_threshold)
    }
}

impl From<LabelScheme> for RawScheme {
    fn from(scheme: LabelScheme) -> Self {
        RawScheme {
            labels: scheme.labels,
            positive_threshold: scheme.positive_threshold,
        }
    }
}

impl LabelScheme {
    /// Builds a scheme. Labels may be given in any order; duplicates are
    /// rejected.
    pub fn new(mut labels: Vec<(i64, String)>, positive_threshold: f64) -> Result<Self> {
        if labels.len() < 2 {
            return Err(Error::Scheme("at least two labels are required".into()));
        }
        labels.sort_by_key(|(value, _)| *value);
        if labels.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Scheme("label values must be distinct".into()));
        }
        let min = labels[0].0 as f64;
        let max = labels[labels.len() - 1].0 as f64;
        if !(positive_threshold > min && positive_threshold < max) {
            return Err(Error::Scheme(format!(
                "positive_threshold {positive_threshold} must lie strictly between {min} and {max}"
            )));
        }
        Ok(Self {
            labels,
            positive_threshold,
        })
    }

    /// The four-level controversy vocabulary (-1..=2) with threshold 0.5.
    pub fn controversy() -> Self {
        Self::new(
            vec![
                (2, "Very Controversial".into()),
                (1, "Controversial".into()),
                (0, "Possibly Non-Controversial".into()),
                (-1, "Clearly Non-Controversial".into()),
            ],
            0.5,
        )
        .expect("built-in scheme is valid")
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let file = File::open(path)?;
        Ok(serde_json::from_reader(BufReader::new(file))?)
    }

    /// `(value, name)` pairs in ascending value order.
    pub fn labels(&self) -> &[(i64, String)] {
        &self.labels
    }

    pub fn values(&self) -> impl DoubleEndedIterator<Item = i64> + ExactSizeIterator + '_ {
        self.labels.iter().map(|(v, _)| *v)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn positive_threshold(&self) -> f64 {
        self.positive_threshold
    }

    pub fn with_threshold(&self, positive_threshold: f64) -> Result<Self> {
        Self::new(self.labels.clone(), positive_threshold)
    }

    /// Position of `value` in ascending order.
    pub fn index_of(&self, value: i64) -> Option<usize> {
        self.labels.binary_search_by_key(&value, |(v, _)| *v).ok()
    }

    pub fn contains(&self, value: i64) -> bool {
        self.index_of(value).is_some()
    }

    pub fn value_at(&self, index: usize) -> i64 {
        self.labels[index].0
    }

    pub fn name_of(&self, value: i64) -> Option<&str> {
        self.index_of(value).map(|i| self.labels[i].1.as_str())
    }

    pub fn binarize(&self, value: f64) -> bool {
        binarize(value, self)
    }

    /// Smallest label on the positive side of the threshold.
    pub fn positive_representative(&self) -> i64 {
        self.values()
            .find(|&v| v as f64 >= self.positive_threshold)
            .expect("threshold below the maximum label")
    }

    /// Largest label on the negative side of the threshold.
    pub fn negative_representative(&self) -> i64 {
        self.values()
            .rev()
            .find(|&v| (v as f64) < self.positive_threshold)
            .expect("threshold above the minimum label")
    }

    pub fn representative(&self, positive: bool) -> i64 {
        if positive {
            self.positive_representative()
        } else {
            self.negative_representative()
        }
    }
}

/// Positive iff `value >= positive_threshold`.
pub fn binarize(value: f64, scheme: &LabelScheme) -> bool {
    value >= scheme.positive_threshold
}

/// A document and the labels its annotators gave it. Annotators are anonymous.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub labels: Vec<i64>,
}

impl Document {
    pub fn new(doc_id: impl Into<String>, labels: Vec<i64>) -> Self {
        Self {
            doc_id: doc_id.into(),
            labels,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    scheme: LabelScheme,
    documents: Vec<Document>,
}

impl Dataset {
    /// Validates and builds a dataset. Documents keep their given order.
    pub fn new(scheme: LabelScheme, documents: Vec<Document>) -> Result<Self> {
        if documents.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut seen = HashSet::with_capacity(documents.len());
        for doc in &documents {
            validate_document(doc, &scheme)?;
            if !seen.insert(doc.doc_id.as_str()) {
                return Err(Error::Validation {
                    doc_id: doc.doc_id.clone(),
                    message: "duplicate doc_id".into(),
                });
            }
        }
        Ok(Self { scheme, documents })
    }

    pub fn scheme(&self) -> &LabelScheme {
        &self.scheme
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    /// Writes the jsonl format: a scheme header line followed by one record
    /// per document.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        serde_json::to_writer(
            &mut out,
            &SchemeHeader {
                scheme: self.scheme.clone(),
            },
        )?;
        out.write_all(b"\n")?;
        for doc in &self.documents {
            serde_json::to_writer(&mut out, doc)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }
}

fn validate_document(doc: &Document, scheme: &LabelScheme) -> Result<()> {
    if doc.labels.is_empty() {
        return Err(Error::Validation {
            doc_id: doc.doc_id.clone(),
            message: "document has no labels".into(),
        });
    }
    if let Some(bad) = doc.labels.iter().find(|&&l| !scheme.contains(l)) {
        return Err(Error::Validation {
            doc_id: doc.doc_id.clone(),
            message: format!("label {bad} is not in the scheme"),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    Jsonl,
    Tabular { delimiter: u8 },
}

impl DatasetFormat {
    pub const TSV: DatasetFormat = DatasetFormat::Tabular { delimiter: b'\t' };
    pub const CSV: DatasetFormat = DatasetFormat::Tabular { delimiter: b',' };

    /// Guesses from a file extension: `.csv`, `.tsv`/`.tab`, otherwise jsonl.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Self::CSV,
            Some(ext) if ext.eq_ignore_ascii_case("tsv") || ext.eq_ignore_ascii_case("tab") => {
                Self::TSV
            }
            _ => Self::Jsonl,
        }
    }
}

impl FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "jsonl" | "json" => Ok(Self::Jsonl),
            "tsv" | "tabular" => Ok(Self::TSV),
            "csv" => Ok(Self::CSV),
            other => Err(Error::Config(format!(
                "unknown dataset format `{other}` (expected jsonl, tsv or csv)"
            ))),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct SchemeHeader {
    scheme: LabelScheme,
}

/// Reads a dataset.
///
/// For jsonl the scheme comes from a `{"scheme": ...}` header on the first
/// line; `scheme` overrides it when given. Tabular input has no header and
/// requires `scheme`. Blank lines are skipped.
pub fn load_dataset<R: BufRead>(
    source: R,
    format: DatasetFormat,
    scheme: Option<&LabelScheme>,
) -> Result<Dataset> {
    let mut header_scheme = None;
    let mut documents = Vec::new();
    for (idx, line) in source.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        match format {
            DatasetFormat::Jsonl => {
                let value: serde_json::Value =
                    serde_json::from_str(trimmed).map_err(|e| parse_err(line_no, e))?;
                if documents.is_empty() && header_scheme.is_none() && value.get("scheme").is_some()
                {
                    let header: SchemeHeader =
                        serde_json::from_value(value).map_err(|e| parse_err(line_no, e))?;
                    header_scheme = Some(header.scheme);
                    continue;
                }
                let doc: Document =
                    serde_json::from_value(value).map_err(|e| parse_err(line_no, e))?;
                documents.push(doc);
            }
            DatasetFormat::Tabular { delimiter } => {
                documents.push(parse_tabular_line(trimmed, delimiter as char, line_no)?);
            }
        }
    }
    let scheme = match (scheme, header_scheme) {
        (Some(s), _) => s.clone(),
        (None, Some(s)) => s,
        (None, None) => {
            return Err(Error::Config(
                "no label scheme: add a scheme header line or pass a scheme file".into(),
            ))
        }
    };
    Dataset::new(scheme, documents)
}

pub fn load_dataset_file(
    path: impl AsRef<Path>,
    format: DatasetFormat,
    scheme: Option<&LabelScheme>,
) -> Result<Dataset> {
    let file = File::open(path)?;
    load_dataset(BufReader::new(file), format, scheme)
}

fn parse_err(line: usize, err: impl std::fmt::Display) -> Error {
    Error::Parse {
        line,
        message: err.to_string(),
    }
}

fn parse_tabular_line(line: &str, delimiter: char, line_no: usize) -> Result<Document> {
    let mut fields = line.split(delimiter).map(str::trim);
    let doc_id = fields
        .next()
        .filter(|id| !id.is_empty())
        .ok_or_else(|| parse_err(line_no, "missing doc_id"))?;
    let labels = fields
        .filter(|f| !f.is_empty())
        .map(|f| {
            f.parse::<i64>()
                .map_err(|e| parse_err(line_no, format!("label `{f}`: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Document::new(doc_id, labels))
}

/// Pooled fraction of concordant ordered annotator pairs within documents.
///
/// Equals `trace / total` of the learned conflation counts.
pub fn agreement_probability(dataset: &Dataset) -> Result<f64> {
    let mut concordant: u64 = 0;
    let mut total: u64 = 0;
    let k = dataset.scheme.len();
    let mut tally = vec![0u64; k];
    for doc in &dataset.documents {
        let n = doc.labels.len() as u64;
        if n < 2 {
            continue;
        }
        tally.iter_mut().for_each(|c| *c = 0);
        for &label in &doc.labels {
            tally[dataset.scheme.index_of(label).expect("validated")] += 1;
        }
        concordant += tally.iter().map(|&c| c * c.saturating_sub(1)).sum::<u64>();
        total += n * (n - 1);
    }
    if total == 0 {
        return Err(Error::AgreementUndefined);
    }
    Ok(concordant as f64 / total as f64)
}
