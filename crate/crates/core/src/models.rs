//! Generative truth and prediction models.
//!
//! A [`ModelSpec`] maps each document's label multiset to one value. Leaves
//! read the labels directly; `Flip` and `Conflate` perturb the value their
//! base produced for the same document.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::conflation::ConflationMatrix;
use crate::error::{Error, Result};
use crate::label::{binarize, Dataset, Document, LabelScheme};

const MAX_DEPTH: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    /// Mean of the labels; fractional.
    Average,
    /// Largest label.
    Max,
    /// One label drawn uniformly from the multiset.
    Sample,
    /// Binarized average, as the scheme's positive or negative representative.
    Truth,
    /// Keep the base value with probability `p`, otherwise replace it.
    Flip { p: f64, base: Box<ModelSpec> },
    /// Replace the base value by a draw from its conflation row.
    Conflate(Box<ModelSpec>),
}

impl ModelSpec {
    pub fn flip(p: f64, base: ModelSpec) -> Self {
        ModelSpec::Flip {
            p,
            base: Box::new(base),
        }
    }

    pub fn conflate(base: ModelSpec) -> Self {
        ModelSpec::Conflate(Box::new(base))
    }

    pub fn depth(&self) -> usize {
        match self {
            ModelSpec::Flip { base, .. } | ModelSpec::Conflate(base) => 1 + base.depth(),
            _ => 1,
        }
    }

    pub fn uses_conflation(&self) -> bool {
        match self {
            ModelSpec::Conflate(_) => true,
            ModelSpec::Flip { base, .. } => base.uses_conflation(),
            _ => false,
        }
    }

    /// True when every produced value is a scheme label.
    pub fn is_integral(&self) -> bool {
        !matches!(self, ModelSpec::Average)
    }

    /// Human-facing name, e.g. `Flip(p=0.643, Truth)`.
    pub fn title(&self) -> String {
        match self {
            ModelSpec::Average => "Average".into(),
            ModelSpec::Max => "Max".into(),
            ModelSpec::Sample => "Sample".into(),
            ModelSpec::Truth => "Truth".into(),
            ModelSpec::Flip { p, base } => format!("Flip(p={p}, {})", base.title()),
            ModelSpec::Conflate(base) => format!("Conflate({})", base.title()),
        }
    }

    /// Checks the spec can be applied in `ctx` without running it.
    pub fn validate(&self, ctx: &ModelContext<'_>) -> Result<()> {
        if self.depth() > MAX_DEPTH {
            return Err(Error::Config(format!(
                "model nesting deeper than {MAX_DEPTH}"
            )));
        }
        match self {
            ModelSpec::Average | ModelSpec::Max | ModelSpec::Sample | ModelSpec::Truth => Ok(()),
            ModelSpec::Flip { p, base } => {
                if !(0.0..=1.0).contains(p) {
                    return Err(Error::Config(format!(
                        "flip probability {p} outside [0, 1]"
                    )));
                }
                if ctx.flip_space == FlipSpace::Ordinal && !base.is_integral() {
                    return Err(Error::Config(format!(
                        "ordinal flip needs label-valued input, `{base}` is fractional"
                    )));
                }
                base.validate(ctx)
            }
            ModelSpec::Conflate(base) => {
                let matrix = ctx.matrix.ok_or_else(|| {
                    Error::Config(format!("`{self}` requires a conflation matrix"))
                })?;
                if matrix.scheme().labels() != ctx.dataset.scheme().labels() {
                    return Err(Error::Config(
                        "conflation matrix labels do not match the dataset scheme".into(),
                    ));
                }
                if !base.is_integral() {
                    return Err(Error::Config(format!(
                        "conflate needs label-valued input, `{base}` is fractional"
                    )));
                }
                base.validate(ctx)
            }
        }
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelSpec::Average => f.write_str("average"),
            ModelSpec::Max => f.write_str("max"),
            ModelSpec::Sample => f.write_str("sample"),
            ModelSpec::Truth => f.write_str("truth"),
            ModelSpec::Flip { p, base } => write!(f, "flip({p},{base})"),
            ModelSpec::Conflate(base) => write!(f, "conflate({base})"),
        }
    }
}

impl Serialize for ModelSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ModelSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Ident(String),
    Number(String),
    Open,
    Close,
    Comma,
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Ident(s) | Token::Number(s) => f.write_str(s),
            Token::Open => f.write_str("("),
            Token::Close => f.write_str(")"),
            Token::Comma => f.write_str(","),
        }
    }
}

fn tokenize(input: &str) -> Result<Vec<Token>> {
    let mut tokens = Vec::new();
    let mut chars = input.char_indices().peekable();
    while let Some(&(start, c)) = chars.peek() {
        match c {
            c if c.is_whitespace() => {
                chars.next();
            }
            '(' => {
                chars.next();
                tokens.push(Token::Open);
            }
            ')' => {
                chars.next();
                tokens.push(Token::Close);
            }
            ',' => {
                chars.next();
                tokens.push(Token::Comma);
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut end = start;
                while let Some(&(i, c)) = chars.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' {
                        end = i + c.len_utf8();
                        chars.next();
                    } else {
                        break;
                    }
                }
                tokens.push(Token::Ident(input[start..end].to_ascii_lowercase()));
            }
            c if c.is_ascii_digit() || c == '.' || c == '-' || c == '+' => {
                let mut end = start;
                while let Some(&(i, c)) = chars.peek() {
                    if c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E') {
                        end = i + c.len_utf8();
                        chars.next();
                    } else {
                        break;
                    }
                }
                tokens.push(Token::Number(input[start..end].to_string()));
            }
            other => {
                return Err(Error::ModelSyntax {
                    token: other.to_string(),
                    message: "unexpected character".into(),
                })
            }
        }
    }
    Ok(tokens)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expect(&mut self, want: Token) -> Result<()> {
        match self.next() {
            Some(t) if t == want => Ok(()),
            Some(t) => Err(Error::ModelSyntax {
                token: t.to_string(),
                message: format!("expected `{want}`"),
            }),
            None => Err(Error::ModelSyntax {
                token: "<end>".into(),
                message: format!("expected `{want}`"),
            }),
        }
    }

    fn spec(&mut self, depth: usize) -> Result<ModelSpec> {
        let token = self.next().ok_or_else(|| Error::ModelSyntax {
            token: "<end>".into(),
            message: "expected a model name".into(),
        })?;
        if depth > MAX_DEPTH {
            return Err(Error::ModelSyntax {
                token: token.to_string(),
                message: format!("nesting deeper than {MAX_DEPTH}"),
            });
        }
        let name = match token {
            Token::Ident(name) => name,
            other => {
                return Err(Error::ModelSyntax {
                    token: other.to_string(),
                    message: "expected a model name".into(),
                })
            }
        };
        match name.as_str() {
            "average" | "avg" | "mean" => Ok(ModelSpec::Average),
            "max" => Ok(ModelSpec::Max),
            "sample" => Ok(ModelSpec::Sample),
            "truth" => Ok(ModelSpec::Truth),
            "flip" => {
                self.expect(Token::Open)?;
                let p = match self.next() {
                    Some(Token::Number(text)) => {
                        let p: f64 = text.parse().map_err(|_| Error::ModelSyntax {
                            token: text.clone(),
                            message: "not a number".into(),
                        })?;
                        if !(0.0..=1.0).contains(&p) {
                            return Err(Error::ModelSyntax {
                                token: text,
                                message: "flip probability must lie in [0, 1]".into(),
                            });
                        }
                        p
                    }
                    Some(t) => {
                        return Err(Error::ModelSyntax {
                            token: t.to_string(),
                            message: "expected a probability".into(),
                        })
                    }
                    None => {
                        return Err(Error::ModelSyntax {
                            token: "<end>".into(),
                            message: "expected a probability".into(),
                        })
                    }
                };
                self.expect(Token::Comma)?;
                let base = self.spec(depth + 1)?;
                self.expect(Token::Close)?;
                Ok(ModelSpec::flip(p, base))
            }
            "conflate" => {
                self.expect(Token::Open)?;
                let base = self.spec(depth + 1)?;
                self.expect(Token::Close)?;
                Ok(ModelSpec::conflate(base))
            }
            _ => Err(Error::ModelSyntax {
                token: name,
                message: "unknown model (expected average, max, sample, truth, flip, conflate)"
                    .into(),
            }),
        }
    }
}

impl FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parser = Parser {
            tokens: tokenize(s)?,
            pos: 0,
        };
        let spec = parser.spec(1)?;
        if let Some(extra) = parser.next() {
            return Err(Error::ModelSyntax {
                token: extra.to_string(),
                message: "trailing input".into(),
            });
        }
        Ok(spec)
    }
}

/// Where `Flip` operates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlipSpace {
    /// Binarize the base value, then keep or swap the class representative.
    #[default]
    Binary,
    /// Keep the label or move to one of the other K-1 labels uniformly.
    Ordinal,
}

impl FromStr for FlipSpace {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "binary" => Ok(Self::Binary),
            "ordinal" => Ok(Self::Ordinal),
            other => Err(Error::Config(format!(
                "unknown flip space `{other}` (expected binary or ordinal)"
            ))),
        }
    }
}

/// Read-only inputs shared by every application of a model.
#[derive(Debug, Clone, Copy)]
pub struct ModelContext<'a> {
    pub dataset: &'a Dataset,
    pub matrix: Option<&'a ConflationMatrix>,
    pub flip_space: FlipSpace,
}

impl<'a> ModelContext<'a> {
    pub fn new(dataset: &'a Dataset) -> Self {
        Self {
            dataset,
            matrix: None,
            flip_space: FlipSpace::default(),
        }
    }

    pub fn with_matrix(mut self, matrix: Option<&'a ConflationMatrix>) -> Self {
        self.matrix = matrix;
        self
    }

    pub fn with_flip_space(mut self, flip_space: FlipSpace) -> Self {
        self.flip_space = flip_space;
        self
    }
}

/// One value per document, in dataset order.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub values: Vec<f64>,
    pub integral_only: bool,
}

impl Assignment {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn binarized(&self, scheme: &LabelScheme) -> Vec<bool> {
        self.values.iter().map(|&v| binarize(v, scheme)).collect()
    }
}

pub fn average_label(doc: &Document) -> f64 {
    doc.labels.iter().map(|&l| l as f64).sum::<f64>() / doc.labels.len() as f64
}

pub fn max_label(doc: &Document) -> i64 {
    *doc.labels.iter().max().expect("documents are non-empty")
}

pub fn sample_label<R: Rng + ?Sized>(doc: &Document, rng: &mut R) -> i64 {
    doc.labels[rng.random_range(0..doc.labels.len())]
}

/// Keeps `value` with probability `p`, else draws uniformly from the other
/// labels of the scheme.
pub fn flip_label<R: Rng + ?Sized>(value: i64, p: f64, scheme: &LabelScheme, rng: &mut R) -> i64 {
    if rng.random::<f64>() < p {
        return value;
    }
    let own = scheme.index_of(value).expect("value in scheme");
    let mut other = rng.random_range(0..scheme.len() - 1);
    if other >= own {
        other += 1;
    }
    scheme.value_at(other)
}

/// Binarizes `value` and keeps its class representative with probability
/// `p`, else returns the opposite representative.
pub fn flip_binary<R: Rng + ?Sized>(value: f64, p: f64, scheme: &LabelScheme, rng: &mut R) -> i64 {
    let positive = binarize(value, scheme);
    let keep = rng.random::<f64>() < p;
    scheme.representative(positive == keep)
}

pub fn canonical_truth_label(doc: &Document, scheme: &LabelScheme) -> i64 {
    scheme.representative(binarize(average_label(doc), scheme))
}

pub fn canonical_truth(dataset: &Dataset) -> Assignment {
    let scheme = dataset.scheme();
    Assignment {
        values: dataset
            .documents()
            .iter()
            .map(|d| canonical_truth_label(d, scheme) as f64)
            .collect(),
        integral_only: true,
    }
}

fn eval<R: Rng + ?Sized>(
    spec: &ModelSpec,
    doc: &Document,
    ctx: &ModelContext<'_>,
    rng: &mut R,
) -> f64 {
    let scheme = ctx.dataset.scheme();
    match spec {
        ModelSpec::Average => average_label(doc),
        ModelSpec::Max => max_label(doc) as f64,
        ModelSpec::Sample => sample_label(doc, rng) as f64,
        ModelSpec::Truth => canonical_truth_label(doc, scheme) as f64,
        ModelSpec::Flip { p, base } => {
            let inner = eval(base, doc, ctx, rng);
            match ctx.flip_space {
                FlipSpace::Binary => flip_binary(inner, *p, scheme, rng) as f64,
                FlipSpace::Ordinal => flip_label(inner as i64, *p, scheme, rng) as f64,
            }
        }
        ModelSpec::Conflate(base) => {
            let inner = eval(base, doc, ctx, rng) as i64;
            let matrix = ctx.matrix.expect("validated");
            matrix.sample(inner, rng).expect("label in scheme") as f64
        }
    }
}

/// Applies `spec` to every document, in order, drawing from `rng`.
pub fn apply_model<R: Rng + ?Sized>(
    spec: &ModelSpec,
    ctx: &ModelContext<'_>,
    rng: &mut R,
) -> Result<Assignment> {
    spec.validate(ctx)?;
    Ok(apply_validated(spec, ctx, rng))
}

pub(crate) fn apply_validated<R: Rng + ?Sized>(
    spec: &ModelSpec,
    ctx: &ModelContext<'_>,
    rng: &mut R,
) -> Assignment {
    let values = ctx
        .dataset
        .documents()
        .iter()
        .map(|doc| eval(spec, doc, ctx, rng))
        .collect();
    Assignment {
        values,
        integral_only: spec.is_integral(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn doc(labels: &[i64]) -> Document {
        Document::new("d", labels.to_vec())
    }

    fn ds(docs: &[&[i64]]) -> Dataset {
        let docs = docs
            .iter()
            .enumerate()
            .map(|(i, l)| Document::new(format!("d{i}"), l.to_vec()))
            .collect();
        Dataset::new(LabelScheme::controversy(), docs).unwrap()
    }

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn average_examples() {
        assert_eq!(average_label(&doc(&[2, 2, 2])), 2.0);
        assert!((average_label(&doc(&[2, 1, -1])) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(average_label(&doc(&[0, -1])), -0.5);
    }

    #[test]
    fn max_examples() {
        assert_eq!(max_label(&doc(&[-1, -1, 2])), 2);
        assert_eq!(max_label(&doc(&[-1, 0])), 0);
        assert_eq!(max_label(&doc(&[1, 1, 1])), 1);
    }

    #[test]
    fn sample_singleton() {
        let mut r = rng(1);
        for _ in 0..100 {
            assert_eq!(sample_label(&doc(&[0]), &mut r), 0);
        }
    }

    #[test]
    fn sample_frequencies() {
        let mut r = rng(2);
        let n = 200_000;
        let d = doc(&[2, 2, -1]);
        let twos = (0..n).filter(|_| sample_label(&d, &mut r) == 2).count();
        assert!((twos as f64 / n as f64 - 2.0 / 3.0).abs() < 0.01);
        let d = doc(&[1, -1]);
        let ones = (0..n).filter(|_| sample_label(&d, &mut r) == 1).count();
        assert!((ones as f64 / n as f64 - 0.5).abs() < 0.01);
    }

    #[test]
    fn flip_edges() {
        let s = LabelScheme::controversy();
        let mut r = rng(3);
        for v in [-1, 0, 1, 2] {
            for _ in 0..100 {
                assert_eq!(flip_label(v, 1.0, &s, &mut r), v);
            }
        }
        let two = LabelScheme::new(vec![(0, "no".into()), (1, "yes".into())], 0.5).unwrap();
        for _ in 0..100 {
            assert_eq!(flip_label(0, 0.0, &two, &mut r), 1);
            assert_eq!(flip_label(1, 0.0, &two, &mut r), 0);
        }
    }

    #[test]
    fn flip_keep_rate_and_uniform_others() {
        let s = LabelScheme::controversy();
        let mut r = rng(4);
        let n = 300_000;
        let mut freq = [0usize; 4];
        for _ in 0..n {
            freq[s.index_of(flip_label(1, 0.643, &s, &mut r)).unwrap()] += 1;
        }
        assert!((freq[2] as f64 / n as f64 - 0.643).abs() < 0.005);
        for i in [0, 1, 3] {
            assert!((freq[i] as f64 / n as f64 - 0.357 / 3.0).abs() < 0.005);
        }
    }

    #[test]
    fn flip_binary_swaps_representatives() {
        let s = LabelScheme::controversy();
        let mut r = rng(5);
        assert_eq!(flip_binary(2.0, 1.0, &s, &mut r), 1);
        assert_eq!(flip_binary(2.0, 0.0, &s, &mut r), 0);
        assert_eq!(flip_binary(-1.0, 0.0, &s, &mut r), 1);
        assert_eq!(flip_binary(0.25, 1.0, &s, &mut r), 0);
    }

    #[test]
    fn canonical_truth_examples() {
        let d = ds(&[&[2, 1, -1], &[-1, -1], &[1, 0]]);
        assert_eq!(canonical_truth(&d).values, vec![1.0, 0.0, 1.0]);
        assert!(canonical_truth(&d).integral_only);
    }

    #[test]
    fn apply_average_and_flags() {
        let d = ds(&[&[2, 1, -1], &[0]]);
        let ctx = ModelContext::new(&d);
        let a = apply_model(&ModelSpec::Average, &ctx, &mut rng(0)).unwrap();
        assert!((a.values[0] - 0.667).abs() < 1e-3);
        assert!(!a.integral_only);
        let m = apply_model(&ModelSpec::Max, &ctx, &mut rng(0)).unwrap();
        assert!(m.integral_only);
    }

    #[test]
    fn flip_one_equals_base() {
        let d = ds(&[&[2, 1, -1], &[0, 0, 1], &[-1, 2]]);
        for space in [FlipSpace::Binary, FlipSpace::Ordinal] {
            let ctx = ModelContext::new(&d).with_flip_space(space);
            let base = apply_model(&ModelSpec::Truth, &ctx, &mut rng(9)).unwrap();
            let flipped =
                apply_model(&ModelSpec::flip(1.0, ModelSpec::Truth), &ctx, &mut rng(9)).unwrap();
            assert_eq!(base.values, flipped.values);
        }
    }

    #[test]
    fn conflate_needs_matrix() {
        let d = ds(&[&[1, 0]]);
        let ctx = ModelContext::new(&d);
        let err =
            apply_model(&ModelSpec::conflate(ModelSpec::Sample), &ctx, &mut rng(0)).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn conflate_rejects_fractional_base() {
        let d = ds(&[&[1, 0]]);
        let m = ConflationMatrix::identity(LabelScheme::controversy());
        let ctx = ModelContext::new(&d).with_matrix(Some(&m));
        assert!(apply_model(&ModelSpec::conflate(ModelSpec::Average), &ctx, &mut rng(0)).is_err());
        let ordinal = ctx.with_flip_space(FlipSpace::Ordinal);
        assert!(apply_model(
            &ModelSpec::flip(0.5, ModelSpec::Average),
            &ordinal,
            &mut rng(0)
        )
        .is_err());
        assert!(apply_model(&ModelSpec::flip(0.5, ModelSpec::Average), &ctx, &mut rng(0)).is_ok());
    }

    #[test]
    fn parse_examples() {
        assert_eq!("average".parse::<ModelSpec>().unwrap(), ModelSpec::Average);
        assert_eq!(" MAX ".parse::<ModelSpec>().unwrap(), ModelSpec::Max);
        assert_eq!("Sample".parse::<ModelSpec>().unwrap(), ModelSpec::Sample);
        assert_eq!("truth".parse::<ModelSpec>().unwrap(), ModelSpec::Truth);
        assert_eq!(
            "flip( 0.643 , Truth )".parse::<ModelSpec>().unwrap(),
            ModelSpec::flip(0.643, ModelSpec::Truth)
        );
        assert_eq!(
            "conflate(conflate(sample))".parse::<ModelSpec>().unwrap(),
            ModelSpec::conflate(ModelSpec::conflate(ModelSpec::Sample))
        );
    }

    #[test]
    fn parse_errors_name_token() {
        let cases = [
            ("median", "median"),
            ("flip(x,truth)", "x"),
            ("flip(1.5,truth)", "1.5"),
            ("conflate(sample", "<end>"),
            ("sample)", ")"),
            ("flip(0.5 truth)", "truth"),
            ("sample#", "#"),
        ];
        for (input, token) in cases {
            match input.parse::<ModelSpec>() {
                Err(Error::ModelSyntax { token: t, .. }) => assert_eq!(t, token, "input {input}"),
                other => panic!("{input}: expected syntax error, got {other:?}"),
            }
        }
    }

    #[test]
    fn display_round_trips() {
        for text in ["average", "flip(0.643,truth)", "conflate(flip(0.5,sample))"] {
            let spec: ModelSpec = text.parse().unwrap();
            assert_eq!(spec.to_string(), text);
        }
    }
}
