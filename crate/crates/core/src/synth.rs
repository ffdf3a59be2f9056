//! Synthetic multi-annotator datasets.
//!
//! Two generators are provided. `Dirichlet` draws a per-document label
//! distribution and samples annotators from it. `MatrixCalibrated` fits a
//! latent-class model whose expected pairwise conflation matches a given
//! [`ConflationMatrix`], then samples documents from that model.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use crate::conflation::{sample_index, ConflationMatrix};
use crate::error::{Error, Result};
use crate::label::{Dataset, Document, LabelScheme};

pub const DEFAULT_DOCS: usize = 343;
pub const DEFAULT_ANNOTATORS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnnotatorCount {
    Fixed(usize),
    /// Uniform over `min..=max`.
    Uniform {
        min: usize,
        max: usize,
    },
}

impl Default for AnnotatorCount {
    fn default() -> Self {
        AnnotatorCount::Fixed(DEFAULT_ANNOTATORS)
    }
}

impl AnnotatorCount {
    fn validate(self) -> Result<()> {
        match self {
            AnnotatorCount::Fixed(0) => {
                Err(Error::Config("annotators per document must be >= 1".into()))
            }
            AnnotatorCount::Uniform { min, max } if min == 0 || min > max => Err(Error::Config(
                format!("invalid annotator range {min}..={max}"),
            )),
            _ => Ok(()),
        }
    }

    fn draw<R: Rng + ?Sized>(self, rng: &mut R) -> usize {
        match self {
            AnnotatorCount::Fixed(n) => n,
            AnnotatorCount::Uniform { min, max } => rng.random_range(min..=max),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SynthMode {
    /// Concentration vector, one entry per scheme label in ascending order.
    Dirichlet(Vec<f64>),
    MatrixCalibrated(ConflationMatrix),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub scheme: LabelScheme,
    pub n_docs: usize,
    pub annotators: AnnotatorCount,
    pub mode: SynthMode,
    pub seed: u64,
}

impl SynthConfig {
    /// 343 documents with three annotators each, calibrated to `matrix`.
    pub fn calibrated(matrix: ConflationMatrix, seed: u64) -> Self {
        Self {
            scheme: matrix.scheme().clone(),
            n_docs: DEFAULT_DOCS,
            annotators: AnnotatorCount::default(),
            mode: SynthMode::MatrixCalibrated(matrix),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_docs == 0 {
            return Err(Error::Config("n_docs must be >= 1".into()));
        }
        self.annotators.validate()?;
        match &self.mode {
            SynthMode::Dirichlet(alpha) => {
                if alpha.len() != self.scheme.len() {
                    return Err(Error::Config(format!(
                        "dirichlet needs {} concentration values, got {}",
                        self.scheme.len(),
                        alpha.len()
                    )));
                }
                if alpha.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
                    return Err(Error::Config("dirichlet concentrations must be > 0".into()));
                }
            }
            SynthMode::MatrixCalibrated(matrix) => {
                if matrix.scheme().labels() != self.scheme.labels() {
                    return Err(Error::Config(
                        "conflation matrix labels do not match the synth scheme".into(),
                    ));
                }
                if matrix.total() == 0 {
                    return Err(Error::Config("conflation matrix has no counts".into()));
                }
            }
        }
        Ok(())
    }
}

/// Annotators of a document share a hidden class and label independently
/// given it.
///
/// Fitted so that the expected joint distribution of two distinct
/// annotators' labels, `sum_z weight[z] * emission[z][a] * emission[z][b]`,
/// matches the normalized conflation counts. Row-conditional conflation
/// probabilities of generated data then match the matrix's row
/// distributions in expectation for any number of annotators.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentClassModel {
    pub weights: Vec<f64>,
    /// `emissions[z]` is a distribution over scheme labels (ascending).
    pub emissions: Vec<Vec<f64>>,
    /// Largest absolute error of the fitted joint against the target.
    pub residual: f64,
}

const FIT_MAX_ITERS: usize = 200_000;
const FIT_TOL: f64 = 1e-15;

impl LatentClassModel {
    /// Symmetric nonnegative factorization `J ~= B B^T` of the normalized
    /// counts by multiplicative updates, started from `J` itself so that
    /// structural zeros are preserved.
    pub fn fit(matrix: &ConflationMatrix) -> Self {
        let k = matrix.scheme().len();
        let total = matrix.total() as f64;
        let joint: Vec<Vec<f64>> = matrix
            .counts()
            .iter()
            .map(|row| row.iter().map(|&c| c as f64 / total).collect())
            .collect();

        let mut b = joint.clone();
        for _ in 0..FIT_MAX_ITERS {
            let jb = mat_mul(&joint, &b);
            let bbt = mat_mul(&b, &transpose(&b));
            let bbtb = mat_mul(&bbt, &b);
            let mut max_change: f64 = 0.0;
            for i in 0..k {
                for z in 0..k {
                    if b[i][z] == 0.0 || bbtb[i][z] == 0.0 {
                        continue;
                    }
                    let next = b[i][z] * (0.5 + jb[i][z] / (2.0 * bbtb[i][z]));
                    max_change = max_change.max((next - b[i][z]).abs());
                    b[i][z] = next;
                }
            }
            if max_change < FIT_TOL {
                break;
            }
        }

        let fitted = mat_mul(&b, &transpose(&b));
        let residual = joint
            .iter()
            .flatten()
            .zip(fitted.iter().flatten())
            .map(|(a, f)| (a - f).abs())
            .fold(0.0, f64::max);

        let mut weights = Vec::with_capacity(k);
        let mut emissions = Vec::with_capacity(k);
        for z in 0..k {
            let mass: f64 = (0..k).map(|i| b[i][z]).sum();
            if mass > 0.0 {
                weights.push(mass * mass);
                emissions.push((0..k).map(|i| b[i][z] / mass).collect());
            }
        }
        let weight_sum: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= weight_sum);
        Self {
            weights,
            emissions,
            residual,
        }
    }

    /// Expected normalized pair counts under the model, ascending label order.
    pub fn expected_joint(&self) -> Vec<Vec<f64>> {
        let k = self.emissions.first().map_or(0, Vec::len);
        let mut joint = vec![vec![0.0; k]; k];
        for (w, e) in self.weights.iter().zip(&self.emissions) {
            for a in 0..k {
                for b in 0..k {
                    joint[a][b] += w * e[a] * e[b];
                }
            }
        }
        joint
    }
}

fn mat_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let m = b[0].len();
    (0..n)
        .map(|i| {
            (0..m)
                .map(|j| (0..b.len()).map(|k| a[i][k] * b[k][j]).sum())
                .collect()
        })
        .collect()
}

fn transpose(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    (0..a[0].len())
        .map(|j| a.iter().map(|row| row[j]).collect())
        .collect()
}

fn dirichlet_draw<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Vec<f64> {
    let mut draws: Vec<f64> = alpha
        .iter()
        .map(|&a| Gamma::new(a, 1.0).expect("validated shape").sample(rng))
        .collect();
    let sum: f64 = draws.iter().sum();
    if sum > 0.0 && sum.is_finite() {
        draws.iter_mut().for_each(|d| *d /= sum);
    } else {
        // every gamma draw underflowed; all mass on the largest concentration
        let top = alpha
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        draws = (0..alpha.len())
            .map(|i| f64::from(u8::from(i == top)))
            .collect();
    }
    draws
}

/// `n` indices with counts proportional to `weights` (largest remainder),
/// in shuffled order. Used instead of i.i.d. draws to cut sampling noise.
fn stratified_classes<R: Rng + ?Sized>(weights: &[f64], n: usize, rng: &mut R) -> Vec<usize> {
    let quotas: Vec<f64> = weights.iter().map(|w| w * n as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - counts[a] as f64;
        let rb = quotas[b] - counts[b] as f64;
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let short = n - counts.iter().sum::<usize>();
    for &z in order.iter().take(short) {
        counts[z] += 1;
    }
    let mut classes: Vec<usize> = counts
        .iter()
        .enumerate()
        .flat_map(|(z, &c)| std::iter::repeat_n(z, c))
        .collect();
    classes.shuffle(rng);
    classes
}

fn doc_id(index: usize, n_docs: usize) -> String {
    let width = n_docs.to_string().len();
    format!("doc{:0width$}", index + 1)
}

pub fn generate(config: &SynthConfig) -> Result<Dataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let scheme = &config.scheme;
    let counts: Vec<usize> = (0..config.n_docs)
        .map(|_| config.annotators.draw(&mut rng))
        .collect();
    let labels: Vec<Vec<i64>> = match &config.mode {
        SynthMode::Dirichlet(alpha) => counts
            .iter()
            .map(|&n| {
                let probs = dirichlet_draw(alpha, &mut rng);
                (0..n)
                    .map(|_| scheme.value_at(sample_index(&probs, &mut rng)))
                    .collect()
            })
            .collect(),
        SynthMode::MatrixCalibrated(matrix) => {
            let model = LatentClassModel::fit(matrix);
            let classes = stratified_classes(&model.weights, config.n_docs, &mut rng);
            let mut out = vec![Vec::new(); config.n_docs];
            for z in 0..model.weights.len() {
                let docs: Vec<usize> = (0..config.n_docs).filter(|&i| classes[i] == z).collect();
                let m: usize = docs.iter().map(|&i| counts[i]).sum();
                // the class's labels in emission proportions, dealt out in shuffled order
                let mut urn = stratified_classes(&model.emissions[z], m, &mut rng).into_iter();
                for &i in &docs {
                    out[i] = urn
                        .by_ref()
                        .take(counts[i])
                        .map(|l| scheme.value_at(l))
                        .collect();
                }
            }
            out
        }
    };
    let documents = labels
        .into_iter()
        .enumerate()
        .map(|(i, l)| Document::new(doc_id(i, config.n_docs), l))
        .collect();
    Dataset::new(scheme.clone(), documents)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conflation::learn_conflation;
    use crate::label::agreement_probability;

    #[test]
    fn concentrated_dirichlet_is_unanimous() {
        let config = SynthConfig {
            scheme: LabelScheme::controversy(),
            n_docs: 50,
            annotators: AnnotatorCount::Fixed(4),
            mode: SynthMode::Dirichlet(vec![1e-300, 1e-300, 1e12, 1e-300]),
            seed: 1,
        };
        let d = generate(&config).unwrap();
        assert_eq!(agreement_probability(&d).unwrap(), 1.0);
        assert!(d
            .documents()
            .iter()
            .all(|doc| doc.labels.iter().all(|&l| l == 1)));
    }

    #[test]
    fn identity_matrix_is_unanimous() {
        let m = ConflationMatrix::identity(LabelScheme::controversy());
        let d = generate(&SynthConfig::calibrated(m, 4)).unwrap();
        assert_eq!(d.len(), 343);
        assert_eq!(agreement_probability(&d).unwrap(), 1.0);
    }

    #[test]
    fn reference_matrix_factorizes_exactly() {
        let m = ConflationMatrix::controversy_reference();
        let model = LatentClassModel::fit(&m);
        assert!(model.residual < 1e-12, "residual {}", model.residual);
        assert!((model.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for e in &model.emissions {
            assert!((e.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(e.iter().all(|&p| p >= 0.0));
        }
        let joint = model.expected_joint();
        let trace: f64 = (0..4).map(|i| joint[i][i]).sum();
        assert!((trace - 1146.0 / 1798.0).abs() < 1e-12);
    }

    #[test]
    fn deterministic_given_seed() {
        let m = ConflationMatrix::controversy_reference();
        let a = generate(&SynthConfig::calibrated(m.clone(), 77)).unwrap();
        let b = generate(&SynthConfig::calibrated(m.clone(), 77)).unwrap();
        assert_eq!(a.to_jsonl_string(), b.to_jsonl_string());
        let c = generate(&SynthConfig::calibrated(m, 78)).unwrap();
        assert_ne!(a.to_jsonl_string(), c.to_jsonl_string());
    }

    #[test]
    fn variable_annotator_counts() {
        let config = SynthConfig {
            annotators: AnnotatorCount::Uniform { min: 1, max: 5 },
            ..SynthConfig::calibrated(ConflationMatrix::controversy_reference(), 3)
        };
        let d = generate(&config).unwrap();
        let sizes: Vec<usize> = d.documents().iter().map(|doc| doc.labels.len()).collect();
        assert!(sizes.iter().all(|&n| (1..=5).contains(&n)));
        assert!(sizes.contains(&1) && sizes.contains(&5));
        assert!(learn_conflation(&d).is_ok());
    }

    #[test]
    fn invalid_configs() {
        let base = SynthConfig::calibrated(ConflationMatrix::controversy_reference(), 1);
        assert!(generate(&SynthConfig {
            n_docs: 0,
            ..base.clone()
        })
        .is_err());
        assert!(generate(&SynthConfig {
            annotators: AnnotatorCount::Fixed(0),
            ..base.clone()
        })
        .is_err());
        assert!(generate(&SynthConfig {
            annotators: AnnotatorCount::Uniform { min: 3, max: 2 },
            ..base.clone()
        })
        .is_err());
        assert!(generate(&SynthConfig {
            mode: SynthMode::Dirichlet(vec![1.0, 1.0]),
            ..base.clone()
        })
        .is_err());
        assert!(generate(&SynthConfig {
            mode: SynthMode::Dirichlet(vec![1.0, 0.0, 1.0, 1.0]),
            ..base
        })
        .is_err());
    }

    #[test]
    fn doc_ids_are_padded() {
        assert_eq!(doc_id(0, 343), "doc001");
        assert_eq!(doc_id(342, 343), "doc343");
        assert_eq!(doc_id(0, 9), "doc1");
    }
}
