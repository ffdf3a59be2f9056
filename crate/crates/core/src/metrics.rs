//! Evaluation metrics over binary truth and real-valued scores.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::{binarize, LabelScheme};

/// Borrowed truth/score pair of equal, non-zero length.
#[derive(Debug, Clone, Copy)]
pub struct MetricInput<'a> {
    truth: &'a [bool],
    scores: &'a [f64],
}

impl<'a> MetricInput<'a> {
    pub fn new(truth: &'a [bool], scores: &'a [f64]) -> Result<Self> {
        if truth.len() != scores.len() {
            return Err(Error::MetricInput(format!(
                "{} truth values but {} scores",
                truth.len(),
                scores.len()
            )));
        }
        if truth.is_empty() {
            return Err(Error::MetricInput("empty input".into()));
        }
        if scores.iter().any(|s| s.is_nan()) {
            return Err(Error::MetricInput("NaN score".into()));
        }
        Ok(Self { truth, scores })
    }

    pub fn truth(&self) -> &'a [bool] {
        self.truth
    }

    pub fn scores(&self) -> &'a [f64] {
        self.scores
    }

    fn class_counts(&self) -> (u64, u64) {
        let pos = self.truth.iter().filter(|&&t| t).count() as u64;
        (pos, self.truth.len() as u64 - pos)
    }
}

/// Rank-based (Mann-Whitney) AUC with average ranks for ties.
pub fn auc(input: MetricInput<'_>) -> Result<f64> {
    let (pos, neg) = input.class_counts();
    if pos == 0 || neg == 0 {
        return Err(Error::MetricUndefined("AUC"));
    }
    let scores = input.scores;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_unstable_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Twice the rank sum of positives, kept integral: a tie group occupying
    // 1-based ranks lo..=hi has doubled average rank lo + hi.
    let mut doubled_rank_sum: u64 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let doubled_rank = (start + 1 + end) as u64;
        let group_pos = order[start..end]
            .iter()
            .filter(|&&i| input.truth[i])
            .count() as u64;
        doubled_rank_sum += doubled_rank * group_pos;
        start = end;
    }
    let doubled_u = doubled_rank_sum - pos * (pos + 1);
    Ok(doubled_u as f64 / (2 * pos * neg) as f64)
}

/// AUC by enumerating every positive/negative pair. O(P*N); a test oracle.
pub fn auc_bruteforce(input: MetricInput<'_>) -> Result<f64> {
    let (pos, neg) = input.class_counts();
    if pos == 0 || neg == 0 {
        return Err(Error::MetricUndefined("AUC"));
    }
    let mut doubled_wins: u64 = 0;
    for (i, &ti) in input.truth.iter().enumerate() {
        if !ti {
            continue;
        }
        for (j, &tj) in input.truth.iter().enumerate() {
            if tj {
                continue;
            }
            let (p, n) = (input.scores[i], input.scores[j]);
            if p > n {
                doubled_wins += 2;
            } else if p == n {
                doubled_wins += 1;
            }
        }
    }
    Ok(doubled_wins as f64 / (2 * pos * neg) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Auc,
    Accuracy,
    F1,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Auc, Metric::Accuracy, Metric::F1];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Auc => "auc",
            Metric::Accuracy => "accuracy",
            Metric::F1 => "f1",
        }
    }

    /// Scores are used raw by `Auc` and binarized through `scheme` by the
    /// thresholded metrics.
    pub fn evaluate(self, input: MetricInput<'_>, scheme: &LabelScheme) -> Result<f64> {
        match self {
            Metric::Auc => auc(input),
            Metric::Accuracy | Metric::F1 => Ok(binary_metric(self, input, scheme)),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let wanted = s.trim().to_ascii_lowercase();
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == wanted)
            .ok_or_else(|| Error::UnknownMetric(s.to_string()))
    }
}

/// Accuracy or positive-class F1 after thresholding scores. F1 is 0 when
/// there are no true positives.
///
/// # Panics
/// If `name` is `Metric::Auc`.
pub fn binary_metric(name: Metric, input: MetricInput<'_>, scheme: &LabelScheme) -> f64 {
    let (mut tp, mut fp, mut fn_, mut tn) = (0u64, 0u64, 0u64, 0u64);
    for (&truth, &score) in input.truth.iter().zip(input.scores) {
        match (truth, binarize(score, scheme)) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    match name {
        Metric::Accuracy => (tp + tn) as f64 / (tp + fp + fn_ + tn) as f64,
        Metric::F1 => {
            if tp == 0 {
                0.0
            } else {
                (2 * tp) as f64 / (2 * tp + fp + fn_) as f64
            }
        }
        Metric::Auc => panic!("auc is not a thresholded metric"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn input<'a>(truth: &'a [bool], scores: &'a [f64]) -> MetricInput<'a> {
        MetricInput::new(truth, scores).unwrap()
    }

    const T: bool = true;
    const F: bool = false;

    #[test]
    fn perfect_separation() {
        assert_eq!(
            auc(input(&[T, T, F, F], &[0.9, 0.8, 0.2, 0.1])).unwrap(),
            1.0
        );
    }

    #[test]
    fn constant_scores_give_half() {
        assert_eq!(auc(input(&[T, F, T, F, F], &[3.0; 5])).unwrap(), 0.5);
        assert_eq!(auc_bruteforce(input(&[T, F], &[0.3, 0.3])).unwrap(), 0.5);
    }

    #[test]
    fn three_of_four_pairs() {
        let i = input(&[T, F, T, F], &[0.9, 0.8, 0.7, 0.1]);
        assert_eq!(auc(i).unwrap(), 0.75);
        assert_eq!(auc_bruteforce(i).unwrap(), 0.75);
    }

    #[test]
    fn single_class_undefined() {
        assert!(matches!(
            auc(input(&[T, T], &[0.1, 0.2])),
            Err(Error::MetricUndefined(_))
        ));
        assert!(auc_bruteforce(input(&[F], &[0.1])).is_err());
    }

    #[test]
    fn input_validation() {
        assert!(MetricInput::new(&[T], &[]).is_err());
        assert!(MetricInput::new(&[], &[]).is_err());
        assert!(MetricInput::new(&[T], &[f64::NAN]).is_err());
    }

    #[test]
    fn accuracy_and_f1() {
        let s = LabelScheme::controversy();
        assert_eq!(
            binary_metric(Metric::Accuracy, input(&[T, F], &[2.0, -1.0]), &s),
            1.0
        );
        assert_eq!(
            binary_metric(Metric::F1, input(&[T, T], &[-1.0, -1.0]), &s),
            0.0
        );
        // predictions [1,1,0,0]: TP=1 FP=1 FN=1 TN=1
        let i = input(&[T, F, T, F], &[2.0, 1.0, -1.0, -1.0]);
        assert_eq!(binary_metric(Metric::Accuracy, i, &s), 0.5);
        assert_eq!(binary_metric(Metric::F1, i, &s), 0.5);
    }

    #[test]
    fn registry_lookup() {
        assert_eq!("AUC".parse::<Metric>().unwrap(), Metric::Auc);
        assert_eq!("f1".parse::<Metric>().unwrap(), Metric::F1);
        assert!(matches!(
            "map".parse::<Metric>(),
            Err(Error::UnknownMetric(_))
        ));
        let s = LabelScheme::controversy();
        let i = input(&[T, F], &[1.0, 0.0]);
        for m in Metric::ALL {
            assert_eq!(m.evaluate(i, &s).unwrap(), 1.0);
        }
    }
}
