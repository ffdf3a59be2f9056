//! Monte Carlo engine: repeated (system, truth) model draws scored by a
//! metric, summarized as percentile bands.
//!
//! Trial `t` draws all of its randomness from a ChaCha8 stream keyed by
//! `(master_seed, t)`, so results do not depend on how trials are scheduled
//! across threads.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::conflation::ConflationMatrix;
use crate::error::{Error, Result};
use crate::label::Dataset;
use crate::metrics::{Metric, MetricInput};
use crate::models::{apply_validated, FlipSpace, ModelContext, ModelSpec};

pub const DEFAULT_TRIALS: usize = 10_000;
pub const DEFAULT_PERCENTILES: [f64; 3] = [5.0, 50.0, 95.0];
pub const DEFAULT_BAND: (f64, f64) = (5.0, 95.0);
pub const PRESETS: [&str; 1] = ["table2"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub system_model: ModelSpec,
    pub truth_model: ModelSpec,
    pub metric: Metric,
    pub n_trials: usize,
    pub master_seed: u64,
    pub percentiles: Vec<f64>,
    #[serde(default)]
    pub flip_space: FlipSpace,
}

impl SimulationConfig {
    pub fn new(system_model: ModelSpec, truth_model: ModelSpec, master_seed: u64) -> Self {
        Self {
            system_model,
            truth_model,
            metric: Metric::Auc,
            n_trials: DEFAULT_TRIALS,
            master_seed,
            percentiles: DEFAULT_PERCENTILES.to_vec(),
            flip_space: FlipSpace::Binary,
        }
    }

    pub fn with_trials(mut self, n_trials: usize) -> Self {
        self.n_trials = n_trials;
        self
    }

    pub fn with_metric(mut self, metric: Metric) -> Self {
        self.metric = metric;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trials == 0 {
            return Err(Error::Config("n_trials must be at least 1".into()));
        }
        if self.percentiles.is_empty() {
            return Err(Error::Config("at least one percentile is required".into()));
        }
        if self.percentiles.iter().any(|&q| !(q > 0.0 && q < 100.0)) {
            return Err(Error::Config("percentiles must lie in (0, 100)".into()));
        }
        if self.percentiles.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(
                "percentiles must be strictly increasing".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PercentileValue {
    pub percentile: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub config: SimulationConfig,
    pub percentiles: Vec<PercentileValue>,
    pub mean: f64,
    pub n_valid: usize,
    pub n_undefined: usize,
    /// SHA-256 over the little-endian bits of the sorted samples.
    pub samples_digest: String,
}

impl SimulationReport {
    pub fn value_at(&self, percentile: f64) -> Option<f64> {
        self.percentiles
            .iter()
            .find(|p| p.percentile == percentile)
            .map(|p| p.value)
    }

    pub fn median(&self) -> Option<f64> {
        self.value_at(50.0)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }

    /// One line: models, metric, and each percentile.
    pub fn summary_line(&self) -> String {
        let mut line = format!(
            "system={} truth={} {}:",
            self.config.system_model, self.config.truth_model, self.config.metric
        );
        for p in &self.percentiles {
            let _ = write!(line, " p{}={:.3}", p.percentile, p.value);
        }
        let _ = write!(
            line,
            " mean={:.3} valid={}/{}",
            self.mean,
            self.n_valid,
            self.n_valid + self.n_undefined
        );
        line
    }
}

/// A report plus the sorted metric samples it summarizes.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationRun {
    pub report: SimulationReport,
    pub samples: Vec<f64>,
}

/// Independent random stream for one trial.
pub fn trial_rng(master_seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trial);
    rng
}

/// Thread count for the engine. `None` uses the rayon default.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Jobs(pub Option<usize>);

impl Jobs {
    fn install<T: Send>(self, f: impl FnOnce() -> T + Send) -> Result<T> {
        match self.0 {
            None => Ok(f()),
            Some(n) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(n.max(1))
                    .build()
                    .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
                Ok(pool.install(f))
            }
        }
    }
}

fn run_trial(
    config: &SimulationConfig,
    ctx: &ModelContext<'_>,
    trial: usize,
    truth_buf: &mut Vec<bool>,
) -> Option<f64> {
    let scheme = ctx.dataset.scheme();
    let mut rng = trial_rng(config.master_seed, trial as u64);
    let truth = apply_validated(&config.truth_model, ctx, &mut rng);
    let system = apply_validated(&config.system_model, ctx, &mut rng);
    truth_buf.clear();
    truth_buf.extend(truth.values.iter().map(|&v| scheme.binarize(v)));
    let input = MetricInput::new(truth_buf, &system.values).ok()?;
    config.metric.evaluate(input, scheme).ok()
}

pub fn run_simulation(
    config: &SimulationConfig,
    dataset: &Dataset,
    matrix: Option<&ConflationMatrix>,
) -> Result<SimulationRun> {
    run_simulation_with_jobs(config, dataset, matrix, Jobs::default())
}

pub fn run_simulation_with_jobs(
    config: &SimulationConfig,
    dataset: &Dataset,
    matrix: Option<&ConflationMatrix>,
    jobs: Jobs,
) -> Result<SimulationRun> {
    config.validate()?;
    let ctx = ModelContext::new(dataset)
        .with_matrix(matrix)
        .with_flip_space(config.flip_space);
    config.truth_model.validate(&ctx)?;
    config.system_model.validate(&ctx)?;

    let outcomes: Vec<Option<f64>> = jobs.install(|| {
        (0..config.n_trials)
            .into_par_iter()
            .map_init(Vec::new, |buf, t| run_trial(config, &ctx, t, buf))
            .collect()
    })?;

    let mut samples: Vec<f64> = outcomes.iter().flatten().copied().collect();
    let n_valid = samples.len();
    let n_undefined = config.n_trials - n_valid;
    if n_valid == 0 {
        return Err(Error::AllTrialsUndefined(config.n_trials));
    }
    samples.sort_unstable_by(f64::total_cmp);

    let percentiles = config
        .percentiles
        .iter()
        .map(|&q| PercentileValue {
            percentile: q,
            value: percentile_sorted(&samples, q),
        })
        .collect();
    let mean = samples.iter().sum::<f64>() / n_valid as f64;
    let report = SimulationReport {
        config: config.clone(),
        percentiles,
        mean,
        n_valid,
        n_undefined,
        samples_digest: samples_digest(&samples),
    };
    Ok(SimulationRun { report, samples })
}

/// Runs every config in order. A failing config does not stop the others.
pub fn run_suite(
    configs: &[SimulationConfig],
    dataset: &Dataset,
    matrix: Option<&ConflationMatrix>,
    jobs: Jobs,
) -> Vec<Result<SimulationRun>> {
    configs
        .iter()
        .map(|c| run_simulation_with_jobs(c, dataset, matrix, jobs))
        .collect()
}

/// Named configuration sets. `table2` is the six standard pairings, from
/// most optimistic to most pessimistic.
pub fn preset(name: &str, n_trials: usize, master_seed: u64) -> Result<Vec<SimulationConfig>> {
    let rows: &[(&str, &str)] = match name.trim().to_ascii_lowercase().as_str() {
        "table2" => &[
            ("sample", "average"),
            ("sample", "max"),
            ("sample", "sample"),
            ("conflate(truth)", "sample"),
            ("conflate(sample)", "conflate(sample)"),
            ("flip(0.643,truth)", "average"),
        ],
        _ => {
            return Err(Error::Config(format!(
                "unknown preset `{name}` (valid presets: {})",
                PRESETS.join(", ")
            )))
        }
    };
    Ok(rows
        .iter()
        .map(|(system, truth)| {
            SimulationConfig::new(
                system.parse().expect("preset spec parses"),
                truth.parse().expect("preset spec parses"),
                master_seed,
            )
            .with_trials(n_trials)
        })
        .collect())
}

pub fn samples_digest(sorted: &[f64]) -> String {
    let mut hasher = Sha256::new();
    for s in sorted {
        hasher.update(s.to_bits().to_le_bytes());
    }
    hex::encode(hasher.finalize())
}

/// Nearest-rank percentile of an unsorted sample.
pub fn percentile(samples: &[f64], q: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    if !(q > 0.0 && q < 100.0) {
        return Err(Error::Config(format!("percentile {q} outside (0, 100)")));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    Ok(percentile_sorted(&sorted, q))
}

/// Nearest rank on an ascending sample: index `ceil(q/100 * n) - 1`.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let rank = (q * n as f64 / 100.0).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// Under the simulated band: the score leaves room for believable gains.
    BelowBand,
    /// Inside the band: indistinguishable from the simulated human ceiling.
    WithinBand,
    /// Over the band: not believable without more labels.
    AboveBand,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::BelowBand => "below_band",
            Verdict::WithinBand => "within_band",
            Verdict::AboveBand => "above_band",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClaimVerdict {
    pub score: f64,
    pub percentile_rank: f64,
    pub band: (f64, f64),
    pub verdict: Verdict,
}

/// Places `score` within a sample. The rank counts samples strictly below
/// and half of those equal, as a percentage.
pub fn assess_claim(score: f64, samples: &[f64], band: (f64, f64)) -> Result<ClaimVerdict> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let below = samples.iter().filter(|&&s| s < score).count() as f64;
    let equal = samples.iter().filter(|&&s| s == score).count() as f64;
    let percentile_rank = (below + 0.5 * equal) / samples.len() as f64 * 100.0;
    let verdict = if percentile_rank < band.0 {
        Verdict::BelowBand
    } else if percentile_rank > band.1 {
        Verdict::AboveBand
    } else {
        Verdict::WithinBand
    };
    Ok(ClaimVerdict {
        score,
        percentile_rank,
        band,
        verdict,
    })
}

/// One sample per line, ascending.
pub fn write_samples<W: Write>(sorted: &[f64], mut out: W) -> Result<()> {
    for s in sorted {
        writeln!(out, "{s}")?;
    }
    Ok(())
}

/// Reads a samples dump and returns it sorted.
pub fn read_samples<R: BufRead>(source: R) -> Result<Vec<f64>> {
    let mut samples = Vec::new();
    for (idx, line) in source.lines().enumerate() {
        let line = line?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        let value: f64 = text.parse().map_err(|e| Error::Parse {
            line: idx + 1,
            message: format!("sample `{text}`: {e}"),
        })?;
        if value.is_nan() {
            return Err(Error::Parse {
                line: idx + 1,
                message: "NaN sample".into(),
            });
        }
        samples.push(value);
    }
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    samples.sort_unstable_by(f64::total_cmp);
    Ok(samples)
}

fn ordinal(q: f64) -> String {
    if q.fract() != 0.0 {
        return format!("{q}th");
    }
    let n = q as u64;
    let suffix = match (n % 10, n % 100) {
        (_, 11..=13) => "th",
        (1, _) => "st",
        (2, _) => "nd",
        (3, _) => "rd",
        _ => "th",
    };
    format!("{n}{suffix}")
}

/// Markdown table with columns `#`, system model, truth model and one column
/// per percentile. Failed rows show `n/a`.
pub fn markdown_table(rows: &[Result<SimulationReport>]) -> String {
    let percentiles: Vec<f64> = rows
        .iter()
        .find_map(|r| r.as_ref().ok())
        .map(|r| r.config.percentiles.clone())
        .unwrap_or_else(|| DEFAULT_PERCENTILES.to_vec());
    let mut out = String::from("| # | System Model | Truth Model |");
    for &q in &percentiles {
        let _ = write!(out, " {} |", ordinal(q));
    }
    out.push_str("\n|---|---|---|");
    for _ in &percentiles {
        out.push_str("---:|");
    }
    out.push('\n');
    for (i, row) in rows.iter().enumerate() {
        match row {
            Ok(report) => {
                let _ = write!(
                    out,
                    "| {} | {} | {} |",
                    i + 1,
                    report.config.system_model.title(),
                    report.config.truth_model.title()
                );
                for &q in &percentiles {
                    match report.value_at(q) {
                        Some(v) => {
                            let _ = write!(out, " {v:.3} |");
                        }
                        None => out.push_str(" n/a |"),
                    }
                }
            }
            Err(_) => {
                let _ = write!(out, "| {} | n/a | n/a |", i + 1);
                for _ in &percentiles {
                    out.push_str(" n/a |");
                }
            }
        }
        out.push('\n');
    }
    out
}
