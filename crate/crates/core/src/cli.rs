//! Command-line interface.
//!
//! Every subcommand computes its full result before touching the filesystem,
//! then writes all output files through temporary files renamed into place.
//! A failing invocation leaves no output files behind.

use std::fs;
use std::io::{BufReader, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::conflation::{learn_conflation, ConflationMatrix};
use crate::error::{Error, Result};
use crate::label::{agreement_probability, load_dataset_file, Dataset, DatasetFormat, LabelScheme};
use crate::metrics::Metric;
use crate::models::{FlipSpace, ModelSpec};
use crate::simulate::{
    assess_claim, markdown_table, preset, read_samples, run_simulation_with_jobs, run_suite,
    write_samples, Jobs, SimulationConfig, SimulationRun, DEFAULT_TRIALS,
};
use crate::synth::{
    generate, AnnotatorCount, SynthConfig, SynthMode, DEFAULT_ANNOTATORS, DEFAULT_DOCS,
};

#[derive(Debug, Parser)]
#[command(
    name = "agreesim",
    version,
    about = "Simulate what annotator disagreement implies for evaluation scores"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one (system model, truth model) simulation and report percentiles
    Simulate(SimulateArgs),
    /// Run a preset or configured list of simulations and print a table
    Suite(SuiteArgs),
    /// Print the pooled pairwise agreement of a dataset
    Agreement(AgreementArgs),
    /// Learn and print the label conflation matrix of a dataset
    Conflation(ConflationArgs),
    /// Place a published score within a simulated sample
    Assess(AssessArgs),
    /// Generate a synthetic multi-annotator dataset
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    /// Dataset file (jsonl, or delimiter-separated with doc_id first)
    pub dataset: PathBuf,

    /// Dataset format: jsonl, tsv or csv [default: from file extension]
    #[arg(long)]
    pub format: Option<String>,

    /// Label scheme JSON file; overrides a jsonl scheme header
    #[arg(long)]
    pub scheme: Option<PathBuf>,

    /// Override the scheme's positive-class threshold
    #[arg(long)]
    pub threshold: Option<f64>,
}

impl DatasetArgs {
    fn load(&self) -> Result<Dataset> {
        let format = match &self.format {
            Some(f) => f.parse()?,
            None => DatasetFormat::from_path(&self.dataset),
        };
        let scheme = self
            .scheme
            .as_ref()
            .map(LabelScheme::from_json_file)
            .transpose()?;
        let dataset = load_dataset_file(&self.dataset, format, scheme.as_ref())?;
        match self.threshold {
            Some(t) => {
                let scheme = dataset.scheme().with_threshold(t)?;
                Dataset::new(scheme, dataset.documents().to_vec())
            }
            None => Ok(dataset),
        }
    }
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Conflation matrix JSON file [default: learned from the dataset]
    #[arg(long)]
    pub matrix: Option<PathBuf>,

    /// Add-alpha smoothing applied to conflation rows
    #[arg(long, default_value_t = 0.0)]
    pub smoothing: f64,

    /// Space in which flip models operate: binary or ordinal
    #[arg(long, default_value = "binary")]
    pub flip_space: String,

    /// Worker threads; results do not depend on this
    #[arg(long)]
    pub jobs: Option<usize>,
}

impl ModelArgs {
    /// Loads `--matrix` if given, otherwise learns one from `dataset` when
    /// `needed`. Learning failures are reported only if `required`.
    fn resolve_matrix(
        &self,
        dataset: &Dataset,
        needed: bool,
        required: bool,
    ) -> Result<Option<ConflationMatrix>> {
        let matrix = match &self.matrix {
            Some(path) => Some(ConflationMatrix::from_json_file(path)?),
            None if needed => match learn_conflation(dataset) {
                Ok(m) => Some(m),
                Err(Error::ConflationUnlearnable) if !required => None,
                Err(Error::ConflationUnlearnable) => return Err(Error::Config(
                    "conflate model needs --matrix: the dataset has no multi-annotator documents"
                        .into(),
                )),
                Err(e) => return Err(e),
            },
            None => None,
        };
        matrix.map(|m| m.with_smoothing(self.smoothing)).transpose()
    }

    fn jobs(&self) -> Jobs {
        Jobs(self.jobs)
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub data: DatasetArgs,

    #[command(flatten)]
    pub models: ModelArgs,

    /// System (prediction) model, e.g. sample or conflate(sample)
    #[arg(long)]
    pub system: String,

    /// Truth model, e.g. average or flip(0.643,truth)
    #[arg(long)]
    pub truth: String,

    /// Metric: auc, accuracy or f1
    #[arg(long, default_value = "auc")]
    pub metric: String,

    /// Number of Monte Carlo trials
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    pub trials: usize,

    /// Master seed; every trial stream derives from it
    #[arg(long)]
    pub seed: u64,

    /// Percentiles to report, comma separated
    #[arg(long, value_delimiter = ',', default_value = "5,50,95")]
    pub percentiles: Vec<f64>,

    /// Write the JSON report here
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Write the sorted metric samples here (one per line)
    #[arg(long)]
    pub samples_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SuiteArgs {
    #[command(flatten)]
    pub data: DatasetArgs,

    #[command(flatten)]
    pub models: ModelArgs,

    /// Built-in configuration set (table2)
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    pub preset: Option<String>,

    /// JSON list of {"system", "truth", optional "metric", "percentiles", "flip_space", "trials", "seed"}
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Trials per configuration
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    pub trials: usize,

    /// Master seed shared by all configurations
    #[arg(long)]
    pub seed: u64,

    /// Write the JSON list of reports here
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Write the markdown table here
    #[arg(long)]
    pub markdown: Option<PathBuf>,

    /// Write row<N>.samples files into this directory
    #[arg(long)]
    pub samples_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AgreementArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
}

#[derive(Debug, Args)]
pub struct ConflationArgs {
    #[command(flatten)]
    pub data: DatasetArgs,

    /// Add-alpha smoothing stored with the matrix
    #[arg(long, default_value_t = 0.0)]
    pub smoothing: f64,

    /// Write the matrix JSON here
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AssessArgs {
    /// Published metric value to assess
    #[arg(long, allow_negative_numbers = true)]
    pub score: f64,

    /// Samples file written by simulate or suite
    #[arg(long)]
    pub samples: PathBuf,

    /// Lower edge of the band, as a percentile
    #[arg(long, default_value_t = 5.0)]
    pub low: f64,

    /// Upper edge of the band, as a percentile
    #[arg(long, default_value_t = 95.0)]
    pub high: f64,

    /// Write the verdict JSON here
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Generator: calibrated or dirichlet
    #[arg(long, default_value = "calibrated")]
    pub mode: String,

    /// Number of documents
    #[arg(long, default_value_t = DEFAULT_DOCS)]
    pub docs: usize,

    /// Annotators per document: N or MIN-MAX
    #[arg(long, default_value_t = DEFAULT_ANNOTATORS.to_string())]
    pub annotators: String,

    /// Conflation matrix JSON for calibrated mode [default: built-in controversy counts]
    #[arg(long)]
    pub matrix: Option<PathBuf>,

    /// Dirichlet concentrations, comma separated, ascending label order
    #[arg(long, value_delimiter = ',')]
    pub alpha: Option<Vec<f64>>,

    /// Label scheme JSON for dirichlet mode [default: controversy scheme]
    #[arg(long)]
    pub scheme: Option<PathBuf>,

    /// Generator seed
    #[arg(long)]
    pub seed: u64,

    /// Write the jsonl dataset here [default: stdout]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Output files staged in memory until the whole command has succeeded.
#[derive(Default)]
struct Outputs(Vec<(PathBuf, Vec<u8>)>);

impl Outputs {
    fn add(&mut self, path: impl Into<PathBuf>, bytes: impl Into<Vec<u8>>) {
        self.0.push((path.into(), bytes.into()));
    }

    fn commit(self) -> Result<()> {
        let mut staged = Vec::with_capacity(self.0.len());
        for (path, bytes) in self.0 {
            let dir = match path.parent() {
                Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
                _ => PathBuf::from("."),
            };
            let mut tmp = tempfile::NamedTempFile::new_in(&dir)?;
            tmp.write_all(&bytes)?;
            tmp.as_file().sync_all()?;
            staged.push((tmp, path));
        }
        for (tmp, path) in staged {
            tmp.persist(&path).map_err(|e| Error::Io(e.error))?;
        }
        Ok(())
    }
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Simulate(args) => cmd_simulate(args, out),
        Command::Suite(args) => cmd_suite(args, out),
        Command::Agreement(args) => cmd_agreement(args, out),
        Command::Conflation(args) => cmd_conflation(args, out),
        Command::Assess(args) => cmd_assess(args, out),
        Command::Synth(args) => cmd_synth(args, out),
    }
}

fn cmd_simulate(args: SimulateArgs, out: &mut dyn Write) -> Result<()> {
    let system: ModelSpec = args.system.parse()?;
    let truth: ModelSpec = args.truth.parse()?;
    let config = SimulationConfig {
        system_model: system,
        truth_model: truth,
        metric: args.metric.parse()?,
        n_trials: args.trials,
        master_seed: args.seed,
        percentiles: args.percentiles.clone(),
        flip_space: args.models.flip_space.parse()?,
    };
    config.validate()?;
    let dataset = args.data.load()?;
    let needs_matrix =
        config.system_model.uses_conflation() || config.truth_model.uses_conflation();
    let matrix = args.models.resolve_matrix(&dataset, needs_matrix, true)?;
    let run = run_simulation_with_jobs(&config, &dataset, matrix.as_ref(), args.models.jobs())?;

    let mut outputs = Outputs::default();
    if let Some(path) = &args.out {
        outputs.add(path, report_json(&run));
    }
    if let Some(path) = &args.samples_out {
        outputs.add(path, samples_bytes(&run.samples));
    }
    outputs.commit()?;
    writeln!(out, "{}", run.report.summary_line())?;
    Ok(())
}

fn report_json(run: &SimulationRun) -> String {
    let mut text = run.report.to_json_pretty();
    text.push('\n');
    text
}

fn samples_bytes(samples: &[f64]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_samples(samples, &mut buf).expect("writing to a Vec cannot fail");
    buf
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SuiteEntry {
    system: ModelSpec,
    truth: ModelSpec,
    #[serde(default)]
    metric: Option<Metric>,
    #[serde(default)]
    percentiles: Option<Vec<f64>>,
    #[serde(default)]
    flip_space: Option<FlipSpace>,
    #[serde(default)]
    trials: Option<usize>,
    #[serde(default)]
    seed: Option<u64>,
}

fn suite_configs(args: &SuiteArgs) -> Result<Vec<SimulationConfig>> {
    let flip_space: FlipSpace = args.models.flip_space.parse()?;
    let configs: Vec<SimulationConfig> = match (&args.preset, &args.config) {
        (Some(name), _) => preset(name, args.trials, args.seed)?
            .into_iter()
            .map(|c| SimulationConfig { flip_space, ..c })
            .collect(),
        (None, Some(path)) => {
            let file = fs::File::open(path)?;
            let entries: Vec<SuiteEntry> = serde_json::from_reader(BufReader::new(file))?;
            entries
                .into_iter()
                .map(|e| {
                    let mut c =
                        SimulationConfig::new(e.system, e.truth, e.seed.unwrap_or(args.seed))
                            .with_trials(e.trials.unwrap_or(args.trials));
                    c.metric = e.metric.unwrap_or(Metric::Auc);
                    if let Some(p) = e.percentiles {
                        c.percentiles = p;
                    }
                    c.flip_space = e.flip_space.unwrap_or(flip_space);
                    c
                })
                .collect()
        }
        (None, None) => {
            return Err(Error::Config(
                "either --preset or --config is required".into(),
            ))
        }
    };
    for c in &configs {
        c.validate()?;
    }
    Ok(configs)
}

fn cmd_suite(args: SuiteArgs, out: &mut dyn Write) -> Result<()> {
    let configs = suite_configs(&args)?;
    let dataset = args.data.load()?;
    let needs_matrix = configs
        .iter()
        .any(|c| c.system_model.uses_conflation() || c.truth_model.uses_conflation());
    let matrix = args.models.resolve_matrix(&dataset, needs_matrix, false)?;
    let runs = run_suite(&configs, &dataset, matrix.as_ref(), args.models.jobs());

    let reports: Vec<Result<_>> = runs
        .iter()
        .map(|r| match r {
            Ok(run) => Ok(run.report.clone()),
            Err(e) => Err(Error::Config(e.to_string())),
        })
        .collect();
    let table = markdown_table(&reports);
    write!(out, "{table}")?;

    let failed: Vec<(usize, &Error)> = runs
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.as_ref().err().map(|e| (i + 1, e)))
        .collect();
    if !failed.is_empty() {
        for (row, err) in &failed {
            eprintln!("row {row}: {err}");
        }
        return Err(Error::SuiteFailed {
            failed: failed.len(),
            total: runs.len(),
        });
    }

    let runs: Vec<SimulationRun> = runs.into_iter().map(|r| r.expect("checked")).collect();
    let mut outputs = Outputs::default();
    if let Some(path) = &args.out {
        let reports: Vec<_> = runs.iter().map(|r| &r.report).collect();
        let mut text = serde_json::to_string_pretty(&reports)?;
        text.push('\n');
        outputs.add(path, text);
    }
    if let Some(path) = &args.markdown {
        outputs.add(path, table);
    }
    if let Some(dir) = &args.samples_dir {
        fs::create_dir_all(dir)?;
        for (i, run) in runs.iter().enumerate() {
            outputs.add(
                dir.join(format!("row{}.samples", i + 1)),
                samples_bytes(&run.samples),
            );
        }
    }
    outputs.commit()
}

fn cmd_agreement(args: AgreementArgs, out: &mut dyn Write) -> Result<()> {
    let dataset = args.data.load()?;
    writeln!(out, "{}", agreement_probability(&dataset)?)?;
    Ok(())
}

fn cmd_conflation(args: ConflationArgs, out: &mut dyn Write) -> Result<()> {
    let dataset = args.data.load()?;
    let matrix = learn_conflation(&dataset)?.with_smoothing(args.smoothing)?;
    let mut outputs = Outputs::default();
    if let Some(path) = &args.out {
        let mut text = matrix.to_json_pretty();
        text.push('\n');
        outputs.add(path, text);
    }
    outputs.commit()?;
    write!(out, "{matrix}")?;
    if let Some(p) = matrix.agreement() {
        writeln!(out, "agreement: {p}")?;
    }
    Ok(())
}

fn cmd_assess(args: AssessArgs, out: &mut dyn Write) -> Result<()> {
    if !(0.0..=100.0).contains(&args.low)
        || !(0.0..=100.0).contains(&args.high)
        || args.low > args.high
    {
        return Err(Error::Config(format!(
            "invalid band [{}, {}]",
            args.low, args.high
        )));
    }
    let file = fs::File::open(&args.samples)?;
    let samples = read_samples(BufReader::new(file))?;
    let verdict = assess_claim(args.score, &samples, (args.low, args.high))?;
    let mut outputs = Outputs::default();
    if let Some(path) = &args.out {
        let mut text = serde_json::to_string_pretty(&verdict)?;
        text.push('\n');
        outputs.add(path, text);
    }
    outputs.commit()?;
    writeln!(
        out,
        "score={} percentile_rank={:.2} band=[{}, {}] verdict={}",
        verdict.score,
        verdict.percentile_rank,
        args.low,
        args.high,
        verdict.verdict.as_str()
    )?;
    Ok(())
}

fn parse_annotators(text: &str) -> Result<AnnotatorCount> {
    let bad = || {
        Error::Config(format!(
            "invalid --annotators `{text}` (expected N or MIN-MAX)"
        ))
    };
    match text.split_once('-') {
        Some((lo, hi)) => Ok(AnnotatorCount::Uniform {
            min: lo.trim().parse().map_err(|_| bad())?,
            max: hi.trim().parse().map_err(|_| bad())?,
        }),
        None => Ok(AnnotatorCount::Fixed(
            text.trim().parse().map_err(|_| bad())?,
        )),
    }
}

fn cmd_synth(args: SynthArgs, out: &mut dyn Write) -> Result<()> {
    let annotators = parse_annotators(&args.annotators)?;
    let (scheme, mode) = match args.mode.trim().to_ascii_lowercase().as_str() {
        "calibrated" | "matrix_calibrated" => {
            let matrix = match &args.matrix {
                Some(path) => ConflationMatrix::from_json_file(path)?,
                None => ConflationMatrix::controversy_reference(),
            };
            (matrix.scheme().clone(), SynthMode::MatrixCalibrated(matrix))
        }
        "dirichlet" => {
            let scheme = match &args.scheme {
                Some(path) => LabelScheme::from_json_file(path)?,
                None => LabelScheme::controversy(),
            };
            let alpha = args
                .alpha
                .clone()
                .unwrap_or_else(|| vec![1.0; scheme.len()]);
            (scheme, SynthMode::Dirichlet(alpha))
        }
        other => {
            return Err(Error::Config(format!(
                "unknown synth mode `{other}` (expected calibrated or dirichlet)"
            )))
        }
    };
    let dataset = generate(&SynthConfig {
        scheme,
        n_docs: args.docs,
        annotators,
        mode,
        seed: args.seed,
    })?;
    let text = dataset.to_jsonl_string();
    match &args.out {
        Some(path) => {
            let mut outputs = Outputs::default();
            outputs.add(path, text);
            outputs.commit()?;
            writeln!(
                out,
                "wrote {} documents to {}",
                dataset.len(),
                path.display()
            )?;
        }
        None => out.write_all(text.as_bytes())?,
    }
    Ok(())
}
