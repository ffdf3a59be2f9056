//! Simulation of what inter-annotator disagreement implies for evaluation
//! scores.
//!
//! Multi-annotator label data goes in ([`label`]), generative truth and
//! prediction models are applied to it ([`models`], [`conflation`]), and a
//! Monte Carlo engine ([`simulate`]) reports percentile bands of a metric
//! ([`metrics`]) together with a verdict on whether a published score sits
//! above the human ceiling of the dataset. [`synth`] produces synthetic
//! datasets, including ones calibrated to a known conflation matrix.

pub mod cli;
pub mod conflation;
pub mod error;
pub mod label;
pub mod metrics;
pub mod models;
pub mod simulate;
pub mod synth;

pub use conflation::ConflationMatrix;
pub use error::{Error, Result};
pub use label::{Dataset, DatasetFormat, Document, LabelScheme};
pub use metrics::{Metric, MetricInput};
pub use models::{Assignment, FlipSpace, ModelContext, ModelSpec};
pub use simulate::{ClaimVerdict, SimulationConfig, SimulationReport, Verdict};
pub use synth::{AnnotatorCount, SynthConfig, SynthMode};
