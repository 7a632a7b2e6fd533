//! Cross-validation with plausible negative examples for evaluating the
//! text classifiers behind chatbots and other closed-domain assistants.
//!
//! Closed-domain classifiers face open-ended input: a useful evaluation has
//! to measure not only whether the right class wins, but whether the system
//! declines to answer things it was never trained on. This crate exploits a
//! shape that real intent datasets almost always have — a few large classes
//! and a long tail of tiny ones — by withholding selected low-population
//! classes from training and injecting their examples into the test set as
//! negative examples whose correct handling is abstention.
//!
//! On top of that split the crate provides the surrounding workflow:
//! retry aggregation, a carefulness score for the confidence threshold,
//! pair-confusion ranking for data-quality triage, model-agnostic engine
//! comparison over a subprocess protocol, and JSON/markdown/CSV reporting.
//! The `nexcv` binary in this workspace exposes all of it on the command
//! line; the `book/` directory holds the long-form guide.
//!
//! ```
//! use nexcv::{
//!     generate_synthetic, run_nexcv, BaselineClassifier, Classifier, NexCvConfig,
//!     SelectionMode, SynthSpec,
//! };
//!
//! # fn main() -> nexcv::Result<()> {
//! let dataset = generate_synthetic(&SynthSpec {
//!     n_large: 3,
//!     large_size: 30,
//!     n_small: 6,
//!     small_size_range: (4, 6),
//!     seed: 7,
//!     ..SynthSpec::default()
//! })?;
//!
//! let config = NexCvConfig {
//!     mode: SelectionMode::Proportional { p: 0.15 },
//!     retries: 3,
//!     seed: 42,
//!     ..NexCvConfig::default()
//! };
//! let report = run_nexcv(&dataset, &config, &|| {
//!     Ok(Box::new(BaselineClassifier::default()) as Box<dyn Classifier>)
//! })?;
//!
//! assert_eq!(report.retries.len(), 3);
//! println!(
//!     "accuracy {:.3} ± {:.3}",
//!     report.aggregate.accuracy.mean, report.aggregate.accuracy.std
//! );
//! # Ok(())
//! # }
//! ```

pub mod classifier;
pub mod dataset;
mod error;
pub mod evaluation;
pub mod partition;
pub mod report;

pub use classifier::{
    consistency_check, serve_protocol, tokenize, BaselineClassifier, BaselineHyper, BaselineModel,
    Classifier, ClassifierFactory, ConsistencyCheck, ConsistencyReport, EngineCommand,
    ExternalClassifier, Prediction,
};
pub use dataset::{
    class_stats, generate_synthetic, load_dataset, save_dataset, validate_dataset, write_dataset,
    ClassStats, DataFormat, Dataset, DatasetIssue, LabeledExample, SynthSpec,
};
pub use error::{Error, Result};
pub use evaluation::{
    canonical_settings, carefulness, compare, evaluate_split, pair_ranking, run_nexcv,
    validate_metric, AccuracyRange, AggregateMetrics, ComparisonReport, ConfusionMatrix,
    EngineOutcome, EvaluationReport, MeanStd, MetricValidation, Outcome, PairExample, PairScore,
    RetryMetrics, SettingSummary, SplitEvaluation, ABSTAIN_LABEL,
};
pub use partition::{
    kfold_splits, provision, select_cutoff, select_proportional, ClassPartition, DataSplit, Gold,
    NexCvConfig, SelectionMode, TestItem, OUT_OF_SCOPE_LABEL,
};
pub use report::{
    emit_csv, render_json, render_markdown, ComparisonDocument, CsvKind, EvaluationDocument,
    ReportDocument, SCHEMA_VERSION,
};
