//! Rendering evaluation and comparison results to JSON, markdown and CSV.
//!
//! The JSON layout is pinned by `schema/report.schema.json` at the
//! repository root; that file is the normative definition. All numbers are
//! rounded to six decimal places before serialization so reports diff
//! stably across platforms, and an undefined carefulness is `null`, never
//! `0` — a zero would claim "never rightly abstained", which is a different
//! statement than "never abstained at all".

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{
    AggregateMetrics, ComparisonReport, EvaluationReport, MeanStd, SettingSummary,
};
use crate::partition::{NexCvConfig, SelectionMode};

pub const SCHEMA_VERSION: &str = "1";

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

fn now_rfc3339() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeDoc {
    pub kind: String,
    #[serde(rename = "K", skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(rename = "P", skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
}

impl From<SelectionMode> for ModeDoc {
    fn from(mode: SelectionMode) -> Self {
        match mode {
            SelectionMode::Cutoff { k } => Self {
                kind: "cutoff".into(),
                k: Some(k),
                p: None,
            },
            SelectionMode::Proportional { p } => Self {
                kind: "proportional".into(),
                k: None,
                p: Some(round6(p)),
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfigDoc {
    pub mode: ModeDoc,
    pub t: f64,
    pub retries: usize,
    pub threshold: f64,
    pub seed: u64,
}

impl From<&NexCvConfig> for ConfigDoc {
    fn from(config: &NexCvConfig) -> Self {
        Self {
            mode: config.mode.into(),
            t: round6(config.test_fraction),
            retries: config.retries,
            threshold: round6(config.confidence_threshold),
            seed: config.seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartitionDoc {
    pub small: Vec<String>,
    pub large: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RetryDoc {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub micro_f1: f64,
    pub carefulness: Option<f64>,
    pub train_size: usize,
    pub test_size: usize,
    pub negatives_in_test: usize,
    pub fit_ms: f64,
    pub predict_ms: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeanStdDoc {
    pub mean: f64,
    pub std: f64,
}

impl From<MeanStd> for MeanStdDoc {
    fn from(m: MeanStd) -> Self {
        Self {
            mean: round6(m.mean),
            std: round6(m.std),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggregateDoc {
    pub accuracy: MeanStdDoc,
    pub macro_f1: MeanStdDoc,
    pub micro_f1: MeanStdDoc,
    pub carefulness: Option<MeanStdDoc>,
}

impl From<&AggregateMetrics> for AggregateDoc {
    fn from(a: &AggregateMetrics) -> Self {
        Self {
            accuracy: a.accuracy.into(),
            macro_f1: a.macro_f1.into(),
            micro_f1: a.micro_f1.into(),
            carefulness: a.carefulness.map(Into::into),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfusionCellDoc {
    pub gold: String,
    pub predicted: String,
    pub count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairDoc {
    pub a: String,
    pub b: String,
    pub score: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExampleDoc {
    pub pair: [String; 2],
    pub text: String,
    pub gold: String,
    pub guess: String,
    pub confidence: f64,
}

/// The serializable form of an [`EvaluationReport`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationDocument {
    pub schema_version: String,
    pub kind: String,
    pub produced_at: String,
    pub dataset_name: String,
    pub config: ConfigDoc,
    pub partition: PartitionDoc,
    pub retries: Vec<RetryDoc>,
    pub aggregate: AggregateDoc,
    pub confusion: Vec<ConfusionCellDoc>,
    pub pairs: Vec<PairDoc>,
    pub examples: Vec<ExampleDoc>,
}

impl EvaluationDocument {
    pub fn from_report(report: &EvaluationReport) -> Self {
        Self {
            schema_version: SCHEMA_VERSION.into(),
            kind: "evaluation".into(),
            produced_at: now_rfc3339(),
            dataset_name: report.dataset_name.clone(),
            config: ConfigDoc::from(&report.config),
            partition: PartitionDoc {
                small: report.partition.small.iter().cloned().collect(),
                large: report.partition.large.iter().cloned().collect(),
            },
            retries: report
                .retries
                .iter()
                .map(|r| RetryDoc {
                    accuracy: round6(r.accuracy),
                    macro_f1: round6(r.macro_f1),
                    micro_f1: round6(r.micro_f1),
                    carefulness: r.carefulness.map(round6),
                    train_size: r.train_size,
                    test_size: r.test_size,
                    negatives_in_test: r.negatives_in_test,
                    fit_ms: round6(r.fit_ms),
                    predict_ms: round6(r.predict_ms),
                })
                .collect(),
            aggregate: AggregateDoc::from(&report.aggregate),
            confusion: report
                .confusion
                .cells()
                .map(|(gold, predicted, count)| ConfusionCellDoc {
                    gold: gold.to_string(),
                    predicted: predicted.to_string(),
                    count,
                })
                .collect(),
            pairs: report
                .pairs
                .iter()
                .map(|p| PairDoc {
                    a: p.a.clone(),
                    b: p.b.clone(),
                    score: p.score,
                })
                .collect(),
            examples: report
                .examples
                .iter()
                .map(|e| ExampleDoc {
                    pair: [e.a.clone(), e.b.clone()],
                    text: e.text.clone(),
                    gold: e.gold.clone(),
                    guess: e.guess.clone(),
                    confidence: round6(e.confidence),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaseConfigDoc {
    pub t: f64,
    pub retries: usize,
    pub threshold: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SettingDoc {
    pub setting: String,
    pub mode: ModeDoc,
    pub accuracy: MeanStdDoc,
    pub macro_f1: MeanStdDoc,
    pub micro_f1: MeanStdDoc,
    pub carefulness: Option<MeanStdDoc>,
}

impl From<&SettingSummary> for SettingDoc {
    fn from(s: &SettingSummary) -> Self {
        Self {
            setting: s.setting.clone(),
            mode: s.mode.into(),
            accuracy: s.accuracy.into(),
            macro_f1: s.macro_f1.into(),
            micro_f1: s.micro_f1.into(),
            carefulness: s.carefulness.map(Into::into),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AccuracyRangeDoc {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EngineDoc {
    pub name: String,
    pub ok: bool,
    pub error: Option<String>,
    pub accuracy: Option<AccuracyRangeDoc>,
    pub per_setting: Vec<SettingDoc>,
}

/// The serializable form of a [`ComparisonReport`]. The base configuration
/// echo omits the mode: every engine runs under all canonical settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonDocument {
    pub schema_version: String,
    pub kind: String,
    pub produced_at: String,
    pub dataset_name: String,
    pub config: BaseConfigDoc,
    pub engines: Vec<EngineDoc>,
}

impl ComparisonDocument {
    pub fn from_report(report: &ComparisonReport, base_config: &NexCvConfig) -> Self {
        Self {
            schema_version: SCHEMA_VERSION.into(),
            kind: "comparison".into(),
            produced_at: now_rfc3339(),
            dataset_name: report.dataset_name.clone(),
            config: BaseConfigDoc {
                t: round6(base_config.test_fraction),
                retries: base_config.retries,
                threshold: round6(base_config.confidence_threshold),
                seed: base_config.seed,
            },
            engines: report
                .engines
                .iter()
                .map(|e| EngineDoc {
                    name: e.name.clone(),
                    ok: e.succeeded(),
                    error: e.error.clone(),
                    accuracy: e.accuracy_range.map(|r| AccuracyRangeDoc {
                        min: round6(r.min),
                        mean: round6(r.mean),
                        max: round6(r.max),
                    }),
                    per_setting: e.settings.iter().map(Into::into).collect(),
                })
                .collect(),
        }
    }
}

/// Either serializable document.
#[derive(Debug, Clone)]
pub enum ReportDocument {
    Evaluation(EvaluationDocument),
    Comparison(ComparisonDocument),
}

/// Pretty-printed UTF-8 JSON with deterministic key order and a trailing
/// newline.
pub fn render_json(document: &ReportDocument) -> Result<String> {
    let mut json = match document {
        ReportDocument::Evaluation(doc) => serde_json::to_string_pretty(doc)?,
        ReportDocument::Comparison(doc) => serde_json::to_string_pretty(doc)?,
    };
    json.push('\n');
    Ok(json)
}

fn fmt6(x: f64) -> String {
    format!("{:.6}", round6(x))
}

fn fmt_opt(x: Option<&MeanStdDoc>) -> String {
    match x {
        Some(m) => format!("{} ± {}", fmt6(m.mean), fmt6(m.std)),
        None => "n/a".to_string(),
    }
}

/// Human-readable markdown. Evaluation reports lead with headline metrics
/// and the top three confused pairs; comparison reports lead with one
/// accuracy-range row per engine.
pub fn render_markdown(document: &ReportDocument) -> String {
    match document {
        ReportDocument::Evaluation(doc) => evaluation_markdown(doc),
        ReportDocument::Comparison(doc) => comparison_markdown(doc),
    }
}

fn mode_text(mode: &ModeDoc) -> String {
    match mode.kind.as_str() {
        "cutoff" => format!("cutoff K={}", mode.k.unwrap_or(0)),
        _ => format!("proportional P={}", mode.p.unwrap_or(0.0)),
    }
}

fn evaluation_markdown(doc: &EvaluationDocument) -> String {
    let mut out = String::new();
    out.push_str(&format!("# Evaluation report: {}\n\n", doc.dataset_name));
    out.push_str(&format!(
        "- mode: {}\n- test fraction: {}, retries: {}, threshold: {}, seed: {}\n",
        mode_text(&doc.config.mode),
        doc.config.t,
        doc.config.retries,
        doc.config.threshold,
        doc.config.seed
    ));
    out.push_str(&format!(
        "- negative-example candidate classes: {} of {}\n\n",
        doc.partition.small.len(),
        doc.partition.small.len() + doc.partition.large.len()
    ));

    out.push_str("## Headline metrics\n\n");
    out.push_str("| metric | mean | std |\n|---|---|---|\n");
    out.push_str(&format!(
        "| accuracy | {} | {} |\n",
        fmt6(doc.aggregate.accuracy.mean),
        fmt6(doc.aggregate.accuracy.std)
    ));
    out.push_str(&format!(
        "| macro F1 | {} | {} |\n",
        fmt6(doc.aggregate.macro_f1.mean),
        fmt6(doc.aggregate.macro_f1.std)
    ));
    out.push_str(&format!(
        "| micro F1 | {} | {} |\n",
        fmt6(doc.aggregate.micro_f1.mean),
        fmt6(doc.aggregate.micro_f1.std)
    ));
    match &doc.aggregate.carefulness {
        Some(c) => out.push_str(&format!(
            "| carefulness | {} | {} |\n",
            fmt6(c.mean),
            fmt6(c.std)
        )),
        None => out.push_str("| carefulness | n/a | n/a |\n"),
    }

    out.push_str("\n## Top confused pairs\n\n");
    if doc.pairs.is_empty() {
        out.push_str("No confusions observed.\n");
    } else {
        for (rank, pair) in doc.pairs.iter().take(3).enumerate() {
            out.push_str(&format!(
                "{}. `{}` / `{}` — {} confusions\n",
                rank + 1,
                pair.a,
                pair.b,
                pair.score
            ));
            for example in doc
                .examples
                .iter()
                .filter(|e| e.pair[0] == pair.a && e.pair[1] == pair.b)
            {
                out.push_str(&format!(
                    "   - {:?} (gold `{}`, guessed `{}` at {})\n",
                    example.text,
                    example.gold,
                    example.guess,
                    fmt6(example.confidence)
                ));
            }
        }
    }
    out
}

fn comparison_markdown(doc: &ComparisonDocument) -> String {
    let mut out = String::new();
    out.push_str(&format!("# Comparison report: {}\n\n", doc.dataset_name));
    out.push_str(&format!(
        "- test fraction: {}, retries: {}, threshold: {}, seed: {}\n\n",
        doc.config.t, doc.config.retries, doc.config.threshold, doc.config.seed
    ));
    out.push_str("## Accuracy range across settings\n\n");
    out.push_str("| engine | min | mean | max |\n|---|---|---|---|\n");
    for engine in &doc.engines {
        match &engine.accuracy {
            Some(range) => out.push_str(&format!(
                "| {} | {} | {} | {} |\n",
                engine.name,
                fmt6(range.min),
                fmt6(range.mean),
                fmt6(range.max)
            )),
            None => out.push_str(&format!(
                "| {} | failed: {} | | |\n",
                engine.name,
                engine.error.as_deref().unwrap_or("unknown error")
            )),
        }
    }
    out.push_str("\n## Per-setting breakdown\n\n");
    out.push_str("| engine | setting | accuracy | macro F1 | carefulness |\n|---|---|---|---|---|\n");
    for engine in &doc.engines {
        for setting in &engine.per_setting {
            out.push_str(&format!(
                "| {} | {} | {} | {} | {} |\n",
                engine.name,
                setting.setting,
                fmt_opt(Some(&setting.accuracy)),
                fmt_opt(Some(&setting.macro_f1)),
                fmt_opt(setting.carefulness.as_ref())
            ));
        }
    }
    out
}

/// Which plot-ready CSV table to emit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsvKind {
    /// One row per retry with every metric.
    Retries,
    /// Long-form confusion cells `(gold, predicted, count)`.
    Confusion,
    /// Ranked pairs `(label_a, label_b, score)`.
    Pairs,
}

impl CsvKind {
    pub const ALL: [CsvKind; 3] = [CsvKind::Retries, CsvKind::Confusion, CsvKind::Pairs];

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "retries" => Ok(Self::Retries),
            "confusion" => Ok(Self::Confusion),
            "pairs" => Ok(Self::Pairs),
            other => Err(Error::InvalidParameter(format!(
                "unknown csv table {other:?}; expected retries, confusion or pairs"
            ))),
        }
    }

    pub fn file_name(&self) -> &'static str {
        match self {
            Self::Retries => "retries.csv",
            Self::Confusion => "confusion.csv",
            Self::Pairs => "pairs.csv",
        }
    }
}

/// Emits one CSV table from an evaluation document. Comparison documents
/// have no CSV form.
pub fn emit_csv(document: &ReportDocument, which: CsvKind) -> Result<String> {
    let doc = match document {
        ReportDocument::Evaluation(doc) => doc,
        ReportDocument::Comparison(_) => {
            return Err(Error::InvalidParameter(
                "csv export applies to evaluation reports only".into(),
            ))
        }
    };
    let mut wtr = csv::Writer::from_writer(Vec::new());
    match which {
        CsvKind::Retries => {
            wtr.write_record([
                "retry",
                "accuracy",
                "macro_f1",
                "micro_f1",
                "carefulness",
                "train_size",
                "test_size",
                "negatives_in_test",
                "fit_ms",
                "predict_ms",
            ])?;
            for (i, r) in doc.retries.iter().enumerate() {
                wtr.write_record([
                    i.to_string(),
                    fmt6(r.accuracy),
                    fmt6(r.macro_f1),
                    fmt6(r.micro_f1),
                    r.carefulness.map(fmt6).unwrap_or_default(),
                    r.train_size.to_string(),
                    r.test_size.to_string(),
                    r.negatives_in_test.to_string(),
                    fmt6(r.fit_ms),
                    fmt6(r.predict_ms),
                ])?;
            }
        }
        CsvKind::Confusion => {
            wtr.write_record(["gold", "predicted", "count"])?;
            for cell in &doc.confusion {
                wtr.write_record([
                    cell.gold.as_str(),
                    cell.predicted.as_str(),
                    &cell.count.to_string(),
                ])?;
            }
        }
        CsvKind::Pairs => {
            wtr.write_record(["label_a", "label_b", "score"])?;
            for pair in &doc.pairs {
                wtr.write_record([pair.a.as_str(), pair.b.as_str(), &pair.score.to_string()])?;
            }
        }
    }
    let bytes = wtr.into_inner().expect("csv into_inner on Vec");
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
