//! Labeled text corpora: loading, validation, statistics and synthesis.
//!
//! A [`Dataset`] is an ordered list of `(text, label)` pairs. The corpora
//! this crate targets have a characteristic shape: a handful of
//! well-populated classes and a long tail of classes with only a few
//! examples each. [`generate_synthetic`] produces corpora of that shape with
//! controllable confusion between classes, which is what most of the test
//! and acceptance fixtures are built from.
//!
//! ```
//! use nexcv::{class_stats, generate_synthetic, SynthSpec};
//!
//! let dataset = generate_synthetic(&SynthSpec {
//!     n_large: 2,
//!     large_size: 25,
//!     n_small: 4,
//!     small_size_range: (3, 6),
//!     seed: 11,
//!     ..SynthSpec::default()
//! })?;
//! let stats = class_stats(&dataset);
//! assert_eq!(stats.len(), 6);
//! // Stats are sorted ascending by count, so the long tail comes first.
//! assert!(stats.sorted_labels()[0].starts_with("small_"));
//! assert_eq!(stats.total(), dataset.len());
//! # Ok::<(), nexcv::Error>(())
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::ABSTAIN_LABEL;
use crate::partition::OUT_OF_SCOPE_LABEL;

/// One end-user message together with its gold class label.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabeledExample {
    pub text: String,
    pub label: String,
}

impl LabeledExample {
    /// Builds an example, enforcing the field invariants: the text must be
    /// non-empty after trimming, the label non-empty, free of line breaks and
    /// not one of the reserved sentinel labels.
    pub fn new(text: impl Into<String>, label: impl Into<String>) -> Result<Self> {
        let text = text.into();
        let label = label.into();
        if text.trim().is_empty() {
            return Err(Error::InvalidExample(
                "text is empty after trimming whitespace".into(),
            ));
        }
        if label.is_empty() {
            return Err(Error::InvalidExample("label is empty".into()));
        }
        if label.contains(['\n', '\r']) {
            return Err(Error::InvalidExample(format!(
                "label {label:?} contains a line break"
            )));
        }
        if label == OUT_OF_SCOPE_LABEL || label == ABSTAIN_LABEL {
            return Err(Error::ReservedLabel(label));
        }
        Ok(Self { text, label })
    }
}

/// An ordered, immutable corpus of labeled examples.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub examples: Vec<LabeledExample>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, examples: Vec<LabeledExample>) -> Self {
        Self {
            name: name.into(),
            examples,
        }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Distinct labels, in first-occurrence order.
    pub fn labels(&self) -> Vec<&str> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for ex in &self.examples {
            if seen.insert(ex.label.as_str()) {
                out.push(ex.label.as_str());
            }
        }
        out
    }
}

/// Input file formats understood by [`load_dataset`] and [`save_dataset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    /// Two columns `text,label`, header row required, RFC 4180 quoting.
    Csv,
    /// One JSON object per line with required string keys `text` and
    /// `label`; unknown keys are ignored.
    Jsonl,
}

impl DataFormat {
    /// Infers the format from a path extension (`.csv` / `.jsonl`).
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => Some(Self::Csv),
            Some(e) if e.eq_ignore_ascii_case("jsonl") => Some(Self::Jsonl),
            _ => None,
        }
    }
}

impl fmt::Display for DataFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Csv => write!(f, "csv"),
            Self::Jsonl => write!(f, "jsonl"),
        }
    }
}

/// Loads a dataset from `path`, preserving input order. Duplicate
/// `(text, label)` rows are retained: repeated phrasings are legitimate
/// training data. Malformed records are rejected with their line number;
/// an input with zero records is an error.
pub fn load_dataset(path: impl AsRef<Path>, format: DataFormat) -> Result<Dataset> {
    let path = path.as_ref();
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("dataset")
        .to_string();
    let file = std::fs::File::open(path)?;
    let shown = path.display().to_string();
    let examples = match format {
        DataFormat::Csv => read_csv(file, &shown)?,
        DataFormat::Jsonl => read_jsonl(file, &shown)?,
    };
    if examples.is_empty() {
        return Err(Error::EmptyDataset(name));
    }
    Ok(Dataset::new(name, examples))
}

fn read_csv(reader: impl Read, path: &str) -> Result<Vec<LabeledExample>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    {
        let headers = rdr.headers().map_err(|e| Error::MalformedRecord {
            path: path.into(),
            line: 1,
            reason: e.to_string(),
        })?;
        if headers.len() != 2 || &headers[0] != "text" || &headers[1] != "label" {
            return Err(Error::MalformedRecord {
                path: path.into(),
                line: 1,
                reason: format!("expected header \"text,label\", found {headers:?}"),
            });
        }
    }
    let mut out = Vec::new();
    for result in rdr.into_records() {
        let record = result?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let text = record.get(0).unwrap_or_default();
        let label = record.get(1).unwrap_or_default();
        let ex = LabeledExample::new(text, label).map_err(|e| Error::MalformedRecord {
            path: path.into(),
            line,
            reason: e.to_string(),
        })?;
        out.push(ex);
    }
    Ok(out)
}

fn read_jsonl(reader: impl Read, path: &str) -> Result<Vec<LabeledExample>> {
    #[derive(Deserialize)]
    struct Record {
        text: String,
        label: String,
    }

    let mut out = Vec::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record =
            serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
                path: path.into(),
                line: lineno,
                reason: e.to_string(),
            })?;
        let ex =
            LabeledExample::new(record.text, record.label).map_err(|e| Error::MalformedRecord {
                path: path.into(),
                line: lineno,
                reason: e.to_string(),
            })?;
        out.push(ex);
    }
    Ok(out)
}

/// Writes `dataset` to `path` so that loading it back yields an equal
/// dataset (up to the name, which follows the file stem).
pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>, format: DataFormat) -> Result<()> {
    let file = std::fs::File::create(path.as_ref())?;
    write_dataset(dataset, file, format)
}

/// Serializes `dataset` to an arbitrary writer. See [`save_dataset`].
pub fn write_dataset(dataset: &Dataset, writer: impl Write, format: DataFormat) -> Result<()> {
    match format {
        DataFormat::Csv => {
            let mut wtr = csv::Writer::from_writer(writer);
            wtr.write_record(["text", "label"])?;
            for ex in &dataset.examples {
                wtr.write_record([ex.text.as_str(), ex.label.as_str()])?;
            }
            wtr.flush()?;
        }
        DataFormat::Jsonl => {
            let mut writer = writer;
            for ex in &dataset.examples {
                serde_json::to_writer(&mut writer, ex)?;
                writer.write_all(b"\n")?;
            }
            writer.flush()?;
        }
    }
    Ok(())
}

/// Data-quality findings reported by [`validate_dataset`]. None of these
/// abort loading; they flag conditions that make an evaluation impossible
/// or suspicious.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DatasetIssue {
    /// Evaluation needs at least two classes to mean anything.
    FewerThanTwoLabels { found: usize },
    /// A single-example class can only land whole in train or test.
    SingleExampleClass { label: String },
    /// The same text occurs under different labels; conceptual overlap
    /// between classes usually shows up exactly like this.
    CrossLabelDuplicate { text: String, labels: Vec<String> },
}

impl fmt::Display for DatasetIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::FewerThanTwoLabels { found } => {
                write!(f, "fewer than 2 labels (found {found})")
            }
            Self::SingleExampleClass { label } => {
                write!(f, "class {label:?} has exactly 1 example and cannot be split")
            }
            Self::CrossLabelDuplicate { text, labels } => {
                write!(f, "text {text:?} appears under labels {labels:?}")
            }
        }
    }
}

/// Scans a dataset for conditions that weaken or preclude an evaluation.
/// Always returns a (possibly empty) list; nothing here is fatal by itself.
pub fn validate_dataset(dataset: &Dataset) -> Vec<DatasetIssue> {
    let mut issues = Vec::new();
    let stats = class_stats(dataset);
    let distinct = stats.len();
    if distinct < 2 {
        issues.push(DatasetIssue::FewerThanTwoLabels { found: distinct });
    }
    for (label, count) in stats.counts() {
        if *count == 1 {
            issues.push(DatasetIssue::SingleExampleClass {
                label: label.clone(),
            });
        }
    }
    let mut by_text: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for ex in &dataset.examples {
        by_text.entry(&ex.text).or_default().insert(&ex.label);
    }
    for (text, labels) in by_text {
        if labels.len() > 1 {
            issues.push(DatasetIssue::CrossLabelDuplicate {
                text: text.to_string(),
                labels: labels.into_iter().map(String::from).collect(),
            });
        }
    }
    issues
}

/// Per-class example counts with a total, deterministic order: ascending by
/// count, ties broken lexicographically by label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClassStats {
    entries: Vec<(String, usize)>,
    total: usize,
}

impl ClassStats {
    /// `(label, count)` pairs sorted ascending by count, then by label.
    pub fn counts(&self) -> &[(String, usize)] {
        &self.entries
    }

    /// Labels in the sorted order of [`ClassStats::counts`].
    pub fn sorted_labels(&self) -> Vec<&str> {
        self.entries.iter().map(|(l, _)| l.as_str()).collect()
    }

    pub fn count_of(&self, label: &str) -> usize {
        self.entries
            .iter()
            .find(|(l, _)| l == label)
            .map_or(0, |(_, c)| *c)
    }

    /// Number of distinct labels.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of examples across all classes.
    pub fn total(&self) -> usize {
        self.total
    }
}

/// Counts examples per class. The resulting order is total, so permuting
/// the input examples never changes it.
pub fn class_stats(dataset: &Dataset) -> ClassStats {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for ex in &dataset.examples {
        *counts.entry(&ex.label).or_insert(0) += 1;
    }
    let mut entries: Vec<(String, usize)> = counts
        .into_iter()
        .map(|(l, c)| (l.to_string(), c))
        .collect();
    entries.sort_by(|(la, ca), (lb, cb)| ca.cmp(cb).then_with(|| la.cmp(lb)));
    ClassStats {
        total: dataset.len(),
        entries,
    }
}

/// Parameters for [`generate_synthetic`].
///
/// Classes are laid out in one sequence (large classes first, then small
/// ones) and each class draws its texts from a per-class token vocabulary.
/// `overlap_fraction` of each vocabulary is shared within adjacent class
/// pairs (classes `2i` and `2i+1` share a token block), which creates
/// controllable confusion between the two; at `0.0` the vocabularies are
/// pairwise disjoint.
#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub n_large: usize,
    pub large_size: usize,
    pub n_small: usize,
    /// Inclusive `[min, max]` size range for small classes.
    pub small_size_range: (usize, usize),
    pub vocab_per_class: usize,
    pub overlap_fraction: f64,
    /// Inclusive `[min, max]` token count per generated text.
    pub text_len_range: (usize, usize),
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_large: 5,
            large_size: 100,
            n_small: 20,
            small_size_range: (5, 10),
            vocab_per_class: 40,
            overlap_fraction: 0.0,
            text_len_range: (3, 12),
            seed: 0,
        }
    }
}

/// Generates a synthetic corpus with a few large classes and a long tail of
/// small ones. Deterministic under `spec.seed`: the same spec reproduces a
/// byte-identical dataset.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<Dataset> {
    if spec.n_large == 0 {
        return Err(Error::InvalidParameter(
            "n_large must be at least 1".into(),
        ));
    }
    if spec.large_size == 0 || (spec.n_small > 0 && spec.small_size_range.0 == 0) {
        return Err(Error::InvalidParameter("class sizes must be at least 1".into()));
    }
    if spec.small_size_range.0 > spec.small_size_range.1 {
        return Err(Error::InvalidParameter(
            "small size range is inverted".into(),
        ));
    }
    if spec.vocab_per_class == 0 {
        return Err(Error::InvalidParameter("vocab_per_class is zero".into()));
    }
    if !(0.0..=1.0).contains(&spec.overlap_fraction) {
        return Err(Error::InvalidParameter(
            "overlap_fraction must be in [0, 1]".into(),
        ));
    }
    if spec.text_len_range.0 == 0 || spec.text_len_range.0 > spec.text_len_range.1 {
        return Err(Error::InvalidParameter("text length range invalid".into()));
    }
    let shared = (spec.vocab_per_class as f64 * spec.overlap_fraction).round() as usize;
    if shared >= spec.vocab_per_class && spec.n_large + spec.n_small > 1 && shared > 0 {
        return Err(Error::InvalidParameter(format!(
            "overlap_fraction {} leaves no class-exclusive tokens (vocab {})",
            spec.overlap_fraction, spec.vocab_per_class
        )));
    }

    let n_classes = spec.n_large + spec.n_small;
    let labels: Vec<String> = (0..spec.n_large)
        .map(|i| format!("large_{i:02}"))
        .chain((0..spec.n_small).map(|i| format!("small_{i:02}")))
        .collect();

    // Classes 2i and 2i+1 share block i; a trailing unpaired class is fully
    // disjoint.
    let vocabularies: Vec<Vec<String>> = (0..n_classes)
        .map(|i| {
            let mut v: Vec<String> = Vec::with_capacity(spec.vocab_per_class);
            if i ^ 1 < n_classes {
                let block = i / 2;
                v.extend((0..shared).map(|j| format!("shared_{block:02}_{j:03}")));
            }
            let own = spec.vocab_per_class - v.len();
            v.extend((0..own).map(|j| format!("tok_{i:02}_{j:03}")));
            v
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut examples = Vec::new();
    for (i, label) in labels.iter().enumerate() {
        let size = if i < spec.n_large {
            spec.large_size
        } else {
            rng.gen_range(spec.small_size_range.0..=spec.small_size_range.1)
        };
        let vocab = &vocabularies[i];
        for _ in 0..size {
            let len = rng.gen_range(spec.text_len_range.0..=spec.text_len_range.1);
            let words: Vec<&str> = (0..len)
                .map(|_| vocab[rng.gen_range(0..vocab.len())].as_str())
                .collect();
            examples.push(LabeledExample::new(words.join(" "), label.clone())?);
        }
    }
    Ok(Dataset::new("synthetic", examples))
}
