//! Negative-example class selection and train/test provisioning.
//!
//! The central idea: a corpus with many low-population classes carries its
//! own out-of-scope material. Selected small classes are withheld from
//! training and their examples injected into the test set with an
//! out-of-scope gold, so the evaluation also measures whether a classifier
//! declines to answer inputs from outside its trained domain.
//!
//! Two mutually exclusive selection rules decide which classes become
//! negative-example candidates:
//!
//! * [`select_cutoff`] — classes occurring strictly fewer than `K` times;
//! * [`select_proportional`] — least-populated classes accumulated until
//!   they cover at least fraction `P` of all examples.
//!
//! [`provision`] then realizes one overlapping train/test split, and
//! [`kfold_splits`] provides the plain stratified k-fold partition used to
//! sanity-check the metric against ordinary cross-validation.
//!
//! ```
//! use nexcv::{class_stats, select_cutoff, select_proportional, Dataset, LabeledExample};
//!
//! let examples = [("apply", 10), ("salary", 3), ("thesis", 2)]
//!     .iter()
//!     .flat_map(|(label, n)| {
//!         (0..*n).map(move |i| LabeledExample::new(format!("{label} q{i}"), *label).unwrap())
//!     })
//!     .collect();
//! let stats = class_stats(&Dataset::new("faq", examples));
//!
//! // Cutoff: candidates occur strictly fewer than 5 times.
//! let by_cutoff = select_cutoff(&stats, 5);
//! assert!(by_cutoff.small.contains("salary") && by_cutoff.small.contains("thesis"));
//! assert!(by_cutoff.large.contains("apply"));
//!
//! // Proportional: least-populated classes until they cover 15% of the
//! // examples — "thesis" alone is 2/15 ≈ 13%, so "salary" is taken too.
//! let by_mass = select_proportional(&stats, 0.15)?;
//! assert_eq!(by_mass.small, by_cutoff.small);
//! # Ok::<(), nexcv::Error>(())
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dataset::{ClassStats, Dataset, LabeledExample};
use crate::error::{Error, Result};

/// Reserved gold label for test items drawn from withheld classes. Datasets
/// containing this literal as a class label are rejected at load.
pub const OUT_OF_SCOPE_LABEL: &str = "__OUT_OF_SCOPE__";

/// A split of the label set into negative-example candidates (`small`) and
/// retained classes (`large`). The two sets are disjoint and together cover
/// every label in the dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClassPartition {
    pub small: BTreeSet<String>,
    pub large: BTreeSet<String>,
}

impl ClassPartition {
    /// True when the sets are disjoint and cover exactly `labels`.
    pub fn is_valid_over(&self, labels: &BTreeSet<String>) -> bool {
        self.small.is_disjoint(&self.large)
            && self.small.union(&self.large).cloned().collect::<BTreeSet<_>>() == *labels
    }
}

/// Which selection rule to apply, with its parameter. The rules are
/// mutually exclusive by construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SelectionMode {
    /// Classes occurring strictly fewer than `k` times become candidates.
    Cutoff { k: usize },
    /// Least-populated classes are accumulated until they cover at least
    /// fraction `p` of all examples (`0 <= p < 1`).
    Proportional { p: f64 },
}

impl SelectionMode {
    pub fn select(&self, stats: &ClassStats) -> Result<ClassPartition> {
        match *self {
            SelectionMode::Cutoff { k } => Ok(select_cutoff(stats, k)),
            SelectionMode::Proportional { p } => select_proportional(stats, p),
        }
    }
}

/// Full configuration of one evaluation run.
#[derive(Debug, Clone, PartialEq)]
pub struct NexCvConfig {
    pub mode: SelectionMode,
    /// Share of data provisioned into the test side, in (0, 1).
    pub test_fraction: f64,
    /// Number of independent seeded partition-provision-evaluate cycles.
    pub retries: usize,
    /// Confidence at or above which a prediction counts as answered.
    pub confidence_threshold: f64,
    pub seed: u64,
}

impl Default for NexCvConfig {
    fn default() -> Self {
        Self {
            mode: SelectionMode::Cutoff { k: 0 },
            test_fraction: 0.2,
            retries: 10,
            confidence_threshold: 0.5,
            seed: 0,
        }
    }
}

impl NexCvConfig {
    /// Rejects out-of-range fields. Called by the evaluation entry points.
    pub fn check(&self) -> Result<()> {
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "test_fraction must be in (0, 1), got {}",
                self.test_fraction
            )));
        }
        if self.retries == 0 {
            return Err(Error::InvalidParameter("retries must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.confidence_threshold) {
            return Err(Error::InvalidParameter(format!(
                "confidence_threshold must be in [0, 1], got {}",
                self.confidence_threshold
            )));
        }
        if let SelectionMode::Proportional { p } = self.mode {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::InvalidParameter(format!(
                    "proportional parameter must satisfy 0 <= p < 1, got {p}"
                )));
            }
        }
        Ok(())
    }

    /// Seed for retry `index`; retries are independent draws, so overlapping
    /// test sets across retries are expected and fine.
    pub fn retry_seed(&self, index: usize) -> u64 {
        self.seed.wrapping_add(index as u64)
    }
}

/// Gold assignment of a provisioned test item.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Gold {
    Label(String),
    OutOfScope,
}

impl Gold {
    /// The wire/report form: the label itself, or the out-of-scope sentinel.
    pub fn as_str(&self) -> &str {
        match self {
            Gold::Label(l) => l,
            Gold::OutOfScope => OUT_OF_SCOPE_LABEL,
        }
    }

    pub fn is_out_of_scope(&self) -> bool {
        matches!(self, Gold::OutOfScope)
    }
}

/// One provisioned test item. `origin_label` is the example's original
/// class; for in-scope items it equals the gold label, for out-of-scope
/// items it names the withheld class the text came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestItem {
    pub text: String,
    pub gold: Gold,
    pub origin_label: String,
}

/// One realized train/test split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataSplit {
    pub train: Vec<LabeledExample>,
    pub test: Vec<TestItem>,
}

impl DataSplit {
    /// Count of out-of-scope test items.
    pub fn negatives_in_test(&self) -> usize {
        self.test.iter().filter(|t| t.gold.is_out_of_scope()).count()
    }

    /// Audit serialization: one JSON object per example, tagged by side.
    /// Test records carry both the gold (possibly the sentinel) and the
    /// originating class label.
    pub fn write_jsonl(&self, mut writer: impl Write) -> Result<()> {
        #[derive(Serialize)]
        struct TrainRecord<'a> {
            split: &'static str,
            text: &'a str,
            label: &'a str,
        }
        #[derive(Serialize)]
        struct TestRecord<'a> {
            split: &'static str,
            text: &'a str,
            gold: &'a str,
            origin_label: &'a str,
        }
        for ex in &self.train {
            serde_json::to_writer(
                &mut writer,
                &TrainRecord {
                    split: "train",
                    text: &ex.text,
                    label: &ex.label,
                },
            )?;
            writer.write_all(b"\n")?;
        }
        for item in &self.test {
            serde_json::to_writer(
                &mut writer,
                &TestRecord {
                    split: "test",
                    text: &item.text,
                    gold: item.gold.as_str(),
                    origin_label: &item.origin_label,
                },
            )?;
            writer.write_all(b"\n")?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Cutoff selection: a class becomes a negative-example candidate exactly
/// when its occurrence count is strictly less than `k`. `k = 0` therefore
/// selects nothing.
pub fn select_cutoff(stats: &ClassStats, k: usize) -> ClassPartition {
    let mut small = BTreeSet::new();
    let mut large = BTreeSet::new();
    for (label, count) in stats.counts() {
        if *count < k {
            small.insert(label.clone());
        } else {
            large.insert(label.clone());
        }
    }
    ClassPartition { small, large }
}

/// Proportional selection: walk the classes from least to most occurring
/// (count ties broken lexicographically) and keep taking while the examples
/// already taken cover less than fraction `p` of the dataset. The guard is
/// checked before each take, so `p = 0` selects nothing and the result is
/// the minimal least-populated prefix whose example mass reaches `p`.
pub fn select_proportional(stats: &ClassStats, p: f64) -> Result<ClassPartition> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!(
            "proportional parameter must satisfy 0 <= p < 1, got {p}"
        )));
    }
    let mut small = BTreeSet::new();
    let mut large = BTreeSet::new();
    let total = stats.total();
    if total == 0 {
        return Ok(ClassPartition { small, large });
    }
    let mut taken = 0usize;
    let mut queue = stats.counts().iter();
    loop {
        if (taken as f64) / (total as f64) >= p {
            break;
        }
        match queue.next() {
            Some((label, count)) => {
                small.insert(label.clone());
                taken += count;
            }
            None => break,
        }
    }
    for (label, _) in queue {
        large.insert(label.clone());
    }
    Ok(ClassPartition { small, large })
}

/// Per-class test count for a retained class of size `n`:
/// `clamp(round(t*n), 1, n-1)`. The clamp keeps every retained class
/// represented on both sides of the split.
fn stratified_test_count(t: f64, n: usize) -> usize {
    let raw = (t * n as f64).round() as usize;
    raw.clamp(1, n - 1)
}

/// Provisions one train/test realization.
///
/// Retained (`large`) classes are split per class: `round(t*n)` examples to
/// test, clamped so both sides stay non-empty. Candidate (`small`) classes
/// are split at label granularity: `max(1, round(t*|small|))` whole classes
/// land in the test side with out-of-scope golds, the remaining candidate
/// classes go to the train side under their true labels.
///
/// The output is deterministic under `(seed, dataset order)`; train and
/// test preserve the dataset's example order.
pub fn provision(
    dataset: &Dataset,
    partition: &ClassPartition,
    test_fraction: f64,
    seed: u64,
) -> Result<DataSplit> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "test_fraction must be in (0, 1), got {test_fraction}"
        )));
    }
    if partition.large.is_empty() {
        return Err(Error::NoRetainedClasses);
    }

    let mut indices_by_label: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, ex) in dataset.examples.iter().enumerate() {
        indices_by_label.entry(&ex.label).or_default().push(i);
    }
    for label in partition.large.iter().chain(&partition.small) {
        if !indices_by_label.contains_key(label.as_str()) {
            return Err(Error::InvalidParameter(format!(
                "partition label {label:?} does not occur in the dataset"
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Retained classes: per-class stratified index split.
    let mut test_indices: BTreeSet<usize> = BTreeSet::new();
    for label in &partition.large {
        let indices = &indices_by_label[label.as_str()];
        if indices.len() < 2 {
            return Err(Error::UnsplittableClass {
                label: label.clone(),
                count: indices.len(),
            });
        }
        let take = stratified_test_count(test_fraction, indices.len());
        let mut shuffled = indices.clone();
        shuffled.shuffle(&mut rng);
        test_indices.extend(shuffled.into_iter().take(take));
    }

    // Candidate classes: whole labels are assigned to one side.
    let mut held_out_labels: BTreeSet<&str> = BTreeSet::new();
    if !partition.small.is_empty() {
        let take = ((test_fraction * partition.small.len() as f64).round() as usize).max(1);
        let mut labels: Vec<&str> = partition.small.iter().map(String::as_str).collect();
        labels.shuffle(&mut rng);
        held_out_labels.extend(labels.into_iter().take(take));
    }

    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, ex) in dataset.examples.iter().enumerate() {
        if partition.large.contains(&ex.label) {
            if test_indices.contains(&i) {
                test.push(TestItem {
                    text: ex.text.clone(),
                    gold: Gold::Label(ex.label.clone()),
                    origin_label: ex.label.clone(),
                });
            } else {
                train.push(ex.clone());
            }
        } else if held_out_labels.contains(ex.label.as_str()) {
            test.push(TestItem {
                text: ex.text.clone(),
                gold: Gold::OutOfScope,
                origin_label: ex.label.clone(),
            });
        } else {
            train.push(ex.clone());
        }
    }
    Ok(DataSplit { train, test })
}

/// Plain stratified k-fold partition: per class, the examples are dealt
/// into `k` chunks of near-equal size; fold `f`'s test set is the union of
/// the `f`-th chunks. Test sets are pairwise disjoint and cover the dataset.
/// Single-example classes cannot satisfy both that and "every test label is
/// trained", so they are placed best-effort: always in train, never in test.
pub fn kfold_splits(dataset: &Dataset, k: usize, seed: u64) -> Result<Vec<DataSplit>> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!(
            "k must be at least 2, got {k}"
        )));
    }
    if k > dataset.len() {
        return Err(Error::InvalidParameter(format!(
            "k = {k} exceeds the dataset size {}",
            dataset.len()
        )));
    }

    let mut indices_by_label: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, ex) in dataset.examples.iter().enumerate() {
        indices_by_label.entry(&ex.label).or_default().push(i);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // fold_of[i] = Some(f) when example i is in fold f's test set.
    let mut fold_of: Vec<Option<usize>> = vec![None; dataset.len()];
    for indices in indices_by_label.values() {
        let n = indices.len();
        if n < 2 {
            continue;
        }
        let mut shuffled = indices.clone();
        shuffled.shuffle(&mut rng);
        let base = n / k;
        let remainder = n % k;
        let mut cursor = 0;
        for fold in 0..k {
            let size = base + usize::from(fold < remainder);
            for &idx in &shuffled[cursor..cursor + size] {
                fold_of[idx] = Some(fold);
            }
            cursor += size;
        }
    }

    let mut splits = Vec::with_capacity(k);
    for fold in 0..k {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (i, ex) in dataset.examples.iter().enumerate() {
            if fold_of[i] == Some(fold) {
                test.push(TestItem {
                    text: ex.text.clone(),
                    gold: Gold::Label(ex.label.clone()),
                    origin_label: ex.label.clone(),
                });
            } else {
                train.push(ex.clone());
            }
        }
        splits.push(DataSplit { train, test });
    }
    Ok(splits)
}
