//! Running evaluations: per-split scoring, retry aggregation, carefulness,
//! pair-confusion ranking, engine comparison and the k-fold sanity check.
//!
//! The correctness rule is asymmetric on purpose. A test item with a real
//! gold label is correct only when the classifier answers (confidence at or
//! above the threshold) with that label; a test item with an out-of-scope
//! gold is correct only when the classifier abstains. The argmax guess is
//! recorded even for abstentions — carefulness needs to know whether the
//! withheld guesses would have been wrong.
//!
//! ```
//! use nexcv::{carefulness, pair_ranking, ConfusionMatrix, Gold, Outcome};
//!
//! // Ten abstentions, seven of which withheld a wrong guess.
//! let outcomes: Vec<Outcome> = (0..10)
//!     .map(|i| Outcome {
//!         gold: Gold::Label("salary".into()),
//!         guess: if i < 7 { "apply".into() } else { "salary".into() },
//!         confidence: 0.31,
//!         answered: false,
//!     })
//!     .collect();
//! assert_eq!(carefulness(&outcomes), Some(0.7));
//!
//! // Pair confusion is the symmetric off-diagonal mass.
//! let mut matrix = ConfusionMatrix::new();
//! matrix.add_count("apply", "salary", 5);
//! matrix.add_count("salary", "apply", 3);
//! matrix.add_count("apply", "deadline", 1);
//! let ranking = pair_ranking(&matrix);
//! assert_eq!((ranking[0].a.as_str(), ranking[0].b.as_str(), ranking[0].score), ("apply", "salary", 8));
//! assert_eq!(ranking[1].score, 1);
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use crate::classifier::{Classifier, ClassifierFactory};
use crate::dataset::{class_stats, validate_dataset, Dataset, DatasetIssue};
use crate::error::{Error, Result};
use crate::partition::{
    kfold_splits, provision, ClassPartition, DataSplit, Gold, NexCvConfig, SelectionMode,
    OUT_OF_SCOPE_LABEL as OUT_OF_SCOPE,
};

/// Reserved column marker for withheld answers in confusion matrices and
/// reports. Rejected as a real class label at load, like the out-of-scope
/// sentinel.
pub const ABSTAIN_LABEL: &str = "__ABSTAIN__";

/// The scored result of one test item.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub gold: Gold,
    /// The argmax guess, recorded even when not answered.
    pub guess: String,
    pub confidence: f64,
    /// True exactly when `confidence >= threshold`.
    pub answered: bool,
}

impl Outcome {
    /// The headline correctness rule.
    pub fn correct(&self) -> bool {
        match &self.gold {
            Gold::Label(l) => self.answered && self.guess == *l,
            Gold::OutOfScope => !self.answered,
        }
    }

    /// Whether the recorded guess disagrees with the gold; any guess on an
    /// out-of-scope item is wrong by definition.
    pub fn guess_is_wrong(&self) -> bool {
        match &self.gold {
            Gold::Label(l) => self.guess != *l,
            Gold::OutOfScope => true,
        }
    }
}

/// Confusion counts over `(gold, effective prediction)` where gold ranges
/// over real labels plus the out-of-scope sentinel and the effective
/// prediction over real labels plus the abstain marker.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: BTreeMap<(String, String), usize>,
}

impl ConfusionMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records one outcome: abstentions land in the abstain column.
    pub fn record(&mut self, outcome: &Outcome) {
        let gold = outcome.gold.as_str().to_string();
        let pred = if outcome.answered {
            outcome.guess.clone()
        } else {
            ABSTAIN_LABEL.to_string()
        };
        *self.counts.entry((gold, pred)).or_insert(0) += 1;
    }

    /// Adds `n` directly to a cell; test and aggregation plumbing.
    pub fn add_count(&mut self, gold: &str, pred: &str, n: usize) {
        if n > 0 {
            *self
                .counts
                .entry((gold.to_string(), pred.to_string()))
                .or_insert(0) += n;
        }
    }

    /// Sums `other` into `self`.
    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for ((gold, pred), n) in &other.counts {
            *self.counts.entry((gold.clone(), pred.clone())).or_insert(0) += n;
        }
    }

    pub fn count(&self, gold: &str, pred: &str) -> usize {
        self.counts
            .get(&(gold.to_string(), pred.to_string()))
            .copied()
            .unwrap_or(0)
    }

    /// Non-zero cells in deterministic `(gold, pred)` order.
    pub fn cells(&self) -> impl Iterator<Item = (&str, &str, usize)> {
        self.counts
            .iter()
            .map(|((g, p), n)| (g.as_str(), p.as_str(), *n))
    }

    /// Total count per gold value.
    pub fn row_sums(&self) -> BTreeMap<&str, usize> {
        let mut sums: BTreeMap<&str, usize> = BTreeMap::new();
        for ((gold, _), n) in &self.counts {
            *sums.entry(gold.as_str()).or_insert(0) += n;
        }
        sums
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    fn real_labels(&self) -> BTreeSet<&str> {
        let mut labels = BTreeSet::new();
        for ((gold, pred), _) in &self.counts {
            if gold != OUT_OF_SCOPE {
                labels.insert(gold.as_str());
            }
            if pred != ABSTAIN_LABEL {
                labels.insert(pred.as_str());
            }
        }
        labels
    }
}

/// Per-retry metric record. Timing fields are informational and excluded
/// from all determinism guarantees.
#[derive(Debug, Clone, PartialEq)]
pub struct RetryMetrics {
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

/// Everything produced by scoring one split.
#[derive(Debug, Clone)]
pub struct SplitEvaluation {
    /// One outcome per test item, in the split's test order.
    pub outcomes: Vec<Outcome>,
    pub matrix: ConfusionMatrix,
    pub metrics: RetryMetrics,
}

/// Fits `classifier` on the split's train side and scores every test item.
pub fn evaluate_split(
    classifier: &mut dyn Classifier,
    split: &DataSplit,
    threshold: f64,
) -> Result<SplitEvaluation> {
    let fit_start = Instant::now();
    classifier.fit(&split.train)?;
    let fit_ms = fit_start.elapsed().as_secs_f64() * 1e3;

    let predict_start = Instant::now();
    let mut outcomes = Vec::with_capacity(split.test.len());
    for item in &split.test {
        let prediction = classifier.predict(&item.text)?;
        outcomes.push(Outcome {
            gold: item.gold.clone(),
            answered: prediction.confidence >= threshold,
            guess: prediction.label,
            confidence: prediction.confidence,
        });
    }
    let predict_ms = predict_start.elapsed().as_secs_f64() * 1e3;

    let mut matrix = ConfusionMatrix::new();
    for outcome in &outcomes {
        matrix.record(outcome);
    }
    let correct = outcomes.iter().filter(|o| o.correct()).count();
    let accuracy = if outcomes.is_empty() {
        0.0
    } else {
        correct as f64 / outcomes.len() as f64
    };
    let (macro_f1, micro_f1) = f1_scores(&matrix);
    let metrics = RetryMetrics {
        accuracy,
        macro_f1,
        micro_f1,
        carefulness: carefulness(&outcomes),
        train_size: split.train.len(),
        test_size: split.test.len(),
        negatives_in_test: split.negatives_in_test(),
        fit_ms,
        predict_ms,
    };
    Ok(SplitEvaluation {
        outcomes,
        matrix,
        metrics,
    })
}

/// Among abstentions, the fraction whose withheld guess was wrong. A high
/// value means the confidence score abstains at the right moments; a low
/// value means answers are being withheld that would have been right.
/// Undefined (None) when nothing was abstained — that is a missing value,
/// not a zero.
pub fn carefulness(outcomes: &[Outcome]) -> Option<f64> {
    let withheld: Vec<&Outcome> = outcomes.iter().filter(|o| !o.answered).collect();
    if withheld.is_empty() {
        return None;
    }
    let wrong = withheld.iter().filter(|o| o.guess_is_wrong()).count();
    Some(wrong as f64 / withheld.len() as f64)
}

/// Macro- and micro-averaged F1 over real labels. Abstentions count as a
/// prediction of out-of-scope: they cost recall on the gold class and never
/// grant precision anywhere.
fn f1_scores(matrix: &ConfusionMatrix) -> (f64, f64) {
    let labels = matrix.real_labels();
    if labels.is_empty() {
        return (0.0, 0.0);
    }
    let mut f1_sum = 0.0;
    let (mut tp_all, mut fp_all, mut fn_all) = (0usize, 0usize, 0usize);
    for label in &labels {
        let mut tp = 0usize;
        let mut fp = 0usize;
        let mut fn_ = 0usize;
        for (gold, pred, n) in matrix.cells() {
            let gold_is = gold == *label;
            let pred_is = pred == *label;
            match (gold_is, pred_is) {
                (true, true) => tp += n,
                (false, true) => fp += n,
                (true, false) => fn_ += n,
                (false, false) => {}
            }
        }
        tp_all += tp;
        fp_all += fp;
        fn_all += fn_;
        f1_sum += f1_from(tp, fp, fn_);
    }
    (f1_sum / labels.len() as f64, f1_from(tp_all, fp_all, fn_all))
}

fn f1_from(tp: usize, fp: usize, fn_: usize) -> f64 {
    if tp == 0 {
        return 0.0;
    }
    let precision = tp as f64 / (tp + fp) as f64;
    let recall = tp as f64 / (tp + fn_) as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Symmetric confusion mass of an unordered pair of real labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairScore {
    pub a: String,
    pub b: String,
    pub score: usize,
}

/// Ranks unordered pairs of real labels by their symmetric off-diagonal
/// confusion mass `m[a][b] + m[b][a]`, descending; ties break
/// lexicographically on the pair and zero-score pairs are omitted.
/// Out-of-scope rows and abstain columns never enter a pair — they are
/// visible separately in the matrix itself.
pub fn pair_ranking(matrix: &ConfusionMatrix) -> Vec<PairScore> {
    let mut scores: BTreeMap<(String, String), usize> = BTreeMap::new();
    for (gold, pred, n) in matrix.cells() {
        if gold == OUT_OF_SCOPE || pred == ABSTAIN_LABEL || gold == pred {
            continue;
        }
        let key = if gold < pred {
            (gold.to_string(), pred.to_string())
        } else {
            (pred.to_string(), gold.to_string())
        };
        *scores.entry(key).or_insert(0) += n;
    }
    let mut ranking: Vec<PairScore> = scores
        .into_iter()
        .filter(|(_, score)| *score > 0)
        .map(|((a, b), score)| PairScore { a, b, score })
        .collect();
    ranking.sort_by(|x, y| {
        y.score
            .cmp(&x.score)
            .then_with(|| x.a.cmp(&y.a))
            .then_with(|| x.b.cmp(&y.b))
    });
    ranking
}

/// Mean and population standard deviation of one metric across retries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self { mean: 0.0, std: 0.0 };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt(),
        }
    }
}

/// Aggregates over the per-retry records. `carefulness` averages only the
/// retries where it was defined; `None` when it never was.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateMetrics {
    pub accuracy: MeanStd,
    pub macro_f1: MeanStd,
    pub micro_f1: MeanStd,
    pub carefulness: Option<MeanStd>,
}

impl AggregateMetrics {
    fn from_retries(retries: &[RetryMetrics]) -> Self {
        let accuracy: Vec<f64> = retries.iter().map(|r| r.accuracy).collect();
        let macro_f1: Vec<f64> = retries.iter().map(|r| r.macro_f1).collect();
        let micro_f1: Vec<f64> = retries.iter().map(|r| r.micro_f1).collect();
        let carefulness: Vec<f64> = retries.iter().filter_map(|r| r.carefulness).collect();
        Self {
            accuracy: MeanStd::of(&accuracy),
            macro_f1: MeanStd::of(&macro_f1),
            micro_f1: MeanStd::of(&micro_f1),
            carefulness: if carefulness.is_empty() {
                None
            } else {
                Some(MeanStd::of(&carefulness))
            },
        }
    }
}

/// A representative misclassified test item for one confused pair,
/// most-confidently-wrong first.
#[derive(Debug, Clone, PartialEq)]
pub struct PairExample {
    pub a: String,
    pub b: String,
    pub text: String,
    pub gold: String,
    pub guess: String,
    pub confidence: f64,
}

/// Cap on representative examples retained per confused pair.
const EXAMPLES_PER_PAIR: usize = 5;

/// The full result of one evaluation run.
#[derive(Debug, Clone)]
pub struct EvaluationReport {
    pub dataset_name: String,
    pub config: NexCvConfig,
    /// The class partition actually used; selection is data-dependent and
    /// identical across retries.
    pub partition: ClassPartition,
    pub retries: Vec<RetryMetrics>,
    pub aggregate: AggregateMetrics,
    /// Confusion counts summed over all retries.
    pub confusion: ConfusionMatrix,
    pub pairs: Vec<PairScore>,
    /// Capped representative examples, grouped in pair-ranking order.
    pub examples: Vec<PairExample>,
}

/// Runs the full evaluation: select a partition, then for each retry
/// provision a split with an independent seed, train a fresh classifier
/// from `factory` and score it. Any retry failure aborts the run with the
/// retry index attached.
pub fn run_nexcv(
    dataset: &Dataset,
    config: &NexCvConfig,
    factory: &ClassifierFactory<'_>,
) -> Result<EvaluationReport> {
    config.check()?;
    let issues = validate_dataset(dataset);
    if issues
        .iter()
        .any(|i| matches!(i, DatasetIssue::FewerThanTwoLabels { .. }))
    {
        return Err(Error::InvalidTrainingData(
            "dataset has fewer than 2 labels".into(),
        ));
    }

    let stats = class_stats(dataset);
    let partition = config.mode.select(&stats)?;
    if partition.large.is_empty() {
        return Err(Error::NoRetainedClasses);
    }

    let mut retries = Vec::with_capacity(config.retries);
    let mut confusion = ConfusionMatrix::new();
    // (text, gold, guess) -> max confidence seen across retries.
    let mut wrong_answers: BTreeMap<(String, String, String), f64> = BTreeMap::new();

    for retry in 0..config.retries {
        let attempt = || -> Result<(DataSplit, SplitEvaluation)> {
            let split = provision(
                dataset,
                &partition,
                config.test_fraction,
                config.retry_seed(retry),
            )?;
            let mut classifier = factory()?;
            let evaluation =
                evaluate_split(classifier.as_mut(), &split, config.confidence_threshold)?;
            Ok((split, evaluation))
        };
        let (split, evaluation) = attempt().map_err(|e| Error::RetryFailed {
            retry,
            source: Box::new(e),
        })?;

        confusion.merge(&evaluation.matrix);
        for (item, outcome) in split.test.iter().zip(&evaluation.outcomes) {
            if let Gold::Label(gold) = &outcome.gold {
                if outcome.answered && outcome.guess != *gold {
                    let key = (item.text.clone(), gold.clone(), outcome.guess.clone());
                    let best = wrong_answers.entry(key).or_insert(outcome.confidence);
                    if outcome.confidence > *best {
                        *best = outcome.confidence;
                    }
                }
            }
        }
        retries.push(evaluation.metrics);
    }

    let pairs = pair_ranking(&confusion);
    let examples = representative_examples(&pairs, &wrong_answers);
    Ok(EvaluationReport {
        dataset_name: dataset.name.clone(),
        config: config.clone(),
        partition,
        aggregate: AggregateMetrics::from_retries(&retries),
        retries,
        confusion,
        pairs,
        examples,
    })
}

fn representative_examples(
    pairs: &[PairScore],
    wrong_answers: &BTreeMap<(String, String, String), f64>,
) -> Vec<PairExample> {
    let mut by_pair: BTreeMap<(String, String), Vec<PairExample>> = BTreeMap::new();
    for ((text, gold, guess), confidence) in wrong_answers {
        let key = if gold < guess {
            (gold.clone(), guess.clone())
        } else {
            (guess.clone(), gold.clone())
        };
        by_pair.entry(key).or_default().push(PairExample {
            a: String::new(),
            b: String::new(),
            text: text.clone(),
            gold: gold.clone(),
            guess: guess.clone(),
            confidence: *confidence,
        });
    }
    let mut out = Vec::new();
    for pair in pairs {
        let Some(mut group) = by_pair.remove(&(pair.a.clone(), pair.b.clone())) else {
            continue;
        };
        group.sort_by(|x, y| {
            y.confidence
                .partial_cmp(&x.confidence)
                .unwrap()
                .then_with(|| x.text.cmp(&y.text))
                .then_with(|| x.gold.cmp(&y.gold))
        });
        group.truncate(EXAMPLES_PER_PAIR);
        for mut example in group {
            example.a = pair.a.clone();
            example.b = pair.b.clone();
            out.push(example);
        }
    }
    out
}

/// The three canonical settings evaluated side by side for comparisons:
/// no negatives, proportional at 0.15, cutoff at 5.
pub fn canonical_settings() -> [(&'static str, SelectionMode); 3] {
    [
        ("K=0,P=0", SelectionMode::Cutoff { k: 0 }),
        ("K=0,P=0.15", SelectionMode::Proportional { p: 0.15 }),
        ("K=5,P=0", SelectionMode::Cutoff { k: 5 }),
    ]
}

/// Aggregates of one engine under one setting.
#[derive(Debug, Clone, PartialEq)]
pub struct SettingSummary {
    pub setting: String,
    pub mode: SelectionMode,
    pub accuracy: MeanStd,
    pub macro_f1: MeanStd,
    pub micro_f1: MeanStd,
    pub carefulness: Option<MeanStd>,
}

/// Spread of an engine's mean accuracy across the three settings: a
/// plausible range of its real performance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccuracyRange {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

/// Result of one engine in a comparison. A failed engine carries its error
/// text and no summaries.
#[derive(Debug, Clone, PartialEq)]
pub struct EngineOutcome {
    pub name: String,
    pub error: Option<String>,
    pub accuracy_range: Option<AccuracyRange>,
    pub settings: Vec<SettingSummary>,
}

impl EngineOutcome {
    pub fn succeeded(&self) -> bool {
        self.error.is_none()
    }
}

/// Side-by-side comparison of engines across the canonical settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub dataset_name: String,
    pub engines: Vec<EngineOutcome>,
}

impl ComparisonReport {
    pub fn any_succeeded(&self) -> bool {
        self.engines.iter().any(EngineOutcome::succeeded)
    }
}

/// Runs every named engine under each canonical setting with the shared
/// base configuration (test fraction, retries, threshold, seed — the mode
/// is overridden per setting, so every engine sees identical splits). An
/// engine failure marks that engine failed without aborting the others.
pub fn compare(
    dataset: &Dataset,
    base_config: &NexCvConfig,
    engines: &[(&str, &ClassifierFactory<'_>)],
) -> Result<ComparisonReport> {
    if engines.is_empty() {
        return Err(Error::InvalidParameter(
            "comparison needs at least one engine".into(),
        ));
    }
    let mut outcomes = Vec::with_capacity(engines.len());
    for (name, factory) in engines {
        let mut summaries = Vec::new();
        let mut failure = None;
        for (setting, mode) in canonical_settings() {
            let config = NexCvConfig {
                mode,
                ..base_config.clone()
            };
            match run_nexcv(dataset, &config, factory) {
                Ok(report) => summaries.push(SettingSummary {
                    setting: setting.to_string(),
                    mode,
                    accuracy: report.aggregate.accuracy,
                    macro_f1: report.aggregate.macro_f1,
                    micro_f1: report.aggregate.micro_f1,
                    carefulness: report.aggregate.carefulness,
                }),
                Err(e) => {
                    failure = Some(format!("setting {setting}: {e}"));
                    break;
                }
            }
        }
        let outcome = match failure {
            Some(error) => EngineOutcome {
                name: name.to_string(),
                error: Some(error),
                accuracy_range: None,
                settings: Vec::new(),
            },
            None => {
                let means: Vec<f64> = summaries.iter().map(|s| s.accuracy.mean).collect();
                let range = AccuracyRange {
                    min: means.iter().cloned().fold(f64::INFINITY, f64::min),
                    mean: means.iter().sum::<f64>() / means.len() as f64,
                    max: means.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                };
                EngineOutcome {
                    name: name.to_string(),
                    error: None,
                    accuracy_range: Some(range),
                    settings: summaries,
                }
            }
        };
        outcomes.push(outcome);
    }
    Ok(ComparisonReport {
        dataset_name: dataset.name.clone(),
        engines: outcomes,
    })
}

/// Result of the functional sanity check against plain 5-fold
/// cross-validation.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricValidation {
    pub nexcv_accuracy: f64,
    pub kfold_accuracy: f64,
    pub difference: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// With no negative examples selected, the evaluation must estimate the
/// same quantity as ordinary cross-validation. Runs the no-negatives
/// setting (10 retries, test fraction 0.2) and 5-fold CV with the same
/// classifier and passes when the mean accuracies agree within `tolerance`.
pub fn validate_metric(
    dataset: &Dataset,
    factory: &ClassifierFactory<'_>,
    tolerance: f64,
    seed: u64,
) -> Result<MetricValidation> {
    if tolerance < 0.0 {
        return Err(Error::InvalidParameter(
            "tolerance must be non-negative".into(),
        ));
    }
    let config = NexCvConfig {
        mode: SelectionMode::Cutoff { k: 0 },
        test_fraction: 0.2,
        retries: 10,
        confidence_threshold: 0.5,
        seed,
    };
    let nexcv_accuracy = run_nexcv(dataset, &config, factory)?.aggregate.accuracy.mean;

    let folds = kfold_splits(dataset, 5, seed)?;
    let mut fold_accuracies = Vec::with_capacity(folds.len());
    for split in &folds {
        let mut classifier = factory()?;
        let evaluation =
            evaluate_split(classifier.as_mut(), &split, config.confidence_threshold)?;
        fold_accuracies.push(evaluation.metrics.accuracy);
    }
    let kfold_accuracy = fold_accuracies.iter().sum::<f64>() / fold_accuracies.len() as f64;

    let difference = (nexcv_accuracy - kfold_accuracy).abs();
    Ok(MetricValidation {
        nexcv_accuracy,
        kfold_accuracy,
        difference,
        tolerance,
        passed: difference <= tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{BaselineClassifier, Prediction};
    use crate::dataset::{generate_synthetic, LabeledExample, SynthSpec};
    use crate::partition::TestItem;

    /// Predicts the first whitespace token of the text as the label with
    /// confidence 1.0. Datasets used with it put the class in the text.
    struct Oracular;
    impl Classifier for Oracular {
        fn fit(&mut self, _: &[LabeledExample]) -> Result<()> {
            Ok(())
        }
        fn predict(&self, text: &str) -> Result<Prediction> {
            Ok(Prediction {
                label: text.split_whitespace().next().unwrap_or("?").to_string(),
                confidence: 1.0,
            })
        }
    }

    /// Always abstains; the recorded guess never matches any real label.
    struct AlwaysAbstain;
    impl Classifier for AlwaysAbstain {
        fn fit(&mut self, _: &[LabeledExample]) -> Result<()> {
            Ok(())
        }
        fn predict(&self, _: &str) -> Result<Prediction> {
            Ok(Prediction {
                label: "never_right".into(),
                confidence: 0.0,
            })
        }
    }

    /// Answers from a fixed text -> (label, confidence) table.
    struct Scripted(BTreeMap<String, (String, f64)>);
    impl Classifier for Scripted {
        fn fit(&mut self, _: &[LabeledExample]) -> Result<()> {
            Ok(())
        }
        fn predict(&self, text: &str) -> Result<Prediction> {
            let (label, confidence) = self.0.get(text).cloned().expect("scripted text");
            Ok(Prediction { label, confidence })
        }
    }

    fn real_item(text: &str, gold: &str) -> TestItem {
        TestItem {
            text: text.into(),
            gold: Gold::Label(gold.into()),
            origin_label: gold.into(),
        }
    }

    fn oos_item(text: &str, origin: &str) -> TestItem {
        TestItem {
            text: text.into(),
            gold: Gold::OutOfScope,
            origin_label: origin.into(),
        }
    }

    fn train_pair() -> Vec<LabeledExample> {
        vec![
            LabeledExample::new("A one", "A").unwrap(),
            LabeledExample::new("B one", "B").unwrap(),
        ]
    }

    #[test]
    fn perfect_classifier_scores_one() {
        let split = DataSplit {
            train: train_pair(),
            test: vec![real_item("A x", "A"), real_item("B y", "B")],
        };
        let eval = evaluate_split(&mut Oracular, &split, 0.5).unwrap();
        assert_eq!(eval.metrics.accuracy, 1.0);
    }

    #[test]
    fn abstainer_is_right_exactly_on_out_of_scope() {
        let mut test = Vec::new();
        for i in 0..4 {
            test.push(real_item(&format!("real {i}"), "A"));
        }
        for i in 0..6 {
            test.push(oos_item(&format!("oos {i}"), "small"));
        }
        let split = DataSplit {
            train: train_pair(),
            test,
        };
        let eval = evaluate_split(&mut AlwaysAbstain, &split, 0.5).unwrap();
        assert!((eval.metrics.accuracy - 0.6).abs() < 1e-12);
        assert_eq!(eval.matrix.count(OUT_OF_SCOPE, ABSTAIN_LABEL), 6);
        assert_eq!(eval.matrix.count("A", ABSTAIN_LABEL), 4);
    }

    #[test]
    fn hand_counted_mixed_outcomes() {
        // 7 answered-correct, 2 answered-wrong, 1 abstain on a real gold.
        let mut script = BTreeMap::new();
        let mut test = Vec::new();
        for i in 0..7 {
            let text = format!("ok {i}");
            script.insert(text.clone(), ("A".to_string(), 0.9));
            test.push(real_item(&text, "A"));
        }
        for i in 0..2 {
            let text = format!("wrong {i}");
            script.insert(text.clone(), ("B".to_string(), 0.8));
            test.push(real_item(&text, "A"));
        }
        script.insert("shy".into(), ("A".to_string(), 0.2));
        test.push(real_item("shy", "B"));

        let split = DataSplit {
            train: train_pair(),
            test,
        };
        let eval = evaluate_split(&mut Scripted(script), &split, 0.5).unwrap();
        assert!((eval.metrics.accuracy - 0.7).abs() < 1e-12);

        // Row sums equal the gold counts.
        let rows = eval.matrix.row_sums();
        assert_eq!(rows["A"], 9);
        assert_eq!(rows["B"], 1);
        assert_eq!(eval.matrix.count("A", "A"), 7);
        assert_eq!(eval.matrix.count("A", "B"), 2);
        assert_eq!(eval.matrix.count("B", ABSTAIN_LABEL), 1);
    }

    #[test]
    fn accuracy_decomposes_into_diagonal_plus_rejected_negatives() {
        let mut script = BTreeMap::new();
        let mut test = Vec::new();
        for (i, (gold, guess, conf)) in [
            ("A", "A", 0.9),
            ("A", "B", 0.9),
            ("A", "A", 0.3),
            ("B", "B", 0.7),
            ("B", "A", 0.2),
        ]
        .iter()
        .enumerate()
        {
            let text = format!("t{i}");
            script.insert(text.clone(), (guess.to_string(), *conf));
            test.push(real_item(&text, gold));
        }
        for (i, conf) in [0.1, 0.9].iter().enumerate() {
            let text = format!("n{i}");
            script.insert(text.clone(), ("A".to_string(), *conf));
            test.push(oos_item(&text, "tail"));
        }
        let split = DataSplit {
            train: train_pair(),
            test,
        };
        let eval = evaluate_split(&mut Scripted(script), &split, 0.5).unwrap();
        let diagonal: usize = ["A", "B"]
            .iter()
            .map(|l| eval.matrix.count(l, l))
            .sum();
        let rejected_negatives = eval.matrix.count(OUT_OF_SCOPE, ABSTAIN_LABEL);
        let expected = (diagonal + rejected_negatives) as f64 / eval.outcomes.len() as f64;
        assert_eq!(eval.metrics.accuracy, expected);
    }

    #[test]
    fn raising_the_threshold_never_answers_more() {
        let spec = SynthSpec {
            n_large: 3,
            large_size: 20,
            n_small: 0,
            overlap_fraction: 0.0,
            seed: 5,
            ..SynthSpec::default()
        };
        let ds = generate_synthetic(&spec).unwrap();
        let part = crate::partition::select_cutoff(&class_stats(&ds), 0);
        let split = provision(&ds, &part, 0.2, 1).unwrap();
        let mut answered_counts = Vec::new();
        for threshold in [0.0, 0.3, 0.5, 0.8, 1.0] {
            let mut clf = BaselineClassifier::default();
            let eval = evaluate_split(&mut clf, &split, threshold).unwrap();
            answered_counts.push(eval.outcomes.iter().filter(|o| o.answered).count());
        }
        for pair in answered_counts.windows(2) {
            assert!(pair[1] <= pair[0]);
        }
    }

    #[test]
    fn carefulness_hand_values() {
        // 10 abstentions, 7 with a wrong guess.
        let mut outcomes = Vec::new();
        for i in 0..10 {
            outcomes.push(Outcome {
                gold: Gold::Label("A".into()),
                guess: if i < 7 { "B".into() } else { "A".into() },
                confidence: 0.1,
                answered: false,
            });
        }
        assert_eq!(carefulness(&outcomes), Some(0.7));
    }

    #[test]
    fn carefulness_is_undefined_without_abstentions() {
        let outcomes = vec![Outcome {
            gold: Gold::Label("A".into()),
            guess: "A".into(),
            confidence: 0.9,
            answered: true,
        }];
        assert_eq!(carefulness(&outcomes), None);
        assert_eq!(carefulness(&[]), None);
    }

    #[test]
    fn carefulness_counts_every_out_of_scope_guess_as_wrong() {
        let outcomes: Vec<Outcome> = (0..5)
            .map(|i| Outcome {
                gold: Gold::OutOfScope,
                guess: format!("label{i}"),
                confidence: 0.4,
                answered: false,
            })
            .collect();
        assert_eq!(carefulness(&outcomes), Some(1.0));
    }

    #[test]
    fn pair_ranking_sums_symmetric_mass() {
        let mut m = ConfusionMatrix::new();
        m.add_count("A", "B", 5);
        m.add_count("B", "A", 3);
        m.add_count("A", "C", 1);
        let ranking = pair_ranking(&m);
        assert_eq!(ranking.len(), 2);
        assert_eq!((ranking[0].a.as_str(), ranking[0].b.as_str(), ranking[0].score), ("A", "B", 8));
        assert_eq!((ranking[1].a.as_str(), ranking[1].b.as_str(), ranking[1].score), ("A", "C", 1));
    }

    #[test]
    fn diagonal_only_matrix_ranks_nothing() {
        let mut m = ConfusionMatrix::new();
        m.add_count("A", "A", 10);
        m.add_count("B", "B", 4);
        m.add_count(OUT_OF_SCOPE, ABSTAIN_LABEL, 3);
        m.add_count("A", ABSTAIN_LABEL, 2);
        m.add_count(OUT_OF_SCOPE, "A", 2);
        assert!(pair_ranking(&m).is_empty());
    }

    #[test]
    fn pair_ties_break_lexicographically() {
        let mut m = ConfusionMatrix::new();
        m.add_count("C", "D", 2);
        m.add_count("A", "B", 2);
        let ranking = pair_ranking(&m);
        assert_eq!(ranking[0].a, "A");
        assert_eq!(ranking[1].a, "C");
    }

    fn baseline_factory() -> Box<ClassifierFactory<'static>> {
        Box::new(|| Ok(Box::new(BaselineClassifier::default()) as Box<dyn Classifier>))
    }

    #[test]
    fn separable_data_scores_high_without_negatives() {
        let spec = SynthSpec {
            n_large: 4,
            large_size: 30,
            n_small: 0,
            overlap_fraction: 0.0,
            seed: 2,
            ..SynthSpec::default()
        };
        let ds = generate_synthetic(&spec).unwrap();
        let config = NexCvConfig {
            mode: SelectionMode::Cutoff { k: 0 },
            retries: 5,
            seed: 11,
            ..NexCvConfig::default()
        };
        let report = run_nexcv(&ds, &config, &*baseline_factory()).unwrap();
        assert!(report.aggregate.accuracy.mean >= 0.9);
        assert!(report.partition.small.is_empty());
        // With no candidates there are never out-of-scope outcomes.
        assert!(report.retries.iter().all(|r| r.negatives_in_test == 0));
        assert_eq!(report.confusion.count(OUT_OF_SCOPE, ABSTAIN_LABEL), 0);
    }

    #[test]
    fn proportional_selection_is_data_dependent_not_seed_dependent() {
        let mut examples = Vec::new();
        for i in 0..10 {
            examples.push(LabeledExample::new(format!("A reda{i}"), "A").unwrap());
        }
        for i in 0..3 {
            examples.push(LabeledExample::new(format!("B greenb{i}"), "B").unwrap());
        }
        for i in 0..2 {
            examples.push(LabeledExample::new(format!("C bluec{i}"), "C").unwrap());
        }
        let ds = Dataset::new("t", examples);
        let config = NexCvConfig {
            mode: SelectionMode::Proportional { p: 0.15 },
            retries: 4,
            seed: 99,
            ..NexCvConfig::default()
        };
        let report =
            run_nexcv(&ds, &config, &|| Ok(Box::new(Oracular) as Box<dyn Classifier>)).unwrap();
        let small: Vec<&str> = report.partition.small.iter().map(String::as_str).collect();
        assert_eq!(small, vec!["B", "C"]);
        // Every retry holds out at least one candidate class whole.
        assert!(report.retries.iter().all(|r| r.negatives_in_test > 0));
    }

    #[test]
    fn report_keeps_one_record_per_retry_and_exact_means() {
        let spec = SynthSpec {
            n_large: 3,
            large_size: 12,
            n_small: 0,
            seed: 8,
            ..SynthSpec::default()
        };
        let ds = generate_synthetic(&spec).unwrap();
        let config = NexCvConfig {
            mode: SelectionMode::Cutoff { k: 0 },
            retries: 10,
            seed: 3,
            ..NexCvConfig::default()
        };
        let report =
            run_nexcv(&ds, &config, &|| Ok(Box::new(Oracular) as Box<dyn Classifier>)).unwrap();
        assert_eq!(report.retries.len(), 10);
        let mean = report.retries.iter().map(|r| r.accuracy).sum::<f64>() / 10.0;
        assert!((report.aggregate.accuracy.mean - mean).abs() <= 1e-12);
    }

    #[test]
    fn retry_failures_carry_the_index() {
        struct FailingFit;
        impl Classifier for FailingFit {
            fn fit(&mut self, _: &[LabeledExample]) -> Result<()> {
                Err(Error::InvalidTrainingData("nope".into()))
            }
            fn predict(&self, _: &str) -> Result<Prediction> {
                unreachable!()
            }
        }
        let spec = SynthSpec {
            n_large: 2,
            large_size: 10,
            n_small: 0,
            seed: 0,
            ..SynthSpec::default()
        };
        let ds = generate_synthetic(&spec).unwrap();
        let config = NexCvConfig {
            retries: 3,
            ..NexCvConfig::default()
        };
        match run_nexcv(&ds, &config, &|| {
            Ok(Box::new(FailingFit) as Box<dyn Classifier>)
        }) {
            Err(Error::RetryFailed { retry: 0, .. }) => {}
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn evaluation_is_deterministic_apart_from_timing() {
        let spec = SynthSpec {
            n_large: 3,
            large_size: 15,
            n_small: 4,
            small_size_range: (3, 5),
            overlap_fraction: 0.2,
            seed: 21,
            ..SynthSpec::default()
        };
        let ds = generate_synthetic(&spec).unwrap();
        let config = NexCvConfig {
            mode: SelectionMode::Proportional { p: 0.1 },
            retries: 3,
            seed: 7,
            ..NexCvConfig::default()
        };
        let a = run_nexcv(&ds, &config, &*baseline_factory()).unwrap();
        let b = run_nexcv(&ds, &config, &*baseline_factory()).unwrap();
        assert_eq!(a.aggregate, b.aggregate);
        assert_eq!(a.confusion, b.confusion);
        assert_eq!(a.pairs, b.pairs);
        assert_eq!(a.examples, b.examples);
        for (ra, rb) in a.retries.iter().zip(&b.retries) {
            assert_eq!(ra.accuracy, rb.accuracy);
            assert_eq!(ra.macro_f1, rb.macro_f1);
            assert_eq!(ra.micro_f1, rb.micro_f1);
            assert_eq!(ra.carefulness, rb.carefulness);
            assert_eq!(ra.train_size, rb.train_size);
            assert_eq!(ra.test_size, rb.test_size);
            assert_eq!(ra.negatives_in_test, rb.negatives_in_test);
        }
    }

    #[test]
    fn comparing_baseline_with_abstainer() {
        let spec = SynthSpec {
            n_large: 3,
            large_size: 25,
            n_small: 6,
            small_size_range: (3, 5),
            overlap_fraction: 0.0,
            seed: 13,
            ..SynthSpec::default()
        };
        let ds = generate_synthetic(&spec).unwrap();
        let base = NexCvConfig {
            retries: 3,
            seed: 5,
            ..NexCvConfig::default()
        };
        let builtin = baseline_factory();
        let abstain: Box<ClassifierFactory<'static>> =
            Box::new(|| Ok(Box::new(AlwaysAbstain) as Box<dyn Classifier>));
        let report = compare(&ds, &base, &[("builtin", &*builtin), ("abstain", &*abstain)]).unwrap();
        assert_eq!(report.engines.len(), 2);
        let builtin_range = report.engines[0].accuracy_range.unwrap();
        let abstain_range = report.engines[1].accuracy_range.unwrap();
        // Positive-heavy data: an abstainer only ever scores the negatives.
        assert!(builtin_range.min > abstain_range.max);
        for summary in &report.engines[1].settings {
            if let Some(c) = summary.carefulness {
                assert_eq!(c.mean, 1.0);
            }
        }
    }

    #[test]
    fn failed_engine_does_not_abort_comparison() {
        struct Exploding;
        impl Classifier for Exploding {
            fn fit(&mut self, _: &[LabeledExample]) -> Result<()> {
                Err(Error::InvalidTrainingData("boom".into()))
            }
            fn predict(&self, _: &str) -> Result<Prediction> {
                unreachable!()
            }
        }
        let spec = SynthSpec {
            n_large: 3,
            large_size: 15,
            n_small: 0,
            seed: 4,
            ..SynthSpec::default()
        };
        let ds = generate_synthetic(&spec).unwrap();
        let base = NexCvConfig {
            retries: 2,
            ..NexCvConfig::default()
        };
        let bad: Box<ClassifierFactory<'static>> =
            Box::new(|| Ok(Box::new(Exploding) as Box<dyn Classifier>));
        let good = baseline_factory();
        let report = compare(&ds, &base, &[("bad", &*bad), ("good", &*good)]).unwrap();
        assert!(!report.engines[0].succeeded());
        assert!(report.engines[0].error.as_deref().unwrap().contains("boom"));
        assert!(report.engines[1].succeeded());
        assert!(report.any_succeeded());
    }

    #[test]
    fn identical_factories_produce_identical_ranges() {
        let spec = SynthSpec {
            n_large: 3,
            large_size: 15,
            n_small: 4,
            small_size_range: (3, 4),
            seed: 6,
            ..SynthSpec::default()
        };
        let ds = generate_synthetic(&spec).unwrap();
        let base = NexCvConfig {
            retries: 2,
            seed: 42,
            ..NexCvConfig::default()
        };
        let one = baseline_factory();
        let two = baseline_factory();
        let report = compare(&ds, &base, &[("one", &*one), ("two", &*two)]).unwrap();
        assert_eq!(
            report.engines[0].accuracy_range,
            report.engines[1].accuracy_range
        );
    }

    #[test]
    fn single_engine_comparison_degenerates_to_three_settings() {
        let spec = SynthSpec {
            n_large: 3,
            large_size: 15,
            n_small: 0,
            seed: 9,
            ..SynthSpec::default()
        };
        let ds = generate_synthetic(&spec).unwrap();
        let base = NexCvConfig {
            retries: 2,
            ..NexCvConfig::default()
        };
        let builtin = baseline_factory();
        let report = compare(&ds, &base, &[("builtin", &*builtin)]).unwrap();
        assert_eq!(report.engines.len(), 1);
        assert_eq!(report.engines[0].settings.len(), 3);
    }

    #[test]
    fn abstainer_passes_the_functional_check_degenerately() {
        let spec = SynthSpec {
            n_large: 3,
            large_size: 20,
            n_small: 0,
            seed: 10,
            ..SynthSpec::default()
        };
        let ds = generate_synthetic(&spec).unwrap();
        let abstain: Box<ClassifierFactory<'static>> =
            Box::new(|| Ok(Box::new(AlwaysAbstain) as Box<dyn Classifier>));
        let validation = validate_metric(&ds, &*abstain, 0.03, 1).unwrap();
        assert_eq!(validation.nexcv_accuracy, 0.0);
        assert_eq!(validation.kfold_accuracy, 0.0);
        assert!(validation.passed);
    }
}
