//! The black-box classifier contract and its bundled implementations.
//!
//! Everything downstream of provisioning treats a classifier as an opaque
//! box: train it on labeled text, then ask it for one ranked guess with a
//! confidence in `[0, 1]`. Any system that can be wrapped to that contract
//! can be evaluated and compared — the bundled [`BaselineClassifier`] and
//! the subprocess-backed [`ExternalClassifier`] are just two wrappings.
//! [`consistency_check`] probes a wrapper against the contract before any
//! results are trusted:
//!
//! ```
//! use nexcv::{consistency_check, BaselineClassifier, Dataset, LabeledExample};
//!
//! let probe = Dataset::new(
//!     "probe",
//!     vec![
//!         LabeledExample::new("where do I apply", "apply")?,
//!         LabeledExample::new("how do I submit an application", "apply")?,
//!         LabeledExample::new("what does the role pay", "salary")?,
//!         LabeledExample::new("is the salary negotiable", "salary")?,
//!     ],
//! );
//! let mut classifier = BaselineClassifier::default();
//! let report = consistency_check(&mut classifier, &probe)?;
//! assert!(report.conformant());
//! # Ok::<(), nexcv::Error>(())
//! ```

mod baseline;
mod external;

pub use baseline::{tokenize, BaselineClassifier, BaselineHyper, BaselineModel};
pub use external::{serve_protocol, EngineCommand, ExternalClassifier};

#[doc(hidden)]
pub use baseline::training_loss_and_gradient;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, LabeledExample};
use crate::error::{Error, Result};

/// A classifier's single ranked guess.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: String,
    /// In `[0, 1]`. Whether the guess is *answered* is decided downstream
    /// by thresholding; the classifier itself never abstains.
    pub confidence: f64,
}

/// Behavioral contract for anything under evaluation.
///
/// * `predict` before a successful `fit` is an error.
/// * After `fit`, `predict` must be deterministic: the same text yields the
///   same prediction, and refitting on the same data must reproduce the
///   same predictions.
pub trait Classifier {
    fn fit(&mut self, train: &[LabeledExample]) -> Result<()>;
    fn predict(&self, text: &str) -> Result<Prediction>;
}

/// Constructor for fresh classifier instances; each evaluation retry gets
/// its own instance.
pub type ClassifierFactory<'a> = dyn Fn() -> Result<Box<dyn Classifier>> + 'a;

/// Result of one wrapper-conformance check.
#[derive(Debug, Clone, Serialize)]
pub struct ConsistencyCheck {
    pub name: &'static str,
    pub passed: bool,
    /// Explanation of the failure, when there is one.
    pub detail: Option<String>,
}

/// Outcome of [`consistency_check`].
#[derive(Debug, Clone, Serialize)]
pub struct ConsistencyReport {
    pub checks: Vec<ConsistencyCheck>,
}

impl ConsistencyReport {
    pub fn conformant(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// Names of the checks that failed.
    pub fn failures(&self) -> Vec<&'static str> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name)
            .collect()
    }
}

/// Exercises a classifier wrapper against the contract on a small probe
/// dataset: fit-then-predict succeeds, predictions are deterministic,
/// confidences stay in bounds, predicted labels come from the trained label
/// set, and refitting reproduces the same predictions.
pub fn consistency_check(
    classifier: &mut dyn Classifier,
    probe: &Dataset,
) -> Result<ConsistencyReport> {
    let labels = probe.labels();
    if labels.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "probe dataset needs at least 2 classes, found {}",
            labels.len()
        )));
    }

    let mut checks = Vec::new();
    let mut pass = |name: &'static str, passed: bool, detail: Option<String>| {
        checks.push(ConsistencyCheck {
            name,
            passed,
            detail,
        });
        passed
    };

    if let Err(e) = classifier.fit(&probe.examples) {
        pass("fit_succeeds", false, Some(e.to_string()));
        return Ok(ConsistencyReport { checks });
    }

    // Two immediately repeated calls per text: catches wrappers whose
    // answers drift with call count, not just with input.
    let mut first_round = Vec::with_capacity(probe.len());
    let mut predict_error = None;
    let mut nondeterminism = None;
    for ex in &probe.examples {
        match (classifier.predict(&ex.text), classifier.predict(&ex.text)) {
            (Ok(first), Ok(second)) => {
                if nondeterminism.is_none() && second != first {
                    nondeterminism = Some(format!(
                        "text {:?} predicted ({}, {}) then ({}, {})",
                        ex.text, first.label, first.confidence, second.label, second.confidence
                    ));
                }
                first_round.push(first);
            }
            (Err(e), _) | (_, Err(e)) => {
                predict_error = Some(e.to_string());
                break;
            }
        }
    }
    if !pass("fit_succeeds", predict_error.is_none(), predict_error) {
        return Ok(ConsistencyReport { checks });
    }
    pass("predict_deterministic", nondeterminism.is_none(), nondeterminism);

    let out_of_bounds = first_round
        .iter()
        .find(|p| !(0.0..=1.0).contains(&p.confidence))
        .map(|p| format!("confidence {} outside [0, 1]", p.confidence));
    pass("confidence_in_bounds", out_of_bounds.is_none(), out_of_bounds);

    let unknown_label = first_round
        .iter()
        .find(|p| !labels.contains(&p.label.as_str()))
        .map(|p| format!("predicted label {:?} was never trained", p.label));
    pass("labels_from_training_set", unknown_label.is_none(), unknown_label);

    let refit_mismatch = match classifier.fit(&probe.examples) {
        Err(e) => Some(format!("refit failed: {e}")),
        Ok(()) => {
            let mut mismatch = None;
            for (ex, first) in probe.examples.iter().zip(&first_round) {
                match classifier.predict(&ex.text) {
                    Ok(p) if p == *first => {}
                    Ok(p) => {
                        mismatch = Some(format!(
                            "after refit, text {:?} moved from ({}, {}) to ({}, {})",
                            ex.text, first.label, first.confidence, p.label, p.confidence
                        ));
                        break;
                    }
                    Err(e) => {
                        mismatch = Some(e.to_string());
                        break;
                    }
                }
            }
            mismatch
        }
    };
    pass("refit_reproducible", refit_mismatch.is_none(), refit_mismatch);

    Ok(ConsistencyReport { checks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Dataset;

    fn probe() -> Dataset {
        let rows = [
            ("alpha one", "A"),
            ("alpha two", "A"),
            ("alpha three", "A"),
            ("beta one", "B"),
            ("beta two", "B"),
            ("beta three", "B"),
        ];
        Dataset::new(
            "probe",
            rows.iter()
                .map(|(t, l)| LabeledExample::new(*t, *l).unwrap())
                .collect(),
        )
    }

    struct OverconfidentStub;
    impl Classifier for OverconfidentStub {
        fn fit(&mut self, _: &[LabeledExample]) -> Result<()> {
            Ok(())
        }
        fn predict(&self, _: &str) -> Result<Prediction> {
            Ok(Prediction {
                label: "A".into(),
                confidence: 1.7,
            })
        }
    }

    struct AlternatingStub {
        calls: std::cell::Cell<usize>,
    }
    impl Classifier for AlternatingStub {
        fn fit(&mut self, _: &[LabeledExample]) -> Result<()> {
            Ok(())
        }
        fn predict(&self, _: &str) -> Result<Prediction> {
            let n = self.calls.get();
            self.calls.set(n + 1);
            Ok(Prediction {
                label: if n % 2 == 0 { "A" } else { "B" }.into(),
                confidence: 0.9,
            })
        }
    }

    #[test]
    fn baseline_passes_all_checks() {
        let mut clf = BaselineClassifier::default();
        let report = consistency_check(&mut clf, &probe()).unwrap();
        assert!(report.conformant(), "failures: {:?}", report.failures());
        assert_eq!(report.checks.len(), 5);
    }

    #[test]
    fn out_of_bounds_confidence_is_caught() {
        let report = consistency_check(&mut OverconfidentStub, &probe()).unwrap();
        assert!(!report.conformant());
        assert!(report.failures().contains(&"confidence_in_bounds"));
    }

    #[test]
    fn alternating_predictions_fail_determinism() {
        let mut stub = AlternatingStub {
            calls: std::cell::Cell::new(0),
        };
        let report = consistency_check(&mut stub, &probe()).unwrap();
        assert!(!report.conformant());
        assert!(report.failures().contains(&"predict_deterministic"));
    }

    #[test]
    fn probe_needs_two_classes() {
        let tiny = Dataset::new(
            "one",
            vec![LabeledExample::new("x", "A").unwrap()],
        );
        assert!(consistency_check(&mut BaselineClassifier::default(), &tiny).is_err());
    }
}
