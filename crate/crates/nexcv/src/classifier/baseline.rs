//! Bundled baseline: token features into L2-regularized multinomial
//! logistic regression.
//!
//! The feature pipeline is sublinear TF times smoothed IDF, L2-normalized
//! per document. The optimizer is deterministic full-batch gradient descent
//! with a halving step size, so the same training data always produces the
//! same weights, on any platform. Inputs made entirely of unknown tokens
//! map to the zero vector and are scored by the bias alone, which is
//! exactly the path an out-of-scope message should take: the resulting
//! confidence approaches the class prior and falls under any reasonable
//! answer threshold.

use std::collections::BTreeMap;

use crate::classifier::{Classifier, Prediction};
use crate::dataset::LabeledExample;
use crate::error::{Error, Result};

/// Lowercases and splits on every non-alphanumeric boundary (Unicode-aware),
/// dropping empty tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(String::from)
        .collect()
}

/// Training hyperparameters for the baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineHyper {
    /// Coefficient of the `(l2/2)·‖W‖²` penalty on the per-example-averaged
    /// loss. The bias is not penalized, so very strong regularization
    /// shrinks confidences toward the class priors rather than uniform.
    pub l2_strength: f64,
    pub max_epochs: usize,
    /// Stop once the gradient norm falls at or below this.
    pub tolerance: f64,
    /// Reserved for stochastic optimizers; the batch optimizer is
    /// deterministic and does not consume it.
    pub seed: u64,
}

impl Default for BaselineHyper {
    fn default() -> Self {
        Self {
            l2_strength: 1e-3,
            max_epochs: 500,
            tolerance: 1e-6,
            seed: 0,
        }
    }
}

/// A trained baseline model. Immutable after [`BaselineModel::fit`]; safe
/// for concurrent `predict` calls.
#[derive(Debug, Clone)]
pub struct BaselineModel {
    labels: Vec<String>,
    vocabulary: BTreeMap<String, usize>,
    idf: Vec<f64>,
    /// Row-major `n_classes × n_features`.
    weights: Vec<f64>,
    bias: Vec<f64>,
    loss_trace: Vec<f64>,
}

impl BaselineModel {
    /// Trains on `train` with the given hyperparameters. Requires at least
    /// two distinct labels and at least one non-empty token list.
    pub fn fit(train: &[LabeledExample], hyper: &BaselineHyper) -> Result<Self> {
        let mut labels: Vec<String> = train.iter().map(|e| e.label.clone()).collect();
        labels.sort();
        labels.dedup();
        if labels.len() < 2 {
            return Err(Error::InvalidTrainingData(format!(
                "need at least 2 distinct labels, found {}",
                labels.len()
            )));
        }
        let class_of: BTreeMap<&str, usize> = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.as_str(), i))
            .collect();

        let tokenized: Vec<Vec<String>> = train.iter().map(|e| tokenize(&e.text)).collect();
        let mut vocabulary: BTreeMap<String, usize> = BTreeMap::new();
        let mut df: BTreeMap<&str, usize> = BTreeMap::new();
        for tokens in &tokenized {
            let mut seen: Vec<&str> = tokens.iter().map(String::as_str).collect();
            seen.sort_unstable();
            seen.dedup();
            for tok in seen {
                *df.entry(tok).or_insert(0) += 1;
            }
        }
        for tok in df.keys() {
            let next = vocabulary.len();
            vocabulary.insert(tok.to_string(), next);
        }
        if vocabulary.is_empty() {
            return Err(Error::InvalidTrainingData(
                "every training text tokenized to nothing".into(),
            ));
        }

        let n_docs = train.len();
        let mut idf = vec![0.0; vocabulary.len()];
        for (tok, &count) in &df {
            let j = vocabulary[*tok];
            idf[j] = ((1.0 + n_docs as f64) / (1.0 + count as f64)).ln() + 1.0;
        }

        let features: Vec<Vec<(usize, f64)>> = tokenized
            .iter()
            .map(|tokens| vectorize(tokens, &vocabulary, &idf))
            .collect();
        let class_ids: Vec<usize> = train.iter().map(|e| class_of[e.label.as_str()]).collect();

        let n_classes = labels.len();
        let n_features = vocabulary.len();
        let mut weights = vec![0.0; n_classes * n_features];
        let mut bias = vec![0.0; n_classes];

        let (mut loss, mut grad_w, mut grad_b) = training_loss_and_gradient(
            &features,
            &class_ids,
            n_classes,
            n_features,
            &weights,
            &bias,
            hyper.l2_strength,
        );
        let mut trace = vec![loss];
        let mut step = 1.0_f64;
        for _ in 0..hyper.max_epochs {
            let grad_norm = (grad_w.iter().chain(&grad_b).map(|g| g * g).sum::<f64>()).sqrt();
            if grad_norm <= hyper.tolerance {
                break;
            }
            let mut accepted = false;
            while step > 1e-12 {
                // Descend on the data term, then apply the L2 penalty by its
                // exact shrinkage step. At the fixed point the full gradient
                // (including the penalty) is zero, and strong regularization
                // cannot destabilize the step the way a raw `l2·w` gradient
                // term would.
                let shrink = 1.0 + step * hyper.l2_strength;
                let cand_w: Vec<f64> = weights
                    .iter()
                    .zip(&grad_w)
                    .map(|(w, g)| {
                        let data_grad = g - hyper.l2_strength * w;
                        (w - step * data_grad) / shrink
                    })
                    .collect();
                let cand_b: Vec<f64> =
                    bias.iter().zip(&grad_b).map(|(b, g)| b - step * g).collect();
                let (cand_loss, cand_gw, cand_gb) = training_loss_and_gradient(
                    &features,
                    &class_ids,
                    n_classes,
                    n_features,
                    &cand_w,
                    &cand_b,
                    hyper.l2_strength,
                );
                if cand_loss <= loss {
                    weights = cand_w;
                    bias = cand_b;
                    loss = cand_loss;
                    grad_w = cand_gw;
                    grad_b = cand_gb;
                    accepted = true;
                    // Grow the step again after a run of accepted steps;
                    // plain halving leaves the flat tail of the loss
                    // under-trained within the epoch budget.
                    step = (step * 1.25).min(64.0);
                    break;
                }
                step /= 2.0;
            }
            if !accepted {
                break;
            }
            trace.push(loss);
        }

        if weights.iter().chain(&bias).any(|w| !w.is_finite()) {
            return Err(Error::InvalidTrainingData(
                "training diverged to non-finite weights".into(),
            ));
        }

        Ok(Self {
            labels,
            vocabulary,
            idf,
            weights,
            bias,
            loss_trace: trace,
        })
    }

    /// Class labels in index order.
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    /// Full-batch loss after each accepted descent step, starting with the
    /// loss at initialization. Non-increasing by construction.
    pub fn loss_trace(&self) -> &[f64] {
        &self.loss_trace
    }

    /// Softmax probabilities for `text`, ordered like [`BaselineModel::labels`].
    /// Unknown tokens contribute nothing; a text with no known tokens is
    /// scored by the bias alone.
    pub fn class_probabilities(&self, text: &str) -> Vec<f64> {
        let tokens = tokenize(text);
        let x = vectorize(&tokens, &self.vocabulary, &self.idf);
        let n_features = self.vocabulary.len();
        let scores: Vec<f64> = (0..self.labels.len())
            .map(|c| {
                let row = &self.weights[c * n_features..(c + 1) * n_features];
                self.bias[c] + x.iter().map(|&(j, v)| row[j] * v).sum::<f64>()
            })
            .collect();
        softmax(&scores)
    }

    /// Argmax label with its softmax probability as confidence.
    pub fn predict(&self, text: &str) -> Prediction {
        let probs = self.class_probabilities(text);
        let (best, p) = probs
            .iter()
            .enumerate()
            .max_by(|(ia, a), (ib, b)| a.partial_cmp(b).unwrap().then(ib.cmp(ia)))
            .expect("at least two classes");
        Prediction {
            label: self.labels[best].clone(),
            confidence: *p,
        }
    }
}

/// Sublinear-TF · smoothed-IDF sparse vector, L2-normalized. Tokens outside
/// the vocabulary are dropped.
fn vectorize(
    tokens: &[String],
    vocabulary: &BTreeMap<String, usize>,
    idf: &[f64],
) -> Vec<(usize, f64)> {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for tok in tokens {
        if let Some(&j) = vocabulary.get(tok) {
            *counts.entry(j).or_insert(0) += 1;
        }
    }
    let mut vec: Vec<(usize, f64)> = counts
        .into_iter()
        .map(|(j, c)| (j, (1.0 + (c as f64).ln()) * idf[j]))
        .collect();
    let norm = vec.iter().map(|&(_, v)| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for (_, v) in &mut vec {
            *v /= norm;
        }
    }
    vec
}

fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn log_sum_exp(scores: &[f64]) -> f64 {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln()
}

/// Per-example-averaged cross-entropy plus `(l2/2)·‖W‖²` (bias excluded),
/// with its analytic gradient. This is the exact objective the optimizer
/// descends; it is exposed so the gradient can be validated against finite
/// differences from outside the crate.
#[doc(hidden)]
pub fn training_loss_and_gradient(
    features: &[Vec<(usize, f64)>],
    class_ids: &[usize],
    n_classes: usize,
    n_features: usize,
    weights: &[f64],
    bias: &[f64],
    l2_strength: f64,
) -> (f64, Vec<f64>, Vec<f64>) {
    assert_eq!(features.len(), class_ids.len());
    let n = features.len() as f64;
    let mut loss = 0.0;
    let mut grad_w = vec![0.0; n_classes * n_features];
    let mut grad_b = vec![0.0; n_classes];

    for (x, &y) in features.iter().zip(class_ids) {
        let scores: Vec<f64> = (0..n_classes)
            .map(|c| {
                let row = &weights[c * n_features..(c + 1) * n_features];
                bias[c] + x.iter().map(|&(j, v)| row[j] * v).sum::<f64>()
            })
            .collect();
        loss += (log_sum_exp(&scores) - scores[y]) / n;
        let probs = softmax(&scores);
        for (c, &p) in probs.iter().enumerate() {
            let err = (p - f64::from(c == y)) / n;
            grad_b[c] += err;
            let row = &mut grad_w[c * n_features..(c + 1) * n_features];
            for &(j, v) in x {
                row[j] += err * v;
            }
        }
    }

    for (g, w) in grad_w.iter_mut().zip(weights) {
        loss += 0.5 * l2_strength * w * w;
        *g += l2_strength * w;
    }
    (loss, grad_w, grad_b)
}

/// The bundled baseline behind the [`Classifier`] contract. Fresh instances
/// are cheap; `fit` replaces any previously trained model.
#[derive(Debug, Clone, Default)]
pub struct BaselineClassifier {
    hyper: BaselineHyper,
    model: Option<BaselineModel>,
}

impl BaselineClassifier {
    pub fn new(hyper: BaselineHyper) -> Self {
        Self { hyper, model: None }
    }

    /// The trained model, if `fit` has run.
    pub fn model(&self) -> Option<&BaselineModel> {
        self.model.as_ref()
    }
}

impl Classifier for BaselineClassifier {
    fn fit(&mut self, train: &[LabeledExample]) -> Result<()> {
        self.model = Some(BaselineModel::fit(train, &self.hyper)?);
        Ok(())
    }

    fn predict(&self, text: &str) -> Result<Prediction> {
        let model = self.model.as_ref().ok_or(Error::NotFitted)?;
        Ok(model.predict(text))
    }
}
