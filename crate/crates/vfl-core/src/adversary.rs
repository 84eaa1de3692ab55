//! The active party's stand-in classifier.
//!
//! Lacking a target's confidence score, the active party trains its own
//! model (AM) on the active feature slice and uses its scores in place
//! of the real ones. Delivered prediction-phase scores, when available,
//! refine the fit (RAM): exact scores enter through a squared log-ratio
//! mismatch term, rounded or noisy scores are reduced to their class
//! labels and enter as extra cross-entropy terms.

use crate::model::{
    self, confidence, fit_softmax, log_ratio, FitProblem, LrParams, ScoredBatch, TrainConfig,
    TrainError, PROB_FLOOR,
};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// One prediction-phase sample the active party has already seen: its
/// active features plus the delivered score and/or class label.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObservedSample {
    pub y: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u: Option<usize>,
}

/// Refinement settings. `(alpha, beta)` weight the score-mismatch and
/// extra-label terms; the conventional choices are `(1, 0)` when exact
/// scores are observed and `(0, 1)` when only labels are.
#[derive(Debug, Clone)]
pub struct RamConfig {
    pub alpha: f64,
    pub beta: f64,
    pub observed: Vec<ObservedSample>,
    pub base: TrainConfig,
}

impl RamConfig {
    pub fn exact_scores(observed: Vec<ObservedSample>, base: TrainConfig) -> Self {
        Self {
            alpha: 1.0,
            beta: 0.0,
            observed,
            base,
        }
    }

    pub fn labels_only(observed: Vec<ObservedSample>, base: TrainConfig) -> Self {
        Self {
            alpha: 0.0,
            beta: 1.0,
            observed,
            base,
        }
    }
}

/// Train the stand-in model on the active feature slice alone.
pub fn train_am(
    active_features: &DMatrix<f64>,
    labels: &[usize],
    k: usize,
    cfg: &TrainConfig,
) -> Result<LrParams, TrainError> {
    model::train(active_features, labels, k, cfg)
}

pub(crate) fn scored_batch(observed: &[ObservedSample], d_f: usize) -> ScoredBatch {
    let n_p = observed.len();
    let mut y = DMatrix::<f64>::zeros(n_p, d_f);
    let mut scores = Vec::with_capacity(n_p);
    let mut labels = Vec::with_capacity(n_p);
    for (i, obs) in observed.iter().enumerate() {
        assert_eq!(obs.y.len(), d_f, "observed sample feature count mismatch");
        y.row_mut(i).copy_from_slice(&obs.y);
        scores.push(obs.c.as_ref().map(|c| DVector::from_row_slice(c)));
        labels.push(obs.u);
    }
    ScoredBatch { y, scores, labels }
}

/// Train the refined stand-in model. With no observed samples this is
/// exactly [`train_am`], seed for seed.
pub fn train_ram(
    cfg: &RamConfig,
    active_features: &DMatrix<f64>,
    labels: &[usize],
    k: usize,
) -> Result<LrParams, TrainError> {
    let batch = scored_batch(&cfg.observed, active_features.ncols());
    let observed = (batch.len() > 0).then_some(&batch);
    fit_softmax(
        &FitProblem {
            x: active_features,
            labels,
            k,
            observed,
            alpha: cfg.alpha,
            beta: cfg.beta,
        },
        &cfg.base,
    )
}

/// Score estimate for a target: the stand-in model's confidence vector
/// and its log-ratio form.
pub fn estimate_score(am: &LrParams, y: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let c_hat = confidence(am, y);
    let c_prime_hat = log_ratio(&c_hat);
    (c_hat, c_prime_hat)
}

/// Componentwise squared log-ratio mismatch
/// `S(c, c_ref) = sum_m ln^2(c_m / c_ref_m)`, zero iff the clamped
/// vectors agree.
pub fn score_mismatch(c: &DVector<f64>, c_ref: &DVector<f64>) -> f64 {
    assert_eq!(c.len(), c_ref.len());
    c.iter()
        .zip(c_ref.iter())
        .map(|(&a, &b)| {
            let r = (a.clamp(PROB_FLOOR, 1.0) / b.clamp(PROB_FLOOR, 1.0)).ln();
            r * r
        })
        .sum()
}
