//! Junior-side losses: soft-label KL, hard-label BCE and their blend.

use crate::manifold::{sigmoid, softplus};

/// Numerically stable log-softmax.
pub fn log_softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    x.iter().map(|v| v - lse).collect()
}

pub fn softmax(x: &[f64]) -> Vec<f64> {
    log_softmax(x).into_iter().map(f64::exp).collect()
}

/// `KL(softmax(p_logits) || softmax(q_logits))`.
pub fn kl_from_logits(p_logits: &[f64], q_logits: &[f64]) -> f64 {
    let lp = log_softmax(p_logits);
    let lq = log_softmax(q_logits);
    let kl: f64 = lp.iter().zip(&lq).map(|(a, b)| a.exp() * (a - b)).sum();
    kl.max(0.0)
}

/// Soft-label loss for one query: `KL(softmax(L_top) || softmax(S_top))`.
pub fn soft_label_loss(labels: &[f64], junior_scores: &[f64]) -> f64 {
    kl_from_logits(labels, junior_scores)
}

/// Soft-label loss and its gradient with respect to the junior scores; the
/// labels are constants.
pub fn soft_label_loss_grad(labels: &[f64], junior_scores: &[f64]) -> (f64, Vec<f64>) {
    let p = softmax(labels);
    let q = softmax(junior_scores);
    let grad = q.iter().zip(&p).map(|(qi, pi)| qi - pi).collect();
    (soft_label_loss(labels, junior_scores), grad)
}

/// Mean binary cross-entropy with a per-score logistic link. `labels` holds
/// 1 for the positive and 0 for sampled negatives.
pub fn hard_label_loss(scores: &[f64], labels: &[f64]) -> f64 {
    assert_eq!(scores.len(), labels.len());
    if scores.is_empty() {
        return 0.0;
    }
    let total: f64 = scores
        .iter()
        .zip(labels)
        .map(|(&s, &y)| y * softplus(-s) + (1.0 - y) * softplus(s))
        .sum();
    total / scores.len() as f64
}

pub fn hard_label_loss_grad(scores: &[f64], labels: &[f64]) -> (f64, Vec<f64>) {
    let n = scores.len().max(1) as f64;
    let grad = scores
        .iter()
        .zip(labels)
        .map(|(&s, &y)| (sigmoid(s) - y) / n)
        .collect();
    (hard_label_loss(scores, labels), grad)
}

/// One-hot label vector with the positive first, as produced by the trainer.
pub fn positive_first_labels(len: usize) -> Vec<f64> {
    let mut labels = vec![0.0; len];
    if len > 0 {
        labels[0] = 1.0;
    }
    labels
}

/// `α · soft + (1 - α) · hard`.
pub fn junior_loss(soft: f64, hard: f64, alpha: f64) -> f64 {
    alpha * soft + (1.0 - alpha) * hard
}
