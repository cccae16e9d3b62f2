//! The Senior integration layer: relation-specific scaling of teacher rows,
//! contrast attention, the γ schedule and the Senior cross-entropy.

use rand::Rng;

use super::losses::{kl_from_logits, log_softmax, softmax};
use crate::error::{Error, Result};
use crate::manifold::sigmoid;

/// Trainable `N_r x m` scaling logits plus the γ schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct SeniorState {
    pub w_rel: Vec<f64>,
    pub num_relations: usize,
    pub num_teachers: usize,
    pub gamma0: f64,
    pub gamma_growth: f64,
}

impl SeniorState {
    pub fn new(num_relations: usize, num_teachers: usize, gamma0: f64, gamma_growth: f64) -> Result<Self> {
        if !(gamma0 > 0.0) || !(gamma_growth > 1.0) {
            return Err(Error::Config(format!(
                "γ schedule needs γ0 > 0 and growth > 1, got {gamma0} and {gamma_growth}"
            )));
        }
        Ok(Self {
            w_rel: vec![0.0; num_relations * num_teachers],
            num_relations,
            num_teachers,
            gamma0,
            gamma_growth,
        })
    }

    pub fn row(&self, rel: u32) -> &[f64] {
        let m = self.num_teachers;
        &self.w_rel[rel as usize * m..(rel as usize + 1) * m]
    }

    /// Randomizes the logits; used by tests that need non-trivial scaling.
    pub fn randomize<R: Rng>(&mut self, rng: &mut R, scale: f64) {
        for w in &mut self.w_rel {
            *w = rng.gen_range(-scale..scale);
        }
    }

    pub fn gamma(&self, epoch: usize) -> f64 {
        gamma_schedule(epoch, self.gamma0, self.gamma_growth)
    }
}

/// `γ0 · g^epoch`.
pub fn gamma_schedule(epoch: usize, gamma0: f64, growth: f64) -> f64 {
    gamma0 * growth.powf(epoch as f64)
}

/// Multiplies teacher row `i` by `sigmoid(w_rel[rel, i])`.
pub fn relation_scale(teacher_scores: &[Vec<f64>], senior: &SeniorState, rel: u32) -> Vec<Vec<f64>> {
    assert_eq!(teacher_scores.len(), senior.num_teachers);
    teacher_scores
        .iter()
        .zip(senior.row(rel))
        .map(|(row, &w)| {
            let s = sigmoid(w);
            row.iter().map(|v| v * s).collect()
        })
        .collect()
}

/// Per-teacher dissimilarity `p_i = KL(softmax(S_Ti) || softmax(S_top)) / K`.
pub fn teacher_divergences(teacher_scores: &[Vec<f64>], junior_scores: &[f64]) -> Vec<f64> {
    let k = junior_scores.len().max(1) as f64;
    teacher_scores
        .iter()
        .map(|row| kl_from_logits(row, junior_scores) / k)
        .collect()
}

/// Attention weights `softmax(-p / γ)`; they sum to one.
pub fn attention_weights(divergences: &[f64], gamma: f64) -> Vec<f64> {
    let logits: Vec<f64> = divergences.iter().map(|p| -p / gamma).collect();
    softmax(&logits)
}

/// Soft labels `L_top = Σ_i S'_Ti · softmax(-p/γ)_i · m`, where `p` is
/// computed from the unscaled teacher rows against the junior scores.
/// Returns the labels and the attention weights (before the `m` factor).
pub fn contrast_attention(
    scaled: &[Vec<f64>],
    unscaled: &[Vec<f64>],
    junior_scores: &[f64],
    gamma: f64,
) -> (Vec<f64>, Vec<f64>) {
    let weights = attention_weights(&teacher_divergences(unscaled, junior_scores), gamma);
    (combine_rows(scaled, &weights), weights)
}

/// `Σ_i rows[i] · weights[i] · m`.
pub fn combine_rows(rows: &[Vec<f64>], weights: &[f64]) -> Vec<f64> {
    let m = rows.len() as f64;
    let k = rows.first().map_or(0, Vec::len);
    let mut out = vec![0.0; k];
    for (row, &w) in rows.iter().zip(weights) {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v * w * m;
        }
    }
    out
}

/// Cross-entropy of `softmax(Σ_i S'_Ti)` against a one-hot at the target's
/// slate position; zero when the target is not on the slate.
pub fn senior_loss(scaled: &[Vec<f64>], candidates: &[u32], target: u32) -> f64 {
    senior_loss_grad(scaled, candidates, target).0
}

/// Senior loss and its gradient with respect to the summed scaled scores.
pub fn senior_loss_grad(scaled: &[Vec<f64>], candidates: &[u32], target: u32) -> (f64, Vec<f64>) {
    let k = candidates.len();
    let Some(pos) = candidates.iter().position(|&c| c == target) else {
        return (0.0, vec![0.0; k]);
    };
    let mut summed = vec![0.0; k];
    for row in scaled {
        for (s, v) in summed.iter_mut().zip(row) {
            *s += v;
        }
    }
    let log_p = log_softmax(&summed);
    let mut grad: Vec<f64> = log_p.iter().map(|l| l.exp()).collect();
    grad[pos] -= 1.0;
    (-log_p[pos], grad)
}

/// Gradient of the senior loss with respect to `w_rel[rel, ·]` given the
/// gradient on the summed scaled scores.
pub fn scaling_grad(teacher_scores: &[Vec<f64>], senior: &SeniorState, rel: u32, g_summed: &[f64]) -> Vec<f64> {
    teacher_scores
        .iter()
        .zip(senior.row(rel))
        .map(|(row, &w)| {
            let s = sigmoid(w);
            let dot: f64 = row.iter().zip(g_summed).map(|(a, b)| a * b).sum();
            dot * s * (1.0 - s)
        })
        .collect()
}
