//! Multi-teacher distillation.
//!
//! A low-dimensional *junior* model proposes its top-K tails for each
//! training query. Frozen teachers score exactly those candidates, the
//! *senior* layer rescales each teacher per relation and mixes them with a
//! contrast-attention gate, and the mixture supervises the junior through a
//! KL term next to the usual negative-sampling loss.

mod losses;
mod sampling;
mod senior;
mod train;

pub use losses::{
    hard_label_loss, hard_label_loss_grad, junior_loss, kl_from_logits, log_softmax, positive_first_labels,
    soft_label_loss, soft_label_loss_grad, softmax,
};
pub use sampling::{negative_sample, random_candidates, top_k_of, topk_candidates};
pub use senior::{
    attention_weights, combine_rows, contrast_attention, gamma_schedule, relation_scale, scaling_grad, senior_loss,
    senior_loss_grad, teacher_divergences, SeniorState,
};
pub use train::{
    gradient_self_test, pretrain_teacher, query_objective, train_mulde, DistillOutcome, QueryOutcome, SlateInputs,
    TrainOutcome,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{Scorer, TieRule};
use crate::kgdata::FilterScope;
use crate::models::{ModelOptions, ModelState};

/// Frozen teachers over a shared vocabulary.
#[derive(Debug, Clone)]
pub struct TeacherEnsemble {
    teachers: Vec<ModelState>,
}

impl TeacherEnsemble {
    pub fn new(teachers: Vec<ModelState>) -> Result<Self> {
        let Some(first) = teachers.first() else {
            return Err(Error::Config("at least one teacher is required".into()));
        };
        for t in &teachers[1..] {
            if t.num_entities != first.num_entities || t.num_relations != first.num_relations {
                return Err(Error::Config(format!(
                    "teacher shapes disagree: {}x{} vs {}x{}",
                    t.num_entities, t.num_relations, first.num_entities, first.num_relations
                )));
            }
        }
        Ok(Self { teachers })
    }

    pub fn len(&self) -> usize {
        self.teachers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.teachers.is_empty()
    }

    pub fn teachers(&self) -> &[ModelState] {
        &self.teachers
    }

    pub fn num_relations(&self) -> usize {
        self.teachers[0].num_relations
    }

    /// One row per teacher: its scores on exactly `candidates`.
    pub fn teacher_scores(&self, head: u32, rel: u32, candidates: &[u32]) -> Vec<Vec<f64>> {
        self.teachers
            .iter()
            .map(|t| t.score_candidates(head, rel, candidates))
            .collect()
    }

    /// Sum of the teachers' scores (the additive ensemble baseline).
    pub fn ensemble_score(&self, head: u32, rel: u32, candidates: &[u32]) -> Vec<f64> {
        let mut out = vec![0.0; candidates.len()];
        for row in self.teacher_scores(head, rel, candidates) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        out
    }
}

impl Scorer for TeacherEnsemble {
    fn num_entities(&self) -> usize {
        self.teachers[0].num_entities
    }

    fn score_all(&self, head: u32, rel: u32) -> Vec<f64> {
        let mut out = self.teachers[0].score_all(head, rel);
        for t in &self.teachers[1..] {
            for (o, v) in out.iter_mut().zip(t.score_all(head, rel)) {
                *o += v;
            }
        }
        out
    }
}

/// Which candidates the teachers are asked about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CandidateMode {
    /// The junior's current top-K.
    #[default]
    TopK,
    /// K uniformly random entities (ablation).
    Random,
}

/// Settings shared by teacher pretraining and distillation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub dim: usize,
    pub lr: f64,
    pub negatives: usize,
    pub lambda: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub options: ModelOptions,
    pub valid_scope: FilterScope,
    pub tie: TieRule,
}

impl TrainConfig {
    pub fn teacher_defaults() -> Self {
        Self {
            dim: 64,
            lr: 0.001,
            negatives: 50,
            lambda: 0.0,
            epochs: 100,
            batch_size: 512,
            seed: 42,
            options: ModelOptions::default(),
            valid_scope: FilterScope::TrainOnly,
            tie: TieRule::Pessimistic,
        }
    }

    pub fn validate(&self, num_entities: usize) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::Config(format!("λ must be non-negative, got {}", self.lambda)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if self.negatives >= num_entities {
            return Err(Error::Config(format!(
                "{} negatives requested but only {num_entities} entities",
                self.negatives
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillConfig {
    pub train: TrainConfig,
    pub k: usize,
    pub alpha: f64,
    pub gamma0: f64,
    pub gamma_growth: f64,
    pub candidates: CandidateMode,
    pub contrast_attention: bool,
    pub relation_scaling: bool,
    /// Run the finite-difference check of every loss before training.
    pub self_test: bool,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig {
                dim: 32,
                valid_scope: FilterScope::Full,
                ..TrainConfig::teacher_defaults()
            },
            k: 300,
            alpha: 0.1,
            gamma0: 1.0,
            gamma_growth: 1.1,
            candidates: CandidateMode::TopK,
            contrast_attention: true,
            relation_scaling: true,
            self_test: true,
        }
    }
}

impl DistillConfig {
    pub fn validate(&self, num_entities: usize) -> Result<()> {
        self.train.validate(num_entities)?;
        if self.k == 0 || self.k > num_entities {
            return Err(Error::Config(format!(
                "K must lie in 1..={num_entities}, got {}",
                self.k
            )));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("α must lie in [0, 1], got {}", self.alpha)));
        }
        if !(self.gamma0 > 0.0) || !(self.gamma_growth > 1.0) {
            return Err(Error::Config("γ schedule needs γ0 > 0 and growth > 1".into()));
        }
        Ok(())
    }
}

/// One JSON-lines record of a training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    #[serde(rename = "loss_J")]
    pub loss_j: f64,
    #[serde(rename = "loss_S")]
    pub loss_s: f64,
    #[serde(rename = "valid_MRR")]
    pub valid_mrr: Option<f64>,
    pub valid_hits1: Option<f64>,
    pub valid_hits10: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub gamma: Option<f64>,
}
