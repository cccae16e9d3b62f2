//! Training loops: teacher pretraining with hard labels, and joint
//! junior/senior distillation.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::losses::{hard_label_loss_grad, positive_first_labels, soft_label_loss, soft_label_loss_grad};
use super::sampling::{negative_sample, random_candidates, top_k_of};
use super::senior::{
    attention_weights, combine_rows, relation_scale, scaling_grad, senior_loss_grad, teacher_divergences,
    SeniorState,
};
use super::{CandidateMode, DistillConfig, EpochLog, TeacherEnsemble, TrainConfig};
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::kgdata::{build_filter, Dataset, FilterIndex, Triple};
use crate::models::{ModelGrad, ModelKind, ModelOptions, ModelParams, ModelState};
use crate::optim::{add_l2_penalty, grad_check, AdamConfig, AdamState};

const TRAIN_STREAM: u64 = 0x9E37_79B9_7F4A_7C15;
const SLATE_STREAM: u64 = 0xD1B5_4A32_D192_ED03;

/// Everything one query contributes to the objective.
pub struct SlateInputs<'a> {
    pub triple: Triple,
    /// Candidate slate shown to the teachers (empty for plain training).
    pub candidates: &'a [u32],
    /// Unscaled teacher scores on the slate, one row per teacher.
    pub teacher_rows: &'a [Vec<f64>],
    /// Contrast-attention weights, summing to one; treated as constants.
    pub weights: &'a [f64],
    pub negatives: &'a [u32],
}

#[derive(Debug, Clone, Default)]
pub struct QueryOutcome {
    pub loss_soft: f64,
    pub loss_hard: f64,
    pub loss_senior: f64,
    pub junior_grad: ModelGrad,
    /// Gradient on `w_rel[rel, ·]`.
    pub scaling_grad: Vec<f64>,
}

impl QueryOutcome {
    pub fn junior_loss(&self, alpha: f64) -> f64 {
        alpha * self.loss_soft + (1.0 - alpha) * self.loss_hard
    }
}

/// Per-query objective `L_S + α L_soft + (1-α) L_hard` and its gradients.
/// With `senior = None` only the hard-label term is evaluated.
pub fn query_objective(
    junior: &ModelState,
    senior: Option<&SeniorState>,
    input: &SlateInputs<'_>,
    alpha: f64,
    relation_scaling: bool,
) -> QueryOutcome {
    let Triple { head, rel, tail } = input.triple;
    let mut out = QueryOutcome::default();

    let mut cands: Vec<u32> = Vec::with_capacity(input.candidates.len() + input.negatives.len() + 1);
    let mut upstream: Vec<f64> = Vec::with_capacity(cands.capacity());

    if let Some(senior) = senior {
        if !input.candidates.is_empty() {
            let junior_scores = junior.score_candidates(head, rel, input.candidates);
            let scaled = if relation_scaling {
                relation_scale(input.teacher_rows, senior, rel)
            } else {
                input.teacher_rows.to_vec()
            };
            let labels = combine_rows(&scaled, input.weights);
            let (soft, g_soft) = soft_label_loss_grad(&labels, &junior_scores);
            out.loss_soft = soft;
            if alpha > 0.0 {
                cands.extend_from_slice(input.candidates);
                upstream.extend(g_soft.iter().map(|g| alpha * g));
            }
            let (l_s, g_sum) = senior_loss_grad(&scaled, input.candidates, tail);
            out.loss_senior = l_s;
            out.scaling_grad = if relation_scaling {
                scaling_grad(input.teacher_rows, senior, rel, &g_sum)
            } else {
                vec![0.0; senior.num_teachers]
            };
        } else {
            out.scaling_grad = vec![0.0; senior.num_teachers];
        }
    }

    let mut hard_cands = Vec::with_capacity(input.negatives.len() + 1);
    hard_cands.push(tail);
    hard_cands.extend_from_slice(input.negatives);
    let hard_scores = junior.score_candidates(head, rel, &hard_cands);
    let (hard, g_hard) = hard_label_loss_grad(&hard_scores, &positive_first_labels(hard_cands.len()));
    out.loss_hard = hard;
    let hard_weight = if senior.is_some() { 1.0 - alpha } else { 1.0 };
    if hard_weight > 0.0 {
        cands.extend_from_slice(&hard_cands);
        upstream.extend(g_hard.iter().map(|g| hard_weight * g));
    }

    junior.backward(head, rel, &cands, &upstream, &mut out.junior_grad);
    out
}

/// Result of teacher pretraining.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Best-validation state (last state when there is no validation split).
    pub model: ModelState,
    pub log: Vec<EpochLog>,
}

#[derive(Debug, Clone)]
pub struct DistillOutcome {
    pub junior: ModelState,
    pub senior: SeniorState,
    pub log: Vec<EpochLog>,
}

struct Distillation<'a> {
    ensemble: &'a TeacherEnsemble,
    senior: SeniorState,
    config: &'a DistillConfig,
    slate_rng: ChaCha8Rng,
}

fn check_finite(v: f64, what: &str, epoch: usize) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Numerical(format!("{what} became {v} in epoch {epoch}")))
    }
}

fn run(
    mut model: ModelState,
    dataset: &Dataset,
    cfg: &TrainConfig,
    mut distill: Option<Distillation<'_>>,
) -> Result<(ModelState, Option<SeniorState>, Vec<EpochLog>)> {
    let ne = dataset.num_entities();
    let valid_filter: Option<FilterIndex> =
        (!dataset.valid.is_empty()).then(|| build_filter(dataset, cfg.valid_scope));

    let mut shapes: Vec<usize> = model.tensors().iter().map(|t| t.len()).collect();
    if let Some(d) = &distill {
        shapes.push(d.senior.w_rel.len());
    }
    let mut adam = AdamState::new(AdamConfig::with_lr(cfg.lr), &shapes);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ TRAIN_STREAM);
    let mut grad: ModelParams = model.params.zeros_like();
    let mut w_grad: Vec<f64> = distill.as_ref().map_or(Vec::new(), |d| vec![0.0; d.senior.w_rel.len()]);

    let mut order: Vec<usize> = (0..dataset.train.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, ModelState)> = None;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let gamma = distill.as_ref().map(|d| d.senior.gamma(epoch));
        let mut sum_j = 0.0;
        let mut sum_s = 0.0;

        for batch in order.chunks(cfg.batch_size) {
            let triples: Vec<Triple> = batch.iter().map(|&i| dataset.train[i]).collect();
            let negatives = triples
                .iter()
                .map(|t| negative_sample(t.tail, cfg.negatives, ne, &mut rng))
                .collect::<Result<Vec<_>>>()?;
            let slates: Option<Vec<Vec<u32>>> = match &mut distill {
                Some(d) if d.config.candidates == CandidateMode::Random => Some(
                    triples
                        .iter()
                        .map(|_| random_candidates(d.config.k, ne, &mut d.slate_rng))
                        .collect(),
                ),
                _ => None,
            };

            let outcomes: Vec<QueryOutcome> = triples
                .par_iter()
                .enumerate()
                .map(|(qi, t)| match &distill {
                    None => {
                        let input = SlateInputs {
                            triple: *t,
                            candidates: &[],
                            teacher_rows: &[],
                            weights: &[],
                            negatives: &negatives[qi],
                        };
                        query_objective(&model, None, &input, 0.0, false)
                    }
                    Some(d) => {
                        let cands = match &slates {
                            Some(s) => s[qi].clone(),
                            None => top_k_of(&model.score_all(t.head, t.rel), d.config.k).0,
                        };
                        let rows = d.ensemble.teacher_scores(t.head, t.rel, &cands);
                        let weights = if d.config.contrast_attention {
                            let junior_scores = model.score_candidates(t.head, t.rel, &cands);
                            attention_weights(&teacher_divergences(&rows, &junior_scores), gamma.unwrap_or(1.0))
                        } else {
                            vec![1.0 / rows.len() as f64; rows.len()]
                        };
                        let input = SlateInputs {
                            triple: *t,
                            candidates: &cands,
                            teacher_rows: &rows,
                            weights: &weights,
                            negatives: &negatives[qi],
                        };
                        query_objective(&model, Some(&d.senior), &input, d.config.alpha, d.config.relation_scaling)
                    }
                })
                .collect();

            let scale = 1.0 / triples.len() as f64;
            grad.fill_zero();
            w_grad.fill(0.0);
            let alpha = distill.as_ref().map_or(0.0, |d| d.config.alpha);
            for (o, t) in outcomes.iter().zip(&triples) {
                sum_j += if distill.is_some() { o.junior_loss(alpha) } else { o.loss_hard };
                sum_s += o.loss_senior;
                o.junior_grad.add_into(&mut grad, scale);
                if let Some(d) = &distill {
                    let m = d.senior.num_teachers;
                    let row = &mut w_grad[t.rel as usize * m..(t.rel as usize + 1) * m];
                    for (w, g) in row.iter_mut().zip(&o.scaling_grad) {
                        *w += scale * g;
                    }
                }
            }
            check_finite(sum_j + sum_s, "training loss", epoch)?;

            {
                let mut grads = grad.tensors_mut();
                add_l2_penalty(&model.tensors(), &mut grads, cfg.lambda);
            }
            if let Some(d) = &distill {
                add_l2_penalty(&[&d.senior.w_rel], &mut [&mut w_grad], cfg.lambda);
            }

            let mut params = model.tensors_mut();
            let mut grads: Vec<&[f64]> = grad.tensors();
            if let Some(d) = &mut distill {
                params.push(&mut d.senior.w_rel);
                grads.push(&w_grad);
            }
            adam.step(&mut params, &grads)?;
        }

        let n = dataset.train.len().max(1) as f64;
        let metrics = match &valid_filter {
            Some(f) => Some(evaluate(&model, &dataset.valid, f, cfg.tie)?),
            None => None,
        };
        let entry = EpochLog {
            epoch,
            loss_j: sum_j / n,
            loss_s: sum_s / n,
            valid_mrr: metrics.as_ref().map(|m| m.mrr),
            valid_hits1: metrics.as_ref().map(|m| m.hits_at(1)),
            valid_hits10: metrics.as_ref().map(|m| m.hits_at(10)),
            gamma,
        };
        if let Some(m) = &metrics {
            if best.as_ref().map_or(true, |(b, _)| m.mrr > *b) {
                best = Some((m.mrr, model.clone()));
            }
        }
        log.push(entry);
    }

    let final_model = match best {
        Some((_, m)) => m,
        None => model,
    };
    Ok((final_model, distill.map(|d| d.senior), log))
}

/// Trains a model with the hard-label loss plus L2 only.
pub fn pretrain_teacher(kind: ModelKind, dataset: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate(dataset.num_entities())?;
    let model = ModelState::new(
        kind,
        cfg.dim,
        dataset.num_entities(),
        dataset.num_relations(),
        cfg.seed,
        cfg.options,
    )?;
    let (model, _, log) = run(model, dataset, cfg, None)?;
    Ok(TrainOutcome { model, log })
}

/// Distills `ensemble` into a fresh junior of `junior_kind`.
pub fn train_mulde(
    cfg: &DistillConfig,
    junior_kind: ModelKind,
    ensemble: &TeacherEnsemble,
    dataset: &Dataset,
) -> Result<DistillOutcome> {
    cfg.validate(dataset.num_entities())?;
    for t in ensemble.teachers() {
        if t.num_entities != dataset.num_entities() || t.num_relations != dataset.num_relations() {
            return Err(Error::Vocab(format!(
                "teacher covers {} entities / {} relations, dataset has {} / {}",
                t.num_entities,
                t.num_relations,
                dataset.num_entities(),
                dataset.num_relations()
            )));
        }
    }
    if cfg.self_test {
        let err = gradient_self_test(junior_kind, cfg.train.options, cfg.alpha, cfg.train.seed)?;
        if err > SELF_TEST_TOLERANCE {
            return Err(Error::Numerical(format!(
                "gradient self-test failed for {junior_kind}: relative error {err:e}"
            )));
        }
    }
    let junior = ModelState::new(
        junior_kind,
        cfg.train.dim,
        dataset.num_entities(),
        dataset.num_relations(),
        cfg.train.seed,
        cfg.train.options,
    )?;
    let senior = SeniorState::new(dataset.num_relations(), ensemble.len(), cfg.gamma0, cfg.gamma_growth)?;
    let distill = Distillation {
        ensemble,
        senior,
        config: cfg,
        slate_rng: ChaCha8Rng::seed_from_u64(cfg.train.seed ^ SLATE_STREAM),
    };
    let (junior, senior, log) = run(junior, dataset, &cfg.train, Some(distill))?;
    Ok(DistillOutcome {
        junior,
        senior: senior.expect("distillation keeps its senior state"),
        log,
    })
}

/// Maximum relative gradient error accepted by the startup self-test.
pub const SELF_TEST_TOLERANCE: f64 = 1e-4;

/// Randomizes every parameter of `state` uniformly in `[-scale, scale]`
/// (curvature parameters stay near `c = 1`).
fn scramble(state: &mut ModelState, rng: &mut ChaCha8Rng, scale: f64) {
    let curvature_len = state.params.curvature.len();
    for v in state.params.entity.iter_mut().chain(&mut state.params.relation) {
        *v = rng.gen_range(-scale..scale);
    }
    for v in &mut state.params.rotation {
        *v = rng.gen_range(-3.0..3.0);
    }
    for v in &mut state.params.bias_head {
        *v = rng.gen_range(-scale..scale);
    }
    for v in &mut state.params.bias_tail {
        *v = rng.gen_range(-scale..scale);
    }
    for i in 0..curvature_len {
        state.params.curvature[i] = crate::manifold::Curvature::raw_for(rng.gen_range(0.5..1.5));
    }
}

/// Finite-difference check of the full distillation objective (soft, hard
/// and senior terms, plus L2) on a small random instance, with the soft
/// labels held fixed. Returns the worst relative error over junior
/// parameters and the scaling matrix.
pub fn gradient_self_test(kind: ModelKind, options: ModelOptions, alpha: f64, seed: u64) -> Result<f64> {
    let (ne, nr, dim, m) = (7usize, 3usize, 4usize, 3usize);
    let lambda = 0.01;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5E1F_7E57);
    let mut junior = ModelState::new(kind, dim, ne, nr, seed, options)?;
    scramble(&mut junior, &mut rng, 0.3);
    let mut teachers = Vec::new();
    for (i, tk) in [ModelKind::RotH, ModelKind::TransE, ModelKind::DistH].into_iter().enumerate().take(m) {
        let mut t = ModelState::new(tk, dim, ne, nr, seed + i as u64, ModelOptions::default())?;
        scramble(&mut t, &mut rng, 0.4);
        teachers.push(t);
    }
    let ensemble = TeacherEnsemble::new(teachers)?;
    let mut senior = SeniorState::new(nr, m, 1.0, 1.1)?;
    senior.randomize(&mut rng, 1.0);

    let triple = Triple::new(2, 1, 5);
    let candidates: Vec<u32> = (0..ne as u32).collect();
    let rows = ensemble.teacher_scores(triple.head, triple.rel, &candidates);
    let junior_scores = junior.score_candidates(triple.head, triple.rel, &candidates);
    let weights = attention_weights(&teacher_divergences(&rows, &junior_scores), 1.0);
    let negatives = negative_sample(triple.tail, 3, ne, &mut rng)?;

    let fixed_labels = combine_rows(&relation_scale(&rows, &senior, triple.rel), &weights);

    let n_junior = junior.params.len();
    let mut flat = junior.params.flatten();
    flat.extend_from_slice(&senior.w_rel);

    let objective = |p: &[f64]| -> (f64, Vec<f64>) {
        let mut j = junior.clone();
        j.params.assign_flat(&p[..n_junior]);
        let mut s = senior.clone();
        s.w_rel.copy_from_slice(&p[n_junior..]);
        let input = SlateInputs {
            triple,
            candidates: &candidates,
            teacher_rows: &rows,
            weights: &weights,
            negatives: &negatives,
        };
        let o = query_objective(&j, Some(&s), &input, alpha, true);
        // soft labels are constants of the objective
        let soft = soft_label_loss(&fixed_labels, &j.score_candidates(triple.head, triple.rel, &candidates));
        let mut g_junior = o.junior_grad.to_dense(&j.params);
        let mut g_w = vec![0.0; s.w_rel.len()];
        let r = triple.rel as usize;
        g_w[r * m..(r + 1) * m].copy_from_slice(&o.scaling_grad);
        let mut penalty = add_l2_penalty(&j.tensors(), &mut g_junior.tensors_mut(), lambda);
        penalty += add_l2_penalty(&[&s.w_rel], &mut [&mut g_w], lambda);
        let loss = o.loss_senior + alpha * soft + (1.0 - alpha) * o.loss_hard + penalty;
        let mut g = g_junior.flatten();
        g.extend(g_w);
        (loss, g)
    };
    Ok(grad_check(objective, &flat, 1e-6))
}
