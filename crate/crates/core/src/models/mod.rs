//! Scoring models: the four hyperbolic families and their Euclidean twins.
//!
//! Every model scores a triple as `-D(q, t)^2 + b_head + b_tail`, where `q` is
//! the relation-transformed head and `D` is the hyperbolic distance on the
//! relation's Poincaré ball (or the Euclidean distance for the twins).

mod checkpoint;
mod kind;
mod params;

pub use checkpoint::{load_checkpoint, read_table, save_checkpoint, Manifest, TableEntry, FORMAT_VERSION};
pub use kind::{CurvatureMode, EntityStorage, Geometry, ModelKind, ModelOptions, Transform};
pub use params::{ModelGrad, ModelParams};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kgdata::Vocab;
use crate::manifold::{
    dot, expmap0_backward, expmap0_raw, hyp_distance_sq_grad, mobius_add_backward, mobius_add_raw, norm_sq,
    project_backward, project_in_place, sigmoid, Curvature, ATANH_CLAMP, BALL_EPS,
};

/// Half-width of the uniform initialization interval.
pub const INIT_SCALE: f64 = 1e-3;

/// Scores for one query over a list of candidate tails.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreBatch {
    pub head: u32,
    pub rel: u32,
    pub candidates: Vec<u32>,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub kind: ModelKind,
    pub dim: usize,
    pub num_entities: usize,
    pub num_relations: usize,
    pub seed: u64,
    pub options: ModelOptions,
    pub params: ModelParams,
}

/// Initializes a model over `vocab` with default options.
pub fn init_model(kind: ModelKind, dim: usize, vocab: &Vocab, seed: u64) -> Result<ModelState> {
    ModelState::new(
        kind,
        dim,
        vocab.num_entities(),
        vocab.num_relations(),
        seed,
        ModelOptions::default(),
    )
}

/// Forward intermediates for a query, kept for the backward pass.
struct QueryCtx {
    c: f64,
    /// head point after the entity map (before the relation transform)
    head_point: Vec<f64>,
    /// relation point for translations (hyperbolic: expmap0 of the relation vector, projected)
    rel_point: Vec<f64>,
    /// transformed head before the final projection
    pre_q: Vec<f64>,
    q: Vec<f64>,
}

impl ModelState {
    pub fn new(
        kind: ModelKind,
        dim: usize,
        num_entities: usize,
        num_relations: usize,
        seed: u64,
        options: ModelOptions,
    ) -> Result<Self> {
        if dim < 2 {
            return Err(Error::Config(format!("embedding dimension must be at least 2, got {dim}")));
        }
        if kind.transform().uses_angles() && dim % 2 != 0 {
            return Err(Error::Config(format!(
                "{kind} needs an even dimension for 2x2 blocks, got {dim}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uniform = |n: usize| -> Vec<f64> {
            (0..n).map(|_| rng.gen_range(-INIT_SCALE..INIT_SCALE)).collect()
        };
        let transform = kind.transform();
        let entity = uniform(num_entities * dim);
        let relation = if transform.uses_vectors() {
            uniform(num_relations * dim)
        } else {
            Vec::new()
        };
        let rotation = if transform.uses_angles() {
            uniform(num_relations * dim / 2)
        } else {
            Vec::new()
        };
        let curvature = match (kind.geometry(), options.curvature) {
            (Geometry::Euclidean, _) => Vec::new(),
            (Geometry::Hyperbolic, CurvatureMode::PerRelation) => {
                vec![Curvature::raw_for(1.0); num_relations]
            }
            (Geometry::Hyperbolic, CurvatureMode::Global) => vec![Curvature::raw_for(1.0)],
        };
        let (bias_head, bias_tail) = if options.bias {
            (vec![0.0; num_entities], vec![0.0; num_entities])
        } else {
            (Vec::new(), Vec::new())
        };
        Ok(Self {
            kind,
            dim,
            num_entities,
            num_relations,
            seed,
            options,
            params: ModelParams {
                entity,
                relation,
                rotation,
                curvature,
                bias_head,
                bias_tail,
            },
        })
    }

    fn entity_row(&self, id: u32) -> &[f64] {
        let d = self.dim;
        &self.params.entity[id as usize * d..(id as usize + 1) * d]
    }

    fn relation_row(&self, id: u32) -> &[f64] {
        let d = self.dim;
        &self.params.relation[id as usize * d..(id as usize + 1) * d]
    }

    fn angle_row(&self, id: u32) -> &[f64] {
        let h = self.dim / 2;
        &self.params.rotation[id as usize * h..(id as usize + 1) * h]
    }

    fn curvature_slot(&self, rel: u32) -> usize {
        match self.options.curvature {
            CurvatureMode::PerRelation => rel as usize,
            CurvatureMode::Global => 0,
        }
    }

    /// Curvature used by queries over `rel`; `None` for Euclidean models.
    pub fn curvature(&self, rel: u32) -> Option<Curvature> {
        match self.kind.geometry() {
            Geometry::Euclidean => None,
            Geometry::Hyperbolic => Some(Curvature::from_raw(
                self.params.curvature[self.curvature_slot(rel)],
            )),
        }
    }

    fn bias_head(&self, id: u32) -> f64 {
        self.params.bias_head.get(id as usize).copied().unwrap_or(0.0)
    }

    fn bias_tail(&self, id: u32) -> f64 {
        self.params.bias_tail.get(id as usize).copied().unwrap_or(0.0)
    }

    fn check_ids(&self, head: u32, rel: u32) {
        assert!(
            (head as usize) < self.num_entities && (rel as usize) < self.num_relations,
            "query ({head}, {rel}) out of range for model with {} entities / {} relations",
            self.num_entities,
            self.num_relations
        );
    }

    /// Maps an entity parameter row to its point (ball point for hyperbolic models).
    fn entity_point(&self, raw: &[f64], c: f64) -> Vec<f64> {
        match (self.kind.geometry(), self.options.entity_storage) {
            (Geometry::Euclidean, _) => raw.to_vec(),
            (Geometry::Hyperbolic, EntityStorage::Tangent) => {
                let mut y = expmap0_raw(raw, c);
                project_in_place(&mut y, c);
                y
            }
            (Geometry::Hyperbolic, EntityStorage::Ball) => {
                let mut y = raw.to_vec();
                project_in_place(&mut y, c);
                y
            }
        }
    }

    fn entity_point_backward(&self, raw: &[f64], c: f64, g: &[f64]) -> (Vec<f64>, f64) {
        match (self.kind.geometry(), self.options.entity_storage) {
            (Geometry::Euclidean, _) => (g.to_vec(), 0.0),
            (Geometry::Hyperbolic, EntityStorage::Tangent) => {
                let pre = expmap0_raw(raw, c);
                let (g_pre, gc1) = project_backward(&pre, c, g);
                let (g_raw, gc2) = expmap0_backward(raw, c, &g_pre);
                (g_raw, gc1 + gc2)
            }
            (Geometry::Hyperbolic, EntityStorage::Ball) => project_backward(raw, c, g),
        }
    }

    fn query_ctx(&self, head: u32, rel: u32) -> QueryCtx {
        let hyperbolic = self.kind.geometry() == Geometry::Hyperbolic;
        let c = self.curvature(rel).map_or(0.0, Curvature::value);
        let head_point = self.entity_point(self.entity_row(head), c);
        let mut rel_point = Vec::new();
        let pre_q = match self.kind.transform() {
            Transform::Translate => {
                if hyperbolic {
                    rel_point = expmap0_raw(self.relation_row(rel), c);
                    project_in_place(&mut rel_point, c);
                    mobius_add_raw(&head_point, &rel_point, c)
                } else {
                    rel_point = self.relation_row(rel).to_vec();
                    head_point.iter().zip(&rel_point).map(|(a, b)| a + b).collect()
                }
            }
            Transform::Scale => head_point
                .iter()
                .zip(self.relation_row(rel))
                .map(|(a, b)| a * b)
                .collect(),
            Transform::Rotate => givens(&head_point, self.angle_row(rel), false),
            Transform::Reflect => givens(&head_point, self.angle_row(rel), true),
        };
        let mut q = pre_q.clone();
        if hyperbolic {
            project_in_place(&mut q, c);
        }
        QueryCtx {
            c,
            head_point,
            rel_point,
            pre_q,
            q,
        }
    }

    /// The relation-transformed head point `q` for the query.
    pub fn transform_head(&self, head: u32, rel: u32) -> Vec<f64> {
        self.check_ids(head, rel);
        self.query_ctx(head, rel).q
    }

    /// Squared distance from the transformed head to each candidate's point.
    fn sq_distances(&self, ctx: &QueryCtx, candidates: impl Iterator<Item = u32>, out: &mut Vec<f64>) {
        let q = &ctx.q;
        let c = ctx.c;
        let q2 = norm_sq(q);
        match self.kind.geometry() {
            Geometry::Euclidean => {
                for cand in candidates {
                    let e = self.entity_row(cand);
                    let d2: f64 = q.iter().zip(e).map(|(a, b)| (a - b) * (a - b)).sum();
                    out.push(d2);
                }
            }
            Geometry::Hyperbolic => {
                let sc = c.sqrt();
                let max_norm = (1.0 - BALL_EPS) / sc;
                for cand in candidates {
                    let e = self.entity_row(cand);
                    let e2 = norm_sq(e);
                    let e_norm = e2.sqrt();
                    // point = f * e, f folding the entity map and the projection
                    let mut f = match self.options.entity_storage {
                        EntityStorage::Tangent => {
                            let s = sc * e_norm;
                            if s < 1e-3 {
                                1.0 - s * s / 3.0 + 2.0 * s.powi(4) / 15.0
                            } else {
                                s.tanh() / s
                            }
                        }
                        EntityStorage::Ball => 1.0,
                    };
                    let n = f * e_norm;
                    if n >= max_norm && n > 0.0 {
                        f *= max_norm / n;
                    }
                    let y2 = f * f * e2;
                    // x = -q
                    let xy = -f * dot(q, e);
                    let a = 1.0 + 2.0 * c * xy + c * y2;
                    let b = 1.0 - c * q2;
                    let den = (1.0 + 2.0 * c * xy + c * c * q2 * y2).max(1e-15);
                    let w2 = ((a * a * q2 + 2.0 * a * b * xy + b * b * y2) / (den * den)).max(0.0);
                    let s = (sc * w2.sqrt()).min(ATANH_CLAMP);
                    let dist = 2.0 / sc * s.atanh();
                    out.push(dist * dist);
                }
            }
        }
    }

    /// Plausibility scores of `candidates` as tails of `(head, rel)`.
    pub fn score(&self, head: u32, rel: u32, candidates: &[u32]) -> ScoreBatch {
        ScoreBatch {
            head,
            rel,
            candidates: candidates.to_vec(),
            scores: self.score_candidates(head, rel, candidates),
        }
    }

    pub fn score_candidates(&self, head: u32, rel: u32, candidates: &[u32]) -> Vec<f64> {
        self.check_ids(head, rel);
        let ctx = self.query_ctx(head, rel);
        let mut out = Vec::with_capacity(candidates.len());
        self.sq_distances(&ctx, candidates.iter().copied(), &mut out);
        let bh = self.bias_head(head);
        for (s, &cand) in out.iter_mut().zip(candidates) {
            *s = -*s + bh + self.bias_tail(cand);
        }
        out
    }

    /// Scores of every entity as tail of `(head, rel)`, indexed by entity id.
    pub fn score_all(&self, head: u32, rel: u32) -> Vec<f64> {
        self.check_ids(head, rel);
        let ctx = self.query_ctx(head, rel);
        let mut out = Vec::with_capacity(self.num_entities);
        self.sq_distances(&ctx, 0..self.num_entities as u32, &mut out);
        let bh = self.bias_head(head);
        for (i, s) in out.iter_mut().enumerate() {
            *s = -*s + bh + self.bias_tail(i as u32);
        }
        out
    }

    /// Accumulates `Σ_i upstream[i] * ∂score_i/∂θ` into `grad`, where `score_i`
    /// is the score of `candidates[i]` for `(head, rel)`.
    pub fn backward(&self, head: u32, rel: u32, candidates: &[u32], upstream: &[f64], grad: &mut ModelGrad) {
        assert_eq!(candidates.len(), upstream.len());
        self.check_ids(head, rel);
        let ctx = self.query_ctx(head, rel);
        let d = self.dim;
        let c = ctx.c;
        let hyperbolic = self.kind.geometry() == Geometry::Hyperbolic;
        let mut g_q = vec![0.0; d];
        let mut g_c = 0.0;
        let mut g_bias_head = 0.0;

        for (&cand, &up) in candidates.iter().zip(upstream) {
            if up == 0.0 {
                continue;
            }
            g_bias_head += up;
            if self.options.bias {
                grad.bias_tail.push((cand, up));
            }
            let raw = self.entity_row(cand);
            if hyperbolic {
                let y = self.entity_point(raw, c);
                let (_, gq_i, gy_i, gc_i) = hyp_distance_sq_grad(&ctx.q, &y, c);
                // score = -D^2
                for (a, b) in g_q.iter_mut().zip(&gq_i) {
                    *a -= up * b;
                }
                g_c -= up * gc_i;
                let gy: Vec<f64> = gy_i.iter().map(|v| -up * v).collect();
                let (g_raw, gc_e) = self.entity_point_backward(raw, c, &gy);
                g_c += gc_e;
                grad.entity.push((cand, g_raw));
            } else {
                // score = -|q - e|^2
                let diff: Vec<f64> = ctx.q.iter().zip(raw).map(|(a, b)| a - b).collect();
                for (a, b) in g_q.iter_mut().zip(&diff) {
                    *a -= 2.0 * up * b;
                }
                grad.entity.push((cand, diff.iter().map(|v| 2.0 * up * v).collect()));
            }
        }
        if self.options.bias && g_bias_head != 0.0 {
            grad.bias_head.push((head, g_bias_head));
        }

        // through the final projection
        let g_pre = if hyperbolic {
            let (g, gc) = project_backward(&ctx.pre_q, c, &g_q);
            g_c += gc;
            g
        } else {
            g_q
        };

        let g_head_point = match self.kind.transform() {
            Transform::Translate => {
                if hyperbolic {
                    let (g_h, g_r, gc_m) = mobius_add_backward(&ctx.head_point, &ctx.rel_point, c, &g_pre);
                    g_c += gc_m;
                    let raw_r = self.relation_row(rel);
                    let pre_r = expmap0_raw(raw_r, c);
                    let (g_pre_r, gc_p) = project_backward(&pre_r, c, &g_r);
                    let (g_raw_r, gc_x) = expmap0_backward(raw_r, c, &g_pre_r);
                    g_c += gc_p + gc_x;
                    grad.relation.push((rel, g_raw_r));
                    g_h
                } else {
                    grad.relation.push((rel, g_pre.clone()));
                    g_pre
                }
            }
            Transform::Scale => {
                let r = self.relation_row(rel);
                let g_r = g_pre.iter().zip(&ctx.head_point).map(|(g, h)| g * h).collect();
                grad.relation.push((rel, g_r));
                g_pre.iter().zip(r).map(|(g, rv)| g * rv).collect()
            }
            Transform::Rotate | Transform::Reflect => {
                let reflect = self.kind.transform() == Transform::Reflect;
                let (g_h, g_theta) = givens_backward(&ctx.head_point, self.angle_row(rel), reflect, &g_pre);
                grad.rotation.push((rel, g_theta));
                g_h
            }
        };

        let (g_head_raw, gc_h) = self.entity_point_backward(self.entity_row(head), c, &g_head_point);
        g_c += gc_h;
        grad.entity.push((head, g_head_raw));

        if hyperbolic {
            let slot = self.curvature_slot(rel);
            let dc_draw = sigmoid(self.params.curvature[slot]);
            grad.curvature.push((slot as u32, g_c * dc_draw));
        }
    }

    /// Parameter tables in a fixed order (entity, relation, rotation,
    /// curvature, bias_head, bias_tail).
    pub fn tensors(&self) -> Vec<&[f64]> {
        self.params.tensors()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.params.tensors_mut()
    }

    /// Shapes `(rows, cols)` of the parameter tables, same order as [`Self::tensors`].
    pub fn table_shapes(&self) -> [(&'static str, usize, usize); 6] {
        let d = self.dim;
        let p = &self.params;
        [
            ("entity", p.entity.len() / d, d),
            ("relation", p.relation.len() / d, d),
            ("rotation", p.rotation.len() / (d / 2).max(1), d / 2),
            ("curvature", p.curvature.len(), 1),
            ("bias_head", p.bias_head.len(), 1),
            ("bias_tail", p.bias_tail.len(), 1),
        ]
    }

    /// Bit patterns of every parameter, for byte-level equality checks.
    pub fn fingerprint(&self) -> Vec<u64> {
        self.params
            .tensors()
            .iter()
            .flat_map(|t| t.iter().map(|v| v.to_bits()))
            .collect()
    }
}

/// Applies per-block 2x2 rotations (or reflections) parameterized by angles.
pub fn givens(x: &[f64], angles: &[f64], reflect: bool) -> Vec<f64> {
    let mut y = vec![0.0; x.len()];
    for (k, &theta) in angles.iter().enumerate() {
        let (s, c) = theta.sin_cos();
        let (x0, x1) = (x[2 * k], x[2 * k + 1]);
        if reflect {
            y[2 * k] = c * x0 + s * x1;
            y[2 * k + 1] = s * x0 - c * x1;
        } else {
            y[2 * k] = c * x0 - s * x1;
            y[2 * k + 1] = s * x0 + c * x1;
        }
    }
    y
}

/// Backward of [`givens`]: returns `(gx, g_angles)`.
pub fn givens_backward(x: &[f64], angles: &[f64], reflect: bool, g: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut gx = vec![0.0; x.len()];
    let mut ga = vec![0.0; angles.len()];
    for (k, &theta) in angles.iter().enumerate() {
        let (s, c) = theta.sin_cos();
        let (x0, x1) = (x[2 * k], x[2 * k + 1]);
        let (g0, g1) = (g[2 * k], g[2 * k + 1]);
        let (y0, y1) = if reflect {
            gx[2 * k] = c * g0 + s * g1;
            gx[2 * k + 1] = s * g0 - c * g1;
            (c * x0 + s * x1, s * x0 - c * x1)
        } else {
            gx[2 * k] = c * g0 + s * g1;
            gx[2 * k + 1] = -s * g0 + c * g1;
            (c * x0 - s * x1, s * x0 + c * x1)
        };
        ga[k] = -g0 * y1 + g1 * y0;
    }
    (gx, ga)
}
