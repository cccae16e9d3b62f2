use proptest::collection::vec;
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mulde::distill::{
    attention_weights, combine_rows, gradient_self_test, hard_label_loss_grad, positive_first_labels,
    relation_scale, scaling_grad, senior_loss_grad, soft_label_loss, soft_label_loss_grad, SeniorState,
};
use mulde::eval::{rank_filtered, TieRule};
use mulde::manifold::{
    expmap0, expmap0_backward, hyp_distance, hyp_distance_sq_grad, mobius_add, mobius_add_backward, Curvature,
};
use mulde::models::{givens, CurvatureMode, EntityStorage, ModelGrad, ModelKind, ModelOptions};
use mulde::optim::{add_l2_penalty, grad_check};

use super::{ensure, property, random_model, Check};

const GRAD_TOL: f64 = 1e-4;

fn fail(msg: String) -> TestCaseError {
    TestCaseError::fail(msg)
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Points strictly inside the ball of curvature `c`.
fn ball_point(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    vec(-1.0f64..1.0, dim).prop_flat_map(|dir| {
        (Just(dir), 0.0f64..0.9).prop_map(|(dir, r)| {
            let n = norm(&dir).max(1e-12);
            dir.iter().map(|v| v / n * r).collect()
        })
    })
}

fn curvature() -> impl Strategy<Value = f64> {
    0.3f64..2.0
}

fn scaled(x: &[f64], c: f64) -> Vec<f64> {
    x.iter().map(|v| v / c.sqrt()).collect()
}

pub fn mobius_identity_and_inverse() -> Check {
    property(256, (ball_point(5), curvature()), |(x, c)| {
        let cv = Curvature::new(c).unwrap();
        let x = scaled(&x, c);
        let zero = vec![0.0; x.len()];
        let right = mobius_add(&x, &zero, cv).unwrap();
        let left = mobius_add(&zero, &x, cv).unwrap();
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let inv = mobius_add(&neg, &x, cv).unwrap();
        for i in 0..x.len() {
            if (right[i] - x[i]).abs() > 1e-12 || (left[i] - x[i]).abs() > 1e-12 {
                return Err(fail(format!("identity violated at {i}: {right:?} {left:?} vs {x:?}")));
            }
        }
        prop_assert!(norm(&inv) < 1e-12, "(-x)⊕x = {inv:?}");
        Ok(())
    })
}

pub fn distance_is_a_metric() -> Check {
    property(256, (ball_point(4), ball_point(4), ball_point(4), curvature()), |(x, y, z, c)| {
        let cv = Curvature::new(c).unwrap();
        let (x, y, z) = (scaled(&x, c), scaled(&y, c), scaled(&z, c));
        let dxy = hyp_distance(&x, &y, cv);
        let dyx = hyp_distance(&y, &x, cv);
        prop_assert!(dxy >= 0.0);
        prop_assert!((dxy - dyx).abs() <= 1e-9 * (1.0 + dxy), "asymmetric: {dxy} vs {dyx}");
        prop_assert_eq!(hyp_distance(&x, &x, cv), 0.0);
        let dxz = hyp_distance(&x, &z, cv);
        let dyz = hyp_distance(&y, &z, cv);
        prop_assert!(dxz <= dxy + dyz + 1e-9, "triangle: {dxz} > {dxy} + {dyz}");
        Ok(())
    })
}

pub fn flat_limit() -> Check {
    property(256, (vec(-1.0f64..1.0, 4), vec(-1.0f64..1.0, 4)), |(x, y)| {
        let c = Curvature::new(1e-8).unwrap();
        let d = hyp_distance(&x, &y, c);
        let euclid: f64 = 2.0 * norm(&x.iter().zip(&y).map(|(a, b)| a - b).collect::<Vec<_>>());
        prop_assert!((d - euclid).abs() < 1e-3, "c→0: {d} vs 2|x-y| = {euclid}");
        Ok(())
    })
}

pub fn expmap_stays_in_ball() -> Check {
    property(256, (vec(-50.0f64..50.0, 6), curvature()), |(v, c)| {
        let y = expmap0(&v, Curvature::new(c).unwrap());
        prop_assert!(norm(&y) * c.sqrt() < 1.0);
        Ok(())
    })
}

pub fn givens_orthogonality() -> Check {
    property(256, (vec(-2.0f64..2.0, 6), vec(-2.0f64..2.0, 6), vec(-4.0f64..4.0, 3)), |(x, y, angles)| {
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
        for reflect in [false, true] {
            let gx = givens(&x, &angles, reflect);
            let gy = givens(&y, &angles, reflect);
            prop_assert!((norm(&gx) - norm(&x)).abs() < 1e-12);
            prop_assert!((dot(&gx, &gy) - dot(&x, &y)).abs() < 1e-12, "inner product not preserved");
        }
        let back = givens(&givens(&x, &angles, true), &angles, true);
        let neg: Vec<f64> = angles.iter().map(|a| -a).collect();
        let undo = givens(&givens(&x, &angles, false), &neg, false);
        for i in 0..x.len() {
            prop_assert!((back[i] - x[i]).abs() < 1e-12, "reflection is not an involution");
            prop_assert!((undo[i] - x[i]).abs() < 1e-12, "rotation by -θ does not undo θ");
        }
        Ok(())
    })
}

pub fn kl_nonnegative_and_zero() -> Check {
    property(256, (vec(-10.0f64..10.0, 1..20), any::<u64>()), |(p, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q: Vec<f64> = p.iter().map(|_| rng.gen_range(-10.0..10.0)).collect();
        prop_assert!(soft_label_loss(&p, &q) >= 0.0);
        prop_assert!(soft_label_loss(&p, &p).abs() <= 1e-12);
        // shifting logits leaves the softmax unchanged
        let shifted: Vec<f64> = p.iter().map(|v| v + 3.0).collect();
        prop_assert!(soft_label_loss(&p, &shifted).abs() <= 1e-12);
        Ok(())
    })
}

pub fn attention_is_normalized() -> Check {
    property(256, (vec(0.0f64..5.0, 1..8), 0.1f64..50.0), |(p, gamma)| {
        let w = attention_weights(&p, gamma);
        prop_assert!(w.iter().all(|&v| v > 0.0));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let m = w.len();
        let ones = vec![vec![1.0]; m];
        let scaled_sum = combine_rows(&ones, &w)[0];
        prop_assert!((scaled_sum - m as f64).abs() < 1e-12, "weights·m sum to {scaled_sum}");
        Ok(())
    })
}

fn argsort(row: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..row.len()).collect();
    idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
    idx
}

pub fn relation_scale_keeps_order() -> Check {
    let rows = vec(vec(-20.0f64..20.0, 12), 3);
    property(256, (rows, vec(-30.0f64..30.0, 3)), |(rows, w)| {
        let mut senior = SeniorState::new(1, 3, 1.0, 1.1).unwrap();
        senior.w_rel.copy_from_slice(&w);
        let out = relation_scale(&rows, &senior, 0);
        for (a, b) in rows.iter().zip(&out) {
            prop_assert_eq!(argsort(a), argsort(b));
        }
        Ok(())
    })
}

pub fn ranking_ignores_monotone_transforms() -> Check {
    let case = (vec(-40i32..40, 2..30), any::<prop::sample::Index>(), vec(any::<bool>(), 30));
    property(512, case, |(ints, target, known_mask)| {
        let scores: Vec<f64> = ints.iter().map(|&v| v as f64).collect();
        let target = target.index(scores.len()) as u32;
        let known: Vec<u32> = (0..scores.len() as u32)
            .filter(|&e| known_mask[e as usize])
            .collect();
        let transforms: [fn(f64) -> f64; 3] = [|x| 3.0 * x + 5.0, |x| x * x * x, |x| (x / 4.0).exp()];
        for tie in [TieRule::Pessimistic, TieRule::Optimistic, TieRule::Mean] {
            let base = rank_filtered(&scores, target, &known, tie).unwrap();
            for f in transforms {
                let mapped: Vec<f64> = scores.iter().map(|&s| f(s)).collect();
                prop_assert_eq!(rank_filtered(&mapped, target, &known, tie).unwrap(), base);
            }
            // a larger filter can only improve the rank
            let unfiltered = rank_filtered(&scores, target, &[], tie).unwrap();
            prop_assert!(base <= unfiltered);
        }
        Ok(())
    })
}

/// Numeric vs analytic gradients of the manifold primitives.
pub fn primitive_gradients() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let d = 4;
        let c0: f64 = rng.gen_range(0.5..1.5);
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-0.35..0.35)).collect();
        let y: Vec<f64> = (0..d).map(|_| rng.gen_range(-0.35..0.35)).collect();
        let up: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let pack = |x: &[f64], y: &[f64], c: f64| [x, y, &[c]].concat();

        // Möbius addition (x, y, c) -> <up, x ⊕ y>
        let p = pack(&x, &y, c0);
        worst = worst.max(grad_check(
            |p| {
                let (x, y, c) = (&p[..d], &p[d..2 * d], p[2 * d]);
                let z = mobius_add(x, y, Curvature::new(c).unwrap()).unwrap();
                let (gx, gy, gc) = mobius_add_backward(x, y, c, &up);
                (z.iter().zip(&up).map(|(a, b)| a * b).sum(), pack(&gx, &gy, gc))
            },
            &p,
            1e-6,
        ));

        // squared distance
        worst = worst.max(grad_check(
            |p| {
                let (d2, gx, gy, gc) = hyp_distance_sq_grad(&p[..d], &p[d..2 * d], p[2 * d]);
                (d2, pack(&gx, &gy, gc))
            },
            &p,
            1e-6,
        ));

        // origin exponential map
        let pv = [x.as_slice(), &[c0]].concat();
        worst = worst.max(grad_check(
            |p| {
                let (v, c) = (&p[..d], p[d]);
                let y = expmap0(v, Curvature::new(c).unwrap());
                let (gv, gc) = expmap0_backward(v, c, &up);
                (y.iter().zip(&up).map(|(a, b)| a * b).sum(), [gv.as_slice(), &[gc]].concat())
            },
            &pv,
            1e-6,
        ));
    }
    ensure(worst < GRAD_TOL, || format!("primitive gradient relative error {worst:e}"))
}

fn model_variants() -> Vec<(ModelKind, ModelOptions)> {
    let mut out = Vec::new();
    for kind in ModelKind::ALL {
        for storage in [EntityStorage::Tangent, EntityStorage::Ball] {
            for curvature in [CurvatureMode::PerRelation, CurvatureMode::Global] {
                for bias in [true, false] {
                    out.push((kind, ModelOptions { bias, curvature, entity_storage: storage }));
                }
            }
        }
    }
    out
}

/// `Σ_i up_i · score_i` against its analytic gradient for every model
/// variant, with repeated candidates and the head among them.
pub fn model_gradients() -> Check {
    for (i, (kind, options)) in model_variants().into_iter().enumerate() {
        let model = random_model(kind, options, 6, 3, 4, 100 + i as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
        let (head, rel) = (rng.gen_range(0..6u32), rng.gen_range(0..3u32));
        let cands: Vec<u32> = vec![head, 0, 1, 2, 3, 4, 5, 2];
        let up: Vec<f64> = cands.iter().map(|_| rng.gen_range(-1.0..1.0)).collect();
        let flat = model.params.flatten();
        let err = grad_check(
            |p| {
                let mut m = model.clone();
                m.params.assign_flat(p);
                let s = m.score_candidates(head, rel, &cands);
                let loss = s.iter().zip(&up).map(|(a, b)| a * b).sum();
                let mut g = ModelGrad::default();
                m.backward(head, rel, &cands, &up, &mut g);
                (loss, g.to_dense(&m.params).flatten())
            },
            &flat,
            1e-6,
        );
        ensure(err < GRAD_TOL, || format!("{kind} {options:?}: relative error {err:e}"))?;
    }
    Ok(())
}

/// Soft-label, hard-label, senior and L2 terms, each on its own, then the
/// combined objective through the trainer for every junior kind.
pub fn loss_gradients() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let k = 7;
        let labels: Vec<f64> = (0..k).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let s: Vec<f64> = (0..k).map(|_| rng.gen_range(-3.0..3.0)).collect();
        worst = worst.max(grad_check(|p| soft_label_loss_grad(&labels, p), &s, 1e-6));
        let y = positive_first_labels(k);
        worst = worst.max(grad_check(|p| hard_label_loss_grad(p, &y), &s, 1e-6));

        let m = 3;
        let rows: Vec<Vec<f64>> = (0..m).map(|_| (0..k).map(|_| rng.gen_range(-4.0..4.0)).collect()).collect();
        let cands: Vec<u32> = (10..10 + k as u32).collect();
        let target = 10 + rng.gen_range(0..k as u32);
        let w: Vec<f64> = (0..2 * m).map(|_| rng.gen_range(-2.0..2.0)).collect();
        worst = worst.max(grad_check(
            |p| {
                let mut senior = SeniorState::new(2, m, 1.0, 1.1).unwrap();
                senior.w_rel.copy_from_slice(p);
                let scaled = relation_scale(&rows, &senior, 1);
                let (loss, g_sum) = senior_loss_grad(&scaled, &cands, target);
                let mut grad = vec![0.0; p.len()];
                grad[m..].copy_from_slice(&scaling_grad(&rows, &senior, 1, &g_sum));
                (loss, grad)
            },
            &w,
            1e-6,
        ));

        worst = worst.max(grad_check(
            |p| {
                let mut g = vec![0.0; p.len()];
                let loss = add_l2_penalty(&[p], &mut [&mut g], 0.37);
                (loss, g)
            },
            &s,
            1e-6,
        ));
    }
    ensure(worst < GRAD_TOL, || format!("loss gradient relative error {worst:e}"))?;
    for kind in ModelKind::ALL {
        for alpha in [0.0, 0.1, 0.5, 1.0] {
            let err = gradient_self_test(kind, ModelOptions::default(), alpha, 9).map_err(|e| e.to_string())?;
            ensure(err < GRAD_TOL, || format!("combined objective, {kind}, α={alpha}: relative error {err:e}"))?;
        }
    }
    Ok(())
}

/// Every property, by name.
pub fn all() -> Vec<(&'static str, fn() -> Check)> {
    vec![
        ("mobius identity and inverse", mobius_identity_and_inverse),
        ("distance symmetry, zero and triangle", distance_is_a_metric),
        ("curvature to zero limit", flat_limit),
        ("expmap stays in ball", expmap_stays_in_ball),
        ("rotation and reflection orthogonality", givens_orthogonality),
        ("kl non-negative and zero", kl_nonnegative_and_zero),
        ("attention weights normalized", attention_is_normalized),
        ("relation scale keeps argsort", relation_scale_keeps_order),
        ("ranking monotone-transform invariance", ranking_ignores_monotone_transforms),
        ("manifold primitive gradients", primitive_gradients),
        ("model gradients, every kind", model_gradients),
        ("loss gradients", loss_gradients),
    ]
}
