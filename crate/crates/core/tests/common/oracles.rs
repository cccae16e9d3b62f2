//! Exhaustive reference implementations on a 20-entity, 3-relation graph.

use mulde::distill::{top_k_of, topk_candidates, TeacherEnsemble};
use mulde::eval::{evaluate, rank_filtered, Scorer, TieRule};
use mulde::kgdata::{add_reciprocals, build_filter, Dataset, FilterScope, Triple};
use mulde::manifold::{expmap0, hyp_distance, mobius_add, project_to_ball};
use mulde::models::{CurvatureMode, EntityStorage, Geometry, ModelKind, ModelOptions, ModelState, Transform};
use mulde::toy::random_kg;

use super::{ensure, random_model, Check};

pub fn toy() -> Dataset {
    add_reciprocals(random_kg(20, 3, 90, 17).expect("toy graph")).expect("plain graph")
}

fn toy_models(ds: &Dataset) -> Vec<ModelState> {
    let variants = [
        (ModelKind::RotH, EntityStorage::Tangent, true),
        (ModelKind::RefH, EntityStorage::Ball, false),
        (ModelKind::TransH, EntityStorage::Tangent, true),
        (ModelKind::DistH, EntityStorage::Ball, true),
        (ModelKind::TransE, EntityStorage::Tangent, false),
        (ModelKind::RotE, EntityStorage::Tangent, true),
        (ModelKind::RefE, EntityStorage::Tangent, true),
        (ModelKind::DistE, EntityStorage::Tangent, true),
    ];
    variants
        .into_iter()
        .enumerate()
        .map(|(i, (kind, storage, bias))| {
            let options = ModelOptions { bias, curvature: CurvatureMode::PerRelation, entity_storage: storage };
            random_model(kind, options, ds.num_entities(), ds.num_relations(), 6, 40 + i as u64)
        })
        .collect()
}

/// Block rotation or reflection written out independently of the library.
fn block_transform(x: &[f64], angles: &[f64], reflect: bool) -> Vec<f64> {
    let mut y = Vec::with_capacity(x.len());
    for (pair, theta) in x.chunks(2).zip(angles) {
        let (c, s) = (theta.cos(), theta.sin());
        if reflect {
            y.push(c * pair[0] + s * pair[1]);
            y.push(s * pair[0] - c * pair[1]);
        } else {
            y.push(c * pair[0] - s * pair[1]);
            y.push(s * pair[0] + c * pair[1]);
        }
    }
    y
}

/// Score of one triple assembled from the public geometric primitives.
pub fn reference_score(m: &ModelState, h: u32, r: u32, t: u32) -> f64 {
    let d = m.dim;
    let row = |table: &[f64], i: u32, w: usize| table[i as usize * w..(i as usize + 1) * w].to_vec();
    let eh = row(&m.params.entity, h, d);
    let et = row(&m.params.entity, t, d);
    let bias = if m.options.bias {
        m.params.bias_head[h as usize] + m.params.bias_tail[t as usize]
    } else {
        0.0
    };
    let transform = |x: &[f64]| -> Vec<f64> {
        match m.kind.transform() {
            Transform::Translate | Transform::Scale => {
                let rv = row(&m.params.relation, r, d);
                if m.kind.transform() == Transform::Scale {
                    x.iter().zip(&rv).map(|(a, b)| a * b).collect()
                } else {
                    x.iter().zip(&rv).map(|(a, b)| a + b).collect()
                }
            }
            Transform::Rotate => block_transform(x, &row(&m.params.rotation, r, d / 2), false),
            Transform::Reflect => block_transform(x, &row(&m.params.rotation, r, d / 2), true),
        }
    };
    let sq = match m.kind.geometry() {
        Geometry::Euclidean => {
            let q = transform(&eh);
            q.iter().zip(&et).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
        }
        Geometry::Hyperbolic => {
            let c = m.curvature(r).expect("hyperbolic");
            let to_ball = |v: &[f64]| match m.options.entity_storage {
                EntityStorage::Tangent => expmap0(v, c),
                EntityStorage::Ball => project_to_ball(v, c).unwrap(),
            };
            let (ph, pt) = (to_ball(&eh), to_ball(&et));
            let q = match m.kind.transform() {
                Transform::Translate => {
                    let rp = expmap0(&row(&m.params.relation, r, d), c);
                    mobius_add(&ph, &rp, c).unwrap()
                }
                _ => project_to_ball(&transform(&ph), c).unwrap(),
            };
            hyp_distance(&q, &pt, c).powi(2)
        }
    };
    -sq + bias
}

fn queries(ds: &Dataset) -> Vec<(u32, u32)> {
    (0..ds.num_entities() as u32)
        .flat_map(|h| (0..ds.num_relations() as u32).map(move |r| (h, r)))
        .collect()
}

/// Library scores agree with the geometric reference to rounding.
pub fn scores_match_reference() -> Check {
    let ds = toy();
    for m in toy_models(&ds) {
        for (h, r) in queries(&ds) {
            let all = m.score_all(h, r);
            for t in 0..ds.num_entities() as u32 {
                let want = reference_score(&m, h, r, t);
                let got = all[t as usize];
                ensure((got - want).abs() <= 1e-9 * (1.0 + want.abs()), || {
                    format!("{} ({h},{r},{t}): {got} vs reference {want}", m.kind)
                })?;
            }
        }
    }
    Ok(())
}

pub fn topk_matches_sort() -> Check {
    let ds = toy();
    for m in toy_models(&ds) {
        for (h, r) in queries(&ds) {
            let scores = m.score_all(h, r);
            let mut order: Vec<u32> = (0..scores.len() as u32).collect();
            order.sort_by(|&a, &b| scores[b as usize].total_cmp(&scores[a as usize]).then(a.cmp(&b)));
            for k in [1, 3, 7, 20] {
                let (ids, top) = topk_candidates(&m, h, r, k).map_err(|e| e.to_string())?;
                ensure(ids == order[..k], || format!("{} top-{k} of ({h},{r}): {ids:?} vs {:?}", m.kind, &order[..k]))?;
                ensure(top.iter().zip(&ids).all(|(s, &i)| *s == scores[i as usize]), || "top-K scores misaligned".into())?;
            }
        }
    }
    // ties go to the smaller id
    let (ids, _) = top_k_of(&[0.0, 1.0, 1.0, 1.0, -1.0], 2);
    ensure(ids == [1, 2], || format!("tie order {ids:?}"))?;
    ensure(topk_candidates(&toy_models(&ds)[0], 0, 0, 21).is_err(), || "K > N_e accepted".into())
}

/// Rank by counting, one entity at a time.
fn reference_rank(scores: &[f64], target: u32, known: &[u32], tie: TieRule) -> f64 {
    let st = scores[target as usize];
    let (mut above, mut tied) = (0usize, 0usize);
    for (e, &s) in scores.iter().enumerate() {
        let e = e as u32;
        if e == target || known.contains(&e) {
            continue;
        }
        if s > st {
            above += 1;
        } else if s == st {
            tied += 1;
        }
    }
    match tie {
        TieRule::Pessimistic => 1.0 + (above + tied) as f64,
        TieRule::Optimistic => 1.0 + above as f64,
        TieRule::Mean => 1.0 + above as f64 + tied as f64 / 2.0,
    }
}

fn known_tails(ds: &Dataset, scope: FilterScope, h: u32, r: u32) -> Vec<u32> {
    let splits: Vec<&[Triple]> = match scope {
        FilterScope::TrainOnly => vec![&ds.train],
        FilterScope::Full => ds.splits().to_vec(),
    };
    splits
        .into_iter()
        .flatten()
        .filter(|t| t.head == h && t.rel == r)
        .map(|t| t.tail)
        .collect()
}

pub fn rank_matches_count() -> Check {
    let ds = toy();
    let m = &toy_models(&ds)[0];
    for t in ds.splits().concat() {
        let mut scores = m.score_all(t.head, t.rel);
        // quantize to force ties
        for s in &mut scores {
            *s = (*s * 4.0).round();
        }
        for scope in [FilterScope::TrainOnly, FilterScope::Full] {
            let known = known_tails(&ds, scope, t.head, t.rel);
            for tie in [TieRule::Pessimistic, TieRule::Optimistic, TieRule::Mean] {
                let got = rank_filtered(&scores, t.tail, &known, tie).map_err(|e| e.to_string())?;
                let want = reference_rank(&scores, t.tail, &known, tie);
                ensure(got == want, || format!("{t:?} {scope:?} {tie:?}: rank {got} vs {want}"))?;
            }
        }
    }
    Ok(())
}

pub fn evaluate_matches_loop() -> Check {
    let ds = toy();
    for m in toy_models(&ds) {
        for scope in [FilterScope::TrainOnly, FilterScope::Full] {
            let filter = build_filter(&ds, scope);
            let got = evaluate(&m, &ds.test, &filter, TieRule::Pessimistic).map_err(|e| e.to_string())?;
            let mut ranks = Vec::new();
            for t in &ds.test {
                let known = known_tails(&ds, scope, t.head, t.rel);
                ranks.push(reference_rank(&m.score_all(t.head, t.rel), t.tail, &known, TieRule::Pessimistic));
            }
            let n = ranks.len() as f64;
            let mrr = ranks.iter().map(|r| 1.0 / r).sum::<f64>() / n;
            ensure(got.ranks == ranks, || format!("{} {scope:?}: ranks differ", m.kind))?;
            ensure(got.mrr == mrr, || format!("{} {scope:?}: MRR {} vs {mrr}", m.kind, got.mrr))?;
            for k in [1u32, 3, 10] {
                let hits = ranks.iter().filter(|&&r| r <= k as f64).count() as f64 / n;
                ensure(got.hits_at(k) == hits, || format!("{} Hits@{k} {} vs {hits}", m.kind, got.hits_at(k)))?;
            }
        }
    }
    Ok(())
}

pub fn ensemble_matches_sum() -> Check {
    let ds = toy();
    let models = toy_models(&ds);
    let ensemble = TeacherEnsemble::new(models[..4].to_vec()).map_err(|e| e.to_string())?;
    let everyone: Vec<u32> = (0..ds.num_entities() as u32).collect();
    for (h, r) in queries(&ds) {
        let got = ensemble.ensemble_score(h, r, &everyone);
        let mut want = vec![0.0; everyone.len()];
        for m in &models[..4] {
            for (w, s) in want.iter_mut().zip(m.score_candidates(h, r, &everyone)) {
                *w += s;
            }
        }
        ensure(got == want, || format!("ensemble ({h},{r}) differs from the summed rows"))?;
        ensure(Scorer::score_all(&ensemble, h, r) == want, || "Scorer::score_all disagrees".into())?;
        let reference: Vec<f64> = everyone
            .iter()
            .map(|&t| models[..4].iter().map(|m| reference_score(m, h, r, t)).sum())
            .collect();
        let argmax = |v: &[f64]| (0..v.len()).max_by(|&a, &b| v[a].total_cmp(&v[b]).then(b.cmp(&a))).unwrap();
        ensure(argmax(&got) == argmax(&reference), || format!("ensemble argmax differs for ({h},{r})"))?;
    }
    // a single teacher is its own ensemble
    let single = TeacherEnsemble::new(vec![models[0].clone()]).map_err(|e| e.to_string())?;
    ensure(single.ensemble_score(3, 1, &everyone) == models[0].score_candidates(3, 1, &everyone), || {
        "single-teacher ensemble differs".into()
    })
}

pub fn all() -> Vec<(&'static str, fn() -> Check)> {
    vec![
        ("model scores match geometric reference", scores_match_reference),
        ("topk_candidates matches full sort", topk_matches_sort),
        ("rank_filtered matches counting", rank_matches_count),
        ("evaluate matches per-query loop", evaluate_matches_loop),
        ("ensemble_score matches summed rows", ensemble_matches_sum),
    ]
}
