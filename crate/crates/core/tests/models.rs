mod common;

use std::fs;

use mulde::models::{
    init_model, load_checkpoint, save_checkpoint, CurvatureMode, EntityStorage, Manifest, ModelKind, ModelOptions,
    ModelState, INIT_SCALE,
};
use mulde::Error;

use common::random_model;

#[test]
fn init_is_seeded_and_small() {
    for kind in ModelKind::ALL {
        let a = ModelState::new(kind, 8, 30, 4, 3, ModelOptions::default()).unwrap();
        let b = ModelState::new(kind, 8, 30, 4, 3, ModelOptions::default()).unwrap();
        let c = ModelState::new(kind, 8, 30, 4, 4, ModelOptions::default()).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.params.entity, c.params.entity);
        assert!(a.params.entity.iter().all(|v| v.abs() <= INIT_SCALE));
        assert!(a.params.bias_head.iter().chain(&a.params.bias_tail).all(|&v| v == 0.0));
        for r in 0..4 {
            if let Some(c) = a.curvature(r) {
                assert!((c.value() - 1.0).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn shape_errors() {
    assert!(ModelState::new(ModelKind::RotH, 7, 5, 2, 0, ModelOptions::default()).is_err());
    assert!(ModelState::new(ModelKind::RefE, 5, 5, 2, 0, ModelOptions::default()).is_err());
    assert!(ModelState::new(ModelKind::TransE, 1, 5, 2, 0, ModelOptions::default()).is_err());
    assert!(ModelState::new(ModelKind::DistH, 7, 5, 2, 0, ModelOptions::default()).is_ok());
}

#[test]
fn global_curvature_is_shared() {
    let opts = ModelOptions { curvature: CurvatureMode::Global, ..ModelOptions::default() };
    let m = ModelState::new(ModelKind::RotH, 4, 5, 3, 0, opts).unwrap();
    assert_eq!(m.params.curvature.len(), 1);
    assert_eq!(m.curvature(0), m.curvature(2));
}

/// Relabelling entities permutes the scores the same way.
#[test]
fn scores_follow_entity_permutation() {
    let ne = 9;
    let perm: Vec<usize> = vec![4, 0, 7, 1, 8, 2, 6, 3, 5];
    for kind in ModelKind::ALL {
        let m = random_model(kind, ModelOptions::default(), ne, 2, 4, 8);
        let mut p = m.clone();
        let d = m.dim;
        for (old, &new) in perm.iter().enumerate() {
            p.params.entity[new * d..(new + 1) * d].copy_from_slice(&m.params.entity[old * d..(old + 1) * d]);
            p.params.bias_head[new] = m.params.bias_head[old];
            p.params.bias_tail[new] = m.params.bias_tail[old];
        }
        for h in 0..ne {
            for r in 0..2 {
                let base = m.score_all(h as u32, r);
                let moved = p.score_all(perm[h] as u32, r);
                for t in 0..ne {
                    assert_eq!(base[t], moved[perm[t]], "{kind}");
                }
            }
        }
    }
}

#[test]
fn score_all_agrees_with_candidates() {
    for kind in ModelKind::ALL {
        for storage in [EntityStorage::Tangent, EntityStorage::Ball] {
            let opts = ModelOptions { entity_storage: storage, ..ModelOptions::default() };
            let m = random_model(kind, opts, 12, 3, 6, 2);
            let cands = [11, 0, 5, 5];
            let all = m.score_all(3, 2);
            let some = m.score_candidates(3, 2, &cands);
            for (s, &c) in some.iter().zip(&cands) {
                assert_eq!(*s, all[c as usize]);
            }
            let batch = m.score(3, 2, &cands);
            assert_eq!(batch.scores, some);
        }
    }
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for (i, kind) in ModelKind::ALL.into_iter().enumerate() {
        for bias in [true, false] {
            let opts = ModelOptions { bias, ..ModelOptions::default() };
            let m = random_model(kind, opts, 10, 4, 6, i as u64);
            let path = dir.path().join(format!("{kind}-{bias}"));
            let w = [0.5, -1.0, 2.0, 0.0];
            let manifest = save_checkpoint(&path, &m, "abc123", &[("w_rel", 2, 2, &w)]).unwrap();
            let (back, read) = load_checkpoint(&path).unwrap();
            assert_eq!(back, m);
            assert_eq!(back.fingerprint(), m.fingerprint());
            assert_eq!(read, manifest);
            assert_eq!(read.vocab_hash, "abc123");
            assert_eq!(mulde::models::read_table(&path, &read.extra[0]).unwrap(), w);
            for h in 0..10 {
                assert_eq!(back.score_all(h, 1), m.score_all(h, 1));
            }
        }
    }
}

#[test]
fn checkpoint_damage_is_detected() {
    let dir = tempfile::tempdir().unwrap();
    let m = random_model(ModelKind::RotH, ModelOptions::default(), 10, 4, 6, 1);
    let path = dir.path().join("ckpt");
    save_checkpoint(&path, &m, "h", &[]).unwrap();

    let table = path.join("entity.bin");
    let bytes = fs::read(&table).unwrap();
    let mut flipped = bytes.clone();
    flipped[17] ^= 1;
    fs::write(&table, &flipped).unwrap();
    assert!(matches!(load_checkpoint(&path), Err(Error::Integrity(_))));
    fs::write(&table, &bytes[..bytes.len() - 8]).unwrap();
    assert!(matches!(load_checkpoint(&path), Err(Error::Integrity(_))));
    fs::write(&table, &bytes).unwrap();
    assert!(load_checkpoint(&path).is_ok());

    let manifest = path.join("manifest");
    let text = fs::read_to_string(&manifest).unwrap();
    fs::write(&manifest, text.replace("format_version = 1", "format_version = 2")).unwrap();
    assert!(matches!(
        Manifest::read(&path),
        Err(Error::Version { found: 2, expected: 1 })
    ));
    fs::write(&manifest, "garbage = [").unwrap();
    assert!(matches!(load_checkpoint(&path), Err(Error::Integrity(_))));
    fs::remove_file(&manifest).unwrap();
    assert!(matches!(load_checkpoint(&path), Err(Error::Io { .. })));
}

#[test]
fn init_model_uses_vocab_counts() {
    let ds = mulde::kgdata::add_reciprocals(mulde::toy::random_kg(15, 2, 40, 1).unwrap()).unwrap();
    let m = init_model(ModelKind::RefH, 4, &ds.vocab, 9).unwrap();
    assert_eq!(m.num_entities, 15);
    assert_eq!(m.num_relations, 4);
    assert_eq!(m.params.rotation.len(), 4 * 2);
}
