//! Small synthetic knowledge graphs for tests, demos and smoke runs.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kgdata::{Dataset, Triple, Vocab};

fn entity_names(n: usize) -> Vec<String> {
    let width = n.saturating_sub(1).to_string().len();
    (0..n).map(|i| format!("e{i:0width$}")).collect()
}

/// Shuffles `triples` and cuts off validation and test fractions. A triple
/// only moves out of train if both of its entities still appear in train.
fn split(mut triples: Vec<Triple>, ne: usize, holdout: f64, rng: &mut ChaCha8Rng) -> (Vec<Triple>, Vec<Triple>, Vec<Triple>) {
    triples.shuffle(rng);
    let mut degree = vec![0usize; ne];
    for t in &triples {
        degree[t.head as usize] += 1;
        degree[t.tail as usize] += 1;
    }
    let target = ((triples.len() as f64) * holdout).round() as usize;
    let (mut train, mut valid, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for t in triples {
        let (h, tl) = (t.head as usize, t.tail as usize);
        let can_hold = degree[h] > 1 && degree[tl] > 1 && h != tl;
        if can_hold && valid.len() < target {
            valid.push(t);
        } else if can_hold && test.len() < target {
            test.push(t);
        } else {
            train.push(t);
            continue;
        }
        degree[h] -= 1;
        degree[tl] -= 1;
    }
    (train, valid, test)
}

/// Uniformly random KG with `n_triples` distinct triples, ten percent each held
/// out for validation and test. Entity ids follow `e00, e01, ...` and
/// relation ids `r0, r1, ...`.
pub fn random_kg(num_entities: usize, num_relations: usize, n_triples: usize, seed: u64) -> Result<Dataset> {
    let capacity = num_entities * num_entities * num_relations;
    if num_entities < 2 || num_relations == 0 || n_triples > capacity / 2 {
        return Err(Error::Config(format!(
            "cannot draw {n_triples} triples over {num_entities} entities and {num_relations} relations"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = BTreeSet::new();
    while set.len() < n_triples {
        set.insert(Triple::new(
            rng.gen_range(0..num_entities as u32),
            rng.gen_range(0..num_relations as u32),
            rng.gen_range(0..num_entities as u32),
        ));
    }
    let (train, valid, test) = split(set.into_iter().collect(), num_entities, 0.1, &mut rng);
    let vocab = Vocab::from_names(entity_names(num_entities), (0..num_relations).map(|r| format!("r{r}")));
    Dataset::new(train, valid, test, vocab)
}

/// Relations of [`compositional_kg`], in id order.
pub const COMPOSITIONAL_RELATIONS: [&str; 6] =
    ["r0_next", "r1_jump", "r2_next_jump", "r3_parent", "r4_grandparent", "r5_sibling"];

/// KG whose relations compose. Entities sit on a ring (`next` is +1, `jump`
/// is +7, `next_jump` is +8) and in a ternary tree (`parent`,
/// `grandparent = parent∘parent`, `sibling` shares a parent). Held-out
/// triples are mostly recoverable by chaining training triples.
pub fn compositional_kg(num_entities: usize, seed: u64) -> Result<Dataset> {
    if num_entities < 16 {
        return Err(Error::Config(format!("need at least 16 entities, got {num_entities}")));
    }
    let n = num_entities as u32;
    let mut triples = Vec::new();
    for i in 0..n {
        triples.push(Triple::new(i, 0, (i + 1) % n));
        triples.push(Triple::new(i, 1, (i + 7) % n));
        triples.push(Triple::new(i, 2, (i + 8) % n));
    }
    let parent = |i: u32| (i - 1) / 3;
    for i in 1..n {
        triples.push(Triple::new(i, 3, parent(i)));
        if parent(i) > 0 {
            triples.push(Triple::new(i, 4, parent(parent(i))));
        }
        for j in 1..n {
            if j != i && parent(j) == parent(i) {
                triples.push(Triple::new(i, 5, j));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (train, valid, test) = split(triples, num_entities, 0.1, &mut rng);
    let vocab = Vocab::from_names(entity_names(num_entities), COMPOSITIONAL_RELATIONS);
    Dataset::new(train, valid, test, vocab)
}
