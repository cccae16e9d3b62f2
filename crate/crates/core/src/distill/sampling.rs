use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};
use crate::models::ModelState;

/// The `k` highest scores, ties broken by smaller entity id.
pub fn top_k_of(scores: &[f64], k: usize) -> (Vec<u32>, Vec<f64>) {
    let k = k.min(scores.len());
    let mut ids: Vec<u32> = (0..scores.len() as u32).collect();
    let cmp = |a: &u32, b: &u32| {
        scores[*b as usize]
            .total_cmp(&scores[*a as usize])
            .then(a.cmp(b))
    };
    if k < ids.len() && k > 0 {
        ids.select_nth_unstable_by(k - 1, cmp);
    }
    ids.truncate(k);
    ids.sort_unstable_by(cmp);
    let top = ids.iter().map(|&i| scores[i as usize]).collect();
    (ids, top)
}

/// Scores every entity under the junior and returns the top `k` candidates
/// with their scores. The gold tail is not injected.
pub fn topk_candidates(junior: &ModelState, head: u32, rel: u32, k: usize) -> Result<(Vec<u32>, Vec<f64>)> {
    if k > junior.num_entities {
        return Err(Error::Config(format!(
            "K = {k} exceeds the {} entities",
            junior.num_entities
        )));
    }
    Ok(top_k_of(&junior.score_all(head, rel), k))
}

/// `n` distinct entities drawn uniformly from everything except `target`.
pub fn negative_sample<R: Rng + ?Sized>(target: u32, n: usize, num_entities: usize, rng: &mut R) -> Result<Vec<u32>> {
    if n >= num_entities {
        return Err(Error::Config(format!(
            "cannot draw {n} negatives from {num_entities} entities"
        )));
    }
    Ok(sample(rng, num_entities - 1, n)
        .into_iter()
        .map(|i| if i as u32 >= target { i as u32 + 1 } else { i as u32 })
        .collect())
}

/// `k` distinct entities drawn uniformly; used by the random-slate ablation.
pub fn random_candidates<R: Rng + ?Sized>(k: usize, num_entities: usize, rng: &mut R) -> Vec<u32> {
    sample(rng, num_entities, k.min(num_entities))
        .into_iter()
        .map(|i| i as u32)
        .collect()
}
