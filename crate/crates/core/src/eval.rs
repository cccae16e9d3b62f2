//! Filtered link-prediction evaluation (MRR, Hits@N).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kgdata::{FilterIndex, Triple, Vocab};
use crate::models::ModelState;

/// Cut-offs reported by [`evaluate`].
pub const HITS_AT: [u32; 3] = [1, 3, 10];

/// Anything that can score every entity as the tail of a query.
pub trait Scorer: Sync {
    fn num_entities(&self) -> usize;
    fn score_all(&self, head: u32, rel: u32) -> Vec<f64>;
}

impl Scorer for ModelState {
    fn num_entities(&self) -> usize {
        self.num_entities
    }

    fn score_all(&self, head: u32, rel: u32) -> Vec<f64> {
        ModelState::score_all(self, head, rel)
    }
}

impl<S: Scorer + ?Sized> Scorer for &S {
    fn num_entities(&self) -> usize {
        (**self).num_entities()
    }

    fn score_all(&self, head: u32, rel: u32) -> Vec<f64> {
        (**self).score_all(head, rel)
    }
}

/// How entities scoring exactly like the target are counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieRule {
    /// Ties rank above the target.
    #[default]
    Pessimistic,
    /// Ties rank below the target.
    Optimistic,
    /// Half of the ties rank above the target.
    Mean,
}

impl std::str::FromStr for TieRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pessimistic" => Ok(Self::Pessimistic),
            "optimistic" => Ok(Self::Optimistic),
            "mean" => Ok(Self::Mean),
            other => Err(Error::Config(format!("unknown tie rule '{other}'"))),
        }
    }
}

/// Filtered rank of `target` among all entities. `known` lists the known true
/// tails for the query (sorted or not); they are skipped, except the target.
pub fn rank_filtered(scores: &[f64], target: u32, known: &[u32], tie: TieRule) -> Result<f64> {
    let t = target as usize;
    let Some(&target_score) = scores.get(t) else {
        return Err(Error::Data(format!(
            "target {target} outside the {} scored entities",
            scores.len()
        )));
    };
    if !target_score.is_finite() {
        return Err(Error::Numerical(format!("non-finite score for target {target}")));
    }
    let mut greater = 0usize;
    let mut ties = 0usize;
    for (i, &s) in scores.iter().enumerate() {
        if i == t {
            continue;
        }
        if s > target_score {
            greater += 1;
        } else if s == target_score {
            ties += 1;
        }
    }
    let mut prev = None;
    let mut sorted_known = known.to_vec();
    sorted_known.sort_unstable();
    for &k in &sorted_known {
        if k == target || prev == Some(k) {
            continue;
        }
        prev = Some(k);
        let Some(&s) = scores.get(k as usize) else {
            continue;
        };
        if s > target_score {
            greater -= 1;
        } else if s == target_score {
            ties -= 1;
        }
    }
    let rank = match tie {
        TieRule::Pessimistic => 1.0 + (greater + ties) as f64,
        TieRule::Optimistic => 1.0 + greater as f64,
        TieRule::Mean => 1.0 + greater as f64 + ties as f64 / 2.0,
    };
    Ok(rank)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mrr: f64,
    pub hits: BTreeMap<u32, f64>,
    pub n_queries: usize,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub ranks: Vec<f64>,
}

impl Metrics {
    /// Aggregates a list of ranks (each ≥ 1).
    pub fn from_ranks(ranks: Vec<f64>) -> Result<Self> {
        if ranks.is_empty() {
            return Err(Error::Data("cannot compute metrics over an empty split".into()));
        }
        let n = ranks.len() as f64;
        let mrr = ranks.iter().map(|r| 1.0 / r).sum::<f64>() / n;
        let hits = HITS_AT
            .iter()
            .map(|&k| (k, ranks.iter().filter(|&&r| r <= k as f64).count() as f64 / n))
            .collect();
        Ok(Self {
            mrr,
            hits,
            n_queries: ranks.len(),
            ranks,
        })
    }

    pub fn hits_at(&self, k: u32) -> f64 {
        self.hits.get(&k).copied().unwrap_or(f64::NAN)
    }

    /// Same metrics without the per-query ranks.
    pub fn summary(&self) -> Self {
        Self {
            ranks: Vec::new(),
            ..self.clone()
        }
    }
}

/// Filtered MRR and Hits@{1,3,10} of `scorer` over tail queries of `split`.
/// Head prediction is covered by the reciprocal triples already in the split.
pub fn evaluate<S: Scorer>(scorer: &S, split: &[Triple], filter: &FilterIndex, tie: TieRule) -> Result<Metrics> {
    if split.is_empty() {
        return Err(Error::Data("evaluation split is empty".into()));
    }
    let ranks = split
        .par_iter()
        .map(|t| {
            let scores = scorer.score_all(t.head, t.rel);
            rank_filtered(&scores, t.tail, filter.known_tails(t.head, t.rel), tie)
        })
        .collect::<Result<Vec<f64>>>()?;
    Metrics::from_ranks(ranks)
}

/// Writes `head<TAB>rel<TAB>tail<TAB>rank` lines using vocabulary names.
pub fn write_rank_dump(path: &Path, split: &[Triple], ranks: &[f64], vocab: &Vocab) -> Result<()> {
    let mut out = String::new();
    for (t, r) in split.iter().zip(ranks) {
        let name = |id| vocab.entity_name(id).unwrap_or("?");
        let rel = vocab.relation_name(t.rel).unwrap_or_else(|| "?".into());
        let _ = writeln!(out, "{}\t{}\t{}\t{}", name(t.head), rel, name(t.tail), r);
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
