//! Triple files, vocabularies, reciprocal augmentation and the filter index.
//!
//! Triple files use the WN18RR / FB15k-237 layout: one `head<TAB>relation<TAB>tail`
//! record per line. Ids are assigned by lexicographic order of names, so two runs
//! over the same files always produce the same ids.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Suffix used when printing the name of a reciprocal relation.
pub const RECIPROCAL_SUFFIX: &str = "_reverse";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub head: u32,
    pub rel: u32,
    pub tail: u32,
}

impl Triple {
    pub fn new(head: u32, rel: u32, tail: u32) -> Self {
        Self { head, rel, tail }
    }
}

/// Bijective name/id maps for entities and relations.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocab {
    entities: Vec<String>,
    relations: Vec<String>,
    entity_ids: HashMap<String, u32>,
    relation_ids: HashMap<String, u32>,
    reciprocal: bool,
}

impl Vocab {
    /// Builds a vocabulary from arbitrary name collections. Duplicates are
    /// collapsed and ids follow lexicographic order.
    pub fn from_names<E, R, S, T>(entities: E, relations: R) -> Self
    where
        E: IntoIterator<Item = S>,
        R: IntoIterator<Item = T>,
        S: Into<String>,
        T: Into<String>,
    {
        let entities: BTreeSet<String> = entities.into_iter().map(Into::into).collect();
        let relations: BTreeSet<String> = relations.into_iter().map(Into::into).collect();
        let entities: Vec<String> = entities.into_iter().collect();
        let relations: Vec<String> = relations.into_iter().collect();
        let entity_ids = index_of(&entities);
        let relation_ids = index_of(&relations);
        Self {
            entities,
            relations,
            entity_ids,
            relation_ids,
            reciprocal: false,
        }
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    /// Relation count, including reciprocal relations once augmented.
    pub fn num_relations(&self) -> usize {
        if self.reciprocal {
            2 * self.relations.len()
        } else {
            self.relations.len()
        }
    }

    /// Relation count of the original (non-reciprocal) relations.
    pub fn num_base_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn has_reciprocals(&self) -> bool {
        self.reciprocal
    }

    pub fn entity_id(&self, name: &str) -> Option<u32> {
        self.entity_ids.get(name).copied()
    }

    pub fn relation_id(&self, name: &str) -> Option<u32> {
        self.relation_ids.get(name).copied()
    }

    pub fn entity_name(&self, id: u32) -> Option<&str> {
        self.entities.get(id as usize).map(String::as_str)
    }

    pub fn relation_name(&self, id: u32) -> Option<String> {
        let base = self.relations.len();
        let id = id as usize;
        if id < base {
            Some(self.relations[id].clone())
        } else if self.reciprocal && id < 2 * base {
            Some(format!("{}{}", self.relations[id - base], RECIPROCAL_SUFFIX))
        } else {
            None
        }
    }

    /// Stable content hash (hex SHA-256) over names, ids and the reciprocal flag.
    /// Checkpoints record it so that models over different vocabularies are
    /// never mixed.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for name in &self.entities {
            hasher.update(b"e\t");
            hasher.update(name.as_bytes());
            hasher.update(b"\n");
        }
        for name in &self.relations {
            hasher.update(b"r\t");
            hasher.update(name.as_bytes());
            hasher.update(b"\n");
        }
        hasher.update(if self.reciprocal { b"reciprocal" } else { b"plain-----" });
        hex::encode(hasher.finalize())
    }

    /// Writes `entities.tsv` and `relations.tsv` (`name<TAB>id`) into `dir`.
    pub fn write_tsv(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut ents = String::new();
        for (id, name) in self.entities.iter().enumerate() {
            let _ = writeln!(ents, "{name}\t{id}");
        }
        let mut rels = String::new();
        for id in 0..self.num_relations() as u32 {
            let name = self.relation_name(id).expect("id in range");
            let _ = writeln!(rels, "{name}\t{id}");
        }
        let ent_path = dir.join("entities.tsv");
        fs::write(&ent_path, ents).map_err(|e| Error::io(&ent_path, e))?;
        let rel_path = dir.join("relations.tsv");
        fs::write(&rel_path, rels).map_err(|e| Error::io(&rel_path, e))?;
        Ok(())
    }
}

fn index_of(names: &[String]) -> HashMap<String, u32> {
    names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.clone(), i as u32))
        .collect()
}

type RawTriple = (String, String, String);

fn read_raw(path: &Path) -> Result<Vec<RawTriple>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                message: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        out.push((
            fields[0].to_string(),
            fields[1].to_string(),
            fields[2].to_string(),
        ));
    }
    Ok(out)
}

fn index_raw(raw: &[RawTriple], vocab: &Vocab, path: &Path) -> Result<Vec<Triple>> {
    let lookup_entity = |name: &str| {
        vocab
            .entity_id(name)
            .ok_or_else(|| Error::Vocab(format!("{}: unknown entity '{name}'", path.display())))
    };
    let mut seen = HashSet::with_capacity(raw.len());
    let mut out = Vec::with_capacity(raw.len());
    for (h, r, t) in raw {
        let rel = vocab
            .relation_id(r)
            .ok_or_else(|| Error::Vocab(format!("{}: unknown relation '{r}'", path.display())))?;
        let triple = Triple::new(lookup_entity(h)?, rel, lookup_entity(t)?);
        if seen.insert(triple) {
            out.push(triple);
        }
    }
    Ok(out)
}

/// Reads a triple file. With `vocab = None` the vocabulary is built from this
/// file alone; otherwise every name must already be known. Duplicate lines are
/// kept once, in first-occurrence order.
pub fn load_triples(path: &Path, vocab: Option<&Vocab>) -> Result<(Vec<Triple>, Vocab)> {
    let raw = read_raw(path)?;
    let vocab = match vocab {
        Some(v) => v.clone(),
        None => Vocab::from_names(
            raw.iter().flat_map(|(h, _, t)| [h.clone(), t.clone()]),
            raw.iter().map(|(_, r, _)| r.clone()),
        ),
    };
    let triples = index_raw(&raw, &vocab, path)?;
    Ok((triples, vocab))
}

/// Writes triples back out in the same TSV layout. Reciprocal triples are
/// written with the reciprocal relation name.
pub fn write_triples(path: &Path, triples: &[Triple], vocab: &Vocab) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for t in triples {
        let name = |id: u32| {
            vocab
                .entity_name(id)
                .ok_or_else(|| Error::Vocab(format!("entity id {id} out of range")))
        };
        let rel = vocab
            .relation_name(t.rel)
            .ok_or_else(|| Error::Vocab(format!("relation id {} out of range", t.rel)))?;
        writeln!(w, "{}\t{}\t{}", name(t.head)?, rel, name(t.tail)?)
            .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub train: Vec<Triple>,
    pub valid: Vec<Triple>,
    pub test: Vec<Triple>,
    pub vocab: Vocab,
}

impl Dataset {
    /// Builds a dataset from already indexed splits, checking id ranges and
    /// split disjointness.
    pub fn new(train: Vec<Triple>, valid: Vec<Triple>, test: Vec<Triple>, vocab: Vocab) -> Result<Self> {
        let ds = Self {
            train,
            valid,
            test,
            vocab,
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Loads `train.txt`, `valid.txt` and `test.txt` from `dir`. The vocabulary
    /// covers the union of all three splits.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let paths = ["train.txt", "valid.txt", "test.txt"].map(|f| dir.join(f));
        let mut raws = Vec::with_capacity(3);
        for p in &paths {
            raws.push(read_raw(p)?);
        }
        let vocab = Vocab::from_names(
            raws.iter()
                .flatten()
                .flat_map(|(h, _, t)| [h.clone(), t.clone()]),
            raws.iter().flatten().map(|(_, r, _)| r.clone()),
        );
        let train = index_raw(&raws[0], &vocab, &paths[0])?;
        let valid = index_raw(&raws[1], &vocab, &paths[1])?;
        let test = index_raw(&raws[2], &vocab, &paths[2])?;
        Self::new(train, valid, test, vocab)
    }

    pub fn num_entities(&self) -> usize {
        self.vocab.num_entities()
    }

    pub fn num_relations(&self) -> usize {
        self.vocab.num_relations()
    }

    pub fn splits(&self) -> [&[Triple]; 3] {
        [&self.train, &self.valid, &self.test]
    }

    /// Writes the three splits as `train.txt`, `valid.txt` and `test.txt`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, split) in ["train.txt", "valid.txt", "test.txt"].iter().zip(self.splits()) {
            write_triples(&dir.join(name), split, &self.vocab)?;
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        let ne = self.vocab.num_entities() as u32;
        let nr = self.vocab.num_relations() as u32;
        for split in self.splits() {
            for t in split {
                if t.head >= ne || t.tail >= ne || t.rel >= nr {
                    return Err(Error::Data(format!("triple {t:?} out of vocabulary range")));
                }
            }
        }
        let train: HashSet<&Triple> = self.train.iter().collect();
        let valid: HashSet<&Triple> = self.valid.iter().collect();
        for t in &self.valid {
            if train.contains(t) {
                return Err(Error::Data(format!("triple {t:?} appears in both train and valid")));
            }
        }
        for t in &self.test {
            if train.contains(t) || valid.contains(t) {
                return Err(Error::Data(format!("test triple {t:?} also appears in another split")));
            }
        }
        Ok(())
    }
}

/// Adds `(t, r + N_r, h)` for every `(h, r, t)` in each split and doubles the
/// relation count. Rejects already augmented datasets.
pub fn add_reciprocals(d: Dataset) -> Result<Dataset> {
    if d.vocab.reciprocal {
        return Err(Error::Data("dataset already carries reciprocal relations".into()));
    }
    let base = d.vocab.num_base_relations() as u32;
    let augment = |split: Vec<Triple>| {
        let mut out = Vec::with_capacity(split.len() * 2);
        out.extend_from_slice(&split);
        out.extend(split.iter().map(|t| Triple::new(t.tail, t.rel + base, t.head)));
        out
    };
    let mut vocab = d.vocab;
    vocab.reciprocal = true;
    Ok(Dataset {
        train: augment(d.train),
        valid: augment(d.valid),
        test: augment(d.test),
        vocab,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterScope {
    TrainOnly,
    Full,
}

impl std::str::FromStr for FilterScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train-only" | "train" => Ok(Self::TrainOnly),
            "full" => Ok(Self::Full),
            other => Err(Error::Config(format!("unknown filter scope '{other}'"))),
        }
    }
}

/// Known true tails for every `(head, relation)` query.
#[derive(Debug, Clone)]
pub struct FilterIndex {
    scope: FilterScope,
    known: HashMap<(u32, u32), Vec<u32>>,
}

impl FilterIndex {
    pub fn scope(&self) -> FilterScope {
        self.scope
    }

    /// Sorted known tails for the query; empty when the query is unseen.
    pub fn known_tails(&self, head: u32, rel: u32) -> &[u32] {
        self.known.get(&(head, rel)).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Number of distinct `(head, relation)` keys.
    pub fn len(&self) -> usize {
        self.known.len()
    }

    pub fn is_empty(&self) -> bool {
        self.known.is_empty()
    }
}

pub fn build_filter(d: &Dataset, scope: FilterScope) -> FilterIndex {
    let mut sets: HashMap<(u32, u32), BTreeSet<u32>> = HashMap::new();
    let splits: &[&[Triple]] = match scope {
        FilterScope::TrainOnly => &[&d.train],
        FilterScope::Full => &[&d.train, &d.valid, &d.test],
    };
    for split in splits {
        for t in split.iter() {
            sets.entry((t.head, t.rel)).or_default().insert(t.tail);
        }
    }
    let known = sets
        .into_iter()
        .map(|(k, v)| (k, v.into_iter().collect()))
        .collect();
    FilterIndex { scope, known }
}
