//! Flat `key = value` run configuration.
//!
//! Files hold one assignment per line; `#` starts a comment. Keys use
//! kebab-case (underscores are accepted too). Command-line flags are applied
//! on top of the file, and the merged result is written back out as the
//! run snapshot, so feeding a snapshot to `--config` repeats the run.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use mulde::distill::{CandidateMode, DistillConfig, TrainConfig};
use mulde::eval::TieRule;
use mulde::kgdata::FilterScope;
use mulde::models::{CurvatureMode, EntityStorage, ModelKind};
use mulde::{Error, Result};

pub const TEACHER_DIMS: [usize; 4] = [64, 128, 256, 512];
pub const JUNIOR_DIMS: [usize; 4] = [8, 16, 32, 64];
pub const LEARNING_RATES: [f64; 3] = [0.0005, 0.001, 0.005];
pub const NEGATIVES: [usize; 3] = [8, 50, 255];
pub const SLATE_SIZES: [usize; 3] = [100, 300, 500];
pub const ALPHAS: [f64; 3] = [0.01, 0.1, 0.5];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Pretrain,
    Distill,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub stage: Stage,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub kind: ModelKind,
    pub reciprocals: bool,
    pub teachers: Vec<PathBuf>,
    /// Allow hyperparameters outside the search grids.
    pub off_grid: bool,
    pub distill: DistillConfig,
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{value}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got '{value}'"))),
    }
}

fn scope_name(s: FilterScope) -> &'static str {
    match s {
        FilterScope::TrainOnly => "train-only",
        FilterScope::Full => "full",
    }
}

fn tie_name(t: TieRule) -> &'static str {
    match t {
        TieRule::Pessimistic => "pessimistic",
        TieRule::Optimistic => "optimistic",
        TieRule::Mean => "mean",
    }
}

impl RunConfig {
    pub fn new(stage: Stage) -> Self {
        let distill = match stage {
            Stage::Distill => DistillConfig::default(),
            Stage::Pretrain => DistillConfig {
                train: TrainConfig::teacher_defaults(),
                ..DistillConfig::default()
            },
        };
        Self {
            stage,
            data: None,
            out: None,
            kind: ModelKind::RotH,
            reciprocals: true,
            teachers: Vec::new(),
            off_grid: false,
            distill,
        }
    }

    pub fn train(&self) -> &TrainConfig {
        &self.distill.train
    }

    /// Applies a configuration file. Relative paths inside it resolve against
    /// the file's directory.
    pub fn load_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    message: "expected 'key = value'".into(),
                });
            };
            let (key, value) = (key.trim(), value.trim());
            let value = match key {
                "data" | "out" => resolve(base, value),
                "teachers" => value
                    .split(',')
                    .map(|p| resolve(base, p.trim()))
                    .collect::<Vec<_>>()
                    .join(","),
                _ => value.to_string(),
            };
            self.set(key, &value).map_err(|e| match e {
                Error::Config(message) => Error::Parse {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    message,
                },
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.replace('_', "-");
        let d = &mut self.distill;
        let t = &mut d.train;
        match key.as_str() {
            "data" => self.data = (!value.is_empty()).then(|| PathBuf::from(value)),
            "out" => self.out = (!value.is_empty()).then(|| PathBuf::from(value)),
            "kind" => self.kind = value.parse()?,
            "reciprocals" => self.reciprocals = parse_bool(&key, value)?,
            "teachers" => {
                self.teachers = value
                    .split(',')
                    .map(str::trim)
                    .filter(|p| !p.is_empty())
                    .map(PathBuf::from)
                    .collect()
            }
            "off-grid" => self.off_grid = parse_bool(&key, value)?,
            "dim" => t.dim = parse(&key, value)?,
            "lr" => t.lr = parse(&key, value)?,
            "negatives" => t.negatives = parse(&key, value)?,
            "lambda" => t.lambda = parse(&key, value)?,
            "epochs" => t.epochs = parse(&key, value)?,
            "batch-size" => t.batch_size = parse(&key, value)?,
            "seed" => t.seed = parse(&key, value)?,
            "valid-scope" => t.valid_scope = value.parse()?,
            "tie" => t.tie = value.parse()?,
            "bias" => t.options.bias = parse_bool(&key, value)?,
            "curvature" => {
                t.options.curvature = match value {
                    "per-relation" => CurvatureMode::PerRelation,
                    "global" => CurvatureMode::Global,
                    _ => return Err(Error::Config(format!("curvature: expected per-relation or global, got '{value}'"))),
                }
            }
            "entity-storage" => {
                t.options.entity_storage = match value {
                    "tangent" => EntityStorage::Tangent,
                    "ball" => EntityStorage::Ball,
                    _ => return Err(Error::Config(format!("entity-storage: expected tangent or ball, got '{value}'"))),
                }
            }
            "k" => d.k = parse(&key, value)?,
            "alpha" => d.alpha = parse(&key, value)?,
            "gamma0" => d.gamma0 = parse(&key, value)?,
            "gamma-growth" => d.gamma_growth = parse(&key, value)?,
            "candidates" => {
                d.candidates = match value {
                    "topk" | "top-k" => CandidateMode::TopK,
                    "random" => CandidateMode::Random,
                    _ => return Err(Error::Config(format!("candidates: expected top-k or random, got '{value}'"))),
                }
            }
            "contrast-attention" => d.contrast_attention = parse_bool(&key, value)?,
            "relation-scaling" => d.relation_scaling = parse_bool(&key, value)?,
            "self-test" => d.self_test = parse_bool(&key, value)?,
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Rejects hyperparameters outside the search grids unless `off-grid`
    /// is set.
    pub fn check_grid(&self) -> Result<()> {
        if self.off_grid {
            return Ok(());
        }
        let t = self.train();
        let dims: &[usize] = match self.stage {
            Stage::Pretrain => &TEACHER_DIMS,
            Stage::Distill => &JUNIOR_DIMS,
        };
        let mut problems = Vec::new();
        if !dims.contains(&t.dim) {
            problems.push(format!("dim {} not in {dims:?}", t.dim));
        }
        if !LEARNING_RATES.contains(&t.lr) {
            problems.push(format!("lr {} not in {LEARNING_RATES:?}", t.lr));
        }
        if !NEGATIVES.contains(&t.negatives) {
            problems.push(format!("negatives {} not in {NEGATIVES:?}", t.negatives));
        }
        if self.stage == Stage::Distill {
            if !SLATE_SIZES.contains(&self.distill.k) {
                problems.push(format!("k {} not in {SLATE_SIZES:?}", self.distill.k));
            }
            if !ALPHAS.contains(&self.distill.alpha) {
                problems.push(format!("alpha {} not in {ALPHAS:?}", self.distill.alpha));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "{} (set off-grid = true to override)",
                problems.join("; ")
            )))
        }
    }

    /// Renders every field in the file format accepted by [`load_file`].
    pub fn render(&self) -> String {
        let d = &self.distill;
        let t = &d.train;
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        put("data", path(&self.data));
        put("out", path(&self.out));
        put("kind", self.kind.to_string());
        put("reciprocals", self.reciprocals.to_string());
        if self.stage == Stage::Distill {
            let teachers: Vec<String> = self.teachers.iter().map(|p| p.display().to_string()).collect();
            put("teachers", teachers.join(","));
        }
        put("off-grid", self.off_grid.to_string());
        put("dim", t.dim.to_string());
        put("lr", t.lr.to_string());
        put("negatives", t.negatives.to_string());
        put("lambda", t.lambda.to_string());
        put("epochs", t.epochs.to_string());
        put("batch-size", t.batch_size.to_string());
        put("seed", t.seed.to_string());
        put("valid-scope", scope_name(t.valid_scope).into());
        put("tie", tie_name(t.tie).into());
        put("bias", t.options.bias.to_string());
        put(
            "curvature",
            match t.options.curvature {
                CurvatureMode::PerRelation => "per-relation",
                CurvatureMode::Global => "global",
            }
            .into(),
        );
        put(
            "entity-storage",
            match t.options.entity_storage {
                EntityStorage::Tangent => "tangent",
                EntityStorage::Ball => "ball",
            }
            .into(),
        );
        if self.stage == Stage::Distill {
            put("k", d.k.to_string());
            put("alpha", d.alpha.to_string());
            put("gamma0", d.gamma0.to_string());
            put("gamma-growth", d.gamma_growth.to_string());
            put(
                "candidates",
                match d.candidates {
                    CandidateMode::TopK => "top-k",
                    CandidateMode::Random => "random",
                }
                .into(),
            );
            put("contrast-attention", d.contrast_attention.to_string());
            put("relation-scaling", d.relation_scaling.to_string());
            put("self-test", d.self_test.to_string());
        }
        s
    }
}

fn resolve(base: &Path, value: &str) -> String {
    let p = Path::new(value);
    if value.is_empty() || p.is_absolute() {
        value.to_string()
    } else {
        base.join(p).display().to_string()
    }
}
