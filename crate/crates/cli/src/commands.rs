use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::json;

use mulde::dimbound::{bound_report, min_dimension, BoundParams, TiltSign};
use mulde::distill::{pretrain_teacher, train_mulde, EpochLog, TeacherEnsemble};
use mulde::eval::{evaluate, write_rank_dump, Metrics, TieRule};
use mulde::kgdata::{add_reciprocals, build_filter, Dataset, FilterScope, Triple};
use mulde::models::{load_checkpoint, save_checkpoint, Manifest, ModelState};
use mulde::{Error, Result};

use crate::config::{RunConfig, Stage};
use crate::{DimboundArgs, EvalArgs, RunArgs};

const RUN_CONFIG: &str = "run-config";
const LOG: &str = "log.jsonl";
const METRICS: &str = "metrics.json";
const CHECKPOINT: &str = "checkpoint";

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn build_config(stage: Stage, args: &RunArgs, overrides: &[(&str, String)]) -> Result<RunConfig> {
    let mut cfg = RunConfig::new(stage);
    if let Some(path) = &args.config {
        cfg.load_file(path)?;
    }
    for (key, value) in overrides {
        cfg.set(key, value)?;
    }
    cfg.check_grid()?;
    if cfg.data.is_none() {
        return Err(Error::Config("no dataset given (--data or 'data = ...')".into()));
    }
    if cfg.out.is_none() {
        return Err(Error::Config("no output directory given (--out or 'out = ...')".into()));
    }
    Ok(cfg)
}

fn load_dataset(dir: &Path, reciprocals: bool) -> Result<Dataset> {
    for split in ["train.txt", "valid.txt", "test.txt"] {
        let path = dir.join(split);
        if !path.is_file() {
            return Err(io_err(&path, std::io::ErrorKind::NotFound.into()));
        }
    }
    let ds = Dataset::load_dir(dir)?;
    if reciprocals {
        add_reciprocals(ds)
    } else {
        Ok(ds)
    }
}

fn prepare_out(cfg: &RunConfig) -> Result<PathBuf> {
    let out = cfg.out.clone().expect("checked in build_config");
    fs::create_dir_all(&out).map_err(|e| io_err(&out, e))?;
    let snapshot = format!(
        "# mulde {} run snapshot; pass back with --config to repeat\n{}",
        env!("CARGO_PKG_VERSION"),
        cfg.render()
    );
    let path = out.join(RUN_CONFIG);
    fs::write(&path, snapshot).map_err(|e| io_err(&path, e))?;
    Ok(out)
}

fn write_log(out: &Path, log: &[EpochLog]) -> Result<()> {
    let path = out.join(LOG);
    let mut file = fs::File::create(&path).map_err(|e| io_err(&path, e))?;
    for entry in log {
        let line = serde_json::to_string(entry).expect("log entries serialize");
        writeln!(file, "{line}").map_err(|e| io_err(&path, e))?;
    }
    Ok(())
}

/// Scores the final model on valid and test, writes `metrics.json` and
/// echoes it on stdout.
fn report(out: &Path, model: &ModelState, ds: &Dataset, tie: TieRule) -> Result<()> {
    let filter = build_filter(ds, FilterScope::Full);
    let split_metrics = |split: &[Triple]| -> Result<serde_json::Value> {
        if split.is_empty() {
            return Ok(serde_json::Value::Null);
        }
        let m = evaluate(model, split, &filter, tie)?.summary();
        Ok(serde_json::to_value(m).expect("metrics serialize"))
    };
    let value = json!({ "valid": split_metrics(&ds.valid)?, "test": split_metrics(&ds.test)? });
    let text = serde_json::to_string_pretty(&value).expect("json");
    let path = out.join(METRICS);
    fs::write(&path, &text).map_err(|e| io_err(&path, e))?;
    println!("{text}");
    Ok(())
}

pub fn pretrain(args: &RunArgs, overrides: &[(&str, String)]) -> Result<()> {
    let cfg = build_config(Stage::Pretrain, args, overrides)?;
    let ds = load_dataset(cfg.data.as_ref().expect("checked"), cfg.reciprocals)?;
    let out = prepare_out(&cfg)?;
    let outcome = pretrain_teacher(cfg.kind, &ds, cfg.train())?;
    write_log(&out, &outcome.log)?;
    ds.vocab.write_tsv(&out)?;
    save_checkpoint(&out.join(CHECKPOINT), &outcome.model, &ds.vocab.content_hash(), &[])?;
    report(&out, &outcome.model, &ds, cfg.train().tie)
}

/// Loads checkpoints whose vocabulary hash matches `ds`.
fn load_matching(paths: &[PathBuf], ds: &Dataset) -> Result<Vec<ModelState>> {
    let expected = ds.vocab.content_hash();
    let mut models = Vec::with_capacity(paths.len());
    for path in paths {
        let manifest = Manifest::read(path)?;
        if manifest.vocab_hash != expected {
            return Err(Error::Vocab(format!(
                "{} was trained on vocabulary {} but the dataset has vocabulary {}",
                path.display(),
                manifest.vocab_hash,
                expected
            )));
        }
        models.push(load_checkpoint(path)?.0);
    }
    Ok(models)
}

pub fn distill(args: &RunArgs, overrides: &[(&str, String)]) -> Result<()> {
    let cfg = build_config(Stage::Distill, args, overrides)?;
    if cfg.teachers.is_empty() {
        return Err(Error::Config("at least one teacher checkpoint is required".into()));
    }
    let ds = load_dataset(cfg.data.as_ref().expect("checked"), cfg.reciprocals)?;
    let ensemble = TeacherEnsemble::new(load_matching(&cfg.teachers, &ds)?)?;
    let out = prepare_out(&cfg)?;
    let outcome = train_mulde(&cfg.distill, cfg.kind, &ensemble, &ds)?;
    write_log(&out, &outcome.log)?;
    ds.vocab.write_tsv(&out)?;
    let senior = &outcome.senior;
    save_checkpoint(
        &out.join(CHECKPOINT),
        &outcome.junior,
        &ds.vocab.content_hash(),
        &[("w_rel", senior.num_relations, senior.num_teachers, &senior.w_rel)],
    )?;
    report(&out, &outcome.junior, &ds, cfg.train().tie)
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    let ds = load_dataset(&args.data, !args.no_reciprocals)?;
    let scope: FilterScope = args.filter.parse()?;
    let tie: TieRule = args.tie.parse()?;
    let split = match args.split.as_str() {
        "valid" => &ds.valid,
        "test" => &ds.test,
        "train" => &ds.train,
        other => return Err(Error::Config(format!("unknown split '{other}'"))),
    };
    let filter = build_filter(&ds, scope);
    let models = load_matching(&args.checkpoints, &ds)?;
    let metrics: Metrics = if models.len() == 1 {
        evaluate(&models[0], split, &filter, tie)?
    } else {
        evaluate(&TeacherEnsemble::new(models)?, split, &filter, tie)?
    };
    if let Some(path) = &args.ranks {
        write_rank_dump(path, split, &metrics.ranks, &ds.vocab)?;
    }
    println!(
        "{}",
        serde_json::to_string_pretty(&metrics.summary()).expect("metrics serialize")
    );
    Ok(())
}

pub fn dimbound(args: &DimboundArgs) -> Result<()> {
    let (ne, nr) = match (args.num_entities, args.num_relations, &args.data) {
        (Some(ne), Some(nr), _) => (ne, nr),
        (_, _, Some(dir)) => {
            let ds = load_dataset(dir, false)?;
            (ds.num_entities() as f64, ds.vocab.num_base_relations() as f64)
        }
        _ => return Err(Error::Config("give --Ne and --Nr, or --data".into())),
    };
    if !(ne >= 1.0 && nr >= 1.0) {
        return Err(Error::Config(format!("counts must be at least 1, got Ne={ne} Nr={nr}")));
    }
    let published = min_dimension(ne, nr, &BoundParams::published());
    let as_written = bound_report(ne, nr, args.nodes, TiltSign::AsWritten)?;
    let negated = bound_report(ne, nr, args.nodes, TiltSign::Negated)?;
    if args.json {
        let value = json!({
            "num_entities": ne,
            "num_relations": nr,
            "log_pair_count": as_written.log_n,
            "bound_published_constant": published,
            "as_written": as_written,
            "negated": negated,
        });
        println!("{}", serde_json::to_string_pretty(&value).expect("json"));
        return Ok(());
    }
    println!("entities        {ne}");
    println!("relations       {nr}");
    println!("ln(Ne^2 Nr)     {:.4}", as_written.log_n);
    println!("bound (published ε) {published:.2}");
    println!();
    println!("{:<11} {:>10} {:>10} {:>10}", "tilt sign", "ε fitted", "R²", "bound");
    for (name, r) in [("as-written", &as_written), ("negated", &negated)] {
        println!(
            "{name:<11} {:>10.4} {:>10.6} {:>10.2}",
            r.epsilon_hat, r.r_squared, r.bound_fitted
        );
    }
    Ok(())
}
