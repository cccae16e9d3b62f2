use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;

use mulde::Error;

#[derive(Parser, Debug)]
#[command(name = "mulde", version, about = "Train, distill and evaluate knowledge-graph embeddings")]
struct Cli {
    /// Worker threads (default: physical cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Pre-train one teacher with hard labels.
    Pretrain(RunArgs),
    /// Distill teacher checkpoints into a low-dimensional student.
    Distill(RunArgs),
    /// Evaluate one checkpoint, or several as an additive ensemble.
    Eval(EvalArgs),
    /// Estimate the minimum embedding dimension for a graph size.
    Dimbound(DimboundArgs),
}

/// Flags mirror the configuration keys and override the `--config` file.
#[derive(Args, Debug, Default)]
pub struct RunArgs {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory holding train.txt, valid.txt and test.txt.
    #[arg(long)]
    pub data: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<String>,
    #[arg(long)]
    pub kind: Option<String>,
    /// Teacher checkpoint directory (repeatable).
    #[arg(long = "teacher")]
    pub teachers: Vec<String>,
    #[arg(long)]
    pub reciprocals: Option<String>,
    /// Accept hyperparameters outside the search grids.
    #[arg(long)]
    pub off_grid: bool,
    #[arg(long)]
    pub dim: Option<String>,
    #[arg(long)]
    pub lr: Option<String>,
    #[arg(long)]
    pub negatives: Option<String>,
    #[arg(long)]
    pub lambda: Option<String>,
    #[arg(long)]
    pub epochs: Option<String>,
    #[arg(long)]
    pub batch_size: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    /// train-only or full.
    #[arg(long)]
    pub valid_scope: Option<String>,
    /// pessimistic, optimistic or mean.
    #[arg(long)]
    pub tie: Option<String>,
    #[arg(long)]
    pub bias: Option<String>,
    /// per-relation or global.
    #[arg(long)]
    pub curvature: Option<String>,
    /// tangent or ball.
    #[arg(long)]
    pub entity_storage: Option<String>,
    #[arg(long)]
    pub k: Option<String>,
    #[arg(long)]
    pub alpha: Option<String>,
    #[arg(long)]
    pub gamma0: Option<String>,
    #[arg(long)]
    pub gamma_growth: Option<String>,
    /// top-k or random.
    #[arg(long)]
    pub candidates: Option<String>,
    #[arg(long)]
    pub contrast_attention: Option<String>,
    #[arg(long)]
    pub relation_scaling: Option<String>,
    #[arg(long)]
    pub self_test: Option<String>,
}

impl RunArgs {
    fn overrides(&self) -> Vec<(&'static str, String)> {
        let fields: [(&'static str, &Option<String>); 24] = [
            ("data", &self.data),
            ("out", &self.out),
            ("kind", &self.kind),
            ("reciprocals", &self.reciprocals),
            ("dim", &self.dim),
            ("lr", &self.lr),
            ("negatives", &self.negatives),
            ("lambda", &self.lambda),
            ("epochs", &self.epochs),
            ("batch-size", &self.batch_size),
            ("seed", &self.seed),
            ("valid-scope", &self.valid_scope),
            ("tie", &self.tie),
            ("bias", &self.bias),
            ("curvature", &self.curvature),
            ("entity-storage", &self.entity_storage),
            ("k", &self.k),
            ("alpha", &self.alpha),
            ("gamma0", &self.gamma0),
            ("gamma-growth", &self.gamma_growth),
            ("candidates", &self.candidates),
            ("contrast-attention", &self.contrast_attention),
            ("relation-scaling", &self.relation_scaling),
            ("self-test", &self.self_test),
        ];
        let mut out: Vec<(&'static str, String)> = fields
            .into_iter()
            .filter_map(|(k, v)| v.clone().map(|v| (k, v)))
            .collect();
        if !self.teachers.is_empty() {
            out.push(("teachers", self.teachers.join(",")));
        }
        if self.off_grid {
            out.push(("off-grid", "true".into()));
        }
        out
    }
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Dataset directory.
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint directory (repeat for an ensemble).
    #[arg(long = "checkpoint", required = true)]
    pub checkpoints: Vec<PathBuf>,
    /// valid or test.
    #[arg(long, default_value = "test")]
    pub split: String,
    /// train-only or full.
    #[arg(long, default_value = "full")]
    pub filter: String,
    #[arg(long, default_value = "pessimistic")]
    pub tie: String,
    /// Evaluate without reciprocal relations (tail prediction only).
    #[arg(long)]
    pub no_reciprocals: bool,
    /// Write per-query ranks to this TSV file.
    #[arg(long)]
    pub ranks: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DimboundArgs {
    /// Entity count.
    #[arg(long = "Ne", alias = "ne", requires = "num_relations", conflicts_with = "data")]
    pub num_entities: Option<f64>,
    /// Relation count.
    #[arg(long = "Nr", alias = "nr", requires = "num_entities")]
    pub num_relations: Option<f64>,
    /// Read the counts from a dataset directory instead.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Quadrature nodes.
    #[arg(long, default_value_t = mulde::dimbound::DEFAULT_NODES)]
    pub nodes: usize,
    /// Print JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) => 2,
        Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 2,
        Error::Numerical(_) | Error::Quadrature { .. } => 4,
        Error::Parse { .. }
        | Error::Vocab(_)
        | Error::Data(_)
        | Error::Integrity(_)
        | Error::Version { .. }
        | Error::Io { .. } => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli.threads.unwrap_or_else(num_cpus::get_physical).max(1);
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
        eprintln!("error: cannot start thread pool: {e}");
        return ExitCode::from(2);
    }
    let result = match &cli.command {
        Command::Pretrain(args) => commands::pretrain(args, &args.overrides()),
        Command::Distill(args) => commands::distill(args, &args.overrides()),
        Command::Eval(args) => commands::eval(args),
        Command::Dimbound(args) => commands::dimbound(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
