//! The `dass` command-line driver.
//!
//! Verbs: `gen-data`, `train`, `eval`, `experiment` and `infer`. Each verb
//! writes under its own timestamped run directory with a `manifest.json`.
//! Failures exit with a code identifying their kind: 2 for configuration
//! errors, 3 for data and file errors, 4 for numerical failures.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub mod commands;
pub mod plot;
pub mod run;

pub use commands::experiment::{Cell, ExperimentOutcome};
pub use commands::train::TrainOutcome;

pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "dass", version, about = "Detection-aware point cloud semantic segmentation")]
pub struct Cli {
    /// Output root; defaults to $DASS_OUTPUT_ROOT, then ./runs.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus and print its class frequencies.
    GenData(GenDataArgs),
    /// Train a model (optionally resuming from a checkpoint).
    Train(TrainArgs),
    /// Evaluate a checkpoint on the test split.
    Eval(EvalArgs),
    /// Run the ablation matrix over several seeds and aggregate medians.
    Experiment(ExperimentArgs),
    /// Label a scene or a raw Velodyne scan and propose boxes.
    Infer(InferArgs),
}

/// Overrides shared by the verbs that build a configuration.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// TOML run configuration; omitted sections take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Class table: `synthetic` or `semantickitti`.
    #[arg(long)]
    pub classes: Option<String>,
    /// Fixed number of points per scene for training and evaluation.
    #[arg(long)]
    pub points_per_scene: Option<usize>,
    /// Width of the semantic feature fusion summary.
    #[arg(long)]
    pub sff_dim: Option<usize>,
    /// Training seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of training epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct GenDataArgs {
    #[command(flatten)]
    pub common: ConfigArgs,
    /// Write the corpus here instead of `<run dir>/corpus`.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: ConfigArgs,
    /// Train without the auxiliary detection task (no proposal head).
    #[arg(long)]
    pub no_aux: bool,
    /// Disable semantic feature fusion in the proposal head.
    #[arg(long)]
    pub no_sff: bool,
    /// Read the corpus from a `gen-data` directory instead of generating it.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Stop after this many epochs in this invocation; continue later with
    /// `--resume`.
    #[arg(long)]
    pub stop_after: Option<usize>,
    /// Continue the run that wrote this checkpoint, in its directory.
    #[arg(
        long,
        conflicts_with_all = ["no_aux", "no_sff", "corpus", "config", "classes", "points_per_scene", "sff_dim", "seed", "epochs"]
    )]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Checkpoint written by `train`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Evaluation settings; defaults to those stored with the checkpoint.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Evaluate on this corpus instead of the one the checkpoint was trained on.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Points sampled per scene for evaluation.
    #[arg(long)]
    pub points_per_scene: Option<usize>,
    /// Evaluate the model with its proposal head removed and check that its
    /// segmentation output equals the full model's.
    #[arg(long)]
    pub detach: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ExperimentArgs {
    #[command(flatten)]
    pub common: ConfigArgs,
    /// Cells to run: any of mtl_sff, mtl_nosff, baseline.
    #[arg(long, value_delimiter = ',', default_value = "mtl_sff,mtl_nosff,baseline")]
    pub cells: Vec<Cell>,
    /// Training seeds, one run per cell and seed.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
    pub seeds: Vec<u64>,
    /// Read the corpus from a `gen-data` directory instead of generating it.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct InferArgs {
    /// Checkpoint written by `train`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// A `.dscn` scene or a KITTI Velodyne `.bin` scan.
    pub input: PathBuf,
}

/// Exit code for an error chain: the first library error found decides.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    use dass::Error as E;
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Config(_) => EXIT_CONFIG,
                E::Numerical(_) => EXIT_NUMERICAL,
                E::OutOfScope { .. } | E::BinIndex { .. } => EXIT_NUMERICAL,
                E::ByteFormat { .. }
                | E::LineFormat { .. }
                | E::Generation(_)
                | E::Data(_)
                | E::Checkpoint(_)
                | E::Io { .. } => EXIT_DATA,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return EXIT_DATA;
        }
    }
    EXIT_FAILURE
}

/// Runs one parsed command line.
pub fn run(cli: Cli) -> anyhow::Result<()> {
    let root = run::output_root(cli.out.as_deref());
    match cli.command {
        Command::GenData(a) => commands::gen_data::cmd_gen_data(&a, &root).map(|_| ()),
        Command::Train(a) => commands::train::cmd_train(&a, &root).map(|_| ()),
        Command::Eval(a) => commands::eval::cmd_eval(&a, &root).map(|_| ()),
        Command::Experiment(a) => commands::experiment::cmd_experiment(&a, &root).map(|_| ()),
        Command::Infer(a) => commands::infer::cmd_infer(&a, &root).map(|_| ()),
    }
}
