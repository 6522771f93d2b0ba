// SPDX-License-Identifier: Apache-2.0

//! `lockgraph`: lock BENCH netlists and attack them with GNN link prediction.
//!
//! Exit codes: 0 on success, 1 when inputs fail validation, 2 on usage
//! errors.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand};
use lockgraph::gnn::CheckpointMetric;
use lockgraph::graphprep::{Scenario, DEFAULT_MAX_DRNL, DEFAULT_VALIDATION_FRACTION};
use lockgraph::Scheme;

#[derive(Debug, Parser)]
#[command(
    name = "lockgraph",
    version,
    about = "MUX-based logic locking and oracle-less GNN attacks"
)]
pub struct Cli {
    /// Seed for locking, sampling, training and HD estimation.
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "LOCKGRAPH_THREADS")]
    pub threads: Option<usize>,
    /// Use the full HD sampling counts (100 keys x 10,000 patterns).
    #[arg(long, global = true)]
    pub paper_scale: bool,
    /// Flat `key = value` file of option defaults; flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Lock a BENCH netlist.
    Lock(LockArgs),
    /// Build the attack graph and the GNN dataset of a locked design.
    Prepare(PrepareArgs),
    /// Train a link-prediction model on a prepared dataset.
    Train(TrainArgs),
    /// Recover a key from an attack graph with a trained model.
    Attack(AttackArgs),
    /// Score a recovered key against the true key.
    Eval(EvalArgs),
    /// Run lock, prepare, train, attack and eval in one go.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Clone, Args)]
pub struct LockOpts {
    #[arg(long)]
    pub scheme: Scheme,
    /// Number of MUX key-gates (random MUX locking).
    #[arg(long)]
    pub key_size: Option<usize>,
    /// Number of routing blocks (InterLock).
    #[arg(long, default_value_t = 1)]
    pub keyrbs: usize,
    /// Routing block size N (InterLock).
    #[arg(long, default_value_t = 8)]
    pub size: usize,
}

#[derive(Debug, Args)]
pub struct LockArgs {
    #[command(flatten)]
    pub lock: LockOpts,
    #[arg(long = "in", value_name = "BENCH")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub key_out: PathBuf,
    #[arg(long)]
    pub meta_out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct DatasetOpts {
    #[arg(long, default_value = "self")]
    pub scenario: Scenario,
    /// Attacker-locked design as `locked.bench,design.meta,design.key`.
    #[arg(long, value_name = "BENCH,META,KEY")]
    pub library: Vec<String>,
    /// Hop count of training subgraphs.
    #[arg(long, default_value_t = 2)]
    pub h: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_DRNL)]
    pub max_drnl: usize,
    #[arg(long, default_value_t = DEFAULT_VALIDATION_FRACTION)]
    pub validation_fraction: f64,
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    #[arg(long, value_name = "BENCH")]
    pub locked: PathBuf,
    #[arg(long)]
    pub meta: PathBuf,
    #[command(flatten)]
    pub dataset: DatasetOpts,
    #[arg(long)]
    pub graph_out: PathBuf,
    #[arg(long)]
    pub dataset_out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct TrainOpts {
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 50)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.5)]
    pub dropout: f64,
    /// Validation statistic that selects the kept epoch: loss, accuracy or auc.
    #[arg(long, default_value = "loss")]
    pub checkpoint: CheckpointMetric,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[command(flatten)]
    pub train: TrainOpts,
    #[arg(long)]
    pub model_out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AttackArgs {
    /// Expected scheme; inferred from the graph file when omitted.
    #[arg(long)]
    pub scheme: Option<Scheme>,
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub key_out: PathBuf,
    #[arg(long)]
    pub report: PathBuf,
    /// Write a zero runtime so reports are byte-reproducible.
    #[arg(long)]
    pub omit_timing: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, value_name = "BENCH")]
    pub locked: PathBuf,
    /// Recovered key; not needed with `--identity-check`.
    #[arg(long, required_unless_present = "identity_check")]
    pub key: Option<PathBuf>,
    /// Correct key written at locking time.
    #[arg(long)]
    pub truth: PathBuf,
    /// Lock metadata; names the scheme when no attack report is given.
    #[arg(long)]
    pub meta: Option<PathBuf>,
    /// Original netlist, for Hamming distance.
    #[arg(long, value_name = "BENCH")]
    pub original: Option<PathBuf>,
    /// Attack report JSON, for per-iteration rows (needs `--graph`).
    #[arg(long, requires = "graph")]
    pub attack_report: Option<PathBuf>,
    #[arg(long)]
    pub graph: Option<PathBuf>,
    #[arg(long)]
    pub report_out: Option<PathBuf>,
    #[arg(long)]
    pub csv_out: Option<PathBuf>,
    /// Evaluate the true key and fail unless it restores the original
    /// function exactly.
    #[arg(long, requires = "original")]
    pub identity_check: bool,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[arg(long = "in", value_name = "BENCH")]
    pub input: PathBuf,
    #[command(flatten)]
    pub lock: LockOpts,
    #[command(flatten)]
    pub dataset: DatasetOpts,
    #[command(flatten)]
    pub train: TrainOpts,
    /// Directory for every intermediate and final artifact.
    #[arg(long)]
    pub work_dir: PathBuf,
    /// Write a zero runtime so reports are byte-reproducible.
    #[arg(long)]
    pub omit_timing: bool,
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    let args = match config::merge_config(&Cli::command(), args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(1);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
