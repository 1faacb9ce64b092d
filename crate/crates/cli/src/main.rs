//! `kgwalk` command-line driver.

mod commands;
mod ordered;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "kgwalk", version, about = "Knowledge-graph exploration toolkit")]
#[command(arg_required_else_help = true)]
pub struct Cli {
    /// Flat `key = value` config file; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Do not add inverse edges when building the graph.
    #[arg(long, global = true)]
    pub no_augment: bool,
    /// Fail on questions whose seeds are missing from the graph instead of
    /// dropping them.
    #[arg(long, global = true)]
    pub strict_seeds: bool,
    /// Worker threads for per-question work.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load a TSV graph and report its size (and corpus coverage).
    BuildKg(BuildKgArgs),
    /// Mine gold paths and write the SFT dataset.
    Mine(MineArgs),
    /// Render SFT records as prompt/completion pairs.
    ExportSft(ExportSftArgs),
    /// Run exploration episodes with a policy.
    Explore(ExploreArgs),
    /// Score exploration traces against mined gold.
    Score(ScoreArgs),
    /// Answer metrics (and optional k-hop retrieval) for predictions.
    Eval(EvalArgs),
    /// Seeded random split of a question file.
    Split(SplitArgs),
}

#[derive(Debug, Args)]
pub struct BuildKgArgs {
    #[arg(long)]
    pub kg: Option<PathBuf>,
    #[arg(long)]
    pub questions: Option<PathBuf>,
    /// Stats JSON destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Search depth for the observed max-hop statistic.
    #[arg(long)]
    pub lmax: Option<usize>,
}

#[derive(Debug, Args)]
pub struct MineArgs {
    #[arg(long)]
    pub kg: Option<PathBuf>,
    #[arg(long)]
    pub questions: Option<PathBuf>,
    #[arg(long)]
    pub lmax: Option<usize>,
    #[arg(long)]
    pub neighbor_cap: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportSftArgs {
    /// SFT dataset written by `mine`.
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExploreArgs {
    #[arg(long)]
    pub kg: Option<PathBuf>,
    #[arg(long)]
    pub questions: Option<PathBuf>,
    /// oracle | null | random[:k] | external:<url>
    #[arg(long)]
    pub policy: Option<String>,
    /// Gold SFT file for the oracle; mined on the fly when absent.
    #[arg(long)]
    pub gold: Option<PathBuf>,
    #[arg(long)]
    pub lmax: Option<usize>,
    #[arg(long)]
    pub neighbor_cap: Option<usize>,
    #[arg(long)]
    pub dmax: Option<usize>,
    #[arg(long)]
    pub batch_budget: Option<usize>,
    /// step_synchronous | depth_first
    #[arg(long)]
    pub mode: Option<String>,
    /// Maximum paths kept per step; 0 disables the cap.
    #[arg(long, default_value_t = kgwalk::runtime::DEFAULT_FANOUT_CAP)]
    pub fanout_cap: usize,
    #[arg(long)]
    pub forbid_revisit: bool,
    /// Episodes per question (sample indices 0..n).
    #[arg(long, default_value_t = 1)]
    pub samples: usize,
    /// Seed for the random policy.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Predictions JSONL.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Step trace JSONL.
    #[arg(long)]
    pub trace_out: Option<PathBuf>,
    /// Per-request timeout for external policies, in seconds.
    #[arg(long, default_value_t = 60.0)]
    pub policy_timeout: f64,
    /// Retries after a transport failure for external policies.
    #[arg(long, default_value_t = 2)]
    pub policy_retries: usize,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long)]
    pub kg: Option<PathBuf>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub format_value: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub questions: Option<PathBuf>,
    #[arg(long)]
    pub kg: Option<PathBuf>,
    /// Also report k-hop neighborhood retrieval.
    #[arg(long)]
    pub khop: Option<usize>,
    /// Report JSON destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub questions: Option<PathBuf>,
    /// Share of questions in the first (SFT) part.
    #[arg(long, default_value_t = 0.6)]
    pub ratio: f64,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub sft_out: PathBuf,
    #[arg(long)]
    pub rl_out: PathBuf,
}

/// Missing or inconsistent arguments; reported with exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Config keys set by flags, for [`kgwalk::config::load_config`].
#[derive(Debug, Default)]
pub struct Overrides(pub BTreeMap<String, String>);

impl Overrides {
    pub fn set<V: ToString>(&mut self, key: &str, value: Option<V>) -> &mut Self {
        if let Some(v) = value {
            self.0.insert(key.to_string(), v.to_string());
        }
        self
    }

    pub fn path(&mut self, key: &str, value: &Option<PathBuf>) -> &mut Self {
        self.set(key, value.as_ref().map(|p| p.display().to_string()))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp_millis()
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<UsageError>().is_some() => {
            eprintln!("error: {e}");
            eprintln!("run `kgwalk help` for usage");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
