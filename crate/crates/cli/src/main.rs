//! `prefeval`: decide pairs, run the annotation protocol, simulate campaigns
//! and evaluate automated verdicts from the command line.
//!
//! Exit codes: 0 on success, 2 on invalid input or an unreachable service,
//! 3 when a sampler did not converge (results are still written).

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use prefeval_core::decision::DecisionConfig;
use prefeval_core::posterior::SamplerConfig;

#[derive(Debug, Parser)]
#[command(name = "prefeval", version, about = "Bayesian pairwise preference evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Decide one system pair from human and metric ratings.
    Decide(DecideArgs),
    /// Spend a human-annotation budget across all pairs of a system list.
    Protocol(ProtocolArgs),
    /// Compare automated verdicts with a human reference.
    Analyze(AnalyzeArgs),
    /// Generate a synthetic rating campaign.
    Simulate(SimulateArgs),
    /// Run the protocol at several budgets and report the KL divergence.
    Curve(CurveArgs),
}

/// Significance level and sampler settings shared by every command.
#[derive(Debug, Clone, Args)]
struct DecisionArgs {
    /// Significance level.
    #[arg(long, default_value_t = 0.05)]
    gamma: f64,
    /// Base random seed.
    #[arg(long, env = "PREFEVAL_SEED", default_value_t = 0)]
    seed: u64,
    /// Independent sampler chains.
    #[arg(long, default_value_t = 5)]
    chains: usize,
    /// Warm-up iterations per chain.
    #[arg(long, default_value_t = 2000)]
    warmup: usize,
    /// Kept draws per chain.
    #[arg(long, default_value_t = 10_000)]
    draws: usize,
}

impl DecisionArgs {
    fn config(&self) -> DecisionConfig {
        DecisionConfig {
            gamma: self.gamma,
            sampler: SamplerConfig {
                chains: self.chains,
                warmup_per_chain: self.warmup,
                draws_per_chain: self.draws,
                seed: self.seed,
            },
        }
    }
}

#[derive(Debug, Clone, Args)]
struct InputArgs {
    /// Use only ratings of this metric when a file holds several.
    #[arg(long)]
    metric_name: Option<String>,
    /// Ignore unknown keys in rating files instead of rejecting them.
    #[arg(long)]
    lenient: bool,
}

#[derive(Debug, Args)]
struct DecideArgs {
    /// Human ratings (JSON Lines); metric ratings in the same file are used too.
    #[arg(long)]
    human: PathBuf,
    /// Metric ratings (JSON Lines).
    #[arg(long)]
    metric: Option<PathBuf>,
    /// Pair to decide as FIRST:SECOND; required when the files cover several pairs.
    #[arg(long)]
    pair: Option<String>,
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    decision: DecisionArgs,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["annotation_pool", "oracle_p", "live", "serve"])))]
struct ProtocolArgs {
    /// Comma-separated system ids.
    #[arg(long, value_delimiter = ',', required = true)]
    systems: Vec<String>,
    /// Metric ratings of every pair (JSON Lines).
    #[arg(long)]
    metric_ratings: Option<PathBuf>,
    /// Replay recorded human ratings (JSON Lines) in file order.
    #[arg(long)]
    annotation_pool: Option<PathBuf>,
    /// Use at most this many pool ratings per pair.
    #[arg(long)]
    pool_limit: Option<usize>,
    /// Simulate annotators: `W,D,L` for every pair, or `A:B=W,D,L;C:D=W,D,L`.
    #[arg(long)]
    oracle_p: Option<String>,
    /// Ratings the simulated annotators can give per pair.
    #[arg(long)]
    oracle_capacity: Option<usize>,
    /// Collect ratings from a running annotation service at this URL.
    #[arg(long)]
    live: Option<String>,
    /// Start an annotation service on this address and collect from it.
    #[arg(long)]
    serve: Option<String>,
    /// Sample texts shown to annotators (JSON Lines), for --serve.
    #[arg(long, requires = "serve")]
    catalog: Option<PathBuf>,
    /// Built annotation UI to host, for --serve.
    #[arg(long, requires = "serve")]
    ui_dir: Option<PathBuf>,
    /// Seconds to wait for a round's live ratings before checkpointing.
    #[arg(long, default_value_t = 3600)]
    timeout: u64,
    /// Save the loop state here after every round.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Continue from a saved loop state.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Human annotations to spend in total.
    #[arg(long)]
    budget: u64,
    /// Annotations requested per undecided pair per round.
    #[arg(long, default_value_t = 10)]
    batch: usize,
    /// Where to write the result (JSON).
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    decision: DecisionArgs,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("automated").required(true).args(["result", "verdicts", "naive"])))]
struct AnalyzeArgs {
    /// Full human rating pool (JSON Lines); the reference.
    #[arg(long)]
    human: PathBuf,
    /// Comma-separated system ids; defaults to every system in the human file.
    #[arg(long, value_delimiter = ',')]
    systems: Option<Vec<String>>,
    /// Protocol result to evaluate.
    #[arg(long)]
    result: Option<PathBuf>,
    /// Verdicts to evaluate, as a JSON object from pair key to outcome.
    #[arg(long)]
    verdicts: Option<PathBuf>,
    /// Metric ratings to evaluate with the naive sign test.
    #[arg(long)]
    naive: Option<PathBuf>,
    /// Where to write the report (JSON).
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    decision: DecisionArgs,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Number of systems on the quality ladder.
    #[arg(long, default_value_t = 11)]
    systems: usize,
    /// Log-strength difference between neighbouring systems.
    #[arg(long, default_value_t = 0.2)]
    step: f64,
    /// Weight of draws relative to wins and losses.
    #[arg(long, default_value_t = 0.6)]
    tie: f64,
    /// Metric-rated samples per pair.
    #[arg(long, default_value_t = 11_000)]
    samples: usize,
    /// Human-rated samples per pair; the remaining metric labels follow the
    /// human win rates. Defaults to every sample, with labels from the true rates.
    #[arg(long)]
    human_per_pair: Option<usize>,
    /// Metric confusion: `ideal`, `identity` or a JSON file with a mixture matrix.
    #[arg(long, default_value = "ideal")]
    mu: String,
    /// Name given to the simulated metric.
    #[arg(long, default_value = "simulated")]
    metric_name: String,
    #[arg(long, env = "PREFEVAL_SEED", default_value_t = 0)]
    seed: u64,
    /// Directory for human.jsonl, metric.jsonl, manifest.json and campaign.json.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct CurveArgs {
    /// Comma-separated system ids.
    #[arg(long, value_delimiter = ',', required = true)]
    systems: Vec<String>,
    #[arg(long)]
    metric_ratings: Option<PathBuf>,
    /// Full human pool (JSON Lines).
    #[arg(long)]
    annotation_pool: PathBuf,
    #[arg(long)]
    pool_limit: Option<usize>,
    /// Comma-separated budgets; `25%` means a quarter of the pool.
    #[arg(long, value_delimiter = ',', default_value = "0,25%,50%,100%")]
    budgets: Vec<String>,
    #[arg(long, default_value_t = 10)]
    batch: usize,
    /// Where to write the curve (JSON).
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    decision: DecisionArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Decide(a) => commands::decide(&a),
        Command::Protocol(a) => commands::protocol(&a),
        Command::Analyze(a) => commands::analyze(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Curve(a) => commands::curve(&a),
    };
    match outcome {
        Ok(commands::Status::Done) => ExitCode::SUCCESS,
        Ok(commands::Status::NotConverged) => {
            eprintln!("warning: the sampler did not converge; results were written but may be unreliable");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
