//! `cgpa`: synthetic data, causal discovery, model training, explanation
//! and the prediction service from one command line.

mod commands;
mod input;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use run::Run;

#[derive(Debug, Parser)]
#[command(name = "cgpa", version, about = "Student CGPA analysis: data, causal graphs, predictors, explanations")]
struct Cli {
    /// Output directory; files use fixed names (graph.json, graph.dot,
    /// metrics.json, manifest.json, ...).
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Seed for every random choice in the run. `generate` falls back to
    /// the spec's own seed when omitted; other commands use 0.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel inner loops (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case", tag = "command")]
enum Command {
    /// Sample a synthetic survey from a structural equation model.
    Generate(GenerateArgs),
    /// Data-quality table, descriptive statistics, correlations and crosstabs.
    Inspect(InspectArgs),
    /// Learn a causal graph from data.
    Discover(DiscoverArgs),
    /// Test the independences implied by a hypothesized DAG.
    EvaluateGraph(EvaluateGraphArgs),
    /// Fit one model and write its artifact.
    Train(TrainArgs),
    /// Train a model suite on one split and tabulate the comparison.
    Evaluate(EvaluateArgs),
    /// Explain a model's prediction for one record.
    Explain(ExplainArgs),
    /// Run the HTTP prediction service.
    Serve(ServeArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct GenerateArgs {
    /// SEM spec JSON; the built-in hypothesis-graph SEM when omitted.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct InspectArgs {
    /// Survey CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Crosstab as ROW:COL (repeatable).
    #[arg(long = "crosstab", value_name = "ROW:COL", default_values_t = ["HS:SH".to_string(), "G:AC".to_string()])]
    pub crosstabs: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Algo {
    Pc,
    Ges,
    Grasp,
    Lingam,
}

#[derive(Debug, Args, Serialize)]
pub struct DiscoverArgs {
    /// Numeric CSV (e.g. latent.csv from `generate`) or survey CSV.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub algo: Algo,
    /// CI test level for PC.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Largest conditioning set PC tries.
    #[arg(long, default_value_t = cgpa_core::causal::DEFAULT_MAX_COND_SIZE)]
    pub max_cond: usize,
    /// Edge-count penalty for GRaSP.
    #[arg(long, default_value_t = 0.0)]
    pub lambda: f64,
    /// LiNGAM pruning threshold on |weight|.
    #[arg(long, default_value_t = cgpa_core::causal::DEFAULT_PRUNE_THRESHOLD)]
    pub prune: f64,
    /// Ground-truth graph JSON to compare against.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Restrict to these columns (comma-separated).
    #[arg(long, value_delimiter = ',')]
    pub columns: Vec<String>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateGraphArgs {
    /// Hypothesized DAG as graph JSON.
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 200)]
    pub permutations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskArg {
    Regression,
    Classification,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    /// Labelled survey CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// ols, ridge, lasso, elastic_net, tree, forest, logistic, ridge_cls, knn.
    #[arg(long, default_value = "ridge")]
    pub model: String,
    /// Needed only for tree and forest, which do both.
    #[arg(long, value_enum)]
    pub task: Option<TaskArg>,
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
    #[arg(long, default_value_t = 5)]
    pub cv_folds: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    /// Labelled survey CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Suite as name or name:task entries (comma-separated); the standard
    /// regression and classification suite when omitted.
    #[arg(long, value_delimiter = ',')]
    pub models: Vec<String>,
    /// External predictions as NAME:TASK:FILE with a row,prediction CSV
    /// indexed by data row (repeatable).
    #[arg(long = "external", value_name = "NAME:TASK:FILE")]
    pub externals: Vec<String>,
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
    #[arg(long, default_value_t = 5)]
    pub cv_folds: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplainMethod {
    Shapley,
    Lime,
    Global,
    All,
}

#[derive(Debug, Args, Serialize)]
pub struct ExplainArgs {
    /// Model artifact JSON.
    #[arg(long)]
    pub model: PathBuf,
    /// Record as a JSON object keyed by acronym.
    #[arg(long, conflicts_with = "row")]
    pub record: Option<PathBuf>,
    /// Survey CSV, for `--row` and global importance.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Zero-based row of `--data` to explain.
    #[arg(long, requires = "data")]
    pub row: Option<usize>,
    #[arg(long, value_enum, default_value_t = ExplainMethod::Shapley)]
    pub method: ExplainMethod,
    /// Permutations for sampled Shapley values (non-linear models).
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    /// Neighbourhood size for LIME.
    #[arg(long, default_value_t = 500)]
    pub perturbations: usize,
    #[arg(long, default_value_t = 3)]
    pub recommendations: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct ServeArgs {
    /// Service TOML; `CGPA_*` environment variables override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

fn one_line(e: &anyhow::Error) -> String {
    format!("{e:#}").replace(['\n', '\r'], " ")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(j) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build_global() {
            eprintln!("{}", serde_json::json!({"status": "error", "command": "init", "message": e.to_string()}));
            return ExitCode::from(2);
        }
    }
    let name = match &cli.command {
        Command::Generate(_) => "generate",
        Command::Inspect(_) => "inspect",
        Command::Discover(_) => "discover",
        Command::EvaluateGraph(_) => "evaluate-graph",
        Command::Train(_) => "train",
        Command::Evaluate(_) => "evaluate",
        Command::Explain(_) => "explain",
        Command::Serve(_) => "serve",
    };
    let seed = match (&cli.command, cli.seed) {
        (_, Some(s)) => Some(s),
        (Command::Generate(_), None) => None,
        _ => Some(0),
    };
    let config = serde_json::to_value(&cli.command).expect("arguments serialize");
    let mut run = match Run::start(&cli.out, name, config, seed.unwrap_or(0), cli.jobs) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("{}", serde_json::json!({"status": "error", "command": name, "message": one_line(&e)}));
            return ExitCode::from(1);
        }
    };
    let result = match &cli.command {
        Command::Generate(a) => commands::generate(&mut run, a, seed),
        Command::Inspect(a) => commands::inspect(&mut run, a),
        Command::Discover(a) => commands::discover(&mut run, a, seed.unwrap_or(0)),
        Command::EvaluateGraph(a) => commands::evaluate_graph(&mut run, a, seed.unwrap_or(0)),
        Command::Train(a) => commands::train(&mut run, a, seed.unwrap_or(0)),
        Command::Evaluate(a) => commands::evaluate(&mut run, a, seed.unwrap_or(0)),
        Command::Explain(a) => commands::explain(&mut run, a, seed.unwrap_or(0)),
        Command::Serve(a) => commands::serve(&mut run, a),
    };
    match result.and_then(|summary| run.finish().map(|_| summary)) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            run.abort();
            eprintln!("{}", serde_json::json!({"status": "error", "command": name, "message": one_line(&e)}));
            ExitCode::from(1)
        }
    }
}
