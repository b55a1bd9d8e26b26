use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "nplsa", version, about = "Topic models that choose their own number of topics")]
pub struct Cli {
    /// key=value file supplying defaults for the subcommand's flags
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// More log output (repeatable)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    /// Only log errors
    #[arg(short, long, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus with known topics
    #[command(args_override_self = true)]
    Synth(SynthArgs),
    /// Train a topic model
    #[command(args_override_self = true)]
    Train(TrainArgs),
    /// Score a trained model
    #[command(args_override_self = true)]
    Eval(EvalArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Paper,
    Desk,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value = "paper")]
    pub profile: Profile,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub docs: Option<usize>,
    #[arg(long)]
    pub doc_len: Option<usize>,
    #[arg(long)]
    pub topics: Option<usize>,
    #[arg(long)]
    pub vocab: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub min_topic_dist: Option<f64>,
    /// Also write the per-token topic assignments
    #[arg(long)]
    pub latent: bool,
    #[arg(long, default_value = "synth_out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    Plsa,
    Nplsa,
    Auto,
    Query,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    /// Text (one document per line) or sparse `doc term count` file
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_enum)]
    pub algo: Algo,
    #[arg(long)]
    pub seed: u64,
    /// Number of topics (plsa)
    #[arg(long)]
    pub k: Option<usize>,
    /// Spawn threshold in nats (nplsa)
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Whitespace-separated query terms (query)
    #[arg(long)]
    pub query: Option<String>,
    #[arg(long, default_value_t = 3)]
    pub patience: usize,
    /// Pseudo-feedback mixture weight of the query model
    #[arg(long, default_value_t = 0.5)]
    pub lambda: f64,
    #[arg(long, default_value_t = 50)]
    pub feedback_iters: usize,
    /// Stop growth at this many topics (auto, query)
    #[arg(long)]
    pub max_k: Option<usize>,
    /// Skip EM refinement after rollback (auto, query)
    #[arg(long)]
    pub no_refine: bool,
    /// Seed for a shuffled document order (nplsa)
    #[arg(long)]
    pub shuffle: Option<u64>,
    #[arg(long, default_value_t = 1000)]
    pub max_topics: usize,
    #[arg(long, default_value_t = 200)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub rel_tol: f64,
    #[arg(long, default_value_t = 1e-9)]
    pub floor: f64,
    #[arg(long, default_value_t = 50)]
    pub fold_in_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub fold_in_tol: f64,
    /// Minimum document frequency (text corpora)
    #[arg(long, default_value_t = 1)]
    pub min_df: usize,
    /// One stopword per line (text corpora)
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Held-out corpus for perplexity
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// truth.json from `synth`, for TQE and TCE
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Reference corpus for PMI coherence
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub top_n: usize,
    #[arg(long, default_value_t = 0.8)]
    pub split: f64,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 50)]
    pub fold_in_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub fold_in_tol: f64,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Report path; defaults to metrics.json next to the model
    #[arg(long)]
    pub out: Option<PathBuf>,
}

const SUBCOMMANDS: [&str; 3] = ["synth", "train", "eval"];

/// Splices the entries of a `--config` file in front of the explicit flags,
/// so anything given on the command line wins.
pub fn expand_config(args: Vec<String>) -> Result<Vec<String>, CliError> {
    let mut path = None;
    let mut it = args.iter().enumerate();
    while let Some((i, a)) = it.next() {
        if a == "--" {
            break;
        }
        if let Some(p) = a.strip_prefix("--config=") {
            path = Some(PathBuf::from(p));
        } else if a == "--config" {
            match args.get(i + 1) {
                Some(p) => path = Some(PathBuf::from(p)),
                None => return Ok(args),
            }
            it.next();
        }
    }
    let Some(path) = path else { return Ok(args) };
    let entries = read_config(&path)?;
    let at = args
        .iter()
        .position(|a| SUBCOMMANDS.contains(&a.as_str()))
        .map_or(args.len(), |i| i + 1);
    let mut out = args[..at].to_vec();
    out.extend(entries);
    out.extend_from_slice(&args[at..]);
    Ok(out)
}

fn read_config(path: &Path) -> Result<Vec<String>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config file {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("{}:{}: expected key=value", path.display(), n + 1)))?;
        let flag = format!("--{}", key.trim().replace('_', "-"));
        match value.trim() {
            "true" => out.push(flag),
            "false" => {}
            v => {
                out.push(flag);
                out.push(v.to_string());
            }
        }
    }
    Ok(out)
}
