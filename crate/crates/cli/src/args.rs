use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "hpc", version, about = "Hierarchical Poisson convolution topic model")]
pub struct Cli {
    /// Master seed. Overrides HPC_SEED and the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads. Outputs do not depend on this.
    #[arg(long, global = true)]
    pub parallelism: Option<usize>,
    /// TOML settings file (sections: simulate, hyper, sampler, summarize).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Drop labels that are strict ancestors of another label on the same document.
    #[arg(long, global = true)]
    pub strip_ancestors: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a labeled corpus and its ground-truth parameters.
    Simulate(SimulateArgs),
    /// Fit the model by block Gibbs sampling and write posterior means.
    Fit(FitArgs),
    /// FREX and frequency summaries, diversity and stability reports.
    Summarize(SummarizeArgs),
    /// Predict topic memberships of new documents.
    Classify(ClassifyArgs),
    /// Per-topic decision thresholds from a labeled validation corpus.
    Calibrate(CalibrateArgs),
    /// Diversity of summaries, optionally against an external p(word | topic) table.
    Diversity(DiversityArgs),
    /// Compare every analytic derivative with finite differences.
    CheckGrad(CheckGradArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Topic tree CSV (child_id,parent_id,name). Defaults to a balanced tree
    /// with `simulate.levels` branching.
    #[arg(long)]
    pub tree: Option<PathBuf>,
    /// Output directory; created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of documents (simulate.n_docs).
    #[arg(long)]
    pub docs: Option<usize>,
    /// Vocabulary size (simulate.n_words).
    #[arg(long)]
    pub words: Option<usize>,
    /// Also write this many held-out documents to `<out>/held_out`.
    #[arg(long)]
    pub held_out: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Corpus directory (vocab.csv, counts.csv, labels.csv, lengths.csv).
    #[arg(long)]
    pub corpus: PathBuf,
    /// Defaults to `<corpus>/tree.csv`.
    #[arg(long)]
    pub tree: Option<PathBuf>,
    /// Directory for the estimates, diagnostics and manifest.
    #[arg(long)]
    pub out: PathBuf,
    /// Total Gibbs scans (sampler.n_iterations).
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Scans discarded before averaging (sampler.burn_in).
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Save `<out>/checkpoint.bin` every this many scans.
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    /// Continue from `<out>/checkpoint.bin`.
    #[arg(long)]
    pub resume: bool,
    /// Skip documents without labels instead of failing.
    #[arg(long)]
    pub drop_unlabeled: bool,
}

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    /// Output directory of `fit`.
    #[arg(long)]
    pub estimates: PathBuf,
    /// Output directory; created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// FREX weight on exclusivity.
    #[arg(long)]
    pub w: Option<f64>,
    /// Words per topic in top_words.csv.
    #[arg(long)]
    pub n: Option<usize>,
    /// Comparison set: siblings or all.
    #[arg(long)]
    pub mode: Option<String>,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    /// Output directory of `fit`.
    #[arg(long)]
    pub estimates: PathBuf,
    /// Corpus of documents to label; labels.csv is optional and ignored.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Output directory; created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// thresholds.csv from `calibrate`; 0.5 for every topic otherwise.
    #[arg(long)]
    pub thresholds: Option<PathBuf>,
    /// True labels (doc_id,topic_id); adds metrics.json.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Output directory of `fit`.
    #[arg(long)]
    pub estimates: PathBuf,
    /// Labeled validation corpus.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Output directory; created if missing.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DiversityArgs {
    /// Output directory of `fit`.
    #[arg(long)]
    pub estimates: PathBuf,
    /// Output directory; created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// External p(word | topic) table: topic_id,word_id,probability.
    #[arg(long)]
    pub external: Option<PathBuf>,
    /// Topic priors for the external table (topic_id,prior); uniform otherwise.
    #[arg(long, requires = "external")]
    pub priors: Option<PathBuf>,
    /// FREX weight on exclusivity.
    #[arg(long)]
    pub w: Option<f64>,
    /// Comparison set: siblings or all.
    #[arg(long)]
    pub mode: Option<String>,
}

#[derive(Debug, Args)]
pub struct CheckGradArgs {
    /// Random parameter points per check.
    #[arg(long, default_value_t = 20)]
    pub points: usize,
    /// Vocabulary size of the test problem.
    #[arg(long, default_value_t = 30)]
    pub words: usize,
    /// Documents in the test problem.
    #[arg(long, default_value_t = 40)]
    pub docs: usize,
    /// Branching per level of the test tree, e.g. `2,2`.
    #[arg(long, value_delimiter = ',', default_value = "2,2")]
    pub levels: Vec<usize>,
    /// Also write the report and a manifest here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, hide = true)]
    pub corrupt: bool,
}
