mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anchorlab::aligner::Profile;
use anchorlab::reconstruct::Mode;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "anchorlab", version, about = "EEG-to-text decoding through keyword anchors")]
pub struct Cli {
    /// TOML run configuration. Without it, the snapshot in --out is reused.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory for artifacts and the frozen config.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    pub profile: Option<ProfileArg>,
    /// Also write long-format CSVs for plotting.
    #[arg(long, global = true)]
    pub emit_plot_data: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ProfileArg {
    Full,
    Compact,
}

impl From<ProfileArg> for Profile {
    fn from(p: ProfileArg) -> Self {
        match p {
            ProfileArg::Full => Profile::Full,
            ProfileArg::Compact => Profile::Compact,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    Naive,
    Cot,
    Rag,
    CotRag,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Naive => Mode::Naive,
            ModeArg::Cot => Mode::Cot,
            ModeArg::Rag => Mode::Rag,
            ModeArg::CotRag => Mode::CotRag,
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build the fixed keyword vocabulary from an annotated corpus.
    BuildVocab(BuildVocabArgs),
    /// Generate a synthetic dataset with a known keyword → feature map.
    SynthGen(SynthGenArgs),
    /// Train the EEG → keyword encoder.
    Train(TrainArgs),
    /// Decode ordered anchors from a trained checkpoint.
    Decode(DecodeArgs),
    /// Expand decoded anchors into sentences.
    Reconstruct(ReconstructArgs),
    /// Run the anchor-condition suite, or score existing records.
    Evaluate(EvaluateArgs),
    /// Output-space sizes of anchor sequences and sentences, in bits.
    Entropy(EntropyArgs),
    /// Permutation test of retrieval accuracy for a record file.
    Permute(PermuteArgs),
    /// Summarize an evaluation report as a table.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct BuildVocabArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// 300-d word vectors (text or EMBK).
    #[arg(long)]
    pub word_bank: Option<PathBuf>,
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub min_freq: Option<usize>,
    #[arg(long)]
    pub reserve_fraction: Option<f64>,
    /// Directory with replacement exclusion lists.
    #[arg(long)]
    pub exclusions: Option<PathBuf>,
    #[arg(long)]
    pub root_map: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SynthGenArgs {
    /// Signal-to-noise ratio in dB; `inf` and `-inf` allowed.
    #[arg(long, allow_hyphen_values = true)]
    pub snr: Option<String>,
    #[arg(long)]
    pub vocab_size: Option<usize>,
    #[arg(long)]
    pub sentences: Option<usize>,
    #[arg(long)]
    pub subjects: Option<usize>,
    #[arg(long)]
    pub feature_dim: Option<usize>,
    #[arg(long)]
    pub bank_dim: Option<usize>,
    #[arg(long)]
    pub filler_rate: Option<f64>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub keyword_bank: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub learn_tau: bool,
    #[arg(long)]
    pub aux_weight: Option<f64>,
    #[arg(long)]
    pub feature_dim: Option<usize>,
}

#[derive(Args, Debug)]
pub struct DecodeArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub m: Option<usize>,
    /// train, val, test or all.
    #[arg(long)]
    pub part: Option<String>,
}

#[derive(Args, Debug)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub decoded: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Call the chat endpoint named by ANCHORLAB_LLM_URL.
    #[arg(long, conflicts_with = "fallback")]
    pub remote: bool,
    /// Deterministic offline reconstruction (the default).
    #[arg(long)]
    pub fallback: bool,
    #[arg(long)]
    pub templates: Option<PathBuf>,
    #[arg(long)]
    pub concurrency: Option<usize>,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Score an existing record file instead of running the suite.
    #[arg(long)]
    pub records: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub decoded: Option<PathBuf>,
    #[arg(long, conflicts_with = "fallback")]
    pub remote: bool,
    #[arg(long)]
    pub fallback: bool,
    /// idf, sentence-bank or remote.
    #[arg(long)]
    pub embedder: Option<String>,
    #[arg(long)]
    pub word_bank: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EntropyArgs {
    #[arg(long = "V", num_args = 1.., default_values_t = [100])]
    pub vocab_sizes: Vec<usize>,
    #[arg(long, num_args = 1.., default_values_t = [3, 5, 7])]
    pub m: Vec<usize>,
    #[arg(long = "L", default_value_t = 20)]
    pub length: usize,
    /// Also report sequences of distinct anchors.
    #[arg(long)]
    pub distinct: bool,
}

#[derive(Args, Debug)]
pub struct PermuteArgs {
    #[arg(long)]
    pub records: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub n_perm: Option<usize>,
    #[arg(long)]
    pub embedder: Option<String>,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    #[arg(long)]
    pub report: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
