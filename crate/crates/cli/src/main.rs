//! `aud`: discover acoustic units from a WAV corpus, encode new audio with
//! them, resynthesize from exemplars and score the result.

mod commands;
mod support;

use std::path::PathBuf;
use std::process::ExitCode;

use aud_core::pipeline::Split;
use clap::{Args, Parser, Subcommand, ValueEnum};

use commands::*;
use support::{CliResult, Preset};

#[derive(Debug, Parser)]
#[command(name = "aud", version, about = "Acoustic unit discovery, encoding and resynthesis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// TOML file whose keys override the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Preset::Default)]
    preset: Preset,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SplitArg {
    TrainUnit,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::TrainUnit => Split::TrainUnit,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic syllable corpus with manifest, reference spans and ABX triplets.
    SynthCorpus {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 12)]
        utterances: usize,
        #[arg(long, default_value_t = 4)]
        templates: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Every n-th utterance goes to the test split (0 disables).
        #[arg(long, default_value_t = 6)]
        test_every: usize,
        #[arg(long, default_value_t = 200)]
        triplets: usize,
    },
    /// Segment, cluster and train the stage-1 inventory.
    Discover {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Self-train an inventory on continuous speech and decode the corpus.
    TrainStage2 {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        inventory: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Merge a trained System 1 inventory into System 2 and retrain.
    Merge {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        inventory: PathBuf,
        /// `clustering.json` written by `discover`.
        #[arg(long)]
        clustering: PathBuf,
        #[arg(long)]
        target: Option<usize>,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full pipeline: discovery, System 1, System 2 and exemplars.
    Run {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Transcribe audio into unit tokens.
    Encode {
        #[arg(long)]
        inventory: PathBuf,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output JSONL path.
        #[arg(long, default_value = "transcriptions.jsonl")]
        out: PathBuf,
        wav: Vec<PathBuf>,
    },
    /// Render a transcription by concatenating unit exemplars.
    Resynth {
        #[arg(long)]
        exemplars: PathBuf,
        #[arg(long)]
        transcriptions: PathBuf,
        /// Utterance to render; defaults to the first.
        #[arg(long)]
        utterance: Option<String>,
        /// Crossfade in seconds.
        #[arg(long, default_value_t = 0.005)]
        crossfade: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Bitrate, clustering quality and ABX error of a set of transcriptions.
    Eval {
        #[arg(long)]
        transcriptions: PathBuf,
        #[arg(long)]
        inventory: Option<PathBuf>,
        /// JSONL of labelled spans: utterance_id, start, end, label.
        #[arg(long)]
        reference: Option<PathBuf>,
        /// JSONL of ABX triplets with a, b and x spans.
        #[arg(long)]
        triplets: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = AbxDistance::Dtw)]
        abx_distance: AbxDistance,
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Directory for report.json and report.csv.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn common(cfg: ConfigArgs, out: PathBuf) -> Common {
    Common { config: cfg.config, preset: cfg.preset, out }
}

fn dispatch(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::SynthCorpus { out, utterances, templates, seed, test_every, triplets } => {
            cmd_synth_corpus(&out, &SynthArgs { utterances, templates, seed, test_every, triplets })
        }
        Command::Discover { manifest, cfg, out } => cmd_discover(&common(cfg, out), &manifest),
        Command::TrainStage2 { manifest, inventory, cfg, out } => {
            cmd_train_stage2(&common(cfg, out), &manifest, &inventory)
        }
        Command::Merge { manifest, inventory, clustering, target, cfg, out } => {
            cmd_merge(&common(cfg, out), &manifest, &inventory, &clustering, target)
        }
        Command::Run { manifest, cfg, out } => cmd_run(&common(cfg, out), &manifest),
        Command::Encode { inventory, manifest, split, cfg, out, wav } => {
            cmd_encode(&common(cfg, out), &inventory, &wav, manifest.as_deref(), split.into())
        }
        Command::Resynth { exemplars, transcriptions, utterance, crossfade, out } => {
            cmd_resynth(&out, &exemplars, &transcriptions, utterance.as_deref(), crossfade)
        }
        Command::Eval { transcriptions, inventory, reference, triplets, manifest, abx_distance, cfg, out } => {
            let args = EvalArgs {
                transcriptions: &transcriptions,
                inventory: inventory.as_deref(),
                reference: reference.as_deref(),
                triplets: triplets.as_deref(),
                manifest: manifest.as_deref(),
                abx_distance,
            };
            cmd_eval(&common(cfg, out), &args)
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::FAILURE
        }
    }
}
