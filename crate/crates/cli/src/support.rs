//! Errors, config loading, run metadata and file helpers shared by the commands.

use std::fs;
use std::path::{Path, PathBuf};

use aud_core::hmm::{IterationRecord, UnitInventory};
use aud_core::pipeline::{CorpusManifest, PipelineConfig, Split, Transcription, Utterance};
use aud_core::read_wav;
use clap::ValueEnum;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] aud_core::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {msg}")]
    Parse { path: PathBuf, msg: String },
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Usage(String),
}

macro_rules! from_core {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Core(e.into())
            }
        }
    )*};
}

from_core!(
    aud_core::frontend::FrontendError,
    aud_core::segmenter::SegmentError,
    aud_core::graph::GraphError,
    aud_core::hmm::HmmError,
    aud_core::pipeline::PipelineError,
    aud_core::eval::EvalError
);

impl CliError {
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.category(),
            CliError::Io { .. } => "Io",
            CliError::Parse { .. } => "InvalidInput",
            CliError::Config(_) => "InvalidConfig",
            CliError::Usage(_) => "Usage",
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Library defaults.
    Default,
    /// Tuned for the output of `synth-corpus`.
    Synthetic,
}

/// The preset's config with the TOML file's keys layered on top.
pub fn load_config(path: Option<&Path>, preset: Preset) -> CliResult<PipelineConfig> {
    let base = match preset {
        Preset::Default => PipelineConfig::default(),
        Preset::Synthetic => PipelineConfig::synthetic_preset(),
    };
    let cfg = match path {
        None => base,
        Some(path) => {
            let text = read_text(path)?;
            let overlay: toml::Table =
                toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            let mut merged = toml::Table::try_from(&base).map_err(|e| CliError::Config(e.to_string()))?;
            overlay_table(&mut merged, overlay);
            merged.try_into().map_err(|e: toml::de::Error| CliError::Config(format!("{}: {e}", path.display())))?
        }
    };
    cfg.validate()?;
    Ok(cfg)
}

fn overlay_table(base: &mut toml::Table, overlay: toml::Table) {
    for (k, v) in overlay {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => overlay_table(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// SHA-256 of the config's canonical JSON form.
pub fn config_hash(cfg: &PipelineConfig) -> String {
    let json = serde_json::to_string(cfg).expect("config serializes");
    format!("{:x}", Sha256::digest(json.as_bytes()))
}

#[derive(Debug, Serialize)]
pub struct Metadata<'a> {
    pub command: &'a str,
    pub config_hash: String,
    pub seed: u64,
    pub versions: Versions,
    pub inputs: serde_json::Value,
    pub ll_trajectory: &'a [IterationRecord],
    pub config: &'a PipelineConfig,
}

#[derive(Debug, Serialize)]
pub struct Versions {
    pub aud: &'static str,
    pub inventory_format: u32,
}

pub fn write_metadata(
    dir: &Path,
    command: &str,
    cfg: &PipelineConfig,
    inputs: serde_json::Value,
    inv: Option<&UnitInventory>,
) -> CliResult<()> {
    let meta = Metadata {
        command,
        config_hash: config_hash(cfg),
        seed: cfg.seed,
        versions: Versions { aud: env!("CARGO_PKG_VERSION"), inventory_format: aud_core::hmm::INVENTORY_VERSION },
        inputs,
        ll_trajectory: inv.map_or(&[], |i| i.meta.iterations.as_slice()),
        config: cfg,
    };
    write_text(&dir.join("metadata.json"), &serde_json::to_string_pretty(&meta).expect("metadata serializes"))
}

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|source| CliError::Io { path: parent.to_path_buf(), source })?;
    }
    fs::write(path, text).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

pub fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

pub fn parse_json<T: serde::de::DeserializeOwned>(path: &Path, text: &str) -> CliResult<T> {
    serde_json::from_str(text).map_err(|e| CliError::Parse { path: path.to_path_buf(), msg: e.to_string() })
}

pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<Vec<T>> {
    read_text(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| CliError::Parse { path: path.to_path_buf(), msg: format!("line {}: {e}", i + 1) })
        })
        .collect()
}

pub fn to_jsonl<T: Serialize>(rows: &[T]) -> String {
    rows.iter().map(|r| serde_json::to_string(r).expect("row serializes") + "\n").collect()
}

pub fn load_inventory(path: &Path) -> CliResult<UnitInventory> {
    Ok(UnitInventory::from_json(&read_text(path)?)?)
}

pub fn load_transcriptions(path: &Path) -> CliResult<Vec<Transcription>> {
    read_jsonl(path)
}

/// Reads every utterance of `split` listed in the manifest.
pub fn load_utterances(manifest: &Path, split: Split) -> CliResult<Vec<Utterance>> {
    let m = CorpusManifest::load(manifest)?;
    let utts: Vec<Utterance> = m
        .split(split)
        .map(|e| Ok(Utterance { id: e.utterance_id.clone(), waveform: read_wav(&e.path)? }))
        .collect::<CliResult<_>>()?;
    if utts.is_empty() {
        return Err(aud_core::pipeline::PipelineError::EmptyCorpus.into());
    }
    Ok(utts)
}
