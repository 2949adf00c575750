use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    /// Audio used to discover and train the units.
    #[default]
    TrainUnit,
    /// Audio of the target voice; carried through but not used for unit training.
    TrainVoice,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub utterance_id: String,
    pub path: PathBuf,
    #[serde(default)]
    pub split: Split,
}

/// Utterance list with split tags. Relative paths resolve against the
/// manifest's directory.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CorpusManifest {
    pub entries: Vec<ManifestEntry>,
}

impl CorpusManifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self, PipelineError> {
        let mut seen = BTreeSet::new();
        for e in &entries {
            if !seen.insert(e.utterance_id.as_str()) {
                return Err(PipelineError::DuplicateId(e.utterance_id.clone()));
            }
        }
        Ok(Self { entries })
    }

    /// Reads `.csv` (header `utterance_id,path,split`) or JSON lines, resolves
    /// relative paths and checks that every file exists.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Manifest(format!("{}: {e}", path.display())))?;
        let mut m = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
            Self::from_csv(&text)?
        } else {
            Self::from_jsonl(&text)?
        };
        let base = path.parent().unwrap_or(Path::new("."));
        m.resolve(base)?;
        Ok(m)
    }

    pub fn from_csv(text: &str) -> Result<Self, PipelineError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let entries = rdr
            .deserialize()
            .collect::<Result<Vec<ManifestEntry>, _>>()
            .map_err(|e| PipelineError::Manifest(e.to_string()))?;
        Self::new(entries)
    }

    pub fn from_jsonl(text: &str) -> Result<Self, PipelineError> {
        let entries = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| PipelineError::Manifest(format!("line {}: {e}", i + 1))))
            .collect::<Result<Vec<ManifestEntry>, _>>()?;
        Self::new(entries)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for e in &self.entries {
            w.serialize(e).expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8")
    }

    fn resolve(&mut self, base: &Path) -> Result<(), PipelineError> {
        for e in &mut self.entries {
            if e.path.is_relative() {
                e.path = base.join(&e.path);
            }
            if !e.path.is_file() {
                return Err(PipelineError::Manifest(format!(
                    "{}: audio file {} not found",
                    e.utterance_id,
                    e.path.display()
                )));
            }
        }
        Ok(())
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }
}
