//! Corpus discovery: `<root>/<speaker>/<utterance>.wav`.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::audio::wav_info;
use super::tensor::write_atomic;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub utterance_id: String,
    pub speaker_id: String,
    pub file_path: PathBuf,
    pub duration_s: f64,
    pub sample_rate: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedFile {
    pub file_path: PathBuf,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub root: PathBuf,
    pub config_hash: String,
    pub entries: Vec<ManifestEntry>,
    #[serde(default)]
    pub skipped: Vec<SkippedFile>,
}

impl CorpusManifest {
    pub fn total_duration_s(&self) -> f64 {
        self.entries.iter().map(|e| e.duration_s).sum()
    }

    pub fn speakers(&self) -> BTreeSet<&str> {
        self.entries.iter().map(|e| e.speaker_id.as_str()).collect()
    }

    /// Checks that utterance ids are unique. Files are not opened here: one
    /// that has gone bad since ingest fails on its own when processed.
    pub fn validate(&self) -> Result<()> {
        let mut ids = BTreeSet::new();
        for e in &self.entries {
            if !ids.insert(&e.utterance_id) {
                return Err(Error::InvalidInput(format!(
                    "duplicate utterance id {:?}",
                    e.utterance_id
                )));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut json = serde_json::to_vec_pretty(self)?;
        json.push(b'\n');
        write_atomic(path, &json)
    }
}

/// Scans speaker subdirectories for WAV files. Files that cannot be used
/// are listed in `skipped` with a reason; an unreadable root is an error.
/// Utterance ids are `<speaker>/<file stem>`.
pub fn ingest(root: &Path, config_hash: &str) -> Result<CorpusManifest> {
    let mut speakers: Vec<PathBuf> = std::fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|d| d.ok().map(|d| d.path()))
        .filter(|p| p.is_dir())
        .collect();
    speakers.sort();

    let mut entries = Vec::new();
    let mut skipped = Vec::new();
    for dir in speakers {
        let speaker_id = dir.file_name().unwrap().to_string_lossy().into_owned();
        let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|d| d.ok().map(|d| d.path()))
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        for file in files {
            let is_wav = file
                .extension()
                .is_some_and(|x| x.eq_ignore_ascii_case("wav"));
            if !is_wav {
                continue;
            }
            let stem = file.file_stem().unwrap().to_string_lossy().into_owned();
            match wav_info(&file) {
                Ok(info) => match info.rejection() {
                    None => entries.push(ManifestEntry {
                        utterance_id: format!("{speaker_id}/{stem}"),
                        speaker_id: speaker_id.clone(),
                        duration_s: info.duration_s(),
                        sample_rate: info.sample_rate,
                        file_path: file,
                    }),
                    Some(reason) => {
                        log::warn!("skipping {}: {reason}", file.display());
                        skipped.push(SkippedFile {
                            file_path: file,
                            reason,
                        })
                    }
                },
                Err(e) => {
                    log::warn!("skipping {}: {e}", file.display());
                    skipped.push(SkippedFile {
                        file_path: file,
                        reason: e.to_string(),
                    })
                }
            }
        }
    }
    Ok(CorpusManifest {
        root: root.to_path_buf(),
        config_hash: config_hash.to_string(),
        entries,
        skipped,
    })
}
