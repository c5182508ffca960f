//! Two-pass corpus processing with resumable, atomic outputs.
//!
//! Output layout under `out_dir`:
//!
//! ```text
//! config_hash                 guards against mixing configurations
//! config.txt                  the configuration that produced the tree
//! stats/<speaker>.json        pass 1
//! utterances/<id>/<name>.spf  pass 2: S, S_c, S_r, P_r, S_p
//! utterances/<id>/meta.json   written last; marks the utterance complete
//! index.json                  sorted summary of every completed utterance
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::audio::read_wav;
use super::builders::{derive_seed, Frontend, Provenance, StatsStore};
use super::manifest::{CorpusManifest, ManifestEntry};
use super::tensor::{write_atomic, Tensor};
use crate::error::{Error, Result};
use crate::par;
use crate::pitch::{NormScope, SpeakerStats, StatsAccumulator};
use crate::vocoder::estimate_f0;

pub const TENSOR_EXT: &str = "spf";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceMeta {
    pub utterance_id: String,
    pub speaker_id: String,
    pub provenance: Provenance,
    /// Tensor name → [rows, cols].
    pub shapes: BTreeMap<String, [usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedUtterance {
    pub utterance_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusIndex {
    pub config_hash: String,
    pub master_seed: u64,
    pub utterances: Vec<UtteranceMeta>,
    pub failed: Vec<FailedUtterance>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSummary {
    pub processed: usize,
    pub resumed: usize,
    pub failed: Vec<FailedUtterance>,
    pub index_path: PathBuf,
}

impl CorpusSummary {
    pub fn is_success(&self) -> bool {
        self.failed.is_empty()
    }
}

pub fn stats_path(out_dir: &Path, speaker_id: &str) -> PathBuf {
    out_dir.join("stats").join(format!("{speaker_id}.json"))
}

pub fn utterance_dir(out_dir: &Path, utterance_id: &str) -> PathBuf {
    out_dir.join("utterances").join(utterance_id)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut json = serde_json::to_vec_pretty(value)?;
    json.push(b'\n');
    write_atomic(path, &json)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Claims `out_dir` for this configuration, refusing one written under
/// another.
pub fn claim_output_dir(out_dir: &Path, fe: &Frontend) -> Result<()> {
    let marker = out_dir.join("config_hash");
    let expected = fe.config_hash();
    match std::fs::read_to_string(&marker) {
        Ok(found) if found.trim() == expected => Ok(()),
        Ok(found) => Err(Error::HashMismatch {
            dir: out_dir.to_path_buf(),
            found: found.trim().to_string(),
            expected: expected.to_string(),
        }),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            write_atomic(&out_dir.join("config.txt"), fe.config.to_text().as_bytes())?;
            write_atomic(&marker, format!("{expected}\n").as_bytes())
        }
        Err(e) => Err(Error::io(marker, e)),
    }
}

/// Pass 1: per-speaker F0 statistics. Contours are estimated in parallel
/// and merged per speaker in manifest order, so the result does not depend
/// on scheduling. Returns the store and the utterances that could not be
/// analyzed.
pub fn compute_stats(
    manifest: &CorpusManifest,
    fe: &Frontend,
) -> (StatsStore, Vec<FailedUtterance>) {
    let cfg = &fe.config;
    let partials = par::map_slice(&manifest.entries, |e| {
        let x = read_wav(&e.file_path, cfg.frame().sample_rate)?;
        let p = estimate_f0(&x, &cfg.vocoder)?;
        let mut acc = StatsAccumulator::default();
        acc.push_contour(&p, cfg.pitch.domain);
        Ok::<_, Error>(acc)
    });
    let mut per_speaker: BTreeMap<&str, StatsAccumulator> = BTreeMap::new();
    let mut failed = Vec::new();
    for (e, r) in manifest.entries.iter().zip(partials) {
        match r {
            Ok(acc) => {
                let slot = per_speaker.entry(e.speaker_id.as_str()).or_default();
                *slot = slot.merge(acc);
            }
            Err(err) => failed.push(FailedUtterance {
                utterance_id: e.utterance_id.clone(),
                error: err.to_string(),
            }),
        }
    }
    let mut store = StatsStore::new();
    for (spk, acc) in per_speaker {
        match acc.finish(spk, cfg.pitch.std_floor) {
            Ok(s) => {
                store.insert(spk.to_string(), s);
            }
            Err(err) => log::warn!("{err}"),
        }
    }
    (store, failed)
}

/// Loads persisted statistics for every speaker in the manifest, computing
/// and writing the missing ones.
pub fn ensure_stats(
    manifest: &CorpusManifest,
    fe: &Frontend,
    out_dir: &Path,
) -> Result<(StatsStore, Vec<FailedUtterance>)> {
    let mut store = StatsStore::new();
    let mut missing = Vec::new();
    for spk in manifest.speakers() {
        let path = stats_path(out_dir, spk);
        if path.exists() {
            store.insert(spk.to_string(), read_json::<SpeakerStats>(&path)?);
        } else {
            missing.push(spk);
        }
    }
    if missing.is_empty() {
        return Ok((store, Vec::new()));
    }
    let subset = CorpusManifest {
        entries: manifest
            .entries
            .iter()
            .filter(|e| missing.contains(&e.speaker_id.as_str()))
            .cloned()
            .collect(),
        ..manifest.clone()
    };
    let (fresh, failed) = compute_stats(&subset, fe);
    for (spk, s) in fresh {
        write_json(&stats_path(out_dir, &spk), &s)?;
        store.insert(spk, s);
    }
    Ok((store, failed))
}

fn completed(out_dir: &Path, e: &ManifestEntry, hash: &str) -> Option<UtteranceMeta> {
    let dir = utterance_dir(out_dir, &e.utterance_id);
    let meta: UtteranceMeta = read_json(&dir.join("meta.json")).ok()?;
    let complete = meta.provenance.config_hash == hash
        && meta
            .shapes
            .keys()
            .all(|name| dir.join(format!("{name}.{TENSOR_EXT}")).is_file());
    complete.then_some(meta)
}

fn process(
    e: &ManifestEntry,
    fe: &Frontend,
    store: &StatsStore,
    out_dir: &Path,
) -> Result<UtteranceMeta> {
    let x = read_wav(&e.file_path, fe.config.frame().sample_rate)
        .map_err(|err| err.in_utterance(&e.utterance_id))?;
    let seed = derive_seed(fe.config.seed, &e.utterance_id);
    let inputs = fe.build_all(&x, &e.utterance_id, &e.speaker_id, store, seed)?;
    let dir = utterance_dir(out_dir, &e.utterance_id);
    let mut shapes = BTreeMap::new();
    for (name, data) in inputs.tensors() {
        write_atomic(
            &dir.join(format!("{name}.{TENSOR_EXT}")),
            &Tensor::from_array(data).to_bytes(),
        )?;
        shapes.insert(name.to_string(), [data.nrows(), data.ncols()]);
    }
    let meta = UtteranceMeta {
        utterance_id: e.utterance_id.clone(),
        speaker_id: e.speaker_id.clone(),
        provenance: inputs.provenance,
        shapes,
    };
    write_json(&dir.join("meta.json"), &meta)?;
    Ok(meta)
}

/// Pass 1 (speaker statistics) then pass 2 (encoder inputs per utterance).
/// Completed utterances from an earlier run with the same configuration are
/// skipped. Per-utterance failures are logged and reported in the summary
/// and index rather than aborting the run.
pub fn run_corpus(manifest: &CorpusManifest, fe: &Frontend, out_dir: &Path) -> Result<CorpusSummary> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    claim_output_dir(out_dir, fe)?;
    let mut ids = std::collections::BTreeSet::new();
    if let Some(dup) = manifest.entries.iter().find(|e| !ids.insert(&e.utterance_id)) {
        return Err(Error::InvalidInput(format!(
            "duplicate utterance id {:?}",
            dup.utterance_id
        )));
    }
    par::with_threads(fe.config.threads, || run_passes(manifest, fe, out_dir))?
}

fn run_passes(manifest: &CorpusManifest, fe: &Frontend, out_dir: &Path) -> Result<CorpusSummary> {
    let hash = fe.config_hash();
    let (store, mut failed) = match fe.config.pitch.scope {
        NormScope::Speaker => ensure_stats(manifest, fe, out_dir)?,
        NormScope::Utterance => (StatsStore::new(), Vec::new()),
    };
    let failed_ids: std::collections::BTreeSet<String> =
        failed.iter().map(|f| f.utterance_id.clone()).collect();

    let results = par::map_slice(&manifest.entries, |e| {
        if failed_ids.contains(&e.utterance_id) {
            return None;
        }
        if let Some(meta) = completed(out_dir, e, hash) {
            return Some((true, Ok(meta)));
        }
        Some((false, process(e, fe, &store, out_dir)))
    });

    let mut utterances = Vec::new();
    let (mut processed, mut resumed) = (0, 0);
    for (e, r) in manifest.entries.iter().zip(results) {
        match r {
            None => {}
            Some((true, Ok(meta))) => {
                resumed += 1;
                utterances.push(meta);
            }
            Some((false, Ok(meta))) => {
                processed += 1;
                utterances.push(meta);
            }
            Some((_, Err(err))) => {
                log::error!("{err}");
                failed.push(FailedUtterance {
                    utterance_id: e.utterance_id.clone(),
                    error: err.to_string(),
                });
            }
        }
    }
    utterances.sort_by(|a, b| a.utterance_id.cmp(&b.utterance_id));
    failed.sort_by(|a, b| a.utterance_id.cmp(&b.utterance_id));
    let index = CorpusIndex {
        config_hash: hash.to_string(),
        master_seed: fe.config.seed,
        utterances,
        failed: failed.clone(),
    };
    let index_path = out_dir.join("index.json");
    write_json(&index_path, &index)?;
    log::info!(
        "{processed} utterances processed, {resumed} resumed, {} failed",
        failed.len()
    );
    Ok(CorpusSummary {
        processed,
        resumed,
        failed,
        index_path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::audio::write_wav;
    use crate::pipeline::config::FrontendConfig;
    use crate::pipeline::manifest::ingest;
    use crate::synthetic::VowelSpec;

    fn corpus(root: &Path) -> CorpusManifest {
        for (spk, f0) in [("p1", 120.0), ("p2", 210.0)] {
            std::fs::create_dir_all(root.join(spk)).unwrap();
            for (k, vib) in [(0, 20.0), (1, 40.0)] {
                let x = VowelSpec::default()
                    .f0(f0)
                    .vibrato(vib)
                    .duration(0.4)
                    .seed(k)
                    .render();
                write_wav(&root.join(format!("{spk}/u{k}.wav")), &x).unwrap();
            }
        }
        ingest(root, "test").unwrap()
    }

    #[test]
    fn resume_skips_completed_work_and_hash_changes_are_refused() {
        let dir = tempfile::tempdir().unwrap();
        let m = corpus(&dir.path().join("wav"));
        let out = dir.path().join("out");
        let fe = Frontend::new(FrontendConfig::default()).unwrap();
        let first = run_corpus(&m, &fe, &out).unwrap();
        assert_eq!((first.processed, first.resumed), (4, 0));
        assert!(first.is_success());
        let index_before = std::fs::read(&first.index_path).unwrap();

        std::fs::remove_dir_all(utterance_dir(&out, "p2/u1")).unwrap();
        let second = run_corpus(&m, &fe, &out).unwrap();
        assert_eq!((second.processed, second.resumed), (1, 3));
        assert_eq!(std::fs::read(&second.index_path).unwrap(), index_before);

        let mut other = FrontendConfig::default();
        other.seed = 1;
        let e = run_corpus(&m, &Frontend::new(other).unwrap(), &out).unwrap_err();
        assert!(matches!(e, Error::HashMismatch { .. }), "{e}");
    }

    #[test]
    fn stats_are_persisted_per_speaker() {
        let dir = tempfile::tempdir().unwrap();
        let m = corpus(&dir.path().join("wav"));
        let out = dir.path().join("out");
        let fe = Frontend::new(FrontendConfig::default()).unwrap();
        let (store, failed) = ensure_stats(&m, &fe, &out).unwrap();
        assert!(failed.is_empty());
        let p1: SpeakerStats = read_json(&stats_path(&out, "p1")).unwrap();
        assert_eq!(&p1, &store["p1"]);
        assert!((p1.log_f0_mean - 120f64.ln()).abs() < 0.02, "{}", p1.log_f0_mean);
        assert!(store["p2"].log_f0_mean > p1.log_f0_mean);
    }

    #[test]
    fn unreadable_files_fail_without_aborting() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = corpus(&dir.path().join("wav"));
        std::fs::write(&m.entries[0].file_path, b"truncated").unwrap();
        m.entries[0].utterance_id = "p1/u0".into();
        let out = dir.path().join("out");
        let fe = Frontend::new(FrontendConfig::default()).unwrap();
        let s = run_corpus(&m, &fe, &out).unwrap();
        assert!(!s.is_success());
        assert_eq!(s.failed.len(), 1);
        assert_eq!(s.failed[0].utterance_id, "p1/u0");
        assert_eq!(s.processed, 3);
        let index: CorpusIndex = read_json(&s.index_path).unwrap();
        assert_eq!(index.utterances.len(), 3);
        assert_eq!(index.failed, s.failed);
    }
}
