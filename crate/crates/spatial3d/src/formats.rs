//! On-disk formats: scene and sample JSON Lines, prediction files, and the
//! dataset manifest. See `docs/FORMATS.md` for the byte-level layout.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use spatial3d_core::scene::SceneRecord;
use spatial3d_core::synth::{Dataset, DatasetPlan, InstructionSample, Split, Task};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;
pub const TRAIN_FILE: &str = "train.jsonl";
pub const VAL_FILE: &str = "val.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

/// One compact JSON value per line, each line ending in `\n`.
pub fn to_jsonl<T: Serialize>(items: &[T]) -> Result<Vec<u8>, CliError> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item).map_err(CliError::internal)?;
        out.push(b'\n');
    }
    Ok(out)
}

/// Parses JSON Lines. Blank lines are skipped; errors name the 1-based line.
pub fn from_jsonl<T: DeserializeOwned>(bytes: &[u8], what: &str) -> Result<Vec<T>, CliError> {
    let mut items = Vec::new();
    for (i, line) in BufReader::new(bytes).lines().enumerate() {
        let line =
            line.map_err(|e| CliError::validation(format!("{what}: line {}: {e}", i + 1)))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line)
            .map_err(|e| CliError::validation(format!("{what}: line {}: {e}", i + 1)))?;
        items.push(item);
    }
    Ok(items)
}

pub fn read_input(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::validation(format!("cannot read {}: {e}", path.display())))
}

pub fn write_output(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let mut f = fs::File::create(path)
        .map_err(|e| CliError::internal(format!("cannot create {}: {e}", path.display())))?;
    f.write_all(bytes)
        .map_err(|e| CliError::internal(format!("cannot write {}: {e}", path.display())))
}

pub fn read_scenes(path: &Path) -> Result<Vec<SceneRecord>, CliError> {
    let scenes: Vec<SceneRecord> = from_jsonl(&read_input(path)?, &path.display().to_string())?;
    for s in &scenes {
        s.validate()?;
    }
    Ok(scenes)
}

/// Reads samples from a JSON Lines file, or from both splits of a dataset directory.
pub fn read_samples(path: &Path) -> Result<Vec<InstructionSample>, CliError> {
    if path.is_dir() {
        let mut all = read_samples(&path.join(TRAIN_FILE))?;
        all.extend(read_samples(&path.join(VAL_FILE))?);
        return Ok(all);
    }
    from_jsonl(&read_input(path)?, &path.display().to_string())
}

/// One line of a predictions file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionRecord {
    pub sample_id: String,
    pub answer_text: String,
}

/// Predictions keyed by sample id; a repeated id is a validation error.
pub fn read_predictions(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let records: Vec<PredictionRecord> =
        from_jsonl(&read_input(path)?, &path.display().to_string())?;
    let mut map = BTreeMap::new();
    for r in records {
        if map.contains_key(&r.sample_id) {
            return Err(CliError::validation(format!(
                "{}: duplicate prediction for {}",
                path.display(),
                r.sample_id
            )));
        }
        map.insert(r.sample_id, r.answer_text);
    }
    Ok(map)
}

/// Gold answers as a predictions file, in sample order.
pub fn gold_predictions(samples: &[InstructionSample]) -> Vec<PredictionRecord> {
    samples
        .iter()
        .map(|s| PredictionRecord {
            sample_id: s.id.clone(),
            answer_text: s.answer.clone(),
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub seed: u64,
    pub plan: DatasetPlan,
    /// split -> task -> sample count.
    pub counts: BTreeMap<String, BTreeMap<String, usize>>,
    pub train_scenes: Vec<String>,
    pub val_scenes: Vec<String>,
    /// Lowercase hex SHA-256 of `train.jsonl` bytes followed by `val.jsonl` bytes.
    pub content_hash: String,
}

pub fn content_hash(train: &[u8], val: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(train);
    h.update(val);
    hex::encode(h.finalize())
}

/// Serialized split files plus the manifest describing them.
pub struct DatasetFiles {
    pub train: Vec<u8>,
    pub val: Vec<u8>,
    pub manifest: Manifest,
}

pub fn encode_dataset(
    ds: &Dataset,
    plan: &DatasetPlan,
    seed: u64,
) -> Result<DatasetFiles, CliError> {
    let train = to_jsonl(&ds.train)?;
    let val = to_jsonl(&ds.val)?;
    let mut counts: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    for split in [Split::Train, Split::Val] {
        let per_task = counts.entry(split.as_str().to_string()).or_default();
        for t in Task::ALL {
            per_task.insert(t.to_string(), 0);
        }
    }
    for ((split, task), n) in ds.counts() {
        counts
            .get_mut(split.as_str())
            .expect("both splits present")
            .insert(task.to_string(), n);
    }
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        seed,
        plan: plan.clone(),
        counts,
        train_scenes: ds.train_scenes.clone(),
        val_scenes: ds.val_scenes.clone(),
        content_hash: content_hash(&train, &val),
    };
    Ok(DatasetFiles {
        train,
        val,
        manifest,
    })
}

pub fn write_dataset(dir: &Path, files: &DatasetFiles) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::internal(format!("cannot create {}: {e}", dir.display())))?;
    let mut manifest = serde_json::to_vec_pretty(&files.manifest).map_err(CliError::internal)?;
    manifest.push(b'\n');
    write_output(&dir.join(TRAIN_FILE), &files.train)?;
    write_output(&dir.join(VAL_FILE), &files.val)?;
    write_output(&dir.join(MANIFEST_FILE), &manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, CliError> {
    let path = dir.join(MANIFEST_FILE);
    serde_json::from_slice(&read_input(&path)?)
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use spatial3d_core::synth::fixtures;

    #[test]
    fn jsonl_round_trip_and_line_errors() {
        let samples = fixtures::all().unwrap();
        let bytes = to_jsonl(&samples).unwrap();
        assert_eq!(bytes.iter().filter(|&&b| b == b'\n').count(), 3);
        let back: Vec<InstructionSample> = from_jsonl(&bytes, "x").unwrap();
        assert_eq!(back, samples);

        let mut broken = bytes.clone();
        broken.extend_from_slice(b"\n{not json}\n");
        let err = from_jsonl::<InstructionSample>(&broken, "x").unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("line 5"), "{err}");
    }

    #[test]
    fn hash_covers_both_splits_in_order() {
        assert_ne!(content_hash(b"a", b"b"), content_hash(b"b", b"a"));
        assert_eq!(
            content_hash(b"", b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn prediction_records_reject_extra_fields() {
        let ok = br#"{"sample_id":"a","answer_text":"<gap>1</gap>"}"#;
        assert_eq!(from_jsonl::<PredictionRecord>(ok, "p").unwrap().len(), 1);
        let extra = br#"{"sample_id":"a","answer_text":"","score":1}"#;
        assert!(from_jsonl::<PredictionRecord>(extra, "p").is_err());
    }
}
