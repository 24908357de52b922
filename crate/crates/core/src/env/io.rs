//! `<name>.manifest.json` + `<name>.transitions.jsonl` dataset files.
//!
//! Each JSONL line is one transition with fields in this order:
//! `traj, step, tier, state, action, reward, next_state, done`.
//! The manifest records counts, the generating seed and a SHA-256 of the JSONL bytes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::dataset::{Dataset, Tier, Trajectory, Transition};
use super::spec::EnvKind;
use crate::error::{Error, Result};
use crate::nn::param::hex;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub env: String,
    pub tier: String,
    pub transition_count: usize,
    pub trajectory_count: usize,
    pub seed: u64,
    /// Path (relative to the manifest) of the norm-stats file fitted on this data, if any.
    pub norm_stats: Option<String>,
    pub checksum: String,
    /// Hash of the run config that produced the file, if produced by a pipeline stage.
    #[serde(default)]
    pub config_hash: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct Line {
    traj: usize,
    step: usize,
    tier: Tier,
    state: Vec<f64>,
    action: Vec<f64>,
    reward: f64,
    next_state: Vec<f64>,
    done: bool,
}

pub fn manifest_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.manifest.json"))
}

pub fn transitions_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.transitions.jsonl"))
}

pub fn encode_transitions(d: &Dataset) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for t in &d.trajectories {
        for (step, tr) in t.transitions.iter().enumerate() {
            let line = Line {
                traj: t.id,
                step,
                tier: t.behavior_tier,
                state: tr.state.clone(),
                action: tr.action.clone(),
                reward: tr.reward,
                next_state: tr.next_state.clone(),
                done: tr.done,
            };
            serde_json::to_writer(&mut out, &line)?;
            out.push(b'\n');
        }
    }
    Ok(out)
}

pub fn write_dataset(d: &Dataset, dir: &Path, name: &str, config_hash: Option<&str>) -> Result<DatasetManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let bytes = encode_transitions(d)?;
    let manifest = DatasetManifest {
        format_version: FORMAT_VERSION,
        env: d.env.name().into(),
        tier: d.tier.name().into(),
        transition_count: d.num_transitions(),
        trajectory_count: d.trajectories.len(),
        seed: d.seed,
        norm_stats: None,
        checksum: hex(&Sha256::digest(&bytes)),
        config_hash: config_hash.map(str::to_string),
    };
    let tp = transitions_path(dir, name);
    let mut f = fs::File::create(&tp).map_err(|e| Error::io(&tp, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(&tp, e))?;
    write_manifest(&manifest, dir, name)?;
    Ok(manifest)
}

pub fn write_manifest(m: &DatasetManifest, dir: &Path, name: &str) -> Result<()> {
    let mp = manifest_path(dir, name);
    let mut text = serde_json::to_string_pretty(m)?;
    text.push('\n');
    fs::write(&mp, text).map_err(|e| Error::io(&mp, e))
}

pub fn read_manifest(dir: &Path, name: &str) -> Result<DatasetManifest> {
    let mp = manifest_path(dir, name);
    if !mp.exists() {
        return Err(Error::MissingArtifact(mp));
    }
    let text = fs::read_to_string(&mp).map_err(|e| Error::io(&mp, e))?;
    let m: DatasetManifest = serde_json::from_str(&text)?;
    if m.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported format version {}",
            mp.display(),
            m.format_version
        )));
    }
    Ok(m)
}

/// Load and verify a dataset (checksum, counts, trajectory chaining).
pub fn read_dataset(dir: &Path, name: &str) -> Result<(Dataset, DatasetManifest)> {
    let manifest = read_manifest(dir, name)?;
    let tp = transitions_path(dir, name);
    if !tp.exists() {
        return Err(Error::MissingArtifact(tp));
    }
    let bytes = fs::read(&tp).map_err(|e| Error::io(&tp, e))?;
    if hex(&Sha256::digest(&bytes)) != manifest.checksum {
        return Err(Error::Format(format!("{}: checksum mismatch", tp.display())));
    }
    let mut trajectories: Vec<Trajectory> = Vec::new();
    for (ln, raw) in bytes.split(|b| *b == b'\n').enumerate() {
        if raw.is_empty() {
            continue;
        }
        let line: Line = serde_json::from_slice(raw)
            .map_err(|e| Error::Format(format!("{} line {}: {e}", tp.display(), ln + 1)))?;
        if trajectories.last().map(|t| t.id) != Some(line.traj) {
            trajectories.push(Trajectory {
                id: line.traj,
                behavior_tier: line.tier,
                seed: 0,
                transitions: Vec::new(),
            });
        }
        let t = trajectories.last_mut().expect("pushed above");
        if line.step != t.transitions.len() {
            return Err(Error::Format(format!("{} line {}: step out of order", tp.display(), ln + 1)));
        }
        t.transitions.push(Transition {
            state: line.state,
            action: line.action,
            reward: line.reward,
            next_state: line.next_state,
            done: line.done,
        });
    }
    let d = Dataset {
        env: EnvKind::from_name(&manifest.env)?,
        tier: Tier::from_name(&manifest.tier)?,
        seed: manifest.seed,
        trajectories,
    };
    if d.num_transitions() != manifest.transition_count || d.trajectories.len() != manifest.trajectory_count {
        return Err(Error::Format(format!("{}: counts disagree with manifest", tp.display())));
    }
    if let Some(bad) = d.trajectories.iter().find(|t| !t.is_chained()) {
        return Err(Error::Format(format!("trajectory {} is not chained", bad.id)));
    }
    Ok((d, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::dataset::{generate_dataset, MixRatio};

    #[test]
    fn write_read_round_trip_and_determinism() {
        let dir = tempfile::tempdir().unwrap();
        let d = generate_dataset(EnvKind::Pendulum, Tier::Medium, 450, 3, MixRatio::default()).unwrap();
        let m = write_dataset(&d, dir.path(), "a", None).unwrap();
        let (back, m2) = read_dataset(dir.path(), "a").unwrap();
        assert_eq!(m, m2);
        assert_eq!(back.trajectories.len(), d.trajectories.len());
        for (x, y) in back.trajectories.iter().zip(&d.trajectories) {
            assert_eq!(x.transitions, y.transitions);
        }
        let d2 = generate_dataset(EnvKind::Pendulum, Tier::Medium, 450, 3, MixRatio::default()).unwrap();
        write_dataset(&d2, dir.path(), "b", None).unwrap();
        let a = fs::read(transitions_path(dir.path(), "a")).unwrap();
        let b = fs::read(transitions_path(dir.path(), "b")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn tampering_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let d = generate_dataset(EnvKind::Reacher, Tier::Random, 50, 3, MixRatio::default()).unwrap();
        write_dataset(&d, dir.path(), "x", None).unwrap();
        let p = transitions_path(dir.path(), "x");
        let mut bytes = fs::read(&p).unwrap();
        bytes.push(b'\n');
        fs::write(&p, bytes).unwrap();
        assert!(read_dataset(dir.path(), "x").is_err());
        assert!(matches!(read_dataset(dir.path(), "missing"), Err(Error::MissingArtifact(_))));
    }
}
