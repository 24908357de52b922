use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::config::Variant;

pub const STAMP: &str = ".stamp";

/// Artifact locations for one seed under the output root.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    pub root: PathBuf,
    pub seed: u64,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>, seed: u64) -> Self {
        Self {
            root: root.into(),
            seed,
        }
    }

    pub fn seed_dir(&self) -> PathBuf {
        self.root.join(format!("seed-{}", self.seed))
    }

    pub fn data_dir(&self) -> PathBuf {
        self.seed_dir().join("data")
    }

    pub fn sim_dir(&self) -> PathBuf {
        self.seed_dir().join("sim")
    }

    pub fn vae_dir(&self) -> PathBuf {
        self.seed_dir().join("vae")
    }

    pub fn synth_dir(&self) -> PathBuf {
        self.seed_dir().join("synth")
    }

    pub fn variant_dir(&self, v: &Variant) -> PathBuf {
        self.seed_dir().join(v.name())
    }

    pub fn world_model(&self) -> PathBuf {
        self.sim_dir().join("world_model.ckpt")
    }

    pub fn vae(&self) -> PathBuf {
        self.vae_dir().join("vae.ckpt")
    }

    pub fn thresholds(&self) -> PathBuf {
        self.synth_dir().join("thresholds.json")
    }

    pub fn policy(&self, v: &Variant) -> PathBuf {
        self.variant_dir(v).join("policy.ckpt")
    }

    pub fn metrics(&self, v: &Variant) -> PathBuf {
        self.variant_dir(v).join("metrics.jsonl")
    }

    pub fn eval(&self, v: &Variant) -> PathBuf {
        self.variant_dir(v).join("eval.json")
    }
}

/// The config hash a directory's artifacts were produced under, if any.
pub fn read_stamp(dir: &Path) -> Result<Option<String>> {
    let p = dir.join(STAMP);
    if !p.exists() {
        return Ok(None);
    }
    fs::read_to_string(&p)
        .map(|s| Some(s.trim().to_string()))
        .map_err(|e| Error::io(&p, e))
}

pub fn write_stamp(dir: &Path, hash: &str) -> Result<()> {
    let p = dir.join(STAMP);
    fs::write(&p, format!("{hash}\n")).map_err(|e| Error::io(&p, e))
}

pub fn clear_stamp(dir: &Path) -> Result<()> {
    let p = dir.join(STAMP);
    if p.exists() {
        fs::remove_file(&p).map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}

/// Fail unless `artifact` exists and its directory was stamped with `expected`.
pub fn require(artifact: &Path, expected: &str) -> Result<()> {
    if !artifact.exists() {
        return Err(Error::MissingArtifact(artifact.to_path_buf()));
    }
    let dir = artifact.parent().unwrap_or(Path::new("."));
    match read_stamp(dir)? {
        Some(found) if found == expected => Ok(()),
        Some(found) => Err(Error::ConfigHashMismatch {
            path: artifact.to_path_buf(),
            expected: expected.to_string(),
            found,
        }),
        None => Err(Error::MissingArtifact(dir.join(STAMP))),
    }
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
