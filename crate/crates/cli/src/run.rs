//! Run directories and their manifests.
//!
//! Every command writes under a fresh timestamped directory below the output
//! root (`--out`, else `$DASS_OUTPUT_ROOT`, else `./runs`) and leaves a
//! `manifest.json` there describing how to reproduce it.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use dass::RunConfig;
use serde::{Deserialize, Serialize};

pub const OUTPUT_ROOT_ENV: &str = "DASS_OUTPUT_ROOT";
pub const MANIFEST_FILE: &str = "manifest.json";

/// The output root: explicit flag, then environment, then `./runs`.
pub fn output_root(flag: Option<&Path>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => PathBuf::from("runs"),
    }
}

/// Creates `<root>/<verb>-<timestamp>[-n]`, never reusing a directory.
pub fn create_run_dir(root: &Path, verb: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(root).with_context(|| format!("creating output root {}", root.display()))?;
    let stamp = chrono::Local::now().format("%Y%m%d-%H%M%S");
    let base = format!("{verb}-{stamp}");
    for n in 0.. {
        let name = if n == 0 { base.clone() } else { format!("{base}-{n}") };
        let dir = root.join(name);
        match std::fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e).with_context(|| format!("creating run directory {}", dir.display())),
        }
    }
    unreachable!("unbounded suffix search")
}

/// Every seed that influences a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub corpus: u64,
    pub split: u64,
    pub train: u64,
    pub eval_sample: u64,
}

impl Seeds {
    pub fn of(config: &RunConfig) -> Self {
        Seeds {
            corpus: config.data.corpus.base_seed,
            split: config.data.split_seed,
            train: config.train.seed,
            eval_sample: config.eval.sample_seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Full command line as invoked.
    pub argv: Vec<String>,
    pub created: String,
    pub version: String,
    /// The effective configuration after command-line overrides.
    pub config: RunConfig,
    pub seeds: Seeds,
    /// Content hash of the corpus manifest the run consumed or produced.
    pub corpus_hash: Option<String>,
    pub inputs: BTreeMap<String, PathBuf>,
    pub artifacts: BTreeMap<String, PathBuf>,
}

impl RunManifest {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        RunManifest {
            command: command.to_string(),
            argv: std::env::args().collect(),
            created: chrono::Local::now().to_rfc3339(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.clone(),
            seeds: Seeds::of(config),
            corpus_hash: None,
            inputs: BTreeMap::new(),
            artifacts: BTreeMap::new(),
        }
    }

    pub fn input(&mut self, name: &str, path: &Path) {
        self.inputs.insert(name.to_string(), path.to_path_buf());
    }

    pub fn artifact(&mut self, name: &str, path: &Path) {
        self.artifacts.insert(name.to_string(), path.to_path_buf());
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        write_json(&path, self)?;
        Ok(path)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("value serializes");
    bytes.push(b'\n');
    write_file(path, &bytes)
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_dirs_are_fresh() {
        let root = tempfile::tempdir().unwrap();
        let a = create_run_dir(root.path(), "train").unwrap();
        let b = create_run_dir(root.path(), "train").unwrap();
        assert_ne!(a, b);
        assert!(a.file_name().unwrap().to_str().unwrap().starts_with("train-"));
    }

    #[test]
    fn manifest_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = RunManifest::new("train", &RunConfig::default());
        m.artifact("checkpoint", Path::new("x/checkpoint.dckpt"));
        m.write(dir.path()).unwrap();
        assert_eq!(RunManifest::read(dir.path()).unwrap(), m);
    }

    #[test]
    fn explicit_root_wins() {
        assert_eq!(output_root(Some(Path::new("/tmp/x"))), PathBuf::from("/tmp/x"));
    }
}
