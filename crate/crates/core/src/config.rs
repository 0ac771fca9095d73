//! The run configuration: one TOML file with `data`, `model`, `train` and
//! `eval` sections. Every section may be partial; omitted keys take their
//! defaults, unknown keys are errors.
//!
//! ```toml
//! [data]
//! classes = "synthetic"
//! seg_fraction = 0.5
//!
//! [data.corpus]
//! base_seed = 7
//! train_scenes = 32
//! test_scenes = 16
//!
//! [data.corpus.generator]
//! trucks_mean = 0.5
//!
//! [model]
//! sff_dim = 4
//!
//! [train]
//! epochs = 40
//! points_per_scene = 2048
//!
//! [eval]
//! recall_3d = true
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{make_partial_views, read_corpus, ClassTable, Corpus, CorpusConfig, DetView, SegView};
use crate::error::{Error, Result};
use crate::eval::EvalConfig;
use crate::model::ModelConfig;
use crate::train::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Class table: `synthetic` or `semantickitti`.
    pub classes: String,
    pub corpus: CorpusConfig,
    /// Read the corpus from this directory instead of generating it.
    pub corpus_dir: Option<PathBuf>,
    /// Fraction of training scenes that become segmentation views; the rest
    /// become detection views.
    pub seg_fraction: f64,
    pub split_seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            classes: "synthetic".into(),
            corpus: CorpusConfig::default(),
            corpus_dir: None,
            seg_fraction: 0.5,
            split_seed: 0,
        }
    }
}

impl DataConfig {
    pub fn class_table(&self) -> Result<ClassTable> {
        class_table(&self.classes)
    }

    /// Loads or generates the corpus.
    pub fn corpus(&self) -> Result<Corpus> {
        match &self.corpus_dir {
            Some(dir) => Ok(read_corpus(dir)?.0),
            None => Corpus::generate(&self.corpus),
        }
    }

    /// Splits the training scenes into disjoint segmentation and detection
    /// views.
    pub fn partial_views(&self, corpus: &Corpus) -> Result<(Vec<SegView>, Vec<DetView>)> {
        make_partial_views(&corpus.train, self.seg_fraction, self.split_seed, &self.class_table()?)
    }
}

/// Class table by name.
pub fn class_table(name: &str) -> Result<ClassTable> {
    match name {
        "synthetic" => Ok(ClassTable::synthetic()),
        "semantickitti" => Ok(ClassTable::semantickitti()),
        other => Err(Error::Config(format!(
            "unknown class table `{other}` (expected `synthetic` or `semantickitti`)"
        ))),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// Checks every section and their mutual consistency.
    pub fn validate(&self) -> Result<()> {
        let table = self.data.class_table()?;
        if table.len() != self.model.num_classes {
            return Err(Error::Config(format!(
                "class table `{}` has {} classes but the model is configured for {}",
                self.data.classes,
                table.len(),
                self.model.num_classes
            )));
        }
        if !(self.data.seg_fraction > 0.0 && self.data.seg_fraction < 1.0) {
            return Err(Error::Config("data.seg_fraction must lie in (0, 1)".into()));
        }
        self.data.corpus.generator.validate()?;
        self.model.validate()?;
        self.train.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = RunConfig::from_toml("").unwrap();
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn documented_example_parses() {
        let doc = include_str!("config.rs");
        let example: String = doc
            .lines()
            .skip_while(|l| !l.starts_with("//! ```toml"))
            .skip(1)
            .take_while(|l| !l.starts_with("//! ```"))
            .map(|l| l.trim_start_matches("//!").trim_start())
            .collect::<Vec<_>>()
            .join("\n");
        let c = RunConfig::from_toml(&example).unwrap();
        assert_eq!(c.train.epochs, 40);
        assert_eq!(c.data.corpus.base_seed, 7);
        assert!(c.eval.recall_3d);
    }

    #[test]
    fn roundtrip() {
        let mut c = RunConfig::default();
        c.train.seed = 3;
        c.model.sff_dim = 6;
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn unknown_keys_and_inconsistencies_are_rejected() {
        assert!(matches!(RunConfig::from_toml("[train]\nepochz = 3\n"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_toml("bogus = 1\n"), Err(Error::Config(_))));
        assert!(matches!(
            RunConfig::from_toml("[data]\nclasses = \"semantickitti\"\n"),
            Err(Error::Config(_))
        ));
        assert!(matches!(RunConfig::from_toml("[data]\nclasses = \"nope\"\n"), Err(Error::Config(_))));
        assert!(RunConfig::from_toml("[train]\nbatch_size = 0\n").is_err());
    }
}
