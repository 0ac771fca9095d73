//! `dass train`: one training run with its metric log, checkpoint and final
//! evaluation report.

use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use dass::data::Corpus;
use dass::eval::{evaluate_model, EvalReport};
use dass::model::{Checkpoint, DassModel};
use dass::train::{train_loop_until, EpochRecord, Trainer};
use dass::RunConfig;

use super::{load_config, load_corpus, report_summary, write_report};
use crate::run::{create_run_dir, RunManifest};
use crate::TrainArgs;

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const CHECKPOINT_FILE: &str = "checkpoint.dckpt";
pub const CONFIG_FILE: &str = "config.toml";

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub run_dir: PathBuf,
    pub checkpoint: PathBuf,
    pub metrics: PathBuf,
    /// Records of the epochs run by this invocation.
    pub records: Vec<EpochRecord>,
    pub report: EvalReport,
    pub model: DassModel,
}

pub fn cmd_train(args: &TrainArgs, root: &Path) -> Result<TrainOutcome> {
    if let Some(ckpt) = &args.resume {
        return resume(ckpt, args.stop_after);
    }
    let mut config = load_config(&args.common)?;
    if args.no_aux {
        config.train.aux = false;
    }
    if args.no_sff {
        config.model.sff = false;
    }
    if let Some(dir) = &args.corpus {
        config.data.corpus_dir = Some(dir.clone());
    }
    config.validate()?;
    let (corpus, manifest) = load_corpus(&config, None)?;
    let run_dir = create_run_dir(root, "train")?;
    train_in(&config, &corpus, &manifest.content_hash(), &run_dir, None, args.stop_after)
}

/// Trains under `run_dir`, from scratch or continuing `resume_from`, for at
/// most `stop_after` epochs.
pub fn train_in(
    config: &RunConfig,
    corpus: &Corpus,
    corpus_hash: &str,
    run_dir: &Path,
    resume_from: Option<&Checkpoint>,
    stop_after: Option<usize>,
) -> Result<TrainOutcome> {
    let table = config.data.class_table()?;
    let (seg, det) = config.data.partial_views(corpus)?;
    let mut trainer = match resume_from {
        Some(ck) => Trainer::resume(ck, &seg, &det)?,
        None => {
            let mut t = Trainer::new(config.model.clone(), config.train.clone(), &seg, &det)?;
            t.extra_meta.insert("data".into(), serde_json::to_value(&config.data)?);
            t.extra_meta.insert("eval".into(), serde_json::to_value(&config.eval)?);
            t.extra_meta.insert("corpus_hash".into(), corpus_hash.into());
            t
        }
    };
    log::info!(
        "training {} parameters for {} epochs ({} steps per epoch) in {}",
        trainer.model.param_count(),
        trainer.config.epochs,
        trainer.steps_per_epoch(),
        run_dir.display()
    );

    let metrics = run_dir.join(METRICS_FILE);
    let checkpoint = run_dir.join(CHECKPOINT_FILE);
    let mut log = open_log(&metrics, trainer.epoch)?;
    let mut last_report: Option<EvalReport> = None;
    let eval = |m: &DassModel, _epoch: usize| {
        let r = evaluate_model(m, &corpus.test, &table, &config.eval)?;
        let summary = report_summary(&r);
        last_report = Some(r);
        Ok(summary)
    };
    let stop_epoch = stop_after.map_or(usize::MAX, |n| trainer.epoch.saturating_add(n));
    let records = train_loop_until(&mut trainer, &mut log, eval, Some(&checkpoint), stop_epoch)?;
    log.flush()?;
    if !checkpoint.exists() {
        trainer.checkpoint().write(&checkpoint)?;
    }
    let report = match last_report {
        Some(r) => r,
        None => evaluate_model(&trainer.model, &corpus.test, &table, &config.eval)?,
    };

    let mut effective = config.clone();
    effective.model = trainer.model.config.clone();
    effective.train = trainer.config.clone();
    let mut rm = RunManifest::new("train", &effective);
    rm.corpus_hash = Some(corpus_hash.to_string());
    let config_path = run_dir.join(CONFIG_FILE);
    crate::run::write_file(&config_path, effective.to_toml().as_bytes())?;
    rm.artifact("config", &config_path);
    rm.artifact("metrics", &metrics);
    rm.artifact("checkpoint", &checkpoint);
    write_report(run_dir, &report, &mut rm)?;
    rm.write(run_dir)?;
    println!("{}", report.to_text());
    Ok(TrainOutcome {
        run_dir: run_dir.to_path_buf(),
        checkpoint,
        metrics,
        records,
        report,
        model: trainer.model,
    })
}

/// Opens the metric log keeping the first `epochs` records.
fn open_log(path: &Path, epochs: usize) -> Result<std::io::BufWriter<std::fs::File>> {
    let kept: Vec<String> = if epochs > 0 {
        let f = std::fs::File::open(path).with_context(|| format!("reading metric log {}", path.display()))?;
        let lines: Vec<String> = BufReader::new(f).lines().collect::<std::io::Result<_>>()?;
        if lines.len() < epochs {
            return Err(dass::Error::Data(format!(
                "metric log {} has {} records, the checkpoint is at epoch {epochs}",
                path.display(),
                lines.len()
            ))
            .into());
        }
        lines.into_iter().take(epochs).collect()
    } else {
        Vec::new()
    };
    let f = OpenOptions::new()
        .create(true)
        .write(true)
        .truncate(true)
        .open(path)
        .with_context(|| format!("opening metric log {}", path.display()))?;
    let mut w = std::io::BufWriter::new(f);
    for l in kept {
        writeln!(w, "{l}")?;
    }
    Ok(w)
}

/// The run configuration stored in a checkpoint written by `train`.
pub fn config_from_checkpoint(ck: &Checkpoint) -> Result<RunConfig> {
    let field = |k: &str| {
        ck.meta
            .get(k)
            .cloned()
            .ok_or_else(|| dass::Error::Checkpoint(format!("checkpoint metadata lacks `{k}`")))
    };
    let bad = |e: serde_json::Error| dass::Error::Checkpoint(e.to_string());
    Ok(RunConfig {
        data: serde_json::from_value(field("data")?).map_err(bad)?,
        model: serde_json::from_value(field("model")?).map_err(bad)?,
        train: serde_json::from_value(field("train")?).map_err(bad)?,
        eval: serde_json::from_value(field("eval")?).map_err(bad)?,
    })
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::read(path).with_context(|| format!("reading checkpoint {}", path.display()))
}

fn resume(path: &Path, stop_after: Option<usize>) -> Result<TrainOutcome> {
    let ck = read_checkpoint(path)?;
    let config = config_from_checkpoint(&ck)?;
    let (corpus, manifest) = load_corpus(&config, None)?;
    let hash = manifest.content_hash();
    if ck.meta.get("corpus_hash").and_then(|v| v.as_str()) != Some(hash.as_str()) {
        return Err(dass::Error::Data("the corpus differs from the one the checkpoint was trained on".into()).into());
    }
    let run_dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    train_in(&config, &corpus, &hash, &run_dir, Some(&ck), stop_after)
}
