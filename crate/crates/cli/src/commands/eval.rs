//! `dass eval`: segmentation and proposal metrics of a checkpoint on the
//! test split.

use std::path::{Path, PathBuf};

use anyhow::Result;
use dass::data::Scene;
use dass::eval::{eval_cloud, evaluate_model, EvalConfig, EvalReport};
use dass::model::DassModel;
use dass::RunConfig;

use super::train::{config_from_checkpoint, read_checkpoint};
use super::{load_corpus, write_report};
use crate::run::{create_run_dir, RunManifest};
use crate::EvalArgs;

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub run_dir: PathBuf,
    pub report: EvalReport,
    /// Scenes on which the detached model's segmentation output was compared
    /// with the full model's.
    pub detach_checked: usize,
}

pub fn cmd_eval(args: &EvalArgs, root: &Path) -> Result<EvalOutcome> {
    let ck = read_checkpoint(&args.checkpoint)?;
    let mut config = config_from_checkpoint(&ck)?;
    if let Some(p) = &args.config {
        config.eval = RunConfig::load(p)?.eval;
    }
    if let Some(n) = args.points_per_scene {
        config.eval.points_per_scene = n;
    }
    let (corpus, manifest) = load_corpus(&config, args.corpus.as_deref())?;
    let table = config.data.class_table()?;
    let model = DassModel::from_tensors(config.model.clone(), &ck)?;

    let (evaluated, detach_checked) = if args.detach {
        let detached = model.detach_det_head();
        let n = check_detached_outputs(&model, &detached, &corpus.test, &config.eval)?;
        log::info!("detached segmentation output matches the full model on {n} scenes");
        (detached, n)
    } else {
        (model, 0)
    };
    let report = evaluate_model(&evaluated, &corpus.test, &table, &config.eval)?;

    let run_dir = create_run_dir(root, "eval")?;
    let mut rm = RunManifest::new("eval", &config);
    rm.corpus_hash = Some(manifest.content_hash());
    rm.input("checkpoint", &args.checkpoint);
    write_report(&run_dir, &report, &mut rm)?;
    rm.write(&run_dir)?;
    println!("{}", report.to_text());
    Ok(EvalOutcome {
        run_dir,
        report,
        detach_checked,
    })
}

/// Compares segmentation logits of the two models bit for bit on the
/// evaluation clouds of `scenes`; returns the number of scenes compared.
pub fn check_detached_outputs(full: &DassModel, detached: &DassModel, scenes: &[Scene], cfg: &EvalConfig) -> Result<usize> {
    for (i, s) in scenes.iter().enumerate() {
        let v = s.seg_view().fov_crop(&cfg.fov);
        let (cloud, _) = eval_cloud(&v.cloud, None, cfg, i);
        let a = full.predict(&[&cloud])?.remove(0).seg_logits;
        let b = detached.predict(&[&cloud])?.remove(0).seg_logits;
        let same = a.rows == b.rows
            && a.cols == b.cols
            && a.data.iter().zip(&b.data).all(|(x, y)| x.to_bits() == y.to_bits());
        if !same {
            return Err(dass::Error::Numerical(format!(
                "detached model's segmentation output differs from the full model on test scene {i}"
            ))
            .into());
        }
    }
    Ok(scenes.len())
}
