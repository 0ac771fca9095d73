pub mod eval;
pub mod experiment;
pub mod gen_data;
pub mod infer;
pub mod train;

use std::path::Path;

use anyhow::{Context, Result};
use dass::data::{corpus_manifest, read_corpus, ClassTable, Corpus, CorpusManifest};
use dass::eval::EvalReport;
use dass::RunConfig;

use crate::ConfigArgs;

/// Loads the configuration file (or defaults) and applies command-line
/// overrides, then validates the result.
pub fn load_config(args: &ConfigArgs) -> Result<RunConfig> {
    let mut c = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(name) = &args.classes {
        c.data.classes = name.clone();
        c.model.num_classes = dass::config::class_table(name)?.len();
    }
    if let Some(n) = args.points_per_scene {
        c.train.points_per_scene = n;
        c.eval.points_per_scene = n;
    }
    if let Some(d) = args.sff_dim {
        c.model.sff_dim = d;
    }
    if let Some(s) = args.seed {
        c.train.seed = s;
    }
    if let Some(e) = args.epochs {
        c.train.epochs = e;
    }
    c.validate()?;
    Ok(c)
}

/// The corpus a run consumes: read from `dir` (flag first, then the data
/// configuration) or generated from the configuration.
pub fn load_corpus(config: &RunConfig, dir: Option<&Path>) -> Result<(Corpus, CorpusManifest)> {
    let dir = dir.or(config.data.corpus_dir.as_deref());
    let (corpus, manifest) = match dir {
        Some(d) => read_corpus(d).with_context(|| format!("reading corpus {}", d.display()))?,
        None => {
            let c = Corpus::generate(&config.data.corpus)?;
            let m = corpus_manifest(&c);
            (c, m)
        }
    };
    check_class_table(&manifest, &config.data.class_table()?)?;
    Ok((corpus, manifest))
}

/// The corpus labels must use the configured class table.
pub fn check_class_table(manifest: &CorpusManifest, table: &ClassTable) -> Result<()> {
    if manifest.class_names != table.names {
        return Err(dass::Error::Config(format!(
            "corpus labels use classes [{}], the configuration expects [{}]",
            manifest.class_names.join(", "),
            table.names.join(", ")
        ))
        .into());
    }
    Ok(())
}

/// The compact metric summary logged with training epochs.
pub fn report_summary(r: &EvalReport) -> serde_json::Value {
    serde_json::json!({
        "miou": r.miou,
        "accuracy": r.accuracy,
        "per_class_iou": r.class_names.iter().zip(&r.per_class_iou).map(|(n, v)| (n.clone(), serde_json::json!(v))).collect::<serde_json::Map<_, _>>(),
        "recall": r.recall,
        "recall_3d": r.recall_3d,
    })
}

/// Writes `report.json` and `report.txt` into `dir`.
pub fn write_report(dir: &Path, report: &EvalReport, manifest: &mut crate::run::RunManifest) -> Result<()> {
    let json = dir.join("report.json");
    crate::run::write_json(&json, report)?;
    let text = dir.join("report.txt");
    crate::run::write_file(&text, report.to_text().as_bytes())?;
    manifest.artifact("report_json", &json);
    manifest.artifact("report_text", &text);
    Ok(())
}
