//! `dass gen-data`: writes a synthetic corpus and reports the class
//! frequencies that drive the segmentation class weights.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Result;
use dass::data::{write_corpus, ClassTable, Corpus, Label};
use dass::train::class_weights_from_frequency;

use super::load_config;
use crate::run::{create_run_dir, RunManifest};
use crate::GenDataArgs;

#[derive(Debug, Clone)]
pub struct GenDataOutcome {
    pub run_dir: PathBuf,
    pub corpus_dir: PathBuf,
    pub corpus_hash: String,
    /// Training scenes whose detection view has no box in the field of view.
    pub empty_det_views: usize,
    pub frequency_table: String,
}

pub fn cmd_gen_data(args: &GenDataArgs, root: &Path) -> Result<GenDataOutcome> {
    let config = load_config(&args.common)?;
    let table = config.data.class_table()?;
    let corpus = Corpus::generate(&config.data.corpus)?;
    let run_dir = create_run_dir(root, "gen-data")?;
    let corpus_dir = args.out_dir.clone().unwrap_or_else(|| run_dir.join("corpus"));
    let manifest = write_corpus(&corpus, &corpus_dir)?;
    super::check_class_table(&manifest, &table)?;

    let empty_det_views = corpus
        .train
        .iter()
        .filter(|s| s.det_view(&table).fov_crop(&config.train.fov).boxes.is_empty())
        .count();
    if empty_det_views > 0 {
        log::warn!(
            "det view has no boxes in {empty_det_views} of {} training scenes",
            corpus.train.len()
        );
    }
    let frequency_table = frequency_table(&corpus, &table, &config.train.fov);
    print!("{frequency_table}");
    let hash = manifest.content_hash();
    println!("corpus {} ({} train, {} test scenes), manifest hash {hash}", corpus_dir.display(), corpus.train.len(), corpus.test.len());

    let mut rm = RunManifest::new("gen-data", &config);
    rm.corpus_hash = Some(hash.clone());
    rm.artifact("corpus", &corpus_dir);
    let freq_path = run_dir.join("class_frequency.txt");
    crate::run::write_file(&freq_path, frequency_table.as_bytes())?;
    rm.artifact("class_frequency", &freq_path);
    rm.write(&run_dir)?;
    Ok(GenDataOutcome {
        run_dir,
        corpus_dir,
        corpus_hash: hash,
        empty_det_views,
        frequency_table,
    })
}

/// Point counts per class over the field-of-view crop of the training split,
/// with the resulting inverse-frequency weights.
pub fn frequency_table(corpus: &Corpus, table: &ClassTable, fov: &dass::data::FovConfig) -> String {
    let labels: Vec<Vec<Label>> = corpus.train.iter().map(|s| s.seg_view().fov_crop(fov).labels).collect();
    let k = table.len();
    let mut counts = vec![0usize; k];
    for l in labels.iter().flatten() {
        if let Some(c) = counts.get_mut(*l as usize) {
            *c += 1;
        }
    }
    let total: usize = counts.iter().sum();
    let weights = class_weights_from_frequency(labels.iter().map(|l| l.as_slice()), k);
    let mut s = String::new();
    let _ = writeln!(s, "{:<16} {:>10} {:>9} {:>8}", "class", "points", "share %", "weight");
    for c in 0..k {
        let share = if total > 0 { 100.0 * counts[c] as f64 / total as f64 } else { 0.0 };
        let _ = writeln!(s, "{:<16} {:>10} {:>9.3} {:>8.3}", table.name(c as Label), counts[c], share, weights[c]);
    }
    s
}
