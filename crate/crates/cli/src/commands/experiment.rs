//! `dass experiment`: the ablation matrix. Each cell is trained and
//! evaluated once per seed in its own directory; medians over seeds are
//! tabulated and plotted.
//!
//! Cells: `mtl_sff` (joint training with semantic feature fusion),
//! `mtl_nosff` (joint training without it) and `baseline` (segmentation
//! only; fusion has nothing to feed without a proposal head).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Result;
use dass::data::write_corpus;
use dass::eval::EvalReport;
use dass::RunConfig;
use serde::{Deserialize, Serialize};

use super::train::train_in;
use super::{load_config, load_corpus};
use crate::plot;
use crate::run::{create_run_dir, RunManifest};
use crate::ExperimentArgs;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Cell {
    #[value(name = "mtl_sff")]
    MtlSff,
    #[value(name = "mtl_nosff")]
    MtlNoSff,
    #[value(name = "baseline")]
    Baseline,
}

impl Cell {
    pub fn name(self) -> &'static str {
        match self {
            Cell::MtlSff => "mtl_sff",
            Cell::MtlNoSff => "mtl_nosff",
            Cell::Baseline => "baseline",
        }
    }

    /// The cell's configuration on top of `base`.
    pub fn apply(self, base: &RunConfig) -> RunConfig {
        let mut c = base.clone();
        match self {
            Cell::MtlSff => {
                c.train.aux = true;
                c.model.det_head = true;
                c.model.sff = true;
            }
            Cell::MtlNoSff => {
                c.train.aux = true;
                c.model.det_head = true;
                c.model.sff = false;
            }
            Cell::Baseline => c.train.aux = false,
        }
        c
    }
}

/// One metric of one cell across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub cell: Cell,
    pub metric: String,
    pub values: Vec<Option<f64>>,
    pub median: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellRun {
    pub cell: Cell,
    pub seed: u64,
    pub run_dir: PathBuf,
    pub report: EvalReport,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub run_dir: PathBuf,
    pub runs: Vec<CellRun>,
    pub rows: Vec<AggregateRow>,
    pub table: String,
}

impl ExperimentOutcome {
    pub fn median(&self, cell: Cell, metric: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.cell == cell && r.metric == metric)
            .and_then(|r| r.median)
    }
}

/// Median of the present values; the mean of the middle pair for even
/// counts.
pub fn median(values: &[Option<f64>]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().flatten().copied().collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

pub fn iou_metric(class: &str) -> String {
    format!("iou:{class}")
}

pub fn recall_metric(threshold: f64) -> String {
    format!("recall@{threshold}")
}

/// Metric names and their values in a report, in table order.
pub fn report_metrics(r: &EvalReport) -> Vec<(String, Option<f64>)> {
    let mut out = vec![("miou".to_string(), r.miou), ("accuracy".to_string(), r.accuracy)];
    for (name, v) in r.class_names.iter().zip(&r.per_class_iou) {
        out.push((iou_metric(name), *v));
    }
    for (i, t) in r.thresholds.iter().enumerate() {
        out.push((recall_metric(*t), r.recall.as_ref().map(|rc| rc[i])));
    }
    out
}

pub fn cmd_experiment(args: &ExperimentArgs, root: &Path) -> Result<ExperimentOutcome> {
    let base = load_config(&args.common)?;
    if args.cells.is_empty() || args.seeds.is_empty() {
        return Err(dass::Error::Config("an experiment needs at least one cell and one seed".into()).into());
    }
    let mut base = base;
    if let Some(dir) = &args.corpus {
        base.data.corpus_dir = Some(dir.clone());
    }
    let (corpus, manifest) = load_corpus(&base, None)?;
    let hash = manifest.content_hash();
    let run_dir = create_run_dir(root, "experiment")?;
    let mut rm = RunManifest::new("experiment", &base);
    rm.corpus_hash = Some(hash.clone());
    if base.data.corpus_dir.is_none() {
        let dir = run_dir.join("corpus");
        write_corpus(&corpus, &dir)?;
        rm.artifact("corpus", &dir);
    }

    let mut runs = Vec::new();
    for &cell in &args.cells {
        for &seed in &args.seeds {
            let mut cfg = cell.apply(&base);
            cfg.train.seed = seed;
            cfg.validate()?;
            let dir = run_dir.join(cell.name()).join(format!("seed-{seed}"));
            std::fs::create_dir_all(&dir)?;
            log::info!("experiment cell {} seed {seed}", cell.name());
            let out = train_in(&cfg, &corpus, &hash, &dir, None, None)?;
            runs.push(CellRun {
                cell,
                seed,
                run_dir: dir,
                report: out.report,
            });
        }
    }

    let rows = aggregate(&args.cells, &runs);
    let table = render_table(&args.cells, &rows);
    print!("{table}");
    let json = run_dir.join("aggregate.json");
    crate::run::write_json(&json, &rows)?;
    let text = run_dir.join("aggregate.txt");
    crate::run::write_file(&text, table.as_bytes())?;
    let runs_json = run_dir.join("runs.json");
    crate::run::write_json(&runs_json, &runs)?;
    rm.artifact("aggregate_json", &json);
    rm.artifact("aggregate_text", &text);
    rm.artifact("runs", &runs_json);
    for (name, path) in write_plots(&run_dir, &args.cells, &runs, &rows)? {
        rm.artifact(&name, &path);
    }
    rm.write(&run_dir)?;
    Ok(ExperimentOutcome {
        run_dir,
        runs,
        rows,
        table,
    })
}

/// One row per cell and metric, values in seed order.
pub fn aggregate(cells: &[Cell], runs: &[CellRun]) -> Vec<AggregateRow> {
    let Some(first) = runs.first() else {
        return Vec::new();
    };
    let names: Vec<String> = report_metrics(&first.report).into_iter().map(|(n, _)| n).collect();
    let mut rows = Vec::new();
    for &cell in cells {
        let per_run: Vec<Vec<(String, Option<f64>)>> = runs
            .iter()
            .filter(|r| r.cell == cell)
            .map(|r| report_metrics(&r.report))
            .collect();
        for name in &names {
            let values: Vec<Option<f64>> = per_run
                .iter()
                .map(|m| m.iter().find(|(n, _)| n == name).and_then(|(_, v)| *v))
                .collect();
            rows.push(AggregateRow {
                cell,
                metric: name.clone(),
                median: median(&values),
                values,
            });
        }
    }
    rows
}

fn render_table(cells: &[Cell], rows: &[AggregateRow]) -> String {
    let mut s = String::new();
    let _ = write!(s, "{:<22}", "median");
    for c in cells {
        let _ = write!(s, " {:>10}", c.name());
    }
    let has_baseline = cells.contains(&Cell::Baseline);
    let mtl = cells.iter().copied().find(|c| *c != Cell::Baseline);
    if let (true, Some(m)) = (has_baseline, mtl) {
        let _ = write!(s, " {:>14}", format!("{}-base", m.name()));
    }
    s.push('\n');
    let metrics: Vec<&str> = rows
        .iter()
        .filter(|r| Some(r.cell) == cells.first().copied())
        .map(|r| r.metric.as_str())
        .collect();
    let get = |cell: Cell, metric: &str| {
        rows.iter()
            .find(|r| r.cell == cell && r.metric == metric)
            .and_then(|r| r.median)
    };
    let fmt = |v: Option<f64>| v.map(|v| format!("{:.2}", 100.0 * v)).unwrap_or_else(|| "-".into());
    for m in metrics {
        let _ = write!(s, "{m:<22}");
        for &c in cells {
            let _ = write!(s, " {:>10}", fmt(get(c, m)));
        }
        if let (true, Some(mc)) = (has_baseline, mtl) {
            let delta = get(mc, m).zip(get(Cell::Baseline, m)).map(|(a, b)| a - b);
            let _ = write!(s, " {:>14}", delta.map(|d| format!("{:+.2}", 100.0 * d)).unwrap_or_else(|| "-".into()));
        }
        s.push('\n');
    }
    s
}

fn write_plots(dir: &Path, cells: &[Cell], runs: &[CellRun], rows: &[AggregateRow]) -> Result<Vec<(String, PathBuf)>> {
    let Some(first) = runs.first() else {
        return Ok(Vec::new());
    };
    let get = |cell: Cell, metric: &str| {
        rows.iter()
            .find(|r| r.cell == cell && r.metric == metric)
            .and_then(|r| r.median)
    };
    let classes = first.report.class_names.clone();
    let iou_series: Vec<plot::Series> = cells
        .iter()
        .map(|&c| (c.name().to_string(), classes.iter().map(|n| get(c, &iou_metric(n))).collect()))
        .collect();
    let bars = dir.join("class_iou.svg");
    plot::grouped_bars(&bars, "Median per-class IoU", &classes, &iou_series)?;

    let thresholds = first.report.thresholds.clone();
    let recall_series: Vec<plot::Series> = cells
        .iter()
        .filter(|&&c| c != Cell::Baseline)
        .map(|&c| (c.name().to_string(), thresholds.iter().map(|t| get(c, &recall_metric(*t))).collect()))
        .collect();
    let curves = dir.join("recall.svg");
    plot::lines(&curves, "Median proposal recall", "IoU threshold", "recall", &thresholds, &recall_series)?;
    Ok(vec![("class_iou_plot".into(), bars), ("recall_plot".into(), curves)])
}
