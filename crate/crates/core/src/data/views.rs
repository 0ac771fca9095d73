//! Partially annotated views of fully annotated scenes.
//!
//! A segmentation view carries per-point labels and no boxes; a detection
//! view carries the boxes of the detected class and no labels. The hidden
//! annotation is dropped when the view is built, so nothing downstream can
//! reach it.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cloud::{ClassTable, Label, PointCloud, Scene};
use crate::error::{Error, Result};
use crate::geom::Box7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViewKind {
    SegOnly,
    DetOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegView {
    pub cloud: PointCloud,
    pub labels: Vec<Label>,
    pub source_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetView {
    pub cloud: PointCloud,
    pub boxes: Vec<Box7>,
    pub source_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PartialView {
    Seg(SegView),
    Det(DetView),
}

impl PartialView {
    pub fn kind(&self) -> ViewKind {
        match self {
            PartialView::Seg(_) => ViewKind::SegOnly,
            PartialView::Det(_) => ViewKind::DetOnly,
        }
    }

    pub fn cloud(&self) -> &PointCloud {
        match self {
            PartialView::Seg(v) => &v.cloud,
            PartialView::Det(v) => &v.cloud,
        }
    }
}

impl Scene {
    pub fn seg_view(&self) -> SegView {
        SegView {
            cloud: self.cloud.clone(),
            labels: self.labels.clone(),
            source_seed: self.meta.seed,
        }
    }

    /// Detection view keeping only boxes of `table.detect_class`.
    pub fn det_view(&self, table: &ClassTable) -> DetView {
        DetView {
            cloud: self.cloud.clone(),
            boxes: self
                .boxes
                .iter()
                .filter(|b| b.class == table.detect_class)
                .map(|b| b.bbox)
                .collect(),
            source_seed: self.meta.seed,
        }
    }
}

/// Splits a corpus into disjoint segmentation and detection views.
/// `seg_ratio` is the fraction of scenes that become segmentation views.
pub fn make_partial_views(
    corpus: &[Scene],
    seg_ratio: f64,
    seed: u64,
    table: &ClassTable,
) -> Result<(Vec<SegView>, Vec<DetView>)> {
    if !(seg_ratio > 0.0 && seg_ratio < 1.0) {
        return Err(Error::Config(format!(
            "split ratio {seg_ratio} must lie in (0, 1)"
        )));
    }
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_seg = (seg_ratio * corpus.len() as f64).round() as usize;
    let (seg_idx, det_idx) = order.split_at(n_seg);
    let mut seg_idx = seg_idx.to_vec();
    let mut det_idx = det_idx.to_vec();
    seg_idx.sort_unstable();
    det_idx.sort_unstable();
    Ok((
        seg_idx.iter().map(|&i| corpus[i].seg_view()).collect(),
        det_idx.iter().map(|&i| corpus[i].det_view(table)).collect(),
    ))
}
