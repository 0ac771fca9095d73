//! `dass infer`: labels one scene and proposes boxes.
//!
//! Input is either a `.dscn` scene from `gen-data` or a KITTI Velodyne `.bin`
//! scan (LiDAR axes). Only points inside the camera field of view are
//! labeled. Outputs:
//!
//! * `<stem>.label` — one little-endian `u32` per input point in SemanticKITTI
//!   layout. The semantic id is the raw SemanticKITTI id for the
//!   `semantickitti` class table and `class + 1` for the synthetic table;
//!   `0` marks points outside the field of view.
//! * `<stem>.txt` — selected proposals as KITTI `label_2` rows (nominal
//!   calibration, score in the last column), when the model has a proposal
//!   head.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use dass::data::{
    cloud_from_lidar, decode_scene, lidar_boxes_to_cam, normalize_reflectance, pack_label, parse_velodyne_bin,
    serialize_kitti_object_labels, serialize_semantickitti_labels, ClassTable, KittiBox, KittiCalib, Label, LabelMap,
    PointCloud, IGNORE_LABEL,
};
use dass::eval::{select_proposals, Predictor, ProposalSet};
use dass::model::DassModel;

use super::train::{config_from_checkpoint, read_checkpoint};
use crate::run::{create_run_dir, RunManifest};
use crate::InferArgs;

#[derive(Debug, Clone)]
pub struct InferOutcome {
    pub run_dir: PathBuf,
    pub label_file: PathBuf,
    pub box_file: Option<PathBuf>,
    /// Predicted class per input point; [`IGNORE_LABEL`] outside the field
    /// of view.
    pub labels: Vec<Label>,
    /// The words written to the label file.
    pub words: Vec<u32>,
    pub proposals: Option<ProposalSet>,
    /// Agreement with the scene's own labels inside the field of view, for
    /// `.dscn` input.
    pub fov_accuracy: Option<f64>,
}

/// Semantic id written for a predicted class.
pub fn semantic_word(table_name: &str, class: Label) -> u32 {
    if class == IGNORE_LABEL {
        return 0;
    }
    let semantic = match table_name {
        "semantickitti" => LabelMap::semantickitti().raw_id(class).unwrap_or(0),
        _ => class + 1,
    };
    pack_label(semantic, 0)
}

fn read_input(path: &Path) -> Result<(PointCloud, Option<Vec<Label>>)> {
    let bytes = std::fs::read(path).map_err(|e| dass::Error::io(path, e))?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("dscn") => {
            let s = decode_scene(&bytes).with_context(|| format!("decoding scene {}", path.display()))?;
            let n = s.cloud.valid_count;
            let mut labels = s.labels;
            labels.truncate(n);
            Ok((PointCloud::new(s.cloud.valid().to_vec()), Some(labels)))
        }
        Some("bin") => {
            let c = parse_velodyne_bin(&bytes).with_context(|| format!("parsing scan {}", path.display()))?;
            Ok((cloud_from_lidar(c), None))
        }
        _ => Err(dass::Error::Data(format!(
            "{}: expected a .dscn scene or a .bin Velodyne scan",
            path.display()
        ))
        .into()),
    }
}

fn kitti_class(table: &ClassTable) -> String {
    let name = table.name(table.detect_class);
    let mut c = name.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

pub fn cmd_infer(args: &InferArgs, root: &Path) -> Result<InferOutcome> {
    let ck = read_checkpoint(&args.checkpoint)?;
    let config = config_from_checkpoint(&ck)?;
    let table = config.data.class_table()?;
    let model = DassModel::from_tensors(config.model.clone(), &ck)?;
    let (cloud, gt) = read_input(&args.input)?;

    let fov = &config.eval.fov;
    let inside: Vec<usize> = (0..cloud.valid_count).filter(|&i| fov.contains(cloud.xyz(i))).collect();
    let mut labels = vec![IGNORE_LABEL; cloud.valid_count];
    let mut proposals = None;
    if !inside.is_empty() {
        let mut crop = PointCloud::new(inside.iter().map(|&i| cloud.points[i]).collect());
        normalize_reflectance(&mut crop);
        let pred = model.segment(&crop)?;
        for (k, &i) in inside.iter().enumerate() {
            labels[i] = pred[k];
        }
        if let Some(raw) = model.propose(&crop)? {
            proposals = Some(select_proposals(&raw, &config.eval.proposals));
        }
    } else if model.has_det_head() {
        proposals = Some(ProposalSet::default());
    }

    let run_dir = create_run_dir(root, "infer")?;
    let stem = args.input.file_stem().and_then(|s| s.to_str()).unwrap_or("scene");
    let words: Vec<u32> = labels.iter().map(|&l| semantic_word(&config.data.classes, l)).collect();
    let label_file = run_dir.join(format!("{stem}.label"));
    crate::run::write_file(&label_file, &serialize_semantickitti_labels(&words))?;
    let mut rm = RunManifest::new("infer", &config);
    rm.input("checkpoint", &args.checkpoint);
    rm.input("scene", &args.input);
    rm.artifact("labels", &label_file);

    let box_file = match &proposals {
        Some(p) => {
            let class = kitti_class(&table);
            let boxes: Vec<KittiBox> = p
                .boxes
                .iter()
                .zip(&p.scores)
                .map(|(b, s)| KittiBox {
                    class: class.clone(),
                    bbox: *b,
                    score: Some(*s),
                })
                .collect();
            let objects = lidar_boxes_to_cam(&boxes, &KittiCalib::nominal())?;
            let path = run_dir.join(format!("{stem}.txt"));
            crate::run::write_file(&path, serialize_kitti_object_labels(&objects).as_bytes())?;
            rm.artifact("boxes", &path);
            Some(path)
        }
        None => None,
    };

    let fov_accuracy = gt.as_ref().and_then(|gt| {
        let scored: Vec<usize> = inside.iter().copied().filter(|&i| gt[i] != IGNORE_LABEL).collect();
        (!scored.is_empty())
            .then(|| scored.iter().filter(|&&i| gt[i] == labels[i]).count() as f64 / scored.len() as f64)
    });
    rm.write(&run_dir)?;
    println!(
        "{} points, {} in view, {} proposals{}; labels in {}",
        cloud.valid_count,
        inside.len(),
        proposals.as_ref().map(|p| p.len()).unwrap_or(0),
        fov_accuracy.map(|a| format!(", accuracy {:.2}%", 100.0 * a)).unwrap_or_default(),
        label_file.display()
    );
    Ok(InferOutcome {
        run_dir,
        label_file,
        box_file,
        labels,
        words,
        proposals,
        fov_accuracy,
    })
}
