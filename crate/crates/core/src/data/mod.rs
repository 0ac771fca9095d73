//! Scenes, partially annotated views, preprocessing, augmentation and the
//! real-data file formats.

mod augment;
mod cloud;
mod container;
pub mod kitti;
mod preprocess;
pub mod semantickitti;
mod synth;
mod views;

pub use augment::{augment_scene, gt_box_augment, AugmentPolicy, BankEntry, BoxBank, PLACEMENT_TRIES};
pub use cloud::{ClassTable, Label, LabeledBox, PointCloud, Scene, SceneMeta, IGNORE_LABEL};
pub use container::{
    corpus_manifest, decode_scene, encode_scene, read_corpus, read_manifest, scene_seed, sha256_hex, write_corpus, Corpus,
    CorpusConfig, CorpusManifest, SceneEntry, SceneHeader, SplitManifest, MANIFEST_FILE,
};
pub use kitti::{
    cam_boxes_to_lidar, cloud_from_lidar, lidar_boxes_to_cam, lidar_to_sensor, parse_kitti_calib, parse_kitti_object_labels, parse_velodyne_bin, serialize_kitti_calib,
    sensor_to_lidar, serialize_kitti_object_labels, serialize_velodyne_bin, KittiBox, KittiCalib, KittiObject,
};
pub use preprocess::{
    fixed_size_sample, fov_crop, normalize_reflectance, range_filter, sample_indices, BoxRange, FovConfig,
};
pub use semantickitti::{
    pack_label, parse_semantickitti_labels, semantic_id, serialize_semantickitti_labels, LabelMap,
};
pub use synth::{synth_scene, GenConfig};
pub use views::{make_partial_views, DetView, PartialView, SegView, ViewKind};
