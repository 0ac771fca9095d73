//! Shared fixtures for the benchmarks.

use dass::data::{fixed_size_sample, normalize_reflectance, synth_scene, ClassTable, GenConfig, PointCloud};
use dass::train::{DetBatch, SegBatch};
use dass::Box7;

/// A pseudo-random but fixed set of car-sized boxes scattered in front of the
/// sensor.
pub fn boxes(n: usize) -> Vec<Box7> {
    (0..n)
        .map(|i| {
            let t = i as f64;
            Box7::new(
                (t * 1.37).sin() * 12.0,
                0.8,
                5.0 + (t * 0.71).cos().abs() * 30.0,
                1.6,
                1.8,
                4.0,
                (t * 0.53) % std::f64::consts::TAU,
            )
        })
        .collect()
}

/// `scenes` synthetic scenes resampled to `points` rows, as seen by the model.
pub fn clouds(scenes: u64, points: usize) -> Vec<PointCloud> {
    (0..scenes)
        .map(|s| {
            let scene = synth_scene(100 + s, &GenConfig::default()).expect("default generator is valid");
            let (mut c, _) = fixed_size_sample(&scene.cloud, None, points, s);
            normalize_reflectance(&mut c);
            c
        })
        .collect()
}

/// Matching segmentation and detection batches for one training step.
pub fn batches(scenes: u64, points: usize) -> (SegBatch, DetBatch) {
    let table = ClassTable::synthetic();
    let mut seg = SegBatch {
        clouds: Vec::new(),
        labels: Vec::new(),
    };
    let mut det = DetBatch {
        clouds: Vec::new(),
        boxes: Vec::new(),
    };
    for s in 0..scenes {
        let scene = synth_scene(200 + s, &GenConfig::default()).expect("default generator is valid");
        let (mut c, l) = fixed_size_sample(&scene.cloud, Some(&scene.labels), points, s);
        normalize_reflectance(&mut c);
        seg.clouds.push(c.clone());
        seg.labels.push(l.expect("labels requested"));
        det.clouds.push(c);
        det.boxes.push(scene.det_view(&table).boxes);
    }
    (seg, det)
}
