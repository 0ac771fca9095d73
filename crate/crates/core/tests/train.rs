use dass::data::{make_partial_views, synth_scene, ClassTable, DetView, GenConfig, SegView};
use dass::model::{Checkpoint, ModelConfig};
use dass::train::{train_loop, TrainConfig, Trainer};
use dass::Error;

fn corpus(n: u64) -> (Vec<SegView>, Vec<DetView>) {
    let scenes: Vec<_> = (0..n).map(|s| synth_scene(s, &GenConfig::default()).unwrap()).collect();
    make_partial_views(&scenes, 0.5, 1, &ClassTable::synthetic()).unwrap()
}

fn config(epochs: usize) -> TrainConfig {
    TrainConfig {
        batch_size: 2,
        epochs,
        points_per_scene: 128,
        seed: 11,
        ..TrainConfig::default()
    }
}

fn run(cfg: TrainConfig, seg: &[SegView], det: &[DetView]) -> (String, Trainer) {
    let mut t = Trainer::new(ModelConfig::tiny(8), cfg, seg, det).unwrap();
    let mut log = Vec::new();
    train_loop(&mut t, &mut log, |m, e| Ok(serde_json::json!({"epoch": e, "params": m.param_count()})), None).unwrap();
    (String::from_utf8(log).unwrap(), t)
}

#[test]
fn identical_seeds_give_identical_logs_and_parameters() {
    let (seg, det) = corpus(10);
    let (log_a, a) = run(config(3), &seg, &det);
    let (log_b, b) = run(config(3), &seg, &det);
    assert_eq!(log_a, log_b);
    assert_eq!(log_a.lines().count(), 3);
    assert_eq!(a.checkpoint().to_bytes(), b.checkpoint().to_bytes());

    let (log_c, _) = run(TrainConfig { seed: 12, ..config(3) }, &seg, &det);
    assert_ne!(log_a, log_c);
}

#[test]
fn resumed_run_equals_uninterrupted_run() {
    let (seg, det) = corpus(10);
    let (full_log, full) = run(config(4), &seg, &det);

    let dir = tempfile::tempdir().unwrap();
    let ckpt_path = dir.path().join("state.ckpt");
    let mut t = Trainer::new(ModelConfig::tiny(8), config(4), &seg, &det).unwrap();
    let mut log = Vec::new();
    let eval = |m: &dass::model::DassModel, e: usize| Ok(serde_json::json!({"epoch": e, "params": m.param_count()}));
    for _ in 0..2 {
        let rec = t.run_epoch().unwrap();
        log.extend(serde_json::to_string(&rec).unwrap().bytes());
        log.push(b'\n');
    }
    t.checkpoint().write(&ckpt_path).unwrap();
    drop(t);

    let ck = Checkpoint::read(&ckpt_path).unwrap();
    let mut resumed = Trainer::resume(&ck, &seg, &det).unwrap();
    assert_eq!(resumed.epoch, 2);
    train_loop(&mut resumed, &mut log, eval, None).unwrap();
    assert_eq!(String::from_utf8(log).unwrap(), full_log);
    assert_eq!(resumed.checkpoint().to_bytes(), full.checkpoint().to_bytes());
}

#[test]
fn epoch_is_one_pass_over_segmentation_views() {
    let (seg, det) = corpus(10);
    assert_eq!(seg.len(), 5);
    let t = Trainer::new(ModelConfig::tiny(8), config(2), &seg, &det).unwrap();
    assert_eq!(t.steps_per_epoch(), 3);
    assert_eq!(t.total_steps(), 6);
    // The last batch is short; the detection stream always supplies full
    // batches by cycling.
    assert_eq!(t.seg_batch(0, 2).clouds.len(), 1);
    assert_eq!(t.det_batch(0, 2).unwrap().clouds.len(), 2);
}

#[test]
fn detection_views_cycle_through_reshuffles() {
    let (seg, det) = corpus(10);
    let t = Trainer::new(ModelConfig::tiny(8), TrainConfig { batch_size: 1, ..config(4) }, &seg, &det).unwrap();
    // Identify draws by their box sets, which augmentation moves but never
    // adds to or removes from without transplanting.
    let t = Trainer::new(
        ModelConfig::tiny(8),
        TrainConfig {
            gt_box_augment: false,
            ..t.config.clone()
        },
        &seg,
        &det,
    )
    .unwrap();
    let n = det.len();
    let counts: Vec<usize> = (0..2 * n)
        .map(|k| t.det_batch(k / t.steps_per_epoch(), k % t.steps_per_epoch()).unwrap().boxes[0].len())
        .collect();
    let mut first: Vec<usize> = counts[..n].to_vec();
    let mut second: Vec<usize> = counts[n..].to_vec();
    first.sort_unstable();
    second.sort_unstable();
    assert_eq!(first, second, "each cycle visits every detection view once");
}

#[test]
fn learning_rate_follows_one_cycle() {
    let (seg, det) = corpus(10);
    let t = Trainer::new(ModelConfig::tiny(8), config(10), &seg, &det).unwrap();
    let lrs: Vec<f64> = (0..t.total_steps()).map(|s| t.schedule.lr(s)).collect();
    let peak = lrs.iter().cloned().fold(0.0, f64::max);
    assert!((lrs[0] - 0.0002).abs() < 1e-12);
    assert!((peak - 0.002).abs() < 1e-12);
    assert!(*lrs.last().unwrap() < lrs[0]);
}

#[test]
fn without_auxiliary_task_the_model_has_no_proposal_head() {
    let (seg, det) = corpus(6);
    let (log, t) = run(TrainConfig { aux: false, ..config(1) }, &seg, &[]);
    assert!(!t.model.has_det_head());
    assert!(log.contains("\"det_loss\":null"));
    let with_aux = Trainer::new(ModelConfig::tiny(8), config(1), &seg, &det).unwrap();
    assert_eq!(
        t.model.param_count(),
        with_aux.model.param_count() - with_aux.model.det_head_param_count()
    );
}

#[test]
fn empty_corpora_are_rejected() {
    let (seg, det) = corpus(4);
    let e = Trainer::new(ModelConfig::tiny(8), config(1), &[], &det).err().unwrap();
    assert!(matches!(e, Error::Data(_)));
    let e = Trainer::new(ModelConfig::tiny(8), config(1), &seg, &[]).err().unwrap();
    assert!(matches!(e, Error::Data(_)));
}

#[test]
fn training_reduces_the_loss() {
    let (seg, det) = corpus(8);
    let (log, _) = run(
        TrainConfig {
            augment: dass::data::AugmentPolicy::disabled(),
            lr: 0.01,
            ..config(30)
        },
        &seg,
        &det,
    );
    let totals: Vec<f64> = log
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["total"].as_f64().unwrap())
        .collect();
    assert!(totals.last().unwrap() < &(0.8 * totals[0]), "{totals:?}");
}

#[test]
fn extra_metadata_survives_resume() {
    let (seg, det) = corpus(6);
    let mut t = Trainer::new(ModelConfig::tiny(8), config(1), &seg, &det).unwrap();
    t.extra_meta.insert("data".into(), serde_json::json!({"classes": "synthetic"}));
    let ck = t.checkpoint();
    assert_eq!(ck.meta["epoch"], 0);
    let resumed = Trainer::resume(&ck, &seg, &det).unwrap();
    assert_eq!(resumed.extra_meta, t.extra_meta);
}
