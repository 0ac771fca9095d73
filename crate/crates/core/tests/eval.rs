use dass::data::{synth_scene, ClassTable, DetView, GenConfig, Scene, SegView};
use dass::eval::{evaluate, evaluate_model, EvalConfig, OraclePredictor};
use dass::model::{DassModel, ModelConfig};

fn scenes(n: u64) -> Vec<Scene> {
    (0..n).map(|s| synth_scene(50 + s, &GenConfig::default()).unwrap()).collect()
}

fn small_eval() -> EvalConfig {
    EvalConfig {
        points_per_scene: 256,
        recall_3d: true,
        ..EvalConfig::default()
    }
}

#[test]
fn oracle_scores_perfectly() {
    let table = ClassTable::synthetic();
    let test = scenes(4);
    let seg: Vec<SegView> = test.iter().map(|s| s.seg_view()).collect();
    let det: Vec<DetView> = test.iter().map(|s| s.det_view(&table)).collect();
    let oracle = OraclePredictor::new(table.len(), &seg, &det);
    let r = evaluate(&oracle, &seg, &det, &table, &small_eval()).unwrap();
    assert_eq!(r.miou, Some(1.0));
    assert_eq!(r.accuracy, Some(1.0));
    assert!(r.gt_boxes > 0);
    assert_eq!(r.recall, Some(vec![1.0; 5]));
    assert_eq!(r.recall_3d, Some(vec![1.0; 5]));
    let text = r.to_text();
    assert!(text.contains("mIoU") && text.contains("recall % (BEV)"));
}

#[test]
fn untrained_model_gives_finite_reproducible_metrics() {
    let table = ClassTable::synthetic();
    let test = scenes(3);
    let m = DassModel::new(ModelConfig::tiny(table.len()), 1).unwrap();
    let a = evaluate_model(&m, &test, &table, &small_eval()).unwrap();
    assert!(a.miou.unwrap().is_finite());
    assert!(a.recall.as_ref().unwrap().iter().all(|v| v.is_finite()));
    assert!(a.mean_proposals.unwrap() <= 32.0);
    let b = evaluate_model(&m, &test, &table, &small_eval()).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn detached_model_reports_segmentation_only() {
    let table = ClassTable::synthetic();
    let test = scenes(2);
    let m = DassModel::new(ModelConfig::tiny(table.len()), 2).unwrap();
    let full = evaluate_model(&m, &test, &table, &small_eval()).unwrap();
    let seg_only = evaluate_model(&m.detach_det_head(), &test, &table, &small_eval()).unwrap();
    assert_eq!(full.confusion, seg_only.confusion);
    assert_eq!(seg_only.recall, None);
    assert_eq!(seg_only.det_scenes, 0);
}

#[test]
fn class_table_must_match() {
    let table = ClassTable::synthetic();
    let m = DassModel::new(ModelConfig::tiny(table.len() - 1), 2).unwrap();
    assert!(evaluate_model(&m, &scenes(1), &table, &small_eval()).is_err());
}
