use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};
use dass::geom::{bev_iou, nms_bev};
use dass::train::{multitask_step, AdamW, LossWeights};
use dass::{BoxCodecConfig, DassModel, ModelConfig};
use dass_bench::{batches, boxes, clouds};

fn geometry(c: &mut Criterion) {
    let codec = BoxCodecConfig::default();
    let b = boxes(256);
    let scores: Vec<f64> = (0..b.len()).map(|i| ((i * 37) % 101) as f64 / 100.0).collect();
    c.bench_function("codec encode+decode", |bench| {
        bench.iter(|| {
            for gt in &b[..64] {
                let p = [gt.x + 0.7, gt.y, gt.z - 1.1];
                let t = codec.encode_box(p, gt).expect("point lies in scope");
                black_box(codec.decode_target(p, &t).expect("valid bins"));
            }
        })
    });
    c.bench_function("bev_iou 64x64", |bench| {
        bench.iter(|| {
            let mut s = 0.0;
            for x in &b[..64] {
                for y in &b[..64] {
                    s += bev_iou(x, y);
                }
            }
            black_box(s)
        })
    });
    c.bench_function("nms_bev 256", |bench| bench.iter(|| black_box(nms_bev(&b, &scores, 0.8))));
}

fn network(c: &mut Criterion) {
    let model = DassModel::new(ModelConfig::default(), 0).expect("default model is valid");
    let cloud = clouds(1, 2048);
    c.bench_function("predict 1x2048", |bench| {
        bench.iter(|| black_box(model.predict(&[&cloud[0]]).expect("prediction")))
    });

    let (seg, det) = batches(2, 2048);
    let weights = LossWeights::new(1.5, 1.0, vec![1.0; model.config.num_classes]);
    let mut group = c.benchmark_group("training");
    group.sample_size(10);
    group.bench_function("multitask step 2+2x2048", |bench| {
        bench.iter_batched(
            || {
                let m = model.clone();
                let opt = AdamW::new(&m.store, 0.9, 0.001);
                (m, opt)
            },
            |(mut m, mut opt)| {
                black_box(multitask_step(&mut m, Some(&seg), Some(&det), &weights, &mut opt, 0.002, false).expect("finite step"))
            },
            BatchSize::LargeInput,
        )
    });
    group.finish();
}

criterion_group!(benches, geometry, network);
criterion_main!(benches);
