use std::hint::black_box;

use bbav_bench::{noisy_maps, random_boxes, random_detections};
use bbav_core::codec::{decode, encode, DecodeParams};
use bbav_core::geometry::rotated_iou;
use bbav_core::postprocess::rotated_nms;
use bbav_core::synth::{generate_scene, SceneSpec};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

fn bench_iou(c: &mut Criterion) {
    let boxes = random_boxes(1000, 100.0, 1);
    let mut group = c.benchmark_group("rotated_iou");
    group.throughput(Throughput::Elements(boxes.len() as u64 / 2));
    group.bench_function("500_pairs", |b| {
        b.iter(|| {
            boxes
                .chunks_exact(2)
                .map(|p| rotated_iou(black_box(&p[0]), black_box(&p[1])))
                .sum::<f64>()
        })
    });
    group.finish();
}

fn bench_codec(c: &mut Criterion) {
    let spec = SceneSpec { seed: 3, ..Default::default() };
    let gt = generate_scene(&spec).unwrap();
    c.bench_function("encode_608", |b| b.iter(|| encode(black_box(&gt), 608, 608, 15, 4).unwrap()));

    let maps = noisy_maps(1);
    let mut group = c.benchmark_group("decode_15x152x152");
    for top_k in [100, 500] {
        let params = DecodeParams { top_k, ..Default::default() };
        group.bench_with_input(BenchmarkId::from_parameter(top_k), &params, |b, p| {
            b.iter(|| decode(black_box(&maps), p))
        });
    }
    group.finish();
}

fn bench_nms(c: &mut Criterion) {
    let mut group = c.benchmark_group("rotated_nms");
    group.sample_size(20);
    for n in [500, 5000] {
        let dets = random_detections(n, 1000.0, 15, 7);
        group.throughput(Throughput::Elements(n as u64));
        group.bench_with_input(BenchmarkId::from_parameter(n), &dets, |b, d| {
            b.iter(|| rotated_nms(black_box(d), 0.1))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_iou, bench_codec, bench_nms);
criterion_main!(benches);
