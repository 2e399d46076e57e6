use std::collections::BTreeMap;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use uvpose::noise::corrupt;
use uvpose::posesolve::ransac_pnp;
use uvpose::raster::render;
use uvpose::{decode, CorruptionParams, RansacConfig};
use uvpose_bench::blob_scene;

fn pipeline(c: &mut Criterion) {
    let scene = blob_scene();
    let lookups = BTreeMap::from([(1, scene.model.lookup())]);

    c.bench_function("render_blob", |b| b.iter(|| render(&scene.model, 1, &scene.pose, &scene.k).unwrap()));
    c.bench_function("decode_blob", |b| b.iter(|| decode(&scene.map, &lookups).unwrap()));

    let noisy = corrupt(&scene.map, &CorruptionParams::outliers(0.3, 1)).unwrap();
    let items = decode(&noisy, &lookups).unwrap().remove(0).items;
    let mut group = c.benchmark_group("ransac_pnp");
    group.sample_size(20);
    for iterations in [5, 50, 150, 500] {
        let cfg = RansacConfig {
            iterations,
            ..RansacConfig::default()
        };
        group.bench_with_input(BenchmarkId::from_parameter(iterations), &cfg, |b, cfg| {
            b.iter(|| ransac_pnp(&items, &scene.k, cfg).unwrap())
        });
    }
    group.finish();
    c.bench_function("ransac_pnp_clean_150", |b| {
        b.iter(|| ransac_pnp(&scene.correspondences, &scene.k, &RansacConfig::default()).unwrap())
    });
}

criterion_group!(benches, pipeline);
criterion_main!(benches);
