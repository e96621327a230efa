use criterion::{black_box, criterion_group, criterion_main, Criterion};

use roomrecon::placement::{rasterize_silhouette, refine_scene, RefineConfig};
use roomrecon::retrieval::similarity;
use roomrecon::vanishing::{joint_calibrate, refit_vp, CalibrationParams};
use roomrecon_bench::fixture;

fn raster(c: &mut Criterion) {
    let f = fixture(1, 12);
    let o = &f.truth.objects[0];
    let model = &f.models[&o.model_id];
    c.bench_function("rasterize_silhouette", |b| {
        b.iter(|| rasterize_silhouette(model, black_box(&o.pose), &f.truth.camera, f.bundle.dims).unwrap())
    });
}

fn refit(c: &mut Criterion) {
    let f = fixture(2, 12);
    let calib = joint_calibrate(&f.bundle.lines, f.bundle.dims, None, &CalibrationParams::default()).unwrap();
    let cluster = calib.clustering.clusters.iter().max_by_key(|c| c.len()).unwrap().clone();
    c.bench_function("refit_vp", |b| b.iter(|| refit_vp(black_box(&cluster)).unwrap()));
}

fn descriptor_similarity(c: &mut Criterion) {
    let f = fixture(3, 12);
    let query = f.bundle.instances.iter().find_map(|i| i.descriptor.clone()).expect("a descriptor");
    let model = &f.bundle.models[0].descriptors;
    c.bench_function("similarity", |b| b.iter(|| similarity(black_box(&query), model).unwrap()));
}

fn calibrate(c: &mut Criterion) {
    let f = fixture(4, 12);
    let params = CalibrationParams::default();
    c.bench_function("joint_calibrate", |b| {
        b.iter(|| joint_calibrate(black_box(&f.bundle.lines), f.bundle.dims, None, &params).unwrap())
    });
}

fn refine(c: &mut Criterion) {
    let f = fixture(5, 6);
    let graph = f.truth.graph();
    let config = RefineConfig { iterations: 10, ..RefineConfig::default() };
    let mut g = c.benchmark_group("refine");
    g.sample_size(10);
    g.bench_function("refine_scene_10_iters", |b| {
        b.iter(|| refine_scene(&f.inputs, &f.models, &graph, &f.truth.camera, &f.truth.layout, &config).unwrap())
    });
    g.finish();
}

criterion_group!(benches, raster, refit, descriptor_similarity, calibrate, refine);
criterion_main!(benches);
