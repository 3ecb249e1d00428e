use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

use occ4d::pipeline::{build_sample, voxelize_box, TaskMode};
use occ4d::scene::BoxState;
use occ4d_bench::{bench_scene, first_window, full_spec, medium_spec};

fn bench_voxelize_box(c: &mut Criterion) {
    let spec = full_spec();
    let car = BoxState {
        center: [10.3, -4.7, 0.5],
        size_lwh: [4.5, 2.0, 1.8],
        yaw: 0.6,
        visibility: 1.0,
    };
    let bus = BoxState {
        center: [-20.0, 15.0, 0.8],
        size_lwh: [12.0, 2.9, 3.5],
        yaw: -1.2,
        visibility: 1.0,
    };
    c.bench_function("voxelize_box/car", |b| {
        b.iter(|| voxelize_box(black_box(&car), black_box(&spec)))
    });
    c.bench_function("voxelize_box/bus", |b| {
        b.iter(|| voxelize_box(black_box(&bus), black_box(&spec)))
    });
}

fn bench_build_sample(c: &mut Criterion) {
    let medium = medium_spec();
    let scene_m = bench_scene(7, 20, 10.0);
    let window_m = first_window(&scene_m, &medium);
    c.bench_function("build_sample/128x128x40", |b| {
        b.iter(|| build_sample(black_box(&window_m), &medium, TaskMode::InflatedGmo, "bench"))
    });

    let full = full_spec();
    let scene_f = bench_scene(7, 20, 40.0);
    let window_f = first_window(&scene_f, &full);
    let mut group = c.benchmark_group("build_sample");
    group.sample_size(10);
    group.bench_function("512x512x40", |b| {
        b.iter_batched(
            || (),
            |_| build_sample(black_box(&window_f), &full, TaskMode::InflatedGmo, "bench"),
            BatchSize::LargeInput,
        )
    });
    group.finish();
}

criterion_group!(benches, bench_voxelize_box, bench_build_sample);
criterion_main!(benches);
