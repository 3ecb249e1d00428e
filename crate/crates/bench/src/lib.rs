//! Shared fixtures for the benchmark suite.

use occ4d::grid::GridSpec;
use occ4d::pipeline::{build_sample, Sample, TaskMode};
use occ4d::scene::{split_scene, to_present_frame, PreparedWindow, Scene};
use occ4d::synth::{
    generate_scene, EgoMotion, InstanceSpec, Kinematics, SplitMix64, SynthConfig,
    VisibilitySchedule,
};

/// Default geometry scaled down by 4 in x/y: 128x128x40 voxels.
pub fn medium_spec() -> GridSpec {
    GridSpec::new((-12.8, 12.8), (-12.8, 12.8), (-5.0, 3.0), 0.2, 2, 4).unwrap()
}

pub fn full_spec() -> GridSpec {
    GridSpec::default_spec()
}

/// Deterministic constant-velocity scene with `count` boxes spread over the
/// given radius.
pub fn bench_scene(seed: u64, count: usize, radius: f64) -> Scene {
    let mut rng = SplitMix64::new(seed);
    let config = SynthConfig {
        seed,
        num_frames: 7,
        dt: 0.5,
        ego: EgoMotion::Static,
        instances: (0..count)
            .map(|_| InstanceSpec {
                category: occ4d::scene::Category::Car,
                kinematics: Kinematics::ConstantVelocity {
                    velocity: [rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), 0.0],
                },
                initial_center: Some([
                    rng.uniform(-radius, radius),
                    rng.uniform(-radius, radius),
                    0.0,
                ]),
                initial_yaw: rng.uniform(-3.0, 3.0),
                size_lwh: Some([4.5, 2.0, 1.8]),
                appearance: None,
                visibility: VisibilitySchedule::Constant(1.0),
            })
            .collect(),
        center_range: [[-radius, radius], [-radius, radius], [-0.5, 0.5]],
        size_range: [[4.0, 5.0], [1.8, 2.2], [1.5, 2.0]],
    };
    generate_scene(&config).unwrap()
}

pub fn first_window(scene: &Scene, spec: &GridSpec) -> PreparedWindow {
    let windows = split_scene(scene, spec.n_past, spec.n_future);
    to_present_frame(scene, &windows[0]).unwrap()
}

pub fn bench_sample(spec: &GridSpec, count: usize, radius: f64) -> Sample {
    let scene = bench_scene(7, count, radius);
    let window = first_window(&scene, spec);
    build_sample(&window, spec, TaskMode::InflatedGmo, "bench").unwrap()
}
