//! Benchmark engine for 4D semantic occupancy forecasting: voxel grids,
//! scene windowing, ground-truth generation with backward instance flow,
//! classical baselines, IoU/VPQ metrics, flow-based instance association,
//! a deterministic synthetic-scene oracle, and binary/JSON file formats.

pub mod assoc;
pub mod baseline;
pub mod error;
pub mod grid;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod scene;
pub mod synth;

pub use assoc::{associate_via_flow, extract_centers, extract_centers_from_probability, InstanceCenters};
pub use baseline::{
    constant_velocity_forecast, lift_bev, lift_bev_sequence, static_world,
    voxelize_labeled_points, Forecast,
};
pub use error::{Error, Result};
pub use grid::{
    FlowVolume, GridSpec, OccupancyGrid, OccupancySequence, SemanticLabel, VoxelIndex,
};
pub use metrics::{
    evaluate_dataset, evaluate_dataset_par, iou_discounted, iou_future, iou_single, vpq,
    ClassCounts, ClassReport, EvalAccumulator, EvalConfig, EvalReport, VpqTally,
};
pub use pipeline::{
    build_gmo_sequence, build_sample, generate_backward_flow, merge_gso, resample_to_present,
    voxelize_box, Sample, SampleMeta, TaskMode,
};
pub use scene::{
    filter_invalid_tracks, instance_duration_stats, interpolate_track, split_scene,
    to_present_frame, BoxState, Category, DurationHistogram, InstanceTrack, LabeledPointCloud,
    Pose, PreparedWindow, Scene, SequenceWindow,
};
pub use synth::{
    analytic_flow, generate_scene, EgoMotion, InstanceSpec, Kinematics, SplitMix64, SynthConfig,
    VisibilitySchedule,
};
