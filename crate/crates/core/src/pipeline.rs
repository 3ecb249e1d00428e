//! Turns a prepared window into a 4D benchmark sample: voxelized occupancy
//! sequences per task level, instance-ID volumes, and 3D backward centripetal
//! flow.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{FlowVolume, GridSpec, OccupancyGrid, OccupancySequence, SemanticLabel, VoxelIndex};
use crate::scene::{filter_invalid_tracks, BoxState, InstanceTrack, Pose, PreparedWindow};

/// The four occupancy forecasting task levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskMode {
    InflatedGmo,
    FineGmo,
    InflatedGmoGso,
    FineGmoGso,
}

impl TaskMode {
    pub fn uses_fine_gmo(&self) -> bool {
        matches!(self, TaskMode::FineGmo | TaskMode::FineGmoGso)
    }

    pub fn includes_gso(&self) -> bool {
        matches!(self, TaskMode::InflatedGmoGso | TaskMode::FineGmoGso)
    }

    pub fn requires_fine_labels(&self) -> bool {
        self.uses_fine_gmo() || self.includes_gso()
    }

    pub fn code(&self) -> u8 {
        match self {
            TaskMode::InflatedGmo => 0,
            TaskMode::FineGmo => 1,
            TaskMode::InflatedGmoGso => 2,
            TaskMode::FineGmoGso => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<TaskMode> {
        match code {
            0 => Some(TaskMode::InflatedGmo),
            1 => Some(TaskMode::FineGmo),
            2 => Some(TaskMode::InflatedGmoGso),
            3 => Some(TaskMode::FineGmoGso),
            _ => None,
        }
    }
}

impl std::str::FromStr for TaskMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<TaskMode> {
        match s {
            "inflated-gmo" => Ok(TaskMode::InflatedGmo),
            "fine-gmo" => Ok(TaskMode::FineGmo),
            "inflated-gmo-gso" => Ok(TaskMode::InflatedGmoGso),
            "fine-gmo-gso" => Ok(TaskMode::FineGmoGso),
            other => Err(Error::Config(format!("unknown task mode '{other}'"))),
        }
    }
}

impl std::fmt::Display for TaskMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            TaskMode::InflatedGmo => "inflated-gmo",
            TaskMode::FineGmo => "fine-gmo",
            TaskMode::InflatedGmoGso => "inflated-gmo-gso",
            TaskMode::FineGmoGso => "fine-gmo-gso",
        };
        f.write_str(s)
    }
}

/// Provenance of a sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub scene_id: String,
    pub present_index: usize,
    pub retained_instances: Vec<u16>,
}

/// A complete 4D benchmark sample: ground-truth occupancy, per-frame backward
/// flow (index t holds flow from frame t back to t-1), and metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub spec: GridSpec,
    pub mode: TaskMode,
    pub occupancy: OccupancySequence,
    pub flows: Vec<FlowVolume>,
    pub meta: SampleMeta,
}

/// Exactly the voxels whose centers fall inside the oriented box, using
/// half-open box-local bounds `[-size/2, +size/2)` per local axis. A fully
/// out-of-extent box yields an empty set.
pub fn voxelize_box(state: &BoxState, spec: &GridSpec) -> Vec<VoxelIndex> {
    let (nx, ny, nz) = spec.dims();
    let res = spec.resolution;
    let (cx, cy, cz) = (state.center[0], state.center[1], state.center[2]);
    let (hl, hw, hh) = (
        state.size_lwh[0] / 2.0,
        state.size_lwh[1] / 2.0,
        state.size_lwh[2] / 2.0,
    );
    let (sin, cos) = state.yaw.sin_cos();

    // conservative axis-aligned bounds of the rotated box
    let ex = hl * cos.abs() + hw * sin.abs();
    let ey = hl * sin.abs() + hw * cos.abs();

    let lo = |c: f64, e: f64, min: f64| -> usize {
        (((c - e - min) / res).floor().max(0.0)) as usize
    };
    let hi = |c: f64, e: f64, min: f64, n: usize| -> usize {
        let i = ((c + e - min) / res).floor();
        if i < 0.0 {
            0
        } else {
            (i as usize).min(n.saturating_sub(1))
        }
    };
    if cx + ex < spec.x_min || cy + ey < spec.y_min || cz + hh < spec.z_min {
        return Vec::new();
    }

    let (ix0, ix1) = (lo(cx, ex, spec.x_min), hi(cx, ex, spec.x_min, nx));
    let (iy0, iy1) = (lo(cy, ey, spec.y_min), hi(cy, ey, spec.y_min, ny));
    let (iz0, iz1) = (lo(cz, hh, spec.z_min), hi(cz, hh, spec.z_min, nz));
    if ix0 >= nx || iy0 >= ny || iz0 >= nz {
        return Vec::new();
    }

    let mut out = Vec::new();
    for ix in ix0..=ix1 {
        let px = spec.x_min + (ix as f64 + 0.5) * res;
        let dx = px - cx;
        for iy in iy0..=iy1 {
            let py = spec.y_min + (iy as f64 + 0.5) * res;
            let dy = py - cy;
            // rotate the offset by -yaw into box-local axes
            let lx = dx * cos + dy * sin;
            let ly = -dx * sin + dy * cos;
            if lx < -hl || lx >= hl || ly < -hw || ly >= hw {
                continue;
            }
            for iz in iz0..=iz1 {
                let pz = spec.z_min + (iz as f64 + 0.5) * res;
                let lz = pz - cz;
                if lz < -hh || lz >= hh {
                    continue;
                }
                out.push(VoxelIndex { ix, iy, iz });
            }
        }
    }
    out
}

/// Resamples a label volume expressed in a source ego frame into the target
/// spec in present coordinates by nearest-voxel lookup after the rigid
/// transform `source_to_present`.
pub fn resample_to_present(
    source: &OccupancyGrid,
    source_to_present: &Pose,
    target_spec: &GridSpec,
) -> OccupancyGrid {
    let mut out = OccupancyGrid::new(target_spec.clone());
    let present_to_source = source_to_present.inverse();
    let n = target_spec.voxel_count();
    for lin in 0..n {
        let idx = target_spec.voxel_at(lin);
        let p = target_spec.voxel_center_unchecked(idx);
        let q = present_to_source * p;
        if let Some(src_idx) = source.spec().world_to_voxel(&q) {
            let label = source.label_at(src_idx);
            if label != SemanticLabel::Free {
                out.set_label(idx, label);
            }
        }
    }
    out
}

/// Boxes at one frame ordered so that sequential overwriting makes the
/// smaller-volume box win contested voxels (equal volumes: smaller ID wins).
fn boxes_by_descending_volume(tracks: &[InstanceTrack], t: i64) -> Vec<(u16, BoxState)> {
    let mut boxes: Vec<(u16, BoxState)> = tracks
        .iter()
        .filter_map(|track| track.states.get(&t).map(|s| (track.id, *s)))
        .collect();
    boxes.sort_by(|a, b| {
        b.1.volume()
            .partial_cmp(&a.1.volume())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(b.0.cmp(&a.0))
    });
    boxes
}

/// Builds the GMO occupancy sequence with instance IDs for frames 0..Nf.
///
/// Inflated modes label every voxel inside each retained box; fine modes keep
/// only fine movable voxels that fall inside a retained box, which also
/// assigns the instance ID.
pub fn build_gmo_sequence(
    window: &PreparedWindow,
    tracks: &[InstanceTrack],
    spec: &GridSpec,
    mode: TaskMode,
) -> Result<OccupancySequence> {
    let fine_present: Option<Vec<OccupancyGrid>> = if mode.uses_fine_gmo() {
        let fine = window.fine_labels.as_ref().ok_or_else(|| {
            Error::Config(format!("task mode {mode} requires fine labels, scene has none"))
        })?;
        Some(
            (0..=window.n_future)
                .map(|t| resample_to_present(&fine[t], &window.frame_to_present[t], spec))
                .collect(),
        )
    } else {
        None
    };

    let mut frames = Vec::with_capacity(window.n_future + 1);
    for t in 0..=window.n_future as i64 {
        let mut grid = OccupancyGrid::new_with_ids(spec.clone());
        for (id, state) in boxes_by_descending_volume(tracks, t) {
            for idx in voxelize_box(&state, spec) {
                match &fine_present {
                    None => grid.set_gmo(idx, id),
                    Some(fine) => {
                        if fine[t as usize].label_at(idx) == SemanticLabel::Gmo {
                            grid.set_gmo(idx, id);
                        }
                    }
                }
            }
        }
        frames.push(grid);
    }
    OccupancySequence::new(frames)
}

/// Overlays fine-grained GSO labels onto a GMO sequence with per-voxel
/// precedence GMO > GSO > Free.
pub fn merge_gso(seq: OccupancySequence, window: &PreparedWindow) -> Result<OccupancySequence> {
    let fine = window
        .fine_labels
        .as_ref()
        .ok_or_else(|| Error::Config("GSO merge requires fine labels, scene has none".into()))?;
    if fine.len() != seq.frames().len() {
        return Err(Error::SpecMismatch(format!(
            "{} fine label frames for a {}-frame sequence",
            fine.len(),
            seq.frames().len()
        )));
    }
    let spec = seq.spec().clone();
    let mut frames = seq.into_frames();
    for (t, frame) in frames.iter_mut().enumerate() {
        let fine_present = resample_to_present(&fine[t], &window.frame_to_present[t], &spec);
        for lin in 0..spec.voxel_count() {
            if frame.labels()[lin] == SemanticLabel::Free
                && fine_present.labels()[lin] == SemanticLabel::Gso
            {
                frame.set_label(spec.voxel_at(lin), SemanticLabel::Gso);
            }
        }
    }
    OccupancySequence::new(frames)
}

/// Backward centripetal flow for frames 0..Nf: every GMO voxel of frame t
/// whose instance has a state at t-1 points at that instance's center at t-1
/// (t = 0 uses the past observation at -1). Voxels without a t-1 state carry
/// the zero vector and valid = false.
pub fn generate_backward_flow(
    tracks: &[InstanceTrack],
    seq: &OccupancySequence,
) -> Vec<FlowVolume> {
    let spec = seq.spec();
    let mut flows = Vec::with_capacity(seq.frames().len());
    for (t, frame) in seq.frames().iter().enumerate() {
        let mut centers = std::collections::HashMap::new();
        for track in tracks {
            if let Some(prev) = track.states.get(&(t as i64 - 1)) {
                centers.insert(track.id, prev.center_point());
            }
        }
        let mut flow = FlowVolume::new(spec.clone());
        if let Some(ids) = frame.instance_ids() {
            for lin in frame.indices_with_label(SemanticLabel::Gmo) {
                let id = ids[lin];
                if id == 0 {
                    continue;
                }
                if let Some(center) = centers.get(&id) {
                    let vc = spec.voxel_center_unchecked(spec.voxel_at(lin));
                    flow.set(lin, center - vc);
                }
            }
        }
        flows.push(flow);
    }
    flows
}

/// Composes filtering, GMO voxelization, the optional GSO merge, and flow
/// generation into one sample. Deterministic for identical inputs.
pub fn build_sample(
    window: &PreparedWindow,
    spec: &GridSpec,
    mode: TaskMode,
    scene_id: &str,
) -> Result<Sample> {
    if mode.requires_fine_labels() && window.fine_labels.is_none() {
        return Err(Error::Config(format!(
            "task mode {mode} requires fine labels, scene has none"
        )));
    }
    if spec.n_future != window.n_future {
        return Err(Error::SpecMismatch(format!(
            "spec Nf {} does not match window Nf {}",
            spec.n_future, window.n_future
        )));
    }
    let tracks = filter_invalid_tracks(window, spec);
    let mut seq = build_gmo_sequence(window, &tracks, spec, mode)?;
    if mode.includes_gso() {
        seq = merge_gso(seq, window)?;
    }
    let flows = generate_backward_flow(&tracks, &seq);
    let mut retained: Vec<u16> = tracks.iter().map(|t| t.id).collect();
    retained.sort_unstable();
    Ok(Sample {
        spec: spec.clone(),
        mode,
        occupancy: seq,
        flows,
        meta: SampleMeta {
            scene_id: scene_id.to_string(),
            present_index: window.present_index,
            retained_instances: retained,
        },
    })
}
