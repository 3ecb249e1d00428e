//! Non-neural baseline forecasts: static world, BEV lifting, labeled
//! point-cloud voxelization, and constant-velocity box extrapolation.
//! External (neural) forecasts enter through the forecast file format.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::grid::{FlowVolume, GridSpec, OccupancyGrid, OccupancySequence, SemanticLabel, VoxelIndex};
use crate::pipeline::{build_gmo_sequence, generate_backward_flow, TaskMode};
use crate::scene::{BoxState, InstanceTrack, LabeledPointCloud, Pose, PreparedWindow};

/// A method's occupancy forecast over frames 0..Nf, with optional flow
/// volumes and instance IDs (carried on the occupancy grids).
#[derive(Debug, Clone, PartialEq)]
pub struct Forecast {
    pub occupancy: OccupancySequence,
    pub flows: Option<Vec<FlowVolume>>,
    pub method: String,
}

impl Forecast {
    pub fn spec(&self) -> &GridSpec {
        self.occupancy.spec()
    }
}

fn reframe(grid: &OccupancyGrid, spec: &GridSpec) -> OccupancyGrid {
    OccupancyGrid::from_parts(
        spec.clone(),
        grid.labels().to_vec(),
        grid.instance_ids().map(|ids| ids.to_vec()),
    )
    .expect("same geometry")
}

/// Static-world hypothesis: frames 1..Nf are exact copies of frame 0.
pub fn static_world(present: &OccupancyGrid, n_future: usize) -> Forecast {
    let mut spec = present.spec().clone();
    spec.n_future = n_future;
    let frame = reframe(present, &spec);
    let frames = vec![frame; n_future + 1];
    Forecast {
        occupancy: OccupancySequence::new(frames).expect("frame count matches spec"),
        flows: None,
        method: "static".into(),
    }
}

/// Replicates an occupied BEV cell along z over the voxels whose centers lie
/// in `[z_ground, z_ground + height)`. The BEV map is the 2D variant of the
/// grid format: an occupancy grid with nz = 1 and matching x/y geometry.
/// Only GMO labels are lifted.
pub fn lift_bev(
    bev: &OccupancyGrid,
    z_ground: f64,
    height: f64,
    spec: &GridSpec,
) -> Result<OccupancyGrid> {
    let bspec = bev.spec();
    if bspec.resolution != spec.resolution {
        return Err(Error::SpecMismatch(format!(
            "BEV resolution {} does not match grid resolution {}",
            bspec.resolution, spec.resolution
        )));
    }
    if bspec.nz() != 1 {
        return Err(Error::SpecMismatch(format!(
            "BEV map must have nz = 1, got {}",
            bspec.nz()
        )));
    }
    if bspec.x_min != spec.x_min
        || bspec.x_max != spec.x_max
        || bspec.y_min != spec.y_min
        || bspec.y_max != spec.y_max
    {
        return Err(Error::SpecMismatch(
            "BEV x/y extent does not match the grid spec".into(),
        ));
    }
    let nz = spec.nz();
    let mut out = OccupancyGrid::new(spec.clone());
    for ix in 0..spec.nx() {
        for iy in 0..spec.ny() {
            if bev.label_at(VoxelIndex { ix, iy, iz: 0 }) != SemanticLabel::Gmo {
                continue;
            }
            for iz in 0..nz {
                let zc = spec.z_min + (iz as f64 + 0.5) * spec.resolution;
                if zc >= z_ground && zc < z_ground + height {
                    out.set_label(VoxelIndex { ix, iy, iz }, SemanticLabel::Gmo);
                }
            }
        }
    }
    Ok(out)
}

/// Lifts a BEV map per frame into a 3D forecast.
pub fn lift_bev_sequence(
    bevs: &[OccupancyGrid],
    z_ground: f64,
    height: f64,
    spec: &GridSpec,
) -> Result<Forecast> {
    let mut lifted_spec = spec.clone();
    lifted_spec.n_future = bevs.len().saturating_sub(1);
    let frames: Vec<OccupancyGrid> = bevs
        .iter()
        .map(|bev| lift_bev(bev, z_ground, height, &lifted_spec))
        .collect::<Result<_>>()?;
    Ok(Forecast {
        occupancy: OccupancySequence::new(frames)?,
        flows: None,
        method: "bev-lift".into(),
    })
}

/// Each voxel containing at least one point takes the majority point label;
/// GMO wins ties, then GSO.
pub fn voxelize_labeled_points(clouds: &[LabeledPointCloud], spec: &GridSpec) -> Result<Forecast> {
    let mut fspec = spec.clone();
    fspec.n_future = clouds.len().saturating_sub(1);
    let mut frames = Vec::with_capacity(clouds.len());
    for cloud in clouds {
        // per-voxel counts: [free, gmo, gso]
        let mut counts: std::collections::HashMap<usize, [u32; 3]> = std::collections::HashMap::new();
        for (p, &label) in cloud.points.iter().zip(cloud.labels.iter()) {
            if let Some(idx) = fspec.world_to_voxel(p) {
                counts.entry(fspec.linear_index(idx)).or_insert([0u32; 3])[label as usize] += 1;
            }
        }
        let mut grid = OccupancyGrid::new(fspec.clone());
        for (lin, c) in counts {
            let label = if c[1] >= c[2] && c[1] >= c[0] {
                SemanticLabel::Gmo
            } else if c[2] >= c[0] {
                SemanticLabel::Gso
            } else {
                SemanticLabel::Free
            };
            grid.set_label(fspec.voxel_at(lin), label);
        }
        frames.push(grid);
    }
    Ok(Forecast {
        occupancy: OccupancySequence::new(frames)?,
        flows: None,
        method: "points".into(),
    })
}

/// Extrapolates each track from its last two past observations (per-step
/// displacement and yaw rate) and voxelizes the result per frame. Tracks with
/// a single past observation are held static.
pub fn constant_velocity_forecast(
    tracks: &[InstanceTrack],
    spec: &GridSpec,
    n_future: usize,
) -> Result<Forecast> {
    let mut extrapolated = Vec::new();
    for track in tracks {
        let Some(&last) = track.states.keys().filter(|&&k| k <= 0).next_back() else {
            continue;
        };
        let s0 = track.states[&last];
        let (disp, dyaw) = match track.states.get(&(last - 1)) {
            Some(prev) => (
                [
                    s0.center[0] - prev.center[0],
                    s0.center[1] - prev.center[1],
                    s0.center[2] - prev.center[2],
                ],
                wrap(s0.yaw - prev.yaw),
            ),
            None => ([0.0; 3], 0.0),
        };
        let mut states: BTreeMap<i64, BoxState> = track
            .states
            .iter()
            .filter(|(&k, _)| k <= 0)
            .map(|(&k, s)| (k, *s))
            .collect();
        for t in last + 1..=n_future as i64 {
            let steps = (t - last) as f64;
            states.insert(
                t,
                BoxState {
                    center: [
                        s0.center[0] + steps * disp[0],
                        s0.center[1] + steps * disp[1],
                        s0.center[2] + steps * disp[2],
                    ],
                    size_lwh: s0.size_lwh,
                    yaw: wrap(s0.yaw + steps * dyaw),
                    visibility: s0.visibility,
                },
            );
        }
        extrapolated.push(InstanceTrack {
            id: track.id,
            category: track.category,
            states,
        });
    }

    let mut fspec = spec.clone();
    fspec.n_future = n_future;
    let window = PreparedWindow {
        present_index: 0,
        n_past: fspec.n_past,
        n_future,
        tracks: extrapolated.clone(),
        frame_to_present: vec![Pose::identity(); n_future + 1],
        fine_labels: None,
        clouds: None,
    };
    let seq = build_gmo_sequence(&window, &extrapolated, &fspec, TaskMode::InflatedGmo)?;
    let flows = generate_backward_flow(&extrapolated, &seq);
    Ok(Forecast {
        occupancy: seq,
        flows: Some(flows),
        method: "cv".into(),
    })
}

fn wrap(a: f64) -> f64 {
    let mut a = a % std::f64::consts::TAU;
    if a > std::f64::consts::PI {
        a -= std::f64::consts::TAU;
    } else if a <= -std::f64::consts::PI {
        a += std::f64::consts::TAU;
    }
    a
}
