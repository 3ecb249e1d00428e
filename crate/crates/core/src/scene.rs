//! Scene data model and sequence preparation: windowing, present-frame
//! re-referencing, track interpolation, and validity filtering.

use std::collections::BTreeMap;

use nalgebra::{Isometry3, Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, OccupancyGrid, SemanticLabel};

/// Rigid transform from a child frame to the world frame.
pub type Pose = Isometry3<f64>;

/// Movable categories collected into the GMO class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Bicycle,
    Bus,
    Car,
    Construction,
    Motorcycle,
    Trailer,
    Truck,
    Pedestrian,
}

/// Oriented box at one frame: center, (length, width, height), yaw about +z,
/// and the visible fraction of the instance in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxState {
    pub center: [f64; 3],
    pub size_lwh: [f64; 3],
    pub yaw: f64,
    pub visibility: f64,
}

impl BoxState {
    pub fn validate(&self) -> Result<()> {
        if self.size_lwh.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::InvalidScene(format!(
                "box size components must be positive, got {:?}",
                self.size_lwh
            )));
        }
        if !(0.0..=1.0).contains(&self.visibility) {
            return Err(Error::InvalidScene(format!(
                "visibility must be in [0, 1], got {}",
                self.visibility
            )));
        }
        Ok(())
    }

    pub fn center_point(&self) -> Point3<f64> {
        Point3::new(self.center[0], self.center[1], self.center[2])
    }

    pub fn volume(&self) -> f64 {
        self.size_lwh[0] * self.size_lwh[1] * self.size_lwh[2]
    }

    /// Applies a rigid transform to the box pose. Sizes are unchanged; the new
    /// yaw comes from the transformed heading direction.
    pub fn transformed(&self, t: &Pose) -> BoxState {
        let c = t * self.center_point();
        let heading = t.rotation * Vector3::new(self.yaw.cos(), self.yaw.sin(), 0.0);
        BoxState {
            center: [c.x, c.y, c.z],
            size_lwh: self.size_lwh,
            yaw: heading.y.atan2(heading.x),
            visibility: self.visibility,
        }
    }
}

/// Per-instance time-indexed oriented boxes. Keys are frame indices: absolute
/// scene frames in a [`Scene`], offsets relative to the present frame in a
/// [`PreparedWindow`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceTrack {
    pub id: u16,
    pub category: Category,
    pub states: BTreeMap<i64, BoxState>,
}

impl InstanceTrack {
    /// First annotated frame.
    pub fn t_in(&self) -> i64 {
        *self.states.keys().next().expect("track has at least one state")
    }

    /// Last annotated frame.
    pub fn t_out(&self) -> i64 {
        *self.states.keys().next_back().expect("track has at least one state")
    }

    pub fn validate(&self) -> Result<()> {
        if self.id == 0 {
            return Err(Error::InvalidScene("instance id 0 is reserved".into()));
        }
        if self.states.is_empty() {
            return Err(Error::InvalidScene(format!("track {} has no states", self.id)));
        }
        for s in self.states.values() {
            s.validate()?;
        }
        Ok(())
    }
}

/// Points with per-point semantic labels, equal lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPointCloud {
    pub points: Vec<Point3<f64>>,
    pub labels: Vec<SemanticLabel>,
}

impl LabeledPointCloud {
    pub fn new(points: Vec<Point3<f64>>, labels: Vec<SemanticLabel>) -> Result<Self> {
        if points.len() != labels.len() {
            return Err(Error::InvalidScene(format!(
                "point cloud has {} points but {} labels",
                points.len(),
                labels.len()
            )));
        }
        Ok(LabeledPointCloud { points, labels })
    }

    pub fn transformed(&self, t: &Pose) -> LabeledPointCloud {
        LabeledPointCloud {
            points: self.points.iter().map(|p| t * p).collect(),
            labels: self.labels.clone(),
        }
    }
}

/// A timestamped scene: ego trajectory, world-frame instance tracks, and
/// optional per-frame fine label volumes (in each frame's ego coordinates)
/// and labeled point clouds.
#[derive(Debug, Clone)]
pub struct Scene {
    pub timestamps: Vec<f64>,
    /// Ego-to-world pose per frame.
    pub ego: Vec<Pose>,
    pub tracks: Vec<InstanceTrack>,
    pub fine_labels: Option<Vec<OccupancyGrid>>,
    pub clouds: Option<Vec<LabeledPointCloud>>,
}

impl Scene {
    pub fn num_frames(&self) -> usize {
        self.timestamps.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.timestamps.is_empty() {
            return Err(Error::InvalidScene("scene has no frames".into()));
        }
        for w in self.timestamps.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::InvalidScene(format!(
                    "timestamps must be strictly increasing: {} then {}",
                    w[0], w[1]
                )));
            }
        }
        if self.ego.len() != self.timestamps.len() {
            return Err(Error::InvalidScene(format!(
                "{} ego poses for {} frames",
                self.ego.len(),
                self.timestamps.len()
            )));
        }
        let n = self.timestamps.len() as i64;
        for track in &self.tracks {
            track.validate()?;
            for &k in track.states.keys() {
                if k < 0 || k >= n {
                    return Err(Error::InvalidScene(format!(
                        "track {} references frame {k} outside scene of {n} frames",
                        track.id
                    )));
                }
            }
        }
        if let Some(fine) = &self.fine_labels {
            if fine.len() != self.timestamps.len() {
                return Err(Error::InvalidScene(format!(
                    "{} fine label volumes for {} frames",
                    fine.len(),
                    self.timestamps.len()
                )));
            }
        }
        if let Some(clouds) = &self.clouds {
            if clouds.len() != self.timestamps.len() {
                return Err(Error::InvalidScene(format!(
                    "{} point clouds for {} frames",
                    clouds.len(),
                    self.timestamps.len()
                )));
            }
        }
        Ok(())
    }
}

/// A span of Np past frames, the present frame, and Nf future frames inside a
/// scene, identified by its present index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SequenceWindow {
    pub present: usize,
    pub n_past: usize,
    pub n_future: usize,
}

impl SequenceWindow {
    /// Scene frame index for the window offset `t` in [-Np, Nf].
    pub fn scene_frame(&self, t: i64) -> usize {
        (self.present as i64 + t) as usize
    }
}

/// One window per valid present index, sliding stride 1, ordered by present
/// index. A scene shorter than Np+Nf+1 frames yields no windows.
pub fn split_scene(scene: &Scene, n_past: usize, n_future: usize) -> Vec<SequenceWindow> {
    let frames = scene.num_frames();
    if frames < n_past + n_future + 1 {
        return Vec::new();
    }
    (n_past..frames - n_future)
        .map(|present| SequenceWindow {
            present,
            n_past,
            n_future,
        })
        .collect()
}

/// Window data re-expressed in the ego frame at the present index. Track keys
/// are offsets in [-Np, Nf]; boxes and points are in present coordinates.
#[derive(Debug, Clone)]
pub struct PreparedWindow {
    pub present_index: usize,
    pub n_past: usize,
    pub n_future: usize,
    pub tracks: Vec<InstanceTrack>,
    /// For t in 0..=Nf: transform from frame (present + t) ego coordinates to
    /// present coordinates. Entry 0 is the identity.
    pub frame_to_present: Vec<Pose>,
    /// Fine label volumes for frames 0..=Nf, still in each frame's own ego
    /// coordinates (resampling happens at sample build time).
    pub fine_labels: Option<Vec<OccupancyGrid>>,
    /// Labeled point clouds for frames 0..=Nf, in present coordinates.
    pub clouds: Option<Vec<LabeledPointCloud>>,
}

/// Re-references a window to the present frame: every box and point is mapped
/// by `T_present^-1 * T_world`; box sizes are unchanged. Tracks are gap-filled
/// by [`interpolate_track`] first (in world coordinates).
pub fn to_present_frame(scene: &Scene, window: &SequenceWindow) -> Result<PreparedWindow> {
    let first = window.scene_frame(-(window.n_past as i64));
    let last = window.scene_frame(window.n_future as i64);
    if last >= scene.num_frames() {
        return Err(Error::MissingPose(last));
    }
    let present_pose = scene.ego[window.present];
    let world_to_present = present_pose.inverse();

    let mut tracks = Vec::new();
    for track in &scene.tracks {
        let filled = interpolate_track(track);
        let mut states = BTreeMap::new();
        for (&k, state) in &filled.states {
            if k < first as i64 || k > last as i64 {
                continue;
            }
            let t = k - window.present as i64;
            states.insert(t, state.transformed(&world_to_present));
        }
        if !states.is_empty() {
            tracks.push(InstanceTrack {
                id: track.id,
                category: track.category,
                states,
            });
        }
    }

    let frame_to_present: Vec<Pose> = (0..=window.n_future)
        .map(|t| world_to_present * scene.ego[window.present + t])
        .collect();

    let fine_labels = scene
        .fine_labels
        .as_ref()
        .map(|fine| (0..=window.n_future).map(|t| fine[window.present + t].clone()).collect());

    let clouds = scene.clouds.as_ref().map(|clouds| {
        (0..=window.n_future)
            .map(|t| clouds[window.present + t].transformed(&frame_to_present[t]))
            .collect()
    });

    Ok(PreparedWindow {
        present_index: window.present,
        n_past: window.n_past,
        n_future: window.n_future,
        tracks,
        frame_to_present,
        fine_labels,
        clouds,
    })
}

fn wrap_angle(a: f64) -> f64 {
    let mut a = a % std::f64::consts::TAU;
    if a > std::f64::consts::PI {
        a -= std::f64::consts::TAU;
    } else if a <= -std::f64::consts::PI {
        a += std::f64::consts::TAU;
    }
    a
}

/// Fills annotation gaps under a constant-velocity assumption: linear center,
/// shortest-path yaw, size copied from the earlier endpoint, visibility the
/// minimum of the endpoints. Frames outside [t_in, t_out] are never created;
/// the operation is idempotent.
pub fn interpolate_track(track: &InstanceTrack) -> InstanceTrack {
    let keys: Vec<i64> = track.states.keys().copied().collect();
    let mut states = track.states.clone();
    for pair in keys.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if b - a <= 1 {
            continue;
        }
        let sa = track.states[&a];
        let sb = track.states[&b];
        let dyaw = wrap_angle(sb.yaw - sa.yaw);
        for t in a + 1..b {
            let alpha = (t - a) as f64 / (b - a) as f64;
            let center = [
                sa.center[0] + alpha * (sb.center[0] - sa.center[0]),
                sa.center[1] + alpha * (sb.center[1] - sa.center[1]),
                sa.center[2] + alpha * (sb.center[2] - sa.center[2]),
            ];
            states.insert(
                t,
                BoxState {
                    center,
                    size_lwh: sa.size_lwh,
                    yaw: wrap_angle(sa.yaw + alpha * dyaw),
                    visibility: sa.visibility.min(sb.visibility),
                },
            );
        }
    }
    InstanceTrack {
        id: track.id,
        category: track.category,
        states,
    }
}

/// Drops invalid instances from a re-referenced window:
/// (R1) first in-window frame in (-Np, 0] with visibility below 0.40,
/// (R2) first in-window frame at t >= 1,
/// (R3) center outside the grid extent at any window frame.
pub fn filter_invalid_tracks(window: &PreparedWindow, spec: &GridSpec) -> Vec<InstanceTrack> {
    window
        .tracks
        .iter()
        .filter(|track| {
            let t_first = track.t_in();
            if t_first >= 1 {
                return false; // R2
            }
            if t_first > -(window.n_past as i64) {
                let vis = track.states[&t_first].visibility;
                if vis < 0.40 {
                    return false; // R1
                }
            }
            for state in track.states.values() {
                if !spec.contains_point(&state.center_point()) {
                    return false; // R3
                }
            }
            true
        })
        .cloned()
        .collect()
}

/// Histogram of retained-track durations over (t_in, t_out) buckets with
/// t_in in [-Np, 0] and t_out in [0, Nf]. Tracks ending before the present
/// frame contribute no ground-truth occupancy and are skipped.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DurationHistogram {
    pub counts: BTreeMap<(i64, i64), u64>,
    pub total: u64,
}

impl DurationHistogram {
    pub fn fraction(&self, bucket: (i64, i64)) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        *self.counts.get(&bucket).unwrap_or(&0) as f64 / self.total as f64
    }
}

pub fn instance_duration_stats<'a, I>(windows: I) -> DurationHistogram
where
    I: IntoIterator<Item = &'a [InstanceTrack]>,
{
    let mut hist = DurationHistogram::default();
    for tracks in windows {
        for track in tracks {
            if track.t_out() < 0 {
                continue;
            }
            let bucket = (track.t_in(), track.t_out());
            *hist.counts.entry(bucket).or_insert(0) += 1;
            hist.total += 1;
        }
    }
    hist
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{Translation3, UnitQuaternion};

    fn boxstate(center: [f64; 3], yaw: f64, visibility: f64) -> BoxState {
        BoxState {
            center,
            size_lwh: [4.0, 2.0, 1.5],
            yaw,
            visibility,
        }
    }

    fn simple_scene(frames: usize) -> Scene {
        Scene {
            timestamps: (0..frames).map(|i| i as f64 * 0.5).collect(),
            ego: vec![Pose::identity(); frames],
            tracks: Vec::new(),
            fine_labels: None,
            clouds: None,
        }
    }

    #[test]
    fn split_counts() {
        assert_eq!(split_scene(&simple_scene(40), 2, 4).len(), 34);
        assert_eq!(split_scene(&simple_scene(7), 2, 4).len(), 1);
        assert_eq!(split_scene(&simple_scene(6), 2, 4).len(), 0);
    }

    #[test]
    fn split_present_indices() {
        let windows = split_scene(&simple_scene(10), 2, 4);
        let presents: Vec<usize> = windows.iter().map(|w| w.present).collect();
        assert_eq!(presents, vec![2, 3, 4, 5]);
    }

    #[test]
    fn interpolate_midpoint() {
        let mut states = BTreeMap::new();
        states.insert(0, boxstate([0.0, 0.0, 0.0], 0.0, 1.0));
        states.insert(2, boxstate([2.0, 0.0, 0.0], std::f64::consts::FRAC_PI_2, 0.6));
        let track = InstanceTrack {
            id: 1,
            category: Category::Car,
            states,
        };
        let filled = interpolate_track(&track);
        let mid = filled.states[&1];
        assert_relative_eq!(mid.center[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(mid.yaw, std::f64::consts::FRAC_PI_4, epsilon = 1e-12);
        assert_relative_eq!(mid.visibility, 0.6, epsilon = 1e-12);
        // no gaps -> unchanged, and idempotent
        assert_eq!(interpolate_track(&filled), filled);
    }

    #[test]
    fn interpolate_yaw_wraps() {
        let mut states = BTreeMap::new();
        states.insert(0, boxstate([0.0; 3], 3.0, 1.0));
        states.insert(2, boxstate([0.0; 3], -3.0, 1.0));
        let track = InstanceTrack {
            id: 1,
            category: Category::Car,
            states,
        };
        let filled = interpolate_track(&track);
        // shortest path crosses pi, not zero
        let mid = wrap_angle(filled.states[&1].yaw);
        assert!(mid.abs() > 3.0, "yaw midpoint {mid} should cross the pi seam");
    }

    #[test]
    fn present_frame_transform() {
        // ego translated +5 in x at the present; world-static box at origin
        let mut scene = simple_scene(3);
        scene.ego[2] = Pose::from_parts(
            Translation3::new(5.0, 0.0, 0.0),
            UnitQuaternion::identity(),
        );
        let mut states = BTreeMap::new();
        for k in 0..3 {
            states.insert(k, boxstate([0.0, 0.0, 0.0], 0.0, 1.0));
        }
        scene.tracks.push(InstanceTrack {
            id: 1,
            category: Category::Car,
            states,
        });
        let window = SequenceWindow {
            present: 2,
            n_past: 2,
            n_future: 0,
        };
        let prepared = to_present_frame(&scene, &window).unwrap();
        let state = prepared.tracks[0].states[&0];
        assert_relative_eq!(state.center[0], -5.0, epsilon = 1e-12);
    }

    #[test]
    fn filter_rules() {
        let spec = GridSpec::default_spec();
        let make = |t_first: i64, vis: f64, far: bool| -> InstanceTrack {
            let mut states = BTreeMap::new();
            for t in t_first..=4 {
                let x = if far && t == 3 { 60.0 } else { 0.0 };
                states.insert(t, boxstate([x, 0.0, 0.0], 0.0, vis));
            }
            InstanceTrack {
                id: 1,
                category: Category::Car,
                states,
            }
        };
        let window = |tracks: Vec<InstanceTrack>| PreparedWindow {
            present_index: 2,
            n_past: 2,
            n_future: 4,
            tracks,
            frame_to_present: vec![Pose::identity(); 5],
            fine_labels: None,
            clouds: None,
        };
        // R2: first appears in the future
        assert!(filter_invalid_tracks(&window(vec![make(2, 1.0, false)]), &spec).is_empty());
        // R1: newly appeared at t=0 with low visibility
        assert!(filter_invalid_tracks(&window(vec![make(0, 0.3, false)]), &spec).is_empty());
        // R1 boundary: visible enough at t=0 is kept
        assert_eq!(filter_invalid_tracks(&window(vec![make(0, 0.4, false)]), &spec).len(), 1);
        // present from the window start: exempt from the visibility rule
        assert_eq!(filter_invalid_tracks(&window(vec![make(-2, 0.1, false)]), &spec).len(), 1);
        // R3: leaves the extent at t=3
        assert!(filter_invalid_tracks(&window(vec![make(-2, 1.0, true)]), &spec).is_empty());
    }

    #[test]
    fn duration_stats() {
        let mk = |t_in: i64, t_out: i64| -> InstanceTrack {
            let mut states = BTreeMap::new();
            for t in t_in..=t_out {
                states.insert(t, boxstate([0.0; 3], 0.0, 1.0));
            }
            InstanceTrack {
                id: 1,
                category: Category::Car,
                states,
            }
        };
        let w1 = vec![mk(-2, 4), mk(0, 4)];
        let hist = instance_duration_stats([w1.as_slice()]);
        assert_eq!(hist.total, 2);
        assert_relative_eq!(hist.fraction((-2, 4)), 0.5);
        assert_relative_eq!(hist.fraction((0, 4)), 0.5);
        let empty = instance_duration_stats(std::iter::empty::<&[InstanceTrack]>());
        assert_eq!(empty.total, 0);
        assert!(empty.counts.is_empty());
    }
}
