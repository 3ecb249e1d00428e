//! Voxel-grid primitives shared by the whole toolkit: the grid geometry
//! ([`GridSpec`]), dense label storage ([`OccupancyGrid`]), frame sequences,
//! and per-voxel flow volumes.
//!
//! Cell membership is half-open `[min, min + res)` per axis so every in-extent
//! point maps to exactly one voxel. The linear memory layout is z-fastest:
//! `index = (ix * ny + iy) * nz + iz`.

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spatial extent, resolution, and temporal horizons defining every volume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub z_min: f64,
    pub z_max: f64,
    /// Meters per voxel.
    pub resolution: f64,
    /// Number of past frames in a sequence window (Np).
    pub n_past: usize,
    /// Number of future frames in a sequence window (Nf).
    pub n_future: usize,
}

impl GridSpec {
    pub fn new(
        x_range: (f64, f64),
        y_range: (f64, f64),
        z_range: (f64, f64),
        resolution: f64,
        n_past: usize,
        n_future: usize,
    ) -> Result<Self> {
        let spec = GridSpec {
            x_min: x_range.0,
            x_max: x_range.1,
            y_min: y_range.0,
            y_max: y_range.1,
            z_min: z_range.0,
            z_max: z_range.1,
            resolution,
            n_past,
            n_future,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// 102.4 m x 102.4 m x 8 m extent at 0.2 m resolution: (512, 512, 40)
    /// voxels, two past frames, four future frames.
    pub fn default_spec() -> Self {
        GridSpec::new((-51.2, 51.2), (-51.2, 51.2), (-5.0, 3.0), 0.2, 2, 4)
            .expect("default spec is valid")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.resolution > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "resolution must be positive, got {}",
                self.resolution
            )));
        }
        for (name, lo, hi) in [
            ("x", self.x_min, self.x_max),
            ("y", self.y_min, self.y_max),
            ("z", self.z_min, self.z_max),
        ] {
            let len = hi - lo;
            if !(len > 0.0) {
                return Err(Error::InvalidSpec(format!(
                    "{name} extent must be positive, got [{lo}, {hi}]"
                )));
            }
            let cells = len / self.resolution;
            if (cells - cells.round()).abs() * self.resolution > 1e-9 {
                return Err(Error::InvalidSpec(format!(
                    "{name} extent {len} is not an integer multiple of resolution {}",
                    self.resolution
                )));
            }
            if cells.round() < 1.0 {
                return Err(Error::InvalidSpec(format!("{name} extent yields zero cells")));
            }
        }
        Ok(())
    }

    fn axis_cells(&self, lo: f64, hi: f64) -> usize {
        ((hi - lo) / self.resolution).round() as usize
    }

    pub fn nx(&self) -> usize {
        self.axis_cells(self.x_min, self.x_max)
    }

    pub fn ny(&self) -> usize {
        self.axis_cells(self.y_min, self.y_max)
    }

    pub fn nz(&self) -> usize {
        self.axis_cells(self.z_min, self.z_max)
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.nx(), self.ny(), self.nz())
    }

    pub fn voxel_count(&self) -> usize {
        self.nx() * self.ny() * self.nz()
    }

    /// Diagonal length of the full grid extent in meters.
    pub fn extent_diagonal(&self) -> f64 {
        let dx = self.x_max - self.x_min;
        let dy = self.y_max - self.y_min;
        let dz = self.z_max - self.z_min;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    /// Linear index under the z-fastest layout.
    #[inline]
    pub fn linear_index(&self, idx: VoxelIndex) -> usize {
        (idx.ix * self.ny() + idx.iy) * self.nz() + idx.iz
    }

    /// Inverse of [`GridSpec::linear_index`].
    #[inline]
    pub fn voxel_at(&self, linear: usize) -> VoxelIndex {
        let nz = self.nz();
        let ny = self.ny();
        let iz = linear % nz;
        let rest = linear / nz;
        let iy = rest % ny;
        let ix = rest / ny;
        VoxelIndex { ix, iy, iz }
    }

    /// Index of the voxel whose half-open cell contains `p`, or `None` when
    /// `p` lies outside the extent.
    pub fn world_to_voxel(&self, p: &Point3<f64>) -> Option<VoxelIndex> {
        let cell = |v: f64, lo: f64, n: usize| -> Option<usize> {
            let f = (v - lo) / self.resolution;
            if f < 0.0 {
                return None;
            }
            let i = f.floor() as usize;
            if i >= n {
                return None;
            }
            Some(i)
        };
        Some(VoxelIndex {
            ix: cell(p.x, self.x_min, self.nx())?,
            iy: cell(p.y, self.y_min, self.ny())?,
            iz: cell(p.z, self.z_min, self.nz())?,
        })
    }

    /// Center of the voxel at `idx`: `min + (idx + 0.5) * resolution` per axis.
    pub fn voxel_center(&self, idx: VoxelIndex) -> Result<Point3<f64>> {
        self.check_index(idx)?;
        Ok(self.voxel_center_unchecked(idx))
    }

    #[inline]
    pub fn voxel_center_unchecked(&self, idx: VoxelIndex) -> Point3<f64> {
        Point3::new(
            self.x_min + (idx.ix as f64 + 0.5) * self.resolution,
            self.y_min + (idx.iy as f64 + 0.5) * self.resolution,
            self.z_min + (idx.iz as f64 + 0.5) * self.resolution,
        )
    }

    pub fn check_index(&self, idx: VoxelIndex) -> Result<()> {
        let (nx, ny, nz) = self.dims();
        if idx.ix >= nx || idx.iy >= ny || idx.iz >= nz {
            return Err(Error::IndexOutOfRange {
                ix: idx.ix,
                iy: idx.iy,
                iz: idx.iz,
                nx,
                ny,
                nz,
            });
        }
        Ok(())
    }

    pub fn contains_point(&self, p: &Point3<f64>) -> bool {
        p.x >= self.x_min
            && p.x < self.x_max
            && p.y >= self.y_min
            && p.y < self.y_max
            && p.z >= self.z_min
            && p.z < self.z_max
    }

    /// Spatial fields match (extent and resolution); temporal horizons are
    /// not compared.
    pub fn same_geometry(&self, other: &GridSpec) -> bool {
        self.x_min == other.x_min
            && self.x_max == other.x_max
            && self.y_min == other.y_min
            && self.y_max == other.y_max
            && self.z_min == other.z_min
            && self.z_max == other.z_max
            && self.resolution == other.resolution
    }
}

/// Per-voxel semantic state. Numeric codes are fixed for the binary format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum SemanticLabel {
    Free = 0,
    /// General movable objects.
    Gmo = 1,
    /// General static objects.
    Gso = 2,
}

impl SemanticLabel {
    pub fn from_u8(v: u8) -> Option<SemanticLabel> {
        match v {
            0 => Some(SemanticLabel::Free),
            1 => Some(SemanticLabel::Gmo),
            2 => Some(SemanticLabel::Gso),
            _ => None,
        }
    }

    pub const ALL: [SemanticLabel; 3] =
        [SemanticLabel::Free, SemanticLabel::Gmo, SemanticLabel::Gso];
}

/// Nonnegative voxel coordinates, valid when each component is below the
/// corresponding grid dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VoxelIndex {
    pub ix: usize,
    pub iy: usize,
    pub iz: usize,
}

/// Dense label volume with optional per-voxel instance IDs.
///
/// Instance IDs are 16-bit with 0 reserved for "no instance", and are nonzero
/// only at GMO voxels.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    spec: GridSpec,
    labels: Vec<SemanticLabel>,
    instance_ids: Option<Vec<u16>>,
}

impl OccupancyGrid {
    pub fn new(spec: GridSpec) -> Self {
        let n = spec.voxel_count();
        OccupancyGrid {
            spec,
            labels: vec![SemanticLabel::Free; n],
            instance_ids: None,
        }
    }

    pub fn new_with_ids(spec: GridSpec) -> Self {
        let n = spec.voxel_count();
        OccupancyGrid {
            spec,
            labels: vec![SemanticLabel::Free; n],
            instance_ids: Some(vec![0u16; n]),
        }
    }

    /// Builds a grid from raw parts, checking lengths and the ID/GMO
    /// consistency invariant.
    pub fn from_parts(
        spec: GridSpec,
        labels: Vec<SemanticLabel>,
        instance_ids: Option<Vec<u16>>,
    ) -> Result<Self> {
        let n = spec.voxel_count();
        if labels.len() != n {
            return Err(Error::InvalidSpec(format!(
                "label array length {} does not match voxel count {n}",
                labels.len()
            )));
        }
        if let Some(ids) = &instance_ids {
            if ids.len() != n {
                return Err(Error::InvalidSpec(format!(
                    "instance id array length {} does not match voxel count {n}",
                    ids.len()
                )));
            }
            for (i, (&label, &id)) in labels.iter().zip(ids.iter()).enumerate() {
                if id != 0 && label != SemanticLabel::Gmo {
                    return Err(Error::InvalidSpec(format!(
                        "instance id {id} at linear index {i} on non-GMO voxel"
                    )));
                }
            }
        }
        Ok(OccupancyGrid {
            spec,
            labels,
            instance_ids,
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn labels(&self) -> &[SemanticLabel] {
        &self.labels
    }

    pub fn instance_ids(&self) -> Option<&[u16]> {
        self.instance_ids.as_deref()
    }

    pub fn has_ids(&self) -> bool {
        self.instance_ids.is_some()
    }

    #[inline]
    pub fn label_at(&self, idx: VoxelIndex) -> SemanticLabel {
        self.labels[self.spec.linear_index(idx)]
    }

    #[inline]
    pub fn id_at(&self, idx: VoxelIndex) -> u16 {
        self.instance_ids
            .as_ref()
            .map(|ids| ids[self.spec.linear_index(idx)])
            .unwrap_or(0)
    }

    /// Sets a voxel's label, clearing any instance ID when the label leaves GMO.
    pub fn set_label(&mut self, idx: VoxelIndex, label: SemanticLabel) {
        let lin = self.spec.linear_index(idx);
        self.labels[lin] = label;
        if label != SemanticLabel::Gmo {
            if let Some(ids) = &mut self.instance_ids {
                ids[lin] = 0;
            }
        }
    }

    /// Marks a voxel as GMO carrying `id`.
    pub fn set_gmo(&mut self, idx: VoxelIndex, id: u16) {
        let lin = self.spec.linear_index(idx);
        self.labels[lin] = SemanticLabel::Gmo;
        if let Some(ids) = &mut self.instance_ids {
            ids[lin] = id;
        }
    }

    pub fn count_label(&self, label: SemanticLabel) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    /// Linear indices of all voxels carrying `label`.
    pub fn indices_with_label(&self, label: SemanticLabel) -> impl Iterator<Item = usize> + '_ {
        self.labels
            .iter()
            .enumerate()
            .filter(move |(_, &l)| l == label)
            .map(|(i, _)| i)
    }
}

/// Nf+1 label volumes in the present (t = 0) ego frame; frame 0 is the
/// present, frames 1..Nf the future.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancySequence {
    frames: Vec<OccupancyGrid>,
}

impl OccupancySequence {
    pub fn new(frames: Vec<OccupancyGrid>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::InvalidSpec("sequence must have at least one frame".into()));
        }
        let expected = frames[0].spec().n_future + 1;
        if frames.len() != expected {
            return Err(Error::InvalidSpec(format!(
                "sequence has {} frames, spec requires Nf+1 = {expected}",
                frames.len()
            )));
        }
        for f in &frames[1..] {
            if f.spec() != frames[0].spec() {
                return Err(Error::SpecMismatch(
                    "all frames of a sequence must share one spec".into(),
                ));
            }
        }
        Ok(OccupancySequence { frames })
    }

    pub fn spec(&self) -> &GridSpec {
        self.frames[0].spec()
    }

    pub fn frames(&self) -> &[OccupancyGrid] {
        &self.frames
    }

    pub fn frame(&self, t: usize) -> &OccupancyGrid {
        &self.frames[t]
    }

    pub fn present(&self) -> &OccupancyGrid {
        &self.frames[0]
    }

    pub fn n_future(&self) -> usize {
        self.frames.len() - 1
    }

    pub fn into_frames(self) -> Vec<OccupancyGrid> {
        self.frames
    }
}

/// Per-voxel 3D backward displacement vectors with a validity mask.
/// Invalid voxels carry the zero vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowVolume {
    spec: GridSpec,
    vectors: Vec<Vector3<f64>>,
    valid: Vec<bool>,
}

/// Zero-filled `Vec<Vector3<f64>>` straight from the allocator. `vec![...]`
/// clones per element here (no memset specialization for nalgebra types),
/// which dominates full-resolution sample construction; `alloc_zeroed` gets
/// lazily-mapped zero pages instead.
fn zeroed_vectors(n: usize) -> Vec<Vector3<f64>> {
    if n == 0 {
        return Vec::new();
    }
    let layout = std::alloc::Layout::array::<Vector3<f64>>(n).expect("layout overflow");
    // SAFETY: Vector3<f64> is three plain f64s; all-zero bytes is the zero
    // vector. The pointer comes from the global allocator with the exact
    // layout Vec expects.
    unsafe {
        let ptr = std::alloc::alloc_zeroed(layout) as *mut Vector3<f64>;
        if ptr.is_null() {
            std::alloc::handle_alloc_error(layout);
        }
        Vec::from_raw_parts(ptr, n, n)
    }
}

impl FlowVolume {
    pub fn new(spec: GridSpec) -> Self {
        let n = spec.voxel_count();
        FlowVolume {
            spec,
            vectors: zeroed_vectors(n),
            valid: vec![false; n],
        }
    }

    pub fn from_parts(spec: GridSpec, vectors: Vec<Vector3<f64>>, valid: Vec<bool>) -> Result<Self> {
        let n = spec.voxel_count();
        if vectors.len() != n || valid.len() != n {
            return Err(Error::InvalidSpec(format!(
                "flow arrays ({}, {}) do not match voxel count {n}",
                vectors.len(),
                valid.len()
            )));
        }
        let max_mag = spec.extent_diagonal();
        for (i, (vec, &ok)) in vectors.iter().zip(valid.iter()).enumerate() {
            if !ok && vec.norm() != 0.0 {
                return Err(Error::InvalidSpec(format!(
                    "invalid flow voxel {i} carries a nonzero vector"
                )));
            }
            if vec.norm() > max_mag {
                return Err(Error::InvalidSpec(format!(
                    "flow magnitude {} at voxel {i} exceeds extent diagonal {max_mag}",
                    vec.norm()
                )));
            }
        }
        Ok(FlowVolume { spec, vectors, valid })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn vectors(&self) -> &[Vector3<f64>] {
        &self.vectors
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    #[inline]
    pub fn set(&mut self, lin: usize, v: Vector3<f64>) {
        self.vectors[lin] = v;
        self.valid[lin] = true;
    }

    #[inline]
    pub fn vector_at(&self, idx: VoxelIndex) -> (Vector3<f64>, bool) {
        let lin = self.spec.linear_index(idx);
        (self.vectors[lin], self.valid[lin])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn default_spec_dims() {
        let spec = GridSpec::default_spec();
        assert_eq!(spec.dims(), (512, 512, 40));
    }

    #[test]
    fn bad_specs_rejected() {
        assert!(GridSpec::new((0.0, 1.0), (0.0, 1.0), (0.0, 1.0), 0.0, 1, 1).is_err());
        assert!(GridSpec::new((0.0, 1.0), (0.0, 1.0), (0.0, 1.0), -0.2, 1, 1).is_err());
        // extent not a multiple of resolution
        assert!(GridSpec::new((0.0, 1.1), (0.0, 1.0), (0.0, 1.0), 0.2, 1, 1).is_err());
        // empty extent
        assert!(GridSpec::new((1.0, 1.0), (0.0, 1.0), (0.0, 1.0), 0.2, 1, 1).is_err());
    }

    #[test]
    fn world_to_voxel_corners() {
        let spec = GridSpec::default_spec();
        // lower corner belongs to the first cell by the half-open rule
        assert_eq!(
            spec.world_to_voxel(&Point3::new(-51.2, -51.2, -5.0)),
            Some(VoxelIndex { ix: 0, iy: 0, iz: 0 })
        );
        // upper boundary is excluded
        assert_eq!(spec.world_to_voxel(&Point3::new(51.2, 0.0, 0.0)), None);
        assert_eq!(
            spec.world_to_voxel(&Point3::new(0.0, 0.0, 0.0)),
            Some(VoxelIndex { ix: 256, iy: 256, iz: 25 })
        );
    }

    #[test]
    fn voxel_center_values() {
        let spec = GridSpec::default_spec();
        let c = spec.voxel_center(VoxelIndex { ix: 0, iy: 0, iz: 0 }).unwrap();
        assert_relative_eq!(c.x, -51.1, epsilon = 1e-9);
        assert_relative_eq!(c.y, -51.1, epsilon = 1e-9);
        assert_relative_eq!(c.z, -4.9, epsilon = 1e-9);
        let c = spec
            .voxel_center(VoxelIndex { ix: 256, iy: 256, iz: 25 })
            .unwrap();
        assert_relative_eq!(c.x, 0.1, epsilon = 1e-9);
        assert_relative_eq!(c.y, 0.1, epsilon = 1e-9);
        assert_relative_eq!(c.z, 0.1, epsilon = 1e-9);
        assert!(spec.voxel_center(VoxelIndex { ix: 512, iy: 0, iz: 0 }).is_err());
    }

    #[test]
    fn count_label_small() {
        let spec = GridSpec::new((0.0, 1.0), (0.0, 1.0), (0.0, 1.0), 0.5, 1, 1).unwrap();
        let mut g = OccupancyGrid::new(spec);
        assert_eq!(g.count_label(SemanticLabel::Gmo), 0);
        g.set_label(VoxelIndex { ix: 0, iy: 1, iz: 0 }, SemanticLabel::Gmo);
        assert_eq!(g.count_label(SemanticLabel::Gmo), 1);
        assert_eq!(g.count_label(SemanticLabel::Free), 7);
    }

    #[test]
    fn id_on_non_gmo_rejected() {
        let spec = GridSpec::new((0.0, 1.0), (0.0, 1.0), (0.0, 1.0), 0.5, 1, 1).unwrap();
        let labels = vec![SemanticLabel::Free; 8];
        let mut ids = vec![0u16; 8];
        ids[3] = 7;
        assert!(OccupancyGrid::from_parts(spec, labels, Some(ids)).is_err());
    }

    #[test]
    fn linear_index_layout() {
        let spec = GridSpec::new((0.0, 1.2), (0.0, 0.9), (0.0, 0.6), 0.3, 1, 1).unwrap();
        assert_eq!(spec.dims(), (4, 3, 2));
        // z fastest, then y, then x
        let mut seen = vec![false; spec.voxel_count()];
        for ix in 0..4 {
            for iy in 0..3 {
                for iz in 0..2 {
                    let idx = VoxelIndex { ix, iy, iz };
                    let lin = spec.linear_index(idx);
                    assert_eq!(lin, (ix * 3 + iy) * 2 + iz);
                    assert_eq!(spec.voxel_at(lin), idx);
                    seen[lin] = true;
                }
            }
        }
        assert!(seen.iter().all(|&s| s));
    }
}
