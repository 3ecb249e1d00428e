//! File formats: the scene interchange document (JSON), dense binary volumes
//! ("C4DO" label grids, "C4DF" flow volumes, "C4DP" labeled point clouds),
//! and report writers.
//!
//! All binary payloads are little-endian and dense, laid out z-fastest like
//! the in-memory grids, so identical inputs produce byte-identical files on
//! every platform.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::{Point3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::baseline::Forecast;
use crate::error::{Error, Result};
use crate::grid::{FlowVolume, GridSpec, OccupancyGrid, OccupancySequence, SemanticLabel};
use crate::metrics::EvalReport;
use crate::pipeline::{Sample, SampleMeta, TaskMode};
use crate::scene::{BoxState, Category, InstanceTrack, LabeledPointCloud, Pose, Scene};

pub const GRID_MAGIC: [u8; 4] = *b"C4DO";
pub const FLOW_MAGIC: [u8; 4] = *b"C4DF";
pub const CLOUD_MAGIC: [u8; 4] = *b"C4DP";
pub const FORMAT_VERSION: u32 = 1;
pub const SCHEMA_VERSION: u32 = 1;

const VOLUME_HEADER_BYTES: u64 = 4 + 4 + 3 + 12 + 32 + 4;
const FLAG_IDS: u32 = 1;

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

// ---------------------------------------------------------------------------
// binary volume header shared by grid and flow files

struct VolumeHeader {
    mode: u8,
    np: u8,
    nf: u8,
    nx: u32,
    ny: u32,
    nz: u32,
    x_min: f64,
    y_min: f64,
    z_min: f64,
    resolution: f64,
    flags: u32,
}

impl VolumeHeader {
    fn from_spec(spec: &GridSpec, mode: u8, flags: u32) -> VolumeHeader {
        let (nx, ny, nz) = spec.dims();
        VolumeHeader {
            mode,
            np: spec.n_past as u8,
            nf: spec.n_future as u8,
            nx: nx as u32,
            ny: ny as u32,
            nz: nz as u32,
            x_min: spec.x_min,
            y_min: spec.y_min,
            z_min: spec.z_min,
            resolution: spec.resolution,
            flags,
        }
    }

    fn to_spec(&self, path: &Path) -> Result<GridSpec> {
        let res = self.resolution;
        GridSpec::new(
            (self.x_min, self.x_min + self.nx as f64 * res),
            (self.y_min, self.y_min + self.ny as f64 * res),
            (self.z_min, self.z_min + self.nz as f64 * res),
            res,
            self.np as usize,
            self.nf as usize,
        )
        .map_err(|e| format_err(path, format!("header does not form a valid grid spec: {e}")))
    }

    fn voxels(&self) -> u64 {
        self.nx as u64 * self.ny as u64 * self.nz as u64
    }

    fn write<W: Write>(&self, w: &mut W, magic: &[u8; 4]) -> std::io::Result<()> {
        w.write_all(magic)?;
        w.write_u32::<LittleEndian>(FORMAT_VERSION)?;
        w.write_u8(self.mode)?;
        w.write_u8(self.np)?;
        w.write_u8(self.nf)?;
        w.write_u32::<LittleEndian>(self.nx)?;
        w.write_u32::<LittleEndian>(self.ny)?;
        w.write_u32::<LittleEndian>(self.nz)?;
        w.write_f64::<LittleEndian>(self.x_min)?;
        w.write_f64::<LittleEndian>(self.y_min)?;
        w.write_f64::<LittleEndian>(self.z_min)?;
        w.write_f64::<LittleEndian>(self.resolution)?;
        w.write_u32::<LittleEndian>(self.flags)
    }

    fn read<R: Read>(r: &mut R, magic: &[u8; 4], path: &Path) -> Result<VolumeHeader> {
        let mut found = [0u8; 4];
        r.read_exact(&mut found).map_err(|e| io_err(path, e))?;
        if &found != magic {
            return Err(format_err(
                path,
                format!(
                    "bad magic {:?}, expected {:?}",
                    String::from_utf8_lossy(&found),
                    String::from_utf8_lossy(magic)
                ),
            ));
        }
        let version = r.read_u32::<LittleEndian>().map_err(|e| io_err(path, e))?;
        if version != FORMAT_VERSION {
            return Err(format_err(
                path,
                format!("unknown format version {version}, expected {FORMAT_VERSION}"),
            ));
        }
        Ok(VolumeHeader {
            mode: r.read_u8().map_err(|e| io_err(path, e))?,
            np: r.read_u8().map_err(|e| io_err(path, e))?,
            nf: r.read_u8().map_err(|e| io_err(path, e))?,
            nx: r.read_u32::<LittleEndian>().map_err(|e| io_err(path, e))?,
            ny: r.read_u32::<LittleEndian>().map_err(|e| io_err(path, e))?,
            nz: r.read_u32::<LittleEndian>().map_err(|e| io_err(path, e))?,
            x_min: r.read_f64::<LittleEndian>().map_err(|e| io_err(path, e))?,
            y_min: r.read_f64::<LittleEndian>().map_err(|e| io_err(path, e))?,
            z_min: r.read_f64::<LittleEndian>().map_err(|e| io_err(path, e))?,
            resolution: r.read_f64::<LittleEndian>().map_err(|e| io_err(path, e))?,
            flags: r.read_u32::<LittleEndian>().map_err(|e| io_err(path, e))?,
        })
    }
}

fn check_payload_size(path: &Path, expected_payload: u64) -> Result<()> {
    let len = std::fs::metadata(path).map_err(|e| io_err(path, e))?.len();
    let expected = VOLUME_HEADER_BYTES + expected_payload;
    if len != expected {
        return Err(format_err(
            path,
            format!("file is {len} bytes, header requires {expected} bytes"),
        ));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// GridFile

/// Writes an occupancy sequence (frames t = 0..Nf). Instance IDs are stored
/// when every frame carries them.
pub fn save_grid_sequence(path: &Path, seq: &OccupancySequence, mode: TaskMode) -> Result<()> {
    let with_ids = seq.frames().iter().all(|f| f.has_ids());
    let header = VolumeHeader::from_spec(
        seq.spec(),
        mode.code(),
        if with_ids { FLAG_IDS } else { 0 },
    );
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    header.write(&mut w, &GRID_MAGIC).map_err(|e| io_err(path, e))?;
    for frame in seq.frames() {
        let bytes: Vec<u8> = frame.labels().iter().map(|&l| l as u8).collect();
        w.write_all(&bytes).map_err(|e| io_err(path, e))?;
        if with_ids {
            for &id in frame.instance_ids().expect("checked above") {
                w.write_u16::<LittleEndian>(id).map_err(|e| io_err(path, e))?;
            }
        }
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Loads an occupancy sequence plus the task mode recorded in the header.
pub fn load_grid_sequence(path: &Path) -> Result<(OccupancySequence, TaskMode)> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut r = BufReader::new(file);
    let header = VolumeHeader::read(&mut r, &GRID_MAGIC, path)?;
    let mode = TaskMode::from_code(header.mode)
        .ok_or_else(|| format_err(path, format!("unknown task mode code {}", header.mode)))?;
    let spec = header.to_spec(path)?;
    let n = header.voxels();
    let frames_count = header.nf as u64 + 1;
    let with_ids = header.flags & FLAG_IDS != 0;
    let per_frame = n + if with_ids { 2 * n } else { 0 };
    check_payload_size(path, frames_count * per_frame)?;

    let mut frames = Vec::with_capacity(frames_count as usize);
    for _ in 0..frames_count {
        let mut raw = vec![0u8; n as usize];
        r.read_exact(&mut raw).map_err(|e| io_err(path, e))?;
        let mut labels = Vec::with_capacity(n as usize);
        for (i, &b) in raw.iter().enumerate() {
            labels.push(SemanticLabel::from_u8(b).ok_or_else(|| {
                format_err(path, format!("invalid label byte {b} at voxel {i}"))
            })?);
        }
        let ids = if with_ids {
            let mut ids = vec![0u16; n as usize];
            r.read_u16_into::<LittleEndian>(&mut ids)
                .map_err(|e| io_err(path, e))?;
            Some(ids)
        } else {
            None
        };
        frames.push(
            OccupancyGrid::from_parts(spec.clone(), labels, ids)
                .map_err(|e| format_err(path, format!("inconsistent payload: {e}")))?,
        );
    }
    let seq = OccupancySequence::new(frames)
        .map_err(|e| format_err(path, format!("inconsistent payload: {e}")))?;
    Ok((seq, mode))
}

/// Writes a single grid (fine labels, BEV planes) as a one-frame file with
/// Np = Nf = 0.
pub fn save_single_grid(path: &Path, grid: &OccupancyGrid) -> Result<()> {
    let mut spec = grid.spec().clone();
    spec.n_past = 0;
    spec.n_future = 0;
    let single = OccupancyGrid::from_parts(
        spec,
        grid.labels().to_vec(),
        grid.instance_ids().map(|ids| ids.to_vec()),
    )?;
    let seq = OccupancySequence::new(vec![single])?;
    save_grid_sequence(path, &seq, TaskMode::InflatedGmo)
}

pub fn load_single_grid(path: &Path) -> Result<OccupancyGrid> {
    let (seq, _) = load_grid_sequence(path)?;
    if seq.frames().len() != 1 {
        return Err(format_err(
            path,
            format!("expected a single-frame volume, found {} frames", seq.frames().len()),
        ));
    }
    Ok(seq.into_frames().remove(0))
}

// ---------------------------------------------------------------------------
// FlowFile

/// Writes the Nf+1 backward flow volumes. Vectors are stored as f32 triples.
pub fn save_flow_volumes(path: &Path, flows: &[FlowVolume], mode: TaskMode) -> Result<()> {
    if flows.is_empty() {
        return Err(Error::Config("flow file needs at least one volume".into()));
    }
    let spec = flows[0].spec();
    if flows.len() != spec.n_future + 1 {
        return Err(Error::Config(format!(
            "expected Nf+1 = {} flow volumes, got {}",
            spec.n_future + 1,
            flows.len()
        )));
    }
    for f in flows {
        if f.spec() != spec {
            return Err(Error::SpecMismatch(
                "all flow volumes must share one spec".into(),
            ));
        }
    }
    let header = VolumeHeader::from_spec(spec, mode.code(), 0);
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    header.write(&mut w, &FLOW_MAGIC).map_err(|e| io_err(path, e))?;
    for flow in flows {
        for v in flow.vectors() {
            w.write_f32::<LittleEndian>(v.x as f32).map_err(|e| io_err(path, e))?;
            w.write_f32::<LittleEndian>(v.y as f32).map_err(|e| io_err(path, e))?;
            w.write_f32::<LittleEndian>(v.z as f32).map_err(|e| io_err(path, e))?;
        }
        let mask: Vec<u8> = flow.valid().iter().map(|&b| b as u8).collect();
        w.write_all(&mask).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn load_flow_volumes(path: &Path) -> Result<Vec<FlowVolume>> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut r = BufReader::new(file);
    let header = VolumeHeader::read(&mut r, &FLOW_MAGIC, path)?;
    let spec = header.to_spec(path)?;
    let n = header.voxels();
    let frames = header.nf as u64 + 1;
    check_payload_size(path, frames * (12 * n + n))?;

    let mut out = Vec::with_capacity(frames as usize);
    for _ in 0..frames {
        let mut raw = vec![0f32; 3 * n as usize];
        r.read_f32_into::<LittleEndian>(&mut raw)
            .map_err(|e| io_err(path, e))?;
        let mut mask = vec![0u8; n as usize];
        r.read_exact(&mut mask).map_err(|e| io_err(path, e))?;
        let vectors: Vec<Vector3<f64>> = raw
            .chunks_exact(3)
            .map(|c| Vector3::new(c[0] as f64, c[1] as f64, c[2] as f64))
            .collect();
        let valid: Vec<bool> = mask
            .iter()
            .map(|&b| match b {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(format_err(path, format!("invalid validity byte {other}"))),
            })
            .collect::<Result<_>>()?;
        out.push(
            FlowVolume::from_parts(spec.clone(), vectors, valid)
                .map_err(|e| format_err(path, format!("inconsistent flow payload: {e}")))?,
        );
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// labeled point clouds

/// Writes a labeled point list: count u64, then per point x/y/z f32 + label
/// byte. Coordinates are truncated to f32; fine for sensor-scale data.
pub fn save_point_cloud(path: &Path, cloud: &LabeledPointCloud) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&CLOUD_MAGIC).map_err(|e| io_err(path, e))?;
    w.write_u32::<LittleEndian>(FORMAT_VERSION).map_err(|e| io_err(path, e))?;
    w.write_u64::<LittleEndian>(cloud.points.len() as u64)
        .map_err(|e| io_err(path, e))?;
    for (p, &label) in cloud.points.iter().zip(cloud.labels.iter()) {
        w.write_f32::<LittleEndian>(p.x as f32).map_err(|e| io_err(path, e))?;
        w.write_f32::<LittleEndian>(p.y as f32).map_err(|e| io_err(path, e))?;
        w.write_f32::<LittleEndian>(p.z as f32).map_err(|e| io_err(path, e))?;
        w.write_u8(label as u8).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn load_point_cloud(path: &Path) -> Result<LabeledPointCloud> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| io_err(path, e))?;
    if magic != CLOUD_MAGIC {
        return Err(format_err(
            path,
            format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(&magic),
                String::from_utf8_lossy(&CLOUD_MAGIC)
            ),
        ));
    }
    let version = r.read_u32::<LittleEndian>().map_err(|e| io_err(path, e))?;
    if version != FORMAT_VERSION {
        return Err(format_err(
            path,
            format!("unknown format version {version}, expected {FORMAT_VERSION}"),
        ));
    }
    let count = r.read_u64::<LittleEndian>().map_err(|e| io_err(path, e))?;
    let expected = 4 + 4 + 8 + count * 13;
    let len = std::fs::metadata(path).map_err(|e| io_err(path, e))?.len();
    if len != expected {
        return Err(format_err(
            path,
            format!("file is {len} bytes, header requires {expected} bytes"),
        ));
    }
    let mut points = Vec::with_capacity(count as usize);
    let mut labels = Vec::with_capacity(count as usize);
    for i in 0..count {
        let x = r.read_f32::<LittleEndian>().map_err(|e| io_err(path, e))?;
        let y = r.read_f32::<LittleEndian>().map_err(|e| io_err(path, e))?;
        let z = r.read_f32::<LittleEndian>().map_err(|e| io_err(path, e))?;
        let b = r.read_u8().map_err(|e| io_err(path, e))?;
        points.push(Point3::new(x as f64, y as f64, z as f64));
        labels.push(
            SemanticLabel::from_u8(b)
                .ok_or_else(|| format_err(path, format!("invalid label byte {b} at point {i}")))?,
        );
    }
    LabeledPointCloud::new(points, labels)
        .map_err(|e| format_err(path, format!("inconsistent cloud payload: {e}")))
}

// ---------------------------------------------------------------------------
// scene interchange document

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneDocument {
    pub schema_version: u32,
    /// Per-frame timestamps in seconds, strictly increasing.
    pub frames: Vec<f64>,
    pub ego: Vec<EgoEntry>,
    pub instances: Vec<InstanceEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fine_label_files: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cloud_files: Option<Vec<String>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EgoEntry {
    pub frame: usize,
    /// Unit quaternion as w, x, y, z.
    pub quaternion: [f64; 4],
    pub translation: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceEntry {
    pub id: u16,
    pub category: Category,
    pub states: Vec<StateEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateEntry {
    pub frame: i64,
    pub center: [f64; 3],
    pub size_lwh: [f64; 3],
    pub yaw: f64,
    pub visibility: f64,
}

fn pose_to_entry(frame: usize, pose: &Pose) -> EgoEntry {
    let q = pose.rotation.quaternion();
    EgoEntry {
        frame,
        quaternion: [q.w, q.i, q.j, q.k],
        translation: [pose.translation.x, pose.translation.y, pose.translation.z],
    }
}

pub fn scene_to_document(scene: &Scene) -> SceneDocument {
    SceneDocument {
        schema_version: SCHEMA_VERSION,
        frames: scene.timestamps.clone(),
        ego: scene
            .ego
            .iter()
            .enumerate()
            .map(|(i, p)| pose_to_entry(i, p))
            .collect(),
        instances: scene
            .tracks
            .iter()
            .map(|t| InstanceEntry {
                id: t.id,
                category: t.category,
                states: t
                    .states
                    .iter()
                    .map(|(&frame, s)| StateEntry {
                        frame,
                        center: s.center,
                        size_lwh: s.size_lwh,
                        yaw: s.yaw,
                        visibility: s.visibility,
                    })
                    .collect(),
            })
            .collect(),
        fine_label_files: None,
        cloud_files: None,
    }
}

pub fn document_to_scene(doc: &SceneDocument, base_dir: &Path) -> Result<Scene> {
    if doc.schema_version != SCHEMA_VERSION {
        return Err(Error::Config(format!(
            "unknown schema_version {}, expected {SCHEMA_VERSION}",
            doc.schema_version
        )));
    }
    let n = doc.frames.len();
    let mut ego = vec![None; n];
    for e in &doc.ego {
        if e.frame >= n {
            return Err(Error::InvalidScene(format!(
                "ego entry for frame {} beyond {} frames",
                e.frame, n
            )));
        }
        let [w, x, y, z] = e.quaternion;
        let q = nalgebra::Quaternion::new(w, x, y, z);
        if (q.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidScene(format!(
                "ego quaternion at frame {} has norm {}, expected 1 within 1e-9",
                e.frame,
                q.norm()
            )));
        }
        ego[e.frame] = Some(Pose::from_parts(
            Translation3::new(e.translation[0], e.translation[1], e.translation[2]),
            UnitQuaternion::from_quaternion(q),
        ));
    }
    let ego: Vec<Pose> = ego
        .into_iter()
        .enumerate()
        .map(|(i, p)| p.ok_or(Error::MissingPose(i)))
        .collect::<Result<_>>()?;

    let tracks = doc
        .instances
        .iter()
        .map(|inst| InstanceTrack {
            id: inst.id,
            category: inst.category,
            states: inst
                .states
                .iter()
                .map(|s| {
                    (
                        s.frame,
                        BoxState {
                            center: s.center,
                            size_lwh: s.size_lwh,
                            yaw: s.yaw,
                            visibility: s.visibility,
                        },
                    )
                })
                .collect(),
        })
        .collect();

    let fine_labels = match &doc.fine_label_files {
        Some(files) => Some(
            files
                .iter()
                .map(|f| load_single_grid(&base_dir.join(f)))
                .collect::<Result<Vec<_>>>()?,
        ),
        None => None,
    };
    let clouds = match &doc.cloud_files {
        Some(files) => Some(
            files
                .iter()
                .map(|f| load_point_cloud(&base_dir.join(f)))
                .collect::<Result<Vec<_>>>()?,
        ),
        None => None,
    };

    let scene = Scene {
        timestamps: doc.frames.clone(),
        ego,
        tracks,
        fine_labels,
        clouds,
    };
    scene.validate()?;
    Ok(scene)
}

/// Saves a scene as a JSON document. Fine labels and point clouds, when
/// present, are written next to the document as `{stem}_fine_{k}.c4do` and
/// `{stem}_cloud_{k}.c4dp` and referenced by relative name.
pub fn save_scene(scene: &Scene, path: &Path) -> Result<()> {
    let mut doc = scene_to_document(scene);
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scene".into());
    if let Some(fine) = &scene.fine_labels {
        let mut names = Vec::with_capacity(fine.len());
        for (k, grid) in fine.iter().enumerate() {
            let name = format!("{stem}_fine_{k}.c4do");
            save_single_grid(&dir.join(&name), grid)?;
            names.push(name);
        }
        doc.fine_label_files = Some(names);
    }
    if let Some(clouds) = &scene.clouds {
        let mut names = Vec::with_capacity(clouds.len());
        for (k, cloud) in clouds.iter().enumerate() {
            let name = format!("{stem}_cloud_{k}.c4dp");
            save_point_cloud(&dir.join(&name), cloud)?;
            names.push(name);
        }
        doc.cloud_files = Some(names);
    }
    write_json(path, &doc)
}

pub fn load_scene(path: &Path) -> Result<Scene> {
    let doc: SceneDocument = read_json(path)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    document_to_scene(&doc, &base)
}

// ---------------------------------------------------------------------------
// samples and forecasts

pub fn sample_paths(base: &Path) -> (PathBuf, PathBuf, PathBuf) {
    let with_ext = |ext: &str| {
        let mut s = base.as_os_str().to_os_string();
        s.push(ext);
        PathBuf::from(s)
    };
    (with_ext(".c4do"), with_ext(".c4df"), with_ext(".meta.json"))
}

/// Writes a sample as `{base}.c4do` + `{base}.c4df` + `{base}.meta.json`.
pub fn save_sample(sample: &Sample, base: &Path) -> Result<()> {
    let (grid_path, flow_path, meta_path) = sample_paths(base);
    save_grid_sequence(&grid_path, &sample.occupancy, sample.mode)?;
    save_flow_volumes(&flow_path, &sample.flows, sample.mode)?;
    write_json(&meta_path, &sample.meta)
}

pub fn load_sample(base: &Path) -> Result<Sample> {
    let (grid_path, flow_path, meta_path) = sample_paths(base);
    let (occupancy, mode) = load_grid_sequence(&grid_path)?;
    let flows = load_flow_volumes(&flow_path)?;
    if !flows[0].spec().same_geometry(occupancy.spec()) || flows.len() != occupancy.frames().len()
    {
        return Err(format_err(
            &flow_path,
            format!(
                "flow volumes ({} frames, dims {:?}) do not match grids ({} frames, dims {:?})",
                flows.len(),
                flows[0].spec().dims(),
                occupancy.frames().len(),
                occupancy.spec().dims()
            ),
        ));
    }
    let meta: SampleMeta = read_json(&meta_path)?;
    Ok(Sample {
        spec: occupancy.spec().clone(),
        mode,
        occupancy,
        flows,
        meta,
    })
}

/// Loads a model's forecast for evaluation: a grid file, optionally with a
/// sibling flow file, checked against the evaluation spec.
pub fn load_external_forecast(
    grid_path: &Path,
    flow_path: Option<&Path>,
    eval_spec: &GridSpec,
) -> Result<Forecast> {
    let (occupancy, _) = load_grid_sequence(grid_path)?;
    let spec = occupancy.spec();
    if !spec.same_geometry(eval_spec) || spec.n_future != eval_spec.n_future {
        return Err(format_err(
            grid_path,
            format!(
                "forecast dims {:?} x {} future frames do not match evaluation spec {:?} x {}",
                spec.dims(),
                spec.n_future,
                eval_spec.dims(),
                eval_spec.n_future
            ),
        ));
    }
    let flows = match flow_path {
        Some(p) => {
            let flows = load_flow_volumes(p)?;
            if !flows[0].spec().same_geometry(eval_spec) {
                return Err(format_err(
                    p,
                    format!(
                        "flow dims {:?} do not match evaluation spec {:?}",
                        flows[0].spec().dims(),
                        eval_spec.dims()
                    ),
                ));
            }
            Some(flows)
        }
        None => None,
    };
    Ok(Forecast {
        occupancy,
        flows,
        method: "external".into(),
    })
}

// ---------------------------------------------------------------------------
// JSON helpers and reports

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Json {
        path: path.display().to_string(),
        source: e,
    })?;
    w.write_all(b"\n").map_err(|e| io_err(path, e))?;
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::Json {
        path: path.display().to_string(),
        source: e,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "n/a".into())
}

/// Renders a report as a delimiter-separated table for spreadsheets.
pub fn report_csv(report: &EvalReport) -> String {
    let mut out = String::new();
    out.push_str("class,iou_current");
    for t in 1..=report.n_future {
        out.push_str(&format!(",iou_t{t}"));
    }
    out.push_str(",iou_future_mean,iou_discounted\n");
    for c in &report.classes {
        out.push_str(&format!("{:?},{}", c.class, fmt_opt(c.iou_current)));
        for v in &c.iou_per_step {
            out.push_str(&format!(",{}", fmt_opt(*v)));
        }
        out.push_str(&format!(
            ",{},{}\n",
            fmt_opt(c.iou_future_mean),
            fmt_opt(c.iou_discounted)
        ));
    }
    if let Some(vpq) = report.vpq {
        out.push_str(&format!("vpq,{vpq:.6}\n"));
    }
    out
}

pub fn write_report_csv(report: &EvalReport, path: &Path) -> Result<()> {
    std::fs::write(path, report_csv(report)).map_err(|e| io_err(path, e))
}

/// Emits every occupied voxel of a sequence as `t,ix,iy,iz,label,instance_id`
/// lines for external plotting.
pub fn export_voxels_csv<W: Write>(seq: &OccupancySequence, w: &mut W) -> std::io::Result<()> {
    writeln!(w, "t,ix,iy,iz,label,instance_id")?;
    let spec = seq.spec();
    for (t, frame) in seq.frames().iter().enumerate() {
        for (lin, &label) in frame.labels().iter().enumerate() {
            if label == SemanticLabel::Free {
                continue;
            }
            let idx = spec.voxel_at(lin);
            let id = frame.instance_ids().map(|ids| ids[lin]).unwrap_or(0);
            writeln!(
                w,
                "{t},{},{},{},{},{id}",
                idx.ix,
                idx.iy,
                idx.iz,
                label as u8
            )?;
        }
    }
    Ok(())
}
