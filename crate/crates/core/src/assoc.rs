//! Flow-based 3D instance prediction: center extraction at t = 0 and ID
//! propagation through future frames using backward centripetal flow.

use std::collections::{HashMap, VecDeque};

use nalgebra::Point3;

use crate::error::{Error, Result};
use crate::grid::{FlowVolume, GridSpec, OccupancyGrid, OccupancySequence, SemanticLabel};

/// Per-frame instance centers; IDs are unique within a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceCenters {
    pub centers: Vec<(u16, Point3<f64>)>,
}

const NEIGHBORS: [(i64, i64, i64); 26] = {
    let mut arr = [(0i64, 0i64, 0i64); 26];
    let mut n = 0;
    let mut dx = -1i64;
    while dx <= 1 {
        let mut dy = -1i64;
        while dy <= 1 {
            let mut dz = -1i64;
            while dz <= 1 {
                if dx != 0 || dy != 0 || dz != 0 {
                    arr[n] = (dx, dy, dz);
                    n += 1;
                }
                dz += 1;
            }
            dy += 1;
        }
        dx += 1;
    }
    arr
};

fn neighbor_linear(spec: &GridSpec, lin: usize, d: (i64, i64, i64)) -> Option<usize> {
    let idx = spec.voxel_at(lin);
    let (nx, ny, nz) = spec.dims();
    let ix = idx.ix as i64 + d.0;
    let iy = idx.iy as i64 + d.1;
    let iz = idx.iz as i64 + d.2;
    if ix < 0 || iy < 0 || iz < 0 || ix >= nx as i64 || iy >= ny as i64 || iz >= nz as i64 {
        return None;
    }
    Some(((ix as usize * ny) + iy as usize) * nz + iz as usize)
}

/// 3x3x3 box average of a per-voxel field, with out-of-grid neighbors treated
/// as zero (divisor stays 27 so boundary voxels score lower).
fn box_smooth(spec: &GridSpec, field: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; field.len()];
    for lin in 0..field.len() {
        let mut sum = field[lin];
        for d in NEIGHBORS {
            if let Some(nl) = neighbor_linear(spec, lin, d) {
                sum += field[nl];
            }
        }
        out[lin] = sum / 27.0;
    }
    out
}

/// Extracts instance centers from a per-voxel occupancy probability field by
/// greedy descending-score selection of local maxima; candidates within
/// `nms_radius` meters of an accepted center are suppressed.
///
/// Scores come from a 3x3x3 box average of the probabilities; plateaus of
/// equal score are collapsed to their centroid so each connected blob yields
/// one candidate. `min_prob` gates candidates on the raw probability.
pub fn extract_centers_from_probability(
    spec: &GridSpec,
    prob: &[f64],
    nms_radius: f64,
    min_prob: f64,
) -> Result<InstanceCenters> {
    if prob.len() != spec.voxel_count() {
        return Err(Error::SpecMismatch(format!(
            "probability field length {} does not match voxel count {}",
            prob.len(),
            spec.voxel_count()
        )));
    }
    let score = box_smooth(spec, prob);

    // non-dominated voxels: no neighbor scores strictly higher
    let mut non_dominated = vec![false; prob.len()];
    for lin in 0..prob.len() {
        if prob[lin] < min_prob || score[lin] <= 0.0 {
            continue;
        }
        let dominated = NEIGHBORS.iter().any(|&d| {
            neighbor_linear(spec, lin, d).is_some_and(|nl| score[nl] > score[lin])
        });
        non_dominated[lin] = !dominated;
    }

    // group equal-score plateaus into candidates at their centroid
    let mut visited = vec![false; prob.len()];
    let mut candidates: Vec<(f64, Point3<f64>, usize)> = Vec::new();
    for start in 0..prob.len() {
        if !non_dominated[start] || visited[start] {
            continue;
        }
        let plateau_score = score[start];
        let mut queue = VecDeque::from([start]);
        visited[start] = true;
        let mut sum = nalgebra::Vector3::zeros();
        let mut count = 0usize;
        let mut first = start;
        while let Some(lin) = queue.pop_front() {
            first = first.min(lin);
            let c = spec.voxel_center_unchecked(spec.voxel_at(lin));
            sum += c.coords;
            count += 1;
            for d in NEIGHBORS {
                if let Some(nl) = neighbor_linear(spec, lin, d) {
                    if non_dominated[nl] && !visited[nl] && score[nl] == plateau_score {
                        visited[nl] = true;
                        queue.push_back(nl);
                    }
                }
            }
        }
        candidates.push((plateau_score, Point3::from(sum / count as f64), first));
    }

    candidates.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.2.cmp(&b.2))
    });

    let mut centers: Vec<(u16, Point3<f64>)> = Vec::new();
    for (_, pos, _) in candidates {
        let suppressed = centers
            .iter()
            .any(|(_, c)| (c - pos).norm() < nms_radius);
        if !suppressed {
            let id = (centers.len() + 1) as u16;
            centers.push((id, pos));
        }
    }
    Ok(InstanceCenters { centers })
}

/// Center extraction for a hard-label grid: GMO voxels carry probability 1.
pub fn extract_centers(
    grid: &OccupancyGrid,
    nms_radius: f64,
    min_prob: f64,
) -> Result<InstanceCenters> {
    let prob: Vec<f64> = grid
        .labels()
        .iter()
        .map(|&l| if l == SemanticLabel::Gmo { 1.0 } else { 0.0 })
        .collect();
    extract_centers_from_probability(grid.spec(), &prob, nms_radius, min_prob)
}

struct FrameCenters {
    centers: Vec<(u16, Point3<f64>)>,
}

impl FrameCenters {
    /// Nearest center within `r_assoc`; equidistant ties broken by smaller ID.
    fn nearest_within(&self, p: &Point3<f64>, r_assoc: f64) -> Option<u16> {
        let mut best: Option<(f64, u16)> = None;
        for &(id, c) in &self.centers {
            let d = (c - p).norm();
            if d > r_assoc {
                continue;
            }
            best = match best {
                None => Some((d, id)),
                Some((bd, bid)) if d < bd || (d == bd && id < bid) => Some((d, id)),
                other => other,
            };
        }
        best.map(|(_, id)| id)
    }
}

fn connected_components(spec: &GridSpec, members: &[usize]) -> Vec<Vec<usize>> {
    let member_set: std::collections::HashSet<usize> = members.iter().copied().collect();
    let mut seen: std::collections::HashSet<usize> = std::collections::HashSet::new();
    let mut components = Vec::new();
    for &start in members {
        if seen.contains(&start) {
            continue;
        }
        let mut comp = Vec::new();
        let mut queue = VecDeque::from([start]);
        seen.insert(start);
        while let Some(lin) = queue.pop_front() {
            comp.push(lin);
            for d in NEIGHBORS {
                if let Some(nl) = neighbor_linear(spec, lin, d) {
                    if member_set.contains(&nl) && seen.insert(nl) {
                        queue.push_back(nl);
                    }
                }
            }
        }
        components.push(comp);
    }
    components
}

fn centroids(spec: &GridSpec, ids: &[u16]) -> FrameCenters {
    let mut sums: HashMap<u16, (nalgebra::Vector3<f64>, usize)> = HashMap::new();
    for (lin, &id) in ids.iter().enumerate() {
        if id == 0 {
            continue;
        }
        let c = spec.voxel_center_unchecked(spec.voxel_at(lin));
        let e = sums.entry(id).or_insert((nalgebra::Vector3::zeros(), 0));
        e.0 += c.coords;
        e.1 += 1;
    }
    let mut centers: Vec<(u16, Point3<f64>)> = sums
        .into_iter()
        .map(|(id, (sum, n))| (id, Point3::from(sum / n as f64)))
        .collect();
    centers.sort_by_key(|&(id, _)| id);
    FrameCenters { centers }
}

/// Propagates instance IDs through a forecast: every GMO voxel at frame t is
/// carried back by its flow vector to the frame t-1 centers and inherits the
/// nearest ID within `r_assoc`; voxels matching no center spawn a fresh ID
/// per connected component. Frame-t centers are then recomputed as the
/// centroid of each ID's voxels.
///
/// Returns the sequence with instance-ID volumes attached to every frame.
pub fn associate_via_flow(
    seq: &OccupancySequence,
    flows: &[FlowVolume],
    centers0: &InstanceCenters,
    r_assoc: f64,
) -> Result<OccupancySequence> {
    let spec = seq.spec();
    let nf = seq.n_future();
    if flows.len() < nf + 1 {
        return Err(Error::Eval(format!(
            "{} flow volumes for a sequence needing {}",
            flows.len(),
            nf + 1
        )));
    }
    let mut next_id = centers0
        .centers
        .iter()
        .map(|&(id, _)| id)
        .max()
        .unwrap_or(0)
        + 1;

    let mut out_frames: Vec<OccupancyGrid> = Vec::with_capacity(nf + 1);
    let mut prev_centers = FrameCenters {
        centers: centers0.centers.clone(),
    };
    for (t, frame) in seq.frames().iter().enumerate() {
        let mut ids = vec![0u16; spec.voxel_count()];
        let mut unmatched: Vec<usize> = Vec::new();
        for lin in frame.indices_with_label(SemanticLabel::Gmo) {
            let vc = spec.voxel_center_unchecked(spec.voxel_at(lin));
            // frame 0 matches voxel positions against the extracted centers;
            // later frames follow the backward flow to the previous centers
            let target = if t == 0 { vc } else { vc + flows[t].vectors()[lin] };
            match prev_centers.nearest_within(&target, r_assoc) {
                Some(id) => ids[lin] = id,
                None => unmatched.push(lin),
            }
        }
        for comp in connected_components(spec, &unmatched) {
            for lin in comp {
                ids[lin] = next_id;
            }
            next_id += 1;
        }
        prev_centers = centroids(spec, &ids);
        out_frames.push(OccupancyGrid::from_parts(
            spec.clone(),
            frame.labels().to_vec(),
            Some(ids),
        )?);
    }
    OccupancySequence::new(out_frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::VoxelIndex;
    use approx::assert_relative_eq;

    fn spec() -> GridSpec {
        GridSpec::new((-4.0, 4.0), (-4.0, 4.0), (-2.0, 2.0), 0.2, 2, 4).unwrap()
    }

    fn blob(grid: &mut OccupancyGrid, center: (usize, usize, usize), half: usize) {
        for ix in center.0 - half..=center.0 + half {
            for iy in center.1 - half..=center.1 + half {
                for iz in center.2 - half..=center.2 + half {
                    grid.set_label(VoxelIndex { ix, iy, iz }, SemanticLabel::Gmo);
                }
            }
        }
    }

    #[test]
    fn single_blob_one_center() {
        let spec = spec();
        let mut g = OccupancyGrid::new(spec.clone());
        blob(&mut g, (20, 20, 10), 3);
        let centers = extract_centers(&g, 2.0, 0.5).unwrap();
        assert_eq!(centers.centers.len(), 1);
        let expected = spec
            .voxel_center(VoxelIndex { ix: 20, iy: 20, iz: 10 })
            .unwrap();
        let got = centers.centers[0].1;
        assert_relative_eq!(got.x, expected.x, epsilon = 1e-9);
        assert_relative_eq!(got.y, expected.y, epsilon = 1e-9);
        assert_relative_eq!(got.z, expected.z, epsilon = 1e-9);
    }

    #[test]
    fn distant_blobs_two_centers() {
        let mut g = OccupancyGrid::new(spec());
        blob(&mut g, (8, 8, 10), 2);
        blob(&mut g, (30, 30, 10), 2);
        let centers = extract_centers(&g, 2.0, 0.5).unwrap();
        assert_eq!(centers.centers.len(), 2);
    }

    #[test]
    fn close_blobs_suppressed() {
        let mut g = OccupancyGrid::new(spec());
        // centers ~1.2 m apart, below the 2.0 m suppression radius
        blob(&mut g, (20, 20, 10), 2);
        blob(&mut g, (20, 26, 10), 1);
        let centers = extract_centers(&g, 2.0, 0.5).unwrap();
        assert_eq!(centers.centers.len(), 1);
    }

    #[test]
    fn zero_flow_static_ids_constant() {
        let spec = spec();
        let mut frames = Vec::new();
        for _ in 0..5 {
            let mut g = OccupancyGrid::new(spec.clone());
            blob(&mut g, (20, 20, 10), 2);
            frames.push(g);
        }
        let seq = OccupancySequence::new(frames).unwrap();
        let flows: Vec<FlowVolume> = (0..5).map(|_| FlowVolume::new(spec.clone())).collect();
        let centers = extract_centers(seq.present(), 2.0, 0.5).unwrap();
        let with_ids = associate_via_flow(&seq, &flows, &centers, 2.0).unwrap();
        let first_ids: Vec<u16> = with_ids.frame(0).instance_ids().unwrap().to_vec();
        assert!(first_ids.iter().any(|&id| id != 0));
        for t in 1..5 {
            assert_eq!(with_ids.frame(t).instance_ids().unwrap(), &first_ids[..]);
        }
    }

    #[test]
    fn far_voxel_spawns_fresh_id() {
        let spec = spec();
        let mut g = OccupancyGrid::new(spec.clone());
        blob(&mut g, (10, 10, 10), 1);
        // lone voxel far away from the only center
        g.set_label(VoxelIndex { ix: 35, iy: 35, iz: 10 }, SemanticLabel::Gmo);
        let mut frames = vec![g];
        for _ in 1..5 {
            frames.push(OccupancyGrid::new(spec.clone()));
        }
        let seq = OccupancySequence::new(frames).unwrap();
        let flows: Vec<FlowVolume> = (0..5).map(|_| FlowVolume::new(spec.clone())).collect();
        // only one center, at the blob
        let centers = extract_centers(seq.present(), 2.0, 0.5).unwrap();
        assert_eq!(centers.centers.len(), 2); // lone voxel is its own local max
        let only_blob = InstanceCenters {
            centers: vec![centers.centers[0]],
        };
        let with_ids = associate_via_flow(&seq, &flows, &only_blob, 2.0).unwrap();
        let ids = with_ids.frame(0).instance_ids().unwrap();
        let lone = spec.linear_index(VoxelIndex { ix: 35, iy: 35, iz: 10 });
        assert_ne!(ids[lone], 0);
        assert_ne!(ids[lone], only_blob.centers[0].0);
    }
}
