//! Property tests for the geometric and metric invariants.

use nalgebra::{Point3, Translation3, UnitQuaternion, Vector3};
use proptest::prelude::*;

use occ4d::grid::{GridSpec, OccupancyGrid, SemanticLabel, VoxelIndex};
use occ4d::metrics::iou_discounted;
use occ4d::pipeline::voxelize_box;
use occ4d::scene::{BoxState, Pose};
use occ4d::synth::SplitMix64;

fn small_spec() -> GridSpec {
    GridSpec::new((-3.2, 3.2), (-3.2, 3.2), (-1.6, 1.6), 0.2, 1, 2).unwrap()
}

fn in_extent_point() -> impl Strategy<Value = Point3<f64>> {
    (
        -3.2f64..3.1999,
        -3.2f64..3.1999,
        -1.6f64..1.5999,
    )
        .prop_map(|(x, y, z)| Point3::new(x, y, z))
}

proptest! {
    /// Every in-extent point maps to a voxel whose center lies within half a
    /// cell of it, and that center maps back to the same voxel.
    #[test]
    fn voxel_round_trip(p in in_extent_point()) {
        let spec = small_spec();
        let idx = spec.world_to_voxel(&p).expect("point is in extent");
        let c = spec.voxel_center(idx).unwrap();
        prop_assert!((c.x - p.x).abs() <= spec.resolution / 2.0 + 1e-12);
        prop_assert!((c.y - p.y).abs() <= spec.resolution / 2.0 + 1e-12);
        prop_assert!((c.z - p.z).abs() <= spec.resolution / 2.0 + 1e-12);
        prop_assert_eq!(spec.world_to_voxel(&c), Some(idx));
    }

    /// Linear index round trip covers the whole volume bijectively.
    #[test]
    fn linear_index_bijective(lin in 0usize..(32 * 32 * 16)) {
        let spec = small_spec();
        let idx = spec.voxel_at(lin);
        prop_assert_eq!(spec.linear_index(idx), lin);
    }

    /// Label counts partition the volume.
    #[test]
    fn label_counts_partition(seed in any::<u64>()) {
        let spec = GridSpec::new((-1.6, 1.6), (-1.6, 1.6), (-0.8, 0.8), 0.2, 1, 2).unwrap();
        let mut rng = SplitMix64::new(seed);
        let mut grid = OccupancyGrid::new(spec.clone());
        for lin in 0..spec.voxel_count() {
            let label = match rng.next_u64() % 3 {
                0 => SemanticLabel::Free,
                1 => SemanticLabel::Gmo,
                _ => SemanticLabel::Gso,
            };
            grid.set_label(spec.voxel_at(lin), label);
        }
        let total = SemanticLabel::ALL
            .iter()
            .map(|&l| grid.count_label(l))
            .sum::<usize>();
        prop_assert_eq!(total, spec.voxel_count());
    }

    /// Voxelization equals the brute-force "voxel center inside the oriented
    /// box" rule over the whole grid.
    #[test]
    fn voxelize_matches_center_membership(
        cx in -2.0f64..2.0,
        cy in -2.0f64..2.0,
        cz in -0.8f64..0.8,
        l in 0.3f64..2.5,
        w in 0.3f64..1.8,
        h in 0.3f64..1.2,
        yaw in -std::f64::consts::PI..std::f64::consts::PI,
    ) {
        let spec = small_spec();
        let state = BoxState { center: [cx, cy, cz], size_lwh: [l, w, h], yaw, visibility: 1.0 };
        let got: std::collections::HashSet<usize> = voxelize_box(&state, &spec)
            .into_iter()
            .map(|i| spec.linear_index(i))
            .collect();
        let (sin, cos) = yaw.sin_cos();
        for lin in 0..spec.voxel_count() {
            let c = spec.voxel_center_unchecked(spec.voxel_at(lin));
            let (dx, dy, dz) = (c.x - cx, c.y - cy, c.z - cz);
            let lx = dx * cos + dy * sin;
            let ly = -dx * sin + dy * cos;
            let inside = lx >= -l / 2.0 && lx < l / 2.0
                && ly >= -w / 2.0 && ly < w / 2.0
                && dz >= -h / 2.0 && dz < h / 2.0;
            prop_assert_eq!(got.contains(&lin), inside);
        }
    }

    /// Rigid transforms preserve box volume and pairwise center distance.
    #[test]
    fn transform_preserves_geometry(
        tx in -5.0f64..5.0,
        ty in -5.0f64..5.0,
        angle in -std::f64::consts::PI..std::f64::consts::PI,
        c1 in in_extent_point(),
        c2 in in_extent_point(),
    ) {
        let pose = Pose::from_parts(
            Translation3::new(tx, ty, 0.0),
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), angle),
        );
        let b1 = BoxState { center: [c1.x, c1.y, c1.z], size_lwh: [2.0, 1.0, 1.0], yaw: 0.3, visibility: 1.0 };
        let b2 = BoxState { center: [c2.x, c2.y, c2.z], size_lwh: [1.0, 1.0, 1.0], yaw: -0.7, visibility: 1.0 };
        let t1 = b1.transformed(&pose);
        let t2 = b2.transformed(&pose);
        prop_assert!((t1.volume() - b1.volume()).abs() < 1e-9);
        let before = (b1.center_point() - b2.center_point()).norm();
        let after = (t1.center_point() - t2.center_point()).norm();
        prop_assert!((before - after).abs() < 1e-9);
    }

    /// Discounted IoU is a weighted average: it lies within [min, max] of the
    /// per-step list, and for non-increasing lists it dominates the plain
    /// mean (non-decreasing lists are dominated by it).
    #[test]
    fn discounted_bounds_and_ordering(values in proptest::collection::vec(0.0f64..=1.0, 1..8)) {
        let mut decreasing = values.clone();
        decreasing.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let d = iou_discounted(&decreasing).unwrap();
        let mean = decreasing.iter().sum::<f64>() / decreasing.len() as f64;
        let lo = decreasing.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = decreasing.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(d >= mean - 1e-12);
        prop_assert!(d >= lo - 1e-12 && d <= hi + 1e-12);

        let mut increasing = decreasing.clone();
        increasing.reverse();
        let di = iou_discounted(&increasing).unwrap();
        let mean_i = mean; // same multiset
        prop_assert!(di <= mean_i + 1e-12);
    }

    /// Grid-cell containment: a voxel's half-open cell contains exactly the
    /// points that map to it.
    #[test]
    fn cell_containment(p in in_extent_point(), eps in 0.0f64..0.0999) {
        let spec = small_spec();
        let idx = spec.world_to_voxel(&p).unwrap();
        let c = spec.voxel_center_unchecked(idx);
        // anywhere strictly inside the same cell maps to the same voxel
        let q = Point3::new(c.x - spec.resolution / 2.0 + eps, c.y, c.z);
        prop_assert_eq!(spec.world_to_voxel(&q), Some(idx));
    }
}

/// Grids store z-fastest: incrementing iz moves one slot.
#[test]
fn layout_is_z_fastest() {
    let spec = small_spec();
    let a = spec.linear_index(VoxelIndex { ix: 3, iy: 5, iz: 7 });
    let b = spec.linear_index(VoxelIndex { ix: 3, iy: 5, iz: 8 });
    assert_eq!(b, a + 1);
}
