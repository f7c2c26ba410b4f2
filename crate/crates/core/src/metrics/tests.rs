use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::kernel::{Aabb, Mesh, Vec3};

/// Closed, outward-facing box mesh.
fn cuboid(b: &Aabb) -> Mesh {
    let v = |x: usize, y: usize, z: usize| {
        Vec3::new(
            [b.min.x, b.max.x][x],
            [b.min.y, b.max.y][y],
            [b.min.z, b.max.z][z],
        )
    };
    let quads = [
        [v(0, 0, 0), v(0, 1, 0), v(1, 1, 0), v(1, 0, 0)],
        [v(0, 0, 1), v(1, 0, 1), v(1, 1, 1), v(0, 1, 1)],
        [v(0, 0, 0), v(1, 0, 0), v(1, 0, 1), v(0, 0, 1)],
        [v(0, 1, 0), v(0, 1, 1), v(1, 1, 1), v(1, 1, 0)],
        [v(0, 0, 0), v(0, 0, 1), v(0, 1, 1), v(0, 1, 0)],
        [v(1, 0, 0), v(1, 1, 0), v(1, 1, 1), v(1, 0, 1)],
    ];
    Mesh::new(
        quads
            .iter()
            .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]]),
    )
}

fn cube(lo: f64, hi: f64) -> Mesh {
    cuboid(&Aabb::new(Vec3::repeat(lo), Vec3::repeat(hi)))
}

fn square_at(z: f64) -> Mesh {
    let p = |x: f64, y: f64| Vec3::new(x, y, z);
    Mesh::new([
        [p(0.0, 0.0), p(1.0, 0.0), p(1.0, 1.0)],
        [p(0.0, 0.0), p(1.0, 1.0), p(0.0, 1.0)],
    ])
}

fn report(success: bool) -> EvalReport {
    EvalReport {
        success,
        solid_count: success as usize,
        volume: 1.0,
        aabb: None,
        unsupported_ops: Vec::new(),
        approximated_ops: Vec::new(),
        failure_reason: (!success).then(|| crate::kernel::KERNEL_UNSUPPORTED.to_string()),
        checks: Vec::new(),
    }
}

#[test]
fn normalize_unit_examples() {
    assert!(cube(0.0, 10.0).is_closed());
    let n = normalize_unit(&cube(0.0, 10.0)).unwrap();
    let b = n.bbox().unwrap();
    assert_eq!(b.min, Vec3::zeros());
    assert_eq!(b.max, Vec3::repeat(1.0));
    assert_eq!(normalize_unit(&n).unwrap(), n);
    let tall = cuboid(&Aabb::new(
        Vec3::new(-3.0, 0.0, 5.0),
        Vec3::new(1.0, 2.0, 13.0),
    ));
    let once = normalize_unit(&tall).unwrap();
    let b = once.bbox().unwrap();
    assert!((b.center() - Vec3::repeat(0.5)).norm() < 1e-15);
    assert!((b.longest_side() - 1.0).abs() < 1e-15);
    assert_eq!(normalize_unit(&once).unwrap(), once);
    assert!(matches!(
        normalize_unit(&Mesh::default()),
        Err(MetricsError::EmptyMesh)
    ));
    let point = Mesh {
        triangles: vec![[Vec3::zeros(); 3]],
        normals: vec![Vec3::z()],
    };
    assert!(matches!(
        normalize_unit(&point),
        Err(MetricsError::DegenerateExtent)
    ));
}

#[test]
fn chamfer_self_distance_is_zero() {
    let m = normalize_unit(&cuboid(&Aabb::new(Vec3::zeros(), Vec3::new(3.0, 2.0, 1.0)))).unwrap();
    assert_eq!(chamfer(&m, &m, 2048, 4).unwrap(), 0.0);
    assert!(matches!(
        chamfer(&m, &Mesh::default(), 16, 0),
        Err(MetricsError::EmptyMesh)
    ));
}

#[test]
fn parallel_squares() {
    // every sample's nearest neighbour is essentially straight across
    for d in [0.1, 0.2] {
        let cd = chamfer(&square_at(0.0), &square_at(d), CHAMFER_POINTS, 1).unwrap();
        let expected = 2.0 * d * d * 1e3;
        assert!(
            (cd - expected).abs() <= 0.05 * expected,
            "d={d}: {cd} vs {expected}"
        );
    }
}

#[test]
fn chamfer_is_symmetric() {
    let a = normalize_unit(&cube(0.0, 1.0)).unwrap();
    let b = normalize_unit(&cuboid(&Aabb::new(
        Vec3::zeros(),
        Vec3::new(1.0, 0.5, 0.25),
    )))
    .unwrap();
    assert_eq!(
        chamfer(&a, &b, 1024, 3).unwrap(),
        chamfer(&b, &a, 1024, 3).unwrap()
    );
}

#[test]
fn kd_tree_matches_brute_force_with_ties() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    // coarse lattice coordinates force many equal distances
    let mut pts = |n: usize| -> Vec<Vec3> {
        (0..n)
            .map(|_| {
                Vec3::new(
                    rng.gen_range(0..6) as f64,
                    rng.gen_range(0..6) as f64,
                    rng.gen_range(0..6) as f64,
                ) / 5.0
            })
            .collect()
    };
    let (a, b) = (pts(256), pts(256));
    assert_eq!(
        chamfer_points(&a, &b).unwrap(),
        chamfer_points_brute(&a, &b).unwrap()
    );
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let a: Vec<Vec3> = (0..256)
        .map(|_| Vec3::new(rng.gen(), rng.gen(), rng.gen()))
        .collect();
    let b: Vec<Vec3> = (0..256)
        .map(|_| Vec3::new(rng.gen(), rng.gen(), rng.gen()))
        .collect();
    assert_eq!(
        chamfer_points(&a, &b).unwrap(),
        chamfer_points_brute(&a, &b).unwrap()
    );
}

fn vox(m: &Mesh) -> VoxelSolid {
    voxelize_unit(m, IOU_RESOLUTION).unwrap()
}

#[test]
fn iou_examples() {
    let a = vox(&cube(0.0, 0.5));
    assert_eq!(iou(&a, &a).unwrap(), 100.0);
    let far = vox(&cube(0.5, 1.0));
    assert_eq!(iou(&a, &far).unwrap(), 0.0);
    // shifted by half a side: overlap 1/2, union 3/2
    let shifted = vox(&cuboid(&Aabb::new(
        Vec3::new(0.25, 0.0, 0.0),
        Vec3::new(0.75, 0.5, 0.5),
    )));
    let v = iou(&a, &shifted).unwrap();
    assert!((v - 100.0 / 3.0).abs() <= 1.0, "{v}");
    let empty = VoxelSolid::empty(a.grid.clone());
    assert_eq!(iou(&empty, &empty).unwrap(), 100.0);
    let other = voxelize_mesh(&cube(0.0, 0.5), 32, &unit_domain()).unwrap();
    assert!(matches!(iou(&a, &other), Err(MetricsError::DomainMismatch)));
}

#[test]
fn normalization_keeps_self_comparison_perfect() {
    let m = cuboid(&Aabb::new(
        Vec3::new(-40.0, 2.0, 0.0),
        Vec3::new(60.0, 30.0, 12.0),
    ));
    let r = compare(
        &m,
        &m,
        &MetricsConfig {
            n_points: 1024,
            ..Default::default()
        },
        Vec::new(),
    )
    .unwrap();
    assert_eq!(r.cd, Some(0.0));
    assert_eq!(r.iou, Some(100.0));
    assert!(r.valid);
}

#[test]
fn invalid_rate_examples() {
    assert_eq!(invalid_rate(&vec![report(true); 3]).unwrap(), 0.0);
    let mixed = vec![report(true), report(false), report(true), report(true)];
    assert_eq!(invalid_rate(&mixed).unwrap(), 25.0);
    assert!(matches!(invalid_rate(&[]), Err(MetricsError::EmptyList)));
}

#[test]
fn median_examples() {
    assert_eq!(median_cd(&[1.0, 2.0, 3.0]).unwrap(), 2.0);
    assert_eq!(median_cd(&[4.0, 1.0, 3.0, 2.0]).unwrap(), 2.0);
    assert_eq!(median_cd(&[5.0]).unwrap(), 5.0);
    assert!(matches!(median_cd(&[]), Err(MetricsError::EmptyList)));
}

#[test]
fn reward_examples() {
    assert_eq!(reward(true, 0.9).unwrap(), 9.0);
    assert_eq!(reward(false, 0.9).unwrap(), -10.0);
    assert_eq!(reward(false, f64::NAN).unwrap(), -10.0);
    assert_eq!(reward(true, 0.0).unwrap(), 0.0);
    assert!(matches!(reward(true, 1.5), Err(MetricsError::Range(_))));
}

#[test]
fn summary_uses_valid_entries() {
    let ok = |cd: f64, iou: f64| MetricReport {
        cd: Some(cd),
        iou: Some(iou),
        valid: true,
        notes: Vec::new(),
    };
    let s = summarize(&[
        ok(1.0, 90.0),
        ok(3.0, 70.0),
        MetricReport::invalid(Vec::new()),
        ok(2.0, 80.0),
    ])
    .unwrap();
    assert_eq!(s.median_cd, Some(2.0));
    assert_eq!(s.mean_iou, Some(80.0));
    assert_eq!(s.ir, 25.0);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, ..ProptestConfig::default() })]

    #[test]
    fn kd_tree_is_exact(seed in any::<u64>(), n in 1usize..200, m in 1usize..200) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<Vec3> = (0..n).map(|_| Vec3::new(rng.gen(), rng.gen(), rng.gen())).collect();
        let b: Vec<Vec3> = (0..m).map(|_| Vec3::new(rng.gen_range(-1.0..2.0), rng.gen(), 0.5)).collect();
        prop_assert_eq!(chamfer_points(&a, &b).unwrap(), chamfer_points_brute(&a, &b).unwrap());
    }

    #[test]
    fn iou_is_symmetric_and_bounded(x0 in 0.0f64..0.5, w0 in 0.1f64..0.5, x1 in 0.0f64..0.5, w1 in 0.1f64..0.5) {
        let a = vox(&cuboid(&Aabb::new(Vec3::new(x0, 0.1, 0.1), Vec3::new(x0 + w0, 0.6, 0.6))));
        let b = vox(&cuboid(&Aabb::new(Vec3::new(x1, 0.2, 0.1), Vec3::new(x1 + w1, 0.7, 0.5))));
        let ab = iou(&a, &b).unwrap();
        prop_assert_eq!(ab, iou(&b, &a).unwrap());
        let (ca, cb) = (a.count() as f64, b.count() as f64);
        prop_assert!(ab <= ca.min(cb) / ca.max(cb) * 100.0 + 1e-9);
        prop_assert_eq!(ab == 100.0, a.occupancy == b.occupancy);
    }

    #[test]
    fn reward_is_monotone(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(reward(true, lo).unwrap() <= reward(true, hi).unwrap());
        prop_assert!(reward(false, lo).unwrap() < reward(true, lo).unwrap());
    }
}
