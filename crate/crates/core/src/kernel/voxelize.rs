//! Mesh to voxel conversion by parity ray casting along +X.

use rayon::prelude::*;

use super::mesh::{Mesh, MeshError};
use super::{Aabb, BitGrid, Grid, VoxelSolid};

/// 2-D orientation of `p` against the directed edge `a → b` in the YZ plane.
/// Swapping `a` and `b` negates the result exactly.
#[inline]
fn edge(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> f64 {
    (a.0 - p.0) * (b.1 - p.1) - (a.1 - p.1) * (b.0 - p.0)
}

/// Tie-break for rays passing exactly through an edge: exactly one of the
/// two orientations of an edge owns it.
#[inline]
fn owns(a: (f64, f64), b: (f64, f64)) -> bool {
    b > a
}

struct Tri {
    v: [(f64, f64); 3],
    x: [f64; 3],
    lo: (f64, f64),
    hi: (f64, f64),
}

pub fn voxelize_mesh(m: &Mesh, resolution: usize, domain: &Aabb) -> Result<VoxelSolid, MeshError> {
    if m.is_empty() {
        return Err(MeshError::EmptyMesh);
    }
    let grid = Grid::over(domain, resolution);
    // project to YZ with positive orientation; drop edge-on triangles
    let tris: Vec<Tri> = m
        .triangles
        .iter()
        .filter_map(|t| {
            let mut v = [(t[0].y, t[0].z), (t[1].y, t[1].z), (t[2].y, t[2].z)];
            let mut x = [t[0].x, t[1].x, t[2].x];
            let area = edge(v[0], v[1], v[2]);
            if area == 0.0 {
                return None;
            }
            if area < 0.0 {
                v.swap(1, 2);
                x.swap(1, 2);
            }
            let lo = (
                v[0].0.min(v[1].0).min(v[2].0),
                v[0].1.min(v[1].1).min(v[2].1),
            );
            let hi = (
                v[0].0.max(v[1].0).max(v[2].0),
                v[0].1.max(v[1].1).max(v[2].1),
            );
            Some(Tri { v, x, lo, hi })
        })
        .collect();

    let [nx, ny, nz] = grid.dims;
    let rows: Vec<(Vec<usize>, bool)> = (0..ny * nz)
        .into_par_iter()
        .map(|row| {
            let (j, k) = (row % ny, row / ny);
            let p = (grid.center_coord(1, j), grid.center_coord(2, k));
            let mut xs: Vec<f64> = Vec::new();
            for t in &tris {
                if p.0 < t.lo.0 || p.0 > t.hi.0 || p.1 < t.lo.1 || p.1 > t.hi.1 {
                    continue;
                }
                let mut w = [0.0; 3];
                let mut inside = true;
                for e in 0..3 {
                    let (a, b) = (t.v[(e + 1) % 3], t.v[(e + 2) % 3]);
                    let d = edge(a, b, p);
                    if !(d > 0.0 || (d == 0.0 && owns(a, b))) {
                        inside = false;
                        break;
                    }
                    w[e] = d;
                }
                if inside {
                    let s = w[0] + w[1] + w[2];
                    xs.push((w[0] * t.x[0] + w[1] * t.x[1] + w[2] * t.x[2]) / s);
                }
            }
            if xs.len() % 2 == 1 {
                return (Vec::new(), true);
            }
            xs.sort_by(f64::total_cmp);
            let mut set = Vec::new();
            for pair in xs.chunks(2) {
                for i in 0..nx {
                    let c = grid.center_coord(0, i);
                    if pair[0] < c && c < pair[1] {
                        set.push(grid.index(i, j, k));
                    }
                }
            }
            (set, false)
        })
        .collect();

    let bad = rows.iter().filter(|r| r.1).count();
    let total = ny * nz;
    if bad * 1000 > total {
        return Err(MeshError::OpenMesh { bad, total });
    }
    let mut occupancy = BitGrid::new(grid.dims);
    for idx in rows.into_iter().flat_map(|r| r.0) {
        occupancy.set_idx(idx, true);
    }
    Ok(VoxelSolid { grid, occupancy })
}
