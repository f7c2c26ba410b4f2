//! Triangle meshes, binary STL I/O and surface sampling.

use std::collections::HashMap;
use std::io::{self, Read, Write};

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::{Aabb, Vec3, VoxelSolid};

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("solid has no voxels")]
    EmptySolid,
    #[error("mesh has no triangles")]
    EmptyMesh,
    #[error("inconsistent ray parity on {bad} of {total} rays")]
    OpenMesh { bad: usize, total: usize },
    #[error("malformed STL: {0}")]
    Stl(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Triangle = [Vec3; 3];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Mesh {
    pub triangles: Vec<Triangle>,
    pub normals: Vec<Vec3>,
}

impl Mesh {
    /// Builds a mesh, dropping zero-area and non-finite triangles.
    pub fn new(tris: impl IntoIterator<Item = Triangle>) -> Mesh {
        let mut m = Mesh::default();
        for t in tris {
            let c = (t[1] - t[0]).cross(&(t[2] - t[0]));
            let finite = t.iter().all(|v| v.iter().all(|x| x.is_finite()));
            if finite && c.norm() > 0.0 {
                m.normals.push(c.normalize());
                m.triangles.push(t);
            }
        }
        m
    }

    pub fn len(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn area(&self) -> f64 {
        self.triangles.iter().map(tri_area).sum()
    }

    pub fn bbox(&self) -> Option<Aabb> {
        Aabb::from_points(self.triangles.iter().flatten())
    }

    pub fn map(&self, f: impl Fn(&Vec3) -> Vec3) -> Mesh {
        Mesh::new(
            self.triangles
                .iter()
                .map(|t| [f(&t[0]), f(&t[1]), f(&t[2])]),
        )
    }

    /// Every directed edge is matched by its reverse, counted with
    /// multiplicity; vertices are compared exactly.
    pub fn is_closed(&self) -> bool {
        if self.is_empty() {
            return false;
        }
        let key = |v: &Vec3| [v.x.to_bits(), v.y.to_bits(), v.z.to_bits()];
        let mut balance: HashMap<([u64; 3], [u64; 3]), i64> = HashMap::new();
        for t in &self.triangles {
            for e in 0..3 {
                let (a, b) = (key(&t[e]), key(&t[(e + 1) % 3]));
                if a <= b {
                    *balance.entry((a, b)).or_default() += 1;
                } else {
                    *balance.entry((b, a)).or_default() -= 1;
                }
            }
        }
        balance.values().all(|&v| v == 0)
    }

    /// Area-weighted uniform surface samples, deterministic in `seed`.
    pub fn sample_surface(&self, n: usize, seed: u64) -> Result<Vec<Vec3>, MeshError> {
        if self.is_empty() {
            return Err(MeshError::EmptyMesh);
        }
        let dist = WeightedIndex::new(self.triangles.iter().map(tri_area))
            .map_err(|_| MeshError::EmptyMesh)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok((0..n)
            .map(|_| {
                let t = &self.triangles[dist.sample(&mut rng)];
                let (mut u, mut v): (f64, f64) = (rng.gen(), rng.gen());
                if u + v > 1.0 {
                    u = 1.0 - u;
                    v = 1.0 - v;
                }
                t[0] + (t[1] - t[0]) * u + (t[2] - t[0]) * v
            })
            .collect())
    }
}

fn tri_area(t: &Triangle) -> f64 {
    (t[1] - t[0]).cross(&(t[2] - t[0])).norm() / 2.0
}

/// Boundary faces of the set voxels as outward-facing triangle pairs.
pub fn to_stl(v: &VoxelSolid) -> Result<Mesh, MeshError> {
    if v.is_empty() {
        return Err(MeshError::EmptySolid);
    }
    let g = &v.grid;
    let dims = g.dims;
    let corner = |c: [usize; 3]| Vec3::from_fn(|a, _| g.origin[a] + c[a] as f64 * g.spacing);
    let mut tris = Vec::new();
    for idx in v.occupancy.ones() {
        let c = g.coords(idx);
        for axis in 0..3 {
            for dir in [-1i64, 1] {
                let n = c[axis] as i64 + dir;
                let exposed = n < 0 || n >= dims[axis] as i64 || {
                    let mut m = c;
                    m[axis] = n as usize;
                    !v.get(m[0], m[1], m[2])
                };
                if !exposed {
                    continue;
                }
                let (u, w) = ((axis + 1) % 3, (axis + 2) % 3);
                let mut base = c;
                if dir > 0 {
                    base[axis] += 1;
                }
                let at = |du: usize, dw: usize| {
                    let mut p = base;
                    p[u] += du;
                    p[w] += dw;
                    corner(p)
                };
                let (p00, p10, p11, p01) = (at(0, 0), at(1, 0), at(1, 1), at(0, 1));
                // (u, w, axis) is right-handed, so u→w winding faces +axis
                if dir > 0 {
                    tris.push([p00, p10, p11]);
                    tris.push([p00, p11, p01]);
                } else {
                    tris.push([p00, p11, p10]);
                    tris.push([p00, p01, p11]);
                }
            }
        }
    }
    Ok(Mesh::new(tris))
}

/// Binary STL: 80-byte header, little-endian u32 count, 50 bytes per facet.
pub fn write_stl(m: &Mesh, w: &mut impl Write) -> io::Result<()> {
    let mut header = [0u8; 80];
    let tag = b"cadforge binary stl";
    header[..tag.len()].copy_from_slice(tag);
    w.write_all(&header)?;
    w.write_all(&(m.triangles.len() as u32).to_le_bytes())?;
    for (t, n) in m.triangles.iter().zip(&m.normals) {
        for v in std::iter::once(n).chain(t.iter()) {
            for c in v.iter() {
                w.write_all(&(*c as f32).to_le_bytes())?;
            }
        }
        w.write_all(&[0, 0])?;
    }
    Ok(())
}

pub fn read_stl(r: &mut impl Read) -> Result<Mesh, MeshError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < 84 {
        return Err(MeshError::Stl(
            "file shorter than the 84-byte preamble".into(),
        ));
    }
    let n = u32::from_le_bytes(bytes[80..84].try_into().unwrap()) as usize;
    if bytes.len() < 84 + 50 * n {
        return Err(MeshError::Stl(format!(
            "declares {n} facets but holds {}",
            (bytes.len() - 84) / 50
        )));
    }
    let f = |off: usize| f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as f64;
    let tris = (0..n).map(|i| {
        let base = 84 + 50 * i + 12;
        let v = |k: usize| Vec3::new(f(base + 12 * k), f(base + 12 * k + 4), f(base + 12 * k + 8));
        [v(0), v(1), v(2)]
    });
    Ok(Mesh::new(tris))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{BitGrid, Grid};

    fn solid(dims: [usize; 3], cells: &[[usize; 3]]) -> VoxelSolid {
        let grid = Grid {
            origin: Vec3::zeros(),
            spacing: 1.0,
            dims,
        };
        let mut occupancy = BitGrid::new(dims);
        for c in cells {
            occupancy.set(c[0], c[1], c[2], true);
        }
        VoxelSolid { grid, occupancy }
    }

    #[test]
    fn voxel_face_counts() {
        let one = to_stl(&solid([3, 3, 3], &[[1, 1, 1]])).unwrap();
        assert_eq!(one.len(), 12);
        assert!(one.is_closed());
        assert!((one.area() - 6.0).abs() < 1e-12);
        let bar = to_stl(&solid([3, 3, 3], &[[0, 1, 1], [1, 1, 1]])).unwrap();
        assert_eq!(bar.len(), 20);
        assert!(bar.is_closed());
        assert!(matches!(
            to_stl(&solid([2, 2, 2], &[])),
            Err(MeshError::EmptySolid)
        ));
    }

    #[test]
    fn normals_point_outward() {
        let m = to_stl(&solid([3, 3, 3], &[[1, 1, 1]])).unwrap();
        let c = Vec3::repeat(1.5);
        for (t, n) in m.triangles.iter().zip(&m.normals) {
            let centroid = (t[0] + t[1] + t[2]) / 3.0;
            assert!((centroid - c).dot(n) > 0.0);
        }
    }

    #[test]
    fn stl_round_trip() {
        let m = to_stl(&solid(
            [4, 4, 4],
            &[[0, 0, 0], [1, 0, 0], [1, 1, 0], [3, 3, 3]],
        ))
        .unwrap();
        let mut buf = Vec::new();
        write_stl(&m, &mut buf).unwrap();
        assert_eq!(buf.len(), 84 + 50 * m.len());
        let back = read_stl(&mut buf.as_slice()).unwrap();
        assert_eq!(back, m);
        assert!(read_stl(&mut &buf[..90]).is_err());
    }

    #[test]
    fn sampling_is_deterministic_and_on_surface() {
        let tri = Mesh::new([[Vec3::zeros(), Vec3::x(), Vec3::y()]]);
        let p = tri.sample_surface(1, 3).unwrap()[0];
        assert!(p.x >= 0.0 && p.y >= 0.0 && p.x + p.y <= 1.0 && p.z == 0.0);
        assert_eq!(
            tri.sample_surface(50, 9).unwrap(),
            tri.sample_surface(50, 9).unwrap()
        );
        assert!(matches!(
            Mesh::default().sample_surface(1, 0),
            Err(MeshError::EmptyMesh)
        ));
    }

    #[test]
    fn sampling_follows_area() {
        // areas 3 : 1
        let big = [
            Vec3::zeros(),
            Vec3::new(3.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
        ];
        let small = [
            Vec3::new(0.0, 0.0, 5.0),
            Vec3::new(1.0, 0.0, 5.0),
            Vec3::new(0.0, 1.0, 5.0),
        ];
        let m = Mesh::new([big, small]);
        let n = 4096;
        let hits = m
            .sample_surface(n, 42)
            .unwrap()
            .iter()
            .filter(|p| p.z < 1.0)
            .count() as f64;
        let (p, nf) = (0.75, n as f64);
        let sigma = (nf * p * (1.0 - p)).sqrt();
        assert!((hits - nf * p).abs() <= 3.0 * sigma, "{hits}");
    }
}
