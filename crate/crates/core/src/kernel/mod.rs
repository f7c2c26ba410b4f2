//! Voxel geometry kernel.
//!
//! A script is first interpreted into a lazy CSG tree ([`Model`]) whose
//! primitives keep their exact analytic description. Only the final tree is
//! sampled onto a grid, so intermediate geometry that temporarily leaves the
//! evaluation domain (before a translate, say) is never clipped.
//!
//! A voxel is occupied when its center lies inside the solid.

pub mod grid;
mod interp;
pub mod mesh;
pub mod sketch;
pub mod solid;
pub mod topology;
mod voxelize;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lang::{OpKind, Script};

pub use grid::{BitGrid, Grid};
pub use mesh::{read_stl, to_stl, write_stl, Mesh, MeshError};
pub use solid::Node;
pub use topology::connected_components;
pub use voxelize::voxelize_mesh;

pub type Vec3 = nalgebra::Vector3<f64>;

pub const DEFAULT_RESOLUTION: usize = 128;
pub const DEFAULT_HALF_EXTENT: f64 = 110.0;

/// Axis-aligned box, `min <= max` componentwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Aabb {
        Aabb { min, max }
    }

    /// The cube `[-half, half]³`.
    pub fn cube(half: f64) -> Aabb {
        Aabb::new(Vec3::repeat(-half), Vec3::repeat(half))
    }

    pub fn cube_around(center: Vec3, side: f64) -> Aabb {
        Aabb::new(
            center - Vec3::repeat(side / 2.0),
            center + Vec3::repeat(side / 2.0),
        )
    }

    pub fn from_points<'a>(pts: impl IntoIterator<Item = &'a Vec3>) -> Option<Aabb> {
        let mut it = pts.into_iter();
        let first = *it.next()?;
        Some(it.fold(Aabb::new(first, first), |b, p| {
            Aabb::new(b.min.inf(p), b.max.sup(p))
        }))
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn longest_side(&self) -> f64 {
        self.extent().max()
    }

    pub fn is_empty(&self) -> bool {
        (0..3).any(|a| !(self.min[a] < self.max[a]))
    }

    pub fn union(&self, o: &Aabb) -> Aabb {
        Aabb::new(self.min.inf(&o.min), self.max.sup(&o.max))
    }

    pub fn intersection(&self, o: &Aabb) -> Option<Aabb> {
        let b = Aabb::new(self.min.sup(&o.min), self.max.inf(&o.max));
        (0..3).all(|a| b.min[a] <= b.max[a]).then_some(b)
    }

    pub fn contains_box(&self, o: &Aabb) -> bool {
        (0..3).all(|a| self.min[a] <= o.min[a] && o.max[a] <= self.max[a])
    }

    pub fn translated(&self, d: Vec3) -> Aabb {
        Aabb::new(self.min + d, self.max + d)
    }

    pub fn inflated(&self, by: f64) -> Aabb {
        Aabb::new(self.min - Vec3::repeat(by), self.max + Vec3::repeat(by))
    }

    pub fn corners(&self) -> [Vec3; 8] {
        let (a, b) = (self.min, self.max);
        [0, 1, 2, 3, 4, 5, 6, 7].map(|m| {
            Vec3::new(
                if m & 1 == 0 { a.x } else { b.x },
                if m & 2 == 0 { a.y } else { b.y },
                if m & 4 == 0 { a.z } else { b.z },
            )
        })
    }
}

/// The default evaluation domain `[-110, 110]³`.
pub fn default_domain() -> Aabb {
    Aabb::cube(DEFAULT_HALF_EXTENT)
}

/// Occupancy grid with physical placement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoxelSolid {
    pub grid: Grid,
    pub occupancy: BitGrid,
}

impl VoxelSolid {
    pub fn empty(grid: Grid) -> VoxelSolid {
        let occupancy = BitGrid::new(grid.dims);
        VoxelSolid { grid, occupancy }
    }

    pub fn resolution(&self) -> [usize; 3] {
        self.grid.dims
    }

    pub fn spacing(&self) -> f64 {
        self.grid.spacing
    }

    pub fn count(&self) -> usize {
        self.occupancy.count()
    }

    pub fn is_empty(&self) -> bool {
        !self.occupancy.any()
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> bool {
        self.occupancy.get(i, j, k)
    }

    pub fn volume(&self) -> f64 {
        self.count() as f64 * self.grid.spacing.powi(3)
    }

    /// Index bounds `[lo, hi]` (inclusive) of the set voxels.
    pub fn index_bounds(&self) -> Option<([usize; 3], [usize; 3])> {
        let mut lo = [usize::MAX; 3];
        let mut hi = [0usize; 3];
        let mut any = false;
        for idx in self.occupancy.ones() {
            let c = self.grid.coords(idx);
            for a in 0..3 {
                lo[a] = lo[a].min(c[a]);
                hi[a] = hi[a].max(c[a]);
            }
            any = true;
        }
        any.then_some((lo, hi))
    }

    /// Tight bound of the set voxels (voxel cells, not centers).
    pub fn aabb(&self) -> Option<Aabb> {
        let (lo, hi) = self.index_bounds()?;
        let g = &self.grid;
        let min = Vec3::from_fn(|a, _| g.origin[a] + lo[a] as f64 * g.spacing);
        let max = Vec3::from_fn(|a, _| g.origin[a] + (hi[a] + 1) as f64 * g.spacing);
        Some(Aabb::new(min, max))
    }

    pub fn components(&self) -> usize {
        connected_components(&self.occupancy)
    }
}

/// Outcome of evaluating a script.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub success: bool,
    pub solid_count: usize,
    pub volume: f64,
    pub aabb: Option<Aabb>,
    pub unsupported_ops: Vec<OpKind>,
    pub approximated_ops: Vec<OpKind>,
    pub failure_reason: Option<String>,
    /// Named validity checks and their outcomes.
    pub checks: Vec<(String, bool)>,
}

pub const KERNEL_UNSUPPORTED: &str = "kernel-unsupported";

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EvalError {
    #[error("resolution {0} outside [16, 512]")]
    Resolution(usize),
    #[error("empty evaluation domain")]
    EmptyDomain,
    #[error("undefined temporary `{0}`")]
    Undefined(String),
    #[error("`{target}` ({op}): {message}")]
    Runtime {
        target: String,
        op: OpKind,
        message: String,
    },
}

/// An interpreted script: the solid's CSG tree plus capability notes.
#[derive(Debug, Clone)]
pub struct Model {
    pub root: Arc<Node>,
    pub approximated_ops: Vec<OpKind>,
    pub unsupported_ops: Vec<OpKind>,
}

impl Model {
    /// Conservative bound of the solid, `None` when provably empty.
    pub fn bbox(&self) -> Option<Aabb> {
        self.root.bbox()
    }

    /// Bounding box measured on a grid fitted to the conservative bound.
    /// Faces of the conservative bound that agree with the voxel estimate
    /// are taken exactly; others use the middle of the voxel uncertainty
    /// interval.
    pub fn measure_aabb(&self, resolution: usize) -> Option<Aabb> {
        let bound = self.bbox()?;
        let pad = bound.longest_side().max(1e-6) * 2.0 / resolution as f64;
        let grid = Grid::over(&bound.inflated(pad), resolution);
        let v = self.rasterize(&grid);
        let (lo, hi) = v.index_bounds()?;
        let s = grid.spacing;
        let mut min = Vec3::zeros();
        let mut max = Vec3::zeros();
        for a in 0..3 {
            let first = grid.center_coord(a, lo[a]);
            let last = grid.center_coord(a, hi[a]);
            // the true face lies in (first - s, first] and [last, last + s)
            min[a] = if bound.min[a] > first - s && bound.min[a] <= first {
                bound.min[a]
            } else {
                first - s / 2.0
            };
            max[a] = if bound.max[a] < last + s && bound.max[a] >= last {
                bound.max[a]
            } else {
                last + s / 2.0
            };
        }
        Some(Aabb::new(min, max))
    }

    /// Occupancy of the shape scaled into the unit cube: a cube grid around
    /// the measured box center whose side is the longest measured side.
    pub fn unit_occupancy(&self, resolution: usize) -> Option<BitGrid> {
        let b = self.measure_aabb(resolution)?;
        let grid = Grid::over(&Aabb::cube_around(b.center(), b.longest_side()), resolution);
        Some(self.rasterize(&grid).occupancy)
    }

    pub fn rasterize(&self, grid: &Grid) -> VoxelSolid {
        if !self.unsupported_ops.is_empty() {
            return VoxelSolid::empty(grid.clone());
        }
        VoxelSolid {
            grid: grid.clone(),
            occupancy: self.root.rasterize(grid),
        }
    }

    pub fn evaluate_on(&self, grid: &Grid) -> (VoxelSolid, EvalReport) {
        let v = self.rasterize(grid);
        let report = self.report(&v);
        (v, report)
    }

    fn report(&self, v: &VoxelSolid) -> EvalReport {
        let solid_count = v.components();
        let volume = v.volume();
        let single = solid_count == 1;
        let positive = volume > 0.0;
        let inside = v
            .index_bounds()
            .is_none_or(|(lo, hi)| (0..3).all(|a| lo[a] > 0 && hi[a] + 1 < v.grid.dims[a]));
        let failure_reason = if !self.unsupported_ops.is_empty() {
            Some(KERNEL_UNSUPPORTED.to_string())
        } else if !positive {
            Some("empty result".to_string())
        } else if !single {
            Some(format!("{solid_count} solids"))
        } else if !inside {
            Some("touches the domain boundary".to_string())
        } else {
            None
        };
        EvalReport {
            success: failure_reason.is_none(),
            solid_count,
            volume,
            aabb: v.aabb(),
            unsupported_ops: self.unsupported_ops.clone(),
            approximated_ops: self.approximated_ops.clone(),
            failure_reason,
            checks: vec![
                ("single_component".into(), single),
                ("positive_volume".into(), positive),
                // voxel boundary meshes are closed by construction
                ("closed_surface".into(), positive),
                ("inside_domain".into(), inside),
            ],
        }
    }
}

/// Interprets a script into its CSG tree.
pub fn build(script: &Script) -> Result<Model, EvalError> {
    interp::build(script)
}

/// Evaluates `script` on a grid whose longest side over `domain` holds
/// `resolution` voxels.
pub fn evaluate(
    script: &Script,
    resolution: usize,
    domain: &Aabb,
) -> Result<(VoxelSolid, EvalReport), EvalError> {
    let grid = checked_grid(resolution, domain)?;
    Ok(build(script)?.evaluate_on(&grid))
}

/// Evaluates on the default domain at the default resolution.
pub fn evaluate_default(script: &Script) -> Result<(VoxelSolid, EvalReport), EvalError> {
    evaluate(script, DEFAULT_RESOLUTION, &default_domain())
}

pub fn checked_grid(resolution: usize, domain: &Aabb) -> Result<Grid, EvalError> {
    if !(16..=512).contains(&resolution) {
        return Err(EvalError::Resolution(resolution));
    }
    if domain.is_empty()
        || !domain
            .min
            .iter()
            .chain(domain.max.iter())
            .all(|c| c.is_finite())
    {
        return Err(EvalError::EmptyDomain);
    }
    Ok(Grid::over(domain, resolution))
}
