//! Shape-comparison metrics: unit normalization, Chamfer distance,
//! volumetric IoU, invalid rate, median aggregation and the scalar reward.

pub mod kdtree;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{voxelize_mesh, Aabb, EvalReport, Mesh, MeshError, Vec3, VoxelSolid};

pub use kdtree::KdTree;

/// Surface samples per mesh.
pub const CHAMFER_POINTS: usize = 8192;
/// Voxel resolution over the unit cube for IoU.
pub const IOU_RESOLUTION: usize = 64;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("mesh has zero extent")]
    DegenerateExtent,
    #[error("mesh has no triangles")]
    EmptyMesh,
    #[error("voxel grids differ in placement or resolution")]
    DomainMismatch,
    #[error("empty input list")]
    EmptyList,
    #[error("IoU {0} outside [0, 1]")]
    Range(f64),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// Translates the AABB center to (0.5, 0.5, 0.5) and scales uniformly so
/// the longest side is 1.
pub fn normalize_unit(m: &Mesh) -> Result<Mesh, MetricsError> {
    let b = m.bbox().ok_or(MetricsError::EmptyMesh)?;
    let l = b.longest_side();
    if !(l > 0.0) {
        return Err(MetricsError::DegenerateExtent);
    }
    let c = b.center();
    let half = Vec3::repeat(0.5);
    Ok(m.map(|p| (p - c) / l + half))
}

/// Mean squared nearest-neighbor distance from each point of `a` to `b`,
/// plus the reverse term, times 10³.
pub fn chamfer_points(a: &[Vec3], b: &[Vec3]) -> Result<f64, MetricsError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricsError::EmptyMesh);
    }
    let ta = KdTree::new(a);
    let tb = KdTree::new(b);
    let one = |from: &[Vec3], to: &KdTree| {
        from.par_iter()
            .map(|p| to.nearest_dist2(p))
            .collect::<Vec<f64>>()
    };
    Ok(combine(&one(a, &tb), &one(b, &ta)))
}

/// [`chamfer_points`] by exhaustive search.
pub fn chamfer_points_brute(a: &[Vec3], b: &[Vec3]) -> Result<f64, MetricsError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricsError::EmptyMesh);
    }
    let one = |from: &[Vec3], to: &[Vec3]| {
        from.iter()
            .map(|p| {
                to.iter()
                    .map(|q| kdtree::dist2(q, p))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect::<Vec<f64>>()
    };
    Ok(combine(&one(a, b), &one(b, a)))
}

// Sequential sums keep both search strategies bit-identical.
fn combine(ab: &[f64], ba: &[f64]) -> f64 {
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    (mean(ab) + mean(ba)) * 1e3
}

/// Chamfer distance between surface samples of two (normalized) meshes,
/// both sampled with `seed`.
pub fn chamfer(a: &Mesh, b: &Mesh, n: usize, seed: u64) -> Result<f64, MetricsError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricsError::EmptyMesh);
    }
    chamfer_points(&a.sample_surface(n, seed)?, &b.sample_surface(n, seed)?)
}

/// `100·|a∧b| / |a∨b|`; 100 when both are empty.
pub fn iou(a: &VoxelSolid, b: &VoxelSolid) -> Result<f64, MetricsError> {
    if a.grid.dims != b.grid.dims || !a.grid.same_lattice(&b.grid) {
        return Err(MetricsError::DomainMismatch);
    }
    let union = a.occupancy.union_count(&b.occupancy);
    if union == 0 {
        return Ok(100.0);
    }
    Ok(100.0 * a.occupancy.intersection_count(&b.occupancy) as f64 / union as f64)
}

/// The unit cube `[0, 1]³`.
pub fn unit_domain() -> Aabb {
    Aabb::new(Vec3::zeros(), Vec3::repeat(1.0))
}

/// Voxelizes a normalized mesh over the unit cube.
pub fn voxelize_unit(m: &Mesh, resolution: usize) -> Result<VoxelSolid, MetricsError> {
    Ok(voxelize_mesh(m, resolution, &unit_domain())?)
}

pub fn invalid_rate(reports: &[EvalReport]) -> Result<f64, MetricsError> {
    if reports.is_empty() {
        return Err(MetricsError::EmptyList);
    }
    let bad = reports.iter().filter(|r| !r.success).count();
    Ok(100.0 * bad as f64 / reports.len() as f64)
}

/// Median with the lower middle element for even counts.
pub fn median_cd(values: &[f64]) -> Result<f64, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::EmptyList);
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v[(v.len() - 1) / 2])
}

/// `10·iou01` when the prediction compiled, else −10.
pub fn reward(compiled: bool, iou01: f64) -> Result<f64, MetricsError> {
    if !compiled {
        return Ok(-10.0);
    }
    if !(0.0..=1.0).contains(&iou01) {
        return Err(MetricsError::Range(iou01));
    }
    Ok(10.0 * iou01)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsConfig {
    pub n_points: usize,
    pub iou_resolution: usize,
    pub seed: u64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            n_points: CHAMFER_POINTS,
            iou_resolution: IOU_RESOLUTION,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Chamfer distance ×10³.
    pub cd: Option<f64>,
    /// Volumetric IoU in percent.
    pub iou: Option<f64>,
    pub valid: bool,
    pub notes: Vec<String>,
}

impl MetricReport {
    pub fn invalid(notes: Vec<String>) -> MetricReport {
        MetricReport {
            cd: None,
            iou: None,
            valid: false,
            notes,
        }
    }
}

/// Compares a prediction against a target after normalizing both into the
/// unit cube.
pub fn compare(
    pred: &Mesh,
    target: &Mesh,
    cfg: &MetricsConfig,
    notes: Vec<String>,
) -> Result<MetricReport, MetricsError> {
    let p = normalize_unit(pred)?;
    let t = normalize_unit(target)?;
    let cd = chamfer(&p, &t, cfg.n_points, cfg.seed)?;
    let iou = iou(
        &voxelize_unit(&p, cfg.iou_resolution)?,
        &voxelize_unit(&t, cfg.iou_resolution)?,
    )?;
    Ok(MetricReport {
        cd: Some(cd),
        iou: Some(iou),
        valid: true,
        notes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub median_cd: Option<f64>,
    /// Mean over valid predictions only.
    pub mean_iou: Option<f64>,
    pub ir: f64,
    pub count: usize,
}

pub fn summarize(reports: &[MetricReport]) -> Result<Summary, MetricsError> {
    if reports.is_empty() {
        return Err(MetricsError::EmptyList);
    }
    let cds: Vec<f64> = reports.iter().filter_map(|r| r.cd).collect();
    let ious: Vec<f64> = reports.iter().filter_map(|r| r.iou).collect();
    let invalid = reports.iter().filter(|r| !r.valid).count();
    Ok(Summary {
        median_cd: median_cd(&cds).ok(),
        mean_iou: (!ious.is_empty()).then(|| ious.iter().sum::<f64>() / ious.len() as f64),
        ir: 100.0 * invalid as f64 / reports.len() as f64,
        count: reports.len(),
    })
}

#[cfg(test)]
mod tests;
