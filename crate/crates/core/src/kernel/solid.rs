//! Lazy CSG tree and its rasterization onto voxel grids.

use std::f64::consts::TAU;
use std::sync::Arc;

use nalgebra::Matrix3;
use rayon::prelude::*;

use super::grid::{BitGrid, Grid};
use super::sketch::{Frame, Loop, Region, P2};
use super::topology::erode;
use super::{Aabb, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoolOp {
    Union,
    Cut,
    Intersect,
}

#[derive(Debug)]
pub enum Node {
    Empty,
    /// Region swept along the frame normal over heights `[h0, h1]`.
    Prism {
        frame: Frame,
        region: Region,
        h0: f64,
        h1: f64,
    },
    /// Region revolved about the in-plane axis through `origin` along unit
    /// `axis`; `angle` in radians, its sign picks the direction.
    Revolve {
        frame: Frame,
        region: Region,
        origin: P2,
        axis: P2,
        angle: f64,
    },
    /// Ruled solid between `bottom` (height 0) and `top` (height `height`),
    /// both in the frame's plane coordinates with matching vertex counts.
    Loft {
        frame: Frame,
        bottom: Loop,
        top: Loop,
        height: f64,
    },
    Sphere {
        center: Vec3,
        r: f64,
    },
    Bool {
        op: BoolOp,
        a: Arc<Node>,
        b: Arc<Node>,
    },
    /// Maps the inner solid by `p ↦ m·p + t`.
    Affine {
        m: Matrix3<f64>,
        t: Vec3,
        inner: Arc<Node>,
    },
    /// Hollows the inner solid, keeping a wall of the given thickness.
    Shell {
        inner: Arc<Node>,
        thickness: f64,
    },
}

impl Node {
    /// Affine image of `inner`, folding nested maps into one.
    pub fn affine(m: Matrix3<f64>, t: Vec3, inner: Arc<Node>) -> Node {
        match &*inner {
            Node::Affine {
                m: m2,
                t: t2,
                inner: i2,
            } => Node::Affine {
                m: m * m2,
                t: m * t2 + t,
                inner: i2.clone(),
            },
            _ => Node::Affine { m, t, inner },
        }
    }

    /// Conservative bound; `None` when the node is known to be empty.
    pub fn bbox(&self) -> Option<Aabb> {
        match self {
            Node::Empty => None,
            Node::Prism {
                frame,
                region,
                h0,
                h1,
            } => {
                let (lo, hi) = region.bbox()?;
                let pts: Vec<Vec3> = [lo.x, hi.x]
                    .iter()
                    .flat_map(|&u| [lo.y, hi.y].map(move |v| (u, v)))
                    .flat_map(|(u, v)| [*h0, *h1].map(|h| frame.to_world(P2::new(u, v), h)))
                    .collect();
                Aabb::from_points(&pts)
            }
            Node::Revolve {
                frame,
                region,
                origin,
                axis,
                ..
            } => {
                let (lo, hi) = region.bbox()?;
                let corners = [lo, hi, P2::new(lo.x, hi.y), P2::new(hi.x, lo.y)];
                let perp = P2::new(-axis.y, axis.x);
                let (mut tmin, mut tmax, mut rho) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
                for c in corners {
                    let d = c - origin;
                    tmin = tmin.min(d.dot(axis));
                    tmax = tmax.max(d.dot(axis));
                    rho = rho.max(d.dot(&perp).abs());
                }
                let a3 = frame.x * axis.x + frame.y * axis.y;
                let p0 = frame.to_world(origin + axis * tmin, 0.0);
                let p1 = frame.to_world(origin + axis * tmax, 0.0);
                let r = Vec3::from_fn(|i, _| rho * (1.0 - a3[i] * a3[i]).max(0.0).sqrt());
                Some(Aabb::new(p0.inf(&p1) - r, p0.sup(&p1) + r))
            }
            Node::Loft {
                frame,
                bottom,
                top,
                height,
            } => {
                let (a, b) = bottom.bbox();
                let (c, d) = top.bbox();
                let pts = [
                    frame.to_world(a, 0.0),
                    frame.to_world(b, 0.0),
                    frame.to_world(c, *height),
                    frame.to_world(d, *height),
                ];
                Aabb::from_points(&pts)
            }
            Node::Sphere { center, r } => Some(Aabb::new(
                center - Vec3::repeat(*r),
                center + Vec3::repeat(*r),
            )),
            Node::Bool { op, a, b } => match op {
                BoolOp::Union => match (a.bbox(), b.bbox()) {
                    (Some(x), Some(y)) => Some(x.union(&y)),
                    (x, y) => x.or(y),
                },
                BoolOp::Cut => a.bbox(),
                BoolOp::Intersect => a.bbox()?.intersection(&b.bbox()?),
            },
            Node::Affine { m, t, inner } => {
                let b = inner.bbox()?;
                Aabb::from_points(&b.corners().map(|c| m * c + t))
            }
            Node::Shell { inner, .. } => inner.bbox(),
        }
    }

    /// Point membership for analytic primitives; `None` for composite nodes.
    pub fn primitive_contains(&self, p: &Vec3) -> Option<bool> {
        Some(match self {
            Node::Empty => false,
            Node::Prism {
                frame,
                region,
                h0,
                h1,
            } => {
                let (q, h) = frame.to_local(*p);
                h0.min(*h1) <= h && h <= h0.max(*h1) && region.contains(q)
            }
            Node::Revolve {
                frame,
                region,
                origin,
                axis,
                angle,
            } => {
                let (q, mut h) = frame.to_local(*p);
                if *angle < 0.0 {
                    h = -h;
                }
                let theta = angle.abs();
                let full = theta >= TAU - 1e-12;
                let perp = P2::new(-axis.y, axis.x);
                let d = q - origin;
                let t = d.dot(axis);
                let r1 = d.dot(&perp);
                let rho = r1.hypot(h);
                let psi = h.atan2(r1).rem_euclid(TAU);
                let base = origin + axis * t;
                ((full || psi <= theta) && region.contains(base + perp * rho))
                    || ((full || (psi - TAU / 2.0).rem_euclid(TAU) <= theta)
                        && region.contains(base - perp * rho))
            }
            Node::Loft {
                frame,
                bottom,
                top,
                height,
            } => {
                let (q, h) = frame.to_local(*p);
                let s = h / height;
                (0.0..=1.0).contains(&s) && lerp_loop(bottom, top, s).toggles(q)
            }
            Node::Sphere { center, r } => (p - center).norm_squared() <= r * r,
            _ => return None,
        })
    }

    /// Exact point membership; `None` when the subtree contains a shell.
    pub fn contains(&self, p: &Vec3) -> Option<bool> {
        match self {
            Node::Bool { op, a, b } => {
                let x = a.contains(p)?;
                let y = b.contains(p)?;
                Some(match op {
                    BoolOp::Union => x || y,
                    BoolOp::Cut => x && !y,
                    BoolOp::Intersect => x && y,
                })
            }
            Node::Affine { m, t, inner } => match m.try_inverse() {
                Some(minv) => inner.contains(&(minv * (p - t))),
                None => Some(false),
            },
            Node::Shell { .. } => None,
            _ => self.primitive_contains(p),
        }
    }

    fn has_shell(&self) -> bool {
        match self {
            Node::Shell { .. } => true,
            Node::Bool { a, b, .. } => a.has_shell() || b.has_shell(),
            Node::Affine { inner, .. } => inner.has_shell(),
            _ => false,
        }
    }

    pub fn rasterize(&self, grid: &Grid) -> BitGrid {
        match self {
            Node::Empty => BitGrid::new(grid.dims),
            Node::Prism {
                frame,
                region,
                h0,
                h1,
            } => match frame.axis_aligned() {
                Some(axes) => {
                    self.prism_aligned(grid, frame, axes, region, h0.min(*h1), h0.max(*h1))
                }
                None => self.raster_primitive(grid),
            },
            Node::Revolve { .. } | Node::Loft { .. } | Node::Sphere { .. } => {
                self.raster_primitive(grid)
            }
            Node::Bool { op, a, b } => {
                let mut out = a.rasterize(grid);
                match op {
                    BoolOp::Union => out.or_assign(&b.rasterize(grid)),
                    BoolOp::Cut => {
                        if out.any() {
                            out.and_not_assign(&b.rasterize(grid))
                        }
                    }
                    BoolOp::Intersect => {
                        if out.any() {
                            out.and_assign(&b.rasterize(grid))
                        }
                    }
                }
                out
            }
            Node::Affine { m, t, inner } => affine_raster(m, t, inner, grid, self.bbox()),
            Node::Shell { inner, thickness } => shell_raster(inner, *thickness, grid),
        }
    }

    fn raster_primitive(&self, grid: &Grid) -> BitGrid {
        raster_by(grid, self.bbox(), |p| {
            self.primitive_contains(&p).unwrap_or(false)
        })
    }

    fn prism_aligned(
        &self,
        grid: &Grid,
        frame: &Frame,
        axes: [(usize, f64); 3],
        region: &Region,
        hlo: f64,
        hhi: f64,
    ) -> BitGrid {
        let mut out = BitGrid::new(grid.dims);
        let Some(range) = self.bbox().and_then(|b| grid.index_range(&b)) else {
            return out;
        };
        let [(au, su), (av, sv), (an, sn)] = axes;
        let layers: Vec<usize> = range[an]
            .clone()
            .filter(|&i| {
                let h = (grid.center_coord(an, i) - frame.origin[an]) * sn;
                hlo <= h && h <= hhi
            })
            .collect();
        if layers.is_empty() {
            return out;
        }
        let cols: Vec<(usize, usize)> = range[au]
            .clone()
            .into_par_iter()
            .flat_map_iter(|iu| {
                let u = (grid.center_coord(au, iu) - frame.origin[au]) * su;
                range[av].clone().filter_map(move |iv| {
                    let v = (grid.center_coord(av, iv) - frame.origin[av]) * sv;
                    region.contains(P2::new(u, v)).then_some((iu, iv))
                })
            })
            .collect();
        for (iu, iv) in cols {
            for &il in &layers {
                let mut c = [0usize; 3];
                c[au] = iu;
                c[av] = iv;
                c[an] = il;
                out.set(c[0], c[1], c[2], true);
            }
        }
        out
    }
}

fn lerp_loop(a: &Loop, b: &Loop, s: f64) -> Loop {
    match (a, b) {
        (Loop::Poly(p), Loop::Poly(q)) => {
            Loop::Poly(p.iter().zip(q).map(|(x, y)| x + (y - x) * s).collect())
        }
        (Loop::Circle { center: c0, r: r0 }, Loop::Circle { center: c1, r: r1 }) => Loop::Circle {
            center: c0 + (c1 - c0) * s,
            r: r0 + (r1 - r0) * s,
        },
        _ => a.clone(),
    }
}

/// Sets every voxel of `bb` whose center satisfies `f`.
pub fn raster_by(grid: &Grid, bb: Option<Aabb>, f: impl Fn(Vec3) -> bool + Sync) -> BitGrid {
    let mut out = BitGrid::new(grid.dims);
    let Some([ri, rj, rk]) = bb.and_then(|b| grid.index_range(&b)) else {
        return out;
    };
    let hits: Vec<Vec<usize>> = rk
        .into_par_iter()
        .map(|k| {
            let mut v = Vec::new();
            for j in rj.clone() {
                for i in ri.clone() {
                    if f(grid.center(i, j, k)) {
                        v.push(grid.index(i, j, k));
                    }
                }
            }
            v
        })
        .collect();
    for idx in hits.into_iter().flatten() {
        out.set_idx(idx, true);
    }
    out
}

/// Decomposes `m = k·P` with `P` a signed permutation: returns `k` and, per
/// column, the row it maps to and its sign.
pub fn signed_permutation(m: &Matrix3<f64>) -> Option<(f64, [(usize, f64); 3])> {
    let k = m.determinant().abs().cbrt();
    if !(k > 0.0) {
        return None;
    }
    let tol = 1e-12 * k;
    let mut cols = [(0usize, 0.0f64); 3];
    let mut used = [false; 3];
    for (a, col) in cols.iter_mut().enumerate() {
        let mut found = None;
        for r in 0..3 {
            let v = m[(r, a)];
            if (v.abs() - k).abs() <= tol {
                if found.is_some() {
                    return None;
                }
                found = Some((r, v.signum()));
            } else if v.abs() > tol {
                return None;
            }
        }
        let (r, s) = found?;
        if used[r] {
            return None;
        }
        used[r] = true;
        *col = (r, s);
    }
    Some((k, cols))
}

fn affine_raster(
    m: &Matrix3<f64>,
    t: &Vec3,
    inner: &Node,
    grid: &Grid,
    bb: Option<Aabb>,
) -> BitGrid {
    let mut out = BitGrid::new(grid.dims);
    if bb.and_then(|b| b.intersection(&grid.bounds())).is_none() {
        return out;
    }
    if let Some((k, cols)) = signed_permutation(m) {
        // The preimage of the output lattice is itself an axis-aligned lattice.
        let s = grid.spacing;
        let mut origin = Vec3::zeros();
        let mut dims = [0usize; 3];
        for (a, &(w, sign)) in cols.iter().enumerate() {
            let n = grid.dims[w];
            dims[a] = n;
            origin[a] = if sign > 0.0 {
                (grid.origin[w] - t[w]) / k
            } else {
                -(grid.origin[w] - t[w] + n as f64 * s) / k
            };
        }
        let pre = Grid {
            origin,
            spacing: s / k,
            dims,
        };
        let bits = inner.rasterize(&pre);
        for idx in bits.ones() {
            let j = pre.coords(idx);
            let mut c = [0usize; 3];
            for (a, &(w, sign)) in cols.iter().enumerate() {
                c[w] = if sign > 0.0 { j[a] } else { dims[a] - 1 - j[a] };
            }
            out.set(c[0], c[1], c[2], true);
        }
        return out;
    }
    let Some(minv) = m.try_inverse() else {
        return out;
    };
    if !inner.has_shell() {
        return raster_by(grid, bb, |p| {
            inner.contains(&(minv * (p - t))).unwrap_or(false)
        });
    }
    // Shells are voxel operations: rasterize on an auxiliary lattice and
    // sample it at the preimages of the output voxel centers.
    let Some(pre_bb) = Aabb::from_points(&grid.bounds().corners().map(|c| minv * (c - t))) else {
        return out;
    };
    let s = grid.spacing / m.determinant().abs().cbrt();
    let Some(ib) = inner
        .bbox()
        .and_then(|b| b.intersection(&pre_bb.inflated(2.0 * s)))
    else {
        return out;
    };
    let s_aux = s.max(ib.longest_side() / 512.0);
    let dims = [0, 1, 2].map(|a| (ib.extent()[a] / s_aux).ceil() as usize + 2);
    let aux = Grid {
        origin: ib.min - Vec3::repeat(s_aux),
        spacing: s_aux,
        dims,
    };
    let bits = inner.rasterize(&aux);
    raster_by(grid, bb, |p| {
        let q = minv * (p - t);
        let mut c = [0usize; 3];
        for a in 0..3 {
            let f = ((q[a] - aux.origin[a]) / s_aux).floor();
            if !(f >= 0.0 && f < dims[a] as f64) {
                return false;
            }
            c[a] = f as usize;
        }
        bits.get(c[0], c[1], c[2])
    })
}

/// Erosion radius in voxels used by `shell`.
pub fn shell_radius(thickness: f64, spacing: f64) -> usize {
    ((thickness / spacing).round() as usize).max(1)
}

fn shell_raster(inner: &Node, thickness: f64, grid: &Grid) -> BitGrid {
    let r = shell_radius(thickness, grid.spacing);
    let pad = r + 1;
    let padded = Grid {
        origin: grid.origin - Vec3::repeat(pad as f64 * grid.spacing),
        spacing: grid.spacing,
        dims: grid.dims.map(|d| d + 2 * pad),
    };
    let full = inner.rasterize(&padded);
    let mut wall = full.clone();
    wall.and_not_assign(&erode(&full, r));
    let mut out = BitGrid::new(grid.dims);
    for idx in wall.ones() {
        let [i, j, k] = padded.coords(idx);
        let inside = |c: usize, a: usize| c >= pad && c - pad < grid.dims[a];
        if inside(i, 0) && inside(j, 1) && inside(k, 2) {
            out.set(i - pad, j - pad, k - pad, true);
        }
    }
    out
}
