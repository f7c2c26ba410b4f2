//! Orthographic depth-as-intensity views of voxel solids and the 2×4 view
//! grid, with binary PGM I/O.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{Aabb, Grid, Model, Vec3, VoxelSolid};

/// Side of one view in pixels.
pub const VIEW_SIZE: usize = 238;
/// Half side of the working cube.
pub const CUBE_HALF: f64 = 100.0;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("solid extends {excess:.3} units beyond the working cube (limit {limit:.3})")]
    OutOfDomain { excess: f64, limit: f64 },
    #[error("expected 8 views (or 7 in legacy mode), got {0}")]
    Count(usize),
    #[error("view {index} is {width}x{height}, expected {VIEW_SIZE}x{VIEW_SIZE}")]
    ViewSize {
        index: usize,
        width: usize,
        height: usize,
    },
    #[error("malformed PGM: {0}")]
    Pgm(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    /// Row-major, row 0 at the top.
    pub pixels: Vec<u8>,
}

impl DepthImage {
    pub fn blank(width: usize, height: usize) -> DepthImage {
        DepthImage {
            width,
            height,
            pixels: vec![0; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    /// Horizontal flip.
    pub fn mirrored(&self) -> DepthImage {
        let mut out = self.clone();
        for row in out.pixels.chunks_mut(self.width) {
            row.reverse();
        }
        out
    }

    pub fn foreground(&self) -> usize {
        self.pixels.iter().filter(|&&p| p > 0).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum View {
    PosX,
    NegX,
    PosY,
    NegY,
    PosZ,
    NegZ,
    Iso1,
    Iso2,
}

impl View {
    /// Grid order: row 1 = +X, −X, +Y, −Y; row 2 = +Z, −Z, ISO1, ISO2.
    pub const ALL: [View; 8] = [
        View::PosX,
        View::NegX,
        View::PosY,
        View::NegY,
        View::PosZ,
        View::NegZ,
        View::Iso1,
        View::Iso2,
    ];

    /// Unit vector from the origin toward the camera.
    pub fn direction(self) -> Vec3 {
        let s = 1.0 / 3f64.sqrt();
        match self {
            View::PosX => Vec3::x(),
            View::NegX => -Vec3::x(),
            View::PosY => Vec3::y(),
            View::NegY => -Vec3::y(),
            View::PosZ => Vec3::z(),
            View::NegZ => -Vec3::z(),
            View::Iso1 => Vec3::new(s, s, s),
            View::Iso2 => Vec3::new(-s, -s, s),
        }
    }

    pub fn is_iso(self) -> bool {
        matches!(self, View::Iso1 | View::Iso2)
    }

    pub fn spec(self) -> ViewSpec {
        ViewSpec {
            view: self,
            mirrored: matches!(self, View::NegZ | View::PosY | View::PosX),
        }
    }

    pub fn camera(self) -> Camera {
        let dir = self.direction();
        // +Z is up except when looking along Z, where +Y is up
        let up = match self {
            View::PosZ | View::NegZ => Vec3::y(),
            View::Iso1 | View::Iso2 => (Vec3::z() - dir * dir.z).normalize(),
            _ => Vec3::z(),
        };
        let extent = if self.is_iso() {
            CUBE_HALF * 3f64.sqrt()
        } else {
            CUBE_HALF
        };
        Camera {
            dir,
            right: up.cross(&dir),
            up,
            half_width: extent,
            half_depth: extent,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewSpec {
    pub view: View,
    pub mirrored: bool,
}

/// Orthographic camera: rays start on the plane `dir·half_depth` and travel
/// along `−dir` for `2·half_depth`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub dir: Vec3,
    pub right: Vec3,
    pub up: Vec3,
    pub half_width: f64,
    pub half_depth: f64,
}

impl Camera {
    /// The same camera moved by an orthogonal map.
    pub fn transformed(&self, m: &nalgebra::Matrix3<f64>) -> Camera {
        Camera {
            dir: m * self.dir,
            right: m * self.right,
            up: m * self.up,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenderOptions {
    /// Nearest surface brightest; otherwise farthest brightest.
    pub near_bright: bool,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions { near_bright: true }
    }
}

/// Entry parameter of the ray `o + t·d` into the first set voxel with
/// `t ∈ [0, t_max]`.
fn first_hit(v: &VoxelSolid, b: &Aabb, o: Vec3, d: Vec3, t_max: f64) -> Option<f64> {
    let g = &v.grid;
    let (mut t0, mut t1) = (0.0f64, t_max);
    for a in 0..3 {
        if d[a] == 0.0 {
            if o[a] < b.min[a] || o[a] >= b.max[a] {
                return None;
            }
        } else {
            let (p, q) = ((b.min[a] - o[a]) / d[a], (b.max[a] - o[a]) / d[a]);
            t0 = t0.max(p.min(q));
            t1 = t1.min(p.max(q));
        }
    }
    if t0 > t1 {
        return None;
    }
    let start = o + d * t0;
    let mut idx = [0i64; 3];
    let mut step = [0i64; 3];
    let mut next = [f64::INFINITY; 3];
    let mut delta = [f64::INFINITY; 3];
    for a in 0..3 {
        let n = g.dims[a] as i64;
        idx[a] = (((start[a] - g.origin[a]) / g.spacing).floor() as i64).clamp(0, n - 1);
        if d[a] != 0.0 {
            step[a] = if d[a] > 0.0 { 1 } else { -1 };
            let edge = g.origin[a] + (idx[a] + (d[a] > 0.0) as i64) as f64 * g.spacing;
            next[a] = (edge - o[a]) / d[a];
            delta[a] = g.spacing / d[a].abs();
        }
    }
    let mut t = t0;
    loop {
        if v.get(idx[0] as usize, idx[1] as usize, idx[2] as usize) {
            return Some(t);
        }
        let a = (0..3).min_by(|&x, &y| next[x].total_cmp(&next[y])).unwrap();
        t = next[a];
        if t > t1 {
            return None;
        }
        idx[a] += step[a];
        if idx[a] < 0 || idx[a] >= g.dims[a] as i64 {
            return None;
        }
        next[a] += delta[a];
    }
}

/// Renders through an arbitrary camera, without mirroring.
pub fn render_camera(v: &VoxelSolid, cam: &Camera, opts: &RenderOptions) -> DepthImage {
    let n = VIEW_SIZE;
    let px = 2.0 * cam.half_width / n as f64;
    let depth = 2.0 * cam.half_depth;
    let mut img = DepthImage::blank(n, n);
    // rays only need to traverse the occupied cells' bounding box
    let Some(b) = v.aabb() else {
        return img;
    };
    img.pixels
        .par_chunks_mut(n)
        .enumerate()
        .for_each(|(r, row)| {
            let vv = cam.half_width - (r as f64 + 0.5) * px;
            for (c, out) in row.iter_mut().enumerate() {
                let u = -cam.half_width + (c as f64 + 0.5) * px;
                let o = cam.dir * cam.half_depth + cam.right * u + cam.up * vv;
                if let Some(t) = first_hit(v, &b, o, -cam.dir, depth) {
                    let f = if opts.near_bright {
                        1.0 - t / depth
                    } else {
                        t / depth
                    };
                    *out = (255.0 * f).round().clamp(1.0, 255.0) as u8;
                }
            }
        });
    img
}

/// Checks that the solid lies in the working cube up to two voxel spacings.
pub fn check_domain(v: &VoxelSolid) -> Result<(), RenderError> {
    let Some(b) = v.aabb() else { return Ok(()) };
    let excess = (0..3)
        .map(|a| (b.max[a] - CUBE_HALF).max(-CUBE_HALF - b.min[a]))
        .fold(0.0f64, f64::max);
    let limit = 2.0 * v.spacing();
    if excess > limit {
        return Err(RenderError::OutOfDomain { excess, limit });
    }
    Ok(())
}

pub fn render_view(v: &VoxelSolid, spec: ViewSpec) -> Result<DepthImage, RenderError> {
    render_view_with(v, spec, &RenderOptions::default())
}

pub fn render_view_with(
    v: &VoxelSolid,
    spec: ViewSpec,
    opts: &RenderOptions,
) -> Result<DepthImage, RenderError> {
    check_domain(v)?;
    let img = render_camera(v, &spec.view.camera(), opts);
    Ok(if spec.mirrored { img.mirrored() } else { img })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViewMode {
    /// Six orthographic views and both isometric views.
    Eight,
    /// Legacy layout: the ISO2 cell stays blank.
    Seven,
}

impl ViewMode {
    pub fn from_count(n: usize) -> Option<ViewMode> {
        match n {
            8 => Some(ViewMode::Eight),
            7 => Some(ViewMode::Seven),
            _ => None,
        }
    }

    pub fn views(self) -> &'static [View] {
        match self {
            ViewMode::Eight => &View::ALL,
            ViewMode::Seven => &View::ALL[..7],
        }
    }
}

/// Tiles 8 views (or 7, leaving ISO2 blank) in [`View::ALL`] order into a
/// 952×476 image.
pub fn make_grid(views: &[DepthImage]) -> Result<DepthImage, RenderError> {
    if views.len() != 8 && views.len() != 7 {
        return Err(RenderError::Count(views.len()));
    }
    let n = VIEW_SIZE;
    let mut out = DepthImage::blank(4 * n, 2 * n);
    for (i, img) in views.iter().enumerate() {
        if img.width != n || img.height != n {
            return Err(RenderError::ViewSize {
                index: i,
                width: img.width,
                height: img.height,
            });
        }
        let (x0, y0) = ((i % 4) * n, (i / 4) * n);
        for (y, row) in img.pixels.chunks(n).enumerate() {
            let at = (y0 + y) * out.width + x0;
            out.pixels[at..at + n].copy_from_slice(row);
        }
    }
    Ok(out)
}

pub fn render_grid(
    v: &VoxelSolid,
    mode: ViewMode,
    opts: &RenderOptions,
) -> Result<DepthImage, RenderError> {
    let views = mode
        .views()
        .par_iter()
        .map(|view| render_view_with(v, view.spec(), opts))
        .collect::<Result<Vec<_>, _>>()?;
    make_grid(&views)
}

/// Rasterizes a model scaled into the working cube: a cube grid around the
/// measured center whose side is the longest measured side, relabelled as
/// `[−100, 100]³`.
pub fn fit_to_cube(model: &Model, resolution: usize) -> Option<VoxelSolid> {
    let b = model.measure_aabb(resolution)?;
    let fitted = Grid::over(&Aabb::cube_around(b.center(), b.longest_side()), resolution);
    let occupancy = model.rasterize(&fitted).occupancy;
    let grid = Grid::over(&Aabb::cube(CUBE_HALF), resolution);
    Some(VoxelSolid { grid, occupancy })
}

/// Binary PGM (P5), maxval 255.
pub fn write_pgm(img: &DepthImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}

pub fn read_pgm(bytes: &[u8]) -> Result<DepthImage, RenderError> {
    let err = |m: &str| RenderError::Pgm(m.to_string());
    let mut pos = 0;
    let mut fields = Vec::new();
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(err("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| err("non-ASCII header"))?);
    }
    if fields[0] != "P5" {
        return Err(err("magic is not P5"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| err("bad header number"));
    let (width, height, maxval) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
    if maxval != 255 {
        return Err(err("maxval must be 255"));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let end = pos + width * height;
    if bytes.len() != end {
        return Err(err("raster size does not match the header"));
    }
    Ok(DepthImage {
        width,
        height,
        pixels: bytes[pos..end].to_vec(),
    })
}
