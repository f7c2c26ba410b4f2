//! Planar sketches: loops drawn in a workplane frame.

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix2, Vector2};

use super::Vec3;
use crate::lang::PlaneCode;

pub type P2 = Vector2<f64>;

/// Orthonormal frame in world coordinates; `n = x × y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub origin: Vec3,
    pub x: Vec3,
    pub y: Vec3,
    pub n: Vec3,
}

impl Frame {
    pub fn new(plane: PlaneCode, origin: Vec3) -> Frame {
        let [x, y, n] = plane.axes().map(Vec3::from);
        Frame { origin, x, y, n }
    }

    pub fn from_axes(origin: Vec3, x: Vec3, y: Vec3) -> Frame {
        Frame {
            origin,
            x,
            y,
            n: x.cross(&y),
        }
    }

    pub fn to_world(&self, p: P2, h: f64) -> Vec3 {
        self.origin + self.x * p.x + self.y * p.y + self.n * h
    }

    /// In-plane coordinates and height above the plane.
    pub fn to_local(&self, w: Vec3) -> (P2, f64) {
        let d = w - self.origin;
        (P2::new(d.dot(&self.x), d.dot(&self.y)), d.dot(&self.n))
    }

    /// `(axis, sign)` of x, y and n when every frame axis is a coordinate axis.
    pub fn axis_aligned(&self) -> Option<[(usize, f64); 3]> {
        let f = |v: &Vec3| {
            let a = (0..3).find(|&a| v[a] != 0.0)?;
            ((v[a] == 1.0 || v[a] == -1.0) && (0..3).all(|b| b == a || v[b] == 0.0))
                .then_some((a, v[a]))
        };
        Some([f(&self.x)?, f(&self.y)?, f(&self.n)?])
    }
}

/// Rigid 2-D placement `p ↦ rot·p + offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Place {
    pub rot: Matrix2<f64>,
    pub offset: P2,
}

impl Place {
    pub fn identity() -> Place {
        Place {
            rot: Matrix2::identity(),
            offset: P2::zeros(),
        }
    }

    pub fn translation(offset: P2) -> Place {
        Place {
            rot: Matrix2::identity(),
            offset,
        }
    }

    pub fn rotation_deg(deg: f64) -> Place {
        let (s, c) = deg.to_radians().sin_cos();
        Place {
            rot: Matrix2::new(c, -s, s, c),
            offset: P2::zeros(),
        }
    }

    pub fn apply(&self, p: P2) -> P2 {
        self.rot * p + self.offset
    }

    /// `self ∘ other`.
    pub fn then(&self, other: &Place) -> Place {
        Place {
            rot: self.rot * other.rot,
            offset: self.rot * other.offset + self.offset,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Loop {
    Poly(Vec<P2>),
    Circle { center: P2, r: f64 },
}

impl Loop {
    pub fn placed(&self, pl: &Place) -> Loop {
        match self {
            Loop::Poly(pts) => Loop::Poly(pts.iter().map(|p| pl.apply(*p)).collect()),
            Loop::Circle { center, r } => Loop::Circle {
                center: pl.apply(*center),
                r: *r,
            },
        }
    }

    /// Whether `p` lies inside the loop (half-open crossing rule for polygons).
    pub fn toggles(&self, p: P2) -> bool {
        match self {
            Loop::Circle { center, r } => (p - center).norm_squared() <= r * r,
            Loop::Poly(pts) => polygon_contains(pts, p),
        }
    }

    pub fn bbox(&self) -> (P2, P2) {
        match self {
            Loop::Circle { center, r } => (center - P2::repeat(*r), center + P2::repeat(*r)),
            Loop::Poly(pts) => {
                let mut lo = P2::repeat(f64::INFINITY);
                let mut hi = P2::repeat(f64::NEG_INFINITY);
                for p in pts {
                    lo = lo.inf(p);
                    hi = hi.sup(p);
                }
                (lo, hi)
            }
        }
    }
}

pub fn polygon_contains(pts: &[P2], p: P2) -> bool {
    let mut inside = false;
    let n = pts.len();
    let mut j = n.wrapping_sub(1);
    for i in 0..n {
        let (a, b) = (pts[i], pts[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Loops grouped into sets: inside a set loops combine by even-odd parity,
/// sets combine by union.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Region {
    pub sets: Vec<Vec<Loop>>,
}

impl Region {
    pub fn is_empty(&self) -> bool {
        self.sets.iter().all(|s| s.is_empty())
    }

    pub fn contains(&self, p: P2) -> bool {
        self.sets
            .iter()
            .any(|s| s.iter().filter(|l| l.toggles(p)).count() % 2 == 1)
    }

    pub fn loops(&self) -> impl Iterator<Item = &Loop> {
        self.sets.iter().flatten()
    }

    pub fn bbox(&self) -> Option<(P2, P2)> {
        self.loops()
            .map(Loop::bbox)
            .reduce(|(a, b), (c, d)| (a.inf(&c), b.sup(&d)))
    }

    /// The single loop of a one-loop region.
    pub fn single_loop(&self) -> Option<&Loop> {
        let mut it = self.loops();
        let l = it.next()?;
        it.next().is_none().then_some(l)
    }
}

/// A sketch under construction: a frame, placement locations set by array
/// ops, closed loops, and the open path being drawn.
#[derive(Debug, Clone, PartialEq)]
pub struct Sketch {
    pub frame: Frame,
    locations: Vec<Place>,
    /// Region set receiving loops for each location, allocated lazily.
    loc_sets: Vec<Option<usize>>,
    region: Region,
    path: Vec<P2>,
    open_paths: Vec<Vec<P2>>,
}

impl Sketch {
    pub fn new(frame: Frame) -> Sketch {
        Sketch {
            frame,
            locations: vec![Place::identity()],
            loc_sets: vec![None],
            region: Region::default(),
            path: Vec::new(),
            open_paths: Vec::new(),
        }
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    pub fn locations(&self) -> &[Place] {
        &self.locations
    }

    /// First open polyline with at least two points.
    pub fn open_path(&self) -> Option<&[P2]> {
        self.open_paths
            .iter()
            .map(Vec::as_slice)
            .chain(std::iter::once(self.path.as_slice()))
            .find(|p| p.len() >= 2)
    }

    fn add_loop(&mut self, l: Loop) {
        for i in 0..self.locations.len() {
            let set = match self.loc_sets[i] {
                Some(s) => s,
                None => {
                    self.region.sets.push(Vec::new());
                    let s = self.region.sets.len() - 1;
                    self.loc_sets[i] = Some(s);
                    s
                }
            };
            self.region.sets[set].push(l.placed(&self.locations[i]));
        }
    }

    fn set_locations(&mut self, locs: Vec<Place>) {
        self.loc_sets = vec![None; locs.len()];
        self.locations = locs;
    }

    fn current(&mut self) -> P2 {
        if self.path.is_empty() {
            self.path.push(P2::zeros());
        }
        *self.path.last().unwrap()
    }

    pub fn move_to(&mut self, p: P2) {
        let old = std::mem::take(&mut self.path);
        if old.len() >= 2 {
            self.open_paths.push(old);
        }
        self.path.push(p);
    }

    pub fn line_to(&mut self, p: P2) {
        self.current();
        self.path.push(p);
    }

    /// Three-point arc from the current point through `mid` to `end`.
    pub fn arc_to(&mut self, mid: P2, end: P2) {
        let start = self.current();
        self.path
            .extend(arc_points(start, mid, end).into_iter().skip(1));
    }

    pub fn close(&mut self) -> Result<(), String> {
        let mut pts = std::mem::take(&mut self.path);
        if pts.len() >= 2 && (pts[0] - pts[pts.len() - 1]).norm() <= 1e-12 {
            pts.pop();
        }
        if pts.len() < 3 {
            return Err("close needs at least three distinct points".into());
        }
        if polygon_area(&pts).abs() <= 1e-12 {
            return Err("closed path has zero area".into());
        }
        self.add_loop(Loop::Poly(pts));
        Ok(())
    }

    pub fn rect(&mut self, w: f64, h: f64) -> Result<(), String> {
        if !(w > 0.0 && h > 0.0) {
            return Err("rect sides must be positive".into());
        }
        let (a, b) = (w / 2.0, h / 2.0);
        self.add_loop(Loop::Poly(vec![
            P2::new(-a, -b),
            P2::new(a, -b),
            P2::new(a, b),
            P2::new(-a, b),
        ]));
        Ok(())
    }

    pub fn circle(&mut self, r: f64) -> Result<(), String> {
        if !(r > 0.0) {
            return Err("circle radius must be positive".into());
        }
        self.add_loop(Loop::Circle {
            center: P2::zeros(),
            r,
        });
        Ok(())
    }

    /// Regular polygon with circumscribed diameter `d`, first vertex on +x.
    pub fn polygon(&mut self, n: usize, d: f64) -> Result<(), String> {
        if n < 3 {
            return Err("polygon needs at least 3 sides".into());
        }
        if !(d > 0.0) {
            return Err("polygon diameter must be positive".into());
        }
        let r = d / 2.0;
        let pts = (0..n)
            .map(|i| {
                let t = TAU * i as f64 / n as f64;
                P2::new(r * t.cos(), r * t.sin())
            })
            .collect();
        self.add_loop(Loop::Poly(pts));
        Ok(())
    }

    /// Centered `nx × ny` lattice of locations.
    pub fn rect_array(&mut self, xs: f64, ys: f64, nx: usize, ny: usize) -> Result<(), String> {
        if nx == 0 || ny == 0 {
            return Err("array counts must be at least 1".into());
        }
        let mut locs = Vec::with_capacity(self.locations.len() * nx * ny);
        for base in &self.locations {
            for i in 0..nx {
                for j in 0..ny {
                    let off = P2::new(
                        (i as f64 - (nx - 1) as f64 / 2.0) * xs,
                        (j as f64 - (ny - 1) as f64 / 2.0) * ys,
                    );
                    locs.push(base.then(&Place::translation(off)));
                }
            }
        }
        self.set_locations(locs);
        Ok(())
    }

    /// `count` locations on a circle of `radius`, rotated to face outward.
    pub fn polar_array(
        &mut self,
        radius: f64,
        start: f64,
        angle: f64,
        count: usize,
    ) -> Result<(), String> {
        if count == 0 {
            return Err("array counts must be at least 1".into());
        }
        let step = if (angle.abs() - 360.0).abs() < 1e-9 || count == 1 {
            angle / count as f64
        } else {
            angle / (count - 1) as f64
        };
        let mut locs = Vec::with_capacity(self.locations.len() * count);
        for base in &self.locations {
            for i in 0..count {
                let rot = Place::rotation_deg(start + step * i as f64);
                let pl = rot.then(&Place::translation(P2::new(radius, 0.0)));
                locs.push(base.then(&pl));
            }
        }
        self.set_locations(locs);
        Ok(())
    }
}

pub fn polygon_area(pts: &[P2]) -> f64 {
    let n = pts.len();
    (0..n).map(|i| pts[i].perp(&pts[(i + 1) % n])).sum::<f64>() / 2.0
}

/// Points of the circular arc through `a`, `m`, `b` (endpoints included).
/// Collinear input degenerates to the segment `a`-`b`.
pub fn arc_points(a: P2, m: P2, b: P2) -> Vec<P2> {
    let d = 2.0 * (a.x * (m.y - b.y) + m.x * (b.y - a.y) + b.x * (a.y - m.y));
    let scale = (m - a).norm().max((b - a).norm()).max(1e-300);
    if d.abs() <= 1e-12 * scale * scale {
        return vec![a, b];
    }
    let sq = |p: P2| p.norm_squared();
    let c = P2::new(
        (sq(a) * (m.y - b.y) + sq(m) * (b.y - a.y) + sq(b) * (a.y - m.y)) / d,
        (sq(a) * (b.x - m.x) + sq(m) * (a.x - b.x) + sq(b) * (m.x - a.x)) / d,
    );
    let ang = |p: P2| (p.y - c.y).atan2(p.x - c.x);
    let (ta, tm, tb) = (ang(a), ang(m), ang(b));
    let norm = |t: f64| t.rem_euclid(TAU);
    // counter-clockwise sweep from a to b passes through m iff m comes first
    let ccw = norm(tm - ta) <= norm(tb - ta);
    let sweep = if ccw { norm(tb - ta) } else { -norm(ta - tb) };
    let segs = ((sweep.abs() / (PI / 64.0)).ceil() as usize).clamp(4, 256);
    let r = (a - c).norm();
    let mut out: Vec<P2> = (0..=segs)
        .map(|i| {
            let t = ta + sweep * i as f64 / segs as f64;
            c + P2::new(r * t.cos(), r * t.sin())
        })
        .collect();
    out[0] = a;
    out[segs] = b;
    out
}
