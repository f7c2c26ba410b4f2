//! Static 3-d tree for exact nearest-neighbor queries.

use crate::kernel::Vec3;

#[inline]
pub fn dist2(a: &Vec3, b: &Vec3) -> f64 {
    let (dx, dy, dz) = (a.x - b.x, a.y - b.y, a.z - b.z);
    dx * dx + dy * dy + dz * dz
}

pub struct KdTree {
    points: Vec<Vec3>,
    /// Implicit balanced tree over `points`: the median of each range is its
    /// node, split on `axis[node]`.
    axis: Vec<u8>,
}

impl KdTree {
    pub fn new(points: &[Vec3]) -> KdTree {
        let mut pts = points.to_vec();
        let mut axis = vec![0u8; pts.len()];
        build(&mut pts, &mut axis, 0);
        KdTree { points: pts, axis }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Squared distance to the nearest point. Distances are computed with
    /// [`dist2`], so the result equals a brute-force minimum bit for bit.
    pub fn nearest_dist2(&self, q: &Vec3) -> f64 {
        let mut best = f64::INFINITY;
        self.search(0, self.points.len(), q, &mut best);
        best
    }

    fn search(&self, lo: usize, hi: usize, q: &Vec3, best: &mut f64) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let p = &self.points[mid];
        let d = dist2(p, q);
        if d < *best {
            *best = d;
        }
        let a = self.axis[mid] as usize;
        let delta = q[a] - p[a];
        let (near, far) = if delta < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search(near.0, near.1, q, best);
        // a point on the far side is at least |delta| away along `a`
        if delta * delta <= *best {
            self.search(far.0, far.1, q, best);
        }
    }
}

fn build(pts: &mut [Vec3], axis: &mut [u8], depth: usize) {
    if pts.len() <= 1 {
        if let Some(a) = axis.first_mut() {
            *a = (depth % 3) as u8;
        }
        return;
    }
    // split on the widest axis of the range
    let mut lo = pts[0];
    let mut hi = pts[0];
    for p in pts.iter() {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let a = (hi - lo).imax();
    let mid = pts.len() / 2;
    pts.select_nth_unstable_by(mid, |x, y| x[a].total_cmp(&y[a]));
    axis[mid] = a as u8;
    let (left, right) = pts.split_at_mut(mid);
    let (la, ra) = axis.split_at_mut(mid);
    build(left, la, depth + 1);
    build(&mut right[1..], &mut ra[1..], depth + 1);
}
