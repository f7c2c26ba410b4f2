use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use super::{Aabb, Vec3};

/// Regular axis-aligned sampling lattice. Voxel `(i, j, k)` has its center at
/// `origin + (index + 0.5) * spacing`; `origin` is the grid's min corner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub origin: Vec3,
    pub spacing: f64,
    pub dims: [usize; 3],
}

impl Grid {
    /// Grid over `domain` whose longest side holds `resolution` voxels.
    pub fn over(domain: &Aabb, resolution: usize) -> Grid {
        let ext = domain.extent();
        let longest = ext.max();
        let spacing = longest / resolution as f64;
        let dims = [0, 1, 2].map(|a| ((ext[a] / spacing).round() as usize).max(1));
        Grid {
            origin: domain.min,
            spacing,
            dims,
        }
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.dims[1] + j) * self.dims[0] + i
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.dims[0];
        let j = (idx / self.dims[0]) % self.dims[1];
        let k = idx / (self.dims[0] * self.dims[1]);
        [i, j, k]
    }

    #[inline]
    pub fn center_coord(&self, axis: usize, index: usize) -> f64 {
        self.origin[axis] + (index as f64 + 0.5) * self.spacing
    }

    #[inline]
    pub fn center(&self, i: usize, j: usize, k: usize) -> Vec3 {
        Vec3::new(
            self.center_coord(0, i),
            self.center_coord(1, j),
            self.center_coord(2, k),
        )
    }

    pub fn bounds(&self) -> Aabb {
        let max = self.origin
            + Vec3::new(
                self.dims[0] as f64 * self.spacing,
                self.dims[1] as f64 * self.spacing,
                self.dims[2] as f64 * self.spacing,
            );
        Aabb::new(self.origin, max)
    }

    /// Indices whose voxel centers fall inside `b` (closed), per axis.
    pub fn index_range(&self, b: &Aabb) -> Option<[RangeInclusive<usize>; 3]> {
        let mut out: [RangeInclusive<usize>; 3] = [0..=0, 0..=0, 0..=0];
        for a in 0..3 {
            let tol = 1e-9 * (1.0 + b.min[a].abs().max(b.max[a].abs()));
            let lo = ((b.min[a] - tol - self.origin[a]) / self.spacing - 0.5).ceil();
            let hi = ((b.max[a] + tol - self.origin[a]) / self.spacing - 0.5).floor();
            let n = self.dims[a] as f64;
            let lo = lo.max(0.0);
            let hi = hi.min(n - 1.0);
            if !(lo <= hi) {
                return None;
            }
            out[a] = lo as usize..=hi as usize;
        }
        Some(out)
    }

    pub fn same_lattice(&self, other: &Grid) -> bool {
        self.dims == other.dims
            && (self.spacing - other.spacing).abs() <= 1e-12 * self.spacing
            && (self.origin - other.origin).norm() <= 1e-9 * (1.0 + self.origin.norm())
    }
}

/// Dense occupancy bitset laid out in [`Grid::index`] order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BitGrid {
    pub dims: [usize; 3],
    words: Vec<u64>,
}

impl BitGrid {
    pub fn new(dims: [usize; 3]) -> BitGrid {
        let n = dims[0] * dims[1] * dims[2];
        BitGrid {
            dims,
            words: vec![0; n.div_ceil(64)],
        }
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.dims[1] + j) * self.dims[0] + i
    }

    #[inline]
    pub fn get_idx(&self, idx: usize) -> bool {
        (self.words[idx >> 6] >> (idx & 63)) & 1 == 1
    }

    #[inline]
    pub fn set_idx(&mut self, idx: usize, v: bool) {
        let w = &mut self.words[idx >> 6];
        let m = 1u64 << (idx & 63);
        if v {
            *w |= m;
        } else {
            *w &= !m;
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> bool {
        self.get_idx(self.index(i, j, k))
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: bool) {
        let idx = self.index(i, j, k);
        self.set_idx(idx, v)
    }

    /// Sets bits `start..end` (linear indices).
    pub fn fill_range(&mut self, start: usize, end: usize) {
        let mut idx = start;
        while idx < end {
            if idx & 63 == 0 && end - idx >= 64 {
                self.words[idx >> 6] = u64::MAX;
                idx += 64;
            } else {
                self.set_idx(idx, true);
                idx += 1;
            }
        }
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn any(&self) -> bool {
        self.words.iter().any(|&w| w != 0)
    }

    pub fn or_assign(&mut self, other: &BitGrid) {
        debug_assert_eq!(self.dims, other.dims);
        self.words
            .iter_mut()
            .zip(&other.words)
            .for_each(|(a, b)| *a |= b);
    }

    pub fn and_assign(&mut self, other: &BitGrid) {
        debug_assert_eq!(self.dims, other.dims);
        self.words
            .iter_mut()
            .zip(&other.words)
            .for_each(|(a, b)| *a &= b);
    }

    pub fn and_not_assign(&mut self, other: &BitGrid) {
        debug_assert_eq!(self.dims, other.dims);
        self.words
            .iter_mut()
            .zip(&other.words)
            .for_each(|(a, b)| *a &= !b);
    }

    pub fn intersection_count(&self, other: &BitGrid) -> usize {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }

    pub fn union_count(&self, other: &BitGrid) -> usize {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a | b).count_ones() as usize)
            .sum()
    }

    /// Linear indices of set bits, ascending.
    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        let n = self.len();
        self.words.iter().enumerate().flat_map(move |(wi, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let b = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(wi * 64 + b)
            })
            .filter(move |&i| i < n)
        })
    }
}
