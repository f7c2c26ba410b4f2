//! Connectivity and morphology on occupancy grids.

use super::grid::BitGrid;

/// Number of 6-connected components of the set voxels.
pub fn connected_components(b: &BitGrid) -> usize {
    let [nx, ny, nz] = b.dims;
    let mut seen = BitGrid::new(b.dims);
    let mut stack = Vec::new();
    let mut count = 0;
    for start in b.ones() {
        if seen.get_idx(start) {
            continue;
        }
        count += 1;
        seen.set_idx(start, true);
        stack.push(start);
        while let Some(idx) = stack.pop() {
            let i = idx % nx;
            let j = (idx / nx) % ny;
            let k = idx / (nx * ny);
            let mut visit = |n: usize| {
                if b.get_idx(n) && !seen.get_idx(n) {
                    seen.set_idx(n, true);
                    stack.push(n);
                }
            };
            if i > 0 {
                visit(idx - 1);
            }
            if i + 1 < nx {
                visit(idx + 1);
            }
            if j > 0 {
                visit(idx - nx);
            }
            if j + 1 < ny {
                visit(idx + nx);
            }
            if k > 0 {
                visit(idx - nx * ny);
            }
            if k + 1 < nz {
                visit(idx + nx * ny);
            }
        }
    }
    count
}

/// Erosion by the cube of half-width `r` voxels; outside the grid counts as
/// empty.
pub fn erode(b: &BitGrid, r: usize) -> BitGrid {
    let mut cur = b.clone();
    for axis in 0..3 {
        cur = erode_axis(&cur, axis, r);
    }
    cur
}

fn erode_axis(b: &BitGrid, axis: usize, r: usize) -> BitGrid {
    let dims = b.dims;
    let n = dims[axis];
    let (o1, o2) = match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let mut out = BitGrid::new(dims);
    let mut line = vec![false; n];
    // length of the run of set voxels ending at each position
    let mut run = vec![0usize; n];
    for p in 0..dims[o2] {
        for q in 0..dims[o1] {
            let at = |t: usize| {
                let mut c = [0usize; 3];
                c[axis] = t;
                c[o1] = q;
                c[o2] = p;
                c
            };
            let mut any = false;
            for (t, v) in line.iter_mut().enumerate() {
                let [i, j, k] = at(t);
                *v = b.get(i, j, k);
                any |= *v;
            }
            if !any {
                continue;
            }
            let mut len = 0;
            for t in 0..n {
                len = if line[t] { len + 1 } else { 0 };
                run[t] = len;
            }
            for t in r..n.saturating_sub(r) {
                if run[t + r] >= 2 * r + 1 {
                    let [i, j, k] = at(t);
                    out.set(i, j, k, true);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn component_examples() {
        let mut b = BitGrid::new([4, 4, 4]);
        assert_eq!(connected_components(&b), 0);
        b.set(0, 0, 0, true);
        assert_eq!(connected_components(&b), 1);
        b.set(1, 1, 1, true);
        assert_eq!(connected_components(&b), 2);
        b.set(1, 0, 0, true);
        b.set(1, 1, 0, true);
        assert_eq!(connected_components(&b), 1);
    }

    #[test]
    fn erosion_of_a_cube() {
        let mut b = BitGrid::new([9, 9, 9]);
        for k in 1..8 {
            for j in 1..8 {
                for i in 1..8 {
                    b.set(i, j, k, true);
                }
            }
        }
        let e = erode(&b, 2);
        assert_eq!(e.count(), 27);
        assert!(e.get(4, 4, 4) && e.get(3, 3, 3) && !e.get(2, 4, 4));
        // touching the boundary erodes
        let full = {
            let mut f = BitGrid::new([3, 3, 3]);
            f.fill_range(0, 27);
            f
        };
        assert_eq!(erode(&full, 1).count(), 1);
    }
}
