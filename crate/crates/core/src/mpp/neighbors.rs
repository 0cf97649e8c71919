//! Uniform-cell spatial index for radius queries on point sets.

use crate::real::{dist3, Vec3};

pub struct NeighborIndex<'a> {
    points: &'a [Vec3<f64>],
    origin: Vec3<f64>,
    cell: f64,
    dims: [usize; 3],
    starts: Vec<usize>,
    items: Vec<usize>,
}

// keeps the cell table bounded for tiny radii on large windows
const MAX_CELLS: usize = 1 << 22;

impl<'a> NeighborIndex<'a> {
    pub fn new(points: &'a [Vec3<f64>], cell: f64) -> Self {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in points {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        if points.is_empty() {
            lo = [0.0; 3];
            hi = [0.0; 3];
        }
        let mut cell = if cell.is_finite() && cell > 0.0 {
            cell
        } else {
            1.0
        };
        let dims = loop {
            let dims = [0, 1, 2].map(|a| (((hi[a] - lo[a]) / cell).floor() as usize) + 1);
            if dims[0].saturating_mul(dims[1]).saturating_mul(dims[2]) <= MAX_CELLS {
                break dims;
            }
            cell *= 2.0;
        };
        let ncells = dims[0] * dims[1] * dims[2];
        let mut counts = vec![0usize; ncells + 1];
        let mut cell_of = Vec::with_capacity(points.len());
        for p in points {
            let c = Self::cell_index(lo, cell, dims, p);
            cell_of.push(c);
            counts[c + 1] += 1;
        }
        for c in 0..ncells {
            counts[c + 1] += counts[c];
        }
        let starts = counts.clone();
        let mut fill = counts;
        let mut items = vec![0usize; points.len()];
        for (i, &c) in cell_of.iter().enumerate() {
            items[fill[c]] = i;
            fill[c] += 1;
        }
        NeighborIndex {
            points,
            origin: lo,
            cell,
            dims,
            starts,
            items,
        }
    }

    fn cell_coord(origin: f64, cell: f64, dim: usize, x: f64) -> usize {
        let c = ((x - origin) / cell).floor();
        if c < 0.0 {
            0
        } else {
            (c as usize).min(dim - 1)
        }
    }

    fn cell_index(origin: Vec3<f64>, cell: f64, dims: [usize; 3], p: &Vec3<f64>) -> usize {
        let c = [0, 1, 2].map(|a| Self::cell_coord(origin[a], cell, dims[a], p[a]));
        c[0] + dims[0] * (c[1] + dims[1] * c[2])
    }

    /// Calls `visit(j, |x - p_j|)` for every indexed point with
    /// `|x - p_j| <= radius`, in increasing cell order.
    pub fn for_each_within(&self, x: Vec3<f64>, radius: f64, mut visit: impl FnMut(usize, f64)) {
        if self.points.is_empty() || !(radius >= 0.0) {
            return;
        }
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        for a in 0..3 {
            if x[a] + radius < self.origin[a] {
                return;
            }
            let top = self.origin[a] + self.cell * self.dims[a] as f64;
            if x[a] - radius > top {
                return;
            }
            lo[a] = Self::cell_coord(self.origin[a], self.cell, self.dims[a], x[a] - radius);
            hi[a] = Self::cell_coord(self.origin[a], self.cell, self.dims[a], x[a] + radius);
        }
        for cz in lo[2]..=hi[2] {
            for cy in lo[1]..=hi[1] {
                for cx in lo[0]..=hi[0] {
                    let c = cx + self.dims[0] * (cy + self.dims[1] * cz);
                    for &j in &self.items[self.starts[c]..self.starts[c + 1]] {
                        let d = dist3(x, self.points[j]);
                        if d <= radius {
                            visit(j, d);
                        }
                    }
                }
            }
        }
    }

    /// Distance from point `i` to the nearest indexed point at a different
    /// position, if one lies within `radius`; `+∞` otherwise.
    pub fn nearest_other(&self, i: usize, radius: f64) -> f64 {
        let x = self.points[i];
        let mut best = f64::INFINITY;
        self.for_each_within(x, radius, |j, d| {
            if j != i && self.points[j] != x && d < best {
                best = d;
            }
        });
        best
    }
}
