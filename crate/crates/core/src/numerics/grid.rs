use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::{Real, Vec3};

/// Axis-aligned box `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Aabb<T> {
    pub min: Vec3<T>,
    pub max: Vec3<T>,
}

impl<T: Real> Aabb<T> {
    pub fn new(min: Vec3<T>, max: Vec3<T>) -> Result<Self> {
        let b = Aabb { min, max };
        b.validate()?;
        Ok(b)
    }

    pub fn cube(min: T, max: T) -> Result<Self> {
        Self::new([min; 3], [max; 3])
    }

    pub fn validate(&self) -> Result<()> {
        for a in 0..3 {
            if !(self.min[a].is_finite() && self.max[a].is_finite() && self.max[a] > self.min[a]) {
                return Err(Error::domain(format!(
                    "degenerate box on axis {a}: [{}, {}]",
                    self.min[a], self.max[a]
                )));
            }
        }
        Ok(())
    }

    pub fn volume(&self) -> T {
        (0..3)
            .map(|a| self.max[a] - self.min[a])
            .fold(T::one(), |acc, w| acc * w)
    }

    pub fn side(&self, axis: usize) -> T {
        self.max[axis] - self.min[axis]
    }

    /// Half-open membership `min <= x < max`, used for point windows.
    pub fn contains_half_open(&self, x: Vec3<T>) -> bool {
        (0..3).all(|a| x[a] >= self.min[a] && x[a] < self.max[a])
    }

    pub fn contains_closed(&self, x: Vec3<T>) -> bool {
        (0..3).all(|a| x[a] >= self.min[a] && x[a] <= self.max[a])
    }

    pub fn scaled(&self, t: T) -> Self {
        Aabb {
            min: [self.min[0] * t, self.min[1] * t, self.min[2] * t],
            max: [self.max[0] * t, self.max[1] * t, self.max[2] * t],
        }
    }

    pub fn expanded(&self, margin: T) -> Self {
        Aabb {
            min: [
                self.min[0] - margin,
                self.min[1] - margin,
                self.min[2] - margin,
            ],
            max: [
                self.max[0] + margin,
                self.max[1] + margin,
                self.max[2] + margin,
            ],
        }
    }

    pub fn contains_box(&self, other: &Aabb<T>) -> bool {
        (0..3).all(|a| other.min[a] >= self.min[a] && other.max[a] <= self.max[a])
    }

    /// Euclidean distance from `x` to the box (zero inside).
    pub fn distance(&self, x: Vec3<T>) -> T {
        let mut s = T::zero();
        for a in 0..3 {
            let d = (self.min[a] - x[a]).max(x[a] - self.max[a]).max(T::zero());
            s += d * d;
        }
        s.sqrt()
    }
}

/// Uniform structured grid in three dimensions.
///
/// Node `(i, j, k)` sits at `origin + (offset + (i, j, k)) * h`. The offset
/// lets sub-blocks share the node lattice of a parent grid exactly. Linear
/// indices are x-fastest: `i + nx * (j + ny * k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    origin: Vec3<T>,
    offset: [i64; 3],
    n: [usize; 3],
    h: Vec3<T>,
}

impl<T: Real> Grid<T> {
    /// Grid over `bbox` with `n` nodes on every axis.
    pub fn new(bbox: Aabb<T>, n: usize) -> Result<Self> {
        Self::with_counts(bbox, [n; 3])
    }

    pub fn with_counts(bbox: Aabb<T>, n: [usize; 3]) -> Result<Self> {
        bbox.validate()?;
        if n.iter().any(|&m| m < 3) {
            return Err(Error::domain(format!(
                "grid needs at least 3 nodes per axis, got {n:?}"
            )));
        }
        let h = [
            bbox.side(0) / T::from_count(n[0] - 1),
            bbox.side(1) / T::from_count(n[1] - 1),
            bbox.side(2) / T::from_count(n[2] - 1),
        ];
        Ok(Grid {
            origin: bbox.min,
            offset: [0; 3],
            n,
            h,
        })
    }

    /// Sub-block of this grid's node lattice starting at lattice index
    /// `start` (relative to this grid's first node, may be negative) with
    /// `n` nodes per axis.
    pub fn block(&self, start: [i64; 3], n: [usize; 3]) -> Result<Self> {
        if n.iter().any(|&m| m < 3) {
            return Err(Error::domain(format!(
                "grid block needs at least 3 nodes per axis, got {n:?}"
            )));
        }
        Ok(Grid {
            origin: self.origin,
            offset: [
                self.offset[0] + start[0],
                self.offset[1] + start[1],
                self.offset[2] + start[2],
            ],
            n,
            h: self.h,
        })
    }

    /// Smallest block of the lattice whose node range covers `[lo, hi]`,
    /// padded by one node on each side.
    pub fn covering_block(&self, lo: Vec3<T>, hi: Vec3<T>) -> Result<Self> {
        let mut start = [0i64; 3];
        let mut n = [0usize; 3];
        for a in 0..3 {
            let s = ((lo[a] - self.origin[a]) / self.h[a])
                .floor()
                .to_i64()
                .unwrap_or(0)
                - 1;
            let e = ((hi[a] - self.origin[a]) / self.h[a])
                .ceil()
                .to_i64()
                .unwrap_or(0)
                + 1;
            start[a] = s - self.offset[a];
            n[a] = ((e - s + 1).max(3)) as usize;
        }
        self.block(start, n)
    }

    pub fn counts(&self) -> [usize; 3] {
        self.n
    }

    pub fn spacing(&self) -> Vec3<T> {
        self.h
    }

    pub fn offset(&self) -> [i64; 3] {
        self.offset
    }

    pub fn len(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> T {
        self.h[0] * self.h[1] * self.h[2]
    }

    pub fn bbox(&self) -> Aabb<T> {
        Aabb {
            min: self.node(0, 0, 0),
            max: self.node(self.n[0] - 1, self.n[1] - 1, self.n[2] - 1),
        }
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.n[0] * (j + self.n[1] * k)
    }

    #[inline]
    pub fn ijk(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.n[0];
        let r = idx / self.n[0];
        [i, r % self.n[1], r / self.n[1]]
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize, k: usize) -> Vec3<T> {
        [
            self.origin[0] + T::lit((self.offset[0] + i as i64) as f64) * self.h[0],
            self.origin[1] + T::lit((self.offset[1] + j as i64) as f64) * self.h[1],
            self.origin[2] + T::lit((self.offset[2] + k as i64) as f64) * self.h[2],
        ]
    }

    #[inline]
    pub fn node_at(&self, idx: usize) -> Vec3<T> {
        let [i, j, k] = self.ijk(idx);
        self.node(i, j, k)
    }

    #[inline]
    pub fn on_boundary(&self, i: usize, j: usize, k: usize) -> bool {
        i == 0 || j == 0 || k == 0 || i + 1 == self.n[0] || j + 1 == self.n[1] || k + 1 == self.n[2]
    }

    /// Index range of nodes along `axis` whose coordinate lies in `[lo, hi]`.
    pub fn axis_range(&self, axis: usize, lo: T, hi: T) -> std::ops::Range<usize> {
        let base = self.origin[axis] + T::lit(self.offset[axis] as f64) * self.h[axis];
        let a = ((lo - base) / self.h[axis]).ceil();
        let b = ((hi - base) / self.h[axis]).floor();
        let last = self.n[axis] as i64 - 1;
        let a = a.to_i64().unwrap_or(0).clamp(0, last + 1);
        let b = b.to_i64().unwrap_or(-1).clamp(-1, last);
        if b < a {
            0..0
        } else {
            a as usize..(b + 1) as usize
        }
    }

    /// Lattice index (relative to this grid) of the node nearest to `x`.
    pub fn nearest_lattice_index(&self, x: Vec3<T>) -> [i64; 3] {
        let mut out = [0i64; 3];
        for a in 0..3 {
            let t = (x[a] - self.origin[a]) / self.h[a];
            out[a] = t.round().to_i64().unwrap_or(0) - self.offset[a];
        }
        out
    }

    /// Maps a node of `other` (sharing this lattice) to an index of `self`.
    pub fn translate_index(&self, other: &Grid<T>, ijk: [usize; 3]) -> Option<usize> {
        let mut loc = [0usize; 3];
        for a in 0..3 {
            let g = other.offset[a] + ijk[a] as i64 - self.offset[a];
            if g < 0 || g >= self.n[a] as i64 {
                return None;
            }
            loc[a] = g as usize;
        }
        Some(self.index(loc[0], loc[1], loc[2]))
    }

    pub fn check_same(&self, other: &Grid<T>) -> Result<()> {
        if self != other {
            return Err(Error::Shape(format!(
                "grid mismatch: {:?}+{:?} vs {:?}+{:?}",
                self.n, self.offset, other.n, other.offset
            )));
        }
        Ok(())
    }
}
