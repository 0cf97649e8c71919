use rayon::prelude::*;

use super::field::{NodeKind, NodeMask, ScalarField};
use crate::error::Result;
use crate::real::Real;

/// A linear map acting on node vectors of a fixed length.
pub trait LinearOperator<T: Real>: Sync {
    fn len(&self) -> usize;

    fn apply(&self, x: &[T], y: &mut [T]);

    /// Diagonal entries, used by the Jacobi preconditioner.
    fn diagonal(&self) -> Vec<T> {
        vec![T::one(); self.len()]
    }

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub struct Identity(pub usize);

impl<T: Real> LinearOperator<T> for Identity {
    fn len(&self) -> usize {
        self.0
    }

    fn apply(&self, x: &[T], y: &mut [T]) {
        y.copy_from_slice(x);
    }
}

/// `shift * I + scale * (-Δ_h) + diag(potential)` acting on the free nodes
/// of a mask, with all non-free nodes held at zero.
///
/// `-Δ_h` is the 7-point second-order stencil. The output vanishes at every
/// non-free node.
pub struct MaskedLaplacian<'a, T> {
    mask: &'a NodeMask<T>,
    shift: T,
    scale: T,
    potential: Option<&'a [T]>,
}

impl<'a, T: Real> MaskedLaplacian<'a, T> {
    pub fn new(mask: &'a NodeMask<T>) -> Self {
        MaskedLaplacian {
            mask,
            shift: T::zero(),
            scale: T::one(),
            potential: None,
        }
    }

    pub fn with_shift(mut self, shift: T) -> Self {
        self.shift = shift;
        self
    }

    pub fn with_scale(mut self, scale: T) -> Self {
        self.scale = scale;
        self
    }

    pub fn with_potential(mut self, potential: &'a [T]) -> Self {
        self.potential = Some(potential);
        self
    }

    pub fn mask(&self) -> &NodeMask<T> {
        self.mask
    }
}

impl<T: Real> LinearOperator<T> for MaskedLaplacian<'_, T> {
    fn len(&self) -> usize {
        self.mask.grid().len()
    }

    fn apply(&self, x: &[T], y: &mut [T]) {
        let grid = self.mask.grid();
        let [nx, ny, _] = grid.counts();
        let h = grid.spacing();
        let w = [
            self.scale / (h[0] * h[0]),
            self.scale / (h[1] * h[1]),
            self.scale / (h[2] * h[2]),
        ];
        let center = self.shift + T::lit(2.0) * (w[0] + w[1] + w[2]);
        let kinds = self.mask.kinds();
        let sx = 1;
        let sy = nx;
        let sz = nx * ny;
        let plane = nx * ny;
        y.par_chunks_mut(plane).enumerate().for_each(|(k, yp)| {
            let base = k * plane;
            for j in 0..ny {
                for i in 0..nx {
                    let local = i + nx * j;
                    let idx = base + local;
                    if kinds[idx] != NodeKind::Free {
                        yp[local] = T::zero();
                        continue;
                    }
                    // free nodes are never on the grid boundary
                    let nb = |o: usize, up: bool| -> T {
                        let n = if up { idx + o } else { idx - o };
                        if kinds[n] == NodeKind::Free {
                            x[n]
                        } else {
                            T::zero()
                        }
                    };
                    let mut acc = center * x[idx];
                    acc -= w[0] * (nb(sx, false) + nb(sx, true));
                    acc -= w[1] * (nb(sy, false) + nb(sy, true));
                    acc -= w[2] * (nb(sz, false) + nb(sz, true));
                    if let Some(p) = self.potential {
                        acc += p[idx] * x[idx];
                    }
                    yp[local] = acc;
                }
            }
        });
    }

    fn diagonal(&self) -> Vec<T> {
        let h = self.mask.grid().spacing();
        let c = self.shift
            + T::lit(2.0)
                * self.scale
                * (T::one() / (h[0] * h[0]) + T::one() / (h[1] * h[1]) + T::one() / (h[2] * h[2]));
        (0..self.len())
            .map(|idx| {
                if self.mask.is_free(idx) {
                    c + self.potential.map_or(T::zero(), |p| p[idx])
                } else {
                    T::one()
                }
            })
            .collect()
    }
}

/// Applies the masked `-Δ_h` to a field.
pub fn apply_laplacian<T: Real>(
    field: &ScalarField<T>,
    mask: &NodeMask<T>,
) -> Result<ScalarField<T>> {
    field.grid().check_same(mask.grid())?;
    let op = MaskedLaplacian::new(mask);
    let mut out = vec![T::zero(); field.values().len()];
    op.apply(field.values(), &mut out);
    ScalarField::from_values(field.grid(), out)
}

/// Right-hand side contribution of prescribed values at non-free nodes.
///
/// For a free node, sums `value(nbr) / h_axis²` over non-free neighbours; zero
/// elsewhere. Solving `-Δ_h w = lift` on the free nodes then yields the
/// discrete harmonic extension of the prescribed values.
pub fn dirichlet_lift<T: Real>(mask: &NodeMask<T>, prescribed: &[T]) -> Vec<T> {
    let grid = mask.grid();
    let [nx, ny, _] = grid.counts();
    let h = grid.spacing();
    let w = [
        T::one() / (h[0] * h[0]),
        T::one() / (h[1] * h[1]),
        T::one() / (h[2] * h[2]),
    ];
    let strides = [1, nx, nx * ny];
    let kinds = mask.kinds();
    (0..grid.len())
        .map(|idx| {
            if kinds[idx] != NodeKind::Free {
                return T::zero();
            }
            let mut acc = T::zero();
            for a in 0..3 {
                for n in [idx - strides[a], idx + strides[a]] {
                    if kinds[n] != NodeKind::Free {
                        acc += w[a] * prescribed[n];
                    }
                }
            }
            acc
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::grid::{Aabb, Grid};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit(n: usize) -> Grid<f64> {
        Grid::new(Aabb::cube(0.0, 1.0).unwrap(), n).unwrap()
    }

    /// Interior nodes whose full stencil is free.
    fn deep_interior(g: &Grid<f64>, idx: usize) -> bool {
        let [i, j, k] = g.ijk(idx);
        let [nx, ny, nz] = g.counts();
        i >= 2 && j >= 2 && k >= 2 && i + 2 < nx && j + 2 < ny && k + 2 < nz
    }

    #[test]
    fn affine_fields_are_harmonic() {
        let g = unit(9);
        let mask = NodeMask::dirichlet_box(&g);
        let f = ScalarField::from_fn(&g, |x| 2.0 * x[0] - 3.0 * x[1] + 0.5 * x[2] + 1.0);
        let lap = apply_laplacian(&f, &mask).unwrap();
        for idx in 0..g.len() {
            if deep_interior(&g, idx) {
                assert!(lap.values()[idx].abs() < 1e-10);
            }
            if !mask.is_free(idx) {
                assert_eq!(lap.values()[idx], 0.0);
            }
        }
    }

    #[test]
    fn quadratic_gives_minus_two() {
        let g = unit(9);
        let mask = NodeMask::dirichlet_box(&g);
        let f = ScalarField::from_fn(&g, |x| x[0] * x[0] + 0.25);
        let lap = apply_laplacian(&f, &mask).unwrap();
        for idx in 0..g.len() {
            if deep_interior(&g, idx) {
                assert!(
                    (lap.values()[idx] + 2.0).abs() < 1e-9,
                    "{}",
                    lap.values()[idx]
                );
            }
        }
    }

    /// Dense matrix built entry by entry from the textbook stencil.
    fn dense_oracle(g: &Grid<f64>, mask: &NodeMask<f64>) -> Vec<Vec<f64>> {
        let n = g.len();
        let h = g.spacing();
        let mut a = vec![vec![0.0; n]; n];
        for p in 0..n {
            if !mask.is_free(p) {
                continue;
            }
            let [i, j, k] = g.ijk(p);
            for q in 0..n {
                if !mask.is_free(q) {
                    continue;
                }
                let [qi, qj, qk] = g.ijk(q);
                let d = [
                    qi as i64 - i as i64,
                    qj as i64 - j as i64,
                    qk as i64 - k as i64,
                ];
                if d == [0, 0, 0] {
                    a[p][q] = 2.0 / (h[0] * h[0]) + 2.0 / (h[1] * h[1]) + 2.0 / (h[2] * h[2]);
                } else {
                    for axis in 0..3 {
                        let mut e = [0i64; 3];
                        e[axis] = 1;
                        if d == e || d == [-e[0], -e[1], -e[2]] {
                            a[p][q] = -1.0 / (h[axis] * h[axis]);
                        }
                    }
                }
            }
        }
        a
    }

    #[test]
    fn matches_dense_oracle_on_random_field() {
        let g = Grid::with_counts(
            Aabb::new([0.0, -1.0, 0.0], [1.0, 1.0, 0.5]).unwrap(),
            [5, 5, 5],
        )
        .unwrap();
        let mut mask = NodeMask::dirichlet_box(&g);
        mask.set(g.index(2, 2, 2), NodeKind::Hole);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = ScalarField::from_fn(&g, |_| 0.0);
        let vals: Vec<f64> = (0..g.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let f = ScalarField::from_values(f.grid(), vals).unwrap();
        let lap = apply_laplacian(&f, &mask).unwrap();
        let a = dense_oracle(&g, &mask);
        for p in 0..g.len() {
            let expect: f64 = (0..g.len()).map(|q| a[p][q] * f.values()[q]).sum();
            assert!(
                (lap.values()[p] - expect).abs() < 1e-12 * (1.0 + expect.abs()),
                "node {p}"
            );
        }
    }

    #[test]
    fn laplacian_is_symmetric() {
        let g = unit(8);
        let mut mask = NodeMask::dirichlet_box(&g);
        mask.set(g.index(3, 4, 3), NodeKind::Hole);
        mask.set(g.index(4, 4, 3), NodeKind::Hole);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let u: Vec<f64> = (0..g.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let v: Vec<f64> = (0..g.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let u = ScalarField::from_values(&g, u).unwrap();
            let v = ScalarField::from_values(&g, v).unwrap();
            let au = apply_laplacian(&u, &mask).unwrap();
            let av = apply_laplacian(&v, &mask).unwrap();
            let free_dot = |a: &ScalarField<f64>, b: &ScalarField<f64>| -> f64 {
                (0..g.len())
                    .filter(|&i| mask.is_free(i))
                    .map(|i| a.values()[i] * b.values()[i])
                    .sum()
            };
            let lhs = free_dot(&au, &v);
            let rhs = free_dot(&u, &av);
            assert!(
                (lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0),
                "{lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn grid_mismatch_is_shape_error() {
        let f = ScalarField::zeros(&unit(5));
        let m = NodeMask::dirichlet_box(&unit(7));
        assert!(matches!(
            apply_laplacian(&f, &m),
            Err(crate::Error::Shape(_))
        ));
    }
}
