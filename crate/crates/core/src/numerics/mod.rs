//! Finite-difference substrate: grids, node masks, the masked 7-point
//! Laplacian, conjugate gradients, discrete norms and field dumps.

mod cg;
mod field;
mod grid;
mod operator;
pub(crate) mod reduce;

pub use cg::{cg, cg_solve, CgOptions, CgOutcome};
pub use field::{
    extend_restrict, read_field, write_field, FieldHeader, GridHeader, NodeKind, NodeMask,
    ScalarField, Transfer, FIELD_DTYPE, FIELD_ORDER,
};
pub use grid::{Aabb, Grid};
pub use operator::{apply_laplacian, dirichlet_lift, Identity, LinearOperator, MaskedLaplacian};

use crate::real::Real;
use reduce::sum_indexed;

/// Discrete `L²` norm and `H¹` seminorm of a field.
///
/// `l2² = |cell| Σ_nodes v²` and `h1² = Σ_axes (|cell| / h_a²) Σ_{edges along a} (v_i - v_j)²`.
pub fn norms<T: Real>(field: &ScalarField<T>) -> (T, T) {
    (l2_norm(field), h1_seminorm(field))
}

pub fn l2_norm<T: Real>(field: &ScalarField<T>) -> T {
    let v = field.values();
    (field.grid().cell_volume() * sum_indexed(v.len(), |i| v[i] * v[i])).sqrt()
}

pub fn h1_seminorm<T: Real>(field: &ScalarField<T>) -> T {
    h1_seminorm_sq(field).sqrt()
}

pub(crate) fn h1_seminorm_sq<T: Real>(field: &ScalarField<T>) -> T {
    let grid = field.grid();
    let [nx, ny, nz] = grid.counts();
    let h = grid.spacing();
    let cell = grid.cell_volume();
    let v = field.values();
    let w = [
        cell / (h[0] * h[0]),
        cell / (h[1] * h[1]),
        cell / (h[2] * h[2]),
    ];
    sum_indexed(v.len(), |idx| {
        let i = idx % nx;
        let j = (idx / nx) % ny;
        let k = idx / (nx * ny);
        let mut s = T::zero();
        if i + 1 < nx {
            let d = v[idx + 1] - v[idx];
            s += w[0] * d * d;
        }
        if j + 1 < ny {
            let d = v[idx + nx] - v[idx];
            s += w[1] * d * d;
        }
        if k + 1 < nz {
            let d = v[idx + nx * ny] - v[idx];
            s += w[2] * d * d;
        }
        s
    })
}

/// `|cell| Σ a_i b_i`, the discrete `L²` inner product.
pub fn l2_inner<T: Real>(a: &ScalarField<T>, b: &ScalarField<T>) -> T {
    let (x, y) = (a.values(), b.values());
    a.grid().cell_volume() * sum_indexed(x.len(), |i| x[i] * y[i])
}
