use rayon::prelude::*;

use super::field::ScalarField;
use super::operator::LinearOperator;
use super::reduce::{axpy, dot, sum_indexed, xpby, CHUNK};
use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOptions<T> {
    /// Relative residual target `‖b - Ax‖ / ‖b‖`.
    pub tol: T,
    pub max_iter: usize,
    pub jacobi: bool,
}

impl<T: Real> CgOptions<T> {
    pub fn new(tol: T, max_iter: usize) -> Self {
        CgOptions {
            tol,
            max_iter,
            jacobi: false,
        }
    }
}

impl<T: Real> Default for CgOptions<T> {
    fn default() -> Self {
        CgOptions {
            tol: T::lit(1e-8),
            max_iter: 20_000,
            jacobi: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CgOutcome<T> {
    pub solution: Vec<T>,
    pub iterations: usize,
    pub relative_residual: T,
}

// recursive residuals drift; the true residual is recomputed this often
const RESIDUAL_REFRESH: usize = 200;

/// Conjugate gradients for a symmetric positive definite operator, started
/// from zero. Returns `x` with `‖A x - b‖ <= tol ‖b‖` (true residual).
pub fn cg<T: Real, A: LinearOperator<T> + ?Sized>(
    op: &A,
    rhs: &[T],
    opts: &CgOptions<T>,
) -> Result<CgOutcome<T>> {
    let n = op.len();
    if rhs.len() != n {
        return Err(Error::Shape(format!(
            "rhs has {} entries, operator acts on {n}",
            rhs.len()
        )));
    }
    if !(opts.tol > T::zero()) {
        return Err(Error::domain("cg tolerance must be positive"));
    }
    let b_norm = dot(rhs, rhs).sqrt();
    let mut x = vec![T::zero(); n];
    if b_norm == T::zero() {
        return Ok(CgOutcome {
            solution: x,
            iterations: 0,
            relative_residual: T::zero(),
        });
    }
    let inv_diag: Option<Vec<T>> = opts
        .jacobi
        .then(|| op.diagonal().into_iter().map(|d| T::one() / d).collect());
    let precondition = |r: &[T], z: &mut Vec<T>| {
        if let Some(m) = &inv_diag {
            z.par_chunks_mut(CHUNK)
                .zip(r.par_chunks(CHUNK))
                .zip(m.par_chunks(CHUNK))
                .for_each(|((zc, rc), mc)| {
                    for ((zi, &ri), &mi) in zc.iter_mut().zip(rc).zip(mc) {
                        *zi = ri * mi;
                    }
                });
        } else {
            z.copy_from_slice(r);
        }
    };

    let target = opts.tol * b_norm;
    let mut r = rhs.to_vec();
    let mut z = vec![T::zero(); n];
    precondition(&r, &mut z);
    let mut p = z.clone();
    let mut ap = vec![T::zero(); n];
    let mut rz = dot(&r, &z);
    let mut r_norm = b_norm;
    let mut iterations = 0;

    loop {
        if r_norm <= target {
            // confirm with the true residual
            op.apply(&x, &mut ap);
            let true_norm = sum_indexed(n, |i| {
                let d = rhs[i] - ap[i];
                d * d
            })
            .sqrt();
            if true_norm <= target {
                return Ok(CgOutcome {
                    solution: x,
                    iterations,
                    relative_residual: true_norm / b_norm,
                });
            }
            restart(rhs, &ap, &mut r);
            precondition(&r, &mut z);
            p.copy_from_slice(&z);
            rz = dot(&r, &z);
            r_norm = true_norm;
        }
        if iterations >= opts.max_iter {
            return Err(Error::Convergence {
                iterations,
                residual: (r_norm / b_norm).to_f64_lossy(),
            });
        }
        op.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > T::zero()) {
            return Err(Error::Convergence {
                iterations,
                residual: (r_norm / b_norm).to_f64_lossy(),
            });
        }
        let alpha = rz / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        iterations += 1;
        if iterations % RESIDUAL_REFRESH == 0 {
            op.apply(&x, &mut ap);
            restart(rhs, &ap, &mut r);
        }
        r_norm = dot(&r, &r).sqrt();
        precondition(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        xpby(&z, beta, &mut p);
    }
}

fn restart<T: Real>(rhs: &[T], ax: &[T], r: &mut [T]) {
    r.par_chunks_mut(CHUNK)
        .zip(rhs.par_chunks(CHUNK))
        .zip(ax.par_chunks(CHUNK))
        .for_each(|((rc, bc), ac)| {
            for ((ri, &bi), &ai) in rc.iter_mut().zip(bc).zip(ac) {
                *ri = bi - ai;
            }
        });
}

/// Field-level wrapper around [`cg`].
pub fn cg_solve<T: Real, A: LinearOperator<T> + ?Sized>(
    op: &A,
    rhs: &ScalarField<T>,
    opts: &CgOptions<T>,
) -> Result<ScalarField<T>> {
    let out = cg(op, rhs.values(), opts)?;
    ScalarField::from_values(rhs.grid(), out.solution)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::field::NodeMask;
    use crate::numerics::grid::{Aabb, Grid};
    use crate::numerics::operator::{Identity, MaskedLaplacian};

    struct Lap1d {
        n: usize,
        h: f64,
    }

    impl LinearOperator<f64> for Lap1d {
        fn len(&self) -> usize {
            self.n
        }
        fn apply(&self, x: &[f64], y: &mut [f64]) {
            let c = 1.0 / (self.h * self.h);
            for i in 0..self.n {
                if i == 0 || i + 1 == self.n {
                    y[i] = 0.0;
                    continue;
                }
                let l = if i > 1 { x[i - 1] } else { 0.0 };
                let r = if i + 2 < self.n { x[i + 1] } else { 0.0 };
                y[i] = c * (2.0 * x[i] - l - r);
            }
        }
    }

    /// Thomas algorithm on the interior unknowns.
    fn tridiagonal(n: usize, h: f64, rhs: &[f64]) -> Vec<f64> {
        let m = n - 2;
        let c = 1.0 / (h * h);
        let (a, b, cc) = (-c, 2.0 * c, -c);
        let mut cp = vec![0.0; m];
        let mut dp = vec![0.0; m];
        cp[0] = cc / b;
        dp[0] = rhs[1] / b;
        for i in 1..m {
            let den = b - a * cp[i - 1];
            cp[i] = cc / den;
            dp[i] = (rhs[i + 1] - a * dp[i - 1]) / den;
        }
        let mut x = vec![0.0; n];
        x[m] = dp[m - 1];
        for i in (0..m - 1).rev() {
            x[i + 1] = dp[i] - cp[i] * x[i + 2];
        }
        x
    }

    #[test]
    fn identity_returns_rhs() {
        let b = vec![1.0, -2.0, 3.5, 0.25];
        let out = cg(&Identity(4), &b, &CgOptions::new(1e-12, 10)).unwrap();
        assert_eq!(out.solution, b);
        assert_eq!(out.iterations, 1);
    }

    #[test]
    fn zero_rhs_needs_no_iterations() {
        let out = cg(&Identity(5), &[0.0; 5], &CgOptions::new(1e-12, 10)).unwrap();
        assert_eq!(out.iterations, 0);
        assert!(out.solution.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn one_dimensional_laplacian_matches_direct_solve() {
        let n = 9;
        let h = 1.0 / 8.0;
        let mut b = vec![1.0; n];
        b[0] = 0.0;
        b[n - 1] = 0.0;
        let op = Lap1d { n, h };
        let out = cg(&op, &b, &CgOptions::new(1e-14, 100)).unwrap();
        let direct = tridiagonal(n, h, &b);
        for i in 0..n {
            assert!((out.solution[i] - direct[i]).abs() < 1e-10, "{i}");
        }
        // exact solution x(1-x)/2 is reproduced by the 3-point stencil
        for i in 0..n {
            let x = i as f64 * h;
            assert!((direct[i] - x * (1.0 - x) / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn non_convergence_reports_residual() {
        let g = Grid::new(Aabb::cube(0.0, 1.0).unwrap(), 17).unwrap();
        let mask = NodeMask::dirichlet_box(&g);
        let op = MaskedLaplacian::new(&mask);
        let rhs: Vec<f64> = (0..g.len())
            .map(|i| if mask.is_free(i) { 1.0 } else { 0.0 })
            .collect();
        match cg(&op, &rhs, &CgOptions::new(1e-12, 3)) {
            Err(Error::Convergence {
                iterations,
                residual,
            }) => {
                assert_eq!(iterations, 3);
                assert!(residual > 1e-12);
            }
            other => panic!("expected convergence error, got {other:?}"),
        }
    }

    #[test]
    fn jacobi_agrees_with_plain() {
        let g = Grid::new(Aabb::cube(0.0, 1.0).unwrap(), 13).unwrap();
        let mask = NodeMask::dirichlet_box(&g);
        let pot: Vec<f64> = (0..g.len()).map(|i| (i % 7) as f64 * 30.0).collect();
        let op = MaskedLaplacian::new(&mask).with_potential(&pot);
        let rhs: Vec<f64> = (0..g.len())
            .map(|i| if mask.is_free(i) { 1.0 } else { 0.0 })
            .collect();
        let a = cg(&op, &rhs, &CgOptions::new(1e-11, 1000)).unwrap();
        let b = cg(
            &op,
            &rhs,
            &CgOptions {
                tol: 1e-11,
                max_iter: 1000,
                jacobi: true,
            },
        )
        .unwrap();
        for i in 0..g.len() {
            assert!((a.solution[i] - b.solution[i]).abs() < 1e-9);
        }
    }
}
