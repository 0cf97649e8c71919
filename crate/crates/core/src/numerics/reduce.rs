//! Reductions with a fixed summation tree.
//!
//! Work is split into chunks of a fixed length, each chunk is summed
//! serially, and the chunk sums are added in chunk order. The result does not
//! depend on how many worker threads rayon uses.

use rayon::prelude::*;

use crate::real::Real;

pub(crate) const CHUNK: usize = 1 << 14;

/// Sum of `term(i)` over `0..n` with a fixed summation order.
pub(crate) fn sum_indexed<T: Real>(n: usize, term: impl Fn(usize) -> T + Sync) -> T {
    let chunks = n.div_ceil(CHUNK);
    let partial: Vec<T> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(n);
            let mut s = T::zero();
            for i in lo..hi {
                s += term(i);
            }
            s
        })
        .collect();
    partial.into_iter().fold(T::zero(), |a, b| a + b)
}

pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    sum_indexed(a.len(), |i| a[i] * b[i])
}

/// `y += alpha * x`
pub(crate) fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    y.par_chunks_mut(CHUNK)
        .zip(x.par_chunks(CHUNK))
        .for_each(|(yc, xc)| {
            for (yi, &xi) in yc.iter_mut().zip(xc) {
                *yi += alpha * xi;
            }
        });
}

/// `p = z + beta * p`
pub(crate) fn xpby<T: Real>(z: &[T], beta: T, p: &mut [T]) {
    p.par_chunks_mut(CHUNK)
        .zip(z.par_chunks(CHUNK))
        .for_each(|(pc, zc)| {
            for (pi, &zi) in pc.iter_mut().zip(zc) {
                *pi = zi + beta * *pi;
            }
        });
}
