//! Orthonormal type-II DCT and its inverse (type III), applied separably
//! over the last two axes by dense matrix products.

use std::f64::consts::PI;

use super::{Real, Tensor};
use crate::error::{shape_err, Result};

/// `C[k][i] = c_k cos(pi k (i + 1/2) / n)` with `c_0 = sqrt(1/n)` and
/// `c_k = sqrt(2/n)` otherwise. Rows are orthonormal.
pub fn dct_matrix<T: Real>(n: usize) -> Vec<T> {
    let mut m = Vec::with_capacity(n * n);
    for k in 0..n {
        let c = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
        for i in 0..n {
            m.push(T::of(c * (PI * k as f64 * (i as f64 + 0.5) / n as f64).cos()));
        }
    }
    m
}

/// `out = A * x * B^T` for one `h x w` field, with `A: [h][h]`,
/// `B: [w][w]`, optionally transposing each matrix first.
fn sandwich<T: Real>(a: &[T], b: &[T], x: &[T], h: usize, w: usize, transpose: bool) -> Vec<T> {
    // tmp = x * B^T (or x * B)
    let mut tmp = vec![T::zero(); h * w];
    for r in 0..h {
        for k in 0..w {
            let mut acc = T::zero();
            for i in 0..w {
                let bv = if transpose { b[i * w + k] } else { b[k * w + i] };
                acc += x[r * w + i] * bv;
            }
            tmp[r * w + k] = acc;
        }
    }
    let mut out = vec![T::zero(); h * w];
    for k in 0..h {
        for r in 0..h {
            let av = if transpose { a[r * h + k] } else { a[k * h + r] };
            if av == T::zero() {
                continue;
            }
            let (src, dst) = (&tmp[r * w..(r + 1) * w], &mut out[k * w..(k + 1) * w]);
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += av * s;
            }
        }
    }
    out
}

fn apply<T: Real>(x: &Tensor<T>, inverse: bool) -> Result<Tensor<T>> {
    if x.ndim() < 2 {
        return shape_err(format!("dct2 needs at least 2 axes, got {:?}", x.shape()));
    }
    let (h, w) = (x.shape()[x.ndim() - 2], x.shape()[x.ndim() - 1]);
    let (a, b) = (dct_matrix::<T>(h), dct_matrix::<T>(w));
    let mut out = Vec::with_capacity(x.len());
    for field in x.data().chunks(h * w) {
        out.extend(sandwich(&a, &b, field, h, w, inverse));
    }
    Tensor::new(x.shape(), out)
}

/// Orthonormal 2-D DCT-II over the last two axes.
pub fn dct2<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    apply(x, false)
}

/// Orthonormal 2-D DCT-III, the inverse of [`dct2`].
pub fn idct2<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    apply(x, true)
}
