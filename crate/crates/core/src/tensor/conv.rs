//! Zero-padded 2-D cross-correlation over `[C, H, W]` tensors and its
//! adjoint. Output extents use floor semantics,
//! `H' = floor((H + 2 pad - kh) / stride) + 1`.

use super::{gemm_acc, MatRef, Real, Tensor};
use crate::error::{invalid, shape_err, Result};

pub fn conv_output_extent(n: usize, k: usize, stride: usize, pad: usize) -> Result<usize> {
    if stride == 0 {
        return invalid("stride must be positive");
    }
    if n + 2 * pad < k {
        return shape_err(format!(
            "extent {n} with pad {pad} is smaller than kernel {k}"
        ));
    }
    Ok((n + 2 * pad - k) / stride + 1)
}

/// Output indices `[lo, hi)` whose input index `o*stride + tap - pad`
/// lands inside `0..n_in`.
#[inline]
fn tap_range(n_out: usize, n_in: usize, stride: usize, pad: usize, tap: usize) -> (usize, usize) {
    let off = tap as isize - pad as isize;
    let s = stride as isize;
    let lo = if off >= 0 { 0 } else { ((-off) + s - 1) / s };
    let last = n_in as isize - 1 - off;
    let hi = if last < 0 { 0 } else { (last / s + 1).min(n_out as isize) };
    (lo as usize, hi.max(lo) as usize)
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub cin: usize,
    pub cout: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub ho: usize,
    pub wo: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    /// Geometry of `conv2d(x, k)`; `x: [Cin, H, W]`, `k: [Cout, Cin, kh, kw]`.
    pub fn forward(xs: &[usize], ks: &[usize], stride: usize, pad: usize) -> Result<Self> {
        if xs.len() != 3 || ks.len() != 4 {
            return shape_err(format!("conv2d expects [C,H,W] and [Co,Ci,kh,kw], got {xs:?} and {ks:?}"));
        }
        if ks[1] != xs[0] {
            return shape_err(format!("conv2d channel mismatch: input {xs:?}, kernel {ks:?}"));
        }
        if !(1..=2).contains(&stride) {
            return invalid(format!("stride {stride} not in {{1, 2}}"));
        }
        let ho = conv_output_extent(xs[1], ks[2], stride, pad)?;
        let wo = conv_output_extent(xs[2], ks[3], stride, pad)?;
        Ok(Self {
            cin: xs[0],
            cout: ks[0],
            h: xs[1],
            w: xs[2],
            kh: ks[2],
            kw: ks[3],
            ho,
            wo,
            stride,
            pad,
        })
    }

    /// Geometry of the forward convolution whose adjoint maps
    /// `y: [Cout, Ho, Wo]` back to `[Cin, H, W]`.
    pub fn transpose(ys: &[usize], ks: &[usize], stride: usize, pad: usize, out_hw: (usize, usize)) -> Result<Self> {
        if ys.len() != 3 || ks.len() != 4 {
            return shape_err(format!("conv2d_transpose expects [C,H,W] and [Co,Ci,kh,kw], got {ys:?} and {ks:?}"));
        }
        if ys[0] != ks[0] {
            return shape_err(format!("conv2d_transpose channel mismatch: input {ys:?}, kernel {ks:?}"));
        }
        let g = Self::forward(&[ks[1], out_hw.0, out_hw.1], ks, stride, pad)?;
        if g.ho != ys[1] || g.wo != ys[2] {
            return shape_err(format!(
                "conv2d_transpose input {:?} does not match forward output {}x{} of a {}x{} field",
                ys, g.ho, g.wo, out_hw.0, out_hw.1
            ));
        }
        Ok(g)
    }
}

impl ConvGeom {
    fn taps(&self) -> usize {
        self.cin * self.kh * self.kw
    }
}

/// One in-bounds row segment of the im2col matrix: column-matrix row `r`
/// (input channel `ci`), output row `oy` reading input row `iy`, output
/// columns `ox0..ox0 + len` reading input columns `ix0, ix0 + stride, ..`.
struct Segment {
    r: usize,
    ci: usize,
    oy: usize,
    iy: usize,
    ox0: usize,
    len: usize,
    ix0: usize,
}

#[inline]
fn for_each_tap(g: &ConvGeom, mut f: impl FnMut(Segment)) {
    let (s, p) = (g.stride, g.pad);
    for ci in 0..g.cin {
        for ky in 0..g.kh {
            let (oy0, oy1) = tap_range(g.ho, g.h, s, p, ky);
            for kx in 0..g.kw {
                let (ox0, ox1) = tap_range(g.wo, g.w, s, p, kx);
                if ox1 == ox0 {
                    continue;
                }
                let r = (ci * g.kh + ky) * g.kw + kx;
                let ix0 = ox0 * s + kx - p;
                for oy in oy0..oy1 {
                    let iy = oy * s + ky - p;
                    f(Segment { r, ci, oy, iy, ox0, len: ox1 - ox0, ix0 });
                }
            }
        }
    }
}

/// Unfolds `x: [Cin, H, W]` into `[Cin kh kw, Ho Wo]`.
fn im2col<T: Real>(g: &ConvGeom, x: &[T]) -> Vec<T> {
    let (hw, ohw) = (g.h * g.w, g.ho * g.wo);
    let mut col = vec![T::zero(); g.taps() * ohw];
    let s = g.stride;
    for_each_tap(g, |Segment { r, ci, oy, iy, ox0, len, ix0 }| {
        let src = &x[ci * hw + iy * g.w..ci * hw + (iy + 1) * g.w];
        let dst = &mut col[r * ohw + oy * g.wo + ox0..r * ohw + oy * g.wo + ox0 + len];
        if s == 1 {
            dst.copy_from_slice(&src[ix0..ix0 + len]);
        } else {
            for (j, d) in dst.iter_mut().enumerate() {
                *d = src[ix0 + j * s];
            }
        }
    });
    col
}

/// Scatter-adds an im2col matrix back onto `dx: [Cin, H, W]`.
fn col2im<T: Real>(g: &ConvGeom, col: &[T], dx: &mut [T]) {
    let (hw, ohw) = (g.h * g.w, g.ho * g.wo);
    let s = g.stride;
    for_each_tap(g, |Segment { r, ci, oy, iy, ox0, len, ix0 }| {
        let src = &col[r * ohw + oy * g.wo + ox0..r * ohw + oy * g.wo + ox0 + len];
        let dst = &mut dx[ci * hw + iy * g.w..ci * hw + (iy + 1) * g.w];
        if s == 1 {
            for (d, &v) in dst[ix0..ix0 + len].iter_mut().zip(src) {
                *d += v;
            }
        } else {
            for (j, &v) in src.iter().enumerate() {
                dst[ix0 + j * s] += v;
            }
        }
    });
}

/// `y += conv(x, k)`.
pub(crate) fn conv_fwd<T: Real>(g: &ConvGeom, x: &[T], k: &[T], y: &mut [T]) {
    let col = im2col(g, x);
    let ohw = g.ho * g.wo;
    gemm_acc(MatRef::new(k, g.cout, g.taps()), MatRef::new(&col, g.taps(), ohw), y);
}

/// `dx += conv^T(dy, k)`: the adjoint of [`conv_fwd`] in its input.
pub(crate) fn conv_adjoint<T: Real>(g: &ConvGeom, dy: &[T], k: &[T], dx: &mut [T]) {
    let ohw = g.ho * g.wo;
    let mut col = vec![T::zero(); g.taps() * ohw];
    gemm_acc(MatRef::t(k, g.cout, g.taps()), MatRef::new(dy, g.cout, ohw), &mut col);
    col2im(g, &col, dx);
}

/// `dk += d<dy, conv(x, k)>/dk`.
pub(crate) fn conv_kernel_grad<T: Real>(g: &ConvGeom, x: &[T], dy: &[T], dk: &mut [T]) {
    let col = im2col(g, x);
    let ohw = g.ho * g.wo;
    gemm_acc(MatRef::new(dy, g.cout, ohw), MatRef::t(&col, g.taps(), ohw), dk);
}

/// Dot product with eight independent partial sums so the reduction
/// vectorizes without reassociation.
#[inline]
pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        for l in 0..8 {
            acc[l] += a[c * 8 + l] * b[c * 8 + l];
        }
    }
    let mut tail = T::zero();
    for i in chunks * 8..a.len() {
        tail += a[i] * b[i];
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

/// Cross-correlation of `x: [Cin, H, W]` with `k: [Cout, Cin, kh, kw]`.
pub fn conv2d<T: Real>(x: &Tensor<T>, k: &Tensor<T>, stride: usize, pad: usize) -> Result<Tensor<T>> {
    let g = ConvGeom::forward(x.shape(), k.shape(), stride, pad)?;
    let mut y = vec![T::zero(); g.cout * g.ho * g.wo];
    conv_fwd(&g, x.data(), k.data(), &mut y);
    Tensor::new(&[g.cout, g.ho, g.wo], y)
}

/// Adjoint of [`conv2d`] with the same kernel, stride and padding, mapping
/// `[Cout, H', W']` back onto an `out_hw` field with `Cin` channels.
pub fn conv2d_transpose<T: Real>(
    y: &Tensor<T>,
    k: &Tensor<T>,
    stride: usize,
    pad: usize,
    out_hw: (usize, usize),
) -> Result<Tensor<T>> {
    let g = ConvGeom::transpose(y.shape(), k.shape(), stride, pad, out_hw)?;
    let mut x = vec![T::zero(); g.cin * g.h * g.w];
    conv_adjoint(&g, y.data(), k.data(), &mut x);
    Tensor::new(&[g.cin, g.h, g.w], x)
}
