//! Real 2-D Fourier transforms on the half spectrum.
//!
//! Complex values are stored as a trailing axis of length 2 (re, im) so
//! the tape stays real-valued. The forward transform is unnormalized and
//! the inverse carries the `1/(HW)` factor. The inverse treats the
//! half spectrum as Hermitian: columns `0` and `W/2` count once, every
//! other column twice, and only real parts survive.
//!
//! [`truncated_dft`] / [`truncated_idft`] compute the same transforms
//! restricted to a [`ModeSet`] by direct summation, which is what the
//! spectral layer uses: with few retained modes it is cheaper than a full
//! FFT followed by truncation.

use std::f64::consts::PI;

use num_complex::Complex;
use rustfft::FftPlanner;

use super::{Real, Tensor};
use crate::error::{invalid, shape_err, Result};

/// Retained Fourier modes: row frequencies `0..m1` and `-m1..0` (so
/// `2*m1` rows) and half-spectrum columns `0..m2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModeSet {
    pub m1: usize,
    pub m2: usize,
}

impl ModeSet {
    pub fn new(m1: usize, m2: usize) -> Self {
        Self { m1, m2 }
    }

    pub fn rows(&self) -> usize {
        2 * self.m1
    }

    pub fn validate(&self, h: usize, w: usize) -> Result<()> {
        if self.m1 == 0 || self.m2 == 0 {
            return invalid("retained mode counts must be positive");
        }
        if 2 * self.m1 > h || self.m2 > w / 2 + 1 {
            return invalid(format!(
                "modes ({}, {}) exceed the half spectrum of a {h}x{w} grid",
                self.m1, self.m2
            ));
        }
        Ok(())
    }
}

/// Row indices (into an `h`-point spectrum) of the retained row modes.
pub fn row_frequencies(modes: ModeSet, h: usize) -> Vec<usize> {
    (0..modes.m1).chain(h - modes.m1..h).collect()
}

fn split_spatial(shape: &[usize], what: &str) -> Result<(usize, usize, usize)> {
    if shape.len() < 2 {
        return shape_err(format!("{what} needs at least 2 axes, got {shape:?}"));
    }
    let (h, w) = (shape[shape.len() - 2], shape[shape.len() - 1]);
    let batch = shape[..shape.len() - 2].iter().product();
    Ok((batch, h, w))
}

fn require_even(h: usize, w: usize) -> Result<()> {
    if !h.is_multiple_of(2) || !w.is_multiple_of(2) || h == 0 || w == 0 {
        return invalid(format!("spectral transforms need even extents, got {h}x{w}"));
    }
    Ok(())
}

/// Unnormalized real-to-complex 2-D DFT over the last two axes:
/// `[..., H, W] -> [..., H, W/2+1, 2]`.
pub fn rfft2<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (batch, h, w) = split_spatial(x.shape(), "rfft2")?;
    require_even(h, w)?;
    let w2 = w / 2 + 1;
    let mut planner = FftPlanner::<T>::new();
    let fw = planner.plan_fft_forward(w);
    let fh = planner.plan_fft_forward(h);
    let mut out = Vec::with_capacity(batch * h * w2 * 2);
    let mut row = vec![Complex::new(T::zero(), T::zero()); w];
    let mut half = vec![Complex::new(T::zero(), T::zero()); h * w2];
    let mut col = vec![Complex::new(T::zero(), T::zero()); h];
    for b in 0..batch {
        let xb = &x.data()[b * h * w..(b + 1) * h * w];
        for r in 0..h {
            for (c, v) in row.iter_mut().zip(&xb[r * w..(r + 1) * w]) {
                *c = Complex::new(*v, T::zero());
            }
            fw.process(&mut row);
            half[r * w2..(r + 1) * w2].copy_from_slice(&row[..w2]);
        }
        for c in 0..w2 {
            for r in 0..h {
                col[r] = half[r * w2 + c];
            }
            fh.process(&mut col);
            for r in 0..h {
                half[r * w2 + c] = col[r];
            }
        }
        for v in &half {
            out.push(v.re);
            out.push(v.im);
        }
    }
    let mut shape = x.shape()[..x.ndim() - 1].to_vec();
    shape.push(w2);
    shape.push(2);
    Tensor::new(&shape, out)
}

/// Inverse of [`rfft2`]: `[..., H, W2, 2] -> [..., H, 2(W2-1)]`.
pub fn irfft2<T: Real>(spec: &Tensor<T>) -> Result<Tensor<T>> {
    let s = spec.shape();
    if s.len() < 3 || s[s.len() - 1] != 2 || s[s.len() - 2] < 2 {
        return shape_err(format!("irfft2 expects [..., H, W/2+1, 2], got {s:?}"));
    }
    let (h, w2) = (s[s.len() - 3], s[s.len() - 2]);
    let w = 2 * (w2 - 1);
    require_even(h, w)?;
    let batch: usize = s[..s.len() - 3].iter().product();
    let mut planner = FftPlanner::<T>::new();
    let iw = planner.plan_fft_inverse(w);
    let ih = planner.plan_fft_inverse(h);
    let scale = T::one() / T::of((h * w) as f64);
    let mut out = Vec::with_capacity(batch * h * w);
    let mut half = vec![Complex::new(T::zero(), T::zero()); h * w2];
    let mut col = vec![Complex::new(T::zero(), T::zero()); h];
    let mut row = vec![Complex::new(T::zero(), T::zero()); w];
    for b in 0..batch {
        let sb = &spec.data()[b * h * w2 * 2..(b + 1) * h * w2 * 2];
        for (i, v) in half.iter_mut().enumerate() {
            *v = Complex::new(sb[2 * i], sb[2 * i + 1]);
        }
        for c in 0..w2 {
            for r in 0..h {
                col[r] = half[r * w2 + c];
            }
            ih.process(&mut col);
            for r in 0..h {
                half[r * w2 + c] = col[r];
            }
        }
        for r in 0..h {
            let hr = &half[r * w2..(r + 1) * w2];
            row[0] = Complex::new(hr[0].re, T::zero());
            row[w2 - 1] = Complex::new(hr[w2 - 1].re, T::zero());
            for c in 1..w2 - 1 {
                row[c] = hr[c];
                row[w - c] = hr[c].conj();
            }
            iw.process(&mut row);
            out.extend(row.iter().map(|v| v.re * scale));
        }
    }
    let mut shape = s[..s.len() - 2].to_vec();
    shape.push(w);
    Tensor::new(&shape, out)
}

/// Twiddle tables for the truncated transforms on an `h x w` grid.
pub(crate) struct DftPlan<T> {
    pub h: usize,
    pub w: usize,
    pub modes: ModeSet,
    /// `cos(2 pi k2 x / w)` laid out `[m2][w]`.
    cos_w: Vec<T>,
    sin_w: Vec<T>,
    /// `cos(2 pi k1(r) y / h)` laid out `[rows][h]`.
    cos_h: Vec<T>,
    sin_h: Vec<T>,
}

impl<T: Real> DftPlan<T> {
    pub fn new(h: usize, w: usize, modes: ModeSet) -> Result<Self> {
        require_even(h, w)?;
        modes.validate(h, w)?;
        let table = |n: usize, freqs: &[usize]| {
            let mut c = Vec::with_capacity(freqs.len() * n);
            let mut s = Vec::with_capacity(freqs.len() * n);
            for &k in freqs {
                for x in 0..n {
                    let a = 2.0 * PI * ((k * x) % n) as f64 / n as f64;
                    c.push(T::of(a.cos()));
                    s.push(T::of(a.sin()));
                }
            }
            (c, s)
        };
        let cols: Vec<usize> = (0..modes.m2).collect();
        let (cos_w, sin_w) = table(w, &cols);
        let (cos_h, sin_h) = table(h, &row_frequencies(modes, h));
        Ok(Self {
            h,
            w,
            modes,
            cos_w,
            sin_w,
            cos_h,
            sin_h,
        })
    }

    pub fn spectrum_len(&self) -> usize {
        self.modes.rows() * self.modes.m2 * 2
    }

    /// Hermitian column multiplicity of half-spectrum column `k2`.
    pub fn column_weight(&self, k2: usize) -> T {
        if k2 == 0 || 2 * k2 == self.w {
            T::one()
        } else {
            T::of(2.0)
        }
    }

    /// `out[r, k2] += scale * sum_{y,x} x[y,x] e^{-i theta}` for one channel.
    pub fn forward(&self, x: &[T], out: &mut [T], col_scale: impl Fn(usize) -> T) {
        let (h, w, m2, rows) = (self.h, self.w, self.modes.m2, self.modes.rows());
        // Row pass, stored transposed as [k2][y].
        let mut are = vec![T::zero(); m2 * h];
        let mut aim = vec![T::zero(); m2 * h];
        for y in 0..h {
            let xr = &x[y * w..(y + 1) * w];
            for k2 in 0..m2 {
                are[k2 * h + y] = super::conv::dot(xr, &self.cos_w[k2 * w..(k2 + 1) * w]);
                aim[k2 * h + y] = -super::conv::dot(xr, &self.sin_w[k2 * w..(k2 + 1) * w]);
            }
        }
        for r in 0..rows {
            let (c, s) = (&self.cos_h[r * h..(r + 1) * h], &self.sin_h[r * h..(r + 1) * h]);
            for k2 in 0..m2 {
                let (ar, ai) = (&are[k2 * h..(k2 + 1) * h], &aim[k2 * h..(k2 + 1) * h]);
                let re = super::conv::dot(ar, c) + super::conv::dot(ai, s);
                let im = super::conv::dot(ai, c) - super::conv::dot(ar, s);
                let sc = col_scale(k2);
                let o = 2 * (r * m2 + k2);
                out[o] += sc * re;
                out[o + 1] += sc * im;
            }
        }
    }

    /// `x[y, x] += sum_{r,k2} weight(k2) Re(X[r,k2] e^{+i theta})` for one channel.
    pub fn inverse(&self, spec: &[T], x: &mut [T], weight: impl Fn(usize) -> T) {
        let (h, w, m2, rows) = (self.h, self.w, self.modes.m2, self.modes.rows());
        let mut bre = vec![T::zero(); m2 * h];
        let mut bim = vec![T::zero(); m2 * h];
        for r in 0..rows {
            let (c, s) = (&self.cos_h[r * h..(r + 1) * h], &self.sin_h[r * h..(r + 1) * h]);
            for k2 in 0..m2 {
                let o = 2 * (r * m2 + k2);
                let (xr, xi) = (spec[o], spec[o + 1]);
                let br = &mut bre[k2 * h..(k2 + 1) * h];
                for ((b, &cv), &sv) in br.iter_mut().zip(c).zip(s) {
                    *b += xr * cv - xi * sv;
                }
                let bi = &mut bim[k2 * h..(k2 + 1) * h];
                for ((b, &cv), &sv) in bi.iter_mut().zip(c).zip(s) {
                    *b += xr * sv + xi * cv;
                }
            }
        }
        for k2 in 0..m2 {
            let wk = weight(k2);
            let (c, s) = (&self.cos_w[k2 * w..(k2 + 1) * w], &self.sin_w[k2 * w..(k2 + 1) * w]);
            for y in 0..h {
                let br = wk * bre[k2 * h + y];
                let bi = wk * bim[k2 * h + y];
                let xr = &mut x[y * w..(y + 1) * w];
                for ((o, &cv), &sv) in xr.iter_mut().zip(c).zip(s) {
                    *o += br * cv - bi * sv;
                }
            }
        }
    }
}

/// The retained modes of [`rfft2`] for `x: [C, H, W]`: `[C, 2*m1, m2, 2]`.
pub fn truncated_dft<T: Real>(x: &Tensor<T>, modes: ModeSet) -> Result<Tensor<T>> {
    if x.ndim() != 3 {
        return shape_err(format!("truncated_dft expects [C,H,W], got {:?}", x.shape()));
    }
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let plan = DftPlan::new(h, w, modes)?;
    let n = plan.spectrum_len();
    let mut out = vec![T::zero(); c * n];
    for ch in 0..c {
        plan.forward(&x.data()[ch * h * w..(ch + 1) * h * w], &mut out[ch * n..(ch + 1) * n], |_| T::one());
    }
    Tensor::new(&[c, modes.rows(), modes.m2, 2], out)
}

/// [`irfft2`] of a spectrum that is zero outside the retained modes:
/// `[C, 2*m1, m2, 2] -> [C, H, W]`.
pub fn truncated_idft<T: Real>(spec: &Tensor<T>, modes: ModeSet, hw: (usize, usize)) -> Result<Tensor<T>> {
    let s = spec.shape();
    if s.len() != 4 || s[1] != modes.rows() || s[2] != modes.m2 || s[3] != 2 {
        return shape_err(format!("truncated_idft: spectrum {s:?} does not match modes {modes:?}"));
    }
    let (h, w) = hw;
    let plan = DftPlan::new(h, w, modes)?;
    let n = plan.spectrum_len();
    let inv = T::one() / T::of((h * w) as f64);
    let mut out = vec![T::zero(); s[0] * h * w];
    for ch in 0..s[0] {
        plan.inverse(&spec.data()[ch * n..(ch + 1) * n], &mut out[ch * h * w..(ch + 1) * h * w], |k2| {
            plan.column_weight(k2) * inv
        });
    }
    Tensor::new(&[s[0], h, w], out)
}

pub(crate) fn mode_mix_check(xs: &[usize], ws: &[usize]) -> Result<(usize, usize, usize)> {
    if xs.len() != 4 || xs[3] != 2 || ws.len() != 4 || ws[0] != xs[1] || ws[1] != xs[2] || ws[2] != xs[0] {
        return shape_err(format!(
            "mode_mix expects x [Cin,R,M2,2] and weights [R,M2,Cin,Cout], got {xs:?} and {ws:?}"
        ));
    }
    Ok((xs[0], ws[3], xs[1] * xs[2]))
}

/// `y[o, m] = sum_i x[i, m] * (wre + i wim)[m, i, o]`.
pub(crate) fn mode_mix_fwd<T: Real>(cin: usize, cout: usize, nm: usize, x: &[T], wre: &[T], wim: &[T], y: &mut [T]) {
    let mut acc_re = vec![T::zero(); cout];
    let mut acc_im = vec![T::zero(); cout];
    for m in 0..nm {
        acc_re.iter_mut().for_each(|v| *v = T::zero());
        acc_im.iter_mut().for_each(|v| *v = T::zero());
        for i in 0..cin {
            let (xr, xi) = (x[2 * (i * nm + m)], x[2 * (i * nm + m) + 1]);
            let base = (m * cin + i) * cout;
            let (wr, wi) = (&wre[base..base + cout], &wim[base..base + cout]);
            for o in 0..cout {
                acc_re[o] += xr * wr[o] - xi * wi[o];
                acc_im[o] += xr * wi[o] + xi * wr[o];
            }
        }
        for o in 0..cout {
            y[2 * (o * nm + m)] += acc_re[o];
            y[2 * (o * nm + m) + 1] += acc_im[o];
        }
    }
}

/// Vector-Jacobian product of [`mode_mix_fwd`]: `dx += dy conj(w)`,
/// `dw += conj(x) dy`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn mode_mix_bwd<T: Real>(
    cin: usize,
    cout: usize,
    nm: usize,
    x: &[T],
    wre: &[T],
    wim: &[T],
    dy: &[T],
    dx: Option<&mut [T]>,
    dw: Option<(&mut [T], &mut [T])>,
) {
    let mut gre = vec![T::zero(); cout];
    let mut gim = vec![T::zero(); cout];
    let mut dx = dx;
    let mut dw = dw;
    for m in 0..nm {
        for o in 0..cout {
            gre[o] = dy[2 * (o * nm + m)];
            gim[o] = dy[2 * (o * nm + m) + 1];
        }
        for i in 0..cin {
            let base = (m * cin + i) * cout;
            let (wr, wi) = (&wre[base..base + cout], &wim[base..base + cout]);
            if let Some(dx) = dx.as_deref_mut() {
                let mut sr = T::zero();
                let mut si = T::zero();
                for o in 0..cout {
                    sr += gre[o] * wr[o] + gim[o] * wi[o];
                    si += gim[o] * wr[o] - gre[o] * wi[o];
                }
                dx[2 * (i * nm + m)] += sr;
                dx[2 * (i * nm + m) + 1] += si;
            }
            if let Some((dwr, dwi)) = dw.as_mut() {
                let (xr, xi) = (x[2 * (i * nm + m)], x[2 * (i * nm + m) + 1]);
                let (dwr, dwi) = (&mut dwr[base..base + cout], &mut dwi[base..base + cout]);
                for o in 0..cout {
                    dwr[o] += gre[o] * xr + gim[o] * xi;
                    dwi[o] += gim[o] * xr - gre[o] * xi;
                }
            }
        }
    }
}

/// Per-mode complex channel mixing, `x: [Cin, R, M2, 2]`,
/// `wre`/`wim: [R, M2, Cin, Cout]` -> `[Cout, R, M2, 2]`.
pub fn mode_mix<T: Real>(x: &Tensor<T>, wre: &Tensor<T>, wim: &Tensor<T>) -> Result<Tensor<T>> {
    wre.same_shape(wim, "mode_mix weights")?;
    let (cin, cout, nm) = mode_mix_check(x.shape(), wre.shape())?;
    let mut y = vec![T::zero(); cout * nm * 2];
    mode_mix_fwd(cin, cout, nm, x.data(), wre.data(), wim.data(), &mut y);
    Tensor::new(&[cout, x.shape()[1], x.shape()[2], 2], y)
}
