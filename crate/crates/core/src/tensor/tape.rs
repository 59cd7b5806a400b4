//! Reverse-mode tape. Every op appends a node whose inputs already exist,
//! so node order is a topological order and `backward` is one reverse
//! sweep. A tape lives for one forward pass and is consumed by
//! [`Tape::backward`].

use std::sync::Arc;

use super::conv::{conv_adjoint, conv_fwd, conv_kernel_grad, ConvGeom};
use super::spectral::{mode_mix_bwd, mode_mix_check, mode_mix_fwd, DftPlan, ModeSet};
use super::{dct2, gelu, gelu_grad, gemm_acc, idct2, irfft2, rfft2, MatRef, Real, Tensor};
use crate::error::{shape_err, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    AddScalar(Var),
    Gelu(Var),
    Sum(Var),
    SumSquares(Var),
    Sqrt(Var),
    ForwardDiff { x: Var, axis: usize },
    PointwiseLinear { x: Var, w: Var, b: Option<Var> },
    Conv2d { x: Var, k: Var, geom: ConvGeom },
    ConvTranspose2d { x: Var, k: Var, geom: ConvGeom },
    Rfft2(Var),
    Irfft2(Var),
    Dct2(Var),
    Idct2(Var),
    TruncDft { x: Var, plan: Arc<DftPlan<T>> },
    TruncIdft { x: Var, plan: Arc<DftPlan<T>> },
    ModeMix { x: Var, wre: Var, wim: Var },
}

struct Node<T> {
    value: Arc<Tensor<T>>,
    op: Op<T>,
}

pub struct Tape<T: Real> {
    nodes: Vec<Node<T>>,
    plans: Vec<Arc<DftPlan<T>>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients of a scalar loss with respect to the leaves of a tape.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    /// Gradient for a leaf, or `None` if the loss does not depend on it.
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }
}

fn add_into<T: Real>(dst: &mut [T], src: &[T], scale: T) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += scale * s;
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            plans: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        self.nodes.push(Node {
            value: Arc::new(value),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a shared tensor (typically a parameter) as a leaf.
    pub fn leaf(&mut self, value: Arc<Tensor<T>>) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf });
        Var(self.nodes.len() - 1)
    }

    /// Records an owned tensor as a leaf.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    fn val(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    fn plan(&mut self, h: usize, w: usize, modes: ModeSet) -> Result<Arc<DftPlan<T>>> {
        if let Some(p) = self.plans.iter().find(|p| p.h == h && p.w == w && p.modes == modes) {
            return Ok(p.clone());
        }
        let p = Arc::new(DftPlan::new(h, w, modes)?);
        self.plans.push(p.clone());
        Ok(p)
    }

    fn binary(&mut self, a: Var, b: Var, name: &str, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        let (x, y) = (self.val(a), self.val(b));
        x.same_shape(y, name)?;
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| f(p, q)).collect();
        Tensor::new(x.shape(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary(a, b, "add", |p, q| p + q)?;
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary(a, b, "sub", |p, q| p - q)?;
        Ok(self.push(v, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary(a, b, "mul", |p, q| p * q)?;
        Ok(self.push(v, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        let v = self.val(a).map(|x| x * c);
        self.push(v, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: T) -> Var {
        let v = self.val(a).map(|x| x + c);
        self.push(v, Op::AddScalar(a))
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let v = self.val(a).map(gelu);
        self.push(v, Op::Gelu(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Tensor::scalar(self.val(a).sum());
        self.push(v, Op::Sum(a))
    }

    pub fn sum_squares(&mut self, a: Var) -> Var {
        let x = self.val(a);
        let v = Tensor::scalar(super::conv::dot(x.data(), x.data()));
        self.push(v, Op::SumSquares(a))
    }

    /// Square root of a single-element tensor.
    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        let x = self.val(a).item()?;
        Ok(self.push(Tensor::scalar(x.sqrt()), Op::Sqrt(a)))
    }

    /// Forward difference `x[i+1] - x[i]` along one of the last two axes
    /// (`axis` 0 = rows, 1 = columns); that extent shrinks by one.
    pub fn forward_diff(&mut self, a: Var, axis: usize) -> Result<Var> {
        let x = self.val(a);
        let nd = x.ndim();
        if nd < 2 || axis > 1 {
            return shape_err(format!("forward_diff axis {axis} on {:?}", x.shape()));
        }
        let (h, w) = (x.shape()[nd - 2], x.shape()[nd - 1]);
        let batch = x.len() / (h * w).max(1);
        let (oh, ow) = if axis == 0 { (h.saturating_sub(1), w) } else { (h, w.saturating_sub(1)) };
        if oh == 0 || ow == 0 {
            return shape_err(format!("forward_diff of a {h}x{w} field along axis {axis}"));
        }
        let mut out = Vec::with_capacity(batch * oh * ow);
        for f in x.data().chunks(h * w) {
            for r in 0..oh {
                for c in 0..ow {
                    let next = if axis == 0 { f[(r + 1) * w + c] } else { f[r * w + c + 1] };
                    out.push(next - f[r * w + c]);
                }
            }
        }
        let mut shape = x.shape()[..nd - 2].to_vec();
        shape.extend([oh, ow]);
        let v = Tensor::new(&shape, out)?;
        Ok(self.push(v, Op::ForwardDiff { x: a, axis }))
    }

    /// Per-position channel mixing: `x: [Cin, ...]`, `w: [Cout, Cin]`,
    /// optional `b: [Cout]` -> `[Cout, ...]`.
    pub fn pointwise_linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (xv, wv) = (self.val(x), self.val(w));
        if xv.ndim() < 1 || wv.ndim() != 2 || wv.shape()[1] != xv.shape()[0] {
            return shape_err(format!("pointwise_linear: x {:?}, w {:?}", xv.shape(), wv.shape()));
        }
        let (cout, cin) = (wv.shape()[0], wv.shape()[1]);
        let np = xv.len() / cin.max(1);
        if let Some(b) = b {
            if self.val(b).shape() != [cout] {
                return shape_err(format!("pointwise_linear bias {:?}, expected [{cout}]", self.val(b).shape()));
            }
        }
        let mut out = vec![T::zero(); cout * np];
        for o in 0..cout {
            let dst = &mut out[o * np..(o + 1) * np];
            if let Some(b) = b {
                let bv = self.val(b).data()[o];
                dst.iter_mut().for_each(|d| *d = bv);
            }
        }
        gemm_acc(MatRef::new(wv.data(), cout, cin), MatRef::new(xv.data(), cin, np), &mut out);
        let mut shape = xv.shape().to_vec();
        shape[0] = cout;
        let v = Tensor::new(&shape, out)?;
        Ok(self.push(v, Op::PointwiseLinear { x, w, b }))
    }

    pub fn conv2d(&mut self, x: Var, k: Var, stride: usize, pad: usize) -> Result<Var> {
        let geom = ConvGeom::forward(self.val(x).shape(), self.val(k).shape(), stride, pad)?;
        let mut y = vec![T::zero(); geom.cout * geom.ho * geom.wo];
        conv_fwd(&geom, self.val(x).data(), self.val(k).data(), &mut y);
        let v = Tensor::new(&[geom.cout, geom.ho, geom.wo], y)?;
        Ok(self.push(v, Op::Conv2d { x, k, geom }))
    }

    /// Adjoint of `conv2d(., k, stride, pad)` on an `out_hw` field.
    pub fn conv2d_transpose(&mut self, x: Var, k: Var, stride: usize, pad: usize, out_hw: (usize, usize)) -> Result<Var> {
        let geom = ConvGeom::transpose(self.val(x).shape(), self.val(k).shape(), stride, pad, out_hw)?;
        let mut y = vec![T::zero(); geom.cin * geom.h * geom.w];
        conv_adjoint(&geom, self.val(x).data(), self.val(k).data(), &mut y);
        let v = Tensor::new(&[geom.cin, geom.h, geom.w], y)?;
        Ok(self.push(v, Op::ConvTranspose2d { x, k, geom }))
    }

    pub fn rfft2(&mut self, x: Var) -> Result<Var> {
        let v = rfft2(self.val(x))?;
        Ok(self.push(v, Op::Rfft2(x)))
    }

    pub fn irfft2(&mut self, x: Var) -> Result<Var> {
        let v = irfft2(self.val(x))?;
        Ok(self.push(v, Op::Irfft2(x)))
    }

    pub fn dct2(&mut self, x: Var) -> Result<Var> {
        let v = dct2(self.val(x))?;
        Ok(self.push(v, Op::Dct2(x)))
    }

    pub fn idct2(&mut self, x: Var) -> Result<Var> {
        let v = idct2(self.val(x))?;
        Ok(self.push(v, Op::Idct2(x)))
    }

    /// Retained-mode spectrum of `x: [C, H, W]`, `[C, 2*m1, m2, 2]`.
    pub fn truncated_dft(&mut self, x: Var, modes: ModeSet) -> Result<Var> {
        let xs = self.val(x).shape().to_vec();
        if xs.len() != 3 {
            return shape_err(format!("truncated_dft expects [C,H,W], got {xs:?}"));
        }
        let plan = self.plan(xs[1], xs[2], modes)?;
        let n = plan.spectrum_len();
        let mut out = vec![T::zero(); xs[0] * n];
        let hw = xs[1] * xs[2];
        for c in 0..xs[0] {
            plan.forward(&self.val(x).data()[c * hw..(c + 1) * hw], &mut out[c * n..(c + 1) * n], |_| T::one());
        }
        let v = Tensor::new(&[xs[0], modes.rows(), modes.m2, 2], out)?;
        Ok(self.push(v, Op::TruncDft { x, plan }))
    }

    /// Inverse of [`Tape::truncated_dft`] onto an `hw` grid, treating all
    /// other modes as zero.
    pub fn truncated_idft(&mut self, x: Var, modes: ModeSet, hw: (usize, usize)) -> Result<Var> {
        let xs = self.val(x).shape().to_vec();
        if xs.len() != 4 || xs[1] != modes.rows() || xs[2] != modes.m2 || xs[3] != 2 {
            return shape_err(format!("truncated_idft: spectrum {xs:?} does not match modes {modes:?}"));
        }
        let plan = self.plan(hw.0, hw.1, modes)?;
        let n = plan.spectrum_len();
        let inv = T::one() / T::of((hw.0 * hw.1) as f64);
        let npix = hw.0 * hw.1;
        let mut out = vec![T::zero(); xs[0] * npix];
        for c in 0..xs[0] {
            plan.inverse(&self.val(x).data()[c * n..(c + 1) * n], &mut out[c * npix..(c + 1) * npix], |k2| {
                plan.column_weight(k2) * inv
            });
        }
        let v = Tensor::new(&[xs[0], hw.0, hw.1], out)?;
        Ok(self.push(v, Op::TruncIdft { x, plan }))
    }

    pub fn mode_mix(&mut self, x: Var, wre: Var, wim: Var) -> Result<Var> {
        self.val(wre).same_shape(self.val(wim), "mode_mix weights")?;
        let xs = self.val(x).shape().to_vec();
        let (cin, cout, nm) = mode_mix_check(&xs, self.val(wre).shape())?;
        let mut y = vec![T::zero(); cout * nm * 2];
        mode_mix_fwd(cin, cout, nm, self.val(x).data(), self.val(wre).data(), self.val(wim).data(), &mut y);
        let v = Tensor::new(&[cout, xs[1], xs[2], 2], y)?;
        Ok(self.push(v, Op::ModeMix { x, wre, wim }))
    }

    /// Reverse sweep from a scalar `loss`. Consumes the tape.
    pub fn backward(self, loss: Var) -> Result<Gradients<T>> {
        if self.val(loss).len() != 1 {
            return shape_err(format!("backward needs a scalar loss, got shape {:?}", self.val(loss).shape()));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<T>>> = (0..n).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);

        // Lazily allocate zeroed gradient buffers.
        fn slot<'a, T: Real>(grads: &'a mut [Option<Vec<T>>], nodes: &[Node<T>], v: Var) -> &'a mut Vec<T> {
            grads[v.0].get_or_insert_with(|| vec![T::zero(); nodes[v.0].value.len()])
        }

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let nodes = &self.nodes;
            let val = |v: Var| -> &Tensor<T> { &nodes[v.0].value };
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::Add(a, b) => {
                    add_into(slot(&mut grads, nodes, *a), &g, T::one());
                    add_into(slot(&mut grads, nodes, *b), &g, T::one());
                }
                Op::Sub(a, b) => {
                    add_into(slot(&mut grads, nodes, *a), &g, T::one());
                    add_into(slot(&mut grads, nodes, *b), &g, -T::one());
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (val(*a).data(), val(*b).data());
                    let ga = slot(&mut grads, nodes, *a);
                    for ((d, &gv), &y) in ga.iter_mut().zip(&g).zip(bv) {
                        *d += gv * y;
                    }
                    let gb = slot(&mut grads, nodes, *b);
                    for ((d, &gv), &x) in gb.iter_mut().zip(&g).zip(av) {
                        *d += gv * x;
                    }
                }
                Op::Scale(a, c) => add_into(slot(&mut grads, nodes, *a), &g, *c),
                Op::AddScalar(a) => add_into(slot(&mut grads, nodes, *a), &g, T::one()),
                Op::Gelu(a) => {
                    let xv = val(*a).data();
                    let ga = slot(&mut grads, nodes, *a);
                    for ((d, &gv), &x) in ga.iter_mut().zip(&g).zip(xv) {
                        *d += gv * gelu_grad(x);
                    }
                }
                Op::Sum(a) => {
                    let g0 = g[0];
                    slot(&mut grads, nodes, *a).iter_mut().for_each(|d| *d += g0);
                }
                Op::SumSquares(a) => {
                    let two_g = T::of(2.0) * g[0];
                    let xv = val(*a).data();
                    add_into(slot(&mut grads, nodes, *a), xv, two_g);
                }
                Op::Sqrt(a) => {
                    let out = node.value.data()[0];
                    if out > T::zero() {
                        slot(&mut grads, nodes, *a)[0] += g[0] / (T::of(2.0) * out);
                    }
                }
                Op::ForwardDiff { x, axis } => {
                    let xs = val(*x).shape();
                    let nd = xs.len();
                    let (h, w) = (xs[nd - 2], xs[nd - 1]);
                    let (oh, ow) = if *axis == 0 { (h - 1, w) } else { (h, w - 1) };
                    let gx = slot(&mut grads, nodes, *x);
                    for (b, gb) in g.chunks(oh * ow).enumerate() {
                        let f = &mut gx[b * h * w..(b + 1) * h * w];
                        for r in 0..oh {
                            for c in 0..ow {
                                let gv = gb[r * ow + c];
                                let next = if *axis == 0 { (r + 1) * w + c } else { r * w + c + 1 };
                                f[next] += gv;
                                f[r * w + c] -= gv;
                            }
                        }
                    }
                }
                Op::PointwiseLinear { x, w, b } => {
                    let (xv, wv) = (val(*x).data(), val(*w).data());
                    let (cout, cin) = (val(*w).shape()[0], val(*w).shape()[1]);
                    let np = xv.len() / cin.max(1);
                    gemm_acc(MatRef::t(wv, cout, cin), MatRef::new(&g, cout, np), slot(&mut grads, nodes, *x));
                    gemm_acc(MatRef::new(&g, cout, np), MatRef::t(xv, cin, np), slot(&mut grads, nodes, *w));
                    if let Some(b) = b {
                        let gb = slot(&mut grads, nodes, *b);
                        for o in 0..cout {
                            gb[o] += g[o * np..(o + 1) * np].iter().copied().sum::<T>();
                        }
                    }
                }
                Op::Conv2d { x, k, geom } => {
                    let (xv, kv) = (val(*x).data(), val(*k).data());
                    conv_adjoint(geom, &g, kv, slot(&mut grads, nodes, *x));
                    conv_kernel_grad(geom, xv, &g, slot(&mut grads, nodes, *k));
                }
                Op::ConvTranspose2d { x, k, geom } => {
                    let (xv, kv) = (val(*x).data(), val(*k).data());
                    conv_fwd(geom, &g, kv, slot(&mut grads, nodes, *x));
                    conv_kernel_grad(geom, &g, xv, slot(&mut grads, nodes, *k));
                }
                Op::Rfft2(x) => {
                    // dL/dx = Re sum_k G_k e^{+i theta}, i.e. HW * irfft2(G / c_k2).
                    let s = node.value.shape();
                    let (h, w2) = (s[s.len() - 3], s[s.len() - 2]);
                    let w = 2 * (w2 - 1);
                    let mut gs = g.clone();
                    for (idx, v) in gs.iter_mut().enumerate() {
                        let k2 = (idx / 2) % w2;
                        if k2 != 0 && k2 != w2 - 1 {
                            *v *= T::of(0.5);
                        }
                    }
                    let gt = irfft2(&Tensor::new(s, gs)?)?;
                    add_into(slot(&mut grads, nodes, *x), gt.data(), T::of((h * w) as f64));
                }
                Op::Irfft2(x) => {
                    let xs = val(*x).shape();
                    let (h, w2) = (xs[xs.len() - 3], xs[xs.len() - 2]);
                    let w = 2 * (w2 - 1);
                    let spec = rfft2(&Tensor::new(node.value.shape(), g)?)?;
                    let inv = T::one() / T::of((h * w) as f64);
                    let gx = slot(&mut grads, nodes, *x);
                    for (idx, (d, &s)) in gx.iter_mut().zip(spec.data()).enumerate() {
                        let k2 = (idx / 2) % w2;
                        let c = if k2 == 0 || k2 == w2 - 1 { T::one() } else { T::of(2.0) };
                        *d += c * inv * s;
                    }
                }
                Op::Dct2(x) => {
                    let gt = idct2(&Tensor::new(node.value.shape(), g)?)?;
                    add_into(slot(&mut grads, nodes, *x), gt.data(), T::one());
                }
                Op::Idct2(x) => {
                    let gt = dct2(&Tensor::new(node.value.shape(), g)?)?;
                    add_into(slot(&mut grads, nodes, *x), gt.data(), T::one());
                }
                Op::TruncDft { x, plan } => {
                    let n = plan.spectrum_len();
                    let hw = plan.h * plan.w;
                    let gx = slot(&mut grads, nodes, *x);
                    for (c, gc) in g.chunks(n).enumerate() {
                        plan.inverse(gc, &mut gx[c * hw..(c + 1) * hw], |_| T::one());
                    }
                }
                Op::TruncIdft { x, plan } => {
                    let n = plan.spectrum_len();
                    let hw = plan.h * plan.w;
                    let inv = T::one() / T::of(hw as f64);
                    let gx = slot(&mut grads, nodes, *x);
                    for (c, gc) in g.chunks(hw).enumerate() {
                        plan.forward(gc, &mut gx[c * n..(c + 1) * n], |k2| plan.column_weight(k2) * inv);
                    }
                }
                Op::ModeMix { x, wre, wim } => {
                    let xs = val(*x).shape();
                    let (cin, nm) = (xs[0], xs[1] * xs[2]);
                    let cout = val(*wre).shape()[3];
                    let (xv, wr, wi) = (val(*x).data(), val(*wre).data(), val(*wim).data());
                    let mut dx = grads[x.0].take().unwrap_or_else(|| vec![T::zero(); xv.len()]);
                    let mut dwr = grads[wre.0].take().unwrap_or_else(|| vec![T::zero(); wr.len()]);
                    let mut dwi = grads[wim.0].take().unwrap_or_else(|| vec![T::zero(); wi.len()]);
                    mode_mix_bwd(cin, cout, nm, xv, wr, wi, &g, Some(&mut dx), Some((&mut dwr, &mut dwi)));
                    grads[x.0] = Some(dx);
                    grads[wre.0] = Some(dwr);
                    grads[wim.0] = Some(dwi);
                }
            }
        }

        let grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, node)| match (&node.op, g) {
                (Op::Leaf, Some(g)) => Tensor::new(node.value.shape(), g).ok(),
                _ => None,
            })
            .collect();
        Ok(Gradients { grads })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Checks reverse-mode gradients of `sum(w * f(inputs))` against
    /// central differences for every input entry.
    fn check<F>(inputs: &[Tensor<f64>], f: F)
    where
        F: Fn(&mut Tape<f64>, &[Var]) -> Var,
    {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let probe = {
            let mut t = Tape::new();
            let vs: Vec<Var> = inputs.iter().map(|x| t.constant(x.clone())).collect();
            let out = f(&mut t, &vs);
            random(t.value(out).shape(), &mut rng)
        };
        let eval = |xs: &[Tensor<f64>]| -> (f64, Option<Vec<Tensor<f64>>>) {
            let mut t = Tape::new();
            let vs: Vec<Var> = xs.iter().map(|x| t.constant(x.clone())).collect();
            let out = f(&mut t, &vs);
            let w = t.constant(probe.clone());
            let prod = t.mul(out, w).unwrap();
            let loss = t.sum(prod);
            let l = t.value(loss).data()[0];
            let g = t.backward(loss).unwrap();
            let grads = vs
                .iter()
                .zip(xs)
                .map(|(&v, x)| g.get(v).cloned().unwrap_or_else(|| Tensor::zeros(x.shape())))
                .collect();
            (l, Some(grads))
        };
        let (_, grads) = eval(inputs);
        let grads = grads.unwrap();
        let h = 1e-5;
        for (which, x) in inputs.iter().enumerate() {
            for idx in 0..x.len() {
                let mut plus = inputs.to_vec();
                plus[which].data_mut()[idx] += h;
                let mut minus = inputs.to_vec();
                minus[which].data_mut()[idx] -= h;
                let fd = (eval(&plus).0 - eval(&minus).0) / (2.0 * h);
                let an = grads[which].data()[idx];
                let err = (fd - an).abs() / (fd.abs() + 1e-8);
                assert!(err < 1e-4, "input {which} entry {idx}: fd {fd} vs reverse {an}");
            }
        }
    }

    #[test]
    fn elementwise_ops() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random(&[3, 4], &mut rng);
        let b = random(&[3, 4], &mut rng);
        check(&[a.clone(), b.clone()], |t, v| t.add(v[0], v[1]).unwrap());
        check(&[a.clone(), b.clone()], |t, v| t.sub(v[0], v[1]).unwrap());
        check(&[a.clone(), b.clone()], |t, v| t.mul(v[0], v[1]).unwrap());
        check(std::slice::from_ref(&a), |t, v| {
            let s = t.scale(v[0], 1.7);
            t.add_scalar(s, -0.3)
        });
        check(std::slice::from_ref(&a), |t, v| t.gelu(v[0]));
        check(std::slice::from_ref(&a), |t, v| t.sum(v[0]));
        check(&[a], |t, v| {
            let s = t.sum_squares(v[0]);
            t.sqrt(s).unwrap()
        });
    }

    #[test]
    fn sqrt_of_zero_has_zero_gradient() {
        let mut t = Tape::<f64>::new();
        let x = t.constant(Tensor::zeros(&[3]));
        let s = t.sum_squares(x);
        let r = t.sqrt(s).unwrap();
        let g = t.backward(r).unwrap();
        assert!(g.get(x).is_none_or(|t| t.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn forward_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random(&[2, 4, 5], &mut rng);
        check(std::slice::from_ref(&a), |t, v| t.forward_diff(v[0], 0).unwrap());
        check(&[a], |t, v| t.forward_diff(v[0], 1).unwrap());
    }

    #[test]
    fn pointwise_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random(&[3, 4, 2], &mut rng);
        let w = random(&[5, 3], &mut rng);
        let b = random(&[5], &mut rng);
        check(&[x.clone(), w.clone(), b], |t, v| t.pointwise_linear(v[0], v[1], Some(v[2])).unwrap());
        check(&[x, w], |t, v| t.pointwise_linear(v[0], v[1], None).unwrap());
    }

    #[test]
    fn convolutions() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for stride in [1, 2] {
            let x = random(&[2, 6, 8], &mut rng);
            let k = random(&[3, 2, 3, 3], &mut rng);
            check(&[x, k.clone()], |t, v| t.conv2d(v[0], v[1], stride, 1).unwrap());
            let (ho, wo) = if stride == 1 { (6, 8) } else { (3, 4) };
            let y = random(&[3, ho, wo], &mut rng);
            check(&[y, k], |t, v| t.conv2d_transpose(v[0], v[1], stride, 1, (6, 8)).unwrap());
        }
    }

    #[test]
    fn full_transforms() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random(&[2, 4, 6], &mut rng);
        check(std::slice::from_ref(&x), |t, v| t.rfft2(v[0]).unwrap());
        check(std::slice::from_ref(&x), |t, v| t.dct2(v[0]).unwrap());
        check(&[x], |t, v| t.idct2(v[0]).unwrap());
        // irfft2 ignores the imaginary parts of its purely real columns, so
        // their gradient must vanish too.
        let s = random(&[2, 4, 4, 2], &mut rng);
        check(&[s], |t, v| t.irfft2(v[0]).unwrap());
    }

    #[test]
    fn truncated_transforms_and_mixing() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let modes = ModeSet::new(2, 3);
        let x = random(&[2, 8, 6], &mut rng);
        check(&[x], |t, v| t.truncated_dft(v[0], modes).unwrap());
        let s = random(&[2, 4, 3, 2], &mut rng);
        check(std::slice::from_ref(&s), |t, v| t.truncated_idft(v[0], modes, (8, 6)).unwrap());
        let wre = random(&[4, 3, 2, 3], &mut rng);
        let wim = random(&[4, 3, 2, 3], &mut rng);
        check(&[s, wre, wim], |t, v| t.mode_mix(v[0], v[1], v[2]).unwrap());
    }

    #[test]
    fn composite_conv_gelu_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = random(&[2, 5, 5], &mut rng);
        let k = random(&[2, 2, 3, 3], &mut rng);
        check(&[x, k], |t, v| {
            let y = t.conv2d(v[0], v[1], 1, 1).unwrap();
            let a = t.gelu(y);
            t.sum(a)
        });
    }

    #[test]
    fn small_worked_examples() {
        let mut t = Tape::<f64>::new();
        let a = t.constant(Tensor::new(&[2], vec![1.0, 2.0]).unwrap());
        let b = t.constant(Tensor::new(&[2], vec![3.0, 4.0]).unwrap());
        let s = t.add(a, b).unwrap();
        assert_eq!(t.value(s).data(), &[4.0, 6.0]);
        let z = t.scale(a, 0.0);
        assert_eq!(t.value(z).data(), &[0.0, 0.0]);

        let x = t.constant(Tensor::new(&[2, 1, 1], vec![1.0, 2.0]).unwrap());
        let w = t.constant(Tensor::new(&[1, 2], vec![1.0, 1.0]).unwrap());
        let bias = t.constant(Tensor::new(&[1], vec![1.0]).unwrap());
        let y = t.pointwise_linear(x, w, Some(bias)).unwrap();
        assert_eq!(t.value(y).data(), &[4.0]);

        let mut t = Tape::<f64>::new();
        let p = t.constant(Tensor::new(&[3], vec![0.3, -1.0, 2.0]).unwrap());
        let l = t.sum(p);
        let g = t.backward(l).unwrap();
        assert_eq!(g.get(p).unwrap().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut t = Tape::<f64>::new();
        let x = t.constant(Tensor::zeros(&[2]));
        assert!(t.backward(x).is_err());
    }

    #[test]
    fn shared_inputs_accumulate() {
        // d/dx sum(x * x) = 2x through two uses of the same node.
        let mut t = Tape::<f64>::new();
        let x = t.constant(Tensor::new(&[2], vec![1.0, -2.0]).unwrap());
        let y = t.mul(x, x).unwrap();
        let l = t.sum(y);
        let g = t.backward(l).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[2.0, -4.0]);
    }
}
