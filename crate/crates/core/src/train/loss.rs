//! Relative L2 and H1 errors, as plain functions for evaluation and as
//! tape expressions for training.

use crate::error::{invalid, shape_err, Result};
use crate::tensor::{Real, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    RelL2,
    RelH1,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::RelL2 => "l2",
            LossKind::RelH1 => "h1",
        }
    }
}

impl std::str::FromStr for LossKind {
    type Err = crate::error::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l2" | "rel_l2" => Ok(LossKind::RelL2),
            "h1" | "rel_h1" => Ok(LossKind::RelH1),
            _ => invalid(format!("unknown loss {s:?}; expected l2 or h1")),
        }
    }
}

fn sum_sq(a: impl Iterator<Item = f64>) -> f64 {
    a.map(|v| v * v).sum()
}

/// `||pred - target|| / ||target||` over the flattened values.
pub fn rel_l2(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() {
        return shape_err(format!("rel_l2 of {} against {} values", pred.len(), target.len()));
    }
    let den = sum_sq(target.iter().copied());
    if den == 0.0 {
        return invalid("relative error against a zero target");
    }
    Ok((sum_sq(pred.iter().zip(target).map(|(p, t)| p - t)) / den).sqrt())
}

/// `sum ||D_a x||^2` over every axis of `shape`, with `D_a` the forward
/// difference along axis `a`.
fn grad_energy(x: &[f64], shape: &[usize]) -> f64 {
    let mut total = 0.0;
    let mut stride = 1;
    for &n in shape.iter().rev() {
        let block = stride * n;
        for base in (0..x.len()).step_by(block) {
            for i in base..base + stride * (n.saturating_sub(1)) {
                let d = x[i + stride] - x[i];
                total += d * d;
            }
        }
        stride = block;
    }
    total
}

/// Relative discrete H1 error over all axes of the field, forward
/// differences scaled by `1/h`.
pub fn rel_h1(pred: &Tensor<f64>, target: &Tensor<f64>, h: f64) -> Result<f64> {
    if pred.shape() != target.shape() {
        return shape_err(format!("rel_h1 of {:?} against {:?}", pred.shape(), target.shape()));
    }
    if !(h > 0.0) {
        return invalid(format!("grid spacing {h}"));
    }
    let d: Vec<f64> = pred.data().iter().zip(target.data()).map(|(p, t)| p - t).collect();
    let w = 1.0 / (h * h);
    let num = sum_sq(d.iter().copied()) + w * grad_energy(&d, pred.shape());
    let den = sum_sq(target.data().iter().copied()) + w * grad_energy(target.data(), target.shape());
    if den == 0.0 {
        return invalid("relative error against a zero target");
    }
    Ok((num / den).sqrt())
}

/// Builds `kind`'s relative error of `pred: [..., H, W]` against a
/// constant `target` of the same shape, differencing the last two axes.
pub fn tape_loss<T: Real>(tape: &mut Tape<T>, kind: LossKind, pred: Var, target: &Tensor<T>, h: f64) -> Result<Var> {
    if tape.value(pred).shape() != target.shape() {
        return shape_err(format!("loss of {:?} against {:?}", tape.value(pred).shape(), target.shape()));
    }
    let t64: Tensor<f64> = target.cast();
    let den = match kind {
        LossKind::RelL2 => sum_sq(t64.data().iter().copied()),
        LossKind::RelH1 => {
            let n = target.ndim();
            if n < 2 {
                return shape_err("H1 loss needs at least two axes");
            }
            let plane = &target.shape()[n - 2..];
            let w = 1.0 / (h * h);
            sum_sq(t64.data().iter().copied())
                + w * t64
                    .data()
                    .chunks(plane[0] * plane[1])
                    .map(|c| grad_energy(c, plane))
                    .sum::<f64>()
        }
    };
    if den == 0.0 {
        return invalid("relative error against a zero target");
    }
    let tv = tape.constant(target.clone());
    let d = tape.sub(pred, tv)?;
    let mut num = tape.sum_squares(d);
    if kind == LossKind::RelH1 {
        let w = T::of(1.0 / (h * h));
        for axis in 0..2 {
            let g = tape.forward_diff(d, axis)?;
            let e = tape.sum_squares(g);
            let e = tape.scale(e, w);
            num = tape.add(num, e)?;
        }
    }
    let root = tape.sqrt(num)?;
    Ok(tape.scale(root, T::of(1.0 / den.sqrt())))
}
