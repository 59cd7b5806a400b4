//! The V-cycle of [`vcycle_apply`] instantiated with textbook kernels on
//! the 5-point Poisson problem, as a check of its multigrid structure.

use super::{vcycle_apply, VcycleLevel};
use crate::error::{invalid, Error, Result};
use crate::tensor::{conv2d, Tape, Tensor};

/// 5-point Laplacian stencil (unit spacing).
pub fn laplacian_kernel() -> Tensor<f64> {
    Tensor::new(&[1, 1, 3, 3], vec![0.0, -1.0, 0.0, -1.0, 4.0, -1.0, 0.0, -1.0, 0.0]).expect("3x3")
}

/// Damped Jacobi for the 5-point stencil: `ω / 4` at the centre.
pub fn jacobi_kernel(omega: f64) -> Tensor<f64> {
    let mut k = Tensor::zeros(&[1, 1, 3, 3]);
    k.data_mut()[4] = omega / 4.0;
    k
}

/// Bilinear interpolation stencil. As a transposed stride-2 kernel it is
/// bilinear prolongation; as a stride-2 kernel it is four times
/// full-weighting restriction, which matches reusing the unit-spacing
/// stencil on every level.
pub fn bilinear_kernel() -> Tensor<f64> {
    Tensor::new(&[1, 1, 3, 3], vec![1.0, 2.0, 1.0, 2.0, 4.0, 2.0, 1.0, 2.0, 1.0]).expect("3x3").map(|v| v / 4.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContractionReport {
    /// Energy-norm error ratio of each cycle.
    pub factors: Vec<f64>,
    /// `‖u - u*‖₂ / ‖u*‖₂` after the last cycle.
    pub final_rel_error: f64,
}

fn apply_laplacian(u: &Tensor<f64>) -> Tensor<f64> {
    conv2d(u, &laplacian_kernel(), 1, 1).expect("single-channel field")
}

fn sub(a: &Tensor<f64>, b: &Tensor<f64>) -> Tensor<f64> {
    Tensor::from_fn(a.shape(), |i| a.data()[i] - b.data()[i])
}

/// Reference solution of the Dirichlet problem by conjugate gradients.
pub fn solve_poisson_cg(f: &Tensor<f64>, tol: f64, max_iter: usize) -> Result<Tensor<f64>> {
    let mut x = Tensor::zeros(f.shape());
    let mut r = f.clone();
    let mut p = r.clone();
    let mut rr = r.dot(&r);
    let target = tol * f.norm();
    for _ in 0..max_iter {
        if rr.sqrt() <= target {
            return Ok(x);
        }
        let ap = apply_laplacian(&p);
        let alpha = rr / p.dot(&ap);
        for i in 0..x.len() {
            x.data_mut()[i] += alpha * p.data()[i];
            r.data_mut()[i] -= alpha * ap.data()[i];
        }
        let next = r.dot(&r);
        for i in 0..x.len() {
            p.data_mut()[i] = r.data()[i] + next / rr * p.data()[i];
        }
        rr = next;
    }
    Err(Error::NoConvergence(format!("Poisson CG did not reach {tol:e} in {max_iter} iterations")))
}

/// Runs `cycles` stationary iterations `u ← u + V(f - A u)` from `u = 0`
/// for the 5-point Laplacian `A` on the `[1, n, n]` right-hand side `f`.
pub fn poisson_vcycle_contraction(f: &Tensor<f64>, levels: usize, nu: usize, cycles: usize) -> Result<ContractionReport> {
    if f.ndim() != 3 || f.shape()[0] != 1 {
        return invalid(format!("expected a [1, n, n] right-hand side, got {:?}", f.shape()));
    }
    let exact = solve_poisson_cg(f, 1e-14, 100_000)?;
    let energy = |u: &Tensor<f64>| {
        let e = sub(u, &exact);
        e.dot(&apply_laplacian(&e)).sqrt()
    };
    let mut u = Tensor::zeros(f.shape());
    let mut prev = energy(&u);
    let mut factors = Vec::with_capacity(cycles);
    for _ in 0..cycles {
        let mut tape = Tape::new();
        let res = tape.constant(sub(f, &apply_laplacian(&u)));
        let a = tape.constant(laplacian_kernel());
        let s = tape.constant(jacobi_kernel(0.8));
        let t = tape.constant(bilinear_kernel());
        let lv: Vec<VcycleLevel> = (0..levels)
            .map(|j| VcycleLevel {
                a,
                s,
                r: (j + 1 < levels).then_some(t),
                p: (j + 1 < levels).then_some(t),
            })
            .collect();
        let c = vcycle_apply(&mut tape, res, &lv, nu)?;
        for (ui, ci) in u.data_mut().iter_mut().zip(tape.value(c).data()) {
            *ui += ci;
        }
        let e = energy(&u);
        factors.push(e / prev);
        prev = e;
    }
    Ok(ContractionReport {
        factors,
        final_rel_error: sub(&u, &exact).norm() / exact.norm(),
    })
}
