use super::NeuralOperator;
use crate::error::Result;
use crate::tensor::{Tape, Tensor};

/// Worst parameter-gradient mismatch found by [`check_parameter_gradients`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    /// `max |reverse - fd| / (|fd| + 1e-8)` over every parameter entry.
    pub max_rel_err: f64,
    /// Parameter name and flat index of the worst entry.
    pub worst: (String, usize),
    pub entries: usize,
}

/// Compares reverse-mode gradients of `Σ w ⊙ model(x)` (fixed, non-trivial
/// `w`) with central differences of step `h` for every parameter entry.
pub fn check_parameter_gradients<M>(model: &M, x: &Tensor<f64>, h: f64) -> Result<GradCheck>
where
    M: NeuralOperator<f64> + Clone,
{
    let probe = |n: usize| Tensor::from_fn(&[n], |i| (0.7 * i as f64 + 0.3).sin());
    let loss = |m: &M| -> Result<f64> {
        let y = m.forward(x)?;
        Ok(y.dot(&probe(y.len()).reshape(y.shape())?))
    };

    let mut tape = Tape::new();
    let bound = model.params().bind(&mut tape);
    let xv = tape.constant(x.clone());
    let y = model.forward_on(&mut tape, &bound, xv)?;
    let w = tape.constant(probe(tape.value(y).len()).reshape(tape.value(y).shape())?);
    let prod = tape.mul(y, w)?;
    let l = tape.sum(prod);
    let grads = tape.backward(l)?;
    let mut work = model.clone();
    work.params_mut().zero_grad();
    work.params_mut().accumulate(&bound, &grads, 1.0);
    let analytic: Vec<Tensor<f64>> = work.params().iter().map(|p| p.grad.clone()).collect();

    let mut report = GradCheck {
        max_rel_err: 0.0,
        worst: (String::new(), 0),
        entries: 0,
    };
    let ids: Vec<_> = model.params().ids().collect();
    for (pi, id) in ids.into_iter().enumerate() {
        let base = model.params().value(id).clone();
        for e in 0..base.len() {
            let mut shifted = base.clone();
            shifted.data_mut()[e] = base.data()[e] + h;
            work.params_mut().set_value(id, shifted.clone())?;
            let up = loss(&work)?;
            shifted.data_mut()[e] = base.data()[e] - h;
            work.params_mut().set_value(id, shifted)?;
            let down = loss(&work)?;
            let fd = (up - down) / (2.0 * h);
            let err = (analytic[pi].data()[e] - fd).abs() / (fd.abs() + 1e-8);
            if err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst = (model.params().get(id).name.clone(), e);
            }
            report.entries += 1;
        }
        work.params_mut().set_value(id, base)?;
    }
    Ok(report)
}
