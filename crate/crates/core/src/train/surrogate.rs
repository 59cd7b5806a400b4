use crate::data::{FieldStats, NormStats, Target};
use crate::error::{shape_err, Result};
use crate::operators::{make_input, InputSpec, Model, NeuralOperator};
use crate::tensor::{Bindings, Real, Tape, Tensor, Var};

/// A neural operator together with everything needed to map a
/// permeability field and a day to a physical-space snapshot.
#[derive(Clone, Debug)]
pub struct Surrogate<T> {
    pub model: Model<T>,
    pub stats: NormStats,
    pub target: Target,
    /// Day mapped to a time channel value of 1; the training horizon.
    pub horizon_days: f64,
    pub input: InputSpec,
}

impl<T: Real> Surrogate<T> {
    pub fn new(model: Model<T>, stats: NormStats, target: Target, horizon_days: f64, input: InputSpec) -> Result<Self> {
        if model.in_channels() != input.channels() {
            return shape_err(format!(
                "model takes {} input channels but the input layout has {}",
                model.in_channels(),
                input.channels()
            ));
        }
        Ok(Self { model, stats, target, horizon_days, input })
    }

    pub fn target_stats(&self) -> FieldStats {
        match self.target {
            Target::P => self.stats.p,
            Target::Sw => self.stats.sw,
        }
    }

    pub fn make_input(&self, k: &Tensor<f64>, day: f64) -> Result<Tensor<T>> {
        make_input(k, day, self.horizon_days, &self.stats.k, self.input)
    }

    /// Normalized prediction `[1, nx, nz]` recorded on `tape`, with the
    /// parameter bindings used.
    pub fn forward_on(&self, tape: &mut Tape<T>, k: &Tensor<f64>, day: f64) -> Result<(Var, Bindings)> {
        let x = self.make_input(k, day)?;
        let bound = self.model.params().bind(tape);
        let xv = tape.constant(x);
        let y = self.model.forward_on(tape, &bound, xv)?;
        Ok((y, bound))
    }

    /// Physical-space snapshot `[nx, nz]` for day `day`.
    pub fn predict(&self, k: &Tensor<f64>, day: f64) -> Result<Tensor<f64>> {
        let y = self.model.forward(&self.make_input(k, day)?)?;
        let s = self.target_stats();
        let data = y.data().iter().map(|&v| s.denormalize(v.as_f64())).collect();
        Tensor::new(&y.shape()[1..], data)
    }
}
