//! Fourier and multigrid neural operators mapping `[C, H, W]` input
//! channels to a single `[1, H, W]` output field.

pub mod classical;
mod fno;
mod gradcheck;
mod input;
mod mgno;

pub use fno::{fourier_layer, spectral_conv, Fno, FnoConfig};
pub use gradcheck::{check_parameter_gradients, GradCheck};
pub use input::{make_input, InputSpec};
pub use mgno::{mgno_layer, vcycle_apply, Mgno, MgnoConfig, VcycleLevel};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::tensor::{Bindings, ParamStore, Real, Tape, Tensor, Var};

/// A trainable operator over a [`ParamStore`].
pub trait NeuralOperator<T: Real> {
    fn params(&self) -> &ParamStore<T>;
    fn params_mut(&mut self) -> &mut ParamStore<T>;
    fn in_channels(&self) -> usize;

    /// Records the forward map of `x: [C, H, W]` on `tape`.
    fn forward_on(&self, tape: &mut Tape<T>, bound: &Bindings, x: Var) -> Result<Var>;

    /// Evaluates the operator without keeping the tape.
    fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let bound = self.params().bind(&mut tape);
        let xv = tape.constant(x.clone());
        let y = self.forward_on(&mut tape, &bound, xv)?;
        Ok(tape.value(y).clone())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ModelConfig {
    Fno(FnoConfig),
    Mgno(MgnoConfig),
}

impl ModelConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelConfig::Fno(_) => "fno",
            ModelConfig::Mgno(_) => "mgno",
        }
    }

    pub fn in_channels(&self) -> usize {
        match self {
            ModelConfig::Fno(c) => c.in_channels,
            ModelConfig::Mgno(c) => c.in_channels,
        }
    }

    pub fn parameter_count(&self) -> usize {
        match self {
            ModelConfig::Fno(c) => c.parameter_count(),
            ModelConfig::Mgno(c) => c.parameter_count(),
        }
    }

    /// Checks that the architecture can run on an `h x w` grid.
    pub fn check_grid(&self, h: usize, w: usize) -> Result<()> {
        match self {
            ModelConfig::Fno(c) => c.modes.validate(h, w),
            ModelConfig::Mgno(c) => c.check_grid(h, w),
        }
    }
}

/// Either architecture behind one type.
#[derive(Clone, Debug)]
pub enum Model<T> {
    Fno(Fno<T>),
    Mgno(Mgno<T>),
}

impl<T: Real> Model<T> {
    pub fn new(config: &ModelConfig, seed: u64) -> Result<Self> {
        Ok(match config {
            ModelConfig::Fno(c) => Model::Fno(Fno::new(c.clone(), seed)?),
            ModelConfig::Mgno(c) => Model::Mgno(Mgno::new(c.clone(), seed)?),
        })
    }

    pub fn config(&self) -> ModelConfig {
        match self {
            Model::Fno(m) => ModelConfig::Fno(m.config().clone()),
            Model::Mgno(m) => ModelConfig::Mgno(m.config().clone()),
        }
    }
}

impl<T: Real> NeuralOperator<T> for Model<T> {
    fn params(&self) -> &ParamStore<T> {
        match self {
            Model::Fno(m) => m.params(),
            Model::Mgno(m) => m.params(),
        }
    }

    fn params_mut(&mut self) -> &mut ParamStore<T> {
        match self {
            Model::Fno(m) => m.params_mut(),
            Model::Mgno(m) => m.params_mut(),
        }
    }

    fn in_channels(&self) -> usize {
        match self {
            Model::Fno(m) => m.in_channels(),
            Model::Mgno(m) => m.in_channels(),
        }
    }

    fn forward_on(&self, tape: &mut Tape<T>, bound: &Bindings, x: Var) -> Result<Var> {
        match self {
            Model::Fno(m) => m.forward_on(tape, bound, x),
            Model::Mgno(m) => m.forward_on(tape, bound, x),
        }
    }
}

/// Uniform `(-bound, bound)` tensor.
pub(crate) fn uniform<T: Real>(shape: &[usize], bound: f64, rng: &mut ChaCha8Rng) -> Tensor<T> {
    Tensor::from_fn(shape, |_| T::of(rng.random_range(-bound..bound)))
}

pub(crate) fn check_input<T: Real>(tape: &Tape<T>, x: Var, channels: usize) -> Result<(usize, usize)> {
    let s = tape.value(x).shape();
    if s.len() != 3 || s[0] != channels {
        return crate::error::shape_err(format!("model expects [{channels}, H, W] input, got {s:?}"));
    }
    Ok((s[1], s[2]))
}
