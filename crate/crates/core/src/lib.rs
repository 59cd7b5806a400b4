//! Desk-scale laboratory for neural-operator surrogates of two-phase flow in
//! porous media.
//!
//! The pipeline samples permeability from a Gaussian random field
//! ([`grf`]), simulates oil-water displacement with an IMPES scheme
//! ([`reservoir`]), and trains Fourier and multigrid neural operators
//! ([`operators`], [`train`]) on the resulting pressure and saturation
//! series. Everything runs on a small reverse-mode autodiff core
//! ([`tensor`]); datasets and checkpoints use the NPY container
//! ([`data`]).

pub mod data;
pub mod error;
pub mod grf;
pub mod operators;
pub mod reservoir;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Real, Tensor};
