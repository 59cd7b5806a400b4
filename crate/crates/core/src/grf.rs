//! Gaussian random field permeability, `N(0, A(-Δ + 9I)^-2)` on the unit
//! square with zero-Neumann boundaries, sampled by Karhunen–Loève
//! expansion in the cell-centred cosine basis.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Result};
use crate::tensor::{idct2, Tensor};

/// Shift of the covariance operator `(-Δ + SHIFT·I)^-EXPONENT`.
pub const SHIFT: f64 = 9.0;
pub const EXPONENT: i32 = 2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GrfSpec {
    /// Cells per side.
    pub n: usize,
    /// Scale applied to `|g|` when forming permeability.
    pub amplitude: f64,
    pub seed: u64,
}

impl GrfSpec {
    pub fn new(n: usize, amplitude: f64, seed: u64) -> Result<Self> {
        let s = Self { n, amplitude, seed };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return invalid(format!("GRF grid extent must be at least 2, got {}", self.n));
        }
        if !(self.amplitude > 0.0 && self.amplitude.is_finite()) {
            return invalid(format!("GRF amplitude must be positive, got {}", self.amplitude));
        }
        Ok(())
    }
}

/// Covariance eigenvalue of cosine mode `(j, k)`.
pub fn eigenvalue(j: usize, k: usize) -> f64 {
    let lam = PI * PI * ((j * j + k * k) as f64) + SHIFT;
    lam.powi(-EXPONENT)
}

/// `μ_jk` on the `n x n` mode grid.
pub fn kl_eigenvalues(spec: &GrfSpec) -> Tensor<f64> {
    let n = spec.n;
    Tensor::from_fn(&[n, n], |idx| eigenvalue(idx / n, idx % n))
}

/// Continuous-orthonormal cosine mode `(j, k)` at the centre of cell `(i, m)`.
pub fn basis_function(n: usize, j: usize, k: usize, i: usize, m: usize) -> f64 {
    let c = |f: usize| if f == 0 { 1.0 } else { 2f64.sqrt() };
    let h = n as f64;
    c(j) * c(k) * (PI * j as f64 * (i as f64 + 0.5) / h).cos() * (PI * k as f64 * (m as f64 + 0.5) / h).cos()
}

/// Mode order for the normal-variate stream: shell `s = max(j, k)` for
/// `s = 0, 1, ...`, within a shell `(0, s), (1, s), .., (s, s), (s, s-1), .., (s, 0)`.
/// Every grid of extent `n` consumes the first `n²` variates, so a coarser
/// grid sees the same coefficients on the modes it shares with a finer one.
pub fn mode_order(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(|s| (0..=s).map(move |j| (j, s)).chain((0..s).rev().map(move |k| (s, k))))
}

/// Standard-normal KL coefficients `ξ_jk` for one draw, laid out `[n, n]`.
/// The stream is ChaCha8 seeded by `seed` on stream `draw_index`.
pub fn kl_coefficients(spec: &GrfSpec, draw_index: u64) -> Tensor<f64> {
    let n = spec.n;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(draw_index);
    let mut xi = vec![0.0; n * n];
    for (j, k) in mode_order(n) {
        xi[j * n + k] = StandardNormal.sample(&mut rng);
    }
    Tensor::new(&[n, n], xi).expect("n*n coefficients")
}

/// One field `g = Σ √μ_jk ξ_jk φ_jk` at cell centres.
pub fn sample_grf(spec: &GrfSpec, draw_index: u64) -> Result<Tensor<f64>> {
    spec.validate()?;
    let n = spec.n;
    let mut coeffs = kl_coefficients(spec, draw_index);
    for (idx, c) in coeffs.data_mut().iter_mut().enumerate() {
        *c *= eigenvalue(idx / n, idx % n).sqrt();
    }
    // The orthonormal inverse DCT uses basis vectors φ/n.
    Ok(idct2(&coeffs)?.map(|v| v * n as f64))
}

/// `K = amplitude · |g|`.
pub fn to_permeability(g: &Tensor<f64>, amplitude: f64) -> Tensor<f64> {
    g.map(|v| amplitude * v.abs())
}

pub fn sample_permeability(spec: &GrfSpec, draw_index: u64) -> Result<Tensor<f64>> {
    Ok(to_permeability(&sample_grf(spec, draw_index)?, spec.amplitude))
}
