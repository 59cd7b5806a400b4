use crate::error::{invalid, Result};

/// Scalar z-score statistics for one field.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldStats {
    pub mean: f64,
    pub std: f64,
    /// Apply `ln(1 + x)` before the z-score.
    pub log1p: bool,
}

impl FieldStats {
    /// Statistics of `values` (population standard deviation). A constant
    /// field yields the identity transform.
    pub fn fit(values: impl IntoIterator<Item = f64>, log1p: bool) -> Result<Self> {
        let (mut n, mut sum, mut sq) = (0usize, 0.0, 0.0);
        for v in values {
            let v = if log1p { v.ln_1p() } else { v };
            n += 1;
            sum += v;
            sq += v * v;
        }
        if n == 0 {
            return invalid("normalization statistics need at least one value".to_string());
        }
        let mean = sum / n as f64;
        let var = (sq / n as f64 - mean * mean).max(0.0);
        let std = var.sqrt();
        if std <= 1e-12 * mean.abs().max(1.0) {
            log::warn!("field is constant (mean {mean}); normalization falls back to the identity");
            return Ok(Self::identity());
        }
        Ok(Self { mean, std, log1p })
    }

    pub fn identity() -> Self {
        Self {
            mean: 0.0,
            std: 1.0,
            log1p: false,
        }
    }

    pub fn normalize(&self, x: f64) -> f64 {
        let v = if self.log1p { x.ln_1p() } else { x };
        (v - self.mean) / self.std
    }

    pub fn denormalize(&self, z: f64) -> f64 {
        let v = z * self.std + self.mean;
        if self.log1p {
            v.exp_m1()
        } else {
            v
        }
    }
}

/// Normalization for the permeability input and both targets.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormStats {
    pub k: FieldStats,
    pub p: FieldStats,
    pub sw: FieldStats,
}
