use crate::data::FieldStats;
use crate::error::{invalid, shape_err, Result};
use crate::tensor::{Real, Tensor};

/// Which channels a model input carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InputSpec {
    /// Append normalized `x` and `z` cell-centre coordinates.
    pub coordinates: bool,
}

impl InputSpec {
    pub fn channels(&self) -> usize {
        if self.coordinates {
            4
        } else {
            2
        }
    }
}

/// Stacks normalized permeability, the constant time channel `t / t_max`
/// and, optionally, coordinates into `[C, nx, nz]`. Times past `t_max`
/// are allowed.
pub fn make_input<T: Real>(k: &Tensor<f64>, t: f64, t_max: f64, stats: &FieldStats, spec: InputSpec) -> Result<Tensor<T>> {
    if k.ndim() != 2 {
        return shape_err(format!("permeability must be [nx, nz], got {:?}", k.shape()));
    }
    if !(t >= 0.0 && t_max > 0.0 && t.is_finite() && t_max.is_finite()) {
        return invalid(format!("time {t} with horizon {t_max}"));
    }
    let (nx, nz) = (k.shape()[0], k.shape()[1]);
    let n = nx * nz;
    let mut data = Vec::with_capacity(spec.channels() * n);
    data.extend(k.data().iter().map(|&v| T::of(stats.normalize(v))));
    data.extend(std::iter::repeat_n(T::of(t / t_max), n));
    if spec.coordinates {
        data.extend((0..n).map(|c| T::of(((c / nz) as f64 + 0.5) / nx as f64)));
        data.extend((0..n).map(|c| T::of(((c % nz) as f64 + 0.5) / nz as f64)));
    }
    Tensor::new(&[spec.channels(), nx, nz], data)
}
