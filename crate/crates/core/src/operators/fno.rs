use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{check_input, uniform, NeuralOperator};
use crate::error::{invalid, Result};
use crate::tensor::{Bindings, ModeSet, ParamId, ParamStore, Real, Tape, Tensor, Var};

#[derive(Clone, Debug, PartialEq)]
pub struct FnoConfig {
    pub in_channels: usize,
    /// Hidden width `d_v`.
    pub width: usize,
    /// Rows `0..m1` and `H-m1..H`, columns `0..m2` of the half-spectrum.
    pub modes: ModeSet,
    pub layers: usize,
    /// Hidden width of the two-layer pointwise projection; 0 projects
    /// linearly.
    pub proj_width: usize,
}

impl Default for FnoConfig {
    fn default() -> Self {
        Self {
            in_channels: 2,
            width: 32,
            modes: ModeSet::new(12, 12),
            layers: 4,
            proj_width: 128,
        }
    }
}

impl FnoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.width == 0 || self.modes.m1 == 0 || self.modes.m2 == 0 {
            return invalid(format!("FNO config has a zero extent: {self:?}"));
        }
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        let (c, d) = (self.in_channels, self.width);
        let lift = d * c + d;
        let layer = 2 * self.modes.rows() * self.modes.m2 * d * d + d * d + d;
        let proj = if self.proj_width == 0 {
            d + 1
        } else {
            let q = self.proj_width;
            q * d + q + q + 1
        };
        lift + self.layers * layer + proj
    }
}

#[derive(Clone, Debug)]
struct LayerIds {
    spec_re: ParamId,
    spec_im: ParamId,
    weight: ParamId,
    bias: ParamId,
}

/// Fourier neural operator: pointwise lift, Fourier layers
/// `σ(W v + F⁻¹(R · F v))`, pointwise projection.
#[derive(Clone, Debug)]
pub struct Fno<T> {
    config: FnoConfig,
    params: ParamStore<T>,
    lift: (ParamId, ParamId),
    layers: Vec<LayerIds>,
    proj: Vec<(ParamId, ParamId)>,
}

/// `F⁻¹(R · F v)` over the retained modes; `wre`/`wim` are `[2*m1, m2, C, C']`.
pub fn spectral_conv<T: Real>(tape: &mut Tape<T>, v: Var, wre: Var, wim: Var, modes: ModeSet) -> Result<Var> {
    let s = tape.value(v).shape();
    let hw = (s[1], s[2]);
    let spec = tape.truncated_dft(v, modes)?;
    let mixed = tape.mode_mix(spec, wre, wim)?;
    tape.truncated_idft(mixed, modes, hw)
}

/// One Fourier layer, `σ(W v + b + spectral_conv(v))`, without `σ` when
/// `activate` is false.
#[allow(clippy::too_many_arguments)]
pub fn fourier_layer<T: Real>(
    tape: &mut Tape<T>,
    v: Var,
    wre: Var,
    wim: Var,
    weight: Var,
    bias: Var,
    modes: ModeSet,
    activate: bool,
) -> Result<Var> {
    let spectral = spectral_conv(tape, v, wre, wim, modes)?;
    let local = tape.pointwise_linear(v, weight, Some(bias))?;
    let sum = tape.add(spectral, local)?;
    Ok(if activate { tape.gelu(sum) } else { sum })
}

impl<T: Real> Fno<T> {
    pub fn new(config: FnoConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let (c, d) = (config.in_channels, config.width);
        let fan = |n: usize| 1.0 / (n as f64).sqrt();
        let lift = (
            params.add("lift.weight", uniform(&[d, c], fan(c), &mut rng)),
            params.add("lift.bias", Tensor::zeros(&[d])),
        );
        let (rows, m2) = (config.modes.rows(), config.modes.m2);
        let mut layers = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let spec_scale = 1.0 / d as f64;
            layers.push(LayerIds {
                spec_re: params.add(format!("layer{l}.spectral_re"), uniform(&[rows, m2, d, d], spec_scale, &mut rng)),
                spec_im: params.add(format!("layer{l}.spectral_im"), uniform(&[rows, m2, d, d], spec_scale, &mut rng)),
                weight: params.add(format!("layer{l}.weight"), uniform(&[d, d], fan(d), &mut rng)),
                bias: params.add(format!("layer{l}.bias"), Tensor::zeros(&[d])),
            });
        }
        let proj = if config.proj_width == 0 {
            vec![(
                params.add("proj.weight", uniform(&[1, d], fan(d), &mut rng)),
                params.add("proj.bias", Tensor::zeros(&[1])),
            )]
        } else {
            let q = config.proj_width;
            vec![
                (
                    params.add("proj1.weight", uniform(&[q, d], fan(d), &mut rng)),
                    params.add("proj1.bias", Tensor::zeros(&[q])),
                ),
                (
                    params.add("proj2.weight", uniform(&[1, q], fan(q), &mut rng)),
                    params.add("proj2.bias", Tensor::zeros(&[1])),
                ),
            ]
        };
        debug_assert_eq!(params.num_scalars(), config.parameter_count());
        Ok(Self {
            config,
            params,
            lift,
            layers,
            proj,
        })
    }

    pub fn config(&self) -> &FnoConfig {
        &self.config
    }
}

impl<T: Real> NeuralOperator<T> for Fno<T> {
    fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    fn in_channels(&self) -> usize {
        self.config.in_channels
    }

    fn forward_on(&self, tape: &mut Tape<T>, bound: &Bindings, x: Var) -> Result<Var> {
        let (h, w) = check_input(tape, x, self.config.in_channels)?;
        self.config.modes.validate(h, w)?;
        let mut v = tape.pointwise_linear(x, bound.var(self.lift.0), Some(bound.var(self.lift.1)))?;
        for (l, ids) in self.layers.iter().enumerate() {
            v = fourier_layer(
                tape,
                v,
                bound.var(ids.spec_re),
                bound.var(ids.spec_im),
                bound.var(ids.weight),
                bound.var(ids.bias),
                self.config.modes,
                l + 1 < self.layers.len(),
            )?;
        }
        for (i, &(wid, bid)) in self.proj.iter().enumerate() {
            v = tape.pointwise_linear(v, bound.var(wid), Some(bound.var(bid)))?;
            if i + 1 < self.proj.len() {
                v = tape.gelu(v);
            }
        }
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::rfft2;
    use rand::Rng;
    use std::f64::consts::PI;

    fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
    }

    /// Real field made of the listed `(k1, k2, phase)` waves plus a constant.
    fn waves(c: usize, h: usize, w: usize, list: &[(i64, i64, f64)]) -> Tensor<f64> {
        Tensor::from_fn(&[c, h, w], |idx| {
            let (ch, y, x) = (idx / (h * w), (idx / w) % h, idx % w);
            let mut v = 0.3 * (ch as f64 + 1.0);
            for &(k1, k2, ph) in list {
                v += (2.0 * PI * (k1 as f64 * y as f64 / h as f64 + k2 as f64 * x as f64 / w as f64) + ph + ch as f64).cos();
            }
            v
        })
    }

    fn identity_weights(modes: ModeSet, d: usize, scale_dc: f64) -> (Tensor<f64>, Tensor<f64>) {
        let mut re = Tensor::zeros(&[modes.rows(), modes.m2, d, d]);
        for m in 0..modes.rows() * modes.m2 {
            for i in 0..d {
                re.data_mut()[m * d * d + i * d + i] = if m == 0 { scale_dc } else { 1.0 };
            }
        }
        (re, Tensor::zeros(&[modes.rows(), modes.m2, d, d]))
    }

    fn apply(x: &Tensor<f64>, re: &Tensor<f64>, im: &Tensor<f64>, modes: ModeSet) -> Tensor<f64> {
        let mut t = Tape::new();
        let (xv, rv, iv) = (t.constant(x.clone()), t.constant(re.clone()), t.constant(im.clone()));
        let y = spectral_conv(&mut t, xv, rv, iv, modes).unwrap();
        t.value(y).clone()
    }

    #[test]
    fn identity_weights_pass_band_limited_input() {
        let modes = ModeSet::new(3, 3);
        let x = waves(2, 8, 8, &[(1, 2, 0.1), (-2, 1, 0.7), (2, 0, 0.2)]);
        let (re, im) = identity_weights(modes, 2, 1.0);
        let y = apply(&x, &re, &im, modes);
        for (a, b) in x.data().iter().zip(y.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn scaled_dc_mode_scales_constants() {
        let modes = ModeSet::new(2, 2);
        let x = Tensor::full(&[3, 8, 8], 1.25);
        let (mut re, im) = identity_weights(modes, 3, 2.5);
        // Other modes are irrelevant for a constant input.
        for v in re.data_mut()[9..].iter_mut() {
            *v = 7.0;
        }
        let y = apply(&x, &re, &im, modes);
        assert!(y.data().iter().all(|&v| (v - 2.5 * 1.25).abs() < 1e-12));
    }

    #[test]
    fn cyclic_shift_commutes() {
        let (h, w, d) = (8, 8, 2);
        let modes = ModeSet::new(3, 4);
        let x = random(&[d, h, w], 1);
        let mut re = Tensor::zeros(&[modes.rows(), modes.m2, d, d]);
        let mut im = Tensor::zeros(&[modes.rows(), modes.m2, d, d]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for m in 0..modes.rows() * modes.m2 {
            for i in 0..d {
                re.data_mut()[m * d * d + i * d + i] = rng.random_range(-1.0..1.0);
                im.data_mut()[m * d * d + i * d + i] = rng.random_range(-1.0..1.0);
            }
        }
        let roll = |t: &Tensor<f64>| {
            Tensor::from_fn(&[d, h, w], |idx| {
                let (c, y, xx) = (idx / (h * w), (idx / w) % h, idx % w);
                t.data()[c * h * w + ((y + h - 1) % h) * w + (xx + w - 2) % w]
            })
        };
        let a = apply(&roll(&x), &re, &im, modes);
        let b = roll(&apply(&x, &re, &im, modes));
        for (p, q) in a.data().iter().zip(b.data()) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn output_energy_stays_in_retained_modes() {
        let (h, w, d) = (12, 10, 3);
        let modes = ModeSet::new(3, 2);
        let x = random(&[d, h, w], 3);
        let re = random(&[modes.rows(), modes.m2, d, d], 4);
        let im = random(&[modes.rows(), modes.m2, d, d], 5);
        let y = apply(&x, &re, &im, modes);
        let spec = rfft2(&y).unwrap();
        let w2 = w / 2 + 1;
        let kept = |k1: usize, k2: usize| {
            let row = |k: usize| k < modes.m1 || k + modes.m1 >= h;
            // Real columns also carry the conjugates of retained rows.
            k2 < modes.m2 && (row(k1) || ((k2 == 0 || 2 * k2 == w) && row((h - k1) % h)))
        };
        let total: f64 = spec.data().iter().map(|v| v * v).sum();
        for c in 0..d {
            for k1 in 0..h {
                for k2 in 0..w2 {
                    if !kept(k1, k2) {
                        let o = ((c * h + k1) * w2 + k2) * 2;
                        let e = spec.data()[o].powi(2) + spec.data()[o + 1].powi(2);
                        assert!(e <= 1e-24 * total, "energy {e} at ({k1}, {k2})");
                    }
                }
            }
        }
    }

    #[test]
    fn spectral_conv_is_linear() {
        let modes = ModeSet::new(2, 3);
        let (x, z) = (random(&[2, 8, 6], 6), random(&[2, 8, 6], 7));
        let re = random(&[4, 3, 2, 2], 8);
        let im = random(&[4, 3, 2, 2], 9);
        let comb = Tensor::from_fn(x.shape(), |i| 2.0 * x.data()[i] - 0.5 * z.data()[i]);
        let (yx, yz, yc) = (apply(&x, &re, &im, modes), apply(&z, &re, &im, modes), apply(&comb, &re, &im, modes));
        for i in 0..yc.len() {
            assert!((yc.data()[i] - (2.0 * yx.data()[i] - 0.5 * yz.data()[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn weights_transfer_across_resolutions() {
        let modes = ModeSet::new(3, 3);
        let list = [(1, 1, 0.4), (-2, 2, 1.1), (0, 1, 0.0)];
        let (coarse, fine) = (waves(2, 16, 16, &list), waves(2, 32, 32, &list));
        let re = random(&[6, 3, 2, 2], 10);
        let im = random(&[6, 3, 2, 2], 11);
        let (yc, yf) = (apply(&coarse, &re, &im, modes), apply(&fine, &re, &im, modes));
        for c in 0..2 {
            for y in 0..16 {
                for x in 0..16 {
                    let a = yc.data()[(c * 16 + y) * 16 + x];
                    let b = yf.data()[(c * 32 + 2 * y) * 32 + 2 * x];
                    assert!((a - b).abs() < 1e-8, "({c},{y},{x}): {a} vs {b}");
                }
            }
        }
        let model = Fno::<f64>::new(FnoConfig { width: 4, modes, layers: 2, proj_width: 8, ..Default::default() }, 0).unwrap();
        assert_eq!(model.forward(&coarse).unwrap().shape(), &[1, 16, 16]);
        assert_eq!(model.forward(&fine).unwrap().shape(), &[1, 32, 32]);
    }

    #[test]
    fn desk_parameter_count() {
        let cfg = FnoConfig::default();
        // lift 32*2+32, four layers of 2*24*12*32*32 + 32*32 + 32,
        // projection 128*32+128 + 128+1.
        assert_eq!(cfg.parameter_count(), 96 + 4 * 590_880 + 4_353);
        let model = Fno::<f32>::new(cfg.clone(), 1).unwrap();
        assert_eq!(model.params().num_scalars(), cfg.parameter_count());
        let linear = FnoConfig { proj_width: 0, layers: 1, ..cfg };
        assert_eq!(Fno::<f32>::new(linear.clone(), 1).unwrap().params().num_scalars(), linear.parameter_count());
    }

    #[test]
    fn zero_parameters_give_projection_bias() {
        let mut model = Fno::<f64>::new(FnoConfig { width: 4, modes: ModeSet::new(2, 2), layers: 2, proj_width: 6, ..Default::default() }, 3).unwrap();
        let ids: Vec<_> = model.params().ids().collect();
        for id in ids {
            let shape = model.params().value(id).shape().to_vec();
            let name = model.params().get(id).name.clone();
            let v = if name == "proj2.bias" { Tensor::full(&shape, 0.7) } else { Tensor::zeros(&shape) };
            model.params_mut().set_value(id, v).unwrap();
        }
        let y = model.forward(&random(&[2, 8, 8], 12)).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.7));
    }

    #[test]
    fn zero_layer_weights_give_activated_bias() {
        let mut t = Tape::<f64>::new();
        let modes = ModeSet::new(2, 2);
        let v = t.constant(random(&[3, 8, 8], 13));
        let re = t.constant(Tensor::zeros(&[4, 2, 3, 3]));
        let im = t.constant(Tensor::zeros(&[4, 2, 3, 3]));
        let w = t.constant(Tensor::zeros(&[3, 3]));
        let b = t.constant(Tensor::new(&[3], vec![-1.0, 0.0, 2.0]).unwrap());
        let y = fourier_layer(&mut t, v, re, im, w, b, modes, true).unwrap();
        let out = t.value(y);
        assert_eq!(out.shape(), &[3, 8, 8]);
        for (c, &bc) in [-1.0f64, 0.0, 2.0].iter().enumerate() {
            assert!(out.data()[c * 64..(c + 1) * 64].iter().all(|&o| (o - crate::tensor::gelu(bc)).abs() < 1e-15));
        }
    }

    #[test]
    fn identity_lift_copies_input() {
        let mut t = Tape::<f64>::new();
        let x = random(&[2, 4, 4], 14);
        let xv = t.constant(x.clone());
        let p = t.constant(Tensor::new(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let b = t.constant(Tensor::zeros(&[2]));
        let v0 = t.pointwise_linear(xv, p, Some(b)).unwrap();
        assert_eq!(t.value(v0), &x);
    }

    #[test]
    fn mode_bounds_are_checked() {
        let model = Fno::<f64>::new(FnoConfig { width: 2, modes: ModeSet::new(5, 3), layers: 1, proj_width: 0, ..Default::default() }, 0).unwrap();
        assert!(model.forward(&random(&[2, 8, 8], 0)).is_err());
        assert!(model.forward(&random(&[2, 10, 8], 0)).is_ok());
    }
}
