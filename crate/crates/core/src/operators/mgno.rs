use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{check_input, uniform, NeuralOperator};
use crate::error::{invalid, shape_err, Result};
use crate::tensor::{Bindings, ParamId, ParamStore, Real, Tape, Tensor, Var};

#[derive(Clone, Debug, PartialEq)]
pub struct MgnoConfig {
    pub in_channels: usize,
    /// Hidden channels `n`.
    pub channels: usize,
    /// Hidden layers `L`.
    pub layers: usize,
    /// Multigrid levels `J`, finest included.
    pub levels: usize,
    /// Smoothing steps `ν` before and after each coarse correction.
    pub smoothing: usize,
}

impl Default for MgnoConfig {
    fn default() -> Self {
        Self {
            in_channels: 2,
            channels: 24,
            layers: 4,
            levels: 4,
            smoothing: 1,
        }
    }
}

impl MgnoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.channels == 0 || self.levels == 0 || self.smoothing == 0 {
            return invalid(format!("MgNO config has a zero extent: {self:?}"));
        }
        Ok(())
    }

    pub fn check_grid(&self, h: usize, w: usize) -> Result<()> {
        let f = 1usize << (self.levels - 1);
        if !h.is_multiple_of(f) || !w.is_multiple_of(f) {
            return shape_err(format!("{h}x{w} grid cannot be halved {} times", self.levels - 1));
        }
        Ok(())
    }

    fn layer_count(&self, cf: usize) -> usize {
        let cu = self.channels;
        let j = self.levels;
        j * 2 * 9 * cf * cu + (j - 1) * 9 * (cf * cf + cu * cu) + cu * cf + cu
    }

    pub fn parameter_count(&self) -> usize {
        let mut total = 0;
        let mut c = self.in_channels;
        for _ in 0..self.layers {
            total += self.layer_count(c);
            c = self.channels;
        }
        total + c + 1
    }
}

/// Kernels of one V-cycle level. `a: [Cf, Cu, 3, 3]` maps an iterate to
/// residual space, `s: [Cu, Cf, 3, 3]` smooths a residual into a
/// correction. Every level but the coarsest also has a stride-2
/// restriction `r: [Cf, Cf, 3, 3]` and a prolongation `p: [Cu, Cu, 3, 3]`
/// applied as a transposed stride-2 convolution.
#[derive(Clone, Copy, Debug)]
pub struct VcycleLevel {
    pub a: Var,
    pub s: Var,
    pub r: Option<Var>,
    pub p: Option<Var>,
}

fn smooth<T: Real>(tape: &mut Tape<T>, f: Var, u: Var, lv: &VcycleLevel) -> Result<Var> {
    let au = tape.conv2d(u, lv.a, 1, 1)?;
    let r = tape.sub(f, au)?;
    let c = tape.conv2d(r, lv.s, 1, 1)?;
    tape.add(u, c)
}

/// One V-cycle from a zero initial iterate, `u ≈ A⁻¹ f`, linear in `f`.
/// The coarsest level applies `nu` smoothing steps. Level extents halve:
/// `n -> n/2` for even `n`, `n -> (n-1)/2` for odd `n`.
pub fn vcycle_apply<T: Real>(tape: &mut Tape<T>, f: Var, levels: &[VcycleLevel], nu: usize) -> Result<Var> {
    let Some(lv) = levels.first() else {
        return invalid("V-cycle needs at least one level".to_string());
    };
    let s = tape.value(f).shape();
    if s.len() != 3 {
        return shape_err(format!("V-cycle input must be [C, H, W], got {s:?}"));
    }
    let hw = (s[1], s[2]);
    let mut u = tape.conv2d(f, lv.s, 1, 1)?;
    for _ in 1..nu.max(1) {
        u = smooth(tape, f, u, lv)?;
    }
    if levels.len() > 1 {
        let (Some(r), Some(p)) = (lv.r, lv.p) else {
            return invalid("non-coarsest V-cycle level lacks transfer kernels".to_string());
        };
        // Even extents keep coarse points on even fine indices; odd extents
        // 2^k - 1 put them on odd indices so both grids share the boundary.
        let pad = match (hw.0 % 2, hw.1 % 2) {
            (0, 0) => 1,
            (1, 1) if hw.0 >= 3 && hw.1 >= 3 => 0,
            _ => return shape_err(format!("cannot coarsen a {}x{} level", hw.0, hw.1)),
        };
        let au = tape.conv2d(u, lv.a, 1, 1)?;
        let res = tape.sub(f, au)?;
        let coarse = tape.conv2d(res, r, 2, pad)?;
        let e = vcycle_apply(tape, coarse, &levels[1..], nu)?;
        let fine = tape.conv2d_transpose(e, p, 2, pad, hw)?;
        u = tape.add(u, fine)?;
        for _ in 0..nu {
            u = smooth(tape, f, u, lv)?;
        }
    }
    Ok(u)
}

/// One MgNO layer, `σ(V h + B h + b)`.
pub fn mgno_layer<T: Real>(tape: &mut Tape<T>, h: Var, levels: &[VcycleLevel], weight: Var, bias: Var, nu: usize) -> Result<Var> {
    let mg = vcycle_apply(tape, h, levels, nu)?;
    let local = tape.pointwise_linear(h, weight, Some(bias))?;
    let sum = tape.add(mg, local)?;
    Ok(tape.gelu(sum))
}

#[derive(Clone, Debug)]
struct LevelIds {
    a: ParamId,
    s: ParamId,
    transfer: Option<(ParamId, ParamId)>,
}

#[derive(Clone, Debug)]
struct LayerIds {
    levels: Vec<LevelIds>,
    weight: ParamId,
    bias: ParamId,
}

/// Multigrid neural operator: layers `σ(V h + B h + b)` with a learned
/// multichannel V-cycle `V`, then a pointwise map to one channel.
#[derive(Clone, Debug)]
pub struct Mgno<T> {
    config: MgnoConfig,
    params: ParamStore<T>,
    layers: Vec<LayerIds>,
    out: (ParamId, ParamId),
}

impl<T: Real> Mgno<T> {
    pub fn new(config: MgnoConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let cu = config.channels;
        let fan = |n: usize| 1.0 / (n as f64).sqrt();
        let mut layers = Vec::with_capacity(config.layers);
        let mut cf = config.in_channels;
        for l in 0..config.layers {
            let mut levels = Vec::with_capacity(config.levels);
            for j in 0..config.levels {
                let a = params.add(format!("layer{l}.level{j}.A"), uniform(&[cf, cu, 3, 3], fan(9 * cu), &mut rng));
                let s = params.add(format!("layer{l}.level{j}.S"), uniform(&[cu, cf, 3, 3], fan(9 * cf), &mut rng));
                let transfer = (j + 1 < config.levels).then(|| {
                    (
                        params.add(format!("layer{l}.level{j}.R"), uniform(&[cf, cf, 3, 3], fan(9 * cf), &mut rng)),
                        params.add(format!("layer{l}.level{j}.P"), uniform(&[cu, cu, 3, 3], fan(9 * cu), &mut rng)),
                    )
                });
                levels.push(LevelIds { a, s, transfer });
            }
            let weight = params.add(format!("layer{l}.B.weight"), uniform(&[cu, cf], fan(cf), &mut rng));
            let bias = params.add(format!("layer{l}.B.bias"), Tensor::zeros(&[cu]));
            layers.push(LayerIds { levels, weight, bias });
            cf = cu;
        }
        let out = (
            params.add("out.weight", uniform(&[1, cf], fan(cf), &mut rng)),
            params.add("out.bias", Tensor::zeros(&[1])),
        );
        debug_assert_eq!(params.num_scalars(), config.parameter_count());
        Ok(Self {
            config,
            params,
            layers,
            out,
        })
    }

    pub fn config(&self) -> &MgnoConfig {
        &self.config
    }
}

impl<T: Real> NeuralOperator<T> for Mgno<T> {
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
        self.config.check_grid(h, w)?;
        let mut v = x;
        for ids in &self.layers {
            let levels: Vec<VcycleLevel> = ids
                .levels
                .iter()
                .map(|lv| VcycleLevel {
                    a: bound.var(lv.a),
                    s: bound.var(lv.s),
                    r: lv.transfer.map(|t| bound.var(t.0)),
                    p: lv.transfer.map(|t| bound.var(t.1)),
                })
                .collect();
            v = mgno_layer(tape, v, &levels, bound.var(ids.weight), bound.var(ids.bias), self.config.smoothing)?;
        }
        tape.pointwise_linear(v, bound.var(self.out.0), Some(bound.var(self.out.1)))
    }
}
