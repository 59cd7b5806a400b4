use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::adam::{adam_step, AdamConfig, AdamState};
use super::eval::evaluate;
use super::loss::{tape_loss, LossKind};
use super::surrogate::Surrogate;
use crate::data::{DatasetBundle, Split, Target};
use crate::error::{invalid, Error, Result};
use crate::operators::{InputSpec, Model, ModelConfig, NeuralOperator};
use crate::tensor::{ParamStore, Real, Tape, Tensor};

/// Whether the training loss compares normalized or physical fields.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossSpace {
    Normalized,
    Physical,
}

impl std::str::FromStr for LossSpace {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "normalized" => Ok(LossSpace::Normalized),
            "physical" => Ok(LossSpace::Physical),
            _ => invalid(format!("unknown loss space {s:?}; expected normalized or physical")),
        }
    }
}

impl LossSpace {
    pub fn name(self) -> &'static str {
        match self {
            LossSpace::Normalized => "normalized",
            LossSpace::Physical => "physical",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub loss: LossKind,
    pub loss_space: LossSpace,
    /// Share of samples used for training; 1600 of 2000 by default.
    pub train_fraction: f64,
    pub seed: u64,
    pub target: Target,
    pub input: InputSpec,
    /// Mirror each training pair top-to-bottom with probability 1/2. The
    /// flow problem has no gravity and full-column wells, so a mirrored
    /// permeability yields the mirrored solution.
    pub mirror_z: bool,
    /// Decay of an exponential moving average of the weights, updated after
    /// every step; 0 disables it. When set, validation and the returned
    /// surrogate use the averaged weights while steps continue from the raw ones.
    pub weight_average: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            batch_size: 50,
            adam: AdamConfig::default(),
            loss: LossKind::RelL2,
            loss_space: LossSpace::Normalized,
            train_fraction: 0.8,
            seed: 0,
            target: Target::P,
            input: InputSpec { coordinates: false },
            mirror_z: false,
            weight_average: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.adam.validate()?;
        if self.epochs == 0 || self.batch_size == 0 {
            return invalid("epochs and batch size must be positive");
        }
        if !(0.0..1.0).contains(&self.weight_average) {
            return invalid(format!("weight average decay must lie in [0, 1), got {}", self.weight_average));
        }
        Ok(())
    }
}

/// One `(sample, day)` supervised pair, optionally mirrored along z.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Pair {
    pub sample: usize,
    pub day: usize,
    pub mirror: bool,
}

/// Reverses the last axis of a row-major `[nx, nz]` plane.
fn mirror_z(values: &[f64], nz: usize) -> Vec<f64> {
    values.chunks(nz).flat_map(|row| row.iter().rev().copied()).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// Mean physical-space relative L2 over validation samples and days.
    pub val_rel_l2: f64,
    /// Mean validation relative L2 per day `0..=T`.
    pub per_timestep: Vec<f64>,
    /// Wall-clock seconds of the epoch, validation included.
    pub seconds: f64,
    /// Forward-pass seconds per full validation time series.
    pub inference_seconds: f64,
}

pub const METRICS_HEADER: &str = "epoch,train_loss,val_rel_l2,seconds";

pub fn metrics_csv(records: &[MetricsRecord]) -> String {
    let mut out = format!("{METRICS_HEADER}\n");
    for r in records {
        out.push_str(&format!("{},{:e},{:e},{:.3}\n", r.epoch, r.train_loss, r.val_rel_l2, r.seconds));
    }
    out
}

/// Builds a freshly initialized surrogate whose normalization comes from
/// the training split.
pub fn init_surrogate<T: Real>(
    config: &ModelConfig,
    data: &DatasetBundle,
    split: &Split,
    cfg: &TrainConfig,
) -> Result<Surrogate<T>> {
    let (nx, nz) = data.grid();
    config.check_grid(nx, nz)?;
    let stats = data.norm_stats(&split.train)?;
    let model = Model::new(config, cfg.seed)?;
    let horizon = (data.snapshots() - 1).max(1) as f64;
    Surrogate::new(model, stats, cfg.target, horizon, cfg.input)
}

/// Adds the gradient of one pair's loss, scaled by `scale`, to the
/// parameter gradients and returns the loss.
fn accumulate_pair<T: Real>(sur: &mut Surrogate<T>, data: &DatasetBundle, pair: Pair, cfg: &TrainConfig, scale: f64) -> Result<f64> {
    let (nx, nz) = data.grid();
    let mut truth = data.snapshot(cfg.target, pair.sample, pair.day).to_vec();
    let mut k = data.k_field(pair.sample);
    if pair.mirror {
        truth = mirror_z(&truth, nz);
        k = Tensor::new(&[nx, nz], mirror_z(k.data(), nz))?;
    }
    let mut tape = Tape::new();
    let (pred, bound) = sur.forward_on(&mut tape, &k, pair.day as f64)?;
    let stats = sur.target_stats();
    let (pred, target) = match cfg.loss_space {
        LossSpace::Normalized => (pred, Tensor::from_fn(&[1, nx, nz], |i| T::of(stats.normalize(truth[i])))),
        LossSpace::Physical => {
            let scaled = tape.scale(pred, T::of(stats.std));
            let phys = tape.add_scalar(scaled, T::of(stats.mean));
            (phys, Tensor::from_fn(&[1, nx, nz], |i| T::of(truth[i])))
        }
    };
    let loss = tape_loss(&mut tape, cfg.loss, pred, &target, 1.0 / nx as f64)?;
    let value = tape.value(loss).item()?.as_f64();
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("training loss {value} on sample {} day {}", pair.sample, pair.day)));
    }
    let grads = tape.backward(loss)?;
    sur.model.params_mut().accumulate(&bound, &grads, T::of(scale));
    Ok(value)
}

/// One optimizer step on the mean loss of `batch`; returns that loss.
pub fn train_step<T: Real>(
    sur: &mut Surrogate<T>,
    state: &mut AdamState<T>,
    data: &DatasetBundle,
    batch: &[Pair],
    cfg: &TrainConfig,
) -> Result<f64> {
    if batch.is_empty() {
        return invalid("empty batch");
    }
    sur.model.params_mut().zero_grad();
    let scale = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    for &pair in batch {
        total += accumulate_pair(sur, data, pair, cfg, scale)?;
    }
    adam_step(sur.model.params_mut(), state, &cfg.adam);
    Ok(total * scale)
}

/// `avg ← d·avg + (1 - d)·θ` for every parameter.
fn update_average<T: Real>(avg: &mut [Tensor<T>], params: &ParamStore<T>, decay: f64) {
    let (d, e) = (T::of(decay), T::of(1.0 - decay));
    for (a, p) in avg.iter_mut().zip(params.iter()) {
        for (a, &th) in a.data_mut().iter_mut().zip(p.value.data()) {
            *a = d * *a + e * th;
        }
    }
}

fn swap_weights<T: Real>(avg: &mut [Tensor<T>], params: &mut ParamStore<T>) {
    for (a, p) in avg.iter_mut().zip(params.iter_mut()) {
        std::mem::swap(a, Arc::make_mut(&mut p.value));
    }
}

/// Every `(sample, day)` pair of the listed samples.
pub fn all_pairs(samples: &[usize], snapshots: usize) -> Vec<Pair> {
    samples.iter().flat_map(|&sample| (0..snapshots).map(move |day| Pair { sample, day, mirror: false })).collect()
}

/// Trains on the split's training pairs for `cfg.epochs` epochs, shuffling
/// pairs each epoch with a generator seeded from `cfg.seed`, and validates
/// after every epoch. `on_epoch` sees each record as it is produced.
pub fn train<T: Real>(
    sur: &mut Surrogate<T>,
    data: &DatasetBundle,
    split: &Split,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&MetricsRecord),
) -> Result<Vec<MetricsRecord>> {
    cfg.validate()?;
    if split.train.is_empty() {
        return invalid("empty training split");
    }
    if split.val.is_empty() {
        return invalid("empty validation split");
    }
    if sur.target != cfg.target {
        return invalid(format!("surrogate predicts {} but training targets {}", sur.target.name(), cfg.target.name()));
    }
    let mut pairs = all_pairs(&split.train, data.snapshots());
    if cfg.batch_size > pairs.len() {
        return invalid(format!("batch size {} exceeds the {} training pairs", cfg.batch_size, pairs.len()));
    }
    // Stream 0 of this seed initializes the model; shuffling uses stream 1.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut state = AdamState::new(sur.model.params());
    let mut average: Option<Vec<Tensor<T>>> =
        (cfg.weight_average > 0.0).then(|| sur.model.params().iter().map(|p| (*p.value).clone()).collect());
    let mut records = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        pairs.shuffle(&mut rng);
        if cfg.mirror_z {
            pairs.iter_mut().for_each(|p| p.mirror = rng.random_bool(0.5));
        }
        let mut sum = 0.0;
        for batch in pairs.chunks(cfg.batch_size) {
            sum += train_step(sur, &mut state, data, batch, cfg)? * batch.len() as f64;
            if let Some(avg) = average.as_mut() {
                update_average(avg, sur.model.params(), cfg.weight_average);
            }
        }
        let train_loss = sum / pairs.len() as f64;
        if let Some(avg) = average.as_mut() {
            swap_weights(avg, sur.model.params_mut());
        }
        let val = evaluate(sur, data, &split.val);
        // The averaged weights stay in place after the last epoch.
        if let Some(avg) = average.as_mut().filter(|_| epoch < cfg.epochs) {
            swap_weights(avg, sur.model.params_mut());
        }
        let val = val?;
        let record = MetricsRecord {
            epoch,
            train_loss,
            val_rel_l2: val.mean_rel_l2,
            inference_seconds: val.mean_seconds(),
            per_timestep: val.per_timestep,
            seconds: start.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: train {:.4e}, val rel-L2 {:.4e}, {:.1} s",
            record.train_loss,
            record.val_rel_l2,
            record.seconds
        );
        on_epoch(&record);
        records.push(record);
    }
    Ok(records)
}
