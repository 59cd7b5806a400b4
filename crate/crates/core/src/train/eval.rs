use std::time::Instant;

use super::loss::rel_l2;
use super::surrogate::Surrogate;
use crate::data::{DatasetBundle, Target};
use crate::error::{invalid, Result};
use crate::reservoir::{run_simulation, ReservoirConfig};
use crate::tensor::{Real, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    /// Mean relative L2 over every evaluated sample and day.
    pub mean_rel_l2: f64,
    /// Mean relative L2 per day `0..=T`.
    pub per_timestep: Vec<f64>,
    /// Prediction wall-clock seconds per full time series, one per sample.
    pub seconds_per_sample: Vec<f64>,
}

impl EvalReport {
    pub fn mean_seconds(&self) -> f64 {
        self.seconds_per_sample.iter().sum::<f64>() / self.seconds_per_sample.len().max(1) as f64
    }
}

/// Scores an arbitrary predictor against the physical ground truth of
/// `target`. `predict(sample, day)` returns a flattened `nx * nz` snapshot.
pub fn evaluate_with(
    data: &DatasetBundle,
    samples: &[usize],
    target: Target,
    mut predict: impl FnMut(usize, usize) -> Result<Vec<f64>>,
) -> Result<EvalReport> {
    if samples.is_empty() {
        return invalid("nothing to evaluate");
    }
    let days = data.snapshots();
    let mut per_timestep = vec![0.0; days];
    let mut seconds = Vec::with_capacity(samples.len());
    for &i in samples {
        let mut preds = Vec::with_capacity(days);
        let start = Instant::now();
        for day in 0..days {
            preds.push(predict(i, day)?);
        }
        seconds.push(start.elapsed().as_secs_f64());
        for (day, pred) in preds.iter().enumerate() {
            per_timestep[day] += rel_l2(pred, data.snapshot(target, i, day))?;
        }
    }
    per_timestep.iter_mut().for_each(|e| *e /= samples.len() as f64);
    let mean_rel_l2 = per_timestep.iter().sum::<f64>() / days as f64;
    Ok(EvalReport { mean_rel_l2, per_timestep, seconds_per_sample: seconds })
}

/// Physical-space relative L2 of the surrogate's predictions.
pub fn evaluate<T: Real>(sur: &Surrogate<T>, data: &DatasetBundle, samples: &[usize]) -> Result<EvalReport> {
    let mut k_cache: Option<(usize, Tensor<f64>)> = None;
    evaluate_with(data, samples, sur.target, |i, day| {
        if k_cache.as_ref().is_none_or(|(j, _)| *j != i) {
            k_cache = Some((i, data.k_field(i)));
        }
        let k = &k_cache.as_ref().expect("cached above").1;
        Ok(sur.predict(k, day as f64)?.into_data())
    })
}

/// Error of predicting the mean training value of `target` everywhere.
pub fn constant_mean_baseline(data: &DatasetBundle, train: &[usize], samples: &[usize], target: Target) -> Result<EvalReport> {
    let stats = data.norm_stats(train)?;
    let mean = match target {
        Target::P => stats.p.mean,
        Target::Sw => stats.sw.mean,
    };
    let plane = data.grid().0 * data.grid().1;
    evaluate_with(data, samples, target, |_, _| Ok(vec![mean; plane]))
}

/// A predictor that returns the ground truth; its error is zero.
pub fn oracle_report(data: &DatasetBundle, samples: &[usize], target: Target) -> Result<EvalReport> {
    evaluate_with(data, samples, target, |i, day| Ok(data.snapshot(target, i, day).to_vec()))
}

pub const PER_TIMESTEP_HEADER: &str = "day,mean_rel_l2";

pub fn per_timestep_csv(per_timestep: &[f64]) -> String {
    let mut out = format!("{PER_TIMESTEP_HEADER}\n");
    for (day, e) in per_timestep.iter().enumerate() {
        out.push_str(&format!("{day},{e:e}\n"));
    }
    out
}

pub const ROLLOUT_HEADER: &str = "day,mean_rel_l2,regime";

/// Rollout errors with each day marked `seen` up to and including the
/// training horizon and `unseen` after it.
pub fn rollout_csv(per_timestep: &[f64], horizon_days: usize) -> String {
    let mut out = format!("{ROLLOUT_HEADER}\n");
    for (day, e) in per_timestep.iter().enumerate() {
        let regime = if day <= horizon_days { "seen" } else { "unseen" };
        out.push_str(&format!("{day},{e:e},{regime}\n"));
    }
    out
}

/// Mean error over the seen and unseen parts of a rollout curve.
pub fn rollout_summary(per_timestep: &[f64], horizon_days: usize) -> (f64, f64) {
    let split = (horizon_days + 1).min(per_timestep.len());
    let mean = |s: &[f64]| if s.is_empty() { f64::NAN } else { s.iter().sum::<f64>() / s.len() as f64 };
    (mean(&per_timestep[..split]), mean(&per_timestep[split..]))
}

/// Re-simulates the listed samples of `data` over `days` days from their
/// recorded GRF draws. Days up to the original horizon reproduce the
/// stored snapshots.
pub fn extend_horizon(data: &DatasetBundle, samples: &[usize], days: usize) -> Result<DatasetBundle> {
    let mut cfg = data.config.clone();
    cfg.sim.total_days = days;
    cfg.n_samples = samples.len();
    let (nx, nz) = data.grid();
    let plane = nx * nz;
    let (mut k, mut p, mut sw) = (Vec::new(), Vec::new(), Vec::new());
    let mut draws = Vec::with_capacity(samples.len());
    for &i in samples {
        let draw = data.draws[i];
        let field = crate::grf::sample_permeability(&cfg.grf(), draw)?;
        let (series, _) = run_simulation(&field, &cfg.sim)?;
        draws.push(draw);
        k.extend_from_slice(&data.k.data()[i * plane..(i + 1) * plane]);
        p.extend(series.p.data().iter().map(|&v| v as f32 as f64));
        sw.extend(series.sw.data().iter().map(|&v| v as f32 as f64));
    }
    let n = samples.len();
    Ok(DatasetBundle {
        config: cfg,
        draws,
        k: Tensor::new(&[n, nx, nz], k)?,
        p: Tensor::new(&[n, days + 1, nx, nz], p)?,
        sw: Tensor::new(&[n, days + 1, nx, nz], sw)?,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Throughput {
    pub model_seconds: f64,
    pub simulator_seconds: f64,
    pub speedup: f64,
}

/// Wall-clock seconds per full time series for the surrogate and for the
/// simulator on the same permeability fields.
pub fn throughput_report<T: Real>(sur: &Surrogate<T>, data: &DatasetBundle, samples: &[usize], sim: &ReservoirConfig) -> Result<Throughput> {
    if samples.is_empty() {
        return invalid("throughput needs at least one sample");
    }
    let days = data.snapshots();
    let (mut model, mut simulator) = (0.0, 0.0);
    for &i in samples {
        let k = data.k_field(i);
        let start = Instant::now();
        for day in 0..days {
            std::hint::black_box(sur.predict(&k, day as f64)?);
        }
        model += start.elapsed().as_secs_f64();
        let start = Instant::now();
        std::hint::black_box(run_simulation(&k, sim)?);
        simulator += start.elapsed().as_secs_f64();
    }
    let n = samples.len() as f64;
    let (model_seconds, simulator_seconds) = (model / n, simulator / n);
    Ok(Throughput { model_seconds, simulator_seconds, speedup: simulator_seconds / model_seconds })
}
