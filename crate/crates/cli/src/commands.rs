use std::path::Path;

use mgflow::data::{
    build_dataset, load_checkpoint, read_checkpoint_manifest, save_checkpoint, DatasetBundle, Manifest, Split, Target,
};
use mgflow::operators::ModelConfig;
use mgflow::train::{
    constant_mean_baseline, evaluate, extend_horizon, init_surrogate, metrics_csv, oracle_report,
    per_timestep_csv, rollout_csv, rollout_summary, train as train_model, EvalReport, MetricsRecord, Surrogate, TrainConfig,
};
use mgflow::Real;

use crate::settings::Settings;
use crate::{pgm, CliError, Common};

fn usage(e: mgflow::Error) -> CliError {
    CliError::Usage(e.to_string())
}

fn load_dataset(dir: &Path) -> Result<DatasetBundle, CliError> {
    if !dir.join("manifest.txt").exists() {
        return Err(CliError::Runtime(format!("no dataset at {}", dir.display())));
    }
    DatasetBundle::read(dir).map_err(|e| CliError::Runtime(format!("dataset {}: {e}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

pub fn gen_data(common: &Common, flags: Vec<(String, String)>) -> Result<(), CliError> {
    let mut s = Settings::new(common.config.as_deref(), flags)?;
    // Datasets are always stored in single precision.
    s.get("precision", "f32".to_string())?;
    let cfg = s.dataset()?;
    s.finish()?;
    cfg.validate().map_err(usage)?;
    let grid = cfg.sim.nx;
    if grid % 8 != 0 {
        log::warn!("grid {grid} is not divisible by 8; multigrid models with four or more levels will reject it");
    }
    let (bundle, report) = build_dataset(&cfg)?;
    bundle.write(&common.out)?;
    let mut m = Manifest::read(common.out.join("manifest.txt"))?;
    m.set("command", "gen-data");
    m.write(common.out.join("manifest.txt"))?;
    println!(
        "wrote {} samples on a {grid}x{grid} grid over {} days to {} ({:.3} s/sample, {} resampled, worst water budget error {:.1e})",
        bundle.len(),
        cfg.sim.total_days,
        common.out.display(),
        report.seconds_per_sample(),
        report.resampled.len(),
        report.worst_budget_error()
    );
    Ok(())
}

pub fn train(common: &Common, data_dir: &Path, flags: Vec<(String, String)>) -> Result<(), CliError> {
    let mut s = Settings::new(common.config.as_deref(), flags)?;
    let precision: String = s.get("precision", "f32".to_string())?;
    let tcfg = s.train()?;
    let model = s.model(tcfg.input)?;
    s.echo("dataset", data_dir.display());
    s.echo("command", "train");
    let resolved = s.finish()?;
    tcfg.validate().map_err(usage)?;
    let data = load_dataset(data_dir)?;
    let (nx, nz) = data.grid();
    model
        .check_grid(nx, nz)
        .map_err(|e| CliError::Runtime(format!("{} cannot run on the {nx}x{nz} dataset grid: {e}", model.kind())))?;
    let split = Split::new(data.len(), tcfg.train_fraction, tcfg.seed)?;
    std::fs::create_dir_all(&common.out)?;
    match precision.as_str() {
        "f32" => train_in::<f32>(common, &data, &split, &tcfg, &model, &resolved),
        "f64" => train_in::<f64>(common, &data, &split, &tcfg, &model, &resolved),
        p => Err(CliError::Usage(format!("unknown precision {p:?}"))),
    }
}

fn train_in<T: Real>(
    common: &Common,
    data: &DatasetBundle,
    split: &Split,
    tcfg: &TrainConfig,
    model: &ModelConfig,
    resolved: &Manifest,
) -> Result<(), CliError> {
    let mut sur = init_surrogate::<T>(model, data, split, tcfg)?;
    println!(
        "training {} ({} parameters) on {} samples, validating on {}",
        model.kind(),
        model.parameter_count(),
        split.train.len(),
        split.val.len()
    );
    let metrics_path = common.out.join("metrics.csv");
    let mut seen: Vec<MetricsRecord> = Vec::new();
    let mut write_err = None;
    let records = train_model(&mut sur, data, split, tcfg, |r| {
        seen.push(r.clone());
        if let Err(e) = std::fs::write(&metrics_path, metrics_csv(&seen)) {
            write_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_err {
        return Err(CliError::Runtime(format!("{}: {e}", metrics_path.display())));
    }
    let last = records.last().expect("at least one epoch");

    let mut extra = Manifest::new();
    for (k, v) in resolved.entries() {
        extra.set(&format!("run.{k}"), v);
    }
    extra.set("run.grid", data.grid().0);
    save_checkpoint(&sur, common.out.join("checkpoint"), &extra)?;
    write_text(&common.out.join("per_timestep.csv"), &per_timestep_csv(&last.per_timestep))?;
    resolved.write(common.out.join("manifest.txt"))?;

    let baseline = constant_mean_baseline(data, &split.train, &split.val, tcfg.target)?;
    println!(
        "validation rel-L2 {:.4e} (constant-mean baseline {:.4e}); {:.4} s per series; checkpoint in {}",
        last.val_rel_l2,
        baseline.mean_rel_l2,
        last.inference_seconds,
        common.out.join("checkpoint").display()
    );
    Ok(())
}

/// A checkpoint ready to predict, or the ground-truth stub used to check
/// the evaluation plumbing.
enum Predictor {
    F32(Surrogate<f32>),
    F64(Surrogate<f64>),
    Oracle { target: Target, horizon: f64 },
}

impl Predictor {
    fn load(dir: &Path) -> Result<(Self, Manifest), CliError> {
        let m = read_checkpoint_manifest(dir)?;
        let p = match (m.require("model")?, m.get("precision")) {
            ("oracle", _) => Predictor::Oracle {
                target: m.require("target")?.parse()?,
                horizon: m.parse_value("horizon_days")?,
            },
            (_, Some("f64")) => Predictor::F64(load_checkpoint(dir)?),
            _ => Predictor::F32(load_checkpoint(dir)?),
        };
        Ok((p, m))
    }

    fn target(&self) -> Target {
        match self {
            Predictor::F32(s) => s.target,
            Predictor::F64(s) => s.target,
            Predictor::Oracle { target, .. } => *target,
        }
    }

    fn horizon(&self) -> f64 {
        match self {
            Predictor::F32(s) => s.horizon_days,
            Predictor::F64(s) => s.horizon_days,
            Predictor::Oracle { horizon, .. } => *horizon,
        }
    }

    fn check_grid(&self, data: &DatasetBundle, m: &Manifest) -> Result<(), CliError> {
        let (nx, nz) = data.grid();
        if let Some(g) = m.get("run.grid") {
            if g != nx.to_string() || nx != nz {
                return Err(CliError::Runtime(format!("checkpoint was trained on a {g}x{g} grid; dataset is {nx}x{nz}")));
            }
        }
        let config = match self {
            Predictor::F32(s) => s.model.config(),
            Predictor::F64(s) => s.model.config(),
            Predictor::Oracle { .. } => return Ok(()),
        };
        config
            .check_grid(nx, nz)
            .map_err(|e| CliError::Runtime(format!("checkpoint does not fit the dataset grid: {e}")))
    }

    fn evaluate(&self, data: &DatasetBundle, samples: &[usize]) -> Result<EvalReport, CliError> {
        Ok(match self {
            Predictor::F32(s) => evaluate(s, data, samples)?,
            Predictor::F64(s) => evaluate(s, data, samples)?,
            Predictor::Oracle { target, .. } => oracle_report(data, samples, *target)?,
        })
    }

    fn predict(&self, data: &DatasetBundle, sample: usize, day: usize) -> Result<Vec<f64>, CliError> {
        let k = data.k_field(sample);
        Ok(match self {
            Predictor::F32(s) => s.predict(&k, day as f64)?.into_data(),
            Predictor::F64(s) => s.predict(&k, day as f64)?.into_data(),
            Predictor::Oracle { target, .. } => data.snapshot(*target, sample, day).to_vec(),
        })
    }
}

/// The validation samples of the run that produced the checkpoint.
fn validation_samples(m: &Manifest, n: usize) -> Result<Vec<usize>, CliError> {
    let fraction = m.get("run.train_fraction").map_or(Ok(0.8), |v| v.parse()).map_err(|_| CliError::Runtime("bad run.train_fraction".into()))?;
    let seed = m.get("run.seed").map_or(Ok(0), |v| v.parse()).map_err(|_| CliError::Runtime("bad run.seed".into()))?;
    let split = Split::new(n, fraction, seed)?;
    if split.val.is_empty() {
        return Err(CliError::Runtime(format!("the {n}-sample dataset has no validation samples under this split")));
    }
    Ok(split.val)
}

fn common_settings(common: &Common, flags: Vec<(String, String)>, command: &str) -> Result<Settings, CliError> {
    let mut s = Settings::new(common.config.as_deref(), flags)?;
    s.echo("command", command);
    Ok(s)
}

pub fn eval(
    common: &Common,
    checkpoint: &Path,
    data_dir: &Path,
    split: &str,
    heatmaps: usize,
    flags: Vec<(String, String)>,
) -> Result<(), CliError> {
    let mut s = common_settings(common, flags, "eval")?;
    s.get("seed", String::new())?;
    let precision: String = s.get("precision", String::new())?;
    s.echo("checkpoint", checkpoint.display());
    s.echo("dataset", data_dir.display());
    s.echo("split", split);
    s.echo("heatmaps", heatmaps);
    let resolved = s.finish()?;

    let (pred, m) = Predictor::load(checkpoint)?;
    if !precision.is_empty() && m.get("precision").is_some_and(|p| p != precision) {
        return Err(CliError::Runtime(format!("checkpoint precision is {}, not {precision}", m.require("precision")?)));
    }
    let data = load_dataset(data_dir)?;
    pred.check_grid(&data, &m)?;
    let samples = if split == "all" { (0..data.len()).collect() } else { validation_samples(&m, data.len())? };

    let report = pred.evaluate(&data, &samples)?;
    std::fs::create_dir_all(&common.out)?;
    write_text(&common.out.join("per_timestep.csv"), &per_timestep_csv(&report.per_timestep))?;
    resolved.write(common.out.join("manifest.txt"))?;

    let (nx, nz) = data.grid();
    let last = data.snapshots() - 1;
    if heatmaps > 0 {
        let dir = common.out.join("heatmaps");
        std::fs::create_dir_all(&dir)?;
        for &i in samples.iter().take(heatmaps) {
            let truth = data.snapshot(pred.target(), i, last);
            let guess = pred.predict(&data, i, last)?;
            let err: Vec<f64> = guess.iter().zip(truth).map(|(a, b)| (a - b).abs()).collect();
            let (lo, hi) = pgm::range(truth);
            let stem = format!("sample{i}_day{last}_{}", pred.target().name());
            pgm::write(&dir.join(format!("{stem}_pred.pgm")), &guess, nx, nz, lo, hi)?;
            pgm::write(&dir.join(format!("{stem}_truth.pgm")), truth, nx, nz, lo, hi)?;
            let (_, emax) = pgm::range(&err);
            pgm::write(&dir.join(format!("{stem}_abserr.pgm")), &err, nx, nz, 0.0, emax)?;
        }
    }
    let timing = format!(
        "samples: {}\nmean_rel_l2: {:e}\nseconds_per_series: {:e}\n",
        samples.len(),
        report.mean_rel_l2,
        report.mean_seconds()
    );
    write_text(&common.out.join("timing.txt"), &timing)?;
    println!(
        "mean rel-L2 {:.4e} over {} samples x {} days; {:.4} s per predicted series",
        report.mean_rel_l2,
        samples.len(),
        data.snapshots(),
        report.mean_seconds()
    );
    Ok(())
}

pub fn rollout(common: &Common, checkpoint: &Path, data_dir: &Path, flags: Vec<(String, String)>) -> Result<(), CliError> {
    let mut s = common_settings(common, flags, "rollout")?;
    let days: usize = s.get("days", 60)?;
    let limit: usize = s.get("samples", 0)?;
    s.get("seed", String::new())?;
    s.get("precision", String::new())?;
    s.echo("checkpoint", checkpoint.display());
    s.echo("dataset", data_dir.display());
    let resolved = s.finish()?;

    let (pred, m) = Predictor::load(checkpoint)?;
    let data = load_dataset(data_dir)?;
    pred.check_grid(&data, &m)?;
    let mut samples = validation_samples(&m, data.len())?;
    if limit > 0 {
        samples.truncate(limit);
    }
    let extended = extend_horizon(&data, &samples, days)?;
    let all: Vec<usize> = (0..samples.len()).collect();
    let report = pred.evaluate(&extended, &all)?;
    let horizon = pred.horizon().round() as usize;
    std::fs::create_dir_all(&common.out)?;
    write_text(&common.out.join("rollout.csv"), &rollout_csv(&report.per_timestep, horizon))?;
    resolved.write(common.out.join("manifest.txt"))?;
    let (seen, unseen) = rollout_summary(&report.per_timestep, horizon);
    println!(
        "rollout over {days} days on {} samples: mean rel-L2 {seen:.4e} on days 0..={horizon}, {unseen:.4e} beyond",
        samples.len()
    );
    Ok(())
}
