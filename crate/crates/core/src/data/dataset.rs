use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::manifest::Manifest;
use super::npy::{read_npy, write_npy};
use super::{FieldStats, NormStats};
use crate::error::{invalid, shape_err, Error, Result};
use crate::grf::{sample_permeability, GrfSpec};
use crate::reservoir::{run_simulation, ReservoirConfig, SimReport};
use crate::tensor::Tensor;

pub const DATASET_FORMAT: &str = "mgflow-dataset-1";

/// Which simulated field a model predicts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Target {
    P,
    Sw,
}

impl Target {
    pub fn name(self) -> &'static str {
        match self {
            Target::P => "p",
            Target::Sw => "sw",
        }
    }
}

impl std::str::FromStr for Target {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "p" | "pressure" => Ok(Target::P),
            "sw" | "s" | "saturation" => Ok(Target::Sw),
            _ => invalid(format!("unknown target {s:?}; expected p or sw")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetConfig {
    pub n_samples: usize,
    /// GRF jump amplitude.
    pub amplitude: f64,
    pub seed: u64,
    /// Grid, horizon and physics; the grid must be square.
    pub sim: ReservoirConfig,
    /// Extra draws tried for a sample whose simulation fails.
    pub max_resample: usize,
    /// Store K as `(N, T+1, nx, nz)` with the field repeated per day.
    pub repeat_k: bool,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            n_samples: 2000,
            amplitude: 10.0,
            seed: 0,
            sim: ReservoirConfig::default(),
            max_resample: 8,
            repeat_k: false,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        if self.n_samples == 0 {
            return invalid("dataset needs at least one sample");
        }
        if self.sim.nx != self.sim.nz {
            return invalid(format!("permeability fields are square; grid is {}x{}", self.sim.nx, self.sim.nz));
        }
        GrfSpec::new(self.sim.nx, self.amplitude, self.seed).map(|_| ())
    }

    pub fn grf(&self) -> GrfSpec {
        GrfSpec { n: self.sim.nx, amplitude: self.amplitude, seed: self.seed }
    }

    /// Draw index tried for `sample` on its `attempt`-th try. Retries skip
    /// by `n_samples` so they never collide with another sample's first draw.
    pub fn draw_index(&self, sample: usize, attempt: usize) -> u64 {
        (sample + attempt * self.n_samples) as u64
    }

    pub fn write_manifest(&self, m: &mut Manifest) {
        m.set("n_samples", self.n_samples);
        m.set("amplitude", self.amplitude);
        m.set("seed", self.seed);
        m.set("max_resample", self.max_resample);
        m.set("k_layout", if self.repeat_k { "repeated" } else { "canonical" });
        for (name, value) in self.sim.fields() {
            m.set(&format!("sim.{name}"), value);
        }
    }

    pub fn from_manifest(m: &Manifest) -> Result<Self> {
        let mut sim = ReservoirConfig::default();
        for name in ReservoirConfig::FIELDS {
            sim.set_field(name, m.require(&format!("sim.{name}"))?)?;
        }
        Ok(Self {
            n_samples: m.parse_value("n_samples")?,
            amplitude: m.parse_value("amplitude")?,
            seed: m.parse_value("seed")?,
            max_resample: m.parse_value("max_resample")?,
            repeat_k: m.require("k_layout")? == "repeated",
            sim,
        })
    }
}

/// Permeability fields and their simulated daily snapshots, held in
/// double precision but rounded to the single precision used on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetBundle {
    pub config: DatasetConfig,
    /// GRF draw index behind each sample.
    pub draws: Vec<u64>,
    /// `[N, nx, nz]`.
    pub k: Tensor<f64>,
    /// `[N, T+1, nx, nz]`.
    pub p: Tensor<f64>,
    /// `[N, T+1, nx, nz]`.
    pub sw: Tensor<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResampleEvent {
    pub sample: usize,
    pub failed_draw: u64,
    pub error: String,
}

#[derive(Clone, Debug)]
pub struct BuildReport {
    /// One report per kept simulation, in sample order.
    pub sims: Vec<SimReport>,
    pub resampled: Vec<ResampleEvent>,
    pub seconds: f64,
}

impl BuildReport {
    pub fn seconds_per_sample(&self) -> f64 {
        self.seconds / self.sims.len().max(1) as f64
    }

    pub fn worst_budget_error(&self) -> f64 {
        self.sims.iter().map(|r| r.budget_error).fold(0.0, f64::max)
    }
}

fn round_f32(v: f64) -> f64 {
    v as f32 as f64
}

struct SampleResult {
    draw: u64,
    k: Vec<f64>,
    p: Vec<f64>,
    sw: Vec<f64>,
    report: SimReport,
    failures: Vec<ResampleEvent>,
}

fn simulate_sample(cfg: &DatasetConfig, sample: usize) -> Result<SampleResult> {
    let mut failures = Vec::new();
    for attempt in 0..=cfg.max_resample {
        let draw = cfg.draw_index(sample, attempt);
        let k = sample_permeability(&cfg.grf(), draw)?;
        match run_simulation(&k, &cfg.sim) {
            Ok((series, report)) => {
                return Ok(SampleResult {
                    draw,
                    k: k.into_data(),
                    p: series.p.into_data(),
                    sw: series.sw.into_data(),
                    report,
                    failures,
                })
            }
            Err(e) => {
                log::warn!("sample {sample}: simulation of draw {draw} failed ({e}); resampling");
                failures.push(ResampleEvent { sample, failed_draw: draw, error: e.to_string() });
            }
        }
    }
    Err(Error::NoConvergence(format!(
        "sample {sample}: {} consecutive draws failed to simulate",
        cfg.max_resample + 1
    )))
}

/// Samples `n_samples` permeability fields and simulates each one. Sample
/// `i` depends only on `(seed, i)` and the physics, so the bundle is
/// reproducible and any sample can be regenerated on its own.
pub fn build_dataset(cfg: &DatasetConfig) -> Result<(DatasetBundle, BuildReport)> {
    cfg.validate()?;
    let start = Instant::now();
    let n = cfg.n_samples;
    let workers = std::thread::available_parallelism().map_or(1, |w| w.get()).min(n);
    let mut results: Vec<Option<Result<SampleResult>>> = (0..n).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                scope.spawn(move || {
                    (w..n)
                        .step_by(workers)
                        .map(|i| (i, simulate_sample(cfg, i)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("dataset worker panicked") {
                results[i] = Some(r);
            }
        }
    });

    let (nx, nz, days) = (cfg.sim.nx, cfg.sim.nz, cfg.sim.total_days);
    let mut draws = Vec::with_capacity(n);
    let mut k = Vec::with_capacity(n * nx * nz);
    let mut p = Vec::with_capacity(n * (days + 1) * nx * nz);
    let mut sw = Vec::with_capacity(p.capacity());
    let mut sims = Vec::with_capacity(n);
    let mut resampled = Vec::new();
    for r in results {
        let r = r.expect("every sample is assigned to a worker")?;
        draws.push(r.draw);
        k.extend(r.k.into_iter().map(round_f32));
        p.extend(r.p.into_iter().map(round_f32));
        sw.extend(r.sw.into_iter().map(round_f32));
        sims.push(r.report);
        resampled.extend(r.failures);
    }
    let bundle = DatasetBundle {
        config: cfg.clone(),
        draws,
        k: Tensor::new(&[n, nx, nz], k)?,
        p: Tensor::new(&[n, days + 1, nx, nz], p)?,
        sw: Tensor::new(&[n, days + 1, nx, nz], sw)?,
    };
    let report = BuildReport { sims, resampled, seconds: start.elapsed().as_secs_f64() };
    Ok((bundle, report))
}

impl DatasetBundle {
    pub fn len(&self) -> usize {
        self.k.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.k.shape()[1], self.k.shape()[2])
    }

    /// Number of daily snapshots, `T + 1`.
    pub fn snapshots(&self) -> usize {
        self.p.shape()[1]
    }

    /// Permeability of sample `i` as `[nx, nz]`.
    pub fn k_field(&self, i: usize) -> Tensor<f64> {
        self.k.slice0(i).expect("sample index in range")
    }

    /// Snapshot of `target` for sample `i` on `day`, flattened `nx * nz`.
    pub fn snapshot(&self, target: Target, i: usize, day: usize) -> &[f64] {
        let (nx, nz) = self.grid();
        let plane = nx * nz;
        let at = (i * self.snapshots() + day) * plane;
        let field = match target {
            Target::P => &self.p,
            Target::Sw => &self.sw,
        };
        &field.data()[at..at + plane]
    }

    fn check(&self) -> Result<()> {
        let n = self.len();
        let (nx, nz) = self.grid();
        let t1 = self.config.sim.total_days + 1;
        for (name, t) in [("P", &self.p), ("Sw", &self.sw)] {
            if t.shape() != [n, t1, nx, nz] {
                return shape_err(format!("{name} has shape {:?}, expected [{n}, {t1}, {nx}, {nz}]", t.shape()));
            }
        }
        if self.draws.len() != n || n != self.config.n_samples {
            return shape_err(format!("{n} samples but manifest lists {}", self.config.n_samples));
        }
        if self.sw.data().iter().any(|&s| !(0.0..=1.0).contains(&s)) {
            return invalid("water saturation outside [0, 1]");
        }
        Ok(())
    }

    /// Writes `K.npy`, `P.npy`, `Sw.npy` (single precision) and
    /// `manifest.txt` into `dir`, creating it if needed.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let k = if self.config.repeat_k {
            let (n, t1) = (self.len(), self.snapshots());
            let plane = self.grid().0 * self.grid().1;
            let mut data = Vec::with_capacity(n * t1 * plane);
            for i in 0..n {
                let src = &self.k.data()[i * plane..(i + 1) * plane];
                for _ in 0..t1 {
                    data.extend(src.iter().map(|&v| v as f32));
                }
            }
            Tensor::new(&[n, t1, self.grid().0, self.grid().1], data)?
        } else {
            self.k.cast::<f32>()
        };
        write_npy(dir.join("K.npy"), &k)?;
        write_npy(dir.join("P.npy"), &self.p.cast::<f32>())?;
        write_npy(dir.join("Sw.npy"), &self.sw.cast::<f32>())?;

        let mut m = Manifest::new();
        m.set("format", DATASET_FORMAT);
        m.set("dtype", "<f4");
        self.config.write_manifest(&mut m);
        m.set("grid", format!("{}x{}", self.grid().0, self.grid().1));
        m.set("days", self.snapshots() - 1);
        m.set("draws", self.draws.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(","));
        m.write(dir.join("manifest.txt"))
    }

    /// Reads a directory written by [`DatasetBundle::write`], accepting
    /// either K layout.
    pub fn read(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let m = Manifest::read(dir.join("manifest.txt"))?;
        if m.require("format")? != DATASET_FORMAT {
            return Err(Error::Format(format!("{}: not a dataset manifest", dir.display())));
        }
        let config = DatasetConfig::from_manifest(&m)?;
        let draws = m
            .require("draws")?
            .split(',')
            .map(|d| d.trim().parse().map_err(|_| Error::Format(format!("bad draw index {d:?}"))))
            .collect::<Result<Vec<u64>>>()?;
        let mut k = read_npy(dir.join("K.npy"))?.into_f64();
        if k.ndim() == 4 {
            let s = k.shape().to_vec();
            let plane = s[2] * s[3];
            let mut data = Vec::with_capacity(s[0] * plane);
            for i in 0..s[0] {
                let first = &k.data()[i * s[1] * plane..i * s[1] * plane + plane];
                for t in 1..s[1] {
                    let at = (i * s[1] + t) * plane;
                    if &k.data()[at..at + plane] != first {
                        return Err(Error::Format(format!("K slices of sample {i} differ across days")));
                    }
                }
                data.extend_from_slice(first);
            }
            k = Tensor::new(&[s[0], s[2], s[3]], data)?;
        }
        if k.ndim() != 3 {
            return shape_err(format!("K has shape {:?}", k.shape()));
        }
        let bundle = Self {
            config,
            draws,
            k,
            p: read_npy(dir.join("P.npy"))?.into_f64(),
            sw: read_npy(dir.join("Sw.npy"))?.into_f64(),
        };
        bundle.check()?;
        Ok(bundle)
    }

    /// Normalization statistics from the listed (training) samples only:
    /// `log(1 + K)` then z-score for K, plain z-scores for P and Sw.
    pub fn norm_stats(&self, samples: &[usize]) -> Result<NormStats> {
        if samples.is_empty() {
            return invalid("normalization needs at least one training sample");
        }
        let (nx, nz) = self.grid();
        let plane = nx * nz;
        let series = self.snapshots() * plane;
        let k = FieldStats::fit(samples.iter().flat_map(|&i| self.k.data()[i * plane..(i + 1) * plane].iter().copied()), true)?;
        let p = FieldStats::fit(samples.iter().flat_map(|&i| self.p.data()[i * series..(i + 1) * series].iter().copied()), false)?;
        let sw = FieldStats::fit(samples.iter().flat_map(|&i| self.sw.data()[i * series..(i + 1) * series].iter().copied()), false)?;
        Ok(NormStats { k, p, sw })
    }
}

/// Training and validation sample indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

impl Split {
    /// Shuffles `0..n` with `seed`, then takes the first
    /// `round(train_fraction * n)` samples for training.
    pub fn new(n: usize, train_fraction: f64, seed: u64) -> Result<Self> {
        if !(train_fraction > 0.0 && train_fraction <= 1.0) {
            return invalid(format!("train fraction {train_fraction} outside (0, 1]"));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_train = ((train_fraction * n as f64).round() as usize).min(n);
        if n_train == 0 {
            return invalid(format!("train fraction {train_fraction} of {n} samples leaves an empty training split"));
        }
        let val = order.split_off(n_train);
        Ok(Self { train: order, val })
    }
}
