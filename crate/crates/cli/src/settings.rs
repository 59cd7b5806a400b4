//! Layered run settings: built-in defaults, then a `key=value` config
//! file, then command-line flags. Every key read is echoed into the run
//! manifest with its resolved value.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use mgflow::data::{DatasetConfig, Manifest, Target};
use mgflow::operators::{FnoConfig, InputSpec, MgnoConfig, ModelConfig};
use mgflow::reservoir::ReservoirConfig;
use mgflow::tensor::ModeSet;
use mgflow::train::{AdamConfig, LossKind, LossSpace, TrainConfig};

use crate::CliError;

pub struct Settings {
    given: BTreeMap<String, String>,
    resolved: Manifest,
}

impl Settings {
    pub fn new(config: Option<&Path>, flags: Vec<(String, String)>) -> Result<Self, CliError> {
        let mut given = BTreeMap::new();
        if let Some(path) = config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read config file {}: {e}", path.display())))?;
            for (n, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (k, v) = line
                    .split_once('=')
                    .ok_or_else(|| CliError::Usage(format!("{}:{}: expected key=value", path.display(), n + 1)))?;
                given.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        for (k, v) in flags {
            given.insert(k, v);
        }
        Ok(Self { given, resolved: Manifest::new() })
    }

    /// The resolved value of `key`, falling back to `default`.
    pub fn get<V: FromStr + Display>(&mut self, key: &str, default: V) -> Result<V, CliError> {
        let value = match self.given.remove(key) {
            Some(raw) => raw
                .parse()
                .map_err(|_| CliError::Usage(format!("invalid value {raw:?} for {key}")))?,
            None => default,
        };
        self.resolved.set(key, &value);
        Ok(value)
    }

    /// Like [`Settings::get`] for enumerations that parse through the
    /// library's error type.
    pub fn choice<V: FromStr<Err = mgflow::Error>>(&mut self, key: &str, default: &str) -> Result<V, CliError> {
        let raw = self.given.remove(key).unwrap_or_else(|| default.to_string());
        let v = raw.parse().map_err(|e: mgflow::Error| CliError::Usage(format!("{key}: {e}")))?;
        self.resolved.set(key, raw.to_ascii_lowercase());
        Ok(v)
    }

    pub fn echo(&mut self, key: &str, value: impl Display) {
        self.resolved.set(key, value);
    }

    /// Fails on keys that no part of the command consumed.
    pub fn finish(self) -> Result<Manifest, CliError> {
        if let Some(k) = self.given.keys().next() {
            return Err(CliError::Usage(format!("unknown setting {k:?}")));
        }
        Ok(self.resolved)
    }

    pub fn sim(&mut self) -> Result<ReservoirConfig, CliError> {
        let mut cfg = ReservoirConfig::default();
        let grid = self.get("grid", cfg.nx)?;
        cfg.nx = grid;
        cfg.nz = grid;
        cfg.total_days = self.get("days", cfg.total_days)?;
        for (name, default) in cfg.clone().fields() {
            if matches!(name, "nx" | "nz" | "total_days") {
                continue;
            }
            let v: String = self.get(&format!("sim.{name}"), default)?;
            cfg.set_field(name, &v).map_err(|e| CliError::Usage(e.to_string()))?;
        }
        Ok(cfg)
    }

    pub fn dataset(&mut self) -> Result<DatasetConfig, CliError> {
        let d = DatasetConfig::default();
        Ok(DatasetConfig {
            n_samples: self.get("n", d.n_samples)?,
            amplitude: self.get("amplitude", d.amplitude)?,
            seed: self.get("seed", d.seed)?,
            max_resample: self.get("max_resample", d.max_resample)?,
            repeat_k: self.get("repeat_k", d.repeat_k)?,
            sim: self.sim()?,
        })
    }

    pub fn train(&mut self) -> Result<TrainConfig, CliError> {
        let d = TrainConfig::default();
        let a = AdamConfig::default();
        Ok(TrainConfig {
            epochs: self.get("epochs", d.epochs)?,
            batch_size: self.get("batch_size", d.batch_size)?,
            adam: AdamConfig {
                lr: self.get("lr", a.lr)?,
                beta1: self.get("beta1", a.beta1)?,
                beta2: self.get("beta2", a.beta2)?,
                eps: self.get("eps", a.eps)?,
                weight_decay: self.get("weight_decay", a.weight_decay)?,
            },
            loss: self.choice::<LossKind>("loss", d.loss.name())?,
            loss_space: self.choice::<LossSpace>("loss_space", d.loss_space.name())?,
            train_fraction: self.get("train_fraction", d.train_fraction)?,
            seed: self.get("seed", d.seed)?,
            target: self.choice::<Target>("target", d.target.name())?,
            input: InputSpec { coordinates: self.get("coordinates", d.input.coordinates)? },
            mirror_z: self.get("mirror_z", d.mirror_z)?,
            weight_average: self.get("weight_average", d.weight_average)?,
        })
    }

    pub fn model(&mut self, input: InputSpec) -> Result<ModelConfig, CliError> {
        let kind: String = self.get("model", "mgno".to_string())?;
        let in_channels = input.channels();
        match kind.as_str() {
            "fno" => {
                let d = FnoConfig::default();
                Ok(ModelConfig::Fno(FnoConfig {
                    in_channels,
                    width: self.get("fno.width", d.width)?,
                    modes: ModeSet::new(self.get("fno.modes1", d.modes.m1)?, self.get("fno.modes2", d.modes.m2)?),
                    layers: self.get("fno.layers", d.layers)?,
                    proj_width: self.get("fno.proj_width", d.proj_width)?,
                }))
            }
            "mgno" => {
                let d = MgnoConfig::default();
                Ok(ModelConfig::Mgno(MgnoConfig {
                    in_channels,
                    channels: self.get("mgno.channels", d.channels)?,
                    layers: self.get("mgno.layers", d.layers)?,
                    levels: self.get("mgno.levels", d.levels)?,
                    smoothing: self.get("mgno.smoothing", d.smoothing)?,
                }))
            }
            other => Err(CliError::Usage(format!("unknown model {other:?}; expected fno or mgno"))),
        }
    }
}
