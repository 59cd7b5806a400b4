//! Checkpoint directories: `manifest.txt` plus one NPY file per parameter.

use std::path::Path;

use super::manifest::Manifest;
use super::npy::{read_npy_exact, write_npy};
use super::{FieldStats, NormStats, Target};
use crate::error::{Error, Result};
use crate::operators::{FnoConfig, InputSpec, MgnoConfig, Model, ModelConfig, NeuralOperator};
use crate::tensor::{ModeSet, Real};
use crate::train::Surrogate;

pub const CHECKPOINT_FORMAT: &str = "mgflow-checkpoint-1";

fn ckpt_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Checkpoint(msg.into()))
}

pub fn precision_name<T: Real>() -> &'static str {
    if T::BYTES == 4 {
        "f32"
    } else {
        "f64"
    }
}

pub fn write_model_config(config: &ModelConfig, m: &mut Manifest) {
    m.set("model", config.kind());
    match config {
        ModelConfig::Fno(c) => {
            m.set("fno.in_channels", c.in_channels);
            m.set("fno.width", c.width);
            m.set("fno.modes1", c.modes.m1);
            m.set("fno.modes2", c.modes.m2);
            m.set("fno.layers", c.layers);
            m.set("fno.proj_width", c.proj_width);
        }
        ModelConfig::Mgno(c) => {
            m.set("mgno.in_channels", c.in_channels);
            m.set("mgno.channels", c.channels);
            m.set("mgno.layers", c.layers);
            m.set("mgno.levels", c.levels);
            m.set("mgno.smoothing", c.smoothing);
        }
    }
}

pub fn read_model_config(m: &Manifest) -> Result<ModelConfig> {
    match m.require("model")? {
        "fno" => Ok(ModelConfig::Fno(FnoConfig {
            in_channels: m.parse_value("fno.in_channels")?,
            width: m.parse_value("fno.width")?,
            modes: ModeSet::new(m.parse_value("fno.modes1")?, m.parse_value("fno.modes2")?),
            layers: m.parse_value("fno.layers")?,
            proj_width: m.parse_value("fno.proj_width")?,
        })),
        "mgno" => Ok(ModelConfig::Mgno(MgnoConfig {
            in_channels: m.parse_value("mgno.in_channels")?,
            channels: m.parse_value("mgno.channels")?,
            layers: m.parse_value("mgno.layers")?,
            levels: m.parse_value("mgno.levels")?,
            smoothing: m.parse_value("mgno.smoothing")?,
        })),
        other => ckpt_err(format!("unknown model kind {other:?}")),
    }
}

fn write_stats(m: &mut Manifest, name: &str, s: &FieldStats) {
    m.set(&format!("stats.{name}.mean"), s.mean);
    m.set(&format!("stats.{name}.std"), s.std);
    m.set(&format!("stats.{name}.log1p"), s.log1p);
}

fn read_stats(m: &Manifest, name: &str) -> Result<FieldStats> {
    Ok(FieldStats {
        mean: m.parse_value(&format!("stats.{name}.mean"))?,
        std: m.parse_value(&format!("stats.{name}.std"))?,
        log1p: m.parse_value(&format!("stats.{name}.log1p"))?,
    })
}

fn shape_text(shape: &[usize]) -> String {
    shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x")
}

/// Writes the surrogate into `dir`. Entries of `extra` (run settings such
/// as the seed or training configuration) are appended to the manifest.
pub fn save_checkpoint<T: Real>(sur: &Surrogate<T>, dir: impl AsRef<Path>, extra: &Manifest) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut m = Manifest::new();
    m.set("format", CHECKPOINT_FORMAT);
    m.set("precision", precision_name::<T>());
    write_model_config(&sur.model.config(), &mut m);
    m.set("target", sur.target.name());
    m.set("horizon_days", sur.horizon_days);
    m.set("coordinates", sur.input.coordinates);
    write_stats(&mut m, "k", &sur.stats.k);
    write_stats(&mut m, "p", &sur.stats.p);
    write_stats(&mut m, "sw", &sur.stats.sw);
    let params = sur.model.params();
    m.set("parameters", params.len());
    for p in params.iter() {
        m.set(&format!("param.{}", p.name), shape_text(p.value.shape()));
        write_npy(dir.join(format!("{}.npy", p.name)), &p.value)?;
    }
    for (k, v) in extra.entries() {
        if m.get(k).is_some() {
            return ckpt_err(format!("extra manifest key {k:?} shadows a checkpoint field"));
        }
        m.set(k, v);
    }
    m.write(dir.join("manifest.txt"))
}

pub fn read_checkpoint_manifest(dir: impl AsRef<Path>) -> Result<Manifest> {
    let dir = dir.as_ref();
    let path = dir.join("manifest.txt");
    if !path.exists() {
        return ckpt_err(format!("{} has no manifest.txt", dir.display()));
    }
    let m = Manifest::read(path)?;
    if m.get("format") != Some(CHECKPOINT_FORMAT) {
        return ckpt_err(format!("{} is not a checkpoint", dir.display()));
    }
    Ok(m)
}

/// Rebuilds a surrogate saved by [`save_checkpoint`] in precision `T`.
pub fn load_checkpoint<T: Real>(dir: impl AsRef<Path>) -> Result<Surrogate<T>> {
    let dir = dir.as_ref();
    let m = read_checkpoint_manifest(dir)?;
    let precision = m.require("precision")?;
    if precision != precision_name::<T>() {
        return ckpt_err(format!("checkpoint holds {precision} parameters, requested {}", precision_name::<T>()));
    }
    let config = read_model_config(&m)?;
    let mut model = Model::<T>::new(&config, 0)?;
    let expected: usize = m.parse_value("parameters")?;
    if expected != model.params().len() {
        return ckpt_err(format!(
            "manifest lists {expected} parameters but the {} configuration has {}",
            config.kind(),
            model.params().len()
        ));
    }
    let ids: Vec<_> = model.params().ids().collect();
    for id in ids {
        let name = model.params().get(id).name.clone();
        let want = shape_text(model.params().value(id).shape());
        let listed = m.require(&format!("param.{name}"))?;
        if listed != want {
            return ckpt_err(format!("parameter {name}: manifest shape {listed}, configuration expects {want}"));
        }
        let path = dir.join(format!("{name}.npy"));
        if !path.exists() {
            return ckpt_err(format!("missing parameter file {}", path.display()));
        }
        let value = read_npy_exact::<T>(&path)?;
        model
            .params_mut()
            .set_value(id, value)
            .map_err(|e| Error::Checkpoint(format!("parameter {name}: {e}")))?;
    }
    let stats = NormStats { k: read_stats(&m, "k")?, p: read_stats(&m, "p")?, sw: read_stats(&m, "sw")? };
    let target: Target = m.require("target")?.parse()?;
    let input = InputSpec { coordinates: m.parse_value("coordinates")? };
    Surrogate::new(model, stats, target, m.parse_value("horizon_days")?, input)
}
