use super::pressure::Transmissibility;
use super::relperm::{fractional_flow, mobilities};
use super::ReservoirConfig;
use crate::error::{shape_err, Error, Result};

/// Total volumetric fluxes per day. Positive `fx` flows from `(i, k)` to
/// `(i + 1, k)`, positive `fz` from `(i, k)` to `(i, k + 1)`. `inj` is the
/// per-cell water source and `prod` the per-cell well withdrawal.
#[derive(Clone, Debug, PartialEq)]
pub struct Fluxes {
    pub fx: Vec<f64>,
    pub fz: Vec<f64>,
    pub inj: Vec<f64>,
    pub prod: Vec<f64>,
    /// Outgoing face flux plus well rates per cell.
    throughput: Vec<f64>,
}

impl Fluxes {
    pub fn new(cfg: &ReservoirConfig, fx: Vec<f64>, fz: Vec<f64>, inj: Vec<f64>, prod: Vec<f64>) -> Result<Self> {
        let (nx, nz) = (cfg.nx, cfg.nz);
        let n = nx * nz;
        if fx.len() != (nx - 1) * nz || fz.len() != nx * (nz - 1) || inj.len() != n || prod.len() != n {
            return shape_err(format!("flux arrays do not match a {nx}x{nz} grid"));
        }
        let mut throughput: Vec<f64> = inj.iter().zip(&prod).map(|(q, w)| q.abs() + w.abs()).collect();
        for (f, &v) in fx.iter().enumerate() {
            let a = f;
            throughput[if v > 0.0 { a } else { a + nz }] += v.abs();
        }
        for (f, &v) in fz.iter().enumerate() {
            let a = (f / (nz - 1)) * nz + f % (nz - 1);
            throughput[if v > 0.0 { a } else { a + 1 }] += v.abs();
        }
        Ok(Self {
            fx,
            fz,
            inj,
            prod,
            throughput,
        })
    }
}

/// Face fluxes from a pressure field, with well rates: the injector column
/// receives its fixed share and each producer cell withdraws its net
/// inflow.
pub fn compute_fluxes(trans: &Transmissibility, sw: &[f64], p: &[f64], cfg: &ReservoirConfig) -> Fluxes {
    let (nx, nz) = (cfg.nx, cfg.nz);
    let lt: Vec<f64> = sw
        .iter()
        .map(|&s| {
            let (w, o) = mobilities(s, cfg);
            w + o
        })
        .collect();
    let mut fx = Vec::with_capacity((nx - 1) * nz);
    for a in 0..(nx - 1) * nz {
        let b = a + nz;
        fx.push(trans.tx[a] * 0.5 * (lt[a] + lt[b]) * (p[a] - p[b]));
    }
    let mut fz = Vec::with_capacity(nx * (nz - 1));
    for i in 0..nx {
        for k in 0..nz - 1 {
            let a = i * nz + k;
            fz.push(trans.tz[i * (nz - 1) + k] * 0.5 * (lt[a] + lt[a + 1]) * (p[a] - p[a + 1]));
        }
    }
    let n = nx * nz;
    let mut inj = vec![0.0; n];
    let q = cfg.injection_rate() / nz as f64;
    inj[..nz].iter_mut().for_each(|v| *v = q);
    let mut prod = vec![0.0; n];
    let last = (nx - 1) * nz;
    for k in 0..nz {
        // Producer cells only exchange with their west neighbours: their
        // column shares one pressure.
        prod[last + k] = fx[last - nz + k];
        if k > 0 {
            prod[last + k] += fz[(nx - 1) * (nz - 1) + k - 1];
        }
        if k + 1 < nz {
            prod[last + k] -= fz[(nx - 1) * (nz - 1) + k];
        }
    }
    Fluxes::new(cfg, fx, fz, inj, prod).expect("flux arrays built for this grid")
}

/// Explicit sub-step `cfl · min φV / (slope · throughput)` capped at
/// `remaining`, where `slope` bounds `df_w/dsw`. The uncapped step keeps
/// the upwind update monotone, hence saturations within their bounds.
pub fn stable_dt(fluxes: &Fluxes, cfg: &ReservoirConfig, slope: f64, remaining: f64) -> f64 {
    let worst = fluxes.throughput.iter().fold(0.0f64, |m, &t| m.max(t));
    if worst <= 0.0 || slope <= 0.0 {
        return remaining;
    }
    let pv = cfg.porosity * cfg.cell_volume();
    (cfg.substep_cfl * pv / (slope * worst)).min(remaining)
}

/// Water volumes moved by one sub-step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct WaterFlow {
    pub injected: f64,
    pub produced: f64,
}

/// Advances `sw` by `dt` with upwinded fractional flow.
pub fn update_saturation(sw: &mut [f64], fluxes: &Fluxes, dt: f64, cfg: &ReservoirConfig, slope: f64) -> Result<WaterFlow> {
    let (nx, nz) = (cfg.nx, cfg.nz);
    if sw.len() != nx * nz {
        return shape_err(format!("saturation length {} for a {nx}x{nz} grid", sw.len()));
    }
    let limit = stable_dt(fluxes, &ReservoirConfig { substep_cfl: 1.0, ..cfg.clone() }, slope, f64::INFINITY);
    if !(dt >= 0.0) || dt > limit * (1.0 + 1e-12) {
        return Err(Error::Cfl { dt, limit });
    }
    let f: Vec<f64> = sw.iter().map(|&s| fractional_flow(s, cfg)).collect();
    let mut delta = vec![0.0; sw.len()];
    let mut exchange = |a: usize, b: usize, v: f64| {
        let w = if v > 0.0 { f[a] * v } else { f[b] * v };
        delta[a] -= w;
        delta[b] += w;
    };
    for (a, &v) in fluxes.fx.iter().enumerate() {
        exchange(a, a + nz, v);
    }
    for (e, &v) in fluxes.fz.iter().enumerate() {
        let a = (e / (nz - 1)) * nz + e % (nz - 1);
        exchange(a, a + 1, v);
    }
    let mut flow = WaterFlow::default();
    for c in 0..sw.len() {
        let q_in = fluxes.inj[c];
        let q_out = f[c] * fluxes.prod[c];
        delta[c] += q_in - q_out;
        flow.injected += q_in * dt;
        flow.produced += q_out * dt;
    }
    let scale = dt / (cfg.porosity * cfg.cell_volume());
    for (s, d) in sw.iter_mut().zip(&delta) {
        *s += scale * d;
    }
    Ok(flow)
}
