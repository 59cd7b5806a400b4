//! Incompressible, immiscible oil–water flow on a 2-D `x`–`z` grid,
//! stepped with implicit pressure and explicit upwind saturation.
//!
//! Fields are `[nx, nz]` tensors indexed `i * nz + k`. Water is injected at
//! a fixed rate spread evenly over the left column (`i = 0`); the right
//! column (`i = nx - 1`) is held at the producer pressure. Outer faces are
//! no-flow.

mod pressure;
mod relperm;
mod transport;

pub use pressure::{assemble_pressure, face_transmissibility, solve_pressure, CgSolution, CsrMatrix, PressureSystem, Transmissibility};
pub use relperm::{fractional_flow, max_fractional_flow_slope, relperm, relperm_clamped};
pub use transport::{compute_fluxes, stable_dt, update_saturation, Fluxes, WaterFlow};

use crate::error::{invalid, shape_err, Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct ReservoirConfig {
    pub nx: usize,
    pub nz: usize,
    pub dx: f64,
    pub dz: f64,
    pub porosity: f64,
    pub sw_init: f64,
    pub mu_w: f64,
    pub mu_o: f64,
    pub swc: f64,
    pub sor: f64,
    pub corey_nw: f64,
    pub corey_no: f64,
    pub rho_w: f64,
    pub rho_o: f64,
    /// Injection rate in pore volumes per day.
    pub q_inj: f64,
    pub p_prod: f64,
    pub total_days: usize,
    /// Fraction of the monotone explicit-transport limit used per sub-step.
    pub substep_cfl: f64,
    /// Pressure solves per reported day; saturation sub-steps in between
    /// reuse the last total fluxes.
    pub pressure_steps_per_day: usize,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
}

impl Default for ReservoirConfig {
    fn default() -> Self {
        Self {
            nx: 64,
            nz: 64,
            dx: 10.0,
            dz: 10.0,
            porosity: 0.3,
            sw_init: 0.2,
            mu_w: 1.0,
            mu_o: 5.0,
            swc: 0.2,
            sor: 0.2,
            corey_nw: 2.0,
            corey_no: 2.0,
            rho_w: 1000.0,
            rho_o: 800.0,
            q_inj: 0.1,
            p_prod: 0.0,
            total_days: 24,
            substep_cfl: 0.5,
            pressure_steps_per_day: 4,
            cg_tol: 1e-10,
            cg_max_iter: 20_000,
        }
    }
}

macro_rules! keyed_fields {
    ($($name:ident),* $(,)?) => {
        impl ReservoirConfig {
            /// Field names accepted by [`ReservoirConfig::set_field`].
            pub const FIELDS: &'static [&'static str] = &[$(stringify!($name)),*];

            /// `(name, value)` for every field, values formatted to round-trip.
            pub fn fields(&self) -> Vec<(&'static str, String)> {
                vec![$((stringify!($name), self.$name.to_string())),*]
            }

            /// Sets a field by name from its text form.
            pub fn set_field(&mut self, name: &str, value: &str) -> Result<()> {
                match name {
                    $(stringify!($name) => {
                        self.$name = value
                            .trim()
                            .parse()
                            .map_err(|_| Error::InvalidArgument(format!("{name}: cannot parse {value:?}")))?;
                    })*
                    _ => return invalid(format!("unknown simulator setting {name:?}")),
                }
                Ok(())
            }
        }
    };
}

keyed_fields!(
    nx, nz, dx, dz, porosity, sw_init, mu_w, mu_o, swc, sor, corey_nw, corey_no, rho_w, rho_o, q_inj, p_prod,
    total_days, substep_cfl, pressure_steps_per_day, cg_tol, cg_max_iter,
);

impl ReservoirConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nx < 2 || self.nz < 1 {
            return invalid(format!("grid must be at least 2x1, got {}x{}", self.nx, self.nz));
        }
        let positive = [
            ("dx", self.dx),
            ("dz", self.dz),
            ("porosity", self.porosity),
            ("mu_w", self.mu_w),
            ("mu_o", self.mu_o),
            ("corey_nw", self.corey_nw),
            ("corey_no", self.corey_no),
            ("rho_w", self.rho_w),
            ("rho_o", self.rho_o),
            ("substep_cfl", self.substep_cfl),
            ("cg_tol", self.cg_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return invalid(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if self.porosity > 1.0 || self.substep_cfl > 1.0 {
            return invalid("porosity and substep_cfl must not exceed 1".to_string());
        }
        if !(self.swc >= 0.0 && self.sor >= 0.0 && self.swc + self.sor < 1.0) {
            return invalid(format!("residual saturations swc={} sor={} leave no mobile range", self.swc, self.sor));
        }
        if !(self.sw_init >= self.swc && self.sw_init <= 1.0 - self.sor) {
            return invalid(format!("sw_init {} outside [{}, {}]", self.sw_init, self.swc, 1.0 - self.sor));
        }
        if !(self.q_inj >= 0.0 && self.q_inj.is_finite()) || !self.p_prod.is_finite() {
            return invalid("q_inj must be non-negative and p_prod finite".to_string());
        }
        if self.pressure_steps_per_day == 0 || self.cg_max_iter == 0 {
            return invalid("pressure_steps_per_day and cg_max_iter must be positive".to_string());
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.nx * self.nz
    }

    /// Bulk volume of one cell (unit thickness).
    pub fn cell_volume(&self) -> f64 {
        self.dx * self.dz
    }

    pub fn pore_volume(&self) -> f64 {
        self.porosity * self.cell_volume() * self.cells() as f64
    }

    /// Total injection rate in volume per day.
    pub fn injection_rate(&self) -> f64 {
        self.q_inj * self.pore_volume()
    }

    fn check_field(&self, k: &Tensor<f64>) -> Result<()> {
        if k.shape() != [self.nx, self.nz] {
            return shape_err(format!("permeability shape {:?}, expected [{}, {}]", k.shape(), self.nx, self.nz));
        }
        if k.data().iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
            return invalid("permeability must be finite and non-negative".to_string());
        }
        Ok(())
    }
}

/// Pressure and water saturation at one instant. Oil saturation is `1 - sw`.
#[derive(Clone, Debug, PartialEq)]
pub struct SimState {
    pub p: Vec<f64>,
    pub sw: Vec<f64>,
    pub day: f64,
}

/// A permeability field and its daily pressure and saturation snapshots.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeriesSample {
    /// `[nx, nz]`.
    pub k: Tensor<f64>,
    /// `[days + 1, nx, nz]`.
    pub p: Tensor<f64>,
    /// `[days + 1, nx, nz]`.
    pub sw: Tensor<f64>,
}

/// Bookkeeping from one simulation run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SimReport {
    pub water_injected: f64,
    pub water_produced: f64,
    /// `|ΔV_water - (injected - produced)| / max(injected, tiny)`.
    pub budget_error: f64,
    pub pressure_solves: usize,
    pub cg_iterations: usize,
    pub substeps: usize,
    /// Smallest and largest saturation seen after any sub-step.
    pub sw_min: f64,
    pub sw_max: f64,
}

/// Runs the IMPES loop for `cfg.total_days`, recording a snapshot at each
/// day boundary. The pressure of a snapshot is solved on that snapshot's
/// saturation.
pub fn run_simulation(k: &Tensor<f64>, cfg: &ReservoirConfig) -> Result<(TimeSeriesSample, SimReport)> {
    cfg.validate()?;
    cfg.check_field(k)?;
    let n = cfg.cells();
    let trans = face_transmissibility(k, cfg)?;
    let slope = max_fractional_flow_slope(cfg);
    let mut sw = vec![cfg.sw_init; n];
    let sw0 = sw.clone();
    let mut report = SimReport {
        sw_min: cfg.sw_init,
        sw_max: cfg.sw_init,
        ..Default::default()
    };
    let mut guess: Option<Vec<f64>> = None;

    let mut solve = |sw: &[f64], report: &mut SimReport| -> Result<Vec<f64>> {
        let sys = assemble_pressure(&trans, sw, cfg)?;
        let sol = solve_pressure(&sys, guess.as_deref(), cfg.cg_tol, cfg.cg_max_iter)?;
        report.pressure_solves += 1;
        report.cg_iterations += sol.iterations;
        let p = sys.expand(&sol.x, cfg);
        guess = Some(sol.x);
        Ok(p)
    };

    let days = cfg.total_days;
    let mut p_series = Vec::with_capacity((days + 1) * n);
    let mut sw_series = Vec::with_capacity((days + 1) * n);
    let mut p = solve(&sw, &mut report)?;
    p_series.extend_from_slice(&p);
    sw_series.extend_from_slice(&sw);

    let interval = 1.0 / cfg.pressure_steps_per_day as f64;
    for _day in 0..days {
        for step in 0..cfg.pressure_steps_per_day {
            if step > 0 {
                p = solve(&sw, &mut report)?;
            }
            let fluxes = compute_fluxes(&trans, &sw, &p, cfg);
            let mut remaining = interval;
            while remaining > 0.0 {
                let dt = stable_dt(&fluxes, cfg, slope, remaining);
                let flow = update_saturation(&mut sw, &fluxes, dt, cfg, slope)?;
                report.water_injected += flow.injected;
                report.water_produced += flow.produced;
                report.substeps += 1;
                for &s in &sw {
                    report.sw_min = report.sw_min.min(s);
                    report.sw_max = report.sw_max.max(s);
                }
                remaining = if dt >= remaining { 0.0 } else { remaining - dt };
            }
        }
        p = solve(&sw, &mut report)?;
        p_series.extend_from_slice(&p);
        sw_series.extend_from_slice(&sw);
    }

    let pv_cell = cfg.porosity * cfg.cell_volume();
    let stored: f64 = sw.iter().zip(&sw0).map(|(a, b)| (a - b) * pv_cell).sum();
    let net = report.water_injected - report.water_produced;
    report.budget_error = (stored - net).abs() / report.water_injected.max(f64::MIN_POSITIVE);
    let sample = TimeSeriesSample {
        k: k.clone(),
        p: Tensor::new(&[days + 1, cfg.nx, cfg.nz], p_series)?,
        sw: Tensor::new(&[days + 1, cfg.nx, cfg.nz], sw_series)?,
    };
    Ok((sample, report))
}
