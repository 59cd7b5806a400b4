use super::ReservoirConfig;
use crate::error::{invalid, Result};

/// Corey relative permeabilities `(k_rw, k_ro)`.
pub fn relperm(sw: f64, cfg: &ReservoirConfig) -> Result<(f64, f64)> {
    let tol = 1e-12;
    if !(sw >= cfg.swc - tol && sw <= 1.0 - cfg.sor + tol) {
        return invalid(format!("saturation {sw} outside [{}, {}]", cfg.swc, 1.0 - cfg.sor));
    }
    Ok(relperm_clamped(sw, cfg))
}

/// [`relperm`] with the effective saturation clamped into `[0, 1]`.
pub fn relperm_clamped(sw: f64, cfg: &ReservoirConfig) -> (f64, f64) {
    let se = ((sw - cfg.swc) / (1.0 - cfg.swc - cfg.sor)).clamp(0.0, 1.0);
    (se.powf(cfg.corey_nw), (1.0 - se).powf(cfg.corey_no))
}

pub(crate) fn mobilities(sw: f64, cfg: &ReservoirConfig) -> (f64, f64) {
    let (krw, kro) = relperm_clamped(sw, cfg);
    (krw / cfg.mu_w, kro / cfg.mu_o)
}

/// Water fraction of total flux, `λ_w / (λ_w + λ_o)`.
pub fn fractional_flow(sw: f64, cfg: &ReservoirConfig) -> f64 {
    let (lw, lo) = mobilities(sw, cfg);
    lw / (lw + lo)
}

/// `max df_w/dsw` over the mobile range, from a fine sampling of the
/// analytic derivative padded by 1%.
pub fn max_fractional_flow_slope(cfg: &ReservoirConfig) -> f64 {
    let span = 1.0 - cfg.swc - cfg.sor;
    let samples = 20_000;
    let mut best: f64 = 0.0;
    for i in 0..=samples {
        let se = i as f64 / samples as f64;
        let (nw, no) = (cfg.corey_nw, cfg.corey_no);
        let lw = se.powf(nw) / cfg.mu_w;
        let lo = (1.0 - se).powf(no) / cfg.mu_o;
        let dlw = if se > 0.0 { nw * se.powf(nw - 1.0) / cfg.mu_w } else if nw < 1.0 { f64::INFINITY } else if nw == 1.0 { 1.0 / cfg.mu_w } else { 0.0 };
        let dlo = if se < 1.0 { -no * (1.0 - se).powf(no - 1.0) / cfg.mu_o } else if no == 1.0 { -1.0 / cfg.mu_o } else { 0.0 };
        let lt = lw + lo;
        let d = (dlw * lo - lw * dlo) / (lt * lt) / span;
        best = best.max(d);
    }
    best * 1.01
}
