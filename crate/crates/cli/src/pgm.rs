//! Binary (P5) graymap heatmaps of `[nx, nz]` fields, x across and z down.

use std::path::Path;

/// Encodes `field` (row-major `[nx, nz]`) with `lo` mapped to 0 and `hi`
/// to 255.
pub fn encode(field: &[f64], nx: usize, nz: usize, lo: f64, hi: f64) -> Vec<u8> {
    assert_eq!(field.len(), nx * nz);
    let mut out = format!("P5\n{nx} {nz}\n255\n").into_bytes();
    let span = if hi > lo { hi - lo } else { 1.0 };
    for z in 0..nz {
        for x in 0..nx {
            let v = ((field[x * nz + z] - lo) / span).clamp(0.0, 1.0);
            out.push((v * 255.0).round() as u8);
        }
    }
    out
}

pub fn range(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

pub fn write(path: &Path, field: &[f64], nx: usize, nz: usize, lo: f64, hi: f64) -> std::io::Result<()> {
    std::fs::write(path, encode(field, nx, nz, lo, hi))
}
