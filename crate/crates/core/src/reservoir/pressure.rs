use super::relperm::mobilities;
use super::ReservoirConfig;
use crate::error::{shape_err, Error, Result};
use crate::tensor::Tensor;

/// Two-point face coefficients. `tx[i * nz + k]` couples `(i, k)` and
/// `(i + 1, k)`; `tz[i * (nz - 1) + k]` couples `(i, k)` and `(i, k + 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Transmissibility {
    pub nx: usize,
    pub nz: usize,
    pub tx: Vec<f64>,
    pub tz: Vec<f64>,
}

fn harmonic_mean(a: f64, b: f64) -> f64 {
    if a + b > 0.0 {
        2.0 * a * b / (a + b)
    } else {
        0.0
    }
}

pub fn face_transmissibility(k: &Tensor<f64>, cfg: &ReservoirConfig) -> Result<Transmissibility> {
    let (nx, nz) = (cfg.nx, cfg.nz);
    if k.shape() != [nx, nz] {
        return shape_err(format!("permeability shape {:?}, expected [{nx}, {nz}]", k.shape()));
    }
    let kv = k.data();
    let mut tx = Vec::with_capacity((nx - 1) * nz);
    for i in 0..nx - 1 {
        for c in 0..nz {
            tx.push(harmonic_mean(kv[i * nz + c], kv[(i + 1) * nz + c]) * cfg.dz / cfg.dx);
        }
    }
    let mut tz = Vec::with_capacity(nx * nz.saturating_sub(1));
    for i in 0..nx {
        for c in 0..nz.saturating_sub(1) {
            tz.push(harmonic_mean(kv[i * nz + c], kv[i * nz + c + 1]) * cfg.dx / cfg.dz);
        }
    }
    Ok(Transmissibility { nx, nz, tx, tz })
}

/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (r, out) in y.iter_mut().enumerate().take(self.n) {
            let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
            *out = self.col_idx[a..b].iter().zip(&self.values[a..b]).map(|(&c, &v)| v * x[c]).sum();
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n)
            .map(|r| {
                let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
                (a..b).find(|&j| self.col_idx[j] == r).map_or(0.0, |j| self.values[j])
            })
            .collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for (r, row) in d.iter_mut().enumerate() {
            for j in self.row_ptr[r]..self.row_ptr[r + 1] {
                row[self.col_idx[j]] += self.values[j];
            }
        }
        d
    }
}

/// Pressure system over the non-producer cells, which are the first
/// `(nx - 1) * nz` cells in field order.
#[derive(Clone, Debug, PartialEq)]
pub struct PressureSystem {
    pub a: CsrMatrix,
    pub b: Vec<f64>,
}

impl PressureSystem {
    /// Full `[nx, nz]` pressure from the reduced solution.
    pub fn expand(&self, x: &[f64], cfg: &ReservoirConfig) -> Vec<f64> {
        let mut p = x.to_vec();
        p.resize(cfg.cells(), cfg.p_prod);
        p
    }
}

/// Assembles `-∇·(λ_t K ∇p) = q` with face mobility the mean of the two
/// cell total mobilities. Producer cells are eliminated as Dirichlet data.
pub fn assemble_pressure(trans: &Transmissibility, sw: &[f64], cfg: &ReservoirConfig) -> Result<PressureSystem> {
    let (nx, nz) = (cfg.nx, cfg.nz);
    if trans.nx != nx || trans.nz != nz || sw.len() != nx * nz {
        return shape_err(format!(
            "pressure assembly: grid {nx}x{nz}, transmissibility {}x{}, saturation length {}",
            trans.nx,
            trans.nz,
            sw.len()
        ));
    }
    let lt: Vec<f64> = sw
        .iter()
        .map(|&s| {
            let (w, o) = mobilities(s, cfg);
            w + o
        })
        .collect();
    let m = (nx - 1) * nz;
    let inj = cfg.injection_rate() / nz as f64;
    let mut row_ptr = Vec::with_capacity(m + 1);
    let mut col_idx = Vec::with_capacity(5 * m);
    let mut values = Vec::with_capacity(5 * m);
    let mut b = vec![0.0; m];
    row_ptr.push(0);
    for i in 0..nx - 1 {
        for k in 0..nz {
            let c = i * nz + k;
            let lower = [
                (i > 0).then(|| (c - nz, trans.tx[c - nz])),
                (k > 0).then(|| (c - 1, trans.tz[i * (nz - 1) + k - 1])),
            ];
            let upper = [
                (k + 1 < nz).then(|| (c + 1, trans.tz[i * (nz - 1) + k])),
                Some((c + nz, trans.tx[c])),
            ];
            let mut diag = 0.0;
            let mut couple = |j: usize, t: f64, col_idx: &mut Vec<usize>, values: &mut Vec<f64>| {
                let coef = t * 0.5 * (lt[c] + lt[j]);
                diag += coef;
                if j < m {
                    col_idx.push(j);
                    values.push(-coef);
                } else {
                    b[c] += coef * cfg.p_prod;
                }
            };
            for (j, t) in lower.into_iter().flatten() {
                couple(j, t, &mut col_idx, &mut values);
            }
            let dp = values.len();
            col_idx.push(c);
            values.push(0.0);
            for (j, t) in upper.into_iter().flatten() {
                couple(j, t, &mut col_idx, &mut values);
            }
            if !(diag > 0.0) {
                return Err(Error::Degenerate(format!("cell ({i}, {k}) has zero total transmissibility")));
            }
            values[dp] = diag;
            if i == 0 {
                b[c] += inj;
            }
            row_ptr.push(col_idx.len());
        }
    }
    Ok(PressureSystem {
        a: CsrMatrix {
            n: m,
            row_ptr,
            col_idx,
            values,
        },
        b,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CgSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// `‖b - A x‖ / ‖b‖` recomputed from the returned `x`.
    pub rel_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Jacobi-preconditioned conjugate gradients to `‖r‖ ≤ tol ‖b‖`.
pub fn solve_pressure(sys: &PressureSystem, guess: Option<&[f64]>, tol: f64, max_iter: usize) -> Result<CgSolution> {
    let n = sys.a.n;
    if sys.b.len() != n || guess.is_some_and(|g| g.len() != n) {
        return shape_err(format!("CG: matrix order {n}, rhs {}", sys.b.len()));
    }
    let bnorm = dot(&sys.b, &sys.b).sqrt();
    if bnorm == 0.0 {
        return Ok(CgSolution {
            x: vec![0.0; n],
            iterations: 0,
            rel_residual: 0.0,
        });
    }
    let inv_diag: Vec<f64> = sys.a.diagonal().iter().map(|&d| 1.0 / d).collect();
    let mut x = guess.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let mut ap = vec![0.0; n];
    sys.a.matvec(&x, &mut ap);
    let mut r: Vec<f64> = sys.b.iter().zip(&ap).map(|(b, a)| b - a).collect();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut iterations = 0;
    while dot(&r, &r).sqrt() > tol * bnorm {
        if iterations == max_iter {
            return Err(Error::NoConvergence(format!(
                "CG stalled at relative residual {:.3e} after {max_iter} iterations",
                dot(&r, &r).sqrt() / bnorm
            )));
        }
        sys.a.matvec(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        iterations += 1;
    }
    sys.a.matvec(&x, &mut ap);
    let res: f64 = sys.b.iter().zip(&ap).map(|(b, a)| (b - a) * (b - a)).sum::<f64>().sqrt();
    Ok(CgSolution {
        x,
        iterations,
        rel_residual: res / bnorm,
    })
}
