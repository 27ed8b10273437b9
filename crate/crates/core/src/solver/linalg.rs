//! Sparse matrix-vector products, preconditioned conjugate gradients and a
//! separable polar preconditioner solved with FFTs in `θ`.

use super::mesh::PolarMesh;
use crate::parallel;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

const ROWS: usize = 1024;

/// `y = A x` for the CSR matrix with the pattern of `mesh`.
pub(crate) fn matvec(mesh: &PolarMesh, values: &[f64], x: &[f64], y: &mut [f64]) {
    parallel::for_each_chunk_mut(y, ROWS, |block, chunk| {
        for (off, yi) in chunk.iter_mut().enumerate() {
            let row = block * ROWS + off;
            let (a, b) = (mesh.row_ptr[row], mesh.row_ptr[row + 1]);
            *yi = values[a..b]
                .iter()
                .zip(&mesh.col_idx[a..b])
                .map(|(v, &c)| v * x[c])
                .sum();
        }
    });
}

pub(crate) trait Preconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]);
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct CgOutcome {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Solve `A x = b` from `x = 0`. Stops at `‖r‖ ≤ tol·‖b‖` or `max_iter`.
pub(crate) fn pcg(
    mesh: &PolarMesh,
    values: &[f64],
    b: &[f64],
    precond: &dyn Preconditioner,
    tol: f64,
    max_iter: usize,
    x: &mut [f64],
) -> CgOutcome {
    let n = b.len();
    x.iter_mut().for_each(|v| *v = 0.0);
    let b_norm = parallel::dot(b, b).sqrt();
    if b_norm == 0.0 {
        return CgOutcome {
            iterations: 0,
            relative_residual: 0.0,
        };
    }
    let mut r = b.to_vec();
    let mut z = vec![0.0; n];
    precond.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = parallel::dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut rel = 1.0;
    for it in 0..max_iter {
        matvec(mesh, values, &p, &mut ap);
        let pap = parallel::dot(&p, &ap);
        if !(pap > 0.0) {
            return CgOutcome {
                iterations: it,
                relative_residual: rel,
            };
        }
        let alpha = rz / pap;
        parallel::for_each_chunk_mut(x, ROWS, |blk, c| {
            let s = blk * ROWS;
            for (k, v) in c.iter_mut().enumerate() {
                *v += alpha * p[s + k];
            }
        });
        parallel::for_each_chunk_mut(&mut r, ROWS, |blk, c| {
            let s = blk * ROWS;
            for (k, v) in c.iter_mut().enumerate() {
                *v -= alpha * ap[s + k];
            }
        });
        rel = parallel::dot(&r, &r).sqrt() / b_norm;
        if rel <= tol {
            return CgOutcome {
                iterations: it + 1,
                relative_residual: rel,
            };
        }
        precond.apply(&r, &mut z);
        let rz_new = parallel::dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        parallel::for_each_chunk_mut(&mut p, ROWS, |blk, c| {
            let s = blk * ROWS;
            for (k, v) in c.iter_mut().enumerate() {
                *v = z[s + k] + beta * *v;
            }
        });
    }
    CgOutcome {
        iterations: max_iter,
        relative_residual: rel,
    }
}

/// Finite-volume operator `−div(a(s)∇·)` on the reference polar grid with a
/// coefficient constant on each annulus. Its inverse is applied exactly:
/// an FFT on every ring decouples the angular modes, each of which is a
/// tridiagonal system in the radial index.
pub(crate) struct PolarPreconditioner {
    n_r: usize,
    n_theta: usize,
    /// `A_i⁻` and `A_i⁺` for free rings `i = 1..n_r−1`, index `i − 1`.
    inner: Vec<f64>,
    outer: Vec<f64>,
    /// `T_i`, angular coupling on ring `i`.
    angular: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl PolarPreconditioner {
    /// `annulus[i]` is the coefficient between rings `i` and `i + 1`.
    pub fn new(n_r: usize, n_theta: usize, annulus: &[f64]) -> Self {
        let h = 1.0 / n_r as f64;
        let dt = std::f64::consts::TAU / n_theta as f64;
        let mut inner = Vec::with_capacity(n_r - 1);
        let mut outer = Vec::with_capacity(n_r - 1);
        let mut angular = Vec::with_capacity(n_r - 1);
        for i in 1..n_r {
            let s = i as f64 * h;
            inner.push(annulus[i - 1] * (s - 0.5 * h) * dt / h);
            outer.push(annulus[i] * (s + 0.5 * h) * dt / h);
            angular.push(0.5 * (annulus[i - 1] + annulus[i]) * h / (s * dt));
        }
        let mut planner = FftPlanner::new();
        Self {
            n_r,
            n_theta,
            inner,
            outer,
            angular,
            forward: planner.plan_fft_forward(n_theta),
            inverse: planner.plan_fft_inverse(n_theta),
        }
    }
}

/// Thomas algorithm for a symmetric tridiagonal system with real
/// coefficients and complex right-hand side; `off[k]` couples `k` and `k+1`.
fn thomas(diag: &[f64], off: &[f64], rhs: &mut [Complex<f64>], work: &mut Vec<f64>) {
    let n = diag.len();
    work.clear();
    work.resize(n, 0.0);
    let mut denom = diag[0];
    rhs[0] /= denom;
    for k in 1..n {
        work[k - 1] = off[k - 1] / denom;
        denom = diag[k] - off[k - 1] * work[k - 1];
        rhs[k] = (rhs[k] - rhs[k - 1] * off[k - 1]) / denom;
    }
    for k in (0..n - 1).rev() {
        let next = rhs[k + 1];
        rhs[k] -= next * work[k];
    }
}

impl Preconditioner for PolarPreconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let (nr, nt) = (self.n_r, self.n_theta);
        let rings = nr - 1;
        let mut spectra: Vec<Vec<Complex<f64>>> = parallel::map(rings, |i| {
            let mut buf: Vec<Complex<f64>> = r[1 + i * nt..1 + (i + 1) * nt]
                .iter()
                .map(|&v| Complex::new(v, 0.0))
                .collect();
            self.forward.process(&mut buf);
            buf
        });
        let modes = parallel::map(nt, |k| {
            let lambda = 2.0 - 2.0 * (std::f64::consts::TAU * k as f64 / nt as f64).cos();
            let mut work = Vec::new();
            if k == 0 {
                // centre unknown n_θ·u_c prepended
                let mut diag = Vec::with_capacity(rings + 1);
                let mut off = Vec::with_capacity(rings);
                let mut rhs = Vec::with_capacity(rings + 1);
                diag.push(self.inner[0]);
                rhs.push(Complex::new(r[0], 0.0));
                for (i, spectrum) in spectra.iter().enumerate().take(rings) {
                    diag.push(self.inner[i] + self.outer[i]);
                    off.push(-self.inner[i]);
                    rhs.push(spectrum[0]);
                }
                thomas(&diag, &off, &mut rhs, &mut work);
                rhs
            } else {
                let diag: Vec<f64> = (0..rings)
                    .map(|i| self.inner[i] + self.outer[i] + self.angular[i] * lambda)
                    .collect();
                let off: Vec<f64> = (1..rings).map(|i| -self.inner[i]).collect();
                let mut rhs: Vec<Complex<f64>> = (0..rings).map(|i| spectra[i][k]).collect();
                thomas(&diag, &off, &mut rhs, &mut work);
                rhs
            }
        });
        z[0] = modes[0][0].re / nt as f64;
        for (i, ring) in spectra.iter_mut().enumerate() {
            ring[0] = modes[0][i + 1];
            for k in 1..nt {
                ring[k] = modes[k][i];
            }
        }
        let rings_out = parallel::map(rings, |i| {
            let mut buf = spectra[i].clone();
            self.inverse.process(&mut buf);
            buf.iter().map(|c| c.re / nt as f64).collect::<Vec<_>>()
        });
        for (i, ring) in rings_out.iter().enumerate() {
            z[1 + i * nt..1 + (i + 1) * nt].copy_from_slice(ring);
        }
    }
}
