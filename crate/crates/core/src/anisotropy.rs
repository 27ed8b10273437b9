//! Finsler norms `H`: positively 1-homogeneous, uniformly elliptic norms on ℝᴺ.
//!
//! Three families are provided, each with closed-form value, gradient and
//! Hessian:
//!
//! * Euclidean, `H(ξ) = |ξ|`;
//! * ellipsoidal, `H(ξ) = sqrt(ξᵀAξ)` for a symmetric positive-definite `A`;
//! * smoothed ℓq, `H(ξ) = (Σ (ξᵢ² + ε²)^{q/2} − N ε^q)^{1/q}`.
//!
//! The smoothed family is exactly homogeneous only for `ε = 0`. With `ε > 0`
//! the violation is measurable near `|ξ| ~ ε` and [`Anisotropy::check_homogeneity`]
//! reports it rather than hiding it.

use nalgebra::{DMatrix, SMatrix, SVector, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

/// Gradients with Euclidean norm below this are rejected by [`Anisotropy::evaluate`].
pub const DEGENERACY_FLOOR: f64 = 1e-14;

/// Ellipticity estimates at or below this are treated as zero.
pub const ELLIPTICITY_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnisotropyError {
    #[error("dimension must be at least 2, got {0}")]
    InvalidDimension(usize),
    #[error("matrix is {rows}x{cols}, expected {dim}x{dim}")]
    MatrixShape {
        rows: usize,
        cols: usize,
        dim: usize,
    },
    #[error("matrix is not symmetric positive definite")]
    NotPositiveDefinite,
    #[error("exponent q must exceed 1, got {0}")]
    InvalidExponent(f64),
    #[error("smoothing must be finite and non-negative, got {0}")]
    InvalidSmoothing(f64),
    #[error("vector of dimension {got} passed to a {expected}-dimensional anisotropy")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("|xi| = {0:e} is below the degeneracy floor")]
    DegenerateGradient(f64),
    #[error("estimated ellipticity constant {0:e} is not positive")]
    NotUniformlyElliptic(f64),
    #[error("sampling checks are implemented for N = 2 and N = 3, got {0}")]
    UnsupportedDimension(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum AnisotropyKind {
    Euclidean,
    Ellipsoidal(DMatrix<f64>),
    SmoothedLq { q: f64, epsilon: f64 },
}

/// Value, gradient and Hessian of `H` at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnisotropyEval<const N: usize> {
    pub value: f64,
    pub gradient: SVector<f64, N>,
    pub hessian: SMatrix<f64, N, N>,
}

/// Summary of the sampled hypothesis checks.
#[derive(Debug, Clone, Serialize)]
pub struct AnisotropyReport {
    #[serde(serialize_with = "crate::report::sig17")]
    pub lambda_hat: f64,
    #[serde(serialize_with = "crate::report::sig17")]
    pub c1_hat: f64,
    #[serde(serialize_with = "crate::report::sig17")]
    pub c2_hat: f64,
    #[serde(serialize_with = "crate::report::sig17")]
    pub max_homogeneity_error: f64,
    #[serde(serialize_with = "crate::report::sig17")]
    pub max_euler_error: f64,
    #[serde(serialize_with = "crate::report::sig17")]
    pub max_hessian_kernel_error: f64,
    pub sample_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Anisotropy {
    kind: AnisotropyKind,
    dimension: usize,
}

impl Anisotropy {
    pub fn euclidean(dimension: usize) -> Result<Self, AnisotropyError> {
        check_dimension(dimension)?;
        Ok(Self {
            kind: AnisotropyKind::Euclidean,
            dimension,
        })
    }

    pub fn ellipsoidal(matrix: DMatrix<f64>) -> Result<Self, AnisotropyError> {
        let dim = matrix.nrows();
        if matrix.ncols() != dim {
            return Err(AnisotropyError::MatrixShape {
                rows: matrix.nrows(),
                cols: matrix.ncols(),
                dim,
            });
        }
        check_dimension(dim)?;
        let scale = matrix.amax();
        let asym = (&matrix - matrix.transpose()).amax();
        if !(scale.is_finite() && scale > 0.0) || asym > 1e-12 * scale {
            return Err(AnisotropyError::NotPositiveDefinite);
        }
        if matrix.clone().cholesky().is_none() {
            return Err(AnisotropyError::NotPositiveDefinite);
        }
        Ok(Self {
            kind: AnisotropyKind::Ellipsoidal(matrix),
            dimension: dim,
        })
    }

    /// Ellipsoidal anisotropy from a row-major `dim × dim` entry list.
    pub fn ellipsoidal_row_major(dim: usize, entries: &[f64]) -> Result<Self, AnisotropyError> {
        if entries.len() != dim * dim {
            return Err(AnisotropyError::MatrixShape {
                rows: entries.len() / dim.max(1),
                cols: dim,
                dim,
            });
        }
        Self::ellipsoidal(DMatrix::from_row_slice(dim, dim, entries))
    }

    pub fn smoothed_lq(dimension: usize, q: f64, epsilon: f64) -> Result<Self, AnisotropyError> {
        check_dimension(dimension)?;
        if !(q.is_finite() && q > 1.0) {
            return Err(AnisotropyError::InvalidExponent(q));
        }
        if !(epsilon.is_finite() && epsilon >= 0.0) {
            return Err(AnisotropyError::InvalidSmoothing(epsilon));
        }
        Ok(Self {
            kind: AnisotropyKind::SmoothedLq { q, epsilon },
            dimension,
        })
    }

    pub fn kind(&self) -> &AnisotropyKind {
        &self.kind
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn is_euclidean(&self) -> bool {
        matches!(self.kind, AnisotropyKind::Euclidean)
    }

    /// True when `H` is exactly 1-homogeneous (everything except smoothed ℓq with ε > 0).
    pub fn is_exactly_homogeneous(&self) -> bool {
        !matches!(self.kind, AnisotropyKind::SmoothedLq { epsilon, .. } if epsilon > 0.0)
    }

    fn check_len(&self, n: usize) -> Result<(), AnisotropyError> {
        if n != self.dimension {
            return Err(AnisotropyError::DimensionMismatch {
                expected: self.dimension,
                got: n,
            });
        }
        Ok(())
    }

    /// `H(ξ)` only. Defined (and zero) at the origin.
    pub fn value<const N: usize>(&self, xi: &SVector<f64, N>) -> Result<f64, AnisotropyError> {
        self.check_len(N)?;
        Ok(match &self.kind {
            AnisotropyKind::Euclidean => xi.norm(),
            AnisotropyKind::Ellipsoidal(a) => {
                let a = fixed_matrix::<N>(a);
                xi.dot(&(a * xi)).max(0.0).sqrt()
            }
            AnisotropyKind::SmoothedLq { q, epsilon } => lq_sum(xi, *q, *epsilon).powf(1.0 / q),
        })
    }

    /// Value, gradient and Hessian of `H` at `ξ`.
    pub fn evaluate<const N: usize>(
        &self,
        xi: &SVector<f64, N>,
    ) -> Result<AnisotropyEval<N>, AnisotropyError> {
        self.check_len(N)?;
        let norm = xi.norm();
        if !(norm >= DEGENERACY_FLOOR) {
            return Err(AnisotropyError::DegenerateGradient(norm));
        }
        Ok(match &self.kind {
            AnisotropyKind::Euclidean => {
                let unit = xi / norm;
                AnisotropyEval {
                    value: norm,
                    gradient: unit,
                    hessian: (SMatrix::<f64, N, N>::identity() - unit * unit.transpose()) / norm,
                }
            }
            AnisotropyKind::Ellipsoidal(a) => {
                let a = fixed_matrix::<N>(a);
                let a_xi = a * xi;
                let h = xi.dot(&a_xi).sqrt();
                AnisotropyEval {
                    value: h,
                    gradient: a_xi / h,
                    hessian: (a * (h * h) - a_xi * a_xi.transpose()) / (h * h * h),
                }
            }
            AnisotropyKind::SmoothedLq { q, epsilon } => lq_evaluate(xi, *q, *epsilon),
        })
    }

    /// `D²(H²/2)(ξ) = ∇H∇Hᵀ + H D²H`, the 0-homogeneous metric of the operator.
    ///
    /// At degenerate `ξ` the value along the first coordinate axis is returned.
    pub fn metric<const N: usize>(
        &self,
        xi: &SVector<f64, N>,
    ) -> Result<SMatrix<f64, N, N>, AnisotropyError> {
        self.check_len(N)?;
        if let AnisotropyKind::Ellipsoidal(a) = &self.kind {
            return Ok(fixed_matrix::<N>(a));
        }
        if let AnisotropyKind::Euclidean = &self.kind {
            return Ok(SMatrix::<f64, N, N>::identity());
        }
        let point = if xi.norm() < DEGENERACY_FLOOR {
            SVector::<f64, N>::from_fn(|i, _| if i == 0 { 1.0 } else { 0.0 })
        } else {
            *xi
        };
        let e = self.evaluate(&point)?;
        Ok(e.gradient * e.gradient.transpose() + e.hessian * e.value)
    }

    /// Max over random `(s, ξ)` of `|H(sξ) − |s|H(ξ)| / (|s| H(ξ))`.
    pub fn check_homogeneity(&self, n_samples: usize, seed: u64) -> Result<f64, AnisotropyError> {
        self.dispatch(
            |a| a.homogeneity_n::<2>(n_samples, seed),
            |a| a.homogeneity_n::<3>(n_samples, seed),
        )
    }

    /// Max relative Euler-identity error `|⟨∇H(ξ), ξ⟩ − H(ξ)| / H(ξ)` and max
    /// scaled Hessian-kernel error `|D²H(ξ)ξ| / (‖D²H(ξ)‖ |ξ|)`.
    pub fn check_euler(&self, n_samples: usize, seed: u64) -> Result<(f64, f64), AnisotropyError> {
        self.dispatch(
            |a| a.euler_n::<2>(n_samples, seed),
            |a| a.euler_n::<3>(n_samples, seed),
        )
    }

    /// Minimum of `⟨D²H(ξ)v, v⟩/|v|²` over `ξ` on `{H = 1}` and `v ⊥ ∇H(ξ)`.
    pub fn estimate_ellipticity(
        &self,
        n_boundary_samples: usize,
        seed: u64,
    ) -> Result<f64, AnisotropyError> {
        let lambda = self.dispatch(
            |a| {
                Ok(a.sweep_2d(n_boundary_samples, seed, |a, omega| {
                    a.tangential_curvature_2d(omega)
                }))
            },
            |a| {
                Ok(a.sweep_3d(n_boundary_samples, seed, |a, omega| {
                    a.tangential_curvature_3d(omega)
                }))
            },
        )?;
        if !(lambda > ELLIPTICITY_FLOOR) {
            return Err(AnisotropyError::NotUniformlyElliptic(lambda));
        }
        Ok(lambda)
    }

    /// `(min H, max H)` over the Euclidean unit sphere.
    pub fn estimate_norm_equivalence(
        &self,
        n_samples: usize,
        seed: u64,
    ) -> Result<(f64, f64), AnisotropyError> {
        let value2 = |a: &Self, w: Vector2<f64>| a.value(&w).unwrap_or(f64::NAN);
        let value3 = |a: &Self, w: Vector3<f64>| a.value(&w).unwrap_or(f64::NAN);
        self.dispatch(
            |a| {
                let lo = a.sweep_2d(n_samples, seed, |a, w| value2(a, w));
                let hi = -a.sweep_2d(n_samples, seed, |a, w| -value2(a, w));
                Ok((lo, hi))
            },
            |a| {
                let lo = a.sweep_3d(n_samples, seed, |a, w| value3(a, w));
                let hi = -a.sweep_3d(n_samples, seed, |a, w| -value3(a, w));
                Ok((lo, hi))
            },
        )
    }

    /// All sampled hypothesis checks in one report.
    pub fn report(&self, n_samples: usize, seed: u64) -> Result<AnisotropyReport, AnisotropyError> {
        let max_homogeneity_error = self.check_homogeneity(n_samples, seed)?;
        let (max_euler_error, max_hessian_kernel_error) = self.check_euler(n_samples, seed)?;
        let lambda_hat = self.estimate_ellipticity(n_samples, seed)?;
        let (c1_hat, c2_hat) = self.estimate_norm_equivalence(n_samples, seed)?;
        Ok(AnisotropyReport {
            lambda_hat,
            c1_hat,
            c2_hat,
            max_homogeneity_error,
            max_euler_error,
            max_hessian_kernel_error,
            sample_count: n_samples,
        })
    }

    fn dispatch<T>(
        &self,
        two: impl FnOnce(&Self) -> Result<T, AnisotropyError>,
        three: impl FnOnce(&Self) -> Result<T, AnisotropyError>,
    ) -> Result<T, AnisotropyError> {
        match self.dimension {
            2 => two(self),
            3 => three(self),
            n => Err(AnisotropyError::UnsupportedDimension(n)),
        }
    }

    fn homogeneity_n<const N: usize>(&self, n: usize, seed: u64) -> Result<f64, AnisotropyError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = 0.0f64;
        for k in 0..n.max(1) {
            let xi = if self.is_exactly_homogeneous() || k % 2 == 0 {
                random_vector::<N>(&mut rng)
            } else {
                // probe the smoothing scale where homogeneity is lost
                let eps = match self.kind {
                    AnisotropyKind::SmoothedLq { epsilon, .. } => epsilon,
                    _ => 1.0,
                };
                random_direction::<N>(&mut rng) * eps * rng.gen_range(0.1..10.0)
            };
            let s = random_scale(&mut rng);
            let h = self.value(&xi)?;
            let hs = self.value(&(xi * s))?;
            worst = worst.max((hs - s.abs() * h).abs() / (s.abs() * h));
        }
        Ok(worst)
    }

    fn euler_n<const N: usize>(&self, n: usize, seed: u64) -> Result<(f64, f64), AnisotropyError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
        let mut euler = 0.0f64;
        let mut kernel = 0.0f64;
        for _ in 0..n.max(1) {
            let xi = random_vector::<N>(&mut rng);
            let e = self.evaluate(&xi)?;
            euler = euler.max((e.gradient.dot(&xi) - e.value).abs() / e.value);
            let scale = e.hessian.norm() * xi.norm();
            if scale > 0.0 {
                kernel = kernel.max((e.hessian * xi).norm() / scale);
            }
        }
        Ok((euler, kernel))
    }

    /// Point on `{H = 1}` along direction `ω`.
    fn unit_level_point<const N: usize>(&self, omega: &SVector<f64, N>) -> Option<SVector<f64, N>> {
        let h = self.value(omega).ok()?;
        let mut t = 1.0 / h;
        if !self.is_exactly_homogeneous() {
            for _ in 0..50 {
                let e = self.evaluate(&(omega * t)).ok()?;
                let slope = e.gradient.dot(omega);
                let step = (e.value - 1.0) / slope;
                t -= step;
                if step.abs() <= 1e-15 * t {
                    break;
                }
            }
        }
        Some(omega * t)
    }

    fn tangential_curvature_2d(&self, omega: Vector2<f64>) -> f64 {
        let Some(xi) = self.unit_level_point(&omega) else {
            return f64::NAN;
        };
        let Ok(e) = self.evaluate(&xi) else {
            return f64::NAN;
        };
        let v = Vector2::new(-e.gradient.y, e.gradient.x).normalize();
        v.dot(&(e.hessian * v))
    }

    fn tangential_curvature_3d(&self, omega: Vector3<f64>) -> f64 {
        let Some(xi) = self.unit_level_point(&omega) else {
            return f64::NAN;
        };
        let Ok(e) = self.evaluate(&xi) else {
            return f64::NAN;
        };
        let n = e.gradient.normalize();
        let seed = if n.x.abs() < 0.9 {
            Vector3::x()
        } else {
            Vector3::y()
        };
        let t1 = (seed - n * n.dot(&seed)).normalize();
        let t2 = n.cross(&t1);
        let a = t1.dot(&(e.hessian * t1));
        let b = t1.dot(&(e.hessian * t2));
        let c = t2.dot(&(e.hessian * t2));
        // smallest eigenvalue of the projected 2x2 block
        0.5 * (a + c) - (0.25 * (a - c) * (a - c) + b * b).sqrt()
    }

    /// Minimum of `f` over unit circle directions: uniform sweep, then seeded
    /// random refinement in shrinking brackets around the best sample.
    fn sweep_2d(&self, n: usize, seed: u64, f: impl Fn(&Self, Vector2<f64>) -> f64) -> f64 {
        let n = n.max(8);
        let dir = |t: f64| Vector2::new(t.cos(), t.sin());
        let step = std::f64::consts::TAU / n as f64;
        let (mut best_t, mut best) = (0.0, f64::INFINITY);
        for k in 0..n {
            let t = k as f64 * step;
            let v = f(self, dir(t));
            if v < best {
                best = v;
                best_t = t;
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x51f1_5eed);
        let mut width = step;
        for _ in 0..40 {
            let centre = best_t;
            for _ in 0..16 {
                let t = centre + rng.gen_range(-width..width);
                let v = f(self, dir(t));
                if v < best {
                    best = v;
                    best_t = t;
                }
            }
            width *= 0.5;
        }
        best
    }

    fn sweep_3d(&self, n: usize, seed: u64, f: impl Fn(&Self, Vector3<f64>) -> f64) -> f64 {
        let n = n.max(16);
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        let (mut best_w, mut best) = (Vector3::z(), f64::INFINITY);
        // Fibonacci lattice, plus the coordinate axes
        let axes = [Vector3::x(), Vector3::y(), Vector3::z()];
        for w in axes.into_iter().chain((0..n).map(|k| {
            let z = 1.0 - 2.0 * (k as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * k as f64;
            Vector3::new(r * phi.cos(), r * phi.sin(), z)
        })) {
            let v = f(self, w);
            if v < best {
                best = v;
                best_w = w;
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x51f1_5eed);
        let mut width = (4.0 / n as f64).sqrt() * 2.0;
        for _ in 0..40 {
            let centre = best_w;
            for _ in 0..24 {
                let jitter = Vector3::new(
                    rng.gen_range(-width..width),
                    rng.gen_range(-width..width),
                    rng.gen_range(-width..width),
                );
                let w = (centre + jitter).normalize();
                let v = f(self, w);
                if v < best {
                    best = v;
                    best_w = w;
                }
            }
            width *= 0.5;
        }
        best
    }
}

fn check_dimension(n: usize) -> Result<(), AnisotropyError> {
    if n < 2 {
        return Err(AnisotropyError::InvalidDimension(n));
    }
    Ok(())
}

fn fixed_matrix<const N: usize>(a: &DMatrix<f64>) -> SMatrix<f64, N, N> {
    SMatrix::<f64, N, N>::from_fn(|i, j| a[(i, j)])
}

/// `Σ (ξᵢ² + ε²)^{q/2} − N ε^q`, computed without cancellation for small ξ.
fn lq_sum<const N: usize>(xi: &SVector<f64, N>, q: f64, eps: f64) -> f64 {
    if eps == 0.0 {
        return xi.iter().map(|x| x.abs().powf(q)).sum();
    }
    let eps_q = eps.powf(q);
    xi.iter()
        .map(|x| eps_q * (0.5 * q * (x * x / (eps * eps)).ln_1p()).exp_m1())
        .sum()
}

fn lq_evaluate<const N: usize>(xi: &SVector<f64, N>, q: f64, eps: f64) -> AnisotropyEval<N> {
    let h = lq_sum(xi, q, eps).powf(1.0 / q);
    let e2 = eps * eps;
    // a_i = ξ_i (ξ_i² + ε²)^{q/2 − 1},  ∂H/∂ξ_i = H^{1−q} a_i
    let a = xi.map(|x| {
        let w = x * x + e2;
        if w == 0.0 {
            0.0
        } else {
            x * w.powf(0.5 * q - 1.0)
        }
    });
    let da = xi.map(|x| {
        let w = x * x + e2;
        if w == 0.0 {
            0.0
        } else {
            w.powf(0.5 * q - 2.0) * ((q - 1.0) * x * x + e2)
        }
    });
    let h1q = h.powf(1.0 - q);
    let gradient = a * h1q;
    let mut hessian = a * a.transpose() * ((1.0 - q) * h.powf(1.0 - 2.0 * q));
    for i in 0..N {
        hessian[(i, i)] += h1q * da[i];
    }
    AnisotropyEval {
        value: h,
        gradient,
        hessian,
    }
}

fn random_direction<const N: usize>(rng: &mut ChaCha8Rng) -> SVector<f64, N> {
    loop {
        let v = SVector::<f64, N>::from_fn(|_, _| rng.gen_range(-1.0..1.0));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

fn random_vector<const N: usize>(rng: &mut ChaCha8Rng) -> SVector<f64, N> {
    random_direction::<N>(rng) * 10f64.powf(rng.gen_range(-3.0..3.0))
}

fn random_scale(rng: &mut ChaCha8Rng) -> f64 {
    let s = 10f64.powf(rng.gen_range(-3.0..3.0));
    if rng.gen_bool(0.5) {
        s
    } else {
        -s
    }
}
