//! Scalar and vector fields on the mapped polar grid of a [`StarDomain`].
//!
//! Derivatives use second-order central differences in `s` (one-sided at the
//! boundary ring) and spectral differentiation in `θ`. The origin is shared by
//! all rays; its gradient is recovered from one-sided radial derivatives along
//! every ray and averaged over the ring of directions.

mod smooth;
mod source;

pub use smooth::{Bubble, RadialBump, SmoothField};
pub use source::{
    ConstantSource, FnSource, ManufacturedSource, PowerSource, ShiftedSource, SourceGrowth,
    SourceModel,
};

use crate::anisotropy::{Anisotropy, AnisotropyError, DEGENERACY_FLOOR};
use crate::domain::{DomainError, RadiusFn, StarDomain};
use crate::parallel;
use crate::profile::Profile;
use nalgebra::{Matrix2, Vector2};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;
use std::io::Write;
use std::sync::Arc;
use thiserror::Error;

/// Nodes with `|∇u|` below this fraction of `max |∇u|` form the critical set.
pub const GRADIENT_FLOOR: f64 = 1e-10;

/// Masked fraction above which manufactured sources are flagged.
pub const MASK_WARNING_FRACTION: f64 = 0.01;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error(transparent)]
    Anisotropy(#[from] AnisotropyError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("expected {expected} nodal values, got {got}")]
    WrongLength { expected: usize, got: usize },
    #[error("operator requires a 2-dimensional anisotropy, got dimension {0}")]
    NotPlanar(usize),
    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Scalar field sampled on the grid of a domain.
#[derive(Debug, Clone)]
pub struct GridField {
    domain: Arc<StarDomain>,
    values: Vec<f64>,
}

impl GridField {
    pub fn from_values(domain: Arc<StarDomain>, values: Vec<f64>) -> Result<Self, FieldError> {
        if values.len() != domain.len() {
            return Err(FieldError::WrongLength {
                expected: domain.len(),
                got: values.len(),
            });
        }
        Ok(Self { domain, values })
    }

    pub fn zeros(domain: Arc<StarDomain>) -> Self {
        let values = vec![0.0; domain.len()];
        Self { domain, values }
    }

    /// Sample `f` at every node.
    pub fn from_fn(domain: Arc<StarDomain>, f: impl Fn(Vector2<f64>) -> f64 + Sync + Send) -> Self {
        let nt = domain.n_theta();
        let rings = parallel::map(domain.n_r() + 1, |i| {
            if i == 0 {
                return vec![f(Vector2::zeros()); nt];
            }
            (0..nt).map(|j| f(domain.node(i, j))).collect::<Vec<_>>()
        });
        Self {
            values: rings.concat(),
            domain,
        }
    }

    pub fn sample(domain: Arc<StarDomain>, u: &dyn SmoothField) -> Self {
        Self::from_fn(domain, |x| u.value(x))
    }

    pub fn domain(&self) -> &Arc<StarDomain> {
        &self.domain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.domain.index(i, j)]
    }

    /// Values on the boundary ring.
    pub fn trace(&self) -> &[f64] {
        let nt = self.domain.n_theta();
        let start = self.domain.n_r() * nt;
        &self.values[start..start + nt]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `∫_Ω u dx`.
    pub fn integrate(&self) -> f64 {
        self.domain.integrate_nodal(&self.values)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            domain: self.domain.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        self.map(|v| v * factor)
    }

    /// Max nodal difference to another field on the same grid.
    pub fn max_diff(&self, other: &GridField) -> Result<f64, FieldError> {
        if self.domain.len() != other.domain.len() {
            return Err(FieldError::GridMismatch);
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    /// Write `r_index,theta_index,x1,x2,value` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), FieldError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["r_index", "theta_index", "x1", "x2", "value"])?;
        let d = &self.domain;
        for i in 0..=d.n_r() {
            for j in 0..d.n_theta() {
                let x = d.node(i, j);
                w.write_record([
                    i.to_string(),
                    j.to_string(),
                    crate::report::format_sig17(x.x),
                    crate::report::format_sig17(x.y),
                    crate::report::format_sig17(self.at(i, j)),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Vector field on the grid, Cartesian components.
#[derive(Debug, Clone)]
pub struct VectorField {
    domain: Arc<StarDomain>,
    values: Vec<Vector2<f64>>,
}

impl VectorField {
    pub fn from_values(
        domain: Arc<StarDomain>,
        values: Vec<Vector2<f64>>,
    ) -> Result<Self, FieldError> {
        if values.len() != domain.len() {
            return Err(FieldError::WrongLength {
                expected: domain.len(),
                got: values.len(),
            });
        }
        Ok(Self { domain, values })
    }

    pub fn from_fn(
        domain: Arc<StarDomain>,
        f: impl Fn(Vector2<f64>) -> Vector2<f64> + Sync + Send,
    ) -> Self {
        let nt = domain.n_theta();
        let rings = parallel::map(domain.n_r() + 1, |i| {
            if i == 0 {
                return vec![f(Vector2::zeros()); nt];
            }
            (0..nt).map(|j| f(domain.node(i, j))).collect::<Vec<_>>()
        });
        Self {
            values: rings.concat(),
            domain,
        }
    }

    pub fn domain(&self) -> &Arc<StarDomain> {
        &self.domain
    }

    pub fn values(&self) -> &[Vector2<f64>] {
        &self.values
    }

    pub fn at(&self, i: usize, j: usize) -> Vector2<f64> {
        self.values[self.domain.index(i, j)]
    }

    pub fn component(&self, k: usize) -> GridField {
        GridField {
            domain: self.domain.clone(),
            values: self.values.iter().map(|v| v[k]).collect(),
        }
    }

    pub fn max_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.norm()))
    }
}

/// Membership of each node in the discrete critical set `{∇u = 0}`.
#[derive(Debug, Clone)]
pub struct CriticalMask {
    masked: Vec<bool>,
    /// Absolute gradient threshold used.
    pub floor: f64,
}

impl CriticalMask {
    pub fn is_masked(&self, k: usize) -> bool {
        self.masked[k]
    }

    pub fn count(&self) -> usize {
        self.masked.iter().filter(|&&m| m).count()
    }

    pub fn fraction(&self) -> f64 {
        self.count() as f64 / self.masked.len() as f64
    }
}

/// Spectral `∂/∂θ` on rings of a fixed length.
struct ThetaDerivative {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    n: usize,
}

impl ThetaDerivative {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            n,
        }
    }

    fn apply(&self, ring: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut buf: Vec<Complex<f64>> = ring.iter().map(|&x| Complex::new(x, 0.0)).collect();
        self.forward.process(&mut buf);
        for (k, c) in buf.iter_mut().enumerate() {
            let freq = if 2 * k < n {
                k as f64
            } else if 2 * k == n {
                0.0
            } else {
                k as f64 - n as f64
            };
            *c = Complex::new(-c.im * freq, c.re * freq);
        }
        self.inverse.process(&mut buf);
        buf.iter().map(|c| c.re / n as f64).collect()
    }
}

fn center_gradient(d: &StarDomain, v: &[f64]) -> Vector2<f64> {
    let nt = d.n_theta();
    let h = d.h();
    let mut g = Vector2::zeros();
    for j in 0..nt {
        let us = (-3.0 * v[d.index(0, j)] + 4.0 * v[d.index(1, j)] - v[d.index(2, j)]) / (2.0 * h);
        g += d.radial_dir(j) * (us / d.rho(j));
    }
    g * (2.0 / nt as f64)
}

/// Cartesian gradient of a grid field.
pub fn gradient(u: &GridField) -> VectorField {
    let d = u.domain.clone();
    let (nr, nt) = (d.n_r(), d.n_theta());
    let h = d.h();
    let v = &u.values;
    let deriv = ThetaDerivative::new(nt);
    let center = center_gradient(&d, v);
    let rings = parallel::map(nr + 1, |i| {
        if i == 0 {
            return vec![center; nt];
        }
        let ut = deriv.apply(&v[i * nt..(i + 1) * nt]);
        let s = d.s(i);
        (0..nt)
            .map(|j| {
                let us = if i < nr {
                    (v[d.index(i + 1, j)] - v[d.index(i - 1, j)]) / (2.0 * h)
                } else {
                    (3.0 * v[d.index(nr, j)] - 4.0 * v[d.index(nr - 1, j)] + v[d.index(nr - 2, j)])
                        / (2.0 * h)
                };
                let (r, dr) = (d.rho(j), d.drho(j));
                let g_r = us / r;
                let g_t = (ut[j] - s * dr * g_r) / (s * r);
                d.radial_dir(j) * g_r + d.angular_dir(j) * g_t
            })
            .collect::<Vec<_>>()
    });
    VectorField {
        domain: d,
        values: rings.concat(),
    }
}

/// Jacobian `[∂v_a/∂x_b]` of a vector field, one matrix per node.
pub fn jacobian(v: &VectorField) -> Vec<Matrix2<f64>> {
    let g1 = gradient(&v.component(0));
    let g2 = gradient(&v.component(1));
    g1.values
        .iter()
        .zip(&g2.values)
        .map(|(a, b)| Matrix2::new(a.x, a.y, b.x, b.y))
        .collect()
}

/// Divergence of a vector field.
pub fn divergence(v: &VectorField) -> GridField {
    let g1 = gradient(&v.component(0));
    let g2 = gradient(&v.component(1));
    GridField {
        domain: v.domain.clone(),
        values: g1
            .values
            .iter()
            .zip(&g2.values)
            .map(|(a, b)| a.x + b.y)
            .collect(),
    }
}

/// Everything the identity and residual computations need at every node.
#[derive(Debug, Clone)]
pub struct StressData {
    pub gradient: VectorField,
    /// `H(∇u)`, zero on masked nodes.
    pub h: Vec<f64>,
    /// `∇H(∇u)`, zero on masked nodes.
    pub grad_h: Vec<Vector2<f64>>,
    /// `B'(H(∇u)) ∇H(∇u)`.
    pub stress: VectorField,
    pub mask: CriticalMask,
}

/// Evaluate `H`, `∇H` and the stress `B'(H(∇u))∇H(∇u)` from a gradient field.
pub fn stress_from_gradient(
    gradient: VectorField,
    pr: &Profile,
    a: &Anisotropy,
) -> Result<StressData, FieldError> {
    if a.dimension() != 2 {
        return Err(FieldError::NotPlanar(a.dimension()));
    }
    let floor = (GRADIENT_FLOOR * gradient.max_norm()).max(DEGENERACY_FLOOR);
    let evals = parallel::map(gradient.values.len(), |k| {
        let xi = gradient.values[k];
        if !(xi.norm() >= floor) {
            return Ok(None);
        }
        a.evaluate(&xi).map(Some)
    });
    let n = gradient.values.len();
    let mut h = vec![0.0; n];
    let mut grad_h = vec![Vector2::zeros(); n];
    let mut stress = vec![Vector2::zeros(); n];
    let mut masked = vec![false; n];
    for (k, e) in evals.into_iter().enumerate() {
        match e? {
            Some(e) => {
                h[k] = e.value;
                grad_h[k] = e.gradient;
                stress[k] = e.gradient * pr.db(e.value);
            }
            None => masked[k] = true,
        }
    }
    Ok(StressData {
        stress: VectorField {
            domain: gradient.domain.clone(),
            values: stress,
        },
        gradient,
        h,
        grad_h,
        mask: CriticalMask { masked, floor },
    })
}

/// `S = B'(H(∇u))∇H(∇u)` with `S = 0` on the critical mask.
pub fn stress_field(
    u: &GridField,
    pr: &Profile,
    a: &Anisotropy,
) -> Result<(VectorField, CriticalMask), FieldError> {
    let data = stress_from_gradient(gradient(u), pr, a)?;
    Ok((data.stress, data.mask))
}

/// Discrete manufactured source `f = −div S(∇u)` on the grid.
#[derive(Debug, Clone)]
pub struct GridSource {
    pub f: GridField,
    pub masked_fraction: f64,
    /// Set when more than 1% of the nodes were masked.
    pub warning: bool,
}

/// `f = −div(B'(H(∇u))∇H(∇u))` evaluated with the grid stencils.
pub fn manufactured_source(
    u: &GridField,
    pr: &Profile,
    a: &Anisotropy,
) -> Result<GridSource, FieldError> {
    let (s, mask) = stress_field(u, pr, a)?;
    let f = divergence(&s).scaled(-1.0);
    let masked_fraction = mask.fraction();
    let warning = masked_fraction > MASK_WARNING_FRACTION;
    if warning {
        log::warn!(
            "manufactured source: {:.2}% of nodes lie in the critical set",
            100.0 * masked_fraction
        );
    }
    Ok(GridSource {
        f,
        masked_fraction,
        warning,
    })
}

/// `∫ S·∇φ dx − ∫ g(x, u) φ dx`, the weak form tested against `φ`.
pub fn weak_residual(
    u: &GridField,
    src: &dyn SourceModel,
    pr: &Profile,
    a: &Anisotropy,
    phi: &GridField,
) -> Result<f64, FieldError> {
    if u.domain != phi.domain {
        return Err(FieldError::GridMismatch);
    }
    let (s, _) = stress_field(u, pr, a)?;
    let gphi = gradient(phi);
    let d = &u.domain;
    let nt = d.n_theta();
    let integrand = parallel::map(d.len(), |k| {
        let x = d.node(k / nt, k % nt);
        s.values[k].dot(&gphi.values[k]) - src.g(x, u.values[k]) * phi.values[k]
    });
    Ok(d.integrate_nodal(&integrand))
}

/// Refinement diagnostic for the Sobolev regularity of the stress field.
#[derive(Debug, Clone, Serialize)]
pub struct SobolevDiagnostic {
    pub resolutions: Vec<usize>,
    /// `∫_E |∇S|²` per level.
    #[serde(serialize_with = "crate::report::sig17_vec")]
    pub stress_seminorm: Vec<f64>,
    /// Successive ratios of `stress_seminorm`.
    #[serde(serialize_with = "crate::report::sig17_vec")]
    pub ratios: Vec<f64>,
    /// `∫_E |∇(|∇u|^{p−2}∇u)|²` per level.
    #[serde(serialize_with = "crate::report::sig17_vec")]
    pub plap_flux_seminorm: Vec<f64>,
    /// `∫_E |∇(|∇u|^{p−1})|²` per level.
    #[serde(serialize_with = "crate::report::sig17_vec")]
    pub gradient_power_seminorm: Vec<f64>,
    /// `∫_E |D²u|²` per level.
    #[serde(serialize_with = "crate::report::sig17_vec")]
    pub hessian_l2: Vec<f64>,
}

fn seminorm_inner(v: &VectorField, sigma: f64) -> f64 {
    let jac = jacobian(v);
    let sq: Vec<f64> = jac.iter().map(|m| m.norm_squared()).collect();
    v.domain.integrate_nodal_inner(&sq, sigma)
}

/// Discrete `∫_E |∇S|²` over `E = {s ≤ sigma}` at each resolution.
pub fn stress_sobolev_diagnostic(
    u: &dyn SmoothField,
    pr: &Profile,
    a: &Anisotropy,
    radius: &RadiusFn,
    resolutions: &[usize],
    sigma: f64,
) -> Result<SobolevDiagnostic, FieldError> {
    let p = pr.p();
    let mut out = SobolevDiagnostic {
        resolutions: resolutions.to_vec(),
        stress_seminorm: vec![],
        ratios: vec![],
        plap_flux_seminorm: vec![],
        gradient_power_seminorm: vec![],
        hessian_l2: vec![],
    };
    for &n in resolutions {
        let d = Arc::new(StarDomain::with_resolution(radius.clone(), n)?);
        let field = GridField::sample(d.clone(), u);
        let data = stress_from_gradient(gradient(&field), pr, a)?;
        out.stress_seminorm
            .push(seminorm_inner(&data.stress, sigma));
        let g = &data.gradient;
        let flux = VectorField {
            domain: d.clone(),
            values: g
                .values
                .iter()
                .map(|x| {
                    let n = x.norm();
                    if n > 0.0 {
                        x * n.powf(p - 2.0)
                    } else {
                        Vector2::zeros()
                    }
                })
                .collect(),
        };
        out.plap_flux_seminorm.push(seminorm_inner(&flux, sigma));
        let gp = GridField {
            domain: d.clone(),
            values: g.values.iter().map(|x| x.norm().powf(p - 1.0)).collect(),
        };
        let ggp = gradient(&gp);
        let sq: Vec<f64> = ggp.values.iter().map(|v| v.norm_squared()).collect();
        out.gradient_power_seminorm
            .push(d.integrate_nodal_inner(&sq, sigma));
        out.hessian_l2.push(seminorm_inner(g, sigma));
    }
    out.ratios = out
        .stress_seminorm
        .windows(2)
        .map(|w| w[1] / w[0])
        .collect();
    Ok(out)
}
