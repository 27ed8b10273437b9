//! Both sides of the Pohozaev identity for
//! `−div(B'(H(∇u))∇H(∇u)) = g(x, u)` on a star-shaped planar domain, plus the
//! derived checks: the p-Laplacian form, the Dirichlet boundary reduction, the
//! nonexistence condition, the critical exponent and the whole-space variant.
//!
//! With `N = 2` the identity reads
//!
//! ```text
//! N∫G + ∫x·∇ₓG − N∫B(H(∇u)) + ∫B'(H(∇u))H(∇u)
//!     = ∮G(x,u)(x·η) − ∮B(H(∇u))(x·η) + ∮B'(H(∇u))(x·∇u)(∇H(∇u)·η)
//! ```
//!
//! Every term is computed independently from the same grid field.

use crate::anisotropy::Anisotropy;
use crate::domain::{RadiusFn, StarDomain, StarShapeClass};
use crate::field::{
    gradient, stress_from_gradient, FieldError, GridField, ManufacturedSource, SmoothField,
    SourceModel, StressData,
};
use crate::parallel;
use crate::profile::Profile;
use crate::report::{sig17, sig17_opt};
use nalgebra::Vector2;
use serde::Serialize;
use std::f64::consts::TAU;
use std::sync::Arc;
use thiserror::Error;

/// Boundary values below this fraction of `max |u|` count as zero trace.
pub const TRACE_TOLERANCE: f64 = 1e-12;

const DIMENSION: f64 = 2.0;

#[derive(Debug, Error)]
pub enum PohozaevError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("the p-Laplacian form needs a power profile, a Euclidean norm and g = g(u): {0}")]
    WrongSpecialization(&'static str),
    #[error("boundary trace {max_trace:e} exceeds the zero-trace tolerance {tolerance:e}")]
    TraceNotZero { max_trace: f64, tolerance: f64 },
    #[error(
        "supercritical dimension pair: the critical exponent needs 1 < p < N, got p = {p}, N = {n}"
    )]
    SupercriticalDimensionPair { p: f64, n: usize },
    #[error("support radius {support} is not inside the integration ball of radius {radius}")]
    SupportEscapesGrid { support: f64, radius: f64 },
    #[error("the whole-space identity requires kappa = 0, got {0}")]
    NonzeroKappa(f64),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// The seven terms of the identity and the resulting residual.
#[derive(Debug, Clone, Serialize)]
pub struct IdentityReport {
    /// `N∫G(x, u)`.
    #[serde(serialize_with = "sig17")]
    pub n_g: f64,
    /// `∫x·∇ₓG(x, u)`.
    #[serde(serialize_with = "sig17")]
    pub x_grad_g: f64,
    /// `−N∫B(H(∇u))`.
    #[serde(serialize_with = "sig17")]
    pub minus_n_b: f64,
    /// `∫B'(H(∇u))H(∇u)`.
    #[serde(serialize_with = "sig17")]
    pub bprime_h: f64,
    /// `∮G(x, u)(x·η)`.
    #[serde(serialize_with = "sig17")]
    pub boundary_g: f64,
    /// `−∮B(H(∇u))(x·η)`.
    #[serde(serialize_with = "sig17")]
    pub boundary_minus_b: f64,
    /// `∮B'(H(∇u))(x·∇u)(∇H(∇u)·η)`.
    #[serde(serialize_with = "sig17")]
    pub boundary_stress: f64,
    #[serde(serialize_with = "sig17")]
    pub lhs: f64,
    #[serde(serialize_with = "sig17")]
    pub rhs: f64,
    #[serde(serialize_with = "sig17")]
    pub residual_abs: f64,
    /// `residual_abs` over the largest absolute term.
    #[serde(serialize_with = "sig17")]
    pub residual_rel: f64,
    pub resolution: usize,
    #[serde(serialize_with = "sig17")]
    pub masked_fraction: f64,
}

impl IdentityReport {
    fn assemble(volume: [f64; 4], boundary: [f64; 3], resolution: usize, masked: f64) -> Self {
        let lhs: f64 = volume.iter().sum();
        let rhs: f64 = boundary.iter().sum();
        let scale = volume
            .iter()
            .chain(boundary.iter())
            .fold(0.0f64, |m, t| m.max(t.abs()));
        let residual_abs = (lhs - rhs).abs();
        Self {
            n_g: volume[0],
            x_grad_g: volume[1],
            minus_n_b: volume[2],
            bprime_h: volume[3],
            boundary_g: boundary[0],
            boundary_minus_b: boundary[1],
            boundary_stress: boundary[2],
            lhs,
            rhs,
            residual_abs,
            residual_rel: if scale > 0.0 {
                residual_abs / scale
            } else {
                0.0
            },
            resolution,
            masked_fraction: masked,
        }
    }

    pub fn volume_terms(&self) -> [f64; 4] {
        [self.n_g, self.x_grad_g, self.minus_n_b, self.bprime_h]
    }

    pub fn boundary_terms(&self) -> [f64; 3] {
        [self.boundary_g, self.boundary_minus_b, self.boundary_stress]
    }

    pub fn term_scale(&self) -> f64 {
        self.volume_terms()
            .iter()
            .chain(self.boundary_terms().iter())
            .fold(0.0f64, |m, t| m.max(t.abs()))
    }
}

struct NodalTerms {
    data: StressData,
    b: Vec<f64>,
    bprime: Vec<f64>,
}

fn nodal_terms(u: &GridField, pr: &Profile, a: &Anisotropy) -> Result<NodalTerms, FieldError> {
    let data = stress_from_gradient(gradient(u), pr, a)?;
    let b = data.h.iter().map(|&h| pr.b(h)).collect();
    let bprime = data.h.iter().map(|&h| pr.db(h)).collect();
    Ok(NodalTerms { data, b, bprime })
}

/// Evaluate all seven terms of the identity for `u` on its own grid.
///
/// `u` need not vanish on the boundary.
pub fn identity_sides(
    u: &GridField,
    src: &dyn SourceModel,
    pr: &Profile,
    a: &Anisotropy,
) -> Result<IdentityReport, PohozaevError> {
    let d = u.domain().clone();
    let nt = d.n_theta();
    let vals = u.values();
    let t = nodal_terms(u, pr, a)?;
    let nodes = parallel::map(d.len(), |k| {
        let x = d.node(k / nt, k % nt);
        let g = src.primitive(x, vals[k]);
        let xg = x.dot(&src.primitive_x(x, vals[k]));
        [
            DIMENSION * g,
            xg,
            -DIMENSION * t.b[k],
            t.bprime[k] * t.data.h[k],
        ]
    });
    let mut volume = [0.0; 4];
    for (c, slot) in volume.iter_mut().enumerate() {
        let col: Vec<f64> = nodes.iter().map(|v| v[c]).collect();
        *slot = d.integrate_nodal(&col);
    }

    let nr = d.n_r();
    let mut boundary = [0.0; 3];
    for j in 0..nt {
        let k = d.index(nr, j);
        let x = d.node(nr, j);
        let eta = d.boundary_normal(j);
        let x_eta = x.dot(&eta);
        let w = d.boundary_weight(j);
        let grad = t.data.gradient.values()[k];
        boundary[0] += w * src.primitive(x, vals[k]) * x_eta;
        boundary[1] -= w * t.b[k] * x_eta;
        boundary[2] += w * t.bprime[k] * x.dot(&grad) * t.data.grad_h[k].dot(&eta);
    }
    Ok(IdentityReport::assemble(
        volume,
        boundary,
        nr,
        t.data.mask.fraction(),
    ))
}

/// The identity written for the p-Laplacian with `g = g(u)`.
#[derive(Debug, Clone, Serialize)]
pub struct ClassicalReport {
    /// `N∫G(u)`.
    #[serde(serialize_with = "sig17")]
    pub n_g: f64,
    /// `−((N−p)/p)∫|∇u|^p`.
    #[serde(serialize_with = "sig17")]
    pub gradient_term: f64,
    /// `∮G(u)(x·η)`.
    #[serde(serialize_with = "sig17")]
    pub boundary_g: f64,
    /// `−(1/p)∮|∇u|^p(x·η)`.
    #[serde(serialize_with = "sig17")]
    pub boundary_gradient: f64,
    /// `∮|∇u|^{p−2}(x·∇u)u_η`.
    #[serde(serialize_with = "sig17")]
    pub boundary_flux: f64,
    #[serde(serialize_with = "sig17")]
    pub lhs: f64,
    #[serde(serialize_with = "sig17")]
    pub rhs: f64,
    /// Largest termwise difference to the generic report, relative to its
    /// largest term.
    #[serde(serialize_with = "sig17")]
    pub termwise_gap: f64,
    pub generic: IdentityReport,
}

/// Evaluate the p-Laplacian form directly from `|∇u|` and compare it termwise
/// with [`identity_sides`].
pub fn classical_plap_form(
    u: &GridField,
    src: &dyn SourceModel,
    pr: &Profile,
    a: &Anisotropy,
) -> Result<ClassicalReport, PohozaevError> {
    if !pr.is_pure_power() {
        return Err(PohozaevError::WrongSpecialization("profile is regularized"));
    }
    if !a.is_euclidean() {
        return Err(PohozaevError::WrongSpecialization(
            "anisotropy is not Euclidean",
        ));
    }
    if src.depends_on_x() {
        return Err(PohozaevError::WrongSpecialization("source depends on x"));
    }
    let generic = identity_sides(u, src, pr, a)?;
    let p = pr.p();
    let d = u.domain().clone();
    let nt = d.n_theta();
    let vals = u.values();
    let grad = gradient(u);
    let gv = grad.values();
    let pow = |v: Vector2<f64>| {
        let n = v.norm();
        if p == 2.0 {
            n * n
        } else {
            n.powf(p)
        }
    };
    let origin = Vector2::zeros();
    let nodes = parallel::map(d.len(), |k| {
        [DIMENSION * src.primitive(origin, vals[k]), pow(gv[k])]
    });
    let col = |c: usize| -> Vec<f64> { nodes.iter().map(|v| v[c]).collect() };
    let n_g = d.integrate_nodal(&col(0));
    let gradient_term = -(DIMENSION - p) / p * d.integrate_nodal(&col(1));

    let nr = d.n_r();
    let (mut bg, mut bgrad, mut bflux) = (0.0, 0.0, 0.0);
    for j in 0..nt {
        let k = d.index(nr, j);
        let x = d.node(nr, j);
        let eta = d.boundary_normal(j);
        let w = d.boundary_weight(j);
        let g = gv[k];
        let n = g.norm();
        bg += w * src.primitive(origin, vals[k]) * x.dot(&eta);
        bgrad -= w * pow(g) / p * x.dot(&eta);
        let weight = if n > 0.0 { n.powf(p - 2.0) } else { 0.0 };
        bflux += w * weight * x.dot(&g) * g.dot(&eta);
    }
    let lhs = n_g + gradient_term;
    let rhs = bg + bgrad + bflux;
    let pairs = [
        (n_g, generic.n_g + generic.x_grad_g),
        (gradient_term, generic.minus_n_b + generic.bprime_h),
        (bg, generic.boundary_g),
        (bgrad, generic.boundary_minus_b),
        (bflux, generic.boundary_stress),
    ];
    let scale = generic.term_scale().max(f64::MIN_POSITIVE);
    let termwise_gap = pairs.iter().fold(0.0f64, |m, (c, g)| m.max((c - g).abs())) / scale;
    Ok(ClassicalReport {
        n_g,
        gradient_term,
        boundary_g: bg,
        boundary_gradient: bgrad,
        boundary_flux: bflux,
        lhs,
        rhs,
        termwise_gap,
        generic,
    })
}

fn check_trace(u: &GridField) -> Result<(), PohozaevError> {
    let max_trace = u.trace().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tolerance = TRACE_TOLERANCE * u.max_abs();
    if max_trace > tolerance {
        return Err(PohozaevError::TraceNotZero {
            max_trace,
            tolerance,
        });
    }
    Ok(())
}

/// Boundary side of the identity for a zero-trace field, in three forms.
#[derive(Debug, Clone, Serialize)]
pub struct DirichletReduction {
    /// `∮[G(x,u) − B(H)](x·η) + B'(H)(x·∇u)(∇H·η)` as in the identity.
    #[serde(serialize_with = "sig17")]
    pub unreduced: f64,
    /// `∮[G(x,0) − B(H) + B'(H)H](x·η)`.
    #[serde(serialize_with = "sig17")]
    pub reduced: f64,
    /// `((p−1)/p)∮H^p(x·η)` for power profiles.
    #[serde(serialize_with = "sig17_opt")]
    pub power_form: Option<f64>,
    /// `|unreduced − reduced| / max(|unreduced|, |reduced|)`.
    #[serde(serialize_with = "sig17")]
    pub reduced_gap: f64,
    #[serde(serialize_with = "sig17_opt")]
    pub power_gap: Option<f64>,
}

fn rel_gap(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs());
    if s == 0.0 {
        0.0
    } else {
        (a - b).abs() / s
    }
}

/// Evaluate the boundary side for a zero-trace field where `∇u = u_η η`.
pub fn dirichlet_boundary_reduction(
    u: &GridField,
    src: &dyn SourceModel,
    pr: &Profile,
    a: &Anisotropy,
) -> Result<DirichletReduction, PohozaevError> {
    check_trace(u)?;
    let d = u.domain().clone();
    let nr = d.n_r();
    let t = nodal_terms(u, pr, a)?;
    let p = pr.p();
    let (mut unreduced, mut reduced, mut power) = (0.0, 0.0, 0.0);
    for j in 0..d.n_theta() {
        let k = d.index(nr, j);
        let x = d.node(nr, j);
        let eta = d.boundary_normal(j);
        let x_eta = x.dot(&eta);
        let w = d.boundary_weight(j);
        let h = t.data.h[k];
        let grad = t.data.gradient.values()[k];
        unreduced += w
            * ((src.primitive(x, u.values()[k]) - t.b[k]) * x_eta
                + t.bprime[k] * x.dot(&grad) * t.data.grad_h[k].dot(&eta));
        reduced += w * (src.primitive_at_zero(x) - t.b[k] + t.bprime[k] * h) * x_eta;
        let hp = if p == 2.0 { h * h } else { h.powf(p) };
        power += w * hp * x_eta;
    }
    let power_form = pr.is_pure_power().then_some((p - 1.0) / p * power);
    Ok(DirichletReduction {
        unreduced,
        reduced,
        power_form,
        reduced_gap: rel_gap(unreduced, reduced),
        power_gap: power_form.map(|pf| rel_gap(unreduced, pf)),
    })
}

/// Where the minimum of the nonexistence functional was found.
#[derive(Debug, Clone, Serialize)]
pub struct ScanPoint {
    #[serde(serialize_with = "crate::report::sig17_vec")]
    pub x: Vec<f64>,
    #[serde(serialize_with = "crate::report::sig17_vec")]
    pub direction: Vec<f64>,
    #[serde(serialize_with = "sig17")]
    pub t: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct NonexistenceReport {
    /// Minimum over samples of `G(x,0) − B(H(ξ)) + B'(H(ξ))H(ξ)`.
    #[serde(serialize_with = "sig17")]
    pub min_value: f64,
    pub argmin: ScanPoint,
    /// `(1 − 1/p) min (tH(ω))^p`, the closed-form minimum for power profiles
    /// with `G(x,0) = 0`.
    #[serde(serialize_with = "sig17_opt")]
    pub power_prediction: Option<f64>,
    pub condition_holds: bool,
    pub samples: usize,
}

/// Scan `G(x,0) − B(tH(ω)) + B'(tH(ω))tH(ω)` over boundary nodes `x`,
/// `n_directions` unit vectors `ω` and magnitudes `t`.
pub fn nonexistence_scan(
    src: &dyn SourceModel,
    pr: &Profile,
    a: &Anisotropy,
    d: &StarDomain,
    t_grid: &[f64],
    n_directions: usize,
) -> Result<NonexistenceReport, PohozaevError> {
    if t_grid.is_empty() || n_directions == 0 {
        return Err(PohozaevError::InvalidInput(
            "nonexistence scan needs magnitudes and directions".into(),
        ));
    }
    let dirs: Vec<Vector2<f64>> = (0..n_directions)
        .map(|k| {
            let th = TAU * k as f64 / n_directions as f64;
            Vector2::new(th.cos(), th.sin())
        })
        .collect();
    let h_dirs = dirs
        .iter()
        .map(|w| a.value(w))
        .collect::<Result<Vec<_>, _>>()
        .map_err(FieldError::from)?;
    let nr = d.n_r();
    let mut best = (f64::INFINITY, 0, 0, 0);
    let mut g0_scale = 0.0f64;
    let mut min_s = f64::INFINITY;
    for j in 0..d.n_theta() {
        let x = d.node(nr, j);
        let g0 = src.primitive_at_zero(x);
        g0_scale = g0_scale.max(g0.abs());
        for (k, &hw) in h_dirs.iter().enumerate() {
            for (l, &t) in t_grid.iter().enumerate() {
                let s = t * hw;
                min_s = min_s.min(s);
                let v = g0 - pr.b(s) + pr.db(s) * s;
                if v < best.0 {
                    best = (v, j, k, l);
                }
            }
        }
    }
    let (min_value, j, k, l) = best;
    let x = d.node(nr, j);
    let p = pr.p();
    let power_prediction = (pr.is_pure_power() && g0_scale == 0.0).then(|| {
        (1.0 - 1.0 / p)
            * if p == 2.0 {
                min_s * min_s
            } else {
                min_s.powf(p)
            }
    });
    let tolerance = 1e-12 * g0_scale.max(1.0);
    Ok(NonexistenceReport {
        min_value,
        argmin: ScanPoint {
            x: vec![x.x, x.y],
            direction: vec![dirs[k].x, dirs[k].y],
            t: t_grid[l],
        },
        power_prediction,
        condition_holds: min_value >= -tolerance,
        samples: d.n_theta() * n_directions * t_grid.len(),
    })
}

/// `p* − 1 = (N(p−1) + p)/(N − p)`.
pub fn critical_exponent(p: f64, n: usize) -> Result<f64, PohozaevError> {
    let nf = n as f64;
    if !(p > 1.0 && p < nf) {
        return Err(PohozaevError::SupercriticalDimensionPair { p, n });
    }
    Ok((nf * (p - 1.0) + p) / (nf - p))
}

/// `N/(m+1) − (N−p)/p`, the sign of the subcritical functional for
/// `g(u) = |u|^{m−1}u`.
pub fn power_coefficient(m: f64, p: f64, n: usize) -> f64 {
    let nf = n as f64;
    nf / (m + 1.0) - (nf - p) / p
}

#[derive(Debug, Clone, Serialize)]
pub struct SubcriticalReport {
    /// `N∫G(u)`.
    #[serde(serialize_with = "sig17")]
    pub n_g: f64,
    /// `((N−p)/p)∫g(u)u`.
    #[serde(serialize_with = "sig17")]
    pub gu_term: f64,
    #[serde(serialize_with = "sig17")]
    pub value: f64,
}

/// `N∫G(u) − ((N−p)/p)∫g(u)u` for a zero-trace field.
///
/// The integrals are planar; `n` enters only through the coefficients.
pub fn subcritical_functional(
    u: &GridField,
    src: &dyn SourceModel,
    pr: &Profile,
    n: usize,
) -> Result<SubcriticalReport, PohozaevError> {
    check_trace(u)?;
    let d = u.domain().clone();
    let nt = d.n_theta();
    let vals = u.values();
    let nodes = parallel::map(d.len(), |k| {
        let x = d.node(k / nt, k % nt);
        (src.primitive(x, vals[k]), src.g(x, vals[k]) * vals[k])
    });
    let g: Vec<f64> = nodes.iter().map(|v| v.0).collect();
    let gu: Vec<f64> = nodes.iter().map(|v| v.1).collect();
    let nf = n as f64;
    let p = pr.p();
    let n_g = nf * d.integrate_nodal(&g);
    let gu_term = (nf - p) / p * d.integrate_nodal(&gu);
    Ok(SubcriticalReport {
        n_g,
        gu_term,
        value: n_g - gu_term,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayEntry {
    #[serde(serialize_with = "sig17")]
    pub radius: f64,
    /// `r ∮_{|x|=r} (B(H(∇u)) + |G(x,u)|) ds`.
    #[serde(serialize_with = "sig17")]
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct WholespaceReport {
    pub resolution: usize,
    #[serde(serialize_with = "sig17")]
    pub ball_radius: f64,
    #[serde(serialize_with = "sig17")]
    pub support_radius: f64,
    /// `N∫G`.
    #[serde(serialize_with = "sig17")]
    pub n_g: f64,
    /// `∫x·∇ₓG`.
    #[serde(serialize_with = "sig17")]
    pub x_grad_g: f64,
    /// `N∫B(H(∇u))`.
    #[serde(serialize_with = "sig17")]
    pub n_b: f64,
    /// `∫B'(H(∇u))H(∇u)`.
    #[serde(serialize_with = "sig17")]
    pub bprime_h: f64,
    /// `N∫G + ∫x·∇ₓG`.
    #[serde(serialize_with = "sig17")]
    pub lhs: f64,
    /// `N∫B(H(∇u)) − ∫B'(H(∇u))H(∇u)`.
    #[serde(serialize_with = "sig17")]
    pub rhs: f64,
    #[serde(serialize_with = "sig17")]
    pub residual_abs: f64,
    #[serde(serialize_with = "sig17")]
    pub residual_rel: f64,
    /// `N∫G − ∫x·∇ₓG`, the same identity with the opposite sign on the
    /// `x`-derivative term.
    #[serde(serialize_with = "sig17")]
    pub flipped_lhs: f64,
    #[serde(serialize_with = "sig17")]
    pub flipped_residual_rel: f64,
    pub decay: Vec<DecayEntry>,
    #[serde(serialize_with = "sig17")]
    pub masked_fraction: f64,
}

/// Whole-space identity for a compactly supported `u` with its manufactured
/// source, integrated over a disk containing the support.
///
/// The largest entry of `radii` fixes the integration disk. The decay table is
/// evaluated on circles with the analytic field.
pub fn wholespace_check(
    u: Arc<dyn SmoothField>,
    pr: &Profile,
    a: &Anisotropy,
    radii: &[f64],
    resolution: usize,
) -> Result<WholespaceReport, PohozaevError> {
    if !pr.is_pure_power() {
        return Err(PohozaevError::NonzeroKappa(pr.kappa()));
    }
    let ball_radius = radii.iter().copied().fold(f64::NAN, f64::max);
    if !(ball_radius > 0.0) {
        return Err(PohozaevError::InvalidInput("radii must be positive".into()));
    }
    let support_radius = u.support_radius().unwrap_or(f64::INFINITY);
    if !(support_radius < ball_radius) {
        return Err(PohozaevError::SupportEscapesGrid {
            support: support_radius,
            radius: ball_radius,
        });
    }
    let d = Arc::new(
        StarDomain::with_resolution(RadiusFn::disk(ball_radius), resolution)
            .map_err(FieldError::from)?,
    );
    let src = ManufacturedSource::new(u.clone(), *pr, a.clone());
    let field = GridField::sample(d.clone(), u.as_ref());
    let t = nodal_terms(&field, pr, a)?;
    let nt = d.n_theta();
    let vals = field.values();
    let nodes = parallel::map(d.len(), |k| {
        let x = d.node(k / nt, k % nt);
        let (g, xg) = if vals[k] == 0.0 {
            (0.0, 0.0)
        } else {
            (
                src.primitive(x, vals[k]),
                x.dot(&src.primitive_x(x, vals[k])),
            )
        };
        [
            DIMENSION * g,
            xg,
            DIMENSION * t.b[k],
            t.bprime[k] * t.data.h[k],
        ]
    });
    let mut terms = [0.0; 4];
    for (c, slot) in terms.iter_mut().enumerate() {
        let col: Vec<f64> = nodes.iter().map(|v| v[c]).collect();
        *slot = d.integrate_nodal(&col);
    }
    let [n_g, x_grad_g, n_b, bprime_h] = terms;
    let lhs = n_g + x_grad_g;
    let rhs = n_b - bprime_h;
    let scale = terms.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let rel = |r: f64| if scale > 0.0 { r / scale } else { 0.0 };
    let residual_abs = (lhs - rhs).abs();
    let flipped_lhs = n_g - x_grad_g;

    let decay = radii
        .iter()
        .map(|&r| DecayEntry {
            radius: r,
            value: circle_flux(u.as_ref(), &src, pr, a, r, 4 * resolution),
        })
        .collect();

    Ok(WholespaceReport {
        resolution,
        ball_radius,
        support_radius,
        n_g,
        x_grad_g,
        n_b,
        bprime_h,
        lhs,
        rhs,
        residual_abs,
        residual_rel: rel(residual_abs),
        flipped_lhs,
        flipped_residual_rel: rel((flipped_lhs - rhs).abs()),
        decay,
        masked_fraction: t.data.mask.fraction(),
    })
}

fn circle_flux(
    u: &dyn SmoothField,
    src: &ManufacturedSource,
    pr: &Profile,
    a: &Anisotropy,
    r: f64,
    m: usize,
) -> f64 {
    let ds = TAU * r / m as f64;
    let sum: f64 = (0..m)
        .map(|k| {
            let th = TAU * k as f64 / m as f64;
            let x = Vector2::new(r * th.cos(), r * th.sin());
            let h = a.value(&u.gradient(x)).unwrap_or(0.0);
            let v = u.value(x);
            let g = if v == 0.0 {
                0.0
            } else {
                src.primitive(x, v).abs()
            };
            pr.b(h) + g
        })
        .sum();
    r * ds * sum
}

/// True when the domain makes the boundary side of the identity nonnegative
/// for zero-trace solutions.
pub fn is_strictly_star_shaped(d: &StarDomain) -> bool {
    d.star_shape_classify().class == StarShapeClass::StrictlyStarShaped
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{ConstantSource, PowerSource, ShiftedSource};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn disk(n: usize) -> Arc<StarDomain> {
        Arc::new(StarDomain::with_resolution(RadiusFn::disk(1.0), n).unwrap())
    }

    fn torsion(d: Arc<StarDomain>) -> GridField {
        GridField::from_fn(d, |x| 0.25 * (1.0 - x.norm_squared()))
    }

    #[test]
    fn zero_field_gives_zero_terms() {
        let u = GridField::zeros(disk(16));
        let r = identity_sides(
            &u,
            &ConstantSource::new(0.0),
            &Profile::power(2.0).unwrap(),
            &Anisotropy::euclidean(2).unwrap(),
        )
        .unwrap();
        assert!(r.volume_terms().iter().all(|&t| t == 0.0));
        assert!(r.boundary_terms().iter().all(|&t| t == 0.0));
        assert_eq!(r.residual_rel, 0.0);
    }

    #[test]
    fn torsion_p2_both_sides() {
        let u = torsion(disk(64));
        let r = identity_sides(
            &u,
            &ConstantSource::new(1.0),
            &Profile::power(2.0).unwrap(),
            &Anisotropy::euclidean(2).unwrap(),
        )
        .unwrap();
        assert_relative_eq!(r.lhs, PI / 4.0, max_relative = 1e-3);
        assert_relative_eq!(r.rhs, PI / 4.0, max_relative = 1e-12);
        assert!(r.residual_rel < 1e-4);
    }

    #[test]
    fn specialization_rejects_anisotropic_input() {
        let u = torsion(disk(16));
        let a = Anisotropy::ellipsoidal_row_major(2, &[2.0, 0.0, 0.0, 1.0]).unwrap();
        let e = classical_plap_form(
            &u,
            &ConstantSource::new(1.0),
            &Profile::power(2.0).unwrap(),
            &a,
        );
        assert!(matches!(e, Err(PohozaevError::WrongSpecialization(_))));
    }

    #[test]
    fn dirichlet_reduction_zero_field() {
        let u = GridField::zeros(disk(16));
        let r = dirichlet_boundary_reduction(
            &u,
            &ConstantSource::new(1.0),
            &Profile::power(3.0).unwrap(),
            &Anisotropy::euclidean(2).unwrap(),
        )
        .unwrap();
        assert_eq!(
            (r.unreduced, r.reduced, r.power_form),
            (0.0, 0.0, Some(0.0))
        );
    }

    #[test]
    fn nonzero_trace_is_rejected() {
        let u = GridField::from_fn(disk(16), |x| 1.0 + x.x);
        let e = dirichlet_boundary_reduction(
            &u,
            &ConstantSource::new(1.0),
            &Profile::power(2.0).unwrap(),
            &Anisotropy::euclidean(2).unwrap(),
        );
        assert!(matches!(e, Err(PohozaevError::TraceNotZero { .. })));
    }

    #[test]
    fn critical_exponents() {
        assert_eq!(critical_exponent(2.0, 3).unwrap(), 5.0);
        assert_eq!(critical_exponent(2.0, 4).unwrap(), 3.0);
        assert_eq!(critical_exponent(3.0, 4).unwrap(), 11.0);
        assert!(matches!(
            critical_exponent(3.0, 3),
            Err(PohozaevError::SupercriticalDimensionPair { .. })
        ));
    }

    #[test]
    fn power_coefficients() {
        assert_eq!(power_coefficient(1.0, 2.0, 4), 1.0);
        for (p, n) in [(2.0, 3), (2.0, 4), (3.0, 4), (1.5, 2)] {
            let m = critical_exponent(p, n).unwrap();
            assert!(power_coefficient(m, p, n).abs() < 1e-14);
        }
    }

    #[test]
    fn nonexistence_power_profile() {
        let d = StarDomain::with_resolution(RadiusFn::disk(1.0), 8).unwrap();
        let t = crate::profile::log_grid(1e-3, 1e1, 50);
        let r = nonexistence_scan(
            &ConstantSource::new(1.0),
            &Profile::power(3.0).unwrap(),
            &Anisotropy::ellipsoidal_row_major(2, &[2.0, 0.0, 0.0, 1.0]).unwrap(),
            &d,
            &t,
            64,
        )
        .unwrap();
        assert!(r.condition_holds);
        assert_relative_eq!(
            r.min_value,
            r.power_prediction.unwrap(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn nonexistence_shifted_primitive_fails() {
        let d = StarDomain::with_resolution(RadiusFn::disk(1.0), 8).unwrap();
        let t = crate::profile::log_grid(1e-6, 1.0, 20);
        let src = ShiftedSource {
            inner: PowerSource::new(1.0, 1.0),
            offset: -1.0,
        };
        let r = nonexistence_scan(
            &src,
            &Profile::power(2.0).unwrap(),
            &Anisotropy::euclidean(2).unwrap(),
            &d,
            &t,
            8,
        )
        .unwrap();
        assert!(!r.condition_holds);
        assert_relative_eq!(r.min_value, -1.0, epsilon = 1e-11);
    }

    #[test]
    fn nonexistence_regularized_convex() {
        let d = StarDomain::with_resolution(RadiusFn::disk(1.0), 8).unwrap();
        let r = nonexistence_scan(
            &ConstantSource::new(1.0),
            &Profile::regularized(2.0, 1.0).unwrap(),
            &Anisotropy::euclidean(2).unwrap(),
            &d,
            &crate::profile::default_bounds_grid(),
            16,
        )
        .unwrap();
        assert!(r.condition_holds && r.min_value >= 0.0);
        assert!(r.power_prediction.is_none());
    }

    #[test]
    fn wholespace_guards() {
        let bump: Arc<dyn SmoothField> = Arc::new(crate::field::RadialBump::new(1.0, 0.5));
        let a = Anisotropy::euclidean(2).unwrap();
        let e = wholespace_check(
            bump.clone(),
            &Profile::power(2.0).unwrap(),
            &a,
            &[0.25, 0.4],
            16,
        );
        assert!(matches!(e, Err(PohozaevError::SupportEscapesGrid { .. })));
        let e = wholespace_check(
            bump,
            &Profile::regularized(2.0, 0.5).unwrap(),
            &a,
            &[1.0],
            16,
        );
        assert!(matches!(e, Err(PohozaevError::NonzeroKappa(_))));
    }
}
