//! Right-hand sides `g(x, s)` together with their primitives in `s`.

use super::smooth::SmoothField;
use crate::anisotropy::{Anisotropy, DEGENERACY_FLOOR};
use crate::profile::Profile;
use crate::quadrature::{derivative5, integrate_adaptive};
use nalgebra::{Matrix2, Vector2};
use std::sync::Arc;

/// Absolute tolerance of the quadrature fallback for `G`.
const PRIMITIVE_TOL: f64 = 1e-12;
const FD_STEP: f64 = 1e-3;

/// Growth class of `s ↦ g(x, s)`, used to decide coercivity of the energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SourceGrowth {
    /// `g` does not depend on `s`.
    Independent,
    /// `g(s) = λ|s|^{m−1}s`.
    Power(f64),
    /// `s ↦ g(x, s)` is non-increasing, so `−G` is convex in `s`.
    Decreasing,
    Unknown,
}

/// `g(x, s)` with `G(x, t) = ∫₀ᵗ g(x, s) ds` and `∇ₓG`.
///
/// Only `g` is required. The defaults integrate in `s` adaptively and
/// differentiate in `x` with a fourth-order central difference; separable
/// sources override them with closed forms.
pub trait SourceModel: Sync + Send {
    fn g(&self, x: Vector2<f64>, s: f64) -> f64;

    /// `∇ₓg(x, s)`.
    fn g_x(&self, x: Vector2<f64>, s: f64) -> Vector2<f64> {
        Vector2::new(
            derivative5(|a| self.g(Vector2::new(a, x.y), s), x.x, FD_STEP),
            derivative5(|b| self.g(Vector2::new(x.x, b), s), x.y, FD_STEP),
        )
    }

    /// `G(x, t)`.
    fn primitive(&self, x: Vector2<f64>, t: f64) -> f64 {
        integrate_adaptive(|s| self.g(x, s), 0.0, t, PRIMITIVE_TOL)
    }

    /// `∇ₓG(x, t) = ∫₀ᵗ ∇ₓg(x, s) ds`.
    fn primitive_x(&self, x: Vector2<f64>, t: f64) -> Vector2<f64> {
        Vector2::new(
            integrate_adaptive(|s| self.g_x(x, s).x, 0.0, t, PRIMITIVE_TOL),
            integrate_adaptive(|s| self.g_x(x, s).y, 0.0, t, PRIMITIVE_TOL),
        )
    }

    /// `G(x, 0)`. Zero by definition unless a source shifts its primitive.
    fn primitive_at_zero(&self, _x: Vector2<f64>) -> f64 {
        0.0
    }

    fn growth(&self) -> SourceGrowth {
        SourceGrowth::Unknown
    }

    fn depends_on_x(&self) -> bool {
        true
    }
}

/// `g ≡ c`.
#[derive(Debug, Clone, Copy)]
pub struct ConstantSource {
    pub c: f64,
}

impl ConstantSource {
    pub fn new(c: f64) -> Self {
        Self { c }
    }
}

impl SourceModel for ConstantSource {
    fn g(&self, _x: Vector2<f64>, _s: f64) -> f64 {
        self.c
    }
    fn g_x(&self, _x: Vector2<f64>, _s: f64) -> Vector2<f64> {
        Vector2::zeros()
    }
    fn primitive(&self, _x: Vector2<f64>, t: f64) -> f64 {
        self.c * t
    }
    fn primitive_x(&self, _x: Vector2<f64>, _t: f64) -> Vector2<f64> {
        Vector2::zeros()
    }
    fn growth(&self) -> SourceGrowth {
        SourceGrowth::Independent
    }
    fn depends_on_x(&self) -> bool {
        false
    }
}

/// `g(s) = λ|s|^{m−1}s`, so `G(t) = λ|t|^{m+1}/(m+1)`.
#[derive(Debug, Clone, Copy)]
pub struct PowerSource {
    pub lambda: f64,
    pub m: f64,
}

impl PowerSource {
    pub fn new(lambda: f64, m: f64) -> Self {
        Self { lambda, m }
    }
}

impl SourceModel for PowerSource {
    fn g(&self, _x: Vector2<f64>, s: f64) -> f64 {
        if s == 0.0 {
            return 0.0;
        }
        self.lambda * s.abs().powf(self.m - 1.0) * s
    }
    fn g_x(&self, _x: Vector2<f64>, _s: f64) -> Vector2<f64> {
        Vector2::zeros()
    }
    fn primitive(&self, _x: Vector2<f64>, t: f64) -> f64 {
        self.lambda * t.abs().powf(self.m + 1.0) / (self.m + 1.0)
    }
    fn primitive_x(&self, _x: Vector2<f64>, _t: f64) -> Vector2<f64> {
        Vector2::zeros()
    }
    fn growth(&self) -> SourceGrowth {
        if self.lambda > 0.0 {
            SourceGrowth::Power(self.m)
        } else {
            SourceGrowth::Decreasing
        }
    }
    fn depends_on_x(&self) -> bool {
        false
    }
}

/// Wraps a source and adds a constant to its primitive: `G̃(x, t) = G(x, t) + c`.
///
/// This breaks `G(x, 0) = 0` on purpose and exists to exercise the
/// nonexistence scan.
#[derive(Clone)]
pub struct ShiftedSource<S> {
    pub inner: S,
    pub offset: f64,
}

impl<S: SourceModel> SourceModel for ShiftedSource<S> {
    fn g(&self, x: Vector2<f64>, s: f64) -> f64 {
        self.inner.g(x, s)
    }
    fn g_x(&self, x: Vector2<f64>, s: f64) -> Vector2<f64> {
        self.inner.g_x(x, s)
    }
    fn primitive(&self, x: Vector2<f64>, t: f64) -> f64 {
        self.inner.primitive(x, t) + self.offset
    }
    fn primitive_x(&self, x: Vector2<f64>, t: f64) -> Vector2<f64> {
        self.inner.primitive_x(x, t)
    }
    fn primitive_at_zero(&self, x: Vector2<f64>) -> f64 {
        self.inner.primitive_at_zero(x) + self.offset
    }
    fn growth(&self) -> SourceGrowth {
        self.inner.growth()
    }
    fn depends_on_x(&self) -> bool {
        self.inner.depends_on_x()
    }
}

/// A source given by a closure; primitives fall back to quadrature.
///
/// Its growth in `s` is [`SourceGrowth::Unknown`] unless declared with
/// [`FnSource::with_growth`].
pub struct FnSource<F> {
    f: F,
    growth: SourceGrowth,
}

impl<F: Fn(Vector2<f64>, f64) -> f64 + Sync + Send> FnSource<F> {
    pub fn new(f: F) -> Self {
        Self {
            f,
            growth: SourceGrowth::Unknown,
        }
    }

    /// Declare the growth class of `s ↦ g(x, s)`. The caller is responsible
    /// for its truth.
    pub fn with_growth(mut self, growth: SourceGrowth) -> Self {
        self.growth = growth;
        self
    }
}

impl<F: Fn(Vector2<f64>, f64) -> f64 + Sync + Send> SourceModel for FnSource<F> {
    fn g(&self, x: Vector2<f64>, s: f64) -> f64 {
        (self.f)(x, s)
    }

    fn primitive(&self, x: Vector2<f64>, t: f64) -> f64 {
        match self.growth {
            SourceGrowth::Independent => (self.f)(x, 0.0) * t,
            _ => integrate_adaptive(|s| self.g(x, s), 0.0, t, PRIMITIVE_TOL),
        }
    }

    fn growth(&self) -> SourceGrowth {
        self.growth
    }
}

/// `g(x, s) = f(x)` with `f = −div(B'(H(∇u))∇H(∇u))` for an analytic `u`.
///
/// The divergence is expanded by the chain rule as `−tr(DS(∇u) D²u)` where
/// `DS(ξ) = B''(H)∇H∇Hᵀ + B'(H)D²H`. At `ξ = 0` the limit `B''(0)·D²(H²/2)`
/// is used, which is finite for `p ≥ 2`.
#[derive(Clone)]
pub struct ManufacturedSource {
    u: Arc<dyn SmoothField>,
    profile: Profile,
    anisotropy: Anisotropy,
}

impl ManufacturedSource {
    pub fn new(u: Arc<dyn SmoothField>, profile: Profile, anisotropy: Anisotropy) -> Self {
        Self {
            u,
            profile,
            anisotropy,
        }
    }

    pub fn field(&self) -> &Arc<dyn SmoothField> {
        &self.u
    }

    /// Jacobian of the stress map `ξ ↦ B'(H(ξ))∇H(ξ)`.
    pub fn stress_jacobian(&self, xi: Vector2<f64>) -> Matrix2<f64> {
        let pr = &self.profile;
        if xi.norm() < DEGENERACY_FLOOR {
            let metric = self
                .anisotropy
                .metric(&xi)
                .expect("planar anisotropy checked at construction");
            let c = pr.d2b(0.0);
            return if c == 0.0 {
                Matrix2::zeros()
            } else {
                metric * c
            };
        }
        let e = self
            .anisotropy
            .evaluate(&xi)
            .expect("non-degenerate gradient");
        e.gradient * e.gradient.transpose() * pr.d2b(e.value) + e.hessian * pr.db(e.value)
    }

    /// `f(x)`.
    pub fn f(&self, x: Vector2<f64>) -> f64 {
        let ds = self.stress_jacobian(self.u.gradient(x));
        -(ds.component_mul(&self.u.hessian(x).transpose())).sum()
    }

    /// `∇f(x)` by fourth-order central differences.
    pub fn grad_f(&self, x: Vector2<f64>) -> Vector2<f64> {
        Vector2::new(
            derivative5(|a| self.f(Vector2::new(a, x.y)), x.x, FD_STEP),
            derivative5(|b| self.f(Vector2::new(x.x, b)), x.y, FD_STEP),
        )
    }
}

impl SourceModel for ManufacturedSource {
    fn g(&self, x: Vector2<f64>, _s: f64) -> f64 {
        self.f(x)
    }
    fn g_x(&self, x: Vector2<f64>, _s: f64) -> Vector2<f64> {
        self.grad_f(x)
    }
    fn primitive(&self, x: Vector2<f64>, t: f64) -> f64 {
        self.f(x) * t
    }
    fn primitive_x(&self, x: Vector2<f64>, t: f64) -> Vector2<f64> {
        self.grad_f(x) * t
    }
    fn growth(&self) -> SourceGrowth {
        SourceGrowth::Independent
    }
}
