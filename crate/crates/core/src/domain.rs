//! Smooth star-shaped planar domains given as polar graphs over the origin,
//! `Ω = { s ρ(θ) (cos θ, sin θ) : 0 ≤ s < 1 }`, with the mapped polar grid used
//! by every discretization in this crate.
//!
//! Grid nodes are `(i, j)` with `s_i = i / n_r` for `i = 0..=n_r` and
//! `θ_j = 2π j / n_θ`. Ring `i = 0` repeats the origin `n_θ` times; ring `n_r`
//! is the boundary. Values are stored ring by ring.
//!
//! Volume quadrature uses product-integration weights in `s`: a field that is
//! piecewise linear in `s` is integrated exactly against the area element
//! `s ρ(θ)² ds dθ`. In `θ` the rule is the periodic trapezoid rule.

use nalgebra::Vector2;
use serde::Serialize;
use std::f64::consts::TAU;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("radius function must stay positive, minimum sampled value {0:e}")]
    NonPositiveRadius(f64),
    #[error("invalid resolution n_r = {n_r}, n_theta = {n_theta} (need n_r >= 4, n_theta >= 8)")]
    InvalidResolution { n_r: usize, n_theta: usize },
    #[error("invalid ellipse semi-axes a = {0}, b = {1}")]
    InvalidEllipse(f64, f64),
}

/// Polar radius `ρ(θ)` of the boundary.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RadiusFn {
    /// `ρ(θ) = mean + Σ_k cos[k−1]·cos kθ + sin[k−1]·sin kθ`.
    Fourier {
        mean: f64,
        cos: Vec<f64>,
        sin: Vec<f64>,
    },
    /// Ellipse with semi-axes `a` (along x₁) and `b`, centred at the origin.
    Ellipse { a: f64, b: f64 },
}

impl RadiusFn {
    pub fn disk(radius: f64) -> Self {
        RadiusFn::Fourier {
            mean: radius,
            cos: vec![],
            sin: vec![],
        }
    }

    /// `ρ(θ) = 1 + amp · cos(k θ)`.
    pub fn perturbed_disk(amp: f64, k: usize) -> Self {
        let mut cos = vec![0.0; k];
        cos[k - 1] = amp;
        RadiusFn::Fourier {
            mean: 1.0,
            cos,
            sin: vec![],
        }
    }

    /// `(ρ(θ), ρ'(θ))`.
    pub fn eval(&self, theta: f64) -> (f64, f64) {
        match self {
            RadiusFn::Fourier { mean, cos, sin } => {
                let mut r = *mean;
                let mut dr = 0.0;
                for (k, c) in cos.iter().enumerate() {
                    let m = (k + 1) as f64;
                    r += c * (m * theta).cos();
                    dr -= c * m * (m * theta).sin();
                }
                for (k, s) in sin.iter().enumerate() {
                    let m = (k + 1) as f64;
                    r += s * (m * theta).sin();
                    dr += s * m * (m * theta).cos();
                }
                (r, dr)
            }
            RadiusFn::Ellipse { a, b } => {
                let (s, c) = theta.sin_cos();
                let d = b * b * c * c + a * a * s * s;
                let r = a * b / d.sqrt();
                let dr = -a * b * (a * a - b * b) * s * c / (d * d.sqrt());
                (r, dr)
            }
        }
    }

    /// True for a disk centred at the origin, with its radius.
    pub fn as_disk(&self) -> Option<f64> {
        match self {
            RadiusFn::Fourier { mean, cos, sin } if cos.iter().chain(sin).all(|&c| c == 0.0) => {
                Some(*mean)
            }
            RadiusFn::Ellipse { a, b } if a == b => Some(*a),
            _ => None,
        }
    }

    fn validate(&self) -> Result<(), DomainError> {
        if let RadiusFn::Ellipse { a, b } = self {
            if !(a.is_finite() && b.is_finite() && *a > 0.0 && *b > 0.0) {
                return Err(DomainError::InvalidEllipse(*a, *b));
            }
        }
        let min = (0..4096)
            .map(|k| self.eval(TAU * k as f64 / 4096.0).0)
            .fold(f64::INFINITY, f64::min);
        if !(min > 0.0) {
            return Err(DomainError::NonPositiveRadius(min));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StarShapeClass {
    StrictlyStarShaped,
    StarShaped,
    NotStarShaped,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StarShape {
    pub class: StarShapeClass,
    /// Minimum of `x·η` over the sampled boundary points.
    #[serde(serialize_with = "crate::report::sig17")]
    pub min_support: f64,
}

/// A boundary sample handed to boundary integrands.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryPoint {
    pub theta: f64,
    pub x: Vector2<f64>,
    pub normal: Vector2<f64>,
}

/// Star-shaped domain together with its grid resolution and cached tables.
#[derive(Debug, Clone, PartialEq)]
pub struct StarDomain {
    radius: RadiusFn,
    n_r: usize,
    n_theta: usize,
    cos: Vec<f64>,
    sin: Vec<f64>,
    rho: Vec<f64>,
    drho: Vec<f64>,
    s_weights: Vec<f64>,
}

impl StarDomain {
    pub fn new(radius: RadiusFn, n_r: usize, n_theta: usize) -> Result<Self, DomainError> {
        if n_r < 4 || n_theta < 8 {
            return Err(DomainError::InvalidResolution { n_r, n_theta });
        }
        radius.validate()?;
        let mut cos = Vec::with_capacity(n_theta);
        let mut sin = Vec::with_capacity(n_theta);
        let mut rho = Vec::with_capacity(n_theta);
        let mut drho = Vec::with_capacity(n_theta);
        for j in 0..n_theta {
            let t = TAU * j as f64 / n_theta as f64;
            let (s, c) = t.sin_cos();
            let (r, dr) = radius.eval(t);
            cos.push(c);
            sin.push(s);
            rho.push(r);
            drho.push(dr);
        }
        let min_node = rho.iter().copied().fold(f64::INFINITY, f64::min);
        if !(min_node > 0.0) {
            return Err(DomainError::NonPositiveRadius(min_node));
        }
        Ok(Self {
            radius,
            n_r,
            n_theta,
            cos,
            sin,
            rho,
            drho,
            s_weights: product_weights(n_r),
        })
    }

    /// Square-equivalent grid: `n_r = n_theta = n`.
    pub fn with_resolution(radius: RadiusFn, n: usize) -> Result<Self, DomainError> {
        Self::new(radius, n, n)
    }

    pub fn radius_fn(&self) -> &RadiusFn {
        &self.radius
    }

    pub fn n_r(&self) -> usize {
        self.n_r
    }

    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    /// Radial step in the mapped coordinate `s`.
    pub fn h(&self) -> f64 {
        1.0 / self.n_r as f64
    }

    pub fn d_theta(&self) -> f64 {
        TAU / self.n_theta as f64
    }

    /// Number of stored nodes, `(n_r + 1) n_θ`.
    pub fn len(&self) -> usize {
        (self.n_r + 1) * self.n_theta
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.n_theta + j
    }

    pub fn theta(&self, j: usize) -> f64 {
        TAU * j as f64 / self.n_theta as f64
    }

    pub fn s(&self, i: usize) -> f64 {
        i as f64 / self.n_r as f64
    }

    pub fn rho(&self, j: usize) -> f64 {
        self.rho[j]
    }

    pub fn drho(&self, j: usize) -> f64 {
        self.drho[j]
    }

    /// `(cos θ_j, sin θ_j)`.
    pub fn radial_dir(&self, j: usize) -> Vector2<f64> {
        Vector2::new(self.cos[j], self.sin[j])
    }

    /// `(−sin θ_j, cos θ_j)`.
    pub fn angular_dir(&self, j: usize) -> Vector2<f64> {
        Vector2::new(-self.sin[j], self.cos[j])
    }

    /// Physical position of node `(i, j)`.
    pub fn node(&self, i: usize, j: usize) -> Vector2<f64> {
        self.radial_dir(j) * (self.s(i) * self.rho[j])
    }

    /// Quadrature weight of node `(i, j)` for `∫_Ω f dx`.
    pub fn volume_weight(&self, i: usize, j: usize) -> f64 {
        self.s_weights[i] * self.d_theta() * self.rho[j] * self.rho[j]
    }

    /// Product-integration weights in `s` for `∫_0^1 f(s) s ds`.
    pub fn s_weights(&self) -> &[f64] {
        &self.s_weights
    }

    /// Arclength weight of boundary node `j`.
    pub fn boundary_weight(&self, j: usize) -> f64 {
        self.d_theta() * self.rho[j].hypot(self.drho[j])
    }

    /// Outward unit normal at boundary node `j`.
    pub fn boundary_normal(&self, j: usize) -> Vector2<f64> {
        let (r, dr) = (self.rho[j], self.drho[j]);
        (self.radial_dir(j) * r - self.angular_dir(j) * dr) / r.hypot(dr)
    }

    /// Outward unit normal at angle `θ`.
    pub fn outward_normal(&self, theta: f64) -> Vector2<f64> {
        let (r, dr) = self.radius.eval(theta);
        let (s, c) = theta.sin_cos();
        let er = Vector2::new(c, s);
        let et = Vector2::new(-s, c);
        (er * r - et * dr) / r.hypot(dr)
    }

    /// Boundary point at angle `θ`.
    pub fn boundary_point(&self, theta: f64) -> Vector2<f64> {
        let (r, _) = self.radius.eval(theta);
        let (s, c) = theta.sin_cos();
        Vector2::new(c, s) * r
    }

    /// `x·η` at boundary node `j`, equal to `ρ² / sqrt(ρ² + ρ'²)`.
    pub fn support(&self, j: usize) -> f64 {
        let (r, dr) = (self.rho[j], self.drho[j]);
        r * r / r.hypot(dr)
    }

    pub fn star_shape_classify(&self) -> StarShape {
        let min = (0..self.n_theta)
            .map(|j| self.support(j))
            .fold(f64::INFINITY, f64::min);
        let scale = self.rho.iter().copied().fold(0.0, f64::max);
        classify(min, scale)
    }

    /// `∫_Ω f dx`.
    pub fn integrate_volume(&self, f: impl Fn(Vector2<f64>) -> f64 + Sync + Send) -> f64 {
        crate::parallel::ordered_sum(self.n_r + 1, |i| {
            (0..self.n_theta)
                .map(|j| self.volume_weight(i, j) * f(self.node(i, j)))
                .sum::<f64>()
        })
    }

    /// `∫_Ω f dx` for nodal values stored in grid order.
    pub fn integrate_nodal(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        crate::parallel::ordered_sum(self.n_r + 1, |i| {
            (0..self.n_theta)
                .map(|j| self.volume_weight(i, j) * values[self.index(i, j)])
                .sum::<f64>()
        })
    }

    /// `∫_{Ω_σ} f dx` over the scaled subdomain `{s ≤ σ}` for nodal values.
    ///
    /// `σ` is snapped to the nearest grid ring.
    pub fn integrate_nodal_inner(&self, values: &[f64], sigma: f64) -> f64 {
        let m = ((sigma * self.n_r as f64).round() as usize).clamp(1, self.n_r);
        let w = product_weights_partial(self.n_r, m);
        (0..=m)
            .map(|i| {
                (0..self.n_theta)
                    .map(|j| {
                        w[i] * self.d_theta() * self.rho[j] * self.rho[j] * values[self.index(i, j)]
                    })
                    .sum::<f64>()
            })
            .sum()
    }

    /// `∫_{∂Ω} f ds` with the periodic trapezoid rule in θ.
    pub fn integrate_boundary(&self, f: impl Fn(BoundaryPoint) -> f64) -> f64 {
        (0..self.n_theta)
            .map(|j| {
                let bp = BoundaryPoint {
                    theta: self.theta(j),
                    x: self.node(self.n_r, j),
                    normal: self.boundary_normal(j),
                };
                self.boundary_weight(j) * f(bp)
            })
            .sum()
    }

    /// `|Ω| = ½ ∫ ρ² dθ`.
    pub fn area(&self) -> f64 {
        0.5 * self.d_theta() * self.rho.iter().map(|r| r * r).sum::<f64>()
    }
}

/// Classify a closed curve sampled counter-clockwise (or clockwise) by the sign
/// of `x·η`, using discrete outward normals from central differences.
pub fn classify_closed_curve(points: &[Vector2<f64>]) -> StarShape {
    let n = points.len();
    if n < 3 {
        return StarShape {
            class: StarShapeClass::NotStarShaped,
            min_support: f64::NAN,
        };
    }
    let signed_area: f64 = (0..n)
        .map(|k| {
            let (a, b) = (points[k], points[(k + 1) % n]);
            a.x * b.y - a.y * b.x
        })
        .sum::<f64>()
        * 0.5;
    let orientation = signed_area.signum();
    let mut min = f64::INFINITY;
    let mut scale = 0.0f64;
    for k in 0..n {
        let t = points[(k + 1) % n] - points[(k + n - 1) % n];
        let normal = Vector2::new(t.y, -t.x) * orientation;
        let norm = normal.norm();
        if norm > 0.0 {
            min = min.min(points[k].dot(&normal) / norm);
        }
        scale = scale.max(points[k].norm());
    }
    classify(min, scale)
}

fn classify(min: f64, scale: f64) -> StarShape {
    let tol = 1e-12 * scale.max(1.0);
    let class = if min > tol {
        StarShapeClass::StrictlyStarShaped
    } else if min >= -tol {
        StarShapeClass::StarShaped
    } else {
        StarShapeClass::NotStarShaped
    };
    StarShape {
        class,
        min_support: min,
    }
}

/// Weights `w_i = ∫ φ_i(s) s ds` for hat functions on the uniform grid of [0, 1].
fn product_weights(n: usize) -> Vec<f64> {
    product_weights_partial(n, n)
}

/// Same weights restricted to `[0, m/n]`.
fn product_weights_partial(n: usize, m: usize) -> Vec<f64> {
    let h = 1.0 / n as f64;
    let mut w: Vec<f64> = (0..=m).map(|i| i as f64 * h * h).collect();
    w[0] = h * h / 6.0;
    // right end: ∫ over the last half-hat, s_m = m h
    let sm = m as f64 * h;
    w[m] = 0.5 * h * sm - h * h / 6.0;
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use std::f64::consts::{FRAC_PI_2, PI};

    fn disk(n: usize) -> StarDomain {
        StarDomain::with_resolution(RadiusFn::disk(1.0), n).unwrap()
    }

    fn ellipse(n: usize) -> StarDomain {
        StarDomain::with_resolution(RadiusFn::Ellipse { a: 2.0, b: 1.0 }, n).unwrap()
    }

    #[test]
    fn weights_sum_to_half() {
        for n in [4, 7, 64] {
            let w = product_weights(n);
            assert_abs_diff_eq!(w.iter().sum::<f64>(), 0.5, epsilon = 1e-15);
            assert!(w.iter().all(|&x| x > 0.0));
        }
    }

    #[test]
    fn normals() {
        let d = disk(16);
        assert_relative_eq!(d.outward_normal(0.0), Vector2::new(1.0, 0.0));
        let e = ellipse(16);
        assert_relative_eq!(
            e.outward_normal(FRAC_PI_2),
            Vector2::new(0.0, 1.0),
            epsilon = 1e-15
        );
    }

    #[test]
    fn normal_is_orthogonal_to_finite_difference_tangent() {
        let d = StarDomain::with_resolution(RadiusFn::perturbed_disk(0.2, 3), 16).unwrap();
        for theta in [0.0, 0.4, 2.0, 5.5] {
            let dt = 1e-5;
            let tangent =
                (d.boundary_point(theta + dt) - d.boundary_point(theta - dt)) / (2.0 * dt);
            let n = d.outward_normal(theta);
            assert_abs_diff_eq!(n.norm(), 1.0, epsilon = 1e-14);
            assert_abs_diff_eq!(n.dot(&tangent.normalize()), 0.0, epsilon = 1e-9);
            assert!(n.dot(&d.boundary_point(theta)) > 0.0);
        }
        // at θ = 0, ρ' = 0 and the normal is radial
        assert_relative_eq!(
            d.outward_normal(0.0),
            Vector2::new(1.0, 0.0),
            epsilon = 1e-15
        );
    }

    #[test]
    fn star_shape_of_standard_domains() {
        let s = disk(64).star_shape_classify();
        assert_eq!(s.class, StarShapeClass::StrictlyStarShaped);
        assert_relative_eq!(s.min_support, 1.0, epsilon = 1e-15);
        // minimum of the support function of an ellipse is its minor semi-axis
        let s = ellipse(64).star_shape_classify();
        assert_eq!(s.class, StarShapeClass::StrictlyStarShaped);
        assert_relative_eq!(s.min_support, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn off_centre_circle_is_not_star_shaped() {
        let pts: Vec<_> = (0..400)
            .map(|k| {
                let t = TAU * k as f64 / 400.0;
                Vector2::new(3.0 + t.cos(), t.sin())
            })
            .collect();
        assert_eq!(
            classify_closed_curve(&pts).class,
            StarShapeClass::NotStarShaped
        );
        let unit: Vec<_> = (0..400)
            .map(|k| {
                let t = TAU * k as f64 / 400.0;
                Vector2::new(t.cos(), t.sin())
            })
            .collect();
        assert_eq!(
            classify_closed_curve(&unit).class,
            StarShapeClass::StrictlyStarShaped
        );
    }

    #[test]
    fn rejects_vanishing_radius() {
        let r = RadiusFn::perturbed_disk(1.2, 1);
        assert!(matches!(
            StarDomain::with_resolution(r, 16),
            Err(DomainError::NonPositiveRadius(_))
        ));
        assert!(StarDomain::new(RadiusFn::disk(1.0), 2, 16).is_err());
    }

    #[test]
    fn volume_integrals() {
        let d = disk(64);
        assert_abs_diff_eq!(d.integrate_volume(|_| 1.0), PI, epsilon = 1e-10);
        assert_abs_diff_eq!(
            ellipse(64).integrate_volume(|_| 1.0),
            2.0 * PI,
            epsilon = 1e-10
        );
        // ∫ x₁² over the unit disk = π/4, second order in h
        let e64 = (d.integrate_volume(|x| x.x * x.x) - PI / 4.0).abs();
        let e128 = (disk(128).integrate_volume(|x| x.x * x.x) - PI / 4.0).abs();
        assert!(e64 < 1e-3);
        assert!((e64 / e128).log2() > 1.9);
    }

    #[test]
    fn boundary_integrals() {
        let d = disk(64);
        assert_abs_diff_eq!(d.integrate_boundary(|_| 1.0), TAU, epsilon = 1e-12);
        assert_abs_diff_eq!(
            d.integrate_boundary(|b| b.x.dot(&b.normal)),
            TAU,
            epsilon = 1e-12
        );
        // complete elliptic integral oracle lives in tests/domain_oracles.rs
        assert_abs_diff_eq!(
            ellipse(256).integrate_boundary(|_| 1.0),
            9.688448220547675,
            epsilon = 1e-9
        );
    }

    #[test]
    fn support_integral_is_twice_area() {
        let d = StarDomain::with_resolution(RadiusFn::perturbed_disk(0.2, 3), 128).unwrap();
        let lhs = d.integrate_boundary(|b| b.x.dot(&b.normal));
        assert_relative_eq!(lhs, 2.0 * d.integrate_volume(|_| 1.0), max_relative = 1e-8);
    }

    #[test]
    fn inner_integral_of_one() {
        let d = disk(64);
        let ones = vec![1.0; d.len()];
        assert_abs_diff_eq!(
            d.integrate_nodal_inner(&ones, 0.5),
            PI / 4.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(d.integrate_nodal_inner(&ones, 1.0), PI, epsilon = 1e-12);
    }
}
