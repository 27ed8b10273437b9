//! Analytic test fields with closed-form first and second derivatives.

use nalgebra::{Matrix2, Vector2};

/// A scalar field on the plane with analytic derivatives.
pub trait SmoothField: Sync + Send {
    fn value(&self, x: Vector2<f64>) -> f64;
    fn gradient(&self, x: Vector2<f64>) -> Vector2<f64>;
    fn hessian(&self, x: Vector2<f64>) -> Matrix2<f64>;
    /// Radius of a centred ball containing the support, if compact.
    fn support_radius(&self) -> Option<f64> {
        None
    }
}

/// `(R² − |x|²)·P(x)` with a quadratic polynomial `P`, vanishing on the circle
/// of radius `R`.
///
/// `P(x) = c₀ + c₁x₁ + c₂x₂ + c₃x₁x₂ + c₄x₁² + c₅x₂²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bubble {
    pub radius: f64,
    pub coeffs: [f64; 6],
}

impl Bubble {
    pub fn new(radius: f64, coeffs: [f64; 6]) -> Self {
        Self { radius, coeffs }
    }

    fn poly(&self, x: Vector2<f64>) -> (f64, Vector2<f64>, Matrix2<f64>) {
        let c = &self.coeffs;
        let (a, b) = (x.x, x.y);
        let v = c[0] + c[1] * a + c[2] * b + c[3] * a * b + c[4] * a * a + c[5] * b * b;
        let g = Vector2::new(
            c[1] + c[3] * b + 2.0 * c[4] * a,
            c[2] + c[3] * a + 2.0 * c[5] * b,
        );
        let h = Matrix2::new(2.0 * c[4], c[3], c[3], 2.0 * c[5]);
        (v, g, h)
    }
}

impl SmoothField for Bubble {
    fn value(&self, x: Vector2<f64>) -> f64 {
        (self.radius * self.radius - x.norm_squared()) * self.poly(x).0
    }

    fn gradient(&self, x: Vector2<f64>) -> Vector2<f64> {
        let q = self.radius * self.radius - x.norm_squared();
        let (p, gp, _) = self.poly(x);
        -2.0 * x * p + q * gp
    }

    fn hessian(&self, x: Vector2<f64>) -> Matrix2<f64> {
        let q = self.radius * self.radius - x.norm_squared();
        let gq = -2.0 * x;
        let (p, gp, hp) = self.poly(x);
        Matrix2::identity() * (-2.0 * p) + gq * gp.transpose() + gp * gq.transpose() + hp * q
    }
}

/// `A(1 − |x − c|²/R₀²)^k` inside the ball `B(c, R₀)`, zero outside.
///
/// With `k ≥ 3` the field is `C²` across the edge of its support.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialBump {
    pub amplitude: f64,
    pub center: Vector2<f64>,
    pub radius: f64,
    pub power: i32,
}

impl RadialBump {
    pub fn new(amplitude: f64, radius: f64) -> Self {
        Self {
            amplitude,
            center: Vector2::zeros(),
            radius,
            power: 5,
        }
    }

    pub fn centered_at(mut self, center: Vector2<f64>) -> Self {
        self.center = center;
        self
    }

    fn w(&self, x: Vector2<f64>) -> Option<(f64, Vector2<f64>)> {
        let y = x - self.center;
        let w = 1.0 - y.norm_squared() / (self.radius * self.radius);
        (w > 0.0).then_some((w, y))
    }
}

impl SmoothField for RadialBump {
    fn value(&self, x: Vector2<f64>) -> f64 {
        self.w(x)
            .map_or(0.0, |(w, _)| self.amplitude * w.powi(self.power))
    }

    fn gradient(&self, x: Vector2<f64>) -> Vector2<f64> {
        let Some((w, y)) = self.w(x) else {
            return Vector2::zeros();
        };
        let k = self.power as f64;
        let r2 = self.radius * self.radius;
        y * (-2.0 * self.amplitude * k * w.powi(self.power - 1) / r2)
    }

    fn hessian(&self, x: Vector2<f64>) -> Matrix2<f64> {
        let Some((w, y)) = self.w(x) else {
            return Matrix2::zeros();
        };
        let k = self.power as f64;
        let r2 = self.radius * self.radius;
        let a = self.amplitude;
        y * y.transpose() * (4.0 * a * k * (k - 1.0) * w.powi(self.power - 2) / (r2 * r2))
            - Matrix2::identity() * (2.0 * a * k * w.powi(self.power - 1) / r2)
    }

    fn support_radius(&self) -> Option<f64> {
        Some(self.center.norm() + self.radius)
    }
}
