//! The growth profile `B` of the operator and checks of its structural bounds.
//!
//! Two families:
//!
//! * power, `B(t) = t^p / p`;
//! * regularized, `B'(t) = (κ² + t²)^{(p−2)/2} t`, so that
//!   `B(t) = ((κ² + t²)^{p/2} − κ^p) / p` in closed form.
//!
//! A regularized profile with `κ = 0` coincides with the power profile.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProfileError {
    #[error("exponent p must exceed 1, got {0}")]
    InvalidExponent(f64),
    #[error("kappa must lie in [0, 1], got {0}")]
    InvalidKappa(f64),
    #[error("profile evaluated at negative argument {0}")]
    NegativeArgument(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileKind {
    Power,
    Regularized,
}

/// `(B(t), B'(t), B''(t))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileEval {
    pub b: f64,
    pub db: f64,
    pub d2b: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundsReport {
    /// Tightest lower constant for `B'(t) ≥ γ (κ+t)^{p−2} t` on the grid.
    #[serde(serialize_with = "crate::report::sig17")]
    pub gamma_hat: f64,
    /// Tightest upper constant for `B'(t) ≤ Γ (κ+t)^{p−2} t` on the grid.
    #[serde(serialize_with = "crate::report::sig17")]
    pub upper_gamma_hat: f64,
    /// Same pair for `B''(t)` against `(κ+t)^{p−2}`.
    #[serde(serialize_with = "crate::report::sig17")]
    pub second_gamma_hat: f64,
    #[serde(serialize_with = "crate::report::sig17")]
    pub second_upper_gamma_hat: f64,
    #[serde(serialize_with = "crate::report::sig17")]
    pub t_min: f64,
    #[serde(serialize_with = "crate::report::sig17")]
    pub t_max: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Profile {
    kind: ProfileKind,
    p: f64,
    kappa: f64,
}

impl Profile {
    pub fn power(p: f64) -> Result<Self, ProfileError> {
        check_p(p)?;
        Ok(Self {
            kind: ProfileKind::Power,
            p,
            kappa: 0.0,
        })
    }

    pub fn regularized(p: f64, kappa: f64) -> Result<Self, ProfileError> {
        check_p(p)?;
        if !(0.0..=1.0).contains(&kappa) {
            return Err(ProfileError::InvalidKappa(kappa));
        }
        Ok(Self {
            kind: ProfileKind::Regularized,
            p,
            kappa,
        })
    }

    pub fn kind(&self) -> ProfileKind {
        self.kind
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// True for `B(t) = t^p/p`, including the regularized family at `κ = 0`.
    pub fn is_pure_power(&self) -> bool {
        self.kappa == 0.0
    }

    /// Same exponent with a different regularization (continuation step).
    pub fn with_kappa(&self, kappa: f64) -> Result<Self, ProfileError> {
        if kappa == 0.0 {
            Self::power(self.p)
        } else {
            Self::regularized(self.p, kappa)
        }
    }

    pub fn evaluate(&self, t: f64) -> Result<ProfileEval, ProfileError> {
        if t < 0.0 || t.is_nan() {
            return Err(ProfileError::NegativeArgument(t));
        }
        Ok(ProfileEval {
            b: self.b(t),
            db: self.db(t),
            d2b: self.d2b(t),
        })
    }

    /// `B(t)` for `t ≥ 0` (unchecked).
    pub fn b(&self, t: f64) -> f64 {
        let p = self.p;
        if self.kappa == 0.0 {
            if p == 2.0 {
                return 0.5 * t * t;
            }
            return t.powf(p) / p;
        }
        let k = self.kappa;
        k.powf(p) * (0.5 * p * (t * t / (k * k)).ln_1p()).exp_m1() / p
    }

    /// `B'(t)` for `t ≥ 0` (unchecked).
    pub fn db(&self, t: f64) -> f64 {
        let p = self.p;
        if self.kappa == 0.0 {
            if p == 2.0 {
                return t;
            }
            return if t == 0.0 { 0.0 } else { t.powf(p - 1.0) };
        }
        let k2 = self.kappa * self.kappa;
        (k2 + t * t).powf(0.5 * (p - 2.0)) * t
    }

    /// `B''(t)` for `t ≥ 0` (unchecked). At `t = 0` with `κ = 0` this is the
    /// one-sided limit: `+∞` for `p < 2`, `1` for `p = 2`, `0` for `p > 2`.
    pub fn d2b(&self, t: f64) -> f64 {
        let p = self.p;
        if self.kappa == 0.0 {
            if p == 2.0 {
                return 1.0;
            }
            if t == 0.0 {
                return if p < 2.0 { f64::INFINITY } else { 0.0 };
            }
            return (p - 1.0) * t.powf(p - 2.0);
        }
        let k2 = self.kappa * self.kappa;
        (k2 + t * t).powf(0.5 * (p - 4.0)) * (k2 + (p - 1.0) * t * t)
    }

    /// `B'(t)/t`, extended continuously to `t = 0` where the limit is finite.
    pub fn db_over_t(&self, t: f64) -> f64 {
        if t > 0.0 {
            return self.db(t) / t;
        }
        self.d2b(0.0)
    }

    /// Fit the constants of the two-sided bounds on `B'` and `B''` over `t_grid`.
    pub fn check_structural_bounds(&self, t_grid: &[f64]) -> BoundsReport {
        let mut lo1 = f64::INFINITY;
        let mut hi1 = f64::NEG_INFINITY;
        let mut lo2 = f64::INFINITY;
        let mut hi2 = f64::NEG_INFINITY;
        let mut valid = !t_grid.is_empty();
        for &t in t_grid {
            if !(t > 0.0 && t.is_finite()) {
                valid = false;
                continue;
            }
            let weight = (self.kappa + t).powf(self.p - 2.0);
            let r1 = self.db(t) / (weight * t);
            let r2 = self.d2b(t) / weight;
            lo1 = lo1.min(r1);
            hi1 = hi1.max(r1);
            lo2 = lo2.min(r2);
            hi2 = hi2.max(r2);
        }
        let positive = |x: f64| x.is_finite() && x > 0.0;
        let pass = valid && [lo1, hi1, lo2, hi2].into_iter().all(positive);
        BoundsReport {
            gamma_hat: lo1,
            upper_gamma_hat: hi1,
            second_gamma_hat: lo2,
            second_upper_gamma_hat: hi2,
            t_min: t_grid.iter().copied().fold(f64::INFINITY, f64::min),
            t_max: t_grid.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            pass,
        }
    }

    /// `max B'(t) t / B(t)` over the grid.
    pub fn bprime_times_t_vs_b(&self, t_grid: &[f64]) -> f64 {
        t_grid
            .iter()
            .filter(|&&t| t > 0.0)
            .map(|&t| self.db(t) * t / self.b(t))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

fn check_p(p: f64) -> Result<(), ProfileError> {
    if !(p.is_finite() && p > 1.0) {
        return Err(ProfileError::InvalidExponent(p));
    }
    Ok(())
}

/// `n` log-spaced points covering `[t_min, t_max]`.
pub fn log_grid(t_min: f64, t_max: f64, n: usize) -> Vec<f64> {
    let (a, b) = (t_min.ln(), t_max.ln());
    match n {
        0 => vec![],
        1 => vec![t_min],
        _ => (0..n)
            .map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp())
            .collect(),
    }
}

/// Default grid for the bound checks: 10⁴ points over `[1e-6, 1e6]`.
pub fn default_bounds_grid() -> Vec<f64> {
    log_grid(1e-6, 1e6, 10_000)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn power_values() {
        let e = Profile::power(2.0).unwrap().evaluate(3.0).unwrap();
        assert_eq!((e.b, e.db, e.d2b), (4.5, 3.0, 1.0));
        let e = Profile::power(3.0).unwrap().evaluate(2.0).unwrap();
        assert_relative_eq!(e.b, 8.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(e.db, 4.0, epsilon = 1e-15);
        assert_relative_eq!(e.d2b, 4.0, epsilon = 1e-15);
    }

    #[test]
    fn regularized_at_origin() {
        let e = Profile::regularized(3.0, 1.0)
            .unwrap()
            .evaluate(0.0)
            .unwrap();
        assert_eq!((e.b, e.db, e.d2b), (0.0, 0.0, 1.0));
    }

    #[test]
    fn regularized_closed_form_matches_quadrature() {
        let pr = Profile::regularized(2.5, 0.3).unwrap();
        for t in [1e-4, 0.1, 1.0, 7.0] {
            let q = crate::quadrature::integrate_adaptive(|s| pr.db(s), 0.0, t, 1e-14);
            assert_relative_eq!(pr.b(t), q, max_relative = 1e-12);
        }
    }

    #[test]
    fn negative_argument_is_an_error() {
        let pr = Profile::power(2.0).unwrap();
        assert_eq!(pr.evaluate(-1.0), Err(ProfileError::NegativeArgument(-1.0)));
    }

    #[test]
    fn p_at_most_one_is_rejected() {
        assert_eq!(Profile::power(1.0), Err(ProfileError::InvalidExponent(1.0)));
        assert!(Profile::regularized(2.0, 1.5).is_err());
    }

    #[test]
    fn power_bounds_are_tight() {
        for p in [1.5, 2.0, 3.0, 4.5] {
            let r = Profile::power(p)
                .unwrap()
                .check_structural_bounds(&default_bounds_grid());
            assert!(r.pass);
            assert_relative_eq!(r.gamma_hat, 1.0, epsilon = 1e-12);
            assert_relative_eq!(r.upper_gamma_hat, 1.0, epsilon = 1e-12);
            assert_relative_eq!(r.second_gamma_hat, p - 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn regularized_bounds() {
        let grid = log_grid(1e-3, 1e3, 10_000);
        let r = Profile::regularized(3.0, 1.0)
            .unwrap()
            .check_structural_bounds(&grid);
        assert!(r.pass);
        // sqrt(1+t²)/(1+t) attains 1/√2 at t = 1
        assert!(r.gamma_hat >= 1.0 / 2f64.sqrt() - 1e-12);
        assert!(r.gamma_hat <= 1.0 / 2f64.sqrt() + 1e-6);
        assert!(r.upper_gamma_hat <= 1.0 + 1e-12);
    }

    #[test]
    fn bprime_t_over_b() {
        let grid = default_bounds_grid();
        assert_relative_eq!(
            Profile::power(3.0).unwrap().bprime_times_t_vs_b(&grid),
            3.0,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            Profile::power(1.5).unwrap().bprime_times_t_vs_b(&grid),
            1.5,
            epsilon = 1e-12
        );
        let c = Profile::regularized(2.0, 1.0)
            .unwrap()
            .bprime_times_t_vs_b(&grid);
        assert!(c.is_finite() && c <= 2.0 + 1e-12);
    }

    #[test]
    fn with_kappa_zero_is_power() {
        let pr = Profile::regularized(3.0, 0.5)
            .unwrap()
            .with_kappa(0.0)
            .unwrap();
        assert_eq!(pr.kind(), ProfileKind::Power);
    }
}
