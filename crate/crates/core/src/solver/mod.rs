//! Zero-trace solutions of `−div(B'(H(∇u))∇H(∇u)) = g(x, u)` by direct
//! minimization of `E(u) = ∫B(H(∇u)) − G(x, u)`.
//!
//! The energy is discretized with continuous piecewise-linear elements on the
//! mapped polar grid and a lumped mass for the source term. Each step solves
//! `K(u) d = −∇E(u)` where `K` is the stiffness of the tangent
//! `c M + (B''(H) − c)∇H∇Hᵀ` with `c = B'(H)/H` and `M = D²(H²/2)`, both
//! evaluated with `H` clamped away from zero, followed by Armijo backtracking. For `p ≠ 2` the profile is regularized and `κ` is
//! decreased to its target, each stage warm-starting the next.

mod linalg;
mod mesh;

use crate::anisotropy::{Anisotropy, AnisotropyError, DEGENERACY_FLOOR};
use crate::domain::StarDomain;
use crate::field::{gradient, GridField, SmoothField, SourceGrowth, SourceModel};
use crate::parallel;
use crate::profile::{Profile, ProfileError};
use linalg::{pcg, PolarPreconditioner};
use mesh::{PolarMesh, NO_SLOT};
use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

/// Tolerance used on intermediate continuation stages.
const STAGE_TOLERANCE: f64 = 1e-4;
/// Lower clamp on `H` relative to its maximum when freezing coefficients.
const COEFFICIENT_CLAMP: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error("energy is not coercive for this source: {0}")]
    NotCoercive(String),
    #[error("line search failed at iteration {iteration} (kappa = {kappa})")]
    LineSearchFailure { iteration: usize, kappa: f64 },
    #[error("no convergence after {iterations} iterations (kappa = {kappa}, gradient norm {gradient_norm:e})")]
    MaxIterations {
        iterations: usize,
        kappa: f64,
        gradient_norm: f64,
    },
    #[error(transparent)]
    Anisotropy(#[from] AnisotropyError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Iteration cap per continuation stage.
    pub max_iterations: usize,
    /// Target for `max_n |∂E/∂u_n| / m_n`, a discrete strong residual.
    pub gradient_tolerance: f64,
    /// Decreasing `κ` values ending at the profile's own `κ`. Empty selects
    /// `1, 0.1, 0.01, 0.001` for `p ≠ 2` and no continuation for `p = 2`.
    pub kappa_schedule: Vec<f64>,
    pub backtracking: f64,
    pub armijo: f64,
    pub cg_tolerance: f64,
    pub cg_max_iterations: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            gradient_tolerance: 1e-8,
            kappa_schedule: Vec::new(),
            backtracking: 0.5,
            armijo: 1e-4,
            cg_tolerance: 1e-10,
            cg_max_iterations: 2000,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |m: &str| Err(SolverError::Config(m.to_string()));
        if self.max_iterations == 0 || self.cg_max_iterations == 0 {
            return bad("iteration limits must be positive");
        }
        if !(self.gradient_tolerance > 0.0 && self.cg_tolerance > 0.0) {
            return bad("tolerances must be positive");
        }
        if !(self.backtracking > 0.0 && self.backtracking < 1.0) {
            return bad("backtracking factor must lie in (0, 1)");
        }
        if !(self.armijo > 0.0 && self.armijo < 1.0) {
            return bad("sufficient-decrease constant must lie in (0, 1)");
        }
        if self.kappa_schedule.windows(2).any(|w| !(w[1] < w[0])) {
            return bad("kappa schedule must be strictly decreasing");
        }
        Ok(())
    }

    /// The `κ` values actually visited for a target profile.
    pub fn kappa_path(&self, target: &Profile) -> Result<Vec<f64>, SolverError> {
        let k = target.kappa();
        if !self.kappa_schedule.is_empty() {
            let last = *self.kappa_schedule.last().unwrap();
            if last != k {
                return Err(SolverError::Config(format!(
                    "kappa schedule must end at the profile kappa {k}, ends at {last}"
                )));
            }
            return Ok(self.kappa_schedule.clone());
        }
        if target.p() == 2.0 {
            return Ok(vec![k]);
        }
        let mut path: Vec<f64> = [1.0, 0.1, 0.01, 0.001]
            .into_iter()
            .filter(|&c| c > k)
            .collect();
        path.push(k);
        Ok(path)
    }
}

/// Why a stage stopped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Tolerance,
    /// The predicted decrease fell below round-off of the energy.
    Stagnation,
}

#[derive(Debug, Clone, Serialize)]
pub struct StageSummary {
    #[serde(serialize_with = "crate::report::sig17")]
    pub kappa: f64,
    pub iterations: usize,
    #[serde(serialize_with = "crate::report::sig17")]
    pub gradient_norm: f64,
    pub stop: StopReason,
    /// Energy of every accepted iterate, starting with the initial one.
    #[serde(serialize_with = "crate::report::sig17_vec")]
    pub energy_history: Vec<f64>,
    pub cg_iterations: usize,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub u: GridField,
    pub iterations: usize,
    pub energy: f64,
    pub gradient_norm: f64,
    pub kappa_path: Vec<f64>,
    pub stages: Vec<StageSummary>,
}

impl SolveResult {
    /// True when every stage has a non-increasing energy history.
    pub fn energy_monotone(&self) -> bool {
        self.stages
            .iter()
            .all(|s| s.energy_history.windows(2).all(|w| w[1] <= w[0]))
    }
}

/// Grid quadrature of `∫B(H(∇u)) − G(x, u)` with the stencil gradient.
pub fn energy(
    u: &GridField,
    src: &dyn SourceModel,
    pr: &Profile,
    a: &Anisotropy,
) -> Result<f64, SolverError> {
    let d = u.domain().clone();
    let grad = gradient(u);
    let nt = d.n_theta();
    let vals = u.values();
    let dens = parallel::map(d.len(), |k| -> Result<f64, AnisotropyError> {
        let x = d.node(k / nt, k % nt);
        Ok(pr.b(a.value(&grad.values()[k])?) - src.primitive(x, vals[k]))
    });
    let dens = dens.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(d.integrate_nodal(&dens))
}

fn check_coercive(src: &dyn SourceModel, pr: &Profile) -> Result<(), SolverError> {
    match src.growth() {
        SourceGrowth::Independent | SourceGrowth::Decreasing => Ok(()),
        SourceGrowth::Power(m) if m < pr.p() - 1.0 => Ok(()),
        SourceGrowth::Power(m) => Err(SolverError::NotCoercive(format!(
            "power source with m = {m} ≥ p − 1 = {}",
            pr.p() - 1.0
        ))),
        SourceGrowth::Unknown => Err(SolverError::NotCoercive(
            "growth of the source in u is unknown".into(),
        )),
    }
}

struct Problem<'a> {
    mesh: &'a PolarMesh,
    src: &'a dyn SourceModel,
    a: &'a Anisotropy,
}

impl Problem<'_> {
    fn energy(&self, pr: &Profile, u: &[f64]) -> f64 {
        let m = self.mesh;
        let tri = parallel::ordered_sum(m.triangles.len(), |k| {
            let t = &m.triangles[k];
            let xi = m.triangle_gradient(t, u);
            t.area * pr.b(self.a.value(&xi).unwrap_or(0.0))
        });
        let src = parallel::ordered_sum(m.n_nodes(), |n| {
            m.mass[n] * self.src.primitive(m.points[n], u[n])
        });
        tri - src
    }

    /// `∂E/∂u_n` for the free nodes.
    fn gradient(&self, pr: &Profile, u: &[f64]) -> Vec<f64> {
        let m = self.mesh;
        let stresses = parallel::map(m.triangles.len(), |k| {
            let t = &m.triangles[k];
            let xi = m.triangle_gradient(t, u);
            if xi.norm() < DEGENERACY_FLOOR {
                return Vector2::zeros();
            }
            match self.a.evaluate(&xi) {
                Ok(e) => e.gradient * (pr.db(e.value) * t.area),
                Err(_) => Vector2::zeros(),
            }
        });
        let mut g = vec![0.0; m.n_free];
        for (t, s) in m.triangles.iter().zip(&stresses) {
            for (l, &n) in t.nodes.iter().enumerate() {
                if n < m.n_free {
                    g[n] += s.dot(&t.grads[l]);
                }
            }
        }
        let src = parallel::map(m.n_free, |n| m.mass[n] * self.src.g(m.points[n], u[n]));
        g.iter_mut().zip(src).for_each(|(gi, s)| *gi -= s);
        g
    }

    /// Frozen-coefficient stiffness and the annulus averages used by the
    /// preconditioner.
    fn linearization(&self, pr: &Profile, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let m = self.mesh;
        let xis: Vec<Vector2<f64>> = m
            .triangles
            .iter()
            .map(|t| m.triangle_gradient(t, u))
            .collect();
        let hs = parallel::map(xis.len(), |k| self.a.value(&xis[k]).unwrap_or(0.0));
        let h_max = hs.iter().copied().fold(0.0, f64::max);
        let fallback = {
            let c = pr.d2b(0.0);
            if c.is_finite() && c > 0.0 {
                c
            } else {
                1.0
            }
        };
        let locals = parallel::map(m.triangles.len(), |k| {
            let t = &m.triangles[k];
            let c = if h_max > 0.0 {
                pr.db_over_t(hs[k].max(COEFFICIENT_CLAMP * h_max))
            } else {
                fallback
            };
            let metric: Matrix2<f64> = self
                .a
                .metric(&xis[k])
                .unwrap_or_else(|_| Matrix2::identity());
            let mut tangent = metric * c;
            if h_max > 0.0 && hs[k] > DEGENERACY_FLOOR {
                if let Ok(e) = self.a.evaluate(&xis[k]) {
                    let d = pr.d2b(hs[k].max(COEFFICIENT_CLAMP * h_max));
                    if d.is_finite() && d > 0.0 {
                        tangent += e.gradient * e.gradient.transpose() * (d - c);
                    }
                }
            }
            let scaled = tangent * t.area;
            let mut local = [0.0; 9];
            for a in 0..3 {
                let ma = scaled * t.grads[a];
                for b in 0..3 {
                    local[3 * a + b] = ma.dot(&t.grads[b]);
                }
            }
            (local, 0.5 * tangent.trace())
        });
        let mut values = vec![0.0; m.col_idx.len()];
        let nr = m.domain.n_r();
        let mut annulus = vec![0.0; nr];
        let mut counts = vec![0usize; nr];
        for ((t, slots), (local, coef)) in m.triangles.iter().zip(&m.slots).zip(&locals) {
            for e in 0..9 {
                if slots[e] != NO_SLOT {
                    values[slots[e]] += local[e];
                }
            }
            annulus[t.ring] += coef;
            counts[t.ring] += 1;
        }
        for (a, c) in annulus.iter_mut().zip(&counts) {
            *a /= *c as f64;
        }
        let a_max = annulus.iter().copied().fold(0.0, f64::max);
        for a in &mut annulus {
            *a = a.max(1e-12 * a_max);
        }
        (values, annulus)
    }
}

fn strong_norm(mesh: &PolarMesh, g: &[f64]) -> f64 {
    g.iter()
        .zip(&mesh.mass)
        .fold(0.0f64, |m, (gi, mi)| m.max((gi / mi).abs()))
}

/// Minimize the energy over zero-trace fields, starting from zero.
pub fn solve_dirichlet(
    src: &dyn SourceModel,
    pr: &Profile,
    a: &Anisotropy,
    d: Arc<StarDomain>,
    cfg: &SolverConfig,
) -> Result<SolveResult, SolverError> {
    let initial = match src.growth() {
        // u = 0 is a critical point of superlinear-at-zero sources
        SourceGrowth::Power(_) => GridField::from_fn(d.clone(), |x| {
            let (r, _) = d.radius_fn().eval(x.y.atan2(x.x));
            (1.0 - x.norm_squared() / (r * r)).max(0.0)
        }),
        _ => GridField::zeros(d.clone()),
    };
    solve_dirichlet_from(src, pr, a, initial, cfg)
}

/// Same as [`solve_dirichlet`] from a given interior guess; its boundary
/// values are replaced by zero.
pub fn solve_dirichlet_from(
    src: &dyn SourceModel,
    pr: &Profile,
    a: &Anisotropy,
    initial: GridField,
    cfg: &SolverConfig,
) -> Result<SolveResult, SolverError> {
    cfg.validate()?;
    check_coercive(src, pr)?;
    if a.dimension() != 2 {
        return Err(SolverError::Config("the solver is planar".into()));
    }
    let d = initial.domain().clone();
    let mesh = PolarMesh::new(d.clone());
    let problem = Problem {
        mesh: &mesh,
        src,
        a,
    };
    let mut u = mesh.nodal_from_grid(initial.values());
    u[mesh.n_free..].iter_mut().for_each(|v| *v = 0.0);
    let path = cfg.kappa_path(pr)?;
    let mut stages = Vec::with_capacity(path.len());
    let mut total = 0;
    for (s, &kappa) in path.iter().enumerate() {
        let stage_pr = pr.with_kappa(kappa)?;
        let tol = if s + 1 == path.len() {
            cfg.gradient_tolerance
        } else {
            cfg.gradient_tolerance.max(STAGE_TOLERANCE)
        };
        let summary = run_stage(&problem, &stage_pr, &mut u, tol, cfg)?;
        log::debug!(
            "kappa {kappa}: {} iterations, gradient norm {:e}",
            summary.iterations,
            summary.gradient_norm
        );
        total += summary.iterations;
        stages.push(summary);
    }
    let last = stages.last().expect("at least one stage");
    Ok(SolveResult {
        u: GridField::from_values(d, mesh.to_grid(&u)).expect("grid length"),
        iterations: total,
        energy: *last.energy_history.last().unwrap(),
        gradient_norm: last.gradient_norm,
        kappa_path: path,
        stages,
    })
}

fn run_stage(
    problem: &Problem,
    pr: &Profile,
    u: &mut [f64],
    tol: f64,
    cfg: &SolverConfig,
) -> Result<StageSummary, SolverError> {
    let mesh = problem.mesh;
    let nf = mesh.n_free;
    let (nr, nt) = (mesh.domain.n_r(), mesh.domain.n_theta());
    let mut e = problem.energy(pr, u);
    let mut history = vec![e];
    let mut cg_total = 0;
    let mut direction = vec![0.0; nf];
    for it in 0..=cfg.max_iterations {
        let g = problem.gradient(pr, u);
        let gnorm = strong_norm(mesh, &g);
        let summary = |stop, iterations, history: Vec<f64>, cg| StageSummary {
            kappa: pr.kappa(),
            iterations,
            gradient_norm: gnorm,
            stop,
            energy_history: history,
            cg_iterations: cg,
        };
        if gnorm <= tol {
            return Ok(summary(StopReason::Tolerance, it, history, cg_total));
        }
        if it == cfg.max_iterations {
            return Err(SolverError::MaxIterations {
                iterations: it,
                kappa: pr.kappa(),
                gradient_norm: gnorm,
            });
        }
        let (values, annulus) = problem.linearization(pr, u);
        let pre = PolarPreconditioner::new(nr, nt, &annulus);
        let rhs: Vec<f64> = g.iter().map(|v| -v).collect();
        let out = pcg(
            mesh,
            &values,
            &rhs,
            &pre,
            cfg.cg_tolerance,
            cfg.cg_max_iterations,
            &mut direction,
        );
        cg_total += out.iterations;
        log::trace!(
            "cg: {} iterations, relative residual {:e}",
            out.iterations,
            out.relative_residual
        );
        let mut slope = parallel::dot(&g, &direction);
        if !(slope < 0.0) {
            for (dk, (gk, mk)) in direction.iter_mut().zip(g.iter().zip(&mesh.mass)) {
                *dk = -gk / mk;
            }
            slope = parallel::dot(&g, &direction);
        }
        let noise = 1e-15 * e.abs().max(f64::MIN_POSITIVE);
        if slope.abs() <= noise {
            return Ok(summary(StopReason::Stagnation, it, history, cg_total));
        }
        let mut alpha = 1.0;
        let mut trial = u.to_vec();
        loop {
            for k in 0..nf {
                trial[k] = u[k] + alpha * direction[k];
            }
            let e_new = problem.energy(pr, &trial);
            if e_new <= e + cfg.armijo * alpha * slope {
                u[..nf].copy_from_slice(&trial[..nf]);
                e = e_new;
                history.push(e);
                break;
            }
            alpha *= cfg.backtracking;
            if alpha < 1e-12 {
                if slope.abs() <= 1e-10 * e.abs() {
                    return Ok(summary(StopReason::Stagnation, it, history, cg_total));
                }
                return Err(SolverError::LineSearchFailure {
                    iteration: it,
                    kappa: pr.kappa(),
                });
            }
        }
    }
    unreachable!("loop returns on its last iteration")
}

/// `u(r) = ((p−1)/p) N^{−1/(p−1)} (R^{p/(p−1)} − r^{p/(p−1)})`, the radial
/// solution of `−div(|∇u|^{p−2}∇u) = 1` on the ball of radius `R`, vanishing
/// on its boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorsionSolution {
    pub p: f64,
    pub dimension: usize,
    pub radius: f64,
    coeff: f64,
    q: f64,
}

pub fn torsion_oracle(
    p: f64,
    dimension: usize,
    radius: f64,
) -> Result<TorsionSolution, SolverError> {
    if !(p > 1.0 && radius > 0.0 && dimension >= 1) {
        return Err(SolverError::Config(format!(
            "torsion oracle needs p > 1, R > 0, N ≥ 1 (p = {p}, R = {radius}, N = {dimension})"
        )));
    }
    let n = dimension as f64;
    Ok(TorsionSolution {
        p,
        dimension,
        radius,
        coeff: (p - 1.0) / p * n.powf(-1.0 / (p - 1.0)),
        q: p / (p - 1.0),
    })
}

impl TorsionSolution {
    /// `u` as a function of the distance to the centre.
    pub fn radial(&self, r: f64) -> f64 {
        self.coeff * (self.radius.powf(self.q) - r.powf(self.q))
    }

    /// `|u'(R)|`, the boundary slope.
    pub fn boundary_slope(&self) -> f64 {
        self.coeff * self.q * self.radius.powf(self.q - 1.0)
    }
}

impl SmoothField for TorsionSolution {
    fn value(&self, x: Vector2<f64>) -> f64 {
        self.radial(x.norm())
    }

    fn gradient(&self, x: Vector2<f64>) -> Vector2<f64> {
        let r = x.norm();
        if r == 0.0 {
            return Vector2::zeros();
        }
        -x * (self.coeff * self.q * r.powf(self.q - 2.0))
    }

    fn hessian(&self, x: Vector2<f64>) -> Matrix2<f64> {
        let c = self.coeff * self.q;
        if self.q == 2.0 {
            return -Matrix2::identity() * c;
        }
        let r = x.norm();
        if r == 0.0 {
            let v = if self.q < 2.0 { f64::NEG_INFINITY } else { 0.0 };
            return Matrix2::identity() * v;
        }
        -(Matrix2::identity() * r.powf(self.q - 2.0)
            + x * x.transpose() * ((self.q - 2.0) * r.powf(self.q - 4.0)))
            * c
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::RadiusFn;
    use crate::field::{ConstantSource, FnSource, PowerSource};
    use approx::assert_relative_eq;

    #[test]
    fn oracle_closed_forms() {
        let t2 = torsion_oracle(2.0, 2, 1.0).unwrap();
        assert_relative_eq!(t2.radial(0.5), 0.25 * 0.75, epsilon = 1e-15);
        let t3 = torsion_oracle(3.0, 2, 1.0).unwrap();
        assert_relative_eq!(
            t3.radial(0.25),
            2f64.sqrt() / 3.0 * (1.0 - 0.125),
            epsilon = 1e-15
        );
        for p in [1.5, 2.0, 3.0, 4.0] {
            for r in [0.5, 2.0] {
                assert_eq!(torsion_oracle(p, 3, r).unwrap().radial(r), 0.0);
            }
        }
    }

    #[test]
    fn energy_trivial_and_torsion() {
        let d = Arc::new(StarDomain::with_resolution(RadiusFn::disk(1.0), 128).unwrap());
        let pr = Profile::power(2.0).unwrap();
        let a = Anisotropy::euclidean(2).unwrap();
        let one = ConstantSource::new(1.0);
        assert_eq!(
            energy(&GridField::zeros(d.clone()), &one, &pr, &a).unwrap(),
            0.0
        );
        let t = torsion_oracle(2.0, 2, 1.0).unwrap();
        let u = GridField::sample(d, &t);
        let e = energy(&u, &one, &pr, &a).unwrap();
        assert_relative_eq!(e, -std::f64::consts::PI / 16.0, max_relative = 1e-4);
        assert!(energy(&u.scaled(0.5), &one, &pr, &a).unwrap() > e);
    }

    #[test]
    fn config_validation() {
        let mut c = SolverConfig::default();
        assert!(c.validate().is_ok());
        c.kappa_schedule = vec![0.1, 0.5, 0.0];
        assert!(c.validate().is_err());
        c = SolverConfig {
            backtracking: 1.5,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let p3 = Profile::power(3.0).unwrap();
        assert_eq!(
            SolverConfig::default().kappa_path(&p3).unwrap(),
            vec![1.0, 0.1, 0.01, 0.001, 0.0]
        );
    }

    #[test]
    fn refuses_non_coercive_sources() {
        let d = Arc::new(StarDomain::with_resolution(RadiusFn::disk(1.0), 8).unwrap());
        let pr = Profile::power(2.0).unwrap();
        let a = Anisotropy::euclidean(2).unwrap();
        let cfg = SolverConfig::default();
        let e = solve_dirichlet(&PowerSource::new(1.0, 3.0), &pr, &a, d.clone(), &cfg);
        assert!(matches!(e, Err(SolverError::NotCoercive(_))));
        let f = FnSource::new(|_x: Vector2<f64>, s: f64| s);
        assert!(matches!(
            solve_dirichlet(&f, &pr, &a, d, &cfg),
            Err(SolverError::NotCoercive(_))
        ));
    }

    #[test]
    fn small_p2_torsion() {
        let d = Arc::new(StarDomain::with_resolution(RadiusFn::disk(1.0), 32).unwrap());
        let r = solve_dirichlet(
            &ConstantSource::new(1.0),
            &Profile::power(2.0).unwrap(),
            &Anisotropy::euclidean(2).unwrap(),
            d.clone(),
            &SolverConfig::default(),
        )
        .unwrap();
        let exact = GridField::sample(d, &torsion_oracle(2.0, 2, 1.0).unwrap());
        assert!(r.u.max_diff(&exact).unwrap() < 3e-3);
        assert!(r.energy_monotone());
        assert!(r.u.trace().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sublinear_power_source_has_a_nontrivial_minimizer() {
        let d = Arc::new(StarDomain::with_resolution(RadiusFn::disk(1.0), 16).unwrap());
        let r = solve_dirichlet(
            &PowerSource::new(1.0, 0.5),
            &Profile::power(2.0).unwrap(),
            &Anisotropy::euclidean(2).unwrap(),
            d,
            &SolverConfig::default(),
        )
        .unwrap();
        assert!(r.energy < 0.0);
        assert!(r.u.max_abs() > 0.01);
    }
}
