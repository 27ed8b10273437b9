//! One function per experiment kind. Each returns its JSON result, the list of
//! threshold checks and any tables to write.

use crate::config::{ConfigError, Experiment, RunConfig, SourceSpec};
use finsler_pohozaev::anisotropy::AnisotropyError;
use finsler_pohozaev::field::{
    ConstantSource, ManufacturedSource, PowerSource, SmoothField, SourceModel,
};
use finsler_pohozaev::pohozaev::{
    classical_plap_form, critical_exponent, dirichlet_boundary_reduction, identity_sides,
    nonexistence_scan, power_coefficient, wholespace_check, TRACE_TOLERANCE,
};
use finsler_pohozaev::profile::log_grid;
use finsler_pohozaev::report::{sig17, sig17_vec};
use finsler_pohozaev::solver::{solve_dirichlet, StageSummary};
use finsler_pohozaev::{
    Anisotropy, ConvergenceTable, GridField, IdentityReport, PohozaevError, Profile, StarDomain,
};
use serde::Serialize;
use serde_json::{json, Value};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Failed(String),
}

fn failed(e: impl std::fmt::Display) -> ExperimentError {
    ExperimentError::Failed(e.to_string())
}

#[derive(Debug, Clone, Copy, Serialize)]
pub enum Comparison {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
    #[serde(rename = ">")]
    Above,
}

impl Comparison {
    pub fn symbol(self) -> &'static str {
        match self {
            Comparison::AtMost => "<=",
            Comparison::AtLeast => ">=",
            Comparison::Above => ">",
        }
    }
}

/// One thresholded assertion of an experiment.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    #[serde(serialize_with = "sig17")]
    pub value: f64,
    #[serde(serialize_with = "sig17")]
    pub threshold: f64,
    pub comparison: Comparison,
    pub passed: bool,
}

impl Check {
    pub fn new(name: &str, value: f64, comparison: Comparison, threshold: f64) -> Self {
        let passed = match comparison {
            Comparison::AtMost => value <= threshold,
            Comparison::AtLeast => value >= threshold,
            Comparison::Above => value > threshold,
        };
        Self {
            name: name.to_string(),
            value,
            threshold,
            comparison,
            passed,
        }
    }

    /// A yes/no property, recorded as `1 ≥ 1` or `0 ≥ 1`.
    pub fn holds(name: &str, ok: bool) -> Self {
        Self::new(name, if ok { 1.0 } else { 0.0 }, Comparison::AtLeast, 1.0)
    }
}

pub struct Outcome {
    pub result: Value,
    pub checks: Vec<Check>,
    pub convergence: Option<ConvergenceTable>,
    pub field: Option<GridField>,
    /// Lines printed on standard output.
    pub stdout: Vec<String>,
}

impl Outcome {
    fn new(result: Value, checks: Vec<Check>) -> Self {
        Self {
            result,
            checks,
            convergence: None,
            field: None,
            stdout: Vec::new(),
        }
    }
}

pub fn run(cfg: &RunConfig) -> Result<Outcome, ExperimentError> {
    match cfg.experiment {
        Experiment::CheckHypotheses => check_hypotheses(cfg),
        Experiment::VerifyIdentity => identity_levels(cfg, false),
        Experiment::ConvergenceStudy => identity_levels(cfg, true),
        Experiment::Solve => solve(cfg),
        Experiment::NonexistenceScan => scan(cfg),
        Experiment::CriticalExponent => critical(cfg),
        Experiment::Wholespace => wholespace(cfg),
    }
}

/// The pieces most experiments share, built from the config.
struct Setup {
    anisotropy: Anisotropy,
    profile: Profile,
    field: Option<Arc<dyn SmoothField>>,
}

impl Setup {
    fn new(cfg: &RunConfig) -> Result<Self, ConfigError> {
        let anisotropy = cfg.anisotropy.as_ref().expect("validated").build()?;
        let profile = cfg.profile.as_ref().expect("validated").build()?;
        let field = cfg
            .field
            .as_ref()
            .map(|f| f.build(&profile, cfg.domain.as_ref()))
            .transpose()?;
        Ok(Self {
            anisotropy,
            profile,
            field,
        })
    }

    fn source(&self, cfg: &RunConfig) -> Result<Box<dyn SourceModel>, ConfigError> {
        Ok(match cfg.source.as_ref().expect("validated") {
            SourceSpec::Constant { value } => Box::new(ConstantSource::new(*value)),
            SourceSpec::Power { lambda, m } => Box::new(PowerSource::new(*lambda, *m)),
            SourceSpec::Manufactured => Box::new(ManufacturedSource::new(
                self.field.clone().expect("validated"),
                self.profile,
                self.anisotropy.clone(),
            )),
        })
    }

    fn field(&self) -> &Arc<dyn SmoothField> {
        self.field.as_ref().expect("validated")
    }
}

fn domain(cfg: &RunConfig, n: usize) -> Result<Arc<StarDomain>, ExperimentError> {
    let spec = cfg.domain.as_ref().expect("validated");
    StarDomain::with_resolution(spec.radius_fn(), n)
        .map(Arc::new)
        .map_err(|e| ConfigError::Invalid(e.to_string()).into())
}

fn finest(cfg: &RunConfig) -> usize {
    *cfg.resolutions.last().expect("validated")
}

fn check_hypotheses(cfg: &RunConfig) -> Result<Outcome, ExperimentError> {
    let a = cfg.anisotropy.as_ref().expect("validated").build()?;
    let pr = cfg.profile.as_ref().expect("validated").build()?;
    let spec = cfg.hypotheses.clone().unwrap_or_default();
    let homogeneity = a
        .check_homogeneity(spec.samples, cfg.seed)
        .map_err(failed)?;
    let (euler, kernel) = a.check_euler(spec.samples, cfg.seed).map_err(failed)?;
    let lambda = match a.estimate_ellipticity(spec.samples, cfg.seed) {
        Ok(l) => l,
        Err(AnisotropyError::NotUniformlyElliptic(l)) => l,
        Err(e) => return Err(failed(e)),
    };
    let (c1, c2) = a
        .estimate_norm_equivalence(spec.samples, cfg.seed)
        .map_err(failed)?;
    let bounds = pr.check_structural_bounds(&log_grid(spec.t_min, spec.t_max, spec.t_count));

    let mut checks = vec![
        Check::new("homogeneity_error", homogeneity, Comparison::AtMost, 1e-10),
        Check::new("euler_error", euler, Comparison::AtMost, 1e-10),
        Check::new("lambda_hat", lambda, Comparison::Above, 0.0),
        Check::new("c1_hat", c1, Comparison::Above, 0.0),
        Check::holds("structural_bounds", bounds.pass),
    ];
    let shape = match &cfg.domain {
        Some(spec) => {
            let d = StarDomain::with_resolution(spec.radius_fn(), finest_or(cfg, 256))
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
            let s = d.star_shape_classify();
            checks.push(Check::new(
                "min_support",
                s.min_support,
                Comparison::Above,
                0.0,
            ));
            Some(s)
        }
        None => None,
    };
    let result = json!({
        "anisotropy": {
            "lambda_hat": sig(lambda),
            "c1_hat": sig(c1),
            "c2_hat": sig(c2),
            "max_homogeneity_error": sig(homogeneity),
            "max_euler_error": sig(euler),
            "max_hessian_kernel_error": sig(kernel),
            "sample_count": spec.samples,
            "exactly_homogeneous": a.is_exactly_homogeneous(),
        },
        "profile": bounds,
        "domain": shape,
    });
    Ok(Outcome::new(result, checks))
}

fn finest_or(cfg: &RunConfig, default: usize) -> usize {
    cfg.resolutions.last().copied().unwrap_or(default)
}

fn sig(x: f64) -> String {
    finsler_pohozaev::report::format_sig17(x)
}

fn identity_levels(cfg: &RunConfig, study: bool) -> Result<Outcome, ExperimentError> {
    let setup = Setup::new(cfg)?;
    let src = setup.source(cfg)?;
    let (pr, a) = (&setup.profile, &setup.anisotropy);
    let mut reports: Vec<IdentityReport> = Vec::new();
    let mut top: Option<GridField> = None;
    for &n in &cfg.resolutions {
        let u = GridField::sample(domain(cfg, n)?, setup.field().as_ref());
        reports.push(identity_sides(&u, src.as_ref(), pr, a).map_err(failed)?);
        top = Some(u);
    }
    let u = top.expect("at least one level");
    let last = reports.last().expect("at least one level");
    let tol = cfg.thresholds.residual_rel.unwrap_or(1e-3);
    let mut checks = vec![Check::new(
        "residual_rel",
        last.residual_rel,
        Comparison::AtMost,
        tol,
    )];
    let decreasing = reports
        .windows(2)
        .all(|w| w[1].residual_abs < w[0].residual_abs);
    if reports.len() > 1 {
        checks.push(Check::holds("residual_decreasing", decreasing));
    }
    let table = if reports.len() > 1 {
        Some(ConvergenceTable::from_reports(&reports).map_err(failed)?)
    } else {
        None
    };
    if study {
        let order = table.as_ref().expect("two levels").min_order();
        let min = cfg.thresholds.min_order.unwrap_or(1.5);
        checks.push(Check::new(
            "observed_order",
            order,
            Comparison::AtLeast,
            min,
        ));
    }

    let classical = if pr.is_pure_power() && a.is_euclidean() && !src.depends_on_x() {
        let c = classical_plap_form(&u, src.as_ref(), pr, a).map_err(failed)?;
        checks.push(Check::new(
            "specialization_gap",
            c.termwise_gap,
            Comparison::AtMost,
            1e-12,
        ));
        Some(c)
    } else {
        None
    };
    let zero_trace = u
        .trace()
        .iter()
        .all(|&v| v.abs() <= TRACE_TOLERANCE * u.max_abs());
    let reduction = if zero_trace {
        let r = dirichlet_boundary_reduction(&u, src.as_ref(), pr, a).map_err(failed)?;
        let gap = r.power_gap.unwrap_or(r.reduced_gap);
        checks.push(Check::new(
            "dirichlet_reduction_gap",
            gap,
            Comparison::AtMost,
            1e-10,
        ));
        Some(r)
    } else {
        None
    };

    let result = json!({
        "levels": reports,
        "convergence": table,
        "classical": classical.map(|c| json!({
            "n_g": sig(c.n_g),
            "gradient_term": sig(c.gradient_term),
            "boundary_g": sig(c.boundary_g),
            "boundary_gradient": sig(c.boundary_gradient),
            "boundary_flux": sig(c.boundary_flux),
            "lhs": sig(c.lhs),
            "rhs": sig(c.rhs),
            "termwise_gap": sig(c.termwise_gap),
        })),
        "dirichlet_reduction": reduction.map(|r| json!({
            "unreduced": sig(r.unreduced),
            "reduced": sig(r.reduced),
            "power_form": r.power_form.map(sig),
            "reduced_gap": sig(r.reduced_gap),
            "power_gap": r.power_gap.map(sig),
        })),
    });
    let mut out = Outcome::new(result, checks);
    out.convergence = table;
    out.field = Some(u);
    Ok(out)
}

#[derive(Serialize)]
struct SolveSummary<'a> {
    resolution: usize,
    iterations: usize,
    #[serde(serialize_with = "sig17")]
    energy: f64,
    #[serde(serialize_with = "sig17")]
    gradient_norm: f64,
    #[serde(serialize_with = "sig17_vec")]
    kappa_path: &'a [f64],
    energy_monotone: bool,
    stages: &'a [StageSummary],
    identity: IdentityReport,
    reference: Option<Value>,
}

fn solve(cfg: &RunConfig) -> Result<Outcome, ExperimentError> {
    let setup = Setup::new(cfg)?;
    let src = setup.source(cfg)?;
    let (pr, a) = (&setup.profile, &setup.anisotropy);
    let n = finest(cfg);
    let d = domain(cfg, n)?;
    let solver_cfg = cfg.solver.clone().unwrap_or_default();
    let r = solve_dirichlet(src.as_ref(), pr, a, d.clone(), &solver_cfg).map_err(failed)?;
    let identity = identity_sides(&r.u, src.as_ref(), pr, a).map_err(failed)?;
    let tol = cfg.thresholds.residual_rel.unwrap_or(1e-3);
    let mut checks = vec![
        Check::holds("energy_monotone", r.energy_monotone()),
        Check::new(
            "identity_residual_rel",
            identity.residual_rel,
            Comparison::AtMost,
            tol,
        ),
    ];
    let reference = match &setup.field {
        Some(field) => {
            let exact = GridField::sample(d, field.as_ref());
            let err = r.u.max_diff(&exact).map_err(failed)?;
            let manufactured = identity_sides(&exact, src.as_ref(), pr, a).map_err(failed)?;
            let ratio = identity.residual_rel / manufactured.residual_rel;
            let linf = cfg.thresholds.linf_error.unwrap_or(1e-3);
            checks.push(Check::new("linf_error", err, Comparison::AtMost, linf));
            checks.push(Check::new("residual_ratio", ratio, Comparison::AtMost, 5.0));
            Some(json!({
                "linf_error": sig(err),
                "reference_residual_rel": sig(manufactured.residual_rel),
                "residual_ratio": sig(ratio),
            }))
        }
        None => None,
    };
    let summary = SolveSummary {
        resolution: n,
        iterations: r.iterations,
        energy: r.energy,
        gradient_norm: r.gradient_norm,
        kappa_path: &r.kappa_path,
        energy_monotone: r.energy_monotone(),
        stages: &r.stages,
        identity,
        reference,
    };
    let mut out = Outcome::new(serde_json::to_value(&summary).map_err(failed)?, checks);
    out.field = Some(r.u);
    Ok(out)
}

fn scan(cfg: &RunConfig) -> Result<Outcome, ExperimentError> {
    let setup = Setup::new(cfg)?;
    let src = setup.source(cfg)?;
    let spec = cfg.scan.clone().unwrap_or_default();
    let d = domain(cfg, finest_or(cfg, 64))?;
    let ts = log_grid(spec.t_min, spec.t_max, spec.t_count);
    let r = nonexistence_scan(
        src.as_ref(),
        &setup.profile,
        &setup.anisotropy,
        &d,
        &ts,
        spec.directions,
    )
    .map_err(failed)?;
    let mut checks = vec![Check::holds("condition_holds", r.condition_holds)];
    if let Some(pred) = r.power_prediction {
        let gap = (r.min_value - pred).abs() / pred.abs().max(f64::MIN_POSITIVE);
        checks.push(Check::new(
            "power_prediction_gap",
            gap,
            Comparison::AtMost,
            1e-12,
        ));
        checks.push(Check::new(
            "power_prediction",
            pred,
            Comparison::AtLeast,
            0.0,
        ));
    }
    let result = json!({
        "min_value": sig(r.min_value),
        "argmin": {
            "x": r.argmin.x.iter().copied().map(sig).collect::<Vec<_>>(),
            "direction": r.argmin.direction.iter().copied().map(sig).collect::<Vec<_>>(),
            "t": sig(r.argmin.t),
        },
        "power_prediction": r.power_prediction.map(sig),
        "condition_holds": r.condition_holds,
        "samples": r.samples,
        "star_shaped": finsler_pohozaev::pohozaev::is_strictly_star_shaped(&d),
    });
    Ok(Outcome::new(result, checks))
}

fn critical(cfg: &RunConfig) -> Result<Outcome, ExperimentError> {
    let cases = &cfg.critical.as_ref().expect("validated").cases;
    let mut rows = Vec::with_capacity(cases.len());
    let mut stdout = Vec::with_capacity(cases.len());
    for c in cases {
        let v = critical_exponent(c.p, c.dimension).map_err(|e| match e {
            PohozaevError::SupercriticalDimensionPair { .. } => {
                failed(format!("SupercriticalDimensionPair: {e}"))
            }
            other => failed(other),
        })?;
        stdout.push(format!("{v}"));
        rows.push(json!({
            "p": sig(c.p),
            "dimension": c.dimension,
            "critical_power": sig(v),
            "sobolev_exponent": sig(v + 1.0),
            "power_coefficient_at_critical": sig(power_coefficient(v, c.p, c.dimension)),
        }));
    }
    let mut out = Outcome::new(json!({ "cases": rows }), Vec::new());
    out.stdout = stdout;
    Ok(out)
}

fn wholespace(cfg: &RunConfig) -> Result<Outcome, ExperimentError> {
    let setup = Setup::new(cfg)?;
    let radii = &cfg.wholespace.as_ref().expect("validated").radii;
    let r = wholespace_check(
        setup.field().clone(),
        &setup.profile,
        &setup.anisotropy,
        radii,
        finest(cfg),
    )
    .map_err(failed)?;
    let tol = cfg.thresholds.residual_rel.unwrap_or(1e-3);
    let beyond: Vec<_> = r
        .decay
        .iter()
        .filter(|e| e.radius > r.support_radius)
        .collect();
    let nonzero = beyond.iter().filter(|e| e.value != 0.0).count();
    let mut checks = vec![
        Check::new("residual_rel", r.residual_rel, Comparison::AtMost, tol),
        Check::new(
            "nonzero_decay_beyond_support",
            nonzero as f64,
            Comparison::AtMost,
            0.0,
        ),
    ];
    if setup.profile.p() == 2.0 && setup.anisotropy.dimension() == 2 {
        let scale = r.n_b.abs().max(r.bprime_h.abs()).max(f64::MIN_POSITIVE);
        checks.push(Check::new(
            "rhs_relative",
            r.rhs.abs() / scale,
            Comparison::AtMost,
            1e-14,
        ));
    }
    Ok(Outcome::new(
        serde_json::to_value(&r).map_err(failed)?,
        checks,
    ))
}
