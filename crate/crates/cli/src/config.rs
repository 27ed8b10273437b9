//! Run configuration read from TOML.
//!
//! Every table rejects unknown keys, and the `version` key must be present.

use finsler_pohozaev::field::{Bubble, RadialBump, SmoothField};
use finsler_pohozaev::solver::torsion_oracle;
use finsler_pohozaev::{Anisotropy, Profile, RadiusFn, SolverConfig};
use nalgebra::{DMatrix, Vector2};
use serde::Deserialize;
use std::path::Path;
use std::sync::Arc;
use thiserror::Error;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid configuration: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unsupported config version {0}, expected {CONFIG_VERSION}")]
    Version(u32),
    #[error("experiment `{experiment}` needs a [{section}] section")]
    Missing {
        experiment: &'static str,
        section: &'static str,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    CheckHypotheses,
    VerifyIdentity,
    ConvergenceStudy,
    Solve,
    NonexistenceScan,
    CriticalExponent,
    Wholespace,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::CheckHypotheses => "check-hypotheses",
            Experiment::VerifyIdentity => "verify-identity",
            Experiment::ConvergenceStudy => "convergence-study",
            Experiment::Solve => "solve",
            Experiment::NonexistenceScan => "nonexistence-scan",
            Experiment::CriticalExponent => "critical-exponent",
            Experiment::Wholespace => "wholespace",
        }
    }

    fn is_multilevel(self) -> bool {
        matches!(
            self,
            Experiment::VerifyIdentity | Experiment::ConvergenceStudy
        )
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AnisotropySpec {
    Euclidean {
        #[serde(default = "two")]
        dimension: usize,
    },
    /// Rows of a symmetric positive-definite matrix.
    Ellipsoidal { matrix: Vec<Vec<f64>> },
    SmoothedLq {
        q: f64,
        #[serde(default)]
        epsilon: f64,
        #[serde(default = "two")]
        dimension: usize,
    },
}

fn two() -> usize {
    2
}

fn one() -> f64 {
    1.0
}

impl AnisotropySpec {
    pub fn build(&self) -> Result<Anisotropy, ConfigError> {
        let out = match self {
            AnisotropySpec::Euclidean { dimension } => Anisotropy::euclidean(*dimension),
            AnisotropySpec::Ellipsoidal { matrix } => {
                let n = matrix.len();
                if n == 0 || matrix.iter().any(|r| r.len() != n) {
                    return Err(ConfigError::Invalid(
                        "anisotropy matrix must be square".into(),
                    ));
                }
                let flat: Vec<f64> = matrix.iter().flatten().copied().collect();
                Anisotropy::ellipsoidal(DMatrix::from_row_slice(n, n, &flat))
            }
            AnisotropySpec::SmoothedLq {
                q,
                epsilon,
                dimension,
            } => Anisotropy::smoothed_lq(*dimension, *q, *epsilon),
        };
        out.map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProfileSpec {
    Power { p: f64 },
    Regularized { p: f64, kappa: f64 },
}

impl ProfileSpec {
    pub fn build(&self) -> Result<Profile, ConfigError> {
        match self {
            ProfileSpec::Power { p } => Profile::power(*p),
            ProfileSpec::Regularized { p, kappa } => Profile::regularized(*p, *kappa),
        }
        .map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DomainSpec {
    Disk {
        #[serde(default = "one")]
        radius: f64,
    },
    Ellipse {
        a: f64,
        b: f64,
    },
    Fourier {
        mean: f64,
        #[serde(default)]
        cos: Vec<f64>,
        #[serde(default)]
        sin: Vec<f64>,
    },
}

impl DomainSpec {
    pub fn radius_fn(&self) -> RadiusFn {
        match self {
            DomainSpec::Disk { radius } => RadiusFn::disk(*radius),
            DomainSpec::Ellipse { a, b } => RadiusFn::Ellipse { a: *a, b: *b },
            DomainSpec::Fourier { mean, cos, sin } => RadiusFn::Fourier {
                mean: *mean,
                cos: cos.clone(),
                sin: sin.clone(),
            },
        }
    }
}

/// Analytic field used as `u` by the identity and whole-space checks, or as
/// the reference solution of a solve.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FieldSpec {
    /// Radial solution of the torsion problem for the profile's `p` on the
    /// configured disk.
    Torsion,
    Bubble {
        #[serde(default = "one")]
        radius: f64,
        coeffs: [f64; 6],
    },
    RadialBump {
        amplitude: f64,
        radius: f64,
        #[serde(default)]
        center: [f64; 2],
    },
}

impl FieldSpec {
    pub fn build(
        &self,
        profile: &Profile,
        domain: Option<&DomainSpec>,
    ) -> Result<Arc<dyn SmoothField>, ConfigError> {
        Ok(match self {
            FieldSpec::Torsion => {
                let radius = match domain {
                    Some(DomainSpec::Disk { radius }) => *radius,
                    _ => {
                        return Err(ConfigError::Invalid(
                            "the torsion field needs a disk domain".into(),
                        ))
                    }
                };
                Arc::new(
                    torsion_oracle(profile.p(), 2, radius)
                        .map_err(|e| ConfigError::Invalid(e.to_string()))?,
                )
            }
            FieldSpec::Bubble { radius, coeffs } => Arc::new(Bubble::new(*radius, *coeffs)),
            FieldSpec::RadialBump {
                amplitude,
                radius,
                center,
            } => Arc::new(
                RadialBump::new(*amplitude, *radius)
                    .centered_at(Vector2::new(center[0], center[1])),
            ),
        })
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SourceSpec {
    /// `g ≡ value`.
    Constant { value: f64 },
    /// `g(s) = lambda·|s|^{m−1}s`.
    Power { lambda: f64, m: f64 },
    /// `f = −div(B'(H(∇u))∇H(∇u))` for the configured field.
    Manufactured,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HypothesesSpec {
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_t_min")]
    pub t_min: f64,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default = "default_t_count")]
    pub t_count: usize,
}

fn default_samples() -> usize {
    10_000
}
fn default_t_min() -> f64 {
    1e-6
}
fn default_t_max() -> f64 {
    1e6
}
fn default_t_count() -> usize {
    10_000
}

impl Default for HypothesesSpec {
    fn default() -> Self {
        Self {
            samples: default_samples(),
            t_min: default_t_min(),
            t_max: default_t_max(),
            t_count: default_t_count(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSpec {
    #[serde(default = "scan_t_min")]
    pub t_min: f64,
    #[serde(default = "scan_t_max")]
    pub t_max: f64,
    #[serde(default = "scan_count")]
    pub t_count: usize,
    #[serde(default = "scan_count")]
    pub directions: usize,
}

fn scan_t_min() -> f64 {
    1e-3
}
fn scan_t_max() -> f64 {
    10.0
}
fn scan_count() -> usize {
    64
}

impl Default for ScanSpec {
    fn default() -> Self {
        Self {
            t_min: scan_t_min(),
            t_max: scan_t_max(),
            t_count: scan_count(),
            directions: scan_count(),
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriticalCase {
    pub p: f64,
    pub dimension: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriticalSpec {
    pub cases: Vec<CriticalCase>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WholespaceSpec {
    /// Circles of the decay table. The largest one bounds the integration disk.
    pub radii: Vec<f64>,
}

/// Pass/fail thresholds. Unset values take the experiment's default.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    pub residual_rel: Option<f64>,
    pub min_order: Option<f64>,
    pub linf_error: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_report")]
    pub report: String,
    #[serde(default = "default_convergence")]
    pub convergence: String,
    /// Nodal values of the field, written when set (always for `solve`).
    pub field: Option<String>,
}

fn default_report() -> String {
    "report.json".into()
}
fn default_convergence() -> String {
    "convergence.csv".into()
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            report: default_report(),
            convergence: default_convergence(),
            field: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub experiment: Experiment,
    #[serde(default)]
    pub resolutions: Vec<usize>,
    #[serde(default)]
    pub seed: u64,
    pub anisotropy: Option<AnisotropySpec>,
    pub profile: Option<ProfileSpec>,
    pub domain: Option<DomainSpec>,
    pub field: Option<FieldSpec>,
    pub source: Option<SourceSpec>,
    pub solver: Option<SolverConfig>,
    pub hypotheses: Option<HypothesesSpec>,
    pub scan: Option<ScanSpec>,
    pub critical: Option<CriticalSpec>,
    pub wholespace: Option<WholespaceSpec>,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub output: OutputSpec,
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Replace the resolution list so that its finest level is `n`. Multi-level
    /// experiments keep their number of levels, halving downwards.
    pub fn override_resolution(&mut self, n: usize) -> Result<(), ConfigError> {
        let levels = if self.experiment.is_multilevel() {
            self.resolutions.len().max(2)
        } else {
            1
        };
        let mut list: Vec<usize> = (0..levels).map(|k| n >> k).collect();
        list.reverse();
        self.resolutions = list;
        self.check_resolutions()
    }

    fn check_resolutions(&self) -> Result<(), ConfigError> {
        if let Some(&bad) = self.resolutions.iter().find(|&&n| n < 8) {
            return Err(ConfigError::Invalid(format!(
                "resolution {bad} is below the minimum of 8"
            )));
        }
        if self.resolutions.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ConfigError::Invalid("resolutions must increase".into()));
        }
        Ok(())
    }

    fn require<T>(&self, section: &'static str, v: &Option<T>) -> Result<(), ConfigError> {
        match v {
            Some(_) => Ok(()),
            None => Err(ConfigError::Missing {
                experiment: self.experiment.name(),
                section,
            }),
        }
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if self.version != CONFIG_VERSION {
            return Err(ConfigError::Version(self.version));
        }
        self.check_resolutions()?;
        let needs_resolution = |min: usize| -> Result<(), ConfigError> {
            if self.resolutions.len() < min {
                return Err(ConfigError::Invalid(format!(
                    "experiment `{}` needs at least {min} resolution(s)",
                    self.experiment.name()
                )));
            }
            Ok(())
        };
        match self.experiment {
            Experiment::CheckHypotheses => {
                self.require("anisotropy", &self.anisotropy)?;
                self.require("profile", &self.profile)?;
            }
            Experiment::VerifyIdentity | Experiment::ConvergenceStudy => {
                self.require("anisotropy", &self.anisotropy)?;
                self.require("profile", &self.profile)?;
                self.require("domain", &self.domain)?;
                self.require("field", &self.field)?;
                self.require("source", &self.source)?;
                needs_resolution(if self.experiment == Experiment::ConvergenceStudy {
                    2
                } else {
                    1
                })?;
            }
            Experiment::Solve => {
                self.require("anisotropy", &self.anisotropy)?;
                self.require("profile", &self.profile)?;
                self.require("domain", &self.domain)?;
                self.require("source", &self.source)?;
                needs_resolution(1)?;
            }
            Experiment::NonexistenceScan => {
                self.require("anisotropy", &self.anisotropy)?;
                self.require("profile", &self.profile)?;
                self.require("domain", &self.domain)?;
                self.require("source", &self.source)?;
            }
            Experiment::CriticalExponent => {
                self.require("critical", &self.critical)?;
            }
            Experiment::Wholespace => {
                self.require("anisotropy", &self.anisotropy)?;
                self.require("profile", &self.profile)?;
                self.require("field", &self.field)?;
                self.require("wholespace", &self.wholespace)?;
                needs_resolution(1)?;
            }
        }
        if matches!(self.source, Some(SourceSpec::Manufactured)) {
            self.require("field", &self.field)?;
        }
        Ok(())
    }
}
