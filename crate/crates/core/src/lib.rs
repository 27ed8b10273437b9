//! Anisotropic quasilinear operators `−div(B'(H(∇u))∇H(∇u))` on star-shaped
//! planar domains, and a numerical laboratory for the Pohozaev identity.
//!
//! * [`anisotropy`]: Finsler norms `H` with analytic derivatives and checks of
//!   homogeneity, ellipticity and norm equivalence.
//! * [`profile`]: the growth function `B` and its structural bounds.
//! * [`domain`]: polar-graph domains, normals and quadrature.
//! * [`field`]: grid fields, stencils, the stress field and source models.
//! * [`pohozaev`]: both sides of the identity and the derived checks.
//! * [`solver`]: energy minimization for zero-trace solutions.
//!
//! Data-parallel loops go through [`parallel`], which can be switched to a
//! sequential path at runtime or compiled without rayon.

// NaN-rejecting guards are written as negated comparisons on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod anisotropy;
pub mod convergence;
pub mod domain;
pub mod field;
pub mod parallel;
pub mod pohozaev;
pub mod profile;
pub mod quadrature;
pub mod report;
pub mod solver;

pub use anisotropy::{Anisotropy, AnisotropyError, AnisotropyKind, AnisotropyReport};
pub use convergence::{ConvergenceError, ConvergenceTable};
pub use domain::{DomainError, RadiusFn, StarDomain, StarShapeClass};
pub use field::{GridField, SmoothField, SourceModel, VectorField};
pub use pohozaev::{IdentityReport, PohozaevError};
pub use profile::{Profile, ProfileError, ProfileKind};
pub use solver::{SolveResult, SolverConfig, SolverError};
