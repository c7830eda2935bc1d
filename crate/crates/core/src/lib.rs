//! Radial-mode numerical lab for the singular magnetic Helmholtz equation
//! `(∇ + iA)²u + Vu + (λ ± iε)u = f`.

pub mod bessel;
pub mod error;
pub mod estimates;
pub mod evolution;
pub mod farfield;
pub mod fem;
pub mod identities;
pub mod linalg;
pub mod model;
pub mod norms;
pub mod potentials;
pub mod quadrature;
pub mod radial_solver;
pub mod source;

pub use error::{MaghelmError, Result};
pub use model::{
    validate_spec, EstimateReport, Grading, ModeIndex, ProblemSpec, RadialField, RadialMesh, Sign, SolverKind,
};
