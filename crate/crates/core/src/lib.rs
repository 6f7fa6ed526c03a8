//! Finite-element and spectral-Galerkin solvers for parabolic problems with
//! dynamic boundary conditions: a bulk field on a planar domain coupled to
//! its own evolution on the boundary curve.

pub mod adjoint;
pub mod assembly;
pub mod coefficients;
pub mod config;
pub mod error;
pub mod expr;
pub mod format;
pub mod forward;
pub mod geometry;
pub mod output;
pub mod problem;
pub mod runner;
pub mod sparse;
pub mod spectral;
pub mod verification;

pub use adjoint::{solve_backward, BackwardMode, DualityReport};
pub use assembly::{BlockOperator, Discretization, ProductField, RieszMap};
pub use coefficients::{
    derive_constants, CoefficientSet, CoefficientSpec, ConstantLedger, EpsilonPolicy, Piecewise,
};
pub use config::{parse_config, Mode, OutputFormat, RunConfig};
pub use error::{Error, Result};
pub use forward::{solve_forward, Scheme, TimeGrid, Trajectory};
pub use geometry::{generate_mesh, BoundaryMesh, Mesh2D, Shape, TraceMap};
pub use problem::Problem;
pub use runner::{dispatch, Outcome};
pub use spectral::{compute_basis, EnergyCertificate, SpectralBasis};
pub use verification::{Check, Tolerances};
