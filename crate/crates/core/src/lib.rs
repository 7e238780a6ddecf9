//! Feasible block-coordinate descent for matrix optimization with joint
//! coordinate and spectral constraints.
//!
//! A problem over symmetric matrices is rewritten over `O(n) × R^n` through the
//! eigendecomposition `X = Q·Diag(λ)·Qᵀ` ([`spectral`]) and solved by a staged
//! block-coordinate method ([`solver`]) whose iterates stay feasible. Stationarity
//! measures and their descent directions come from [`directions`], feasibility
//! restoration from [`projections`]. [`apps`] holds the benchmark families.

// Negated comparisons are used deliberately so NaN inputs take the error path.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod apps;
pub mod directions;
pub mod error;
pub mod manifold;
pub mod nnls;
pub mod problem;
pub mod projections;
pub mod qp;
pub mod solver;
pub mod spectral;

pub use directions::{DirectionResult, MeasureKind};
pub use error::{Error, Result};
pub use manifold::{ManifoldPoint, Retraction, TangentVector};
pub use problem::{AffineSystem, BlockGradient, BlockPoint, BlockProblem};
pub use projections::{ProjectionMethod, ProjectionReport};
pub use solver::{Phase, SolveResult, SolveStatus, SolverConfig, SolverTrace};
pub use spectral::{DecomposedProblem, MatrixProblem, SpectralPoint, SymmetricMatrix};
