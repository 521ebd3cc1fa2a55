//! Finite-truncation laboratory for linear operator dynamics.
//!
//! Everything here lives at an explicit finite horizon: integer sets are
//! subsets of `[0, horizon]`, operators act on finite-dimensional
//! truncations, and "density" always means the counting ratio
//! `#(A ∩ [0,N]) / (N+1)` reported as a tail min/max past a declared
//! burn-in — never a certified limit.
//!
//! The crate is organized around six concerns:
//!
//! * [`density`] — integer-set representation, density profiles, visit sets;
//! * [`sets`] — explicit set constructions (dyadic layers, geometric
//!   interval families, disjointification, doubly-indexed "bad" sets);
//! * [`shift`] — weighted backward shifts built from tent profiles, the
//!   frequent-hypercyclicity checks for shifts, and density-defect scans;
//! * [`ctype`] — C-type block operators, periodicity and projection checks;
//! * [`fhc`] — construction of an orbit vector realizing prescribed visit
//!   sets, plus rank-one similarity interpolation;
//! * [`dsum`] — a truncated c0-sum of l1 blocks and the operator quintet
//!   acting on it, with exact intertwining and decay checks.
//!
//! Two arithmetic modes are supported through the [`scalar::Scalar`] trait:
//! exact rationals for identity checks and binary floating point for
//! experiments. Exact-mode pipelines never silently fall back to floats.

pub mod ctype;
pub mod density;
pub mod dsum;
pub mod fhc;
pub mod operator;
pub mod scalar;
pub mod sets;
pub mod shift;
pub mod vector;

pub use density::{DensityProfile, IndexSet};
pub use operator::{Operator, SparseColMatrix};
pub use scalar::{Rat, Scalar, WideFloat};
pub use vector::{BlockVector, NormTag};

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("construction error: {0}")]
    Construction(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    /// Exact-rational values exceeded the configured size budget. The
    /// computation is still correct up to this point; rerun in float mode
    /// or raise the budget.
    #[error(
        "exact arithmetic exceeded the {budget}-bit size budget at step {step}; \
         rerun in float mode or raise the budget"
    )]
    ExactBlowup { budget: usize, step: usize },

    /// An operation that requires exact arithmetic was invoked with a
    /// floating-point scalar type.
    #[error("{0} requires exact-rational arithmetic; float mode refused")]
    FloatRefused(&'static str),

    #[error("refused: {0}")]
    Refused(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
