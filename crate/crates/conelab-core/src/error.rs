//! Error type shared by every fallible operation in this crate.

use thiserror::Error;

/// Errors surfaced by cone, geometry, measure, and spectrum routines.
///
/// The variants separate caller mistakes (bad arguments, parameters outside
/// the admissible range, points off the domain) from conditions discovered
/// while computing (lost precision, exhausted budgets, a backend that does
/// not implement the requested closed form).
#[derive(Debug, Error)]
pub enum Error {
    /// Structurally malformed input: wrong dimension, empty node set,
    /// non-finite coordinate, and similar.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A numeric parameter lies outside the range on which the quantity is
    /// defined. The message names the violated inequality.
    #[error("parameter out of range: {0}")]
    ParameterRange(String),

    /// A point lies outside the tube domain or cone required by the
    /// operation (for example `Im z` not in the open cone).
    #[error("point outside domain: {0}")]
    OutsideDomain(String),

    /// A computation lost too much precision or failed an internal
    /// consistency check (non-convergent eigensweep, negative mass where a
    /// positive one is guaranteed, ...).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// An iteration or refinement budget was exhausted before the requested
    /// tolerance was met. Callers that can live with a partial answer should
    /// use the routines returning a [`crate::num::ConvergenceReport`].
    #[error("budget exhausted: {0}")]
    BudgetExhausted(String),

    /// The requested closed form is not implemented for this cone backend.
    #[error("unsupported backend: {0}")]
    UnsupportedBackend(String),
}

/// Convenient alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
