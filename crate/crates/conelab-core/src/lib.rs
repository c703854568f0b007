//! Numerical laboratory for weighted Bergman spaces on tube domains over
//! symmetric cones.
//!
//! The crate provides the analytic objects needed to probe Toeplitz
//! operators with positive-measure symbols on these domains:
//!
//! * [`cone`]: the cone backends (half-line and three-dimensional Lorentz
//!   cone), their determinant calculus, and the transitive group action;
//! * [`geometry`]: reproducing kernels, the invariant Bergman distance,
//!   separated lattices with certification, and invariant ball volumes;
//! * [`measures`]: atomic measures, ball averages, Berezin-type transforms,
//!   and the determinant-integral diagnostics with region-doubling
//!   convergence verdicts;
//! * [`schatten`]: Gram-matrix realizations of Toeplitz operators, their
//!   spectra and Schatten norms, and the Cesaro-type forms on the
//!   half-plane;
//! * [`num`]: the quadrature, sampling, summation, and eigensolver
//!   machinery everything else runs on.
//!
//! All measured constants (kernel normalizations, norm integrals) are
//! obtained by quadrature at runtime and cached; nothing is hard-coded, so
//! the test suites genuinely cross-check independent computations.

pub mod cone;
pub mod error;
pub mod geometry;
pub mod measures;
pub mod num;
pub mod schatten;

pub use cone::{ConeBackend, ConeKind, GroupElement, TubePoint};
pub use error::{Error, Result};
pub use measures::{AtomicMeasure, KernelProbe, RadiusVariation, ScalarField};
pub use num::trace::{ConvergenceReport, Verdict};
pub use schatten::{
    AtomicFit, CesaroSchatten, CesaroSymbol, ComplexField, GramRealization, OperatorSpectrum,
    SamplingCheck,
};
