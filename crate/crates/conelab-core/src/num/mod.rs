//! Numerical infrastructure: quadrature, low-discrepancy sampling,
//! deterministic summation, a Hermitian eigensolver, and the
//! region-doubling convergence protocol.

pub mod eigen;
pub mod gauss;
pub mod qmc;
pub mod quad;
pub mod sum;
pub mod trace;

pub use eigen::{hermitian_eigen, singular_values, solve_least_squares, HermitianEigen, LeastSquares};
pub use gauss::{gauss_legendre, GaussRule};
pub use qmc::HaltonSequence;
pub use quad::{adaptive_rectangle, tensor_rectangle, QuadResult};
pub use sum::{compensated_sum, parallel_sum_by, Accumulator};
pub use trace::{ConvergenceReport, DoublingProtocol, ProtocolState, Verdict};
