//! Dense Hermitian eigensolver (cyclic Jacobi with complex rotations) and
//! the small helpers built on it: singular values and a regularized
//! least-squares solve via the normal equations.
//!
//! # Method
//!
//! For a pivot pair `(p, q)` the off-diagonal entry `a_pq = |a_pq| e^{i phi}`
//! is first made real by the phase `diag(1, e^{-i phi})`, then annihilated
//! by the classical real rotation with `tan(2 theta) = 2 |a_pq| / (a_qq -
//! a_pp)`, choosing the smaller rotation angle for stability. Sweeps run in
//! a fixed cyclic order, so the result is deterministic. Each rotation is
//! unitary, hence the iteration preserves the spectrum and the trace to
//! rounding; convergence is quadratic once the off-diagonal mass is small.
//!
//! The matrices here are small (Gram matrices of at most a few hundred
//! nodes), which is exactly the regime where Jacobi's simplicity and its
//! high relative accuracy on nearly diagonal matrices pay off.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Eigendecomposition of a Hermitian matrix.
///
/// `values` are ascending; column `j` of `vectors` (row-major, dimension
/// `n`) is a unit eigenvector for `values[j]`.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub n: usize,
    pub values: Vec<f64>,
    pub vectors: Vec<Complex64>,
}

/// Relative off-diagonal tolerance used when callers do not override it.
pub const JACOBI_TOL: f64 = 1e-13;

const MAX_SWEEPS: usize = 60;

/// Diagonalizes the Hermitian matrix `a` (row-major, `n x n`).
///
/// The strict lower triangle is ignored: the input is symmetrized from the
/// upper triangle first, so tiny Hermiticity violations from rounding do
/// not leak into the iteration. Fails with [`Error::Numerical`] only if the
/// sweep count is exhausted, which for Hermitian input indicates corrupt
/// (non-finite) entries.
pub fn hermitian_eigen(a: &[Complex64], n: usize, tol: f64) -> Result<HermitianEigen> {
    if a.len() != n * n {
        return Err(Error::InvalidArgument(format!(
            "matrix buffer holds {} entries, expected {}",
            a.len(),
            n * n
        )));
    }
    if n == 0 {
        return Ok(HermitianEigen { n, values: vec![], vectors: vec![] });
    }
    let mut m = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        m[i * n + i] = Complex64::new(a[i * n + i].re, 0.0);
        for j in (i + 1)..n {
            let v = a[i * n + j];
            m[i * n + j] = v;
            m[j * n + i] = v.conj();
        }
    }
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::InvalidArgument("matrix has non-finite entries".into()));
    }

    let mut v = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        v[i * n + i] = Complex64::new(1.0, 0.0);
    }

    let scale = frobenius(&m).max(f64::MIN_POSITIVE);
    let target = tol * scale;

    let mut converged = false;
    for _sweep in 0..MAX_SWEEPS {
        if off_diagonal_mass(&m, n) <= target {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut m, &mut v, n, p, q, target);
            }
        }
    }
    if !converged && off_diagonal_mass(&m, n) > target {
        return Err(Error::Numerical(format!(
            "jacobi sweeps exhausted before off-diagonal mass {} reached {}",
            off_diagonal_mass(&m, n),
            target
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| m[i * n + i].re).collect();
    order.sort_by(|&i, &j| diag[i].partial_cmp(&diag[j]).unwrap());

    let values: Vec<f64> = order.iter().map(|&i| diag[i]).collect();
    let mut vectors = vec![Complex64::new(0.0, 0.0); n * n];
    for (new_col, &old_col) in order.iter().enumerate() {
        for row in 0..n {
            vectors[row * n + new_col] = v[row * n + old_col];
        }
    }
    Ok(HermitianEigen { n, values, vectors })
}

/// One complex Jacobi rotation annihilating `m[p][q]`.
fn rotate(m: &mut [Complex64], v: &mut [Complex64], n: usize, p: usize, q: usize, target: f64) {
    let apq = m[p * n + q];
    let g = apq.norm();
    // Entries already far below the convergence target cannot change the
    // outcome; skipping them keeps late sweeps cheap.
    if g <= target / (2.0 * n as f64) {
        return;
    }
    let app = m[p * n + p].re;
    let aqq = m[q * n + q].re;
    let phase = apq / g;

    let theta = (aqq - app) / (2.0 * g);
    let t = if theta >= 0.0 {
        1.0 / (theta + (theta * theta + 1.0).sqrt())
    } else {
        -1.0 / (-theta + (theta * theta + 1.0).sqrt())
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    // The rotation is R = D G with D = diag(1, conj(phase)) and G the real
    // rotation [[c, s], [-s, c]]; below it is applied as A <- R* A R and
    // V <- V R, touching only rows/columns p and q.
    let sp = s * phase; // complex s carrying the phase, used on column q

    for i in 0..n {
        let aip = m[i * n + p];
        let aiq = m[i * n + q];
        m[i * n + p] = c * aip - sp.conj() * aiq;
        m[i * n + q] = sp * aip + c * aiq;
    }
    for j in 0..n {
        let apj = m[p * n + j];
        let aqj = m[q * n + j];
        m[p * n + j] = c * apj - sp * aqj;
        m[q * n + j] = sp.conj() * apj + c * aqj;
    }
    // Clean the pivot pair explicitly; the formulas above leave rounding
    // residue exactly where the iteration tests for convergence.
    m[p * n + q] = Complex64::new(0.0, 0.0);
    m[q * n + p] = Complex64::new(0.0, 0.0);
    m[p * n + p] = Complex64::new(m[p * n + p].re, 0.0);
    m[q * n + q] = Complex64::new(m[q * n + q].re, 0.0);

    for i in 0..n {
        let vip = v[i * n + p];
        let viq = v[i * n + q];
        v[i * n + p] = c * vip - sp.conj() * viq;
        v[i * n + q] = sp * vip + c * viq;
    }
}

fn frobenius(m: &[Complex64]) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn off_diagonal_mass(m: &[Complex64], n: usize) -> f64 {
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                acc += m[i * n + j].norm_sqr();
            }
        }
    }
    acc.sqrt()
}

/// Singular values of a complex `rows x cols` matrix, descending.
///
/// Computed as square roots of the eigenvalues of `A* A`; adequate here
/// because every matrix this crate decomposes is well scaled and small.
pub fn singular_values(a: &[Complex64], rows: usize, cols: usize) -> Result<Vec<f64>> {
    if a.len() != rows * cols {
        return Err(Error::InvalidArgument(format!(
            "matrix buffer holds {} entries, expected {}",
            a.len(),
            rows * cols
        )));
    }
    let gram = conjugate_gram(a, rows, cols);
    let eig = hermitian_eigen(&gram, cols, JACOBI_TOL)?;
    let mut sv: Vec<f64> = eig.values.iter().rev().map(|&l| l.max(0.0).sqrt()).collect();
    // Guard against -0.0 from the clamp.
    for s in &mut sv {
        if *s == 0.0 {
            *s = 0.0;
        }
    }
    Ok(sv)
}

/// Forms `A* A` (cols x cols) for a row-major `rows x cols` matrix.
pub fn conjugate_gram(a: &[Complex64], rows: usize, cols: usize) -> Vec<Complex64> {
    let mut g = vec![Complex64::new(0.0, 0.0); cols * cols];
    for j in 0..cols {
        for k in j..cols {
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..rows {
                acc += a[i * cols + j].conj() * a[i * cols + k];
            }
            g[j * cols + k] = acc;
            g[k * cols + j] = acc.conj();
        }
    }
    g
}

/// Solution of a dense least-squares problem via the spectral
/// pseudo-inverse of the normal equations.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub coefficients: Vec<Complex64>,
    /// Number of eigenvalues of `A* A` kept above the relative cutoff.
    pub rank: usize,
    /// Ratio of the largest kept eigenvalue to the smallest kept one.
    pub condition: f64,
}

/// Minimizes `|A c - b|_2` over `c`, with weights already folded into `A`
/// and `b` by the caller.
///
/// Eigenvalues of `A* A` below `rel_cutoff` times the largest are treated
/// as zero, which regularizes nearly dependent columns (clustered lattice
/// nodes produce them routinely).
pub fn solve_least_squares(
    a: &[Complex64],
    rows: usize,
    cols: usize,
    b: &[Complex64],
    rel_cutoff: f64,
) -> Result<LeastSquares> {
    if b.len() != rows {
        return Err(Error::InvalidArgument(format!(
            "right-hand side has {} entries, expected {}",
            b.len(),
            rows
        )));
    }
    let gram = conjugate_gram(a, rows, cols);
    let eig = hermitian_eigen(&gram, cols, JACOBI_TOL)?;
    let lambda_max = eig.values.last().copied().unwrap_or(0.0).max(0.0);
    let cutoff = rel_cutoff * lambda_max;

    // y = A* b
    let mut y = vec![Complex64::new(0.0, 0.0); cols];
    for (j, slot) in y.iter_mut().enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..rows {
            acc += a[i * cols + j].conj() * b[i];
        }
        *slot = acc;
    }

    // c = V diag(1/lambda on kept modes) V* y
    let mut c = vec![Complex64::new(0.0, 0.0); cols];
    let mut rank = 0;
    let mut lambda_min_kept = f64::INFINITY;
    for k in 0..cols {
        let lambda = eig.values[k];
        if lambda <= cutoff || lambda <= 0.0 {
            continue;
        }
        rank += 1;
        lambda_min_kept = lambda_min_kept.min(lambda);
        let mut proj = Complex64::new(0.0, 0.0);
        for i in 0..cols {
            proj += eig.vectors[i * cols + k].conj() * y[i];
        }
        let scale = proj / lambda;
        for i in 0..cols {
            c[i] += scale * eig.vectors[i * cols + k];
        }
    }
    let condition = if rank == 0 { 0.0 } else { lambda_max / lambda_min_kept };
    Ok(LeastSquares { coefficients: c, rank, condition })
}
