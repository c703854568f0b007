//! The invariant (Bergman) distance of the tube domain, its restriction to
//! the cone, and the metric tensor used by finite-difference checks.

use num_complex::Complex64;

use crate::cone::{ConeBackend, ConeKind, TubePoint};
use crate::error::{Error, Result};

const SQRT_1_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Invariant distance between two tube points.
///
/// Half-line: the hyperbolic-plane formula rescaled so that the metric is
/// `|dz|^2 / (2 y^2)`. Lorentz tube: the point embeds as a symmetric 2x2
/// Siegel matrix with determinant `det(y)`, and the distance comes from the
/// eigenvalues of the matrix cross-ratio, rescaled to match the Bergman
/// normalization.
pub fn bergman_distance(backend: &ConeBackend, z: &TubePoint, w: &TubePoint) -> f64 {
    match backend.kind() {
        ConeKind::HalfLine => {
            let dx = z.x()[0] - w.x()[0];
            let dy = z.y()[0] - w.y()[0];
            let u = (dx * dx + dy * dy) / (2.0 * z.y()[0] * w.y()[0]);
            SQRT_1_2 * (1.0 + u).acosh()
        }
        ConeKind::Lorentz3 => {
            let zm = siegel(z);
            let wm = siegel(w);
            let wc = m2_conj(&wm);
            let zc = m2_conj(&zm);
            let a = m2_sub(&zm, &wm);
            let b = m2_inv(&m2_sub(&zm, &wc));
            let c = m2_sub(&zc, &wc);
            let d = m2_inv(&m2_sub(&zc, &wm));
            let r = m2_mul(&m2_mul(&a, &b), &m2_mul(&c, &d));
            let (l1, l2) = m2_eigenvalues(&r);
            let s1 = cross_ratio_term(l1);
            let s2 = cross_ratio_term(l2);
            0.5 * 3.0_f64.sqrt() * (s1 * s1 + s2 * s2).sqrt()
        }
    }
}

fn cross_ratio_term(lambda: Complex64) -> f64 {
    // Eigenvalues of the cross-ratio are real in [0, 1); tiny imaginary
    // parts are roundoff. Clamp away from 1 so extreme separations return
    // a large finite distance instead of infinity.
    let l = lambda.re.clamp(0.0, 1.0 - 1e-14);
    2.0 * l.sqrt().atanh()
}

/// Distance between cone points inside the cone itself. The cone is the
/// fixed-point set of `z -> -conj(z)`, hence totally geodesic, so this is
/// also the tube distance between `i y_1` and `i y_2` and a lower bound for
/// the distance between any tube points with these imaginary parts.
pub fn cone_distance(backend: &ConeBackend, y1: &[f64], y2: &[f64]) -> f64 {
    match backend.kind() {
        ConeKind::HalfLine => SQRT_1_2 * (y2[0] / y1[0]).ln().abs(),
        ConeKind::Lorentz3 => {
            let d1 = backend.det(y1);
            let d2 = backend.det(y2);
            let radial = 0.5 * (d2 / d1).ln();
            // omega' J omega = cosh of the hyperbolic-plane distance
            // between the unit directions.
            let dot = (y1[0] * y2[0] - y1[1] * y2[1] - y1[2] * y2[2]) / (d1 * d2).sqrt();
            let angular = dot.max(1.0).acosh();
            1.5_f64.sqrt() * (radial * radial + angular * angular).sqrt()
        }
    }
}

/// Metric tensor `G(y)` of the invariant metric, as an `n x n` row-major
/// matrix. The squared length of a displacement `(dx, dy)` is
/// `dx' G dx + dy' G dy`.
pub fn metric_matrix(backend: &ConeBackend, y: &[f64]) -> Result<Vec<f64>> {
    if !backend.in_cone(y) {
        return Err(Error::OutsideDomain(format!("{y:?} is not in the open cone")));
    }
    match backend.kind() {
        ConeKind::HalfLine => Ok(vec![1.0 / (2.0 * y[0] * y[0])]),
        ConeKind::Lorentz3 => {
            let det = backend.det(y);
            let jy = [y[0], -y[1], -y[2]];
            let jdiag = [1.0, -1.0, -1.0];
            let mut g = vec![0.0; 9];
            for i in 0..3 {
                for j in 0..3 {
                    let mut v = 3.0 * jy[i] * jy[j] / (det * det);
                    if i == j {
                        v -= 1.5 * jdiag[i] / det;
                    }
                    g[3 * i + j] = v;
                }
            }
            Ok(g)
        }
    }
}

/// Squared metric length of the displacement `(dx, dy)` at `y`.
pub fn metric_quadratic_form(backend: &ConeBackend, y: &[f64], dx: &[f64], dy: &[f64]) -> Result<f64> {
    let g = metric_matrix(backend, y)?;
    let n = backend.n();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += g[n * i + j] * (dx[i] * dx[j] + dy[i] * dy[j]);
        }
    }
    Ok(acc)
}

fn siegel(p: &TubePoint) -> [Complex64; 4] {
    let z = |j: usize| Complex64::new(p.x()[j], p.y()[j]);
    let z1 = z(0);
    let z2 = z(1);
    let z3 = z(2);
    [z1 + z2, z3, z3, z1 - z2]
}

fn m2_conj(m: &[Complex64; 4]) -> [Complex64; 4] {
    [m[0].conj(), m[1].conj(), m[2].conj(), m[3].conj()]
}

fn m2_sub(a: &[Complex64; 4], b: &[Complex64; 4]) -> [Complex64; 4] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2], a[3] - b[3]]
}

fn m2_mul(a: &[Complex64; 4], b: &[Complex64; 4]) -> [Complex64; 4] {
    [
        a[0] * b[0] + a[1] * b[2],
        a[0] * b[1] + a[1] * b[3],
        a[2] * b[0] + a[3] * b[2],
        a[2] * b[1] + a[3] * b[3],
    ]
}

fn m2_inv(m: &[Complex64; 4]) -> [Complex64; 4] {
    let det = m[0] * m[3] - m[1] * m[2];
    [m[3] / det, -m[1] / det, -m[2] / det, m[0] / det]
}

fn m2_eigenvalues(m: &[Complex64; 4]) -> (Complex64, Complex64) {
    let tr = m[0] + m[3];
    let det = m[0] * m[3] - m[1] * m[2];
    let disc = (tr * tr - 4.0 * det).sqrt();
    (0.5 * (tr + disc), 0.5 * (tr - disc))
}
