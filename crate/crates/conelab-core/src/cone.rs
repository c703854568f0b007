//! Cone backends for the tube domains under study.
//!
//! A backend fixes a symmetric cone `O` in `R^n` together with its
//! determinant polynomial `det`, rank `r`, identity element `e`, and the
//! solvable group that acts transitively on it. Two backends are
//! implemented:
//!
//! * `HalfLine`: `O = (0, infinity)` in `R^1`, `det(y) = y`, rank 1. The
//!   tube over it is the upper half-plane.
//! * `Lorentz3`: the forward light cone in `R^3`, `det(y) = y1^2 - y2^2 -
//!   y3^2`, rank 2. The first genuinely anisotropic case: determinant
//!   degree and rank differ, so exponents in the various estimates
//!   separate.
//!
//! Everything downstream (kernels, distances, lattices, measures) reaches
//! the cone only through this interface, so the two backends double as a
//! consistency check on each other: a formula accidentally specialized to
//! one of them fails loudly on the other.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::gauss::gauss_legendre;

/// Identifies one of the supported cone backends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConeKind {
    /// Positive half-line in `R`; tube = upper half-plane.
    HalfLine,
    /// Forward Lorentz cone in `R^3`.
    Lorentz3,
}

impl ConeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ConeKind::HalfLine => "halfplane",
            ConeKind::Lorentz3 => "lorentz3",
        }
    }
}

impl std::str::FromStr for ConeKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "halfplane" | "halfline" | "upperhalfplane" => Ok(ConeKind::HalfLine),
            "lorentz3" | "lightcone3" => Ok(ConeKind::Lorentz3),
            other => Err(Error::InvalidArgument(format!(
                "unknown cone backend '{other}' (expected 'halfplane' or 'lorentz3')"
            ))),
        }
    }
}

/// A symmetric cone together with the constants the kernels need.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConeBackend {
    kind: ConeKind,
}

/// A point `z = x + i y` of the tube domain over a cone, with `y` strictly
/// inside the cone. Construction validates membership, so holders of a
/// `TubePoint` may assume it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TubePoint {
    x: Vec<f64>,
    y: Vec<f64>,
}

impl TubePoint {
    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Complex coordinate `x_j + i y_j`.
    pub fn z(&self, j: usize) -> Complex64 {
        Complex64::new(self.x[j], self.y[j])
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// Constructor for call sites that produce cone points by construction
    /// (chart maps, group orbits); skips the membership check.
    pub(crate) fn raw(x: Vec<f64>, y: Vec<f64>) -> Self {
        debug_assert_eq!(x.len(), y.len());
        TubePoint { x, y }
    }
}

/// An element of the triangular group acting simply transitively on the
/// cone, stored as its matrix on `R^n`. Acts on tube points component-wise
/// on real and imaginary parts (the action is real-linear, extended
/// complex-linearly to the tube).
#[derive(Debug, Clone)]
pub struct GroupElement {
    n: usize,
    matrix: Vec<f64>,
    det: f64,
}

impl GroupElement {
    /// Determinant of the matrix on `R^n`.
    pub fn det(&self) -> f64 {
        self.det
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    /// Applies the linear map to a vector in `R^n`.
    pub fn apply_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n);
        let mut out = vec![0.0; self.n];
        for i in 0..self.n {
            let mut acc = 0.0;
            for j in 0..self.n {
                acc += self.matrix[i * self.n + j] * v[j];
            }
            out[i] = acc;
        }
        out
    }

    /// Applies the map to a tube point (separately to `x` and `y`).
    pub fn apply_point(&self, backend: &ConeBackend, p: &TubePoint) -> Result<TubePoint> {
        backend.tube_point(self.apply_vec(p.x()), self.apply_vec(p.y()))
    }
}

impl ConeBackend {
    pub fn new(kind: ConeKind) -> Self {
        ConeBackend { kind }
    }

    pub fn half_line() -> Self {
        Self::new(ConeKind::HalfLine)
    }

    pub fn lorentz3() -> Self {
        Self::new(ConeKind::Lorentz3)
    }

    pub fn kind(&self) -> ConeKind {
        self.kind
    }

    /// Ambient dimension `n`.
    pub fn n(&self) -> usize {
        match self.kind {
            ConeKind::HalfLine => 1,
            ConeKind::Lorentz3 => 3,
        }
    }

    /// Rank `r` of the cone.
    pub fn r(&self) -> usize {
        match self.kind {
            ConeKind::HalfLine => 1,
            ConeKind::Lorentz3 => 2,
        }
    }

    /// The ubiquitous exponent `n/r`.
    pub fn rank_ratio(&self) -> f64 {
        self.n() as f64 / self.r() as f64
    }

    /// Spectral shift `s(nu) = nu + n/r`, the determinant exponent of the
    /// reproducing kernel at weight `nu`.
    pub fn spectral_exponent(&self, nu: f64) -> f64 {
        nu + self.rank_ratio()
    }

    /// Identity element `e` of the cone.
    pub fn identity_vector(&self) -> Vec<f64> {
        match self.kind {
            ConeKind::HalfLine => vec![1.0],
            ConeKind::Lorentz3 => vec![1.0, 0.0, 0.0],
        }
    }

    /// Smallest admissible weight: `nu > n/r - 1` is required for the
    /// weighted Bergman space to be nontrivial.
    pub fn min_weight(&self) -> f64 {
        self.rank_ratio() - 1.0
    }

    fn check_dim(&self, v: &[f64], what: &str) -> Result<()> {
        if v.len() != self.n() {
            return Err(Error::InvalidArgument(format!(
                "{what} has dimension {}, backend needs {}",
                v.len(),
                self.n()
            )));
        }
        if v.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument(format!("{what} has non-finite components")));
        }
        Ok(())
    }

    /// Determinant polynomial of the cone.
    pub fn det(&self, y: &[f64]) -> f64 {
        match self.kind {
            ConeKind::HalfLine => y[0],
            ConeKind::Lorentz3 => y[0] * y[0] - y[1] * y[1] - y[2] * y[2],
        }
    }

    /// Polarization of the determinant: the symmetric bilinear form with
    /// `polarized(y, y) = det(y)`.
    pub fn polarized(&self, a: &[f64], b: &[f64]) -> f64 {
        match self.kind {
            ConeKind::HalfLine => a[0] * b[0],
            ConeKind::Lorentz3 => a[0] * b[0] - a[1] * b[1] - a[2] * b[2],
        }
    }

    /// Squared modulus of the complex determinant `det(a + i b)`. No
    /// branch is chosen, so unlike [`Self::complex_det_power`] this is a
    /// total polynomial in the coordinates, cheap enough for the inner
    /// loops of quadrature fields. Slices must have the cone dimension.
    pub(crate) fn det_modulus_squared(&self, a: &[f64], b: &[f64]) -> f64 {
        match self.kind {
            ConeKind::HalfLine => a[0] * a[0] + b[0] * b[0],
            ConeKind::Lorentz3 => {
                let re = self.det(a) - self.det(b);
                let im = 2.0 * self.polarized(a, b);
                re * re + im * im
            }
        }
    }

    /// Strict membership in the open cone.
    pub fn in_cone(&self, y: &[f64]) -> bool {
        if y.len() != self.n() || y.iter().any(|c| !c.is_finite()) {
            return false;
        }
        match self.kind {
            ConeKind::HalfLine => y[0] > 0.0,
            ConeKind::Lorentz3 => y[0] > 0.0 && self.det(y) > 0.0,
        }
    }

    /// Validates and wraps a tube point.
    pub fn tube_point(&self, x: Vec<f64>, y: Vec<f64>) -> Result<TubePoint> {
        self.check_dim(&x, "x")?;
        self.check_dim(&y, "y")?;
        if !self.in_cone(&y) {
            return Err(Error::OutsideDomain(format!(
                "imaginary part {y:?} is not in the open cone"
            )));
        }
        Ok(TubePoint { x, y })
    }

    /// The base point `i e` of the tube.
    pub fn base_point(&self) -> TubePoint {
        TubePoint { x: vec![0.0; self.n()], y: self.identity_vector() }
    }

    /// Determinant evaluated on a complexified argument `a + i b`.
    pub fn complex_det(&self, a: &[f64], b: &[f64]) -> Complex64 {
        match self.kind {
            ConeKind::HalfLine => Complex64::new(a[0], b[0]),
            ConeKind::Lorentz3 => Complex64::new(
                self.det(a) - self.det(b),
                2.0 * self.polarized(a, b),
            ),
        }
    }

    /// `det(zeta)^power` for `zeta = a + i b` with `a` in the open cone,
    /// on the branch that is real and positive when `b = 0` and continuous
    /// along the segment from `a` to `a + i b`.
    ///
    /// The determinant along that segment is `det(a) - tau^2 det(b) +
    /// 2 i tau polarized(a, b)`: its imaginary part has a fixed sign in
    /// `tau`, and when that sign vanishes the real part stays positive
    /// (for `a` interior, `polarized(a, b) = 0` forces `det(b) < 0`). The
    /// segment therefore never meets the branch cut of the principal
    /// logarithm, and the continuation is computed as a short walk
    /// accumulating principal logarithms of ratios.
    pub fn complex_det_power(&self, a: &[f64], b: &[f64], power: f64) -> Result<Complex64> {
        self.check_dim(a, "re(zeta)")?;
        self.check_dim(b, "im(zeta)")?;
        if !self.in_cone(a) {
            return Err(Error::OutsideDomain(format!(
                "re(zeta) = {a:?} is not in the open cone; the branch is undefined"
            )));
        }
        match self.kind {
            ConeKind::HalfLine => {
                let zeta = Complex64::new(a[0], b[0]);
                if zeta.norm() == 0.0 {
                    return Err(Error::Numerical("determinant vanishes at zeta".into()));
                }
                // re(zeta) > 0: the segment stays in the right half-plane,
                // where the principal logarithm is already continuous.
                Ok((power * zeta.ln()).exp())
            }
            ConeKind::Lorentz3 => {
                let det_a = self.det(a);
                let det_b = self.det(b);
                let cross = 2.0 * self.polarized(a, b);
                let eval = |tau: f64| Complex64::new(det_a - tau * tau * det_b, tau * cross);
                let full = eval(1.0);
                if full.norm() == 0.0 {
                    return Err(Error::Numerical("determinant vanishes at zeta".into()));
                }
                let mut log_acc = Complex64::new(det_a.ln(), 0.0);
                let mut tau: f64 = 0.0;
                let mut step: f64 = 1.0;
                let mut current = Complex64::new(det_a, 0.0);
                let mut guard = 0usize;
                while tau < 1.0 {
                    let next_tau = (tau + step).min(1.0);
                    let next = eval(next_tau);
                    let ratio = next / current;
                    // Keep each ratio close to 1 so its principal log is the
                    // continuous one; halve the step otherwise.
                    if (ratio - Complex64::new(1.0, 0.0)).norm() > 0.5 {
                        step *= 0.5;
                        guard += 1;
                        if guard > 200 {
                            return Err(Error::Numerical(
                                "branch continuation failed to advance".into(),
                            ));
                        }
                        continue;
                    }
                    log_acc += ratio.ln();
                    current = next;
                    tau = next_tau;
                    step *= 2.0;
                }
                Ok((power * log_acc).exp())
            }
        }
    }

    /// Same branch, but only the modulus: `|det(a + i b)|^power`. No
    /// continuation is needed for a modulus, so this is cheap and defined
    /// whenever the complex determinant does not vanish.
    pub fn complex_det_abs_power(&self, a: &[f64], b: &[f64], power: f64) -> f64 {
        let d = self.complex_det(a, b);
        d.norm().powf(power)
    }

    /// Group element `h` of the triangular group with `h(e) = y`.
    ///
    /// For the half-line this is scaling by `y`. For the Lorentz cone it is
    /// the dilation by `det(y)^(1/2)` composed with the boost taking `e` to
    /// `y / det(y)^(1/2)`; the boost fixes the determinant, so `det(h) =
    /// det(y)^(n/r)` as a matrix on `R^n`.
    pub fn transitive_action(&self, y: &[f64]) -> Result<GroupElement> {
        self.check_dim(y, "target")?;
        if !self.in_cone(y) {
            return Err(Error::OutsideDomain(format!("target {y:?} is not in the open cone")));
        }
        match self.kind {
            ConeKind::HalfLine => Ok(GroupElement { n: 1, matrix: vec![y[0]], det: y[0] }),
            ConeKind::Lorentz3 => {
                let rho = self.det(y).sqrt();
                let omega = [y[0] / rho, y[1] / rho, y[2] / rho];
                let cosh_chi = omega[0];
                let sinh_chi = (cosh_chi * cosh_chi - 1.0).max(0.0).sqrt();
                let u = if sinh_chi > 1e-14 {
                    [omega[1] / sinh_chi, omega[2] / sinh_chi]
                } else {
                    [1.0, 0.0]
                };
                // Boost: e1 -> (cosh, sinh u), identity plus rank-one
                // correction on the spatial block.
                let mut m = [0.0f64; 9];
                m[0] = cosh_chi;
                m[1] = sinh_chi * u[0];
                m[2] = sinh_chi * u[1];
                m[3] = sinh_chi * u[0];
                m[6] = sinh_chi * u[1];
                let k = cosh_chi - 1.0;
                m[4] = 1.0 + k * u[0] * u[0];
                m[5] = k * u[0] * u[1];
                m[7] = k * u[0] * u[1];
                m[8] = 1.0 + k * u[1] * u[1];
                for entry in &mut m {
                    *entry *= rho;
                }
                Ok(GroupElement { n: 3, matrix: m.to_vec(), det: rho * rho * rho })
            }
        }
    }

    /// Eigenvalue factor of the determinant-power ladder: applying the
    /// invariant differential operator `det((1/i) d/dz)` to
    /// `det(zeta)^(-sigma)` multiplies it by this and lowers the exponent
    /// by one.
    pub fn box_ladder_factor(&self, sigma: f64) -> f64 {
        match self.kind {
            ConeKind::HalfLine => sigma,
            ConeKind::Lorentz3 => 2.0 * sigma * (2.0 * sigma - 1.0),
        }
    }

    /// Squared `L^2` norm against `dV_nu` of `z -> det((z + i e)/i)^(-alpha)`,
    /// measured by quadrature and cached. This single constant normalizes
    /// every kernel on the backend: by the transitive group action the same
    /// integral with `e` replaced by any `t` in the cone equals this value
    /// times `det(t)^(n/r + nu - 2 alpha)`.
    pub fn det_norm_squared(&self, alpha: f64, nu: f64) -> Result<f64> {
        self.validate_weight(nu)?;
        let threshold = 0.5 * (nu + 2.0 * self.rank_ratio() - 1.0);
        if alpha <= threshold {
            return Err(Error::ParameterRange(format!(
                "need 2*alpha > nu + 2n/r - 1 for a finite norm (alpha = {alpha}, bound = {threshold})"
            )));
        }
        cached(self.kind, CacheSlot::DetNorm, alpha, nu, || match self.kind {
            ConeKind::HalfLine => half_line_det_norm(alpha, nu),
            ConeKind::Lorentz3 => lorentz3_det_norm(alpha, nu),
        })
    }

    /// Reproducing-kernel normalization `c_nu`, measured from the
    /// reproducing identity at the base point: evaluating the kernel
    /// against itself forces `c_nu = det(2e)^(-s) / det_norm_squared(s, nu)`
    /// with `s = nu + n/r`. Cached per weight.
    pub fn kernel_constant(&self, nu: f64) -> Result<f64> {
        self.validate_weight(nu)?;
        let s = self.spectral_exponent(nu);
        let norm = self.det_norm_squared(s, nu)?;
        let two_e: Vec<f64> = self.identity_vector().iter().map(|c| 2.0 * c).collect();
        Ok(self.det(&two_e).powf(-s) / norm)
    }

    /// Ratio relating one rung of the determinant ladder to the next
    /// weight's kernel: `box_ladder_factor(s) * c_nu / c_(nu+1)`.
    pub fn box_constant(&self, nu: f64) -> Result<f64> {
        let s = self.spectral_exponent(nu);
        Ok(self.box_ladder_factor(s) * self.kernel_constant(nu)? / self.kernel_constant(nu + 1.0)?)
    }

    /// Checks `nu > n/r - 1`.
    pub fn validate_weight(&self, nu: f64) -> Result<()> {
        if !nu.is_finite() || nu <= self.min_weight() {
            return Err(Error::ParameterRange(format!(
                "weight nu = {nu} must exceed n/r - 1 = {}",
                self.min_weight()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub(crate) enum CacheSlot {
    DetNorm,
    /// Lateral determinant integral over the real subspace; keyed by the
    /// exponent in the alpha position (nu unused, fixed to 0).
    CrossSection,
    /// Weighted volume of the ball at the base point; keyed by the radius
    /// in the alpha position.
    BaseBallVolume,
}

/// Measured constants are pure functions of (backend, slot, alpha, nu);
/// concurrent computations of the same key are benign, last write wins.
pub(crate) fn cached(
    kind: ConeKind,
    slot: CacheSlot,
    alpha: f64,
    nu: f64,
    compute: impl FnOnce() -> Result<f64>,
) -> Result<f64> {
    type Key = (ConeKind, CacheSlot, u64, u64);
    static CACHE: OnceLock<Mutex<HashMap<Key, f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let key = (kind, slot, alpha.to_bits(), nu.to_bits());
    if let Some(&v) = cache.lock().unwrap().get(&key) {
        return Ok(v);
    }
    let value = compute()?;
    cache.lock().unwrap().insert(key, value);
    Ok(value)
}

/// Integrates a smooth function with exponential decay on both ends over
/// the real line, truncated where the named decay rates push the tails
/// below 1e-16 of the bulk: fixed-width panels of 16-point Gauss.
fn exp_decaying_line_integral<F: Fn(f64) -> f64>(
    f: F,
    rate_left: f64,
    rate_right: f64,
) -> f64 {
    let rule = gauss_legendre(16);
    let t_left = -(40.0 / rate_left + 4.0).min(2500.0);
    let t_right = (40.0 / rate_right + 4.0).min(2500.0);
    let mut acc = 0.0;
    let mut t = t_left;
    while t < t_right {
        let next = (t + 1.0).min(t_right);
        acc += rule.integrate(t, next, &f);
        t = next;
    }
    acc
}

/// Integral of `sin(phi)^(q - 2)` over `[0, x]` for `x` in `(0, pi/2]`.
/// The integrand has an algebraic endpoint at zero whenever `q < 2`, so the
/// panels are graded geometrically toward it and the remaining sliver is
/// finished with the exact small-angle power `phi^(q-1)/(q-1)`. Accurate to
/// machine precision for every `q > 1`.
fn graded_sine_power_integral(q: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let rule = gauss_legendre(16);
    let mut acc = 0.0;
    let mut hi = x;
    for _ in 0..48 {
        let lo = 0.5 * hi;
        acc += rule.integrate(lo, hi, |phi: f64| phi.sin().powf(q - 2.0));
        hi = lo;
    }
    acc + hi.powf(q - 1.0) / (q - 1.0)
}

/// Lateral determinant integral `integral over R^n of |det(e + i x)|^(-q) dx`,
/// measured by quadrature and cached per `(kind, q)`. The transitive action
/// moves the base point: at any cone point `a` the same integral equals this
/// value times `det(a)^(n/r - q)`. Finite exactly when `q > 2n/r - 1`; the
/// near-light-cone directions saturate that bound.
pub(crate) fn lateral_cross_section(kind: ConeKind, q: f64) -> Result<f64> {
    let bound = match kind {
        ConeKind::HalfLine => 1.0,
        ConeKind::Lorentz3 => 2.0,
    };
    if !q.is_finite() || q <= bound {
        return Err(Error::ParameterRange(format!(
            "lateral determinant integral needs exponent q > 2n/r - 1 = {bound} (q = {q})"
        )));
    }
    let half_pi = std::f64::consts::FRAC_PI_2;
    cached(kind, CacheSlot::CrossSection, q, 0.0, || match kind {
        // Substituting x = tan(phi) turns (1 + x^2)^(-q/2) dx into
        // cos(phi)^(q - 2) d phi over a quarter turn, doubled for x < 0.
        ConeKind::HalfLine => Ok(2.0 * graded_sine_power_integral(q, half_pi)),
        // Cylindrical coordinates split x = (x1, x') with |det|^2 =
        // (1 - x1^2 + |x'|^2)^2 + 4 x1^2. The x' plane contributes 2 pi
        // times a radial integral with the same tangent reduction as above,
        // leaving a tail integral of cos^(q-2) whose lower limit depends on
        // x1 through tau = (1 - x1^2) / (2 x1). The half-angle substitution
        // x1 = tan(psi/2) makes that limit the integration variable, and one
        // integration by parts collapses the whole thing to a Wallis
        // integral: I0(q) = 2 pi W(2q - 4) / (q - 2).
        ConeKind::Lorentz3 => Ok(
            2.0 * std::f64::consts::PI * graded_sine_power_integral(2.0 * q - 2.0, half_pi)
                / (q - 2.0),
        ),
    })
}

/// Half-line backend: the norm integral splits into the lateral
/// cross-section at exponent `2 alpha` times a radial factor. Writing
/// `y = e^t` the radial integrand is `e^(nu t) (1 + e^t)^(1 - 2 alpha)`,
/// smooth with exponential tails.
fn half_line_det_norm(alpha: f64, nu: f64) -> Result<f64> {
    let lateral = lateral_cross_section(ConeKind::HalfLine, 2.0 * alpha)?;
    let radial = exp_decaying_line_integral(
        |t: f64| (nu * t).exp() * (1.0 + t.exp()).powf(1.0 - 2.0 * alpha),
        nu,
        2.0 * alpha - 1.0 - nu,
    );
    Ok(lateral * radial)
}

/// Lorentz backend: the transitive action reduces the six-dimensional norm
/// integral to a product of low-dimensional ones: the lateral cross-section
/// at exponent `2 alpha`, an elementary hyperbolic-angle integral, and one
/// radial factor evaluated by quadrature.
fn lorentz3_det_norm(alpha: f64, nu: f64) -> Result<f64> {
    let i0 = lateral_cross_section(ConeKind::Lorentz3, 2.0 * alpha)?;

    // Radial factor: rho = e^t with weight e^((2 nu - 1) t) (1 + e^t)^(5 - 4 alpha),
    // decaying at rate 2 nu - 1 on the left and 4 alpha - 4 - 2 nu on the right.
    let radial = exp_decaying_line_integral(
        |t: f64| ((2.0 * nu - 1.0) * t).exp() * (1.0 + t.exp()).powf(5.0 - 4.0 * alpha),
        2.0 * nu - 1.0,
        4.0 * alpha - 4.0 - 2.0 * nu,
    );
    let hyperbolic_angle = std::f64::consts::PI / (2.0 * alpha - 2.5);
    Ok(i0 * hyperbolic_angle * radial)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn determinant_and_membership_on_both_backends() {
        let hl = ConeBackend::half_line();
        assert_eq!(hl.det(&[3.0]), 3.0);
        assert!(hl.in_cone(&[1e-9]));
        assert!(!hl.in_cone(&[0.0]));

        let l3 = ConeBackend::lorentz3();
        assert_eq!(l3.det(&[2.0, 1.0, 0.0]), 3.0);
        assert!(l3.in_cone(&[1.0, 0.5, 0.5]));
        assert!(!l3.in_cone(&[1.0, 1.0, 0.0]), "light ray is not interior");
        assert!(!l3.in_cone(&[-2.0, 0.0, 0.0]), "backward cone excluded");
    }

    #[test]
    fn tube_point_construction_validates() {
        let l3 = ConeBackend::lorentz3();
        assert!(l3.tube_point(vec![0.0; 3], vec![1.0, 0.0, 0.0]).is_ok());
        assert!(l3.tube_point(vec![0.0; 2], vec![1.0, 0.0, 0.0]).is_err());
        assert!(l3.tube_point(vec![0.0; 3], vec![0.5, 1.0, 0.0]).is_err());
        let hl = ConeBackend::half_line();
        assert!(hl.tube_point(vec![f64::NAN], vec![1.0]).is_err());
    }

    #[test]
    fn half_line_power_is_principal_branch() {
        let hl = ConeBackend::half_line();
        let v = hl.complex_det_power(&[1.0], &[1.0], 0.5).unwrap();
        // sqrt(1 + i) = 2^(1/4) e^(i pi/8)
        let want = Complex64::from_polar(2.0_f64.powf(0.25), std::f64::consts::PI / 8.0);
        assert_relative_eq!(v.re, want.re, epsilon = 1e-14);
        assert_relative_eq!(v.im, want.im, epsilon = 1e-14);
        assert!(hl.complex_det_power(&[-1.0], &[1.0], 0.5).is_err());
    }

    #[test]
    fn lorentz_power_at_real_argument_is_plain_power() {
        let l3 = ConeBackend::lorentz3();
        let v = l3.complex_det_power(&[2.0, 0.0, 0.0], &[0.0; 3], -2.0).unwrap();
        assert_relative_eq!(v.re, 4.0_f64.powf(-2.0), epsilon = 1e-14);
        assert!(v.im.abs() < 1e-15);
    }

    #[test]
    fn lorentz_power_matches_principal_log_of_full_determinant() {
        // The segment from re(zeta) never crosses the cut, so the
        // continued branch must agree with the principal one.
        let l3 = ConeBackend::lorentz3();
        let cases = [
            ([1.5, 0.2, -0.4], [0.7, 0.3, 0.2]),
            ([2.0, 0.9, 0.9], [-3.0, 1.0, -2.0]),
            ([1.0, 0.0, 0.0], [0.0, 5.0, 0.0]),
            ([1.0, 0.0, 0.9], [4.0, 3.9, 1.0]),
        ];
        for (a, b) in cases {
            for p in [0.5, -1.75, 2.5] {
                let walked = l3.complex_det_power(&a, &b, p).unwrap();
                let principal = {
                    let d = l3.complex_det(&a, &b);
                    (p * d.ln()).exp()
                };
                assert_relative_eq!(walked.re, principal.re, max_relative = 1e-12);
                assert_relative_eq!(walked.im, principal.im, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn power_laws_compose_exactly() {
        let l3 = ConeBackend::lorentz3();
        let a = [1.3, 0.5, -0.2];
        let b = [0.4, -1.1, 2.0];
        let p = l3.complex_det_power(&a, &b, 1.25).unwrap();
        let q = l3.complex_det_power(&a, &b, -0.75).unwrap();
        let sum = l3.complex_det_power(&a, &b, 0.5).unwrap();
        let prod = p * q;
        assert_relative_eq!(prod.re, sum.re, max_relative = 1e-13);
        assert_relative_eq!(prod.im, sum.im, max_relative = 1e-13);
    }

    #[test]
    fn conjugating_the_argument_conjugates_the_power() {
        let l3 = ConeBackend::lorentz3();
        let a = [1.0, 0.3, 0.3];
        let b = [2.0, -0.5, 0.7];
        let neg_b = [-2.0, 0.5, -0.7];
        let v = l3.complex_det_power(&a, &b, 0.8).unwrap();
        let w = l3.complex_det_power(&a, &neg_b, 0.8).unwrap();
        assert_relative_eq!(v.re, w.re, max_relative = 1e-13);
        assert_relative_eq!(v.im, -w.im, max_relative = 1e-13);
    }

    #[test]
    fn transitive_action_reaches_the_target() {
        let l3 = ConeBackend::lorentz3();
        // det = 25 - 9 = 16, rho = 4, cosh(chi) = 5/4.
        let y = [5.0, 3.0, 0.0];
        let h = l3.transitive_action(&y).unwrap();
        let image = h.apply_vec(&l3.identity_vector());
        for (got, want) in image.iter().zip(&y) {
            assert_relative_eq!(got, want, epsilon = 1e-12);
        }
        assert_relative_eq!(h.det(), 64.0, epsilon = 1e-12); // det(y)^(3/2)
    }

    #[test]
    fn action_scales_determinant_by_group_determinant_power() {
        let l3 = ConeBackend::lorentz3();
        let h = l3.transitive_action(&[2.0, 0.5, -1.0]).unwrap();
        let v = [3.0, 1.0, 0.5];
        let hv = h.apply_vec(&v);
        let mult = h.det().powf(2.0 / 3.0); // (det h)^(r/n)
        assert_relative_eq!(l3.det(&hv), mult * l3.det(&v), max_relative = 1e-12);
    }

    #[test]
    fn action_at_identity_multiple_is_pure_dilation() {
        // y = 4e has det 16, so the dilation factor det(y)^(1/2) is 4 and
        // the boost part is trivial.
        let l3 = ConeBackend::lorentz3();
        let h = l3.transitive_action(&[4.0, 0.0, 0.0]).unwrap();
        let expected = [4.0, 0.0, 0.0, 0.0, 4.0, 0.0, 0.0, 0.0, 4.0];
        for (got, want) in h.matrix().iter().zip(&expected) {
            assert_relative_eq!(got, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn half_line_kernel_constant_matches_closed_form() {
        // Via the Paley-Wiener transform the half-plane constant is
        // 2^(nu - 1) nu / pi; the quadrature-measured value must agree.
        let hl = ConeBackend::half_line();
        for nu in [0.5, 1.0, 2.0, 3.7] {
            let measured = hl.kernel_constant(nu).unwrap();
            let closed = 2.0_f64.powf(nu - 1.0) * nu / std::f64::consts::PI;
            assert_relative_eq!(measured, closed, max_relative = 1e-9);
        }
    }

    #[test]
    fn half_line_norm_integral_matches_gamma_expression() {
        use statrs::function::gamma::ln_gamma;
        // Closed form: sqrt(pi) Gamma(alpha - 1/2) Gamma(nu) Gamma(2 alpha - 1 - nu)
        //              / (Gamma(alpha) Gamma(2 alpha - 1)).
        let hl = ConeBackend::half_line();
        for (alpha, nu) in [(2.0, 1.0), (1.7, 0.8), (3.25, 2.4)] {
            let measured = hl.det_norm_squared(alpha, nu).unwrap();
            let closed = (0.5 * std::f64::consts::PI.ln() + ln_gamma(alpha - 0.5)
                + ln_gamma(nu)
                + ln_gamma(2.0 * alpha - 1.0 - nu)
                - ln_gamma(alpha)
                - ln_gamma(2.0 * alpha - 1.0))
            .exp();
            assert_relative_eq!(measured, closed, max_relative = 1e-9);
        }
    }

    #[test]
    fn weight_validation_rejects_trivial_spaces() {
        let l3 = ConeBackend::lorentz3();
        assert!(l3.kernel_constant(0.5).is_err(), "nu must exceed n/r - 1 = 1/2");
        assert!(l3.kernel_constant(0.51).is_ok());
        let hl = ConeBackend::half_line();
        assert!(hl.kernel_constant(0.0).is_err());
    }

    #[test]
    fn norm_constant_is_cached() {
        let hl = ConeBackend::half_line();
        let first = hl.det_norm_squared(2.0, 1.0).unwrap();
        let again = hl.det_norm_squared(2.0, 1.0).unwrap();
        assert_eq!(first.to_bits(), again.to_bits());
    }

    #[test]
    fn half_line_cross_section_matches_the_beta_closed_form() {
        use statrs::function::gamma::ln_gamma;
        // integral of (1 + x^2)^(-q/2) dx = sqrt(pi) Gamma((q-1)/2) / Gamma(q/2)
        for q in [2.0, 3.0, 2.6, 4.8] {
            let measured = lateral_cross_section(ConeKind::HalfLine, q).unwrap();
            let closed = (0.5 * std::f64::consts::PI.ln() + ln_gamma(0.5 * (q - 1.0))
                - ln_gamma(0.5 * q))
            .exp();
            assert_relative_eq!(measured, closed, max_relative = 1e-10);
        }
    }

    #[test]
    fn lorentz_cross_section_matches_the_gamma_closed_form() {
        use statrs::function::gamma::ln_gamma;
        // integral of |det(e + ix)|^(-q) dx over R^3
        //   = pi^(3/2) Gamma(q - 3/2) / ((q - 2) Gamma(q - 1))
        for q in [2.01, 2.2, 2.5, 3.0, 4.0, 6.0, 9.5] {
            let measured = lateral_cross_section(ConeKind::Lorentz3, q).unwrap();
            let closed = (1.5 * std::f64::consts::PI.ln() + ln_gamma(q - 1.5)
                - ln_gamma(q - 1.0))
            .exp()
                / (q - 2.0);
            assert_relative_eq!(measured, closed, max_relative = 1e-12);
        }
    }

    #[test]
    fn cross_section_rejects_exponents_at_or_below_the_lateral_bound() {
        assert!(lateral_cross_section(ConeKind::HalfLine, 1.0).is_err());
        assert!(lateral_cross_section(ConeKind::Lorentz3, 2.0).is_err());
        assert!(lateral_cross_section(ConeKind::Lorentz3, 2.01).is_ok());
    }

    #[test]
    fn cross_section_decreases_in_the_exponent() {
        for kind in [ConeKind::HalfLine, ConeKind::Lorentz3] {
            let lo = lateral_cross_section(kind, 2.3).unwrap();
            let hi = lateral_cross_section(kind, 3.1).unwrap();
            assert!(hi < lo, "|det(e + ix)| >= 1 fails somewhere only on a null set");
        }
    }

    #[test]
    fn det_modulus_squared_agrees_with_the_branch_continuation() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let hl = ConeBackend::half_line();
            let a = vec![rng.gen_range(0.1..3.0)];
            let b = vec![rng.gen_range(-2.0..2.0)];
            let direct = hl.det_modulus_squared(&a, &b);
            let via_power = hl.complex_det_power(&a, &b, 1.0).unwrap().norm_sqr();
            assert_relative_eq!(direct, via_power, max_relative = 1e-12);

            let l3 = ConeBackend::lorentz3();
            let y2: f64 = rng.gen_range(-0.5..0.5);
            let y3: f64 = rng.gen_range(-0.5..0.5);
            let a = vec![(y2 * y2 + y3 * y3).sqrt() + rng.gen_range(0.1..2.0), y2, y3];
            let b: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.5..1.5)).collect();
            let direct = l3.det_modulus_squared(&a, &b);
            let via_power = l3.complex_det_power(&a, &b, 1.0).unwrap().norm_sqr();
            assert_relative_eq!(direct, via_power, max_relative = 1e-12);
        }
    }
}
