//! Reproducing kernels of the weighted Bergman spaces and their
//! determinant-ladder variants.

use num_complex::Complex64;

use crate::cone::{ConeBackend, TubePoint};
use crate::error::Result;

/// The cone-valued kernel argument `(z - conj(w)) / i`, returned as
/// `(real part, imaginary part)`. The real part `Im z + Im w` always lies
/// in the open cone, which keeps the determinant powers on a fixed branch.
pub fn kernel_argument(z: &TubePoint, w: &TubePoint) -> (Vec<f64>, Vec<f64>) {
    let re = z.y().iter().zip(w.y()).map(|(a, b)| a + b).collect();
    let im = w.x().iter().zip(z.x()).map(|(a, b)| a - b).collect();
    (re, im)
}

/// Reproducing kernel of the weight-`nu` Bergman space,
/// `c_nu det((z - conj(w))/i)^(-s)` with `s = nu + n/r` and the constant
/// measured from the normalization integral.
pub fn kernel(backend: &ConeBackend, nu: f64, z: &TubePoint, w: &TubePoint) -> Result<Complex64> {
    let s = backend.spectral_exponent(nu);
    let c = backend.kernel_constant(nu)?;
    let (re, im) = kernel_argument(z, w);
    Ok(c * backend.complex_det_power(&re, &im, -s)?)
}

/// Kernel with the constant dropped and one diagonal half-power of the
/// weight restored: `det((z - conj(w))/i)^(-s) det(Im w)^(s/2)`. Its
/// modulus is bounded and translation-dilation covariant, which is the
/// form the pointwise estimates use.
pub fn normalized_kernel(
    backend: &ConeBackend,
    nu: f64,
    z: &TubePoint,
    w: &TubePoint,
) -> Result<Complex64> {
    backend.validate_weight(nu)?;
    let s = backend.spectral_exponent(nu);
    let (re, im) = kernel_argument(z, w);
    let base = backend.complex_det_power(&re, &im, -s)?;
    Ok(base * backend.det(w.y()).powf(0.5 * s))
}

/// Kernel of the `m`-th determinant-ladder derivative: the weight climbs
/// to `nu + m` and each rung contributes its measured ladder constant, so
/// the value equals `c_nu beta_m det(zeta)^-(s+m)`.
pub fn box_kernel(
    backend: &ConeBackend,
    nu: f64,
    m: u32,
    z: &TubePoint,
    w: &TubePoint,
) -> Result<Complex64> {
    backend.validate_weight(nu)?;
    let mut constant = Complex64::new(1.0, 0.0);
    for j in 0..m {
        constant *= backend.box_constant(nu + j as f64)?;
    }
    Ok(constant * kernel(backend, nu + m as f64, z, w)?)
}

/// Unit-norm representative of the ladder kernel centered at `center`,
/// evaluated at `w`:
/// `det((w - conj(center))/i)^-(s+m) det(Im center)^(s/2 + m) / sqrt(C)`
/// where `C` is the measured squared norm at the base point. Exactness of
/// the normalization at every center follows from the covariance of the
/// measure under the cone's affine group.
pub fn normalized_box_kernel(
    backend: &ConeBackend,
    nu: f64,
    m: u32,
    center: &TubePoint,
    w: &TubePoint,
) -> Result<Complex64> {
    backend.validate_weight(nu)?;
    let s = backend.spectral_exponent(nu);
    let alpha = s + m as f64;
    let norm_sq = backend.det_norm_squared(alpha, nu)?;
    let (re, im) = kernel_argument(w, center);
    let base = backend.complex_det_power(&re, &im, -alpha)?;
    let weight = backend.det(center.y()).powf(alpha - 0.5 * s);
    Ok(base * weight / norm_sq.sqrt())
}
