//! Integrals over invariant-distance balls.
//!
//! The half-line ball is an explicit Euclidean disk, handled by tensor
//! quadrature in polar coordinates. The Lorentz ball is sampled by Monte
//! Carlo in coordinates adapted to the center: a fixed chart box that
//! provably contains the ball at the base point is pushed forward by the
//! cone group element carrying the base point to the center. An
//! axis-aligned box at the center itself would be badly lopsided for
//! anisotropic centers (acceptance drops below a percent), while the
//! pushed-forward box keeps the acceptance rate center-independent.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cone::{cached, CacheSlot, ConeBackend, ConeKind, TubePoint};
use crate::error::{Error, Result};
use crate::geometry::distance::bergman_distance;
use crate::geometry::DomainMeasure;
use crate::num::gauss::gauss_legendre;
use crate::num::sum::parallel_sum_by;

const BALL_MC_POINTS: usize = 1 << 18;
const BALL_MC_SEED: u64 = 0xBA11_AD00;

/// Integral of `f` over the ball of invariant radius `delta` around `z`,
/// against the requested measure.
pub fn ball_integral<F>(
    backend: &ConeBackend,
    z: &TubePoint,
    delta: f64,
    measure: DomainMeasure,
    f: &F,
) -> Result<f64>
where
    F: Fn(&TubePoint) -> f64 + Sync,
{
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::ParameterRange(format!("ball radius {delta} must be positive")));
    }
    if let DomainMeasure::Weighted(nu) = measure {
        backend.validate_weight(nu)?;
    }
    match backend.kind() {
        ConeKind::HalfLine => half_line_ball(z, delta, measure, f),
        ConeKind::Lorentz3 => lorentz_ball(backend, z, delta, measure, f),
    }
}

/// Measure of the ball: `ball_integral` of the constant 1.
pub fn ball_volume(backend: &ConeBackend, nu: f64, z: &TubePoint, delta: f64) -> Result<f64> {
    ball_integral(backend, z, delta, DomainMeasure::Weighted(nu), &|_: &TubePoint| 1.0)
}

/// Weighted ball volume through the covariance law: the volume is computed
/// once at the base point per `(weight, radius)` and cached, and any other
/// center picks up the group factor,
/// `V_nu(B_delta(z)) = det(Im z)^(nu + n/r) V_nu(B_delta(i e))`.
/// Agrees with [`ball_volume`] to quadrature accuracy while being constant
/// time after the first call, which matters for fields that need a ball
/// volume at every quadrature node.
pub fn scaled_ball_volume(
    backend: &ConeBackend,
    nu: f64,
    z: &TubePoint,
    delta: f64,
) -> Result<f64> {
    let b = *backend;
    let base = cached(backend.kind(), CacheSlot::BaseBallVolume, delta, nu, || {
        let center = TubePoint::raw(vec![0.0; b.n()], b.identity_vector());
        ball_volume(&b, nu, &center, delta)
    })?;
    Ok(base * backend.det(z.y()).powf(backend.spectral_exponent(nu)))
}

/// The half-line ball around `x0 + i y0` is the Euclidean disk with center
/// `(x0, y0 cosh(sqrt(2) delta))` and radius `y0 sinh(sqrt(2) delta)`.
fn half_line_ball<F>(z: &TubePoint, delta: f64, measure: DomainMeasure, f: &F) -> Result<f64>
where
    F: Fn(&TubePoint) -> f64 + Sync,
{
    let (x0, y0) = (z.x()[0], z.y()[0]);
    let t = std::f64::consts::SQRT_2 * delta;
    let yc = y0 * t.cosh();
    let radius = y0 * t.sinh();
    // Flat-coordinate density: dV_nu = y^(nu - 1) dx dy on the half-plane.
    let w_exp = match measure {
        DomainMeasure::Weighted(nu) => nu - 1.0,
        DomainMeasure::Invariant => -2.0,
    };
    let radial = gauss_legendre(48);
    let angular = gauss_legendre(64);
    let two_pi = std::f64::consts::TAU;
    let mut total = 0.0;
    for (rn, rw) in radial.nodes.iter().zip(&radial.weights) {
        let rho = 0.5 * radius * (rn + 1.0);
        let jac_r = 0.5 * radius * rho;
        let mut ring = 0.0;
        for (an, aw) in angular.nodes.iter().zip(&angular.weights) {
            let theta = 0.5 * two_pi * (an + 1.0);
            let x = x0 + rho * theta.cos();
            let y = yc + rho * theta.sin();
            let p = TubePoint::raw(vec![x], vec![y]);
            ring += aw * f(&p) * y.powf(w_exp);
        }
        total += rw * jac_r * ring * 0.5 * two_pi;
    }
    Ok(total)
}

/// Chart box containing the ball of radius `delta` around the base point
/// `i e`. With `t = log det(y)^(1/2)` and the hyperbolic angle coordinates,
/// the metric dominates `(3/2) (dt^2 + dchi^2 + sinh(chi)^2 dphi^2)` and its
/// smallest eigenvalue on `x` is `(3/2) exp(-2 chi) / rho^2`, which bounds
/// every coordinate window below.
struct LorentzBaseBox {
    x_half: f64,
    t_half: f64,
    c_hi: f64,
}

fn lorentz_base_box(delta: f64) -> LorentzBaseBox {
    // Product-coordinate radius, padded for roundoff in the distance
    // evaluations at the boundary.
    let rh = delta / 1.5_f64.sqrt() * (1.0 + 1e-9) + 1e-12;
    let x_half = delta * (2.0 * rh).exp() / 1.5_f64.sqrt() * (1.0 + 1e-9) + 1e-12;
    LorentzBaseBox { x_half, t_half: rh, c_hi: rh.cosh() }
}

/// Monte Carlo over the base-ball box pushed forward by the group element
/// `g` with `g e = y_z`, composed with translation by `x_z`. Both maps are
/// isometries, so the image of the box contains the ball around `z` and the
/// acceptance rate matches the base point's. The flat volume element picks
/// up `det(g)^2 = det(y_z)^(n/r * 2)` from the two copies of `g`, which
/// combines with the weight of the measure into a single power of
/// `det(y_z)` outside the sum.
fn lorentz_ball<F>(
    backend: &ConeBackend,
    z: &TubePoint,
    delta: f64,
    measure: DomainMeasure,
    f: &F,
) -> Result<f64>
where
    F: Fn(&TubePoint) -> f64 + Sync,
{
    let boxed = lorentz_base_box(delta);
    let chart_exp = measure.det_exponent(backend);
    let g = backend.transitive_action(z.y())?;

    let two_pi = std::f64::consts::TAU;
    let param_volume =
        (2.0 * boxed.x_half).powi(3) * (2.0 * boxed.t_half) * (boxed.c_hi - 1.0) * two_pi;

    let mut rng = ChaCha8Rng::seed_from_u64(BALL_MC_SEED);
    let mut samples = Vec::with_capacity(BALL_MC_POINTS);
    for _ in 0..BALL_MC_POINTS {
        let xb: Vec<f64> =
            (0..3).map(|_| boxed.x_half * rng.gen_range(-1.0..1.0)).collect();
        let t = boxed.t_half * rng.gen_range(-1.0..1.0);
        let c = rng.gen_range(1.0..boxed.c_hi);
        let phi = rng.gen_range(-0.5 * two_pi..0.5 * two_pi);
        let rho = t.exp();
        let sinh = (c * c - 1.0).max(0.0).sqrt();
        let yb = vec![rho * c, rho * sinh * phi.cos(), rho * sinh * phi.sin()];
        let det_base = backend.det(&yb);
        let x = g.apply_vec(&xb).iter().zip(z.x()).map(|(v, x0)| v + x0).collect();
        samples.push((TubePoint::raw(x, g.apply_vec(&yb)), det_base));
    }

    let total = parallel_sum_by(BALL_MC_POINTS, |i| {
        let (p, det_base) = &samples[i];
        if bergman_distance(backend, z, p) > delta {
            return 0.0;
        }
        f(p) * det_base.powf(chart_exp)
    });
    let center_power = backend.det(z.y()).powf(chart_exp + backend.rank_ratio());
    Ok(total * center_power * param_volume / BALL_MC_POINTS as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn half_line_ball_volume_scales_with_the_weight_power_of_height() {
        // V_nu(B_delta(g z)) = det(g)^(nu + 1) V_nu(B_delta(z)) for the
        // dilation g: the ball moves with the group and the measure picks
        // up the covariance factor.
        let b = ConeBackend::half_line();
        let nu = 1.5;
        let delta = 0.3;
        let z1 = b.tube_point(vec![0.0], vec![1.0]).unwrap();
        let z2 = b.tube_point(vec![3.0], vec![2.5]).unwrap();
        let v1 = ball_volume(&b, nu, &z1, delta).unwrap();
        let v2 = ball_volume(&b, nu, &z2, delta).unwrap();
        assert_relative_eq!(v2 / v1, 2.5_f64.powf(nu + 1.0), max_relative = 1e-9);
    }

    #[test]
    fn half_line_ball_volume_matches_direct_area_for_flat_weight() {
        // nu = 1 makes dV_nu the Lebesgue measure, so the volume is the
        // disk area pi R^2 with R = y sinh(sqrt(2) delta).
        let b = ConeBackend::half_line();
        let delta = 0.4;
        let z = b.tube_point(vec![-1.0], vec![1.7]).unwrap();
        let r = 1.7 * (std::f64::consts::SQRT_2 * delta).sinh();
        let v = ball_volume(&b, 1.0, &z, delta).unwrap();
        assert_relative_eq!(v, std::f64::consts::PI * r * r, max_relative = 1e-10);
    }

    /// Brute-force reference in flat coordinates: uniform samples over a
    /// Euclidean box that contains the ball, no chart and no group action,
    /// so it shares nothing with the production sampler except the
    /// distance function.
    fn lorentz_flat_reference(b: &ConeBackend, z: &TubePoint, delta: f64, det_exp: f64) -> f64 {
        use rand::{Rng, SeedableRng};
        let rh = delta / 1.5_f64.sqrt() * 1.000001;
        let y1_lo = (-rh).exp();
        let y1_hi = rh.exp() * rh.cosh();
        let yt = rh.exp() * rh.sinh();
        let xh = delta * (2.0 * rh).exp() / 1.5_f64.sqrt() * 1.000001;
        let vol = (y1_hi - y1_lo) * (2.0 * yt).powi(2) * (2.0 * xh).powi(3);
        let n = 1_500_000usize;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0xF1A7_0001);
        let mut acc = 0.0;
        for _ in 0..n {
            let y = vec![
                rng.gen_range(y1_lo..y1_hi),
                rng.gen_range(-yt..yt),
                rng.gen_range(-yt..yt),
            ];
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-xh..xh)).collect();
            let det = b.det(&y);
            if det <= 0.0 {
                continue;
            }
            // Cheap necessary conditions (coordinate projections of the
            // ball) before the full distance evaluation.
            let rho = det.sqrt();
            if rho.ln().abs() > rh || y[0] / rho > rh.cosh() {
                continue;
            }
            let p = TubePoint::raw(x, y);
            if bergman_distance(b, z, &p) <= delta {
                acc += det.powf(det_exp);
            }
        }
        acc * vol / n as f64
    }

    #[test]
    fn lorentz_ball_volume_matches_flat_coordinate_sampling() {
        let b = ConeBackend::lorentz3();
        let delta = 0.4;
        let z = b.tube_point(vec![0.0; 3], vec![1.0, 0.0, 0.0]).unwrap();
        let one = |_: &TubePoint| 1.0;

        let vw = ball_volume(&b, 1.0, &z, delta).unwrap();
        let vw_ref = lorentz_flat_reference(&b, &z, delta, 1.0 - 1.5);
        assert_relative_eq!(vw, vw_ref, max_relative = 5e-2);

        let vi = ball_integral(&b, &z, delta, DomainMeasure::Invariant, &one).unwrap();
        let vi_ref = lorentz_flat_reference(&b, &z, delta, -3.0);
        assert_relative_eq!(vi, vi_ref, max_relative = 5e-2);
    }

    #[test]
    fn lorentz_ball_volume_is_covariant_under_the_cone_action() {
        // The estimator reuses the base-point samples at every center, so
        // the covariance factor must come out almost exactly; only
        // accept/reject flips at the ball boundary can perturb it.
        let b = ConeBackend::lorentz3();
        let nu = 1.0;
        let s = b.spectral_exponent(nu);
        let delta = 0.3;
        let z1 = b.tube_point(vec![0.0; 3], vec![1.0, 0.0, 0.0]).unwrap();
        let target = vec![1.3, 0.4, -0.2];
        let g = b.transitive_action(&target).unwrap();
        let z2 = g.apply_point(&b, &z1).unwrap();
        let v1 = ball_volume(&b, nu, &z1, delta).unwrap();
        let v2 = ball_volume(&b, nu, &z2, delta).unwrap();
        let expect = b.det(&target).powf(s);
        assert_relative_eq!(v2 / v1, expect, max_relative = 1e-9);
    }

    #[test]
    fn ball_volume_grows_with_radius() {
        for b in [ConeBackend::half_line(), ConeBackend::lorentz3()] {
            let e = b.identity_vector();
            let z = b.tube_point(vec![0.0; b.n()], e).unwrap();
            let mut prev = 0.0;
            for delta in [0.1, 0.2, 0.35, 0.5] {
                let v = ball_volume(&b, 1.0, &z, delta).unwrap();
                assert!(v > prev, "volume must increase with the radius");
                prev = v;
            }
        }
    }

    #[test]
    fn scaled_ball_volume_matches_direct_quadrature_off_the_base_point() {
        let nu = 1.25;
        let delta = 0.35;
        for b in [ConeBackend::half_line(), ConeBackend::lorentz3()] {
            let (x, y) = match b.kind() {
                ConeKind::HalfLine => (vec![1.0], vec![2.2]),
                ConeKind::Lorentz3 => (vec![0.3, -0.2, 0.1], vec![1.6, 0.5, -0.3]),
            };
            let z = b.tube_point(x, y).unwrap();
            let direct = ball_volume(&b, nu, &z, delta).unwrap();
            let scaled = scaled_ball_volume(&b, nu, &z, delta).unwrap();
            assert_relative_eq!(scaled, direct, max_relative = 1e-9);
        }
    }

    #[test]
    fn invariant_ball_volume_does_not_depend_on_the_center() {
        for b in [ConeBackend::half_line(), ConeBackend::lorentz3()] {
            let e = b.identity_vector();
            let z1 = b.tube_point(vec![0.0; b.n()], e.clone()).unwrap();
            let anchor: Vec<f64> = match b.kind() {
                ConeKind::HalfLine => vec![3.0],
                ConeKind::Lorentz3 => vec![2.0, 0.7, 0.3],
            };
            let g = b.transitive_action(&anchor).unwrap();
            let z2 = g.apply_point(&b, &z1).unwrap();
            let one = |_: &TubePoint| 1.0;
            let v1 = ball_integral(&b, &z1, 0.4, DomainMeasure::Invariant, &one).unwrap();
            let v2 = ball_integral(&b, &z2, 0.4, DomainMeasure::Invariant, &one).unwrap();
            assert_relative_eq!(v1, v2, max_relative = 1e-9);
        }
    }
}
