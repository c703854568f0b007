//! Geometry of the tube domain: spectral parameters, truncation regions
//! with geometric growth, integration over regions (adaptive on the
//! half-plane, quasi-Monte Carlo on the Lorentz tube), kernels, the
//! invariant distance, balls, and certified lattices.

pub mod ball;
pub mod distance;
pub mod kernels;
pub mod lattice;

pub use ball::{ball_integral, ball_volume, scaled_ball_volume};
pub use distance::{bergman_distance, cone_distance, metric_matrix};
pub use kernels::{box_kernel, kernel, normalized_box_kernel, normalized_kernel};
pub use lattice::{make_lattice, separated_sublattice, Lattice, LatticeCertificates};

use serde::{Deserialize, Serialize};

use crate::cone::{ConeBackend, ConeKind, TubePoint};
use crate::error::{Error, Result};
use crate::num::qmc::HaltonSequence;
use crate::num::quad::adaptive_rectangle;
use crate::num::sum::parallel_sum_by;
use crate::num::trace::{ConvergenceReport, DoublingProtocol, ProtocolState, Verdict};

/// The scalar parameters shared by most statements under test.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SpectralParams {
    /// Bergman weight.
    pub nu: f64,
    /// Schatten / sequence exponent.
    pub p: f64,
    /// Order of the determinant-ladder derivative.
    pub m: u32,
    /// Lattice / ball radius in the invariant distance.
    pub delta: f64,
}

impl SpectralParams {
    pub fn validate(&self, backend: &ConeBackend) -> Result<()> {
        backend.validate_weight(self.nu)?;
        if !(self.p > 0.0) {
            return Err(Error::ParameterRange(format!("exponent p = {} must be positive", self.p)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::ParameterRange(format!(
                "radius delta = {} must lie in (0, 1)",
                self.delta
            )));
        }
        Ok(())
    }
}

/// A bounded chunk of the tube domain.
///
/// Integrals over the full domain and lattices both work on truncations:
/// a box for the real part, a determinant window for the cone part, and
/// (Lorentz only) an anisotropy bound `|y| / det(y)^(1/r)` that caps the
/// hyperbolic angle. [`TruncationRegion::grow`] enlarges all three
/// geometrically, which is what the doubling protocol exhausts the domain
/// with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationRegion {
    /// Per-coordinate interval for the real part.
    pub x_box: Vec<(f64, f64)>,
    /// Window `[d_lo, d_hi]` for `det(y)`.
    pub det_range: (f64, f64),
    /// Upper bound on `|y| / det(y)^(1/r)`; 1 is the isotropic minimum and
    /// the half-line value.
    pub anisotropy_bound: f64,
}

impl TruncationRegion {
    /// A small centered region; the conventional starting truncation for
    /// lattices and doubling integrals.
    pub fn default_for(kind: ConeKind) -> Self {
        match kind {
            ConeKind::HalfLine => TruncationRegion {
                x_box: vec![(-2.0, 2.0)],
                det_range: (0.25, 4.0),
                anisotropy_bound: 1.0,
            },
            ConeKind::Lorentz3 => TruncationRegion {
                x_box: vec![(-0.15, 0.15); 3],
                det_range: (0.8, 1.25),
                anisotropy_bound: anisotropy_from_chi(0.3),
            },
        }
    }

    /// A region centered on the cone point `t`, used as the base truncation
    /// for integrals whose integrand concentrates near `i t`.
    pub fn around_cone_point(backend: &ConeBackend, t: &[f64]) -> Result<Self> {
        if !backend.in_cone(t) {
            return Err(Error::OutsideDomain(format!("{t:?} is not in the open cone")));
        }
        let d = backend.det(t);
        let scale = d.powf(1.0 / backend.r() as f64);
        match backend.kind() {
            ConeKind::HalfLine => Ok(TruncationRegion {
                x_box: vec![(-2.0 * scale, 2.0 * scale)],
                det_range: (0.25 * d, 4.0 * d),
                anisotropy_bound: 1.0,
            }),
            ConeKind::Lorentz3 => {
                // The angular window opens from the cone axis, so make it
                // wide enough to contain the direction of t from the start.
                let rho = d.sqrt();
                let chi_t = (t[0] / rho).max(1.0).acosh();
                let half = 2.0 * scale * chi_t.exp();
                Ok(TruncationRegion {
                    x_box: vec![(-half, half); 3],
                    det_range: (0.25 * d, 4.0 * d),
                    anisotropy_bound: anisotropy_from_chi(chi_t + 0.5),
                })
            }
        }
    }

    pub fn validate(&self, backend: &ConeBackend) -> Result<()> {
        if self.x_box.len() != backend.n() {
            return Err(Error::InvalidArgument(format!(
                "region has {} x-intervals, backend needs {}",
                self.x_box.len(),
                backend.n()
            )));
        }
        for &(lo, hi) in &self.x_box {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidArgument(format!("empty x interval [{lo}, {hi}]")));
            }
        }
        let (lo, hi) = self.det_range;
        if !(lo > 0.0 && lo < hi) || !hi.is_finite() {
            return Err(Error::InvalidArgument(format!("bad det range [{lo}, {hi}]")));
        }
        if !(self.anisotropy_bound >= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "anisotropy bound {} must be >= 1",
                self.anisotropy_bound
            )));
        }
        Ok(())
    }

    /// The region after `k` doubling steps: the x-box dilates by `2^k`
    /// about its center, the determinant window widens by `2^(r k)` on both
    /// ends (so the scale `det^(1/r)` doubles), and the angular radius
    /// grows by `k log 2`.
    pub fn grow(&self, backend: &ConeBackend, k: u32) -> TruncationRegion {
        if k == 0 {
            return self.clone();
        }
        let factor = 2.0_f64.powi(k as i32);
        let x_box = self
            .x_box
            .iter()
            .map(|&(lo, hi)| {
                let mid = 0.5 * (lo + hi);
                let half = 0.5 * (hi - lo) * factor;
                (mid - half, mid + half)
            })
            .collect();
        let det_factor = factor.powi(backend.r() as i32);
        let det_range = (self.det_range.0 / det_factor, self.det_range.1 * det_factor);
        let anisotropy_bound = match backend.kind() {
            ConeKind::HalfLine => self.anisotropy_bound,
            ConeKind::Lorentz3 => {
                anisotropy_from_chi(chi_from_anisotropy(self.anisotropy_bound) + k as f64 * std::f64::consts::LN_2)
            }
        };
        TruncationRegion { x_box, det_range, anisotropy_bound }
    }

    /// Strict membership test.
    pub fn contains(&self, backend: &ConeBackend, p: &TubePoint) -> bool {
        for (x, &(lo, hi)) in p.x().iter().zip(&self.x_box) {
            if *x < lo || *x > hi {
                return false;
            }
        }
        let d = backend.det(p.y());
        if d < self.det_range.0 || d > self.det_range.1 {
            return false;
        }
        if backend.kind() == ConeKind::Lorentz3 {
            let norm = p.y().iter().map(|c| c * c).sum::<f64>().sqrt();
            if norm / d.sqrt() > self.anisotropy_bound + 1e-15 {
                return false;
            }
        }
        true
    }

    /// Scales every extent by `factor` about the region center (used by
    /// parameter sweeps; `grow` covers the doubling protocol).
    pub fn scaled(&self, backend: &ConeBackend, factor: f64) -> TruncationRegion {
        let x_box = self
            .x_box
            .iter()
            .map(|&(lo, hi)| {
                let mid = 0.5 * (lo + hi);
                let half = 0.5 * (hi - lo) * factor;
                (mid - half, mid + half)
            })
            .collect();
        let det_factor = factor.powi(backend.r() as i32);
        let det_range = (self.det_range.0 / det_factor, self.det_range.1 * det_factor);
        let anisotropy_bound = match backend.kind() {
            ConeKind::HalfLine => self.anisotropy_bound,
            ConeKind::Lorentz3 => anisotropy_from_chi(chi_from_anisotropy(self.anisotropy_bound) * factor),
        };
        TruncationRegion { x_box, det_range, anisotropy_bound }
    }
}

/// Hyperbolic-angle cap equivalent to an anisotropy bound: `|y|/det^(1/2)
/// = sqrt(cosh 2 chi)` on the Lorentz cone.
pub fn chi_from_anisotropy(bound: f64) -> f64 {
    let c2 = (bound * bound).max(1.0);
    0.5 * c2.acosh()
}

pub fn anisotropy_from_chi(chi: f64) -> f64 {
    (2.0 * chi).cosh().sqrt()
}

/// Which measure an integral runs against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DomainMeasure {
    /// `dV_nu = det(Im z)^(nu - n/r) dV`.
    Weighted(f64),
    /// The invariant measure `det(Im z)^(-2n/r) dV`.
    Invariant,
}

impl DomainMeasure {
    /// In the region parametrization used here both measures reduce to
    /// `det(y)^w` times the flat parameter measure; this is `w`.
    pub(crate) fn det_exponent(self, backend: &ConeBackend) -> f64 {
        match self {
            DomainMeasure::Weighted(nu) => nu,
            DomainMeasure::Invariant => -backend.rank_ratio(),
        }
    }
}

/// Region parametrization used by sampling and quadrature.
///
/// Coordinates are the real components, the logarithmic determinant scale
/// `t` (`y = e^t` on the half-line, `rho = det(y)^(1/2) = e^t` on the
/// Lorentz cone), and for the Lorentz cone the hyperbolic angle via `c =
/// cosh(chi)` plus the rotation `phi`. In these coordinates `dV_nu` is
/// exactly `det(y)^nu` times the flat measure, with no leftover Jacobian.
#[derive(Debug, Clone)]
pub struct RegionChart {
    kind: ConeKind,
    x_box: Vec<(f64, f64)>,
    t_range: (f64, f64),
    c_range: (f64, f64),
}

impl RegionChart {
    pub fn new(backend: &ConeBackend, region: &TruncationRegion) -> Result<Self> {
        region.validate(backend)?;
        let (d_lo, d_hi) = region.det_range;
        let r = backend.r() as f64;
        let t_range = (d_lo.ln() / r, d_hi.ln() / r);
        let c_range = match backend.kind() {
            ConeKind::HalfLine => (1.0, 1.0),
            ConeKind::Lorentz3 => (1.0, chi_from_anisotropy(region.anisotropy_bound).cosh()),
        };
        Ok(RegionChart { kind: backend.kind(), x_box: region.x_box.clone(), t_range, c_range })
    }

    pub fn dim(&self) -> usize {
        match self.kind {
            ConeKind::HalfLine => 2,
            ConeKind::Lorentz3 => 6,
        }
    }

    /// Total parameter volume (the flat measure of the chart).
    pub fn volume(&self) -> f64 {
        let x_vol: f64 = self.x_box.iter().map(|&(lo, hi)| hi - lo).product();
        let t_vol = self.t_range.1 - self.t_range.0;
        match self.kind {
            ConeKind::HalfLine => x_vol * t_vol,
            ConeKind::Lorentz3 => {
                x_vol * t_vol * (self.c_range.1 - self.c_range.0) * 2.0 * std::f64::consts::PI
            }
        }
    }

    /// Maps a unit-cube sample to a tube point.
    pub fn point(&self, u: &[f64]) -> TubePoint {
        match self.kind {
            ConeKind::HalfLine => {
                let (lo, hi) = self.x_box[0];
                let x = lo + (hi - lo) * u[0];
                let t = self.t_range.0 + (self.t_range.1 - self.t_range.0) * u[1];
                TubePoint::raw(vec![x], vec![t.exp()])
            }
            ConeKind::Lorentz3 => {
                let mut x = Vec::with_capacity(3);
                for j in 0..3 {
                    let (lo, hi) = self.x_box[j];
                    x.push(lo + (hi - lo) * u[j]);
                }
                let t = self.t_range.0 + (self.t_range.1 - self.t_range.0) * u[3];
                let c = self.c_range.0 + (self.c_range.1 - self.c_range.0) * u[4];
                let phi = 2.0 * std::f64::consts::PI * u[5];
                let rho = t.exp();
                let sinh = (c * c - 1.0).max(0.0).sqrt();
                let y = vec![rho * c, rho * sinh * phi.cos(), rho * sinh * phi.sin()];
                TubePoint::raw(x, y)
            }
        }
    }
}

/// Controls for the doubling integrals.
#[derive(Debug, Clone, Copy)]
pub struct IntegralOptions {
    pub mode: QuadratureMode,
    pub protocol: DoublingProtocol,
    pub seed: u64,
    /// Refinement budget per shell in adaptive mode.
    pub max_cells_per_shell: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadratureMode {
    /// Adaptive tensor quadrature; half-line only (the chart is 2-d there).
    Adaptive,
    /// Quasi-Monte Carlo with this many points per shell.
    Qmc { points: usize },
}

impl IntegralOptions {
    pub fn default_for(kind: ConeKind, seed: u64) -> Self {
        let mode = match kind {
            ConeKind::HalfLine => QuadratureMode::Adaptive,
            ConeKind::Lorentz3 => QuadratureMode::Qmc { points: 1 << 16 },
        };
        IntegralOptions {
            mode,
            protocol: DoublingProtocol::default(),
            seed,
            max_cells_per_shell: 20_000,
        }
    }
}

/// Integral of `field` against the chosen measure over a region shell
/// (`outer` minus `inner`; `inner = None` integrates the whole of `outer`),
/// by shifted-Halton sampling in the chart. Deterministic for fixed seed.
///
/// Returns the estimate together with a sampling-error proxy: half the gap
/// between the estimates from the first and second halves of the sequence.
/// A proxy comparable to the value itself means the shell is undersampled
/// and the estimate should not be trusted.
pub fn qmc_shell_integral<F>(
    backend: &ConeBackend,
    outer: &TruncationRegion,
    inner: Option<&TruncationRegion>,
    measure: DomainMeasure,
    field: &F,
    points: usize,
    seed: u64,
) -> Result<(f64, f64)>
where
    F: Fn(&TubePoint) -> f64 + Sync,
{
    let chart = RegionChart::new(backend, outer)?;
    let points = (points.max(2) / 2) * 2;
    let mut seq = HaltonSequence::new(chart.dim(), seed);
    let mut samples = Vec::with_capacity(points);
    let mut u = vec![0.0; chart.dim()];
    for _ in 0..points {
        seq.fill_next(&mut u);
        samples.push(chart.point(&u));
    }
    let w_exp = measure.det_exponent(backend);
    let vol = chart.volume();
    let contribution = |i: usize| {
        let p = &samples[i];
        if let Some(hole) = inner {
            if hole.contains(backend, p) {
                return 0.0;
            }
        }
        let density = backend.det(p.y()).powf(w_exp);
        field(p) * density
    };
    let half = points / 2;
    let first = parallel_sum_by(half, &contribution);
    let second = parallel_sum_by(half, |i| contribution(half + i));
    let scale = vol / points as f64;
    Ok(((first + second) * scale, (first - second).abs() * scale))
}

/// Splits `[a, b]` at the points `center +- min_half * 2^m`, so cell
/// widths track the distance from `center`.
///
/// The integrands fed to the shell quadrature vary on the scale of their
/// distance from the exhaustion center (they are smooth in logarithmic
/// coordinates), while the outer shells grow geometrically. A single
/// opening rule over a full strip eventually has node spacings far wider
/// than the features near the center; it then reports a spuriously tiny
/// value with a spuriously tiny error estimate, and no amount of
/// adaptivity recovers because refinement is driven by that estimate.
/// Banding by distance keeps every opening rule sampling at the local
/// feature scale, with only logarithmically many bands per strip.
fn log_scale_bands(a: f64, b: f64, center: f64, min_half: f64) -> Vec<(f64, f64)> {
    let mut cuts = vec![a];
    let reach = (b - center).abs().max((a - center).abs());
    let mut interior = Vec::new();
    let mut offset = min_half;
    while offset < reach {
        for cand in [center - offset, center + offset] {
            if cand > a && cand < b {
                interior.push(cand);
            }
        }
        offset *= 2.0;
    }
    interior.sort_by(f64::total_cmp);
    cuts.extend(interior);
    cuts.push(b);
    cuts.windows(2).filter(|w| w[1] > w[0]).map(|w| (w[0], w[1])).collect()
}

/// Same shell integral by adaptive quadrature in the half-line chart,
/// where the shell is a frame decomposed into at most four rectangles,
/// each banded by distance from the exhaustion center (see
/// [`log_scale_bands`]) before the cell-level adaptivity runs.
pub fn adaptive_shell_integral<F>(
    backend: &ConeBackend,
    outer: &TruncationRegion,
    inner: Option<&TruncationRegion>,
    measure: DomainMeasure,
    field: &F,
    tol_abs: f64,
    max_cells: usize,
) -> Result<(f64, bool)>
where
    F: Fn(&TubePoint) -> f64 + Sync,
{
    if backend.kind() != ConeKind::HalfLine {
        return Err(Error::UnsupportedBackend(
            "adaptive region quadrature is implemented for the half-line chart only".into(),
        ));
    }
    let w_exp = measure.det_exponent(backend);
    let integrand = |x: f64, t: f64| {
        let p = TubePoint::raw(vec![x], vec![t.exp()]);
        field(&p) * (w_exp * t).exp()
    };

    let (xo_lo, xo_hi) = outer.x_box[0];
    let (to_lo, to_hi) = (outer.det_range.0.ln(), outer.det_range.1.ln());
    let mut rects: Vec<(f64, f64, f64, f64)> = Vec::new();
    match inner {
        None => rects.push((xo_lo, xo_hi, to_lo, to_hi)),
        Some(hole) => {
            let (xi_lo, xi_hi) = hole.x_box[0];
            let (ti_lo, ti_hi) = (hole.det_range.0.ln(), hole.det_range.1.ln());
            // Frame around the inner rectangle: two side strips of full
            // height, plus top and bottom strips of the inner width.
            if xo_lo < xi_lo {
                rects.push((xo_lo, xi_lo, to_lo, to_hi));
            }
            if xi_hi < xo_hi {
                rects.push((xi_hi, xo_hi, to_lo, to_hi));
            }
            if to_lo < ti_lo {
                rects.push((xi_lo, xi_hi, to_lo, ti_lo));
            }
            if ti_hi < to_hi {
                rects.push((xi_lo, xi_hi, ti_hi, to_hi));
            }
        }
    }

    let (center_x, center_t) = match inner {
        Some(hole) => (
            0.5 * (hole.x_box[0].0 + hole.x_box[0].1),
            0.5 * (hole.det_range.0.ln() + hole.det_range.1.ln()),
        ),
        None => (0.5 * (xo_lo + xo_hi), 0.5 * (to_lo + to_hi)),
    };
    let mut cells: Vec<(f64, f64, f64, f64)> = Vec::new();
    for (x0, x1, t0, t1) in rects {
        for &(bx0, bx1) in &log_scale_bands(x0, x1, center_x, 1.0) {
            for &(bt0, bt1) in &log_scale_bands(t0, t1, center_t, 2.0) {
                cells.push((bx0, bx1, bt0, bt1));
            }
        }
    }

    let mut total = 0.0;
    let mut converged = true;
    let per_cell_tol = tol_abs / cells.len().max(1) as f64;
    for (x0, x1, t0, t1) in cells {
        let r = adaptive_rectangle(integrand, x0, x1, t0, t1, 1e-7, per_cell_tol, max_cells)?;
        total += r.value;
        converged &= r.converged;
    }
    Ok((total, converged))
}

/// Doubling-protocol integral of `field` over the exhaustion generated by
/// `base.grow(k)`: integrates the base region, then shell after shell,
/// until the protocol reaches a verdict.
///
/// Shells are resolved to a fraction of the running total rather than to
/// full precision: the protocol consumes increments through gates at the
/// 0.1% level, so certifying each shell a thousand times finer buys
/// nothing and exhausts the refinement budget on the huge thin shells the
/// exhaustion eventually produces. In QMC mode the current shell's
/// sampling-error proxy gates the converged verdict: the claim rests on
/// the latest increments being negligible, so that is where the sampling
/// has to be trusted. Divergence is a trend over several shells and is
/// left ungated.
pub fn doubling_integral<F>(
    backend: &ConeBackend,
    base: &TruncationRegion,
    measure: DomainMeasure,
    field: &F,
    opts: &IntegralOptions,
) -> Result<ConvergenceReport>
where
    F: Fn(&TubePoint) -> f64 + Sync,
{
    base.validate(backend)?;
    let mut state = ProtocolState::new(opts.protocol);

    let base_value = match opts.mode {
        QuadratureMode::Adaptive => {
            let (v, ok) = adaptive_shell_integral(
                backend,
                base,
                None,
                measure,
                field,
                1e-9,
                opts.max_cells_per_shell,
            )?;
            if !ok {
                state.push_base(v);
                return Ok(ConvergenceReport::from_state(&state, Verdict::Inconclusive));
            }
            v
        }
        QuadratureMode::Qmc { points } => {
            qmc_shell_integral(backend, base, None, measure, field, points, opts.seed)?.0
        }
    };
    state.push_base(base_value);

    let mut prev = base.clone();
    for k in 1..=opts.protocol.max_steps as u32 {
        let outer = base.grow(backend, k);
        let verdict = match opts.mode {
            QuadratureMode::Adaptive => {
                let tol_abs = (1e-6 * state.total().abs().max(1.0)).max(1e-300);
                let (inc, ok) = adaptive_shell_integral(
                    backend,
                    &outer,
                    Some(&prev),
                    measure,
                    field,
                    tol_abs,
                    opts.max_cells_per_shell,
                )?;
                let verdict = state.push_shell(inc);
                if !ok {
                    return Ok(ConvergenceReport::from_state(&state, Verdict::Inconclusive));
                }
                verdict
            }
            QuadratureMode::Qmc { points } => {
                let (inc, proxy) = qmc_shell_integral(
                    backend,
                    &outer,
                    Some(&prev),
                    measure,
                    field,
                    points,
                    opts.seed,
                )?;
                match state.push_shell(inc) {
                    Some(Verdict::Converged)
                        if proxy
                            > opts.protocol.rel_tol
                                * state.total().abs().max(f64::MIN_POSITIVE) =>
                    {
                        None
                    }
                    other => other,
                }
            }
        };
        if let Some(v) = verdict {
            return Ok(ConvergenceReport::from_state(&state, v));
        }
        prev = outer;
    }
    Ok(ConvergenceReport::from_state(&state, Verdict::Inconclusive))
}
