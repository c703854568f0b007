//! Adaptive tensor-product quadrature on rectangles.
//!
//! Each cell carries an 8x8 Gauss-Legendre value and the sum of the same
//! rule over its four quadrants; the difference is the local error
//! estimate. Cells live in a max-heap keyed by that estimate, worst cell
//! split first, until the summed estimate meets the tolerance or the cell
//! budget runs out. Heap ties are broken by insertion order, so a given
//! integrand always refines in the same sequence.
//!
//! Integrands are expected to be finite on the closed rectangle; callers
//! integrating through a coordinate singularity must substitute it away
//! first (the domain routines use logarithmic variables for exactly that
//! reason).

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::num::gauss::gauss_legendre;

const POINTS_PER_AXIS: usize = 8;

/// Outcome of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: f64,
    /// Sum of per-cell error estimates at termination.
    pub error_estimate: f64,
    /// Number of cell refinements performed.
    pub cells: usize,
    /// False when the refinement budget stopped the iteration first.
    pub converged: bool,
}

struct Cell {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    /// 8x8 values over the four quadrants of this cell.
    quadrant_values: [f64; 4],
    fine: f64,
    error: f64,
    seq: u64,
}

impl PartialEq for Cell {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error && self.seq == other.seq
    }
}
impl Eq for Cell {}
impl PartialOrd for Cell {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Cell {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error
            .total_cmp(&other.error)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Integrates `f` over `[x0, x1] x [y0, y1]` to the requested tolerance.
///
/// The iteration stops once the summed error estimate drops below
/// `max(tol_abs, tol_rel * |value|)`. `QuadResult::converged` reports
/// whether that happened within `max_cells` refinements; the best value so
/// far is returned either way.
pub fn adaptive_rectangle<F>(
    f: F,
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    tol_rel: f64,
    tol_abs: f64,
    max_cells: usize,
) -> Result<QuadResult>
where
    F: Fn(f64, f64) -> f64,
{
    if !(x0 < x1 && y0 < y1) {
        return Err(Error::InvalidArgument(format!(
            "degenerate rectangle [{x0}, {x1}] x [{y0}, {y1}]"
        )));
    }
    let rule = gauss_legendre(POINTS_PER_AXIS);

    let panel = |ax0: f64, ax1: f64, ay0: f64, ay1: f64| -> f64 {
        let hx = 0.5 * (ax1 - ax0);
        let mx = 0.5 * (ax0 + ax1);
        let hy = 0.5 * (ay1 - ay0);
        let my = 0.5 * (ay0 + ay1);
        let mut acc = 0.0;
        for (xi, wx) in rule.nodes.iter().zip(&rule.weights) {
            let x = mx + hx * xi;
            let mut row = 0.0;
            for (yi, wy) in rule.nodes.iter().zip(&rule.weights) {
                row += wy * f(x, my + hy * yi);
            }
            acc += wx * row;
        }
        acc * hx * hy
    };

    let quadrants = |cx0: f64, cx1: f64, cy0: f64, cy1: f64| -> [f64; 4] {
        let mx = 0.5 * (cx0 + cx1);
        let my = 0.5 * (cy0 + cy1);
        [
            panel(cx0, mx, cy0, my),
            panel(mx, cx1, cy0, my),
            panel(cx0, mx, my, cy1),
            panel(mx, cx1, my, cy1),
        ]
    };

    let mut seq: u64 = 0;
    let make_cell = |cx0: f64,
                     cx1: f64,
                     cy0: f64,
                     cy1: f64,
                     coarse: f64,
                     seq: u64|
     -> Result<Cell> {
        let qv = quadrants(cx0, cx1, cy0, cy1);
        let fine: f64 = qv.iter().sum();
        if !fine.is_finite() {
            return Err(Error::Numerical(format!(
                "integrand non-finite on [{cx0}, {cx1}] x [{cy0}, {cy1}]"
            )));
        }
        Ok(Cell {
            x0: cx0,
            x1: cx1,
            y0: cy0,
            y1: cy1,
            quadrant_values: qv,
            fine,
            error: (fine - coarse).abs(),
            seq,
        })
    };

    let root_coarse = panel(x0, x1, y0, y1);
    if !root_coarse.is_finite() {
        return Err(Error::Numerical("integrand non-finite on root cell".into()));
    }
    let root = make_cell(x0, x1, y0, y1, root_coarse, seq)?;
    seq += 1;

    let mut total = root.fine;
    let mut err_sum = root.error;
    let mut heap = BinaryHeap::new();
    heap.push(root);

    let mut refinements = 0usize;
    while err_sum > tol_abs.max(tol_rel * total.abs()) {
        if refinements >= max_cells {
            return Ok(QuadResult {
                value: total,
                error_estimate: err_sum,
                cells: refinements,
                converged: false,
            });
        }
        let cell = match heap.pop() {
            Some(c) => c,
            None => break,
        };
        total -= cell.fine;
        err_sum = (err_sum - cell.error).max(0.0);
        let mx = 0.5 * (cell.x0 + cell.x1);
        let my = 0.5 * (cell.y0 + cell.y1);
        let bounds = [
            (cell.x0, mx, cell.y0, my),
            (mx, cell.x1, cell.y0, my),
            (cell.x0, mx, my, cell.y1),
            (mx, cell.x1, my, cell.y1),
        ];
        for (k, &(cx0, cx1, cy0, cy1)) in bounds.iter().enumerate() {
            let child = make_cell(cx0, cx1, cy0, cy1, cell.quadrant_values[k], seq)?;
            seq += 1;
            total += child.fine;
            err_sum += child.error;
            heap.push(child);
        }
        refinements += 1;
    }

    Ok(QuadResult {
        value: total,
        error_estimate: err_sum,
        cells: refinements,
        converged: true,
    })
}

/// Single-panel tensor Gauss-Legendre rule, `nx` by `ny` points.
///
/// For integrands known to be analytic on the panel (ball integrals in
/// polar coordinates, say) a fixed rule is cheaper than adaptivity.
pub fn tensor_rectangle<F>(f: F, x0: f64, x1: f64, y0: f64, y1: f64, nx: usize, ny: usize) -> f64
where
    F: Fn(f64, f64) -> f64,
{
    let rx = gauss_legendre(nx);
    let ry = gauss_legendre(ny);
    let hx = 0.5 * (x1 - x0);
    let mx = 0.5 * (x0 + x1);
    let hy = 0.5 * (y1 - y0);
    let my = 0.5 * (y0 + y1);
    let mut acc = 0.0;
    for (xi, wx) in rx.nodes.iter().zip(&rx.weights) {
        let x = mx + hx * xi;
        let mut row = 0.0;
        for (yi, wy) in ry.nodes.iter().zip(&ry.weights) {
            row += wy * f(x, my + hy * yi);
        }
        acc += wx * row;
    }
    acc * hx * hy
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn integrates_separable_polynomial_exactly() {
        let r = adaptive_rectangle(|x, y| x * x * y, 0.0, 1.0, 0.0, 2.0, 1e-12, 0.0, 100)
            .unwrap();
        assert_relative_eq!(r.value, (1.0 / 3.0) * 2.0, epsilon = 1e-12);
        assert!(r.converged);
    }

    #[test]
    fn refines_a_sharp_ridge() {
        // f has a narrow Lorentzian ridge along x = 0.3; the exact integral
        // over y in [0,1] of the x-integral is available in closed form.
        let eps = 1e-2;
        let f = |x: f64, y: f64| eps / ((x - 0.3) * (x - 0.3) + eps * eps) * (1.0 + y);
        let r = adaptive_rectangle(f, 0.0, 1.0, 0.0, 1.0, 1e-10, 0.0, 50_000).unwrap();
        let exact_x = ((1.0 - 0.3) / eps).atan() + (0.3 / eps).atan();
        assert_relative_eq!(r.value, exact_x * 1.5, max_relative = 1e-9);
        assert!(r.converged);
        assert!(r.cells > 4, "ridge should force refinement, got {} cells", r.cells);
    }

    #[test]
    fn budget_exhaustion_is_reported_not_fatal() {
        let f = |x: f64, y: f64| 1.0 / ((x * x + y * y).sqrt() + 1e-6);
        let r = adaptive_rectangle(f, 0.0, 1.0, 0.0, 1.0, 1e-14, 0.0, 8).unwrap();
        assert!(!r.converged);
        assert!(r.value.is_finite());
    }

    #[test]
    fn rejects_degenerate_rectangles() {
        assert!(adaptive_rectangle(|_, _| 1.0, 1.0, 1.0, 0.0, 1.0, 1e-6, 0.0, 10).is_err());
    }

    #[test]
    fn tensor_panel_matches_adaptive_on_smooth_integrand() {
        let f = |x: f64, y: f64| (x + 2.0 * y).exp();
        let fixed = tensor_rectangle(f, 0.0, 1.0, 0.0, 1.0, 24, 24);
        let adaptive = adaptive_rectangle(f, 0.0, 1.0, 0.0, 1.0, 1e-12, 0.0, 1000)
            .unwrap()
            .value;
        assert_relative_eq!(fixed, adaptive, epsilon = 1e-11);
    }
}
