//! Deterministic summation helpers.
//!
//! Parallel reductions must not depend on thread scheduling, so the rayon
//! loops in this crate collect per-chunk partial sums in index order and
//! fold them sequentially with compensation. Scalar accumulations use the
//! Neumaier variant of Kahan summation.

/// Compensated accumulator (Neumaier's improved Kahan summation).
#[derive(Debug, Clone, Copy, Default)]
pub struct Accumulator {
    sum: f64,
    compensation: f64,
}

impl Accumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Sums a slice with compensation; the result does not depend on chunking.
pub fn compensated_sum(values: &[f64]) -> f64 {
    let mut acc = Accumulator::new();
    for &v in values {
        acc.add(v);
    }
    acc.total()
}

/// Sums `f(i)` for `i` in `0..n` deterministically, in parallel.
///
/// The index range is split into fixed-size chunks; each chunk is summed
/// with compensation on whatever thread picks it up, and the per-chunk
/// totals are folded in chunk order. Identical input therefore yields a
/// bitwise identical sum regardless of thread count.
pub fn parallel_sum_by<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    use rayon::prelude::*;
    const CHUNK: usize = 1024;
    if n == 0 {
        return 0.0;
    }
    let chunks = n.div_ceil(CHUNK);
    let partials: Vec<f64> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(n);
            let mut acc = Accumulator::new();
            for i in lo..hi {
                acc.add(f(i));
            }
            acc.total()
        })
        .collect();
    compensated_sum(&partials)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_handles_cancellation() {
        // 1 + 1e16 - 1e16 loses the 1 in naive left-to-right addition.
        let values = [1.0, 1e16, -1e16];
        assert_eq!(compensated_sum(&values), 1.0);
    }

    #[test]
    fn parallel_sum_agrees_with_sequential_compensated_sum() {
        let n = 10_000;
        let values: Vec<f64> = (0..n).map(|i| ((i as f64) * 0.37).sin() / (i as f64 + 1.0)).collect();
        let seq = compensated_sum(&values);
        let par = parallel_sum_by(n, |i| values[i]);
        // Chunked folding reorders roundoff, so only near-equality is
        // guaranteed against the single-pass sum.
        assert!((seq - par).abs() <= 1e-12 * seq.abs().max(1.0));
    }

    #[test]
    fn parallel_sum_matches_identically_chunked_serial_fold() {
        let n = 10_000;
        let values: Vec<f64> = (0..n).map(|i| ((i as f64) * 0.73).cos() * 1e-3).collect();
        let par = parallel_sum_by(n, |i| values[i]);
        let mut partials = Vec::new();
        for chunk in values.chunks(1024) {
            partials.push(compensated_sum(chunk));
        }
        let serial = compensated_sum(&partials);
        assert_eq!(serial.to_bits(), par.to_bits());
    }

    #[test]
    fn parallel_sum_is_stable_across_repeat_runs() {
        let results: Vec<f64> = (0..4)
            .map(|_| parallel_sum_by(50_000, |i| 1.0 / (1.0 + i as f64).powi(2)))
            .collect();
        for r in &results[1..] {
            assert_eq!(r.to_bits(), results[0].to_bits());
        }
    }
}
