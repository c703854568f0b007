//! Low-discrepancy sampling: Halton sequences with a seeded
//! Cranley-Patterson shift.
//!
//! Six-dimensional integrals over the rank-two tube domain are evaluated by
//! quasi-Monte Carlo. A radical-inverse Halton point set in the first `d`
//! prime bases gives the low discrepancy; adding a uniform shift modulo one
//! (drawn once from a seeded generator) removes the deterministic bias of
//! the unshifted sequence while keeping runs reproducible for a fixed seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PRIMES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

/// Shifted Halton sequence in `[0, 1)^d`.
#[derive(Debug, Clone)]
pub struct HaltonSequence {
    dim: usize,
    shift: Vec<f64>,
    next_index: u64,
}

impl HaltonSequence {
    /// Creates a `dim`-dimensional sequence (`dim <= 8`) whose shift is
    /// derived from `seed`. The same seed always produces the same stream.
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(
            (1..=PRIMES.len()).contains(&dim),
            "halton dimension must be between 1 and {}",
            PRIMES.len()
        );
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shift = (0..dim).map(|_| rng.gen::<f64>()).collect();
        Self { dim, shift, next_index: 1 }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Writes the next point into `out` (length `dim`).
    pub fn fill_next(&mut self, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim);
        let idx = self.next_index;
        self.next_index += 1;
        for (d, slot) in out.iter_mut().enumerate() {
            let u = radical_inverse(idx, PRIMES[d]) + self.shift[d];
            *slot = u - u.floor();
        }
    }

    /// Returns the next point as a vector.
    pub fn next_point(&mut self) -> Vec<f64> {
        let mut p = vec![0.0; self.dim];
        self.fill_next(&mut p);
        p
    }
}

/// Van der Corput radical inverse of `index` in base `base`.
fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv_base = 1.0 / base as f64;
    let mut factor = inv_base;
    let mut value = 0.0;
    while index > 0 {
        value += (index % base) as f64 * factor;
        index /= base;
        factor *= inv_base;
    }
    value
}
