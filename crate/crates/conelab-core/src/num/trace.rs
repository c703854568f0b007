//! Region-doubling protocol for integrals over the full tube domain.
//!
//! Integrals against the invariant measure are evaluated on an exhausting
//! sequence of truncation regions. Each step integrates only the newly
//! added shell, so the partial sums are monotone for nonnegative
//! integrands and the increments go to zero exactly when the integral is
//! finite. The classifier below turns an increment stream into a verdict:
//!
//! * converged: the latest increment fell below a relative threshold;
//! * diverging: three successive increments each kept at least
//!   `ratio_floor` of the previous one, the signature of power-law or
//!   logarithmic growth;
//! * inconclusive: the step budget ran out before either trigger.
//!
//! The verdict depends only on the prefix of the increment stream up to
//! the first trigger, so enlarging the step budget can never flip a
//! converged or diverging answer, only resolve an inconclusive one.

use serde::Serialize;

/// Outcome of a doubling run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Converged,
    Diverging,
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Verdict::Converged => "converged",
            Verdict::Diverging => "diverging",
            Verdict::Inconclusive => "inconclusive",
        };
        f.write_str(s)
    }
}

/// Thresholds of the doubling protocol.
#[derive(Debug, Clone, Copy)]
pub struct DoublingProtocol {
    /// Converged once `increment / total` drops below this.
    pub rel_tol: f64,
    /// Diverging once three successive increment ratios stay at or above
    /// this floor.
    pub ratio_floor: f64,
    /// Maximum number of doubling steps after the base region.
    pub max_steps: usize,
}

impl Default for DoublingProtocol {
    /// The floor is set high (0.95) because genuinely divergent tails have
    /// increment ratios at or above 1, while convergent integrals near a
    /// cut-off can decay as slowly as 2^(-0.2) per doubling; a lower floor
    /// would misread those as power-law growth. The matching cost is the
    /// step budget: a ratio-0.9 tail needs about 35 doublings to pass the
    /// 0.1% gate.
    fn default() -> Self {
        Self { rel_tol: 1e-3, ratio_floor: 0.95, max_steps: 40 }
    }
}

/// Running state fed one shell increment at a time.
#[derive(Debug, Clone)]
pub struct ProtocolState {
    protocol: DoublingProtocol,
    total: f64,
    increments: Vec<f64>,
    /// Count of trailing steps whose ratio to the previous increment
    /// stayed at or above the floor.
    sustained: usize,
}

impl ProtocolState {
    pub fn new(protocol: DoublingProtocol) -> Self {
        Self { protocol, total: 0.0, increments: Vec::new(), sustained: 0 }
    }

    /// Records the base-region value (step zero). Not a doubling step, so
    /// it never produces a verdict by itself.
    pub fn push_base(&mut self, value: f64) {
        debug_assert!(self.increments.is_empty(), "base must come first");
        self.total = value;
        self.increments.push(value);
    }

    /// Records one shell increment. Returns a verdict as soon as the
    /// protocol can decide; `None` means keep doubling.
    pub fn push_shell(&mut self, raw_increment: f64) -> Option<Verdict> {
        // Nonnegative integrands can only produce negative increments
        // through quadrature noise on shells that are essentially zero.
        let increment = raw_increment.max(0.0);
        let previous = *self.increments.last().expect("push_base must run first");
        self.increments.push(increment);
        self.total += increment;

        let scale = self.total.abs();
        let rel = if scale > 0.0 { increment / scale } else { 0.0 };
        if rel < self.protocol.rel_tol {
            return Some(Verdict::Converged);
        }

        if previous > 0.0 && increment >= self.protocol.ratio_floor * previous {
            self.sustained += 1;
        } else {
            self.sustained = 0;
        }
        if self.sustained >= 3 {
            return Some(Verdict::Diverging);
        }

        if self.increments.len() > self.protocol.max_steps {
            return Some(Verdict::Inconclusive);
        }
        None
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    /// Shell increments recorded so far, base value first.
    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// Cumulative totals after each recorded step.
    pub fn running_totals(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.increments.len());
        let mut acc = 0.0;
        for d in &self.increments {
            acc += d;
            out.push(acc);
        }
        out
    }

    pub fn steps(&self) -> usize {
        self.increments.len()
    }
}

/// Report returned by every doubling-protocol integral.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    /// Best value at termination (the full truncated integral).
    pub value: f64,
    /// Cumulative totals after the base region and each doubling.
    pub trace: Vec<f64>,
    /// Individual shell increments, base region first.
    pub increments: Vec<f64>,
    pub verdict: Verdict,
}

impl ConvergenceReport {
    pub fn from_state(state: &ProtocolState, verdict: Verdict) -> Self {
        ConvergenceReport {
            value: state.total(),
            trace: state.running_totals(),
            increments: state.increments().to_vec(),
            verdict,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(base: f64, shells: &[f64], protocol: DoublingProtocol) -> (Verdict, usize) {
        let mut st = ProtocolState::new(protocol);
        st.push_base(base);
        for (k, &d) in shells.iter().enumerate() {
            if let Some(v) = st.push_shell(d) {
                return (v, k + 1);
            }
        }
        (Verdict::Inconclusive, shells.len())
    }

    #[test]
    fn geometric_decay_converges() {
        let shells: Vec<f64> = (1..30).map(|k| 0.5_f64.powi(k)).collect();
        let (v, _) = run(1.0, &shells, DoublingProtocol::default());
        assert_eq!(v, Verdict::Converged);
    }

    #[test]
    fn geometric_growth_diverges_after_three_sustained_steps() {
        let shells: Vec<f64> = (0..20).map(|k| 1.2_f64.powi(k)).collect();
        let (v, steps) = run(1.0, &shells, DoublingProtocol::default());
        assert_eq!(v, Verdict::Diverging);
        assert_eq!(steps, 3);
    }

    #[test]
    fn constant_increments_signal_logarithmic_divergence() {
        let shells = [1.0; 10];
        let (v, _) = run(1.0, &shells, DoublingProtocol::default());
        assert_eq!(v, Verdict::Diverging);
    }

    #[test]
    fn slow_decay_hits_the_budget() {
        let protocol = DoublingProtocol { max_steps: 6, ..Default::default() };
        // Decay slow enough that rel_tol is not reached in six steps, fast
        // enough that ratios stay below the divergence floor.
        let shells: Vec<f64> = (1..20).map(|k| 0.7_f64.powi(k)).collect();
        let (v, _) = run(1.0, &shells, protocol);
        assert_eq!(v, Verdict::Inconclusive);
    }

    #[test]
    fn zero_field_converges_immediately() {
        let (v, steps) = run(0.0, &[0.0, 0.0], DoublingProtocol::default());
        assert_eq!(v, Verdict::Converged);
        assert_eq!(steps, 1);
    }

    #[test]
    fn verdict_is_a_prefix_property() {
        // The same increments with a larger budget must trigger at the
        // same step with the same verdict.
        let shells: Vec<f64> = (1..40).map(|k| 0.5_f64.powi(k)).collect();
        let small = run(1.0, &shells[..10], DoublingProtocol { max_steps: 10, ..Default::default() });
        let large = run(1.0, &shells, DoublingProtocol { max_steps: 39, ..Default::default() });
        assert_eq!(small, large);
    }

    #[test]
    fn negative_noise_on_dead_shells_counts_as_zero() {
        let (v, _) = run(1.0, &[-1e-18, 0.0], DoublingProtocol::default());
        assert_eq!(v, Verdict::Converged);
    }
}
