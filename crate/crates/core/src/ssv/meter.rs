use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use super::{ssv_distance, DistanceResult, SsvPrimitive};

/// Counts distance queries and the wall time spent in them.
///
/// Safe to share between workers; counters are relaxed atomics because only
/// the totals read after a join point matter.
#[derive(Debug, Default)]
pub struct DistanceMeter {
    calls: AtomicU64,
    pairs: AtomicU64,
    nanos: AtomicU64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MeterReading {
    /// Metered queries (clearance evaluations and explicit pair distances).
    pub calls: u64,
    /// Primitive pair distances evaluated inside those queries.
    pub pairs: u64,
    pub seconds: f64,
}

impl DistanceMeter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn reset(&self) {
        self.calls.store(0, Ordering::Relaxed);
        self.pairs.store(0, Ordering::Relaxed);
        self.nanos.store(0, Ordering::Relaxed);
    }

    pub fn reading(&self) -> MeterReading {
        MeterReading {
            calls: self.calls.load(Ordering::Relaxed),
            pairs: self.pairs.load(Ordering::Relaxed),
            seconds: self.nanos.load(Ordering::Relaxed) as f64 * 1e-9,
        }
    }

    pub(crate) fn record(&self, pairs: u64, elapsed: Duration) {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.pairs.fetch_add(pairs, Ordering::Relaxed);
        self.nanos.fetch_add(elapsed.as_nanos() as u64, Ordering::Relaxed);
    }

    /// Adds another meter's totals into this one.
    pub fn absorb(&self, other: &MeterReading) {
        self.calls.fetch_add(other.calls, Ordering::Relaxed);
        self.pairs.fetch_add(other.pairs, Ordering::Relaxed);
        self.nanos.fetch_add((other.seconds * 1e9).round() as u64, Ordering::Relaxed);
    }

    /// Metered [`ssv_distance`].
    pub fn ssv_distance(&self, a: &SsvPrimitive, b: &SsvPrimitive) -> DistanceResult {
        let start = Instant::now();
        let r = ssv_distance(a, b);
        self.record(1, start.elapsed());
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    #[test]
    fn counts_explicit_calls_and_resets() {
        let m = DistanceMeter::new();
        assert_eq!(m.reading(), MeterReading::default());
        let a = SsvPrimitive::sphere(Vector3::zeros(), 0.1);
        let b = SsvPrimitive::sphere(Vector3::x(), 0.1);
        for _ in 0..7 {
            m.ssv_distance(&a, &b);
        }
        assert_eq!(m.reading().calls, 7);
        m.reset();
        let r = m.reading();
        assert_eq!((r.calls, r.seconds), (0, 0.0));
    }
}
