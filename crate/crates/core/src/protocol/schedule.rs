//! Tick arithmetic for the fixed-rate streams under a simulated clock.

use super::wire::RateSpec;

// Guards ⌊duration·rate⌋ against products like 10·0.1·... landing just below
// an integer.
const FLOOR_EPS: f64 = 1e-9;

/// Number of ticks in `[0, duration_s]` at `rate_hz`, including t = 0.
pub fn tick_count(rate_hz: f64, duration_s: f64) -> u64 {
    assert!(rate_hz > 0.0 && rate_hz.is_finite(), "rate must be positive");
    if !(duration_s >= 0.0) {
        return 0;
    }
    (duration_s * rate_hz + FLOOR_EPS).floor() as u64 + 1
}

/// Tick timestamps `k / rate_hz` in seconds, for k = 0..=⌊duration·rate⌋.
pub fn tick_schedule(rate_hz: f64, duration_s: f64) -> Vec<f64> {
    (0..tick_count(rate_hz, duration_s))
        .map(|k| k as f64 / rate_hz)
        .collect()
}

/// Timestamp of tick `k` in integer microseconds, rounded down.
pub fn tick_time_us(rate_hz: f64, k: u64) -> u64 {
    (k as f64 * 1e6 / rate_hz + FLOOR_EPS).floor() as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stream {
    Control,
    Haptic,
    Scene,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TickEvent {
    pub stream: Stream,
    /// Tick index within its own stream.
    pub index: u64,
    pub t_us: u64,
}

/// Merges the three fixed-rate streams into one time-ordered sequence of
/// events. Ties are broken control, then haptic, then scene, so a control
/// command issued at time t is applied before feedback stamped t is sampled.
#[derive(Debug, Clone)]
pub struct MultiRateSchedule {
    rates: [f64; 3],
    next: [u64; 3],
    counts: [u64; 3],
}

impl MultiRateSchedule {
    pub fn new(rates: &RateSpec, duration_s: f64) -> Self {
        let rates = [rates.control_hz, rates.haptic_hz, rates.scene_hz];
        MultiRateSchedule {
            rates,
            next: [0; 3],
            counts: rates.map(|r| tick_count(r, duration_s)),
        }
    }

    pub fn total(&self, stream: Stream) -> u64 {
        self.counts[stream as usize]
    }

    fn stream_time(&self, i: usize) -> Option<u64> {
        (self.next[i] < self.counts[i]).then(|| tick_time_us(self.rates[i], self.next[i]))
    }
}

impl Iterator for MultiRateSchedule {
    type Item = TickEvent;

    fn next(&mut self) -> Option<TickEvent> {
        let (i, t_us) = (0..3)
            .filter_map(|i| self.stream_time(i).map(|t| (i, t)))
            .min_by_key(|&(i, t)| (t, i))?;
        let index = self.next[i];
        self.next[i] += 1;
        let stream = [Stream::Control, Stream::Haptic, Stream::Scene][i];
        Some(TickEvent { stream, index, t_us })
    }
}
