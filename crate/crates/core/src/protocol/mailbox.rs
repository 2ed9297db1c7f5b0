//! Single-slot latest-wins buffer for the control and haptic streams.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

#[derive(Debug)]
struct Slot<T> {
    value: Option<T>,
    stamp: u64,
    dropped: u64,
    closed: bool,
}

/// A put overwrites any unread value; overwritten values are counted as
/// dropped. Safe for many producers and one consumer.
#[derive(Debug)]
pub struct LatestWins<T> {
    slot: Mutex<Slot<T>>,
    ready: Condvar,
}

impl<T> Default for LatestWins<T> {
    fn default() -> Self {
        LatestWins {
            slot: Mutex::new(Slot {
                value: None,
                stamp: 0,
                dropped: 0,
                closed: false,
            }),
            ready: Condvar::new(),
        }
    }
}

impl<T> LatestWins<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stores `value` and returns its put stamp (1-based, global across
    /// producers, strictly increasing in lock order).
    pub fn put(&self, value: T) -> u64 {
        let mut s = self.slot.lock().unwrap();
        if s.value.replace(value).is_some() {
            s.dropped += 1;
        }
        s.stamp += 1;
        self.ready.notify_one();
        s.stamp
    }

    pub fn take(&self) -> Option<T> {
        self.slot.lock().unwrap().value.take()
    }

    /// Like `take`, also returning the stamp of the value.
    pub fn take_stamped(&self) -> Option<(T, u64)> {
        let mut s = self.slot.lock().unwrap();
        let stamp = s.stamp;
        s.value.take().map(|v| (v, stamp))
    }

    /// Blocks until a value is available, the mailbox is closed, or the
    /// timeout expires.
    pub fn take_timeout(&self, timeout: Duration) -> Option<T> {
        let s = self.slot.lock().unwrap();
        let (mut s, _) = self
            .ready
            .wait_timeout_while(s, timeout, |s| s.value.is_none() && !s.closed)
            .unwrap();
        s.value.take()
    }

    pub fn close(&self) {
        self.slot.lock().unwrap().closed = true;
        self.ready.notify_all();
    }

    pub fn is_closed(&self) -> bool {
        self.slot.lock().unwrap().closed
    }

    pub fn dropped(&self) -> u64 {
        self.slot.lock().unwrap().dropped
    }

    pub fn puts(&self) -> u64 {
        self.slot.lock().unwrap().stamp
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;
    use std::thread;

    #[test]
    fn later_put_wins() {
        let m = LatestWins::new();
        m.put("a");
        m.put("b");
        assert_eq!(m.take(), Some("b"));
        assert_eq!(m.dropped(), 1);
        assert_eq!(m.take(), None);
    }

    #[test]
    fn empty_take() {
        let m: LatestWins<u32> = LatestWins::new();
        assert_eq!(m.take(), None);
        assert_eq!(m.take_timeout(Duration::from_millis(5)), None);
    }

    #[test]
    fn close_wakes_waiter() {
        let m: Arc<LatestWins<u32>> = Arc::new(LatestWins::new());
        let m2 = Arc::clone(&m);
        let h = thread::spawn(move || m2.take_timeout(Duration::from_secs(10)));
        thread::sleep(Duration::from_millis(20));
        m.close();
        assert_eq!(h.join().unwrap(), None);
    }

    #[test]
    fn many_producers_take_is_latest() {
        // Each value carries the stamp the mailbox assigned it; the consumer
        // must never see a stamp older than one it already saw, and each take
        // returns the stamp that was current at take time.
        let m: Arc<LatestWins<(usize, u64)>> = Arc::new(LatestWins::new());
        let producers: Vec<_> = (0..4)
            .map(|p| {
                let m = Arc::clone(&m);
                thread::spawn(move || {
                    for i in 0..20_000u64 {
                        m.put((p, i));
                    }
                })
            })
            .collect();
        let mut last = 0;
        let mut taken = 0u64;
        let mut per_producer = [None::<u64>; 4];
        while producers.iter().any(|h| !h.is_finished()) || m.puts() < 80_000 {
            if let Some(((p, i), stamp)) = m.take_stamped() {
                assert!(stamp > last, "stamp went backwards");
                if let Some(prev) = per_producer[p] {
                    assert!(i > prev);
                }
                per_producer[p] = Some(i);
                last = stamp;
                taken += 1;
            }
        }
        for h in producers {
            h.join().unwrap();
        }
        if m.take().is_some() {
            taken += 1;
        }
        assert_eq!(m.puts(), 80_000);
        assert_eq!(taken + m.dropped(), 80_000);
    }
}
