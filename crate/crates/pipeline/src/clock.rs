use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use crate::anonymizer::{frame_index, FrameIndex};

/// Source of wall-clock time. Components never read the system clock directly.
pub trait Clock: Send + Sync {
    fn now_millis(&self) -> u64;

    fn now_seconds(&self) -> u64 {
        self.now_millis() / 1000
    }

    fn current_frame(&self) -> FrameIndex {
        frame_index(self.now_seconds())
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_millis(&self) -> u64 {
        SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
    }
}

/// Clock moved by hand; shared between components in tests and simulations.
#[derive(Debug, Default)]
pub struct ManualClock {
    millis: AtomicU64,
}

impl ManualClock {
    pub fn new(millis: u64) -> Self {
        Self { millis: AtomicU64::new(millis) }
    }

    pub fn at_seconds(seconds: u64) -> Self {
        Self::new(seconds * 1000)
    }

    pub fn set_millis(&self, millis: u64) {
        self.millis.store(millis, Ordering::SeqCst);
    }

    pub fn advance_millis(&self, delta: u64) {
        self.millis.fetch_add(delta, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now_millis(&self) -> u64 {
        self.millis.load(Ordering::SeqCst)
    }
}

/// Another clock shifted by a fixed offset, modelling residual sync error.
pub struct OffsetClock {
    inner: Arc<dyn Clock>,
    offset_millis: i64,
}

impl OffsetClock {
    pub fn new(inner: Arc<dyn Clock>, offset_millis: i64) -> Self {
        Self { inner, offset_millis }
    }
}

impl Clock for OffsetClock {
    fn now_millis(&self) -> u64 {
        self.inner.now_millis().saturating_add_signed(self.offset_millis)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manual_and_offset() {
        let base = Arc::new(ManualClock::at_seconds(119));
        let ahead = OffsetClock::new(base.clone(), 1_000);
        assert_eq!(base.current_frame(), FrameIndex(1));
        assert_eq!(ahead.current_frame(), FrameIndex(2));
        base.advance_millis(500);
        assert_eq!(base.now_millis(), 119_500);
        let behind = OffsetClock::new(base.clone(), -200_000);
        assert_eq!(behind.now_millis(), 0);
    }
}
