//! Wall clock that is inert on wasm32, where `Instant` is unavailable.

#[cfg(not(target_arch = "wasm32"))]
use std::time::Instant;

pub(crate) struct Clock {
    #[cfg(not(target_arch = "wasm32"))]
    start: Instant,
    limit: Option<f64>,
}

impl Clock {
    /// `limit` in seconds; non-positive or non-finite values mean no limit.
    pub(crate) fn new(limit: Option<f64>) -> Self {
        Self {
            #[cfg(not(target_arch = "wasm32"))]
            start: Instant::now(),
            limit: limit.filter(|s| s.is_finite() && *s > 0.0),
        }
    }

    pub(crate) fn elapsed(&self) -> f64 {
        #[cfg(not(target_arch = "wasm32"))]
        {
            self.start.elapsed().as_secs_f64()
        }
        #[cfg(target_arch = "wasm32")]
        {
            0.0
        }
    }

    pub(crate) fn expired(&self) -> bool {
        self.limit.is_some_and(|l| self.elapsed() >= l)
    }

    /// Seconds left, `None` without a limit.
    pub(crate) fn remaining(&self) -> Option<f64> {
        self.limit.map(|l| (l - self.elapsed()).max(1e-3))
    }
}
