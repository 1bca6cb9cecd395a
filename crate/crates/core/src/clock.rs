//! Time sources.
//!
//! Event timestamps come from the host-wide monotonic clock so that send and
//! receive stamps taken in different processes on one machine can be
//! subtracted. Artifact timestamps (`produced_at`, `registered_at`) are
//! wall-clock Unix milliseconds.

use std::time::{SystemTime, UNIX_EPOCH};

/// Milliseconds on the host-wide monotonic clock.
#[cfg(unix)]
pub fn monotonic_ms() -> u64 {
    let mut ts = libc::timespec {
        tv_sec: 0,
        tv_nsec: 0,
    };
    // SAFETY: `ts` is a valid, writable timespec.
    let rc = unsafe { libc::clock_gettime(libc::CLOCK_MONOTONIC, &mut ts) };
    assert_eq!(rc, 0, "CLOCK_MONOTONIC unavailable");
    ts.tv_sec as u64 * 1000 + ts.tv_nsec as u64 / 1_000_000
}

#[cfg(not(unix))]
pub fn monotonic_ms() -> u64 {
    wall_ms()
}

/// Milliseconds since the Unix epoch.
pub fn wall_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}
