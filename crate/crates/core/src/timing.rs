//! Process CPU time.
//!
//! Reads `CLOCK_PROCESS_CPUTIME_ID`, which sums the CPU time of every thread
//! in the process. Time spent sleeping or blocked is not counted. The clock
//! resolution is reported by [`resolution_seconds`] (1 ns on Linux).

/// CPU seconds consumed by the whole process so far.
pub fn cpu_seconds() -> f64 {
    let mut ts = libc::timespec { tv_sec: 0, tv_nsec: 0 };
    // SAFETY: `ts` is a valid, writable timespec.
    let rc = unsafe { libc::clock_gettime(libc::CLOCK_PROCESS_CPUTIME_ID, &mut ts) };
    if rc != 0 {
        return 0.0;
    }
    ts.tv_sec as f64 + ts.tv_nsec as f64 * 1e-9
}

pub fn resolution_seconds() -> f64 {
    let mut ts = libc::timespec { tv_sec: 0, tv_nsec: 0 };
    // SAFETY: as above.
    let rc = unsafe { libc::clock_getres(libc::CLOCK_PROCESS_CPUTIME_ID, &mut ts) };
    if rc != 0 {
        return f64::NAN;
    }
    ts.tv_sec as f64 + ts.tv_nsec as f64 * 1e-9
}

/// Runs `op` and returns its result with the process CPU seconds it used.
pub fn capture_timing<T>(op: impl FnOnce() -> T) -> (T, f64) {
    let start = cpu_seconds();
    let out = op();
    let elapsed = (cpu_seconds() - start).max(0.0);
    (out, elapsed)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Measurements that other concurrently running tests would disturb live
    // in the `timing` integration test, which runs alone in its process.
    #[test]
    fn clock_is_monotone() {
        let a = cpu_seconds();
        let b = cpu_seconds();
        assert!(b >= a);
        assert!(resolution_seconds() <= 1e-3);
    }
}
