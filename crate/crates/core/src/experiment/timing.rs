//! Monotonic wall-clock timing of loop phases.

use std::time::Instant;

/// Run `thunk` and return its result with the elapsed seconds on the
/// monotonic clock. Timings feed the per-round cost report; they are not
/// part of the deterministic outputs.
pub fn time_section<T>(thunk: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = thunk();
    (out, start.elapsed().as_secs_f64())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn passes_the_result_through() {
        let (value, seconds) = time_section(|| 21 * 2);
        assert_eq!(value, 42);
        assert!(seconds >= 0.0);
        assert!(seconds.is_finite());
    }

    #[test]
    fn outer_section_covers_the_inner_one() {
        let (inner_seconds, outer_seconds) = {
            let ((_, inner), outer) = time_section(|| {
                time_section(|| {
                    std::thread::sleep(std::time::Duration::from_millis(5));
                })
            });
            (inner, outer)
        };
        assert!(inner_seconds > 0.0);
        assert!(outer_seconds >= inner_seconds);
    }

    #[test]
    fn errors_propagate_after_recording() {
        let (result, seconds) = time_section(|| -> Result<(), String> { Err("boom".into()) });
        assert!(result.is_err());
        assert!(seconds >= 0.0);
    }
}
