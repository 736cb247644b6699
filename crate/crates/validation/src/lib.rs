//! Reporting for the acceptance suite in `tests/acceptance.rs`.
//!
//! Each criterion prints one `PASS` or `FAIL` line. The lines go straight to
//! the process stdout so that the test harness does not swallow them on
//! success.

use std::io::Write;

/// Prints `PASS criterion N: summary` (or `FAIL ...`) and returns `pass`.
pub fn report(number: u32, pass: bool, summary: &str) -> bool {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let line = format!("{verdict} criterion {number}: {summary}\n");
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).and_then(|()| out.flush()).expect("stdout is writable");
    pass
}

/// Largest deviation seen so far and where it occurred.
#[derive(Clone, Debug, Default)]
pub struct Worst {
    pub value: f64,
    pub at: String,
}

impl Worst {
    pub fn new() -> Self {
        Self::default()
    }

    /// Keeps `value` if it exceeds the current maximum; NaN always wins.
    pub fn record(&mut self, value: f64, at: impl FnOnce() -> String) {
        if self.value.is_nan() {
            return;
        }
        if value.is_nan() || value > self.value || self.at.is_empty() {
            self.value = value;
            self.at = at();
        }
    }

    pub fn within(&self, tol: f64) -> bool {
        self.value <= tol
    }
}

impl std::fmt::Display for Worst {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.at.is_empty() {
            write!(f, "{:.3e}", self.value)
        } else {
            write!(f, "{:.3e} ({})", self.value, self.at)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worst_keeps_the_maximum() {
        let mut w = Worst::new();
        w.record(1e-12, || "a".into());
        w.record(3e-12, || "b".into());
        w.record(2e-12, || "c".into());
        assert_eq!(w.value, 3e-12);
        assert_eq!(w.at, "b");
        assert!(w.within(3e-12) && !w.within(1e-12));
    }

    #[test]
    fn nan_is_sticky_and_fails() {
        let mut w = Worst::new();
        w.record(f64::NAN, || "bad".into());
        w.record(1.0, || "later".into());
        assert!(w.value.is_nan());
        assert_eq!(w.at, "bad");
        assert!(!w.within(1.0));
    }
}
