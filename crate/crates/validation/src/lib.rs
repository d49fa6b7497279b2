//! Helpers shared by the acceptance run: preset lookup and verdict lines.

use std::fmt;
use std::path::PathBuf;
use std::time::Duration;

/// Directory holding the shipped scenario presets.
pub fn presets_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../presets")
}

/// Outcome of one acceptance criterion.
#[derive(Debug, Clone)]
pub struct Verdict {
    pub id: &'static str,
    pub pass: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} ({:.1} s) {}",
            self.id,
            if self.pass { "PASS" } else { "FAIL" },
            self.elapsed.as_secs_f64(),
            self.detail
        )
    }
}

/// Relative deviation `|a / b - 1|`.
pub fn rel_dev(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdict_line() {
        let v = Verdict { id: "A0", pass: false, detail: "x=1".into(), elapsed: Duration::from_millis(300) };
        assert_eq!(v.to_string(), "A0 FAIL (0.3 s) x=1");
        assert!((rel_dev(1.1, 1.0) - 0.1).abs() < 1e-12);
        assert!(presets_dir().join("mjd59814.json").exists());
    }
}
