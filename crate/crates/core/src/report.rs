//! Check results, tabular output, and configuration digests.
//!
//! Every verifier check produces a [`CheckReport`]: the measured statistic,
//! the bound it was held against, a pass flag, and enough context (refinement
//! levels, Monte Carlo standard error, free-text notes) to audit a failure
//! without rerunning. Reports serialize to JSON via serde and to flat CSV via
//! [`write_reports_csv`].

use crate::fields::NormEstimate;
use std::io::{self, Write};
use std::time::Instant;

/// Outcome of a single verification check.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CheckReport {
    /// Stable machine-readable check name (kebab-case).
    pub name: String,
    /// The measured quantity — a supremum, a ratio, a fitted slope.
    pub statistic: f64,
    /// The threshold the statistic was compared against.
    pub bound: f64,
    pub passed: bool,
    /// Signed slack: positive means the statistic cleared the bound by that
    /// much, in the statistic's own units.
    pub margin: f64,
    /// Statistic recomputed at successive refinement levels (quadrature or
    /// resolution), coarsest first. Single-level checks leave this empty.
    pub levels: Vec<f64>,
    /// Monte Carlo standard error when the statistic is sampled.
    pub stderr: Option<f64>,
    pub runtime_s: f64,
    pub notes: Vec<String>,
    /// Set when the check could not be brought to a verdict (for instance a
    /// quadrature that failed to converge); `passed` is false but the result
    /// should be read as "needs attention", not "refuted".
    pub inconclusive: bool,
}

impl CheckReport {
    /// Build a report for "statistic must stay below bound".
    pub fn upper(name: &str, statistic: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            statistic,
            bound,
            passed: statistic.is_finite() && statistic <= bound,
            margin: bound - statistic,
            levels: Vec::new(),
            stderr: None,
            runtime_s: 0.0,
            notes: Vec::new(),
            inconclusive: false,
        }
    }

    /// Build a report for "statistic must stay above bound".
    pub fn lower(name: &str, statistic: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            statistic,
            bound,
            passed: statistic.is_finite() && statistic >= bound,
            margin: statistic - bound,
            levels: Vec::new(),
            stderr: None,
            runtime_s: 0.0,
            notes: Vec::new(),
            inconclusive: false,
        }
    }

    /// Build a report for "statistic must land within `target ± half_width`".
    pub fn banded(name: &str, statistic: f64, target: f64, half_width: f64) -> Self {
        let dev = (statistic - target).abs();
        Self {
            name: name.into(),
            statistic,
            bound: target,
            passed: statistic.is_finite() && dev <= half_width,
            margin: half_width - dev,
            levels: Vec::new(),
            stderr: None,
            runtime_s: 0.0,
            notes: Vec::new(),
            inconclusive: false,
        }
    }

    pub fn with_levels(mut self, levels: Vec<f64>) -> Self {
        self.levels = levels;
        self
    }

    /// Attach refinement-level values and enforce the stability invariant: a
    /// passing report must move by less than `rel_tol` (fractionally) between
    /// successive levels.
    pub fn with_levels_checked(mut self, levels: Vec<f64>, rel_tol: f64) -> Self {
        for w in levels.windows(2) {
            let denom = w[0].abs().max(f64::MIN_POSITIVE);
            let change = (w[1] - w[0]).abs() / denom;
            if !(change < rel_tol) {
                self.passed = false;
                self.notes.push(format!(
                    "refinement drift {:.2}% exceeds the {:.0}% stability requirement",
                    change * 100.0,
                    rel_tol * 100.0
                ));
            }
        }
        self.levels = levels;
        self
    }

    pub fn with_stderr(mut self, stderr: f64) -> Self {
        self.stderr = Some(stderr);
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }

    pub fn inconclusive(mut self, why: impl Into<String>) -> Self {
        self.inconclusive = true;
        self.passed = false;
        self.notes.push(why.into());
        self
    }

    /// One-line human summary, the format the acceptance harness prints.
    pub fn summary_line(&self) -> String {
        let verdict = if self.passed {
            "PASS"
        } else if self.inconclusive {
            "INCONCLUSIVE"
        } else {
            "FAIL"
        };
        let se = match self.stderr {
            Some(s) => format!(" se={s:.3e}"),
            None => String::new(),
        };
        format!(
            "{} {}: statistic={:.6e} bound={:.6e} margin={:+.3e}{}",
            verdict, self.name, self.statistic, self.bound, self.margin, se
        )
    }
}

/// Time a closure and stamp its runtime into the produced report.
pub fn timed_check(f: impl FnOnce() -> CheckReport) -> CheckReport {
    let start = Instant::now();
    let mut report = f();
    report.runtime_s = start.elapsed().as_secs_f64();
    report
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Write check reports as CSV: one row per check, levels as a
/// semicolon-joined column.
pub fn write_reports_csv<W: Write>(mut w: W, reports: &[CheckReport]) -> io::Result<()> {
    writeln!(w, "name,passed,inconclusive,statistic,bound,margin,stderr,runtime_s,levels,notes")?;
    for r in reports {
        let levels = r.levels.iter().map(|v| format!("{v:.9e}")).collect::<Vec<_>>().join(";");
        let notes = r.notes.join(" | ");
        writeln!(
            w,
            "{},{},{},{:.9e},{:.9e},{:.9e},{},{:.3},{},{}",
            csv_field(&r.name),
            r.passed,
            r.inconclusive,
            r.statistic,
            r.bound,
            r.margin,
            r.stderr.map(|s| format!("{s:.9e}")).unwrap_or_default(),
            r.runtime_s,
            csv_field(&levels),
            csv_field(&notes),
        )?;
    }
    Ok(())
}

/// One row of a norm table: a named norm with its parameters and estimate.
#[derive(Debug, Clone, serde::Serialize)]
pub struct NormRow {
    pub norm: String,
    pub k: f64,
    pub alpha: f64,
    pub beta: f64,
    pub t_max: f64,
    pub estimate: NormEstimate,
}

/// Write norm rows as CSV: `(norm_name, k, alpha, beta, T, value, stderr)`.
pub fn write_norms_csv<W: Write>(mut w: W, rows: &[NormRow]) -> io::Result<()> {
    writeln!(w, "norm_name,k,alpha,beta,T,value,stderr")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{:.9e},{:.9e}",
            csv_field(&r.norm),
            r.k,
            r.alpha,
            r.beta,
            r.t_max,
            r.estimate.value,
            r.estimate.stderr,
        )?;
    }
    Ok(())
}

/// FNV-1a over a byte string. Used to digest canonicalized configurations so
/// trajectories remember which setup produced them.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_constructors_set_verdicts() {
        let up = CheckReport::upper("a", 0.5, 1.0);
        assert!(up.passed && (up.margin - 0.5).abs() < 1e-15);
        assert!(!CheckReport::upper("a", 2.0, 1.0).passed);
        assert!(!CheckReport::upper("a", f64::NAN, 1.0).passed);

        let low = CheckReport::lower("b", 2.0, 1.0);
        assert!(low.passed && (low.margin - 1.0).abs() < 1e-15);
        assert!(!CheckReport::lower("b", 0.5, 1.0).passed);

        let band = CheckReport::banded("c", -0.9, -1.0, 0.2);
        assert!(band.passed && (band.margin - 0.1).abs() < 1e-12);
        assert!(!CheckReport::banded("c", -0.7, -1.0, 0.2).passed);

        let inc = CheckReport::upper("d", 1.0, 2.0).inconclusive("quadrature did not settle");
        assert!(!inc.passed && inc.inconclusive);
    }

    #[test]
    fn csv_escapes_and_round_trips_fields() {
        let r = CheckReport::upper("bound, with comma", 1.0, 2.0)
            .with_note("says \"quoted\"")
            .with_levels(vec![1.0, 1.5]);
        let mut buf = Vec::new();
        write_reports_csv(&mut buf, &[r]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("\"bound, with comma\""));
        assert!(text.contains("\"says \"\"quoted\"\"\""));
        assert!(text.contains("1.000000000e0;1.500000000e0"));
        assert_eq!(text.lines().count(), 2);
    }

    #[test]
    fn digest_is_stable_and_input_sensitive() {
        // FNV-1a reference value for "a".
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
        assert_ne!(fnv1a(b"config-1"), fnv1a(b"config-2"));
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
    }

    #[test]
    fn refinement_stability_gates_the_verdict() {
        let stable = CheckReport::upper("s", 1.0, 2.0).with_levels_checked(vec![1.0, 1.05], 0.10);
        assert!(stable.passed);
        let drifting = CheckReport::upper("s", 1.0, 2.0).with_levels_checked(vec![1.0, 1.2], 0.10);
        assert!(!drifting.passed);
        assert!(drifting.notes[0].contains("stability"));
    }

    #[test]
    fn summary_line_formats() {
        let line = CheckReport::upper("kernel-mass", 0.63, 1.0).summary_line();
        assert!(line.starts_with("PASS kernel-mass:"));
        let line = CheckReport::upper("x", 2.0, 1.0).inconclusive("why").summary_line();
        assert!(line.starts_with("INCONCLUSIVE"));
    }
}
