use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Indeterminate,
}

impl Status {
    pub fn label(self) -> &'static str {
        match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Indeterminate => "INDETERMINATE",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub name: String,
    pub status: Status,
    /// Attained value against the threshold, or the reason for the status.
    pub detail: String,
}

/// Metrics, verdicts and provenance of one run, in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub metrics: Vec<(String, f64)>,
    pub verdicts: Vec<Verdict>,
    pub provenance: Vec<(String, String)>,
}

impl Report {
    pub fn metric(&mut self, name: impl Into<String>, value: f64) {
        self.metrics.push((name.into(), value));
    }

    pub fn verdict(&mut self, name: impl Into<String>, status: Status, detail: impl Into<String>) {
        self.verdicts.push(Verdict {
            name: name.into(),
            status,
            detail: detail.into(),
        });
    }

    /// PASS when `attained <= threshold`.
    pub fn at_most(&mut self, name: &str, attained: f64, threshold: f64) {
        let status = if attained <= threshold {
            Status::Pass
        } else {
            Status::Fail
        };
        self.verdict(
            name,
            status,
            format!("attained {attained:.6e}, threshold <= {threshold:.6e}"),
        );
    }

    /// PASS when `attained >= threshold`.
    pub fn at_least(&mut self, name: &str, attained: f64, threshold: f64) {
        let status = if attained >= threshold {
            Status::Pass
        } else {
            Status::Fail
        };
        self.verdict(
            name,
            status,
            format!("attained {attained:.6e}, threshold >= {threshold:.6e}"),
        );
    }

    /// PASS when `attained` lies in `[lo, hi]`.
    pub fn within(&mut self, name: &str, attained: f64, lo: f64, hi: f64) {
        let status = if (lo..=hi).contains(&attained) {
            Status::Pass
        } else {
            Status::Fail
        };
        self.verdict(
            name,
            status,
            format!("attained {attained:.6}, threshold in [{lo}, {hi}]"),
        );
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.metrics
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
    }

    pub fn status(&self, name: &str) -> Option<Status> {
        self.verdicts
            .iter()
            .find(|v| v.name == name)
            .map(|v| v.status)
    }

    pub fn failed(&self) -> bool {
        self.verdicts.iter().any(|v| v.status == Status::Fail)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str("[metrics]\n");
        for (name, value) in &self.metrics {
            let _ = writeln!(out, "{name} = {}", format_metric(*value));
        }
        out.push_str("\n[verdicts]\n");
        for v in &self.verdicts {
            let _ = writeln!(out, "{} = {} ; {}", v.name, v.status.label(), v.detail);
        }
        out.push_str("\n[provenance]\n");
        for (k, v) in &self.provenance {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

/// 17 significant digits, round-trip exact.
pub fn format_metric(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metrics_roundtrip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02e23] {
            assert_eq!(format_metric(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(format_metric(f64::NAN), "NaN");
    }

    #[test]
    fn fail_carries_threshold() {
        let mut r = Report::default();
        r.at_most("gap", 2.0, 1.0);
        r.at_least("margin", 5.0, 1.0);
        assert!(r.failed());
        assert_eq!(r.status("margin"), Some(Status::Pass));
        let text = r.render();
        assert!(
            text.contains("gap = FAIL ; attained 2.000000e0, threshold <= 1.000000e0"),
            "{text}"
        );
    }
}
