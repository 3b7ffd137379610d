use std::fmt;

/// Tally of one inequality evaluated at many points.
///
/// Each evaluation contributes a slack `rhs - lhs`; it is a violation when
/// the slack falls below `-tolerance` for that evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckReport {
    pub statement: String,
    pub checked: usize,
    pub violations: usize,
    /// Smallest slack seen (`+inf` if nothing was checked).
    pub worst_slack: f64,
    /// Location of the smallest slack.
    pub worst_at: Option<CheckPoint>,
    pub first_violation: Option<CheckPoint>,
}

/// Where a check was evaluated: iteration `k`, plus a restart index `i` for
/// restart-based bounds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CheckPoint {
    pub k: usize,
    pub i: Option<usize>,
    pub slack: f64,
}

impl CheckReport {
    pub fn new(statement: impl Into<String>) -> Self {
        Self {
            statement: statement.into(),
            checked: 0,
            violations: 0,
            worst_slack: f64::INFINITY,
            worst_at: None,
            first_violation: None,
        }
    }

    pub fn record(&mut self, k: usize, i: Option<usize>, slack: f64, tolerance: f64) {
        self.checked += 1;
        let at = CheckPoint { k, i, slack };
        if slack < self.worst_slack || slack.is_nan() {
            self.worst_slack = slack;
            self.worst_at = Some(at);
        }
        // NaN slacks count as violations
        if !(slack >= -tolerance) {
            self.violations += 1;
            if self.first_violation.is_none() {
                self.first_violation = Some(at);
            }
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }

    pub fn merge(&mut self, other: &CheckReport) {
        self.checked += other.checked;
        self.violations += other.violations;
        if other.worst_slack < self.worst_slack {
            self.worst_slack = other.worst_slack;
            self.worst_at = other.worst_at;
        }
        if self.first_violation.is_none() {
            self.first_violation = other.first_violation;
        }
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {} ({} checked, {} violations, worst slack {:e})",
            self.statement,
            if self.passed() { "pass" } else { "FAIL" },
            self.checked,
            self.violations,
            self.worst_slack
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn records_worst_and_first_violation() {
        let mut r = CheckReport::new("a <= b");
        r.record(0, None, 1.0, 0.0);
        r.record(1, None, -1e-12, 1e-9);
        assert!(r.passed());
        r.record(2, Some(0), -1.0, 1e-9);
        r.record(3, None, -0.5, 1e-9);
        assert_eq!(r.violations, 2);
        assert_eq!(r.first_violation.unwrap().k, 2);
        assert_eq!(r.worst_slack, -1.0);
        r.record(4, None, f64::NAN, 1.0);
        assert_eq!(r.violations, 3);
        assert!(r.to_string().contains("FAIL"));
    }
}
