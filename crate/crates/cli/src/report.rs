//! Run reports: a run summary plus one verdict per enabled check.

use std::fmt::Write as _;

use feas_core::{CheckReport, RateConstants, Trace};
use feas_core::regularity::RegularityEstimate;
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

impl Status {
    pub fn label(self) -> &'static str {
        match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skipped => "SKIP",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    /// Which inequality the check instantiates, in words.
    pub inequality: String,
    /// The inequality itself.
    pub statement: String,
    pub status: Status,
    pub checked: usize,
    pub violations: usize,
    /// Smallest `rhs - lhs` seen; absent when nothing was evaluated.
    pub worst_slack: Option<f64>,
    pub worst_k: Option<usize>,
    pub worst_i: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl CheckOutcome {
    pub fn from_report(name: &str, inequality: &str, r: &CheckReport) -> Self {
        let status = if r.checked == 0 {
            Status::Skipped
        } else if r.passed() {
            Status::Pass
        } else {
            Status::Fail
        };
        Self {
            name: name.into(),
            inequality: inequality.into(),
            statement: r.statement.clone(),
            status,
            checked: r.checked,
            violations: r.violations,
            worst_slack: (r.checked > 0).then_some(r.worst_slack),
            worst_k: r.worst_at.map(|p| p.k),
            worst_i: r.worst_at.and_then(|p| p.i),
            detail: (r.checked == 0).then(|| "nothing to evaluate on this trace".to_string()),
        }
    }

    pub fn skipped(name: &str, inequality: &str, statement: &str, why: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            inequality: inequality.into(),
            statement: statement.into(),
            status: Status::Skipped,
            checked: 0,
            violations: 0,
            worst_slack: None,
            worst_k: None,
            worst_i: None,
            detail: Some(why.into()),
        }
    }

    /// A check that could not be evaluated counts as failed.
    pub fn failed(name: &str, inequality: &str, statement: &str, why: impl Into<String>) -> Self {
        Self {
            status: Status::Fail,
            ..Self::skipped(name, inequality, statement, why)
        }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        let d = detail.into();
        self.detail = Some(match self.detail.take() {
            Some(old) => format!("{old}; {d}"),
            None => d,
        });
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub mode: String,
    pub stop_reason: String,
    pub iterations: usize,
    pub rows: usize,
    pub final_residual: f64,
    pub x_final: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi_initial: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi_final: Option<f64>,
}

impl Summary {
    pub fn of(trace: &Trace) -> Self {
        let last = trace.rows.last().expect("traces have a k = 0 row");
        Self {
            mode: trace.mode.name().into(),
            stop_reason: trace.stop_reason.name().into(),
            iterations: trace.iterations,
            rows: trace.rows.len(),
            final_residual: trace.final_residual(),
            x_final: trace.x_final.coords().to_vec(),
            phi_initial: trace.rows[0].phi,
            phi_final: last.phi,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KappaSummary {
    pub kappa_hat: f64,
    /// `kappa_hat / 0.95`, used by every bound.
    pub inflated: f64,
    pub samples: usize,
    pub effective_samples: usize,
    pub region_center: Vec<f64>,
    pub region_radius: f64,
    pub max_ratio_witness: Vec<f64>,
}

impl From<&RegularityEstimate> for KappaSummary {
    fn from(e: &RegularityEstimate) -> Self {
        Self {
            kappa_hat: e.kappa_hat,
            inflated: e.inflated(),
            samples: e.n_samples,
            effective_samples: e.n_effective,
            region_center: e.region.center.coords().to_vec(),
            region_radius: e.region.radius,
            max_ratio_witness: e.max_ratio_witness.coords().to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateSummary {
    pub omega: f64,
    pub m: usize,
    pub s: usize,
    pub kappa: f64,
    pub d0: f64,
    pub q_r: f64,
    pub c_r: f64,
}

impl From<&RateConstants> for RateSummary {
    fn from(rc: &RateConstants) -> Self {
        Self {
            omega: rc.omega,
            m: rc.m,
            s: rc.s,
            kappa: rc.kappa,
            d0: rc.d0,
            q_r: rc.q_r,
            c_r: rc.c_r,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub summary: Summary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<KappaSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate: Option<RateSummary>,
    pub checks: Vec<CheckOutcome>,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != Status::Fail)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    pub fn to_text(&self) -> String {
        let s = &self.summary;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} run: {} after {} iterations, final residual {:e}",
            s.mode, s.stop_reason, s.iterations, s.final_residual
        );
        if let (Some(a), Some(b)) = (s.phi_initial, s.phi_final) {
            let _ = writeln!(out, "phi: {a:e} -> {b:e}");
        }
        if let Some(k) = &self.kappa {
            let _ = writeln!(
                out,
                "kappa_hat {:.6} (inflated {:.6}) from {} samples",
                k.kappa_hat, k.inflated, k.samples
            );
        }
        if let Some(r) = &self.rate {
            let _ = writeln!(out, "rate q_r {:.12} c_r {:e}", r.q_r, r.c_r);
        }
        for c in &self.checks {
            let _ = write!(out, "{} {}: {} [{}]", c.status.label(), c.name, c.inequality, c.statement);
            if c.checked > 0 {
                let _ = write!(
                    out,
                    " ({} checked, {} violations, worst slack {:e})",
                    c.checked,
                    c.violations,
                    c.worst_slack.unwrap_or(f64::NAN)
                );
            }
            if let Some(d) = &c.detail {
                let _ = write!(out, " - {d}");
            }
            out.push('\n');
        }
        out
    }
}
