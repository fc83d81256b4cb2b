//! Inequality reports: estimate, bound, margin, statistical verdict.
//!
//! Verdicts are one-sided at a fixed budget of 3 combined standard errors:
//! an upper-bound check is `VIOLATED` only when the estimate exceeds the bound
//! by more than the slack, `INCONCLUSIVE` when it exceeds the bound within the
//! slack, and `HOLDS` otherwise. `BOUNDED` is the ladder verdict of the
//! moment-ratio sweeps, where no explicit constant is available and only
//! empirical flatness is claimed.

use crate::stats::{combined_stderr, McEstimate};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const REPORT_SCHEMA: &str = "na-lattice.report/1";
pub const REPORT_CSV_HEADER: &str =
    "schema,name,direction,lhs_mean,lhs_stderr,lhs_reps,rhs_mean,rhs_stderr,margin,verdict,flags,params";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "HOLDS")]
    Holds,
    #[serde(rename = "BOUNDED")]
    Bounded,
    #[serde(rename = "VIOLATED")]
    Violated,
    #[serde(rename = "INCONCLUSIVE")]
    Inconclusive,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Holds => "HOLDS",
            Verdict::Bounded => "BOUNDED",
            Verdict::Violated => "VIOLATED",
            Verdict::Inconclusive => "INCONCLUSIVE",
        }
    }
}

/// Which side of the inequality the `lhs` estimate sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    /// Checked relation: `lhs <= rhs`.
    UpperBound,
    /// Checked relation: `lhs >= rhs`.
    LowerBound,
}

/// The bound side: deterministic, or itself a Monte Carlo estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Bound {
    Exact(f64),
    Estimated(McEstimate),
}

impl Bound {
    pub fn mean(&self) -> f64 {
        match self {
            Bound::Exact(v) => *v,
            Bound::Estimated(e) => e.mean,
        }
    }

    pub fn stderr(&self) -> f64 {
        match self {
            Bound::Exact(_) => 0.0,
            Bound::Estimated(e) => e.stderr,
        }
    }
}

/// One verified inequality instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InequalityReport {
    pub schema: String,
    pub name: String,
    pub params: BTreeMap<String, serde_json::Value>,
    pub lhs: McEstimate,
    pub rhs: Bound,
    pub direction: Direction,
    /// Slack toward violation in combined-stderr units; positive is safe.
    pub margin: f64,
    pub verdict: Verdict,
    pub flags: Vec<String>,
}

impl InequalityReport {
    /// Builds a report and decides the verdict at `3 * combined stderr`
    /// one-sided slack, widened by `extra_slack` (absolute units).
    pub fn evaluate(
        name: &str,
        params: BTreeMap<String, serde_json::Value>,
        lhs: McEstimate,
        rhs: Bound,
        direction: Direction,
        extra_slack: f64,
        flags: Vec<String>,
    ) -> Self {
        let sigma = combined_stderr(&[lhs.stderr, rhs.stderr()]);
        let safe_gap = match direction {
            Direction::UpperBound => rhs.mean() - lhs.mean,
            Direction::LowerBound => lhs.mean - rhs.mean(),
        };
        let slack = 3.0 * sigma + extra_slack;
        let verdict = if safe_gap >= 0.0 {
            Verdict::Holds
        } else if -safe_gap > slack {
            Verdict::Violated
        } else {
            Verdict::Inconclusive
        };
        let margin = if sigma == 0.0 {
            if safe_gap >= 0.0 {
                f64::INFINITY
            } else {
                f64::NEG_INFINITY
            }
        } else {
            safe_gap / sigma
        };
        Self {
            schema: REPORT_SCHEMA.to_string(),
            name: name.to_string(),
            params,
            lhs,
            rhs,
            direction,
            margin,
            verdict,
            flags,
        }
    }

    /// Overrides the verdict (ladder verdicts of the ratio sweeps).
    pub fn with_verdict(mut self, verdict: Verdict) -> Self {
        self.verdict = verdict;
        self
    }

    pub fn push_flag(&mut self, flag: &str) {
        self.flags.push(flag.to_string());
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("report serialization")
    }

    /// One flat CSV row (quoted JSON in the params field).
    pub fn to_csv_row(&self) -> String {
        let params = serde_json::to_string(&self.params).expect("params serialization");
        let flags = self.flags.join(";");
        format!(
            "1,{},{},{},{},{},{},{},{},{},{},{}",
            self.name,
            match self.direction {
                Direction::UpperBound => "upper",
                Direction::LowerBound => "lower",
            },
            self.lhs.mean,
            self.lhs.stderr,
            self.lhs.reps,
            self.rhs.mean(),
            self.rhs.stderr(),
            self.margin,
            self.verdict.as_str(),
            csv_quote(&flags),
            csv_quote(&params),
        )
    }
}

fn csv_quote(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

/// Worst verdict of a batch, for exit codes.
pub fn worst_verdict(reports: &[InequalityReport]) -> Verdict {
    let mut worst = Verdict::Holds;
    for r in reports {
        worst = match (worst, r.verdict) {
            (_, Verdict::Violated) | (Verdict::Violated, _) => Verdict::Violated,
            (_, Verdict::Inconclusive) | (Verdict::Inconclusive, _) => Verdict::Inconclusive,
            (Verdict::Bounded, _) | (_, Verdict::Bounded) => Verdict::Bounded,
            _ => Verdict::Holds,
        };
    }
    worst
}
