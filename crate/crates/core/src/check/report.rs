//! Running a selection of checkers over one trace.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::check::audit::{audit_dynamic_concurrency, AuditVerdict};
use crate::check::graph::{check_graph_invariants, GraphReport};
use crate::check::lin::{check_trace_linearizability, LinReport, DEFAULT_MAX_LIN_OPS};
use crate::check::states::DEFAULT_MAX_STATE_OPS;
use crate::check::CheckError;
use crate::objects::spec_by_name;
use crate::sched::trace::Trace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checks {
    pub lin: bool,
    pub graph: bool,
    pub dyncon: bool,
}

impl Checks {
    pub const ALL: Checks = Checks { lin: true, graph: true, dyncon: true };
}

impl Default for Checks {
    fn default() -> Self {
        Checks::ALL
    }
}

impl FromStr for Checks {
    type Err = String;

    /// Comma-separated subset of `lin`, `graph`, `dyncon`.
    fn from_str(s: &str) -> Result<Self, String> {
        let mut c = Checks { lin: false, graph: false, dyncon: false };
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "lin" => c.lin = true,
                "graph" => c.graph = true,
                "dyncon" => c.dyncon = true,
                other => return Err(format!("unknown check {other:?} (expected lin, graph or dyncon)")),
            }
        }
        if c == (Checks { lin: false, graph: false, dyncon: false }) {
            return Err("no checks selected".into());
        }
        Ok(c)
    }
}

impl fmt::Display for Checks {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = [(self.lin, "lin"), (self.graph, "graph"), (self.dyncon, "dyncon")]
            .into_iter()
            .filter_map(|(on, n)| on.then_some(n))
            .collect();
        f.write_str(&names.join(","))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckOptions {
    pub checks: Checks,
    pub max_lin_ops: usize,
    pub max_state_ops: usize,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions { checks: Checks::ALL, max_lin_ops: DEFAULT_MAX_LIN_OPS, max_state_ops: DEFAULT_MAX_STATE_OPS }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Violation,
    /// Capacity bound exceeded or malformed input.
    Error,
}

impl Status {
    /// The CLI exit code for this status.
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Pass => 0,
            Status::Violation => 1,
            Status::Error => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CheckReport {
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lin: Option<LinReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub graph: Option<GraphReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dyncon: Option<AuditVerdict>,
}

impl CheckReport {
    /// One line per violation, prefixed with the checker name.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Some(l) = &self.lin {
            out.extend(l.violations.iter().map(|v| format!("lin/{}: {}", v.check, v.detail)));
        }
        if let Some(g) = &self.graph {
            out.extend(g.violations.iter().map(|v| format!("graph/{}: {}", v.check, v.detail)));
        }
        if let Some(d) = &self.dyncon {
            out.extend(d.failures().map(|p| format!("dyncon: {} used consensus without a witnessing system state", p.op)));
        }
        out
    }
}

/// Runs the selected checkers. Errors are folded into the report.
pub fn check_trace(trace: &Trace, opts: &CheckOptions) -> CheckReport {
    let mut report = CheckReport { status: Status::Pass, error: None, lin: None, graph: None, dyncon: None };
    let result = (|| -> Result<(), CheckError> {
        let spec = spec_by_name(&trace.header.spec, trace.header.spec_config.as_ref())?;
        if opts.checks.graph {
            report.graph = Some(check_graph_invariants(&*spec, trace)?);
        }
        if opts.checks.lin {
            report.lin = Some(check_trace_linearizability(&*spec, trace, opts.max_lin_ops)?);
        }
        if opts.checks.dyncon {
            report.dyncon = Some(audit_dynamic_concurrency(&*spec, trace, opts.max_state_ops)?);
        }
        Ok(())
    })();
    if let Err(e) = result {
        report.status = Status::Error;
        report.error = Some(e.to_string());
    } else if !report.violations().is_empty() {
        report.status = Status::Violation;
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_checks() {
        assert_eq!("lin,graph,dyncon".parse::<Checks>().unwrap(), Checks::ALL);
        let c: Checks = "graph".parse().unwrap();
        assert!(c.graph && !c.lin && !c.dyncon);
        assert_eq!(c.to_string(), "graph");
        assert!("lin,bogus".parse::<Checks>().is_err());
        assert!("".parse::<Checks>().is_err());
    }
}
