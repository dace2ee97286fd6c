//! Seeded fuzzing: one run per seed, every run checked, seeds processed in
//! parallel and reported in seed order.

use std::ops::Range;

use rayon::prelude::*;
use serde::Serialize;

use crate::check::report::{check_trace, CheckOptions, CheckReport, Status};
use crate::sched::run::run;
use crate::sched::scenario::{Scenario, ScenarioError, Schedule};
use crate::sched::trace::Trace;

#[derive(Debug, Clone, Serialize)]
pub struct FuzzOutcome {
    pub seed: u64,
    pub status: Status,
    /// Run failure (engine error or step limit); the checks did not run.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub run_error: Option<String>,
    pub consensus_uses: usize,
    pub crashed: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<CheckReport>,
    #[serde(skip)]
    pub trace: Option<Trace>,
}

impl FuzzOutcome {
    pub fn failed(&self) -> bool {
        self.status != Status::Pass
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct FuzzSummary {
    pub runs: usize,
    pub passed: usize,
    pub violations: usize,
    pub errors: usize,
    pub consensus_uses: usize,
    pub runs_with_crashes: usize,
    /// Seeds to replay, in order.
    pub failing_seeds: Vec<u64>,
}

impl FuzzSummary {
    pub fn of(outcomes: &[FuzzOutcome]) -> Self {
        let mut s = FuzzSummary { runs: outcomes.len(), ..Default::default() };
        for o in outcomes {
            match o.status {
                Status::Pass => s.passed += 1,
                Status::Violation => s.violations += 1,
                Status::Error => s.errors += 1,
            }
            s.consensus_uses += o.consensus_uses;
            s.runs_with_crashes += usize::from(o.crashed > 0);
            if o.failed() {
                s.failing_seeds.push(o.seed);
            }
        }
        s
    }

    pub fn status(&self) -> Status {
        if self.errors > 0 {
            Status::Error
        } else if self.violations > 0 {
            Status::Violation
        } else {
            Status::Pass
        }
    }
}

fn run_one(seed: u64, scenario: &Scenario, opts: &CheckOptions, keep_trace: bool) -> FuzzOutcome {
    match run(scenario) {
        Ok(r) => {
            let report = check_trace(&r.trace, opts);
            FuzzOutcome {
                seed,
                status: report.status,
                run_error: None,
                consensus_uses: r.trace.consensus_uses(),
                crashed: r.trace.crashed().len(),
                report: Some(report),
                trace: keep_trace.then_some(r.trace),
            }
        }
        Err(e) => FuzzOutcome {
            seed,
            status: Status::Violation,
            run_error: Some(e.to_string()),
            consensus_uses: 0,
            crashed: 0,
            report: None,
            trace: None,
        },
    }
}

/// Runs `template` once per seed. The template must not carry an explicit
/// schedule.
pub fn fuzz(template: &Scenario, seeds: Range<u64>, opts: &CheckOptions) -> Result<Vec<FuzzOutcome>, ScenarioError> {
    if matches!(template.schedule, Some(Schedule::Explicit { .. })) {
        return Err(ScenarioError::Invalid("fuzz templates must not carry an explicit schedule".into()));
    }
    template.prepare()?;
    let scenarios: Vec<(u64, Scenario)> = seeds.map(|s| (s, template.with_seed(s))).collect();
    Ok(fuzz_scenarios(&scenarios, opts, false))
}

/// Runs and checks independent scenarios in parallel; results keep input
/// order.
pub fn fuzz_scenarios(scenarios: &[(u64, Scenario)], opts: &CheckOptions, keep_traces: bool) -> Vec<FuzzOutcome> {
    scenarios.par_iter().map(|(seed, s)| run_one(*seed, s, opts, keep_traces)).collect()
}
