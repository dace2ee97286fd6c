//! Deterministic execution: scenarios, the step scheduler, traces, seeded
//! fuzzing and small-scope exhaustive exploration.

pub mod explore;
pub mod fuzz;
pub mod gen;
pub mod run;
pub mod scenario;
pub mod trace;

pub use explore::explore;
pub use fuzz::{fuzz, fuzz_scenarios, FuzzOutcome, FuzzSummary};
pub use run::{run, run_seeded, RunError, RunResult, Simulation};
pub use scenario::{Continuation, CrashPoint, Scenario, ScenarioError, Schedule, WorkloadEntry};
pub use trace::{Access, Event, EventBody, Trace, TraceError, TraceHeader};

use crate::check::history::History;

/// Projection of a trace onto the implemented object's invocations and
/// responses.
pub fn history_of(trace: &Trace) -> History {
    trace.history()
}
