//! Small-scope exhaustive exploration: every interleaving of scheduler slots
//! in which each process takes at most a fixed number of slots.

use crate::sched::run::{RunError, Simulation};
use crate::sched::scenario::{Scenario, ScenarioError};
use crate::sched::trace::Trace;

pub const MAX_EXPLORE_PROCESSES: u32 = 3;
pub const MAX_EXPLORE_SLOTS: u64 = 6;

/// Calls `visit` with the trace of every maximal interleaving and returns how
/// many there were. The scenario's own schedule is ignored; its crash points
/// still apply.
pub fn explore(scenario: &Scenario, slots_per_process: u64, visit: &mut dyn FnMut(&Trace)) -> Result<usize, RunError> {
    if scenario.n_processes > MAX_EXPLORE_PROCESSES || slots_per_process > MAX_EXPLORE_SLOTS {
        return Err(ScenarioError::Invalid(format!(
            "exhaustive mode is limited to {MAX_EXPLORE_PROCESSES} processes and {MAX_EXPLORE_SLOTS} slots per process"
        ))
        .into());
    }
    let sim = Simulation::new(scenario)?;
    let mut leaves = 0;
    dfs(sim, slots_per_process, visit, &mut leaves)?;
    Ok(leaves)
}

fn dfs(mut sim: Simulation, budget: u64, visit: &mut dyn FnMut(&Trace), leaves: &mut usize) -> Result<(), RunError> {
    let choices: Vec<_> = sim.enabled().into_iter().filter(|p| sim.slots_of(*p) < budget).collect();
    if choices.is_empty() {
        *leaves += 1;
        visit(&sim.finish().trace);
        return Ok(());
    }
    for p in choices {
        let mut child = sim.clone();
        child.step(p)?;
        dfs(child, budget, visit, leaves)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sched::scenario::WorkloadEntry;

    #[test]
    fn counts_interleavings() {
        let s = Scenario {
            format_version: crate::FORMAT_VERSION,
            spec: "counter".into(),
            spec_config: None,
            n_processes: 2,
            workload: vec![
                WorkloadEntry { process: 0, method: "inc".into(), args: vec![] },
                WorkloadEntry { process: 1, method: "inc".into(), args: vec![] },
            ],
            schedule: None,
            crashes: vec![],
            commute_cap: 8,
            mutation: Default::default(),
        };
        // Two processes with two slots each: C(4, 2) interleavings.
        let mut n = 0;
        assert_eq!(explore(&s, 2, &mut |_| n += 1).unwrap(), 6);
        assert_eq!(n, 6);
        assert!(explore(&s, 7, &mut |_| ()).is_err());
    }
}
