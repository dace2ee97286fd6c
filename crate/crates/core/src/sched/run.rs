//! The step scheduler.
//!
//! One scheduler slot either invokes the next operation of a process (the
//! `inv` event) or performs one base-object access of its running publish.
//! The `res` event is recorded in the same slot as the final access. Crashes
//! take effect at the start of the first slot whose index reaches their step.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::abc::AbcLocal;
use crate::base::SyncUsageLog;
use crate::engine::{EngineConfig, EngineContext, EngineError, PublishMachine, SharedMemory};
use crate::op::{OpId, ProcessId};
use crate::sched::scenario::{Continuation, CrashPoint, Prepared, Scenario, ScenarioError, Schedule};
use crate::sched::trace::{Event, EventBody, Trace, TraceHeader};
use crate::FORMAT_VERSION;

/// Safety net against a livelocked engine; wait-freedom keeps real runs far
/// below this.
pub const MAX_SLOTS: u64 = 200_000;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("engine failure: {0}")]
    Engine(#[from] EngineError),
    #[error("run exceeded {0} scheduler slots")]
    StepLimit(u64),
}

#[derive(Debug, Clone)]
struct ProcState {
    local: AbcLocal,
    queue: VecDeque<OpId>,
    current: Option<PublishMachine>,
    crashed: bool,
    slots: u64,
}

impl ProcState {
    fn enabled(&self) -> bool {
        !self.crashed && (self.current.is_some() || !self.queue.is_empty())
    }
}

/// A run in progress. Cloning forks the whole system state, which is what the
/// exhaustive explorer relies on.
#[derive(Debug, Clone)]
pub struct Simulation {
    prepared: Prepared,
    config: EngineConfig,
    header: TraceHeader,
    mem: SharedMemory,
    procs: Vec<ProcState>,
    crashes: Vec<CrashPoint>,
    events: Vec<Event>,
    slot: u64,
    skipped: usize,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub trace: Trace,
    pub sync_log: SyncUsageLog,
    /// Explicit-schedule slots that named a process unable to step.
    pub skipped: usize,
}

impl Simulation {
    pub fn new(scenario: &Scenario) -> Result<Self, ScenarioError> {
        let prepared = scenario.prepare()?;
        let seed = match scenario.schedule {
            Some(Schedule::Seed(s)) => Some(s),
            _ => None,
        };
        let header = TraceHeader {
            format_version: FORMAT_VERSION,
            spec: scenario.spec.clone(),
            spec_config: scenario.spec_config.clone(),
            n_processes: scenario.n_processes,
            ops: prepared.ops.clone(),
            seed,
            engine: scenario.engine_config(),
        };
        let procs = prepared
            .queues
            .iter()
            .map(|q| ProcState { local: AbcLocal::default(), queue: q.clone(), current: None, crashed: false, slots: 0 })
            .collect();
        let mut crashes = scenario.crashes.clone();
        crashes.sort_by_key(|c| (c.step, c.process));
        Ok(Simulation {
            config: scenario.engine_config(),
            mem: SharedMemory::new(scenario.n_processes as usize),
            prepared,
            header,
            procs,
            crashes,
            events: Vec::new(),
            slot: 0,
            skipped: 0,
        })
    }

    pub fn slot(&self) -> u64 {
        self.slot
    }

    /// Slots consumed by process `p` so far.
    pub fn slots_of(&self, p: ProcessId) -> u64 {
        self.procs[p as usize].slots
    }

    fn apply_crashes(&mut self) {
        while let Some(c) = self.crashes.first().copied() {
            if c.step > self.slot {
                break;
            }
            self.crashes.remove(0);
            let proc = &mut self.procs[c.process as usize];
            if !proc.crashed {
                proc.crashed = true;
                self.push(c.process, EventBody::Crash);
            }
        }
    }

    /// Processes that can take a step in the current slot.
    pub fn enabled(&mut self) -> Vec<ProcessId> {
        self.apply_crashes();
        (0..self.procs.len() as ProcessId).filter(|p| self.procs[*p as usize].enabled()).collect()
    }

    fn push(&mut self, process: ProcessId, body: EventBody) {
        let step = self.events.len() as u64;
        self.events.push(Event { step, process, body });
    }

    /// Runs one slot for `p`. Returns `false`, and consumes the slot, if `p`
    /// is crashed or idle.
    pub fn step(&mut self, p: ProcessId) -> Result<bool, RunError> {
        if self.slot >= MAX_SLOTS {
            return Err(RunError::StepLimit(MAX_SLOTS));
        }
        self.apply_crashes();
        let idx = p as usize;
        if !self.procs.get(idx).is_some_and(ProcState::enabled) {
            log::debug!("slot {}: p{p} cannot step, skipped", self.slot);
            self.skipped += 1;
            self.slot += 1;
            return Ok(false);
        }
        self.slot += 1;
        self.procs[idx].slots += 1;
        let Some(mut machine) = self.procs[idx].current.take() else {
            let id = self.procs[idx].queue.pop_front().expect("enabled process has work");
            let op = self.prepared.catalog[&id].clone();
            self.procs[idx].current = Some(PublishMachine::new(&op));
            self.push(p, EventBody::Inv { op });
            return Ok(true);
        };
        let ctx = EngineContext { spec: &*self.prepared.spec, ops: &self.prepared.catalog, config: &self.config };
        let step_no = self.events.len() as u64;
        let out = machine.step(&ctx, &mut self.mem, &mut self.procs[idx].local, step_no)?;
        self.events.push(Event::base_step(step_no, p, out.access));
        if out.cap_fallthrough {
            self.push(p, EventBody::CapFallthrough { op: machine.op() });
        }
        match out.returned {
            Some(certificate) => {
                let (op, response) = (certificate.op, certificate.response.clone());
                self.push(p, EventBody::Commit { certificate });
                self.push(p, EventBody::Res { op, response });
            }
            None => self.procs[idx].current = Some(machine),
        }
        Ok(true)
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn finish(self) -> RunResult {
        RunResult {
            trace: Trace { header: self.header, events: self.events },
            sync_log: self.mem.sync_log,
            skipped: self.skipped,
        }
    }

    /// Drives the simulation by `schedule` until it stops.
    pub fn drive(mut self, schedule: &Schedule) -> Result<RunResult, RunError> {
        match schedule {
            Schedule::Explicit { steps, then } => {
                for p in steps {
                    self.step(*p)?;
                }
                if *then == Continuation::RoundRobin {
                    let mut next: ProcessId = 0;
                    loop {
                        let enabled = self.enabled();
                        let Some(p) = enabled.iter().copied().find(|p| *p >= next).or(enabled.first().copied()) else {
                            break;
                        };
                        self.step(p)?;
                        next = p + 1;
                    }
                }
            }
            Schedule::Seed(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                loop {
                    let enabled = self.enabled();
                    if enabled.is_empty() {
                        break;
                    }
                    let p = enabled[rng.gen_range(0..enabled.len())];
                    self.step(p)?;
                }
            }
        }
        Ok(self.finish())
    }
}

/// Runs a scenario under its own schedule.
pub fn run(scenario: &Scenario) -> Result<RunResult, RunError> {
    let schedule = scenario
        .schedule
        .clone()
        .ok_or_else(|| ScenarioError::Invalid("scenario has no schedule".into()))?;
    Simulation::new(scenario)?.drive(&schedule)
}

/// Runs a scenario with its schedule replaced by a seeded one.
pub fn run_seeded(scenario: &Scenario, seed: u64) -> Result<RunResult, RunError> {
    run(&scenario.with_seed(seed))
}
