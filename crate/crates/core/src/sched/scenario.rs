//! Scenario files.
//!
//! ```json
//! {
//!   "format_version": 1,
//!   "spec": "asset-transfer",
//!   "spec_config": {"balances": {"alice": 100, "bob": 0, "carol": 0}},
//!   "n_processes": 2,
//!   "workload": [
//!     {"process": 0, "method": "transfer", "args": ["alice", "bob", 100]},
//!     {"process": 1, "method": "transfer", "args": ["alice", "carol", 50]}
//!   ],
//!   "schedule": {"explicit": {"steps": [0, 1, 0, 1], "then": "round_robin"}},
//!   "crashes": [{"process": 1, "step": 12}],
//!   "commute_cap": 8,
//!   "mutation": "none"
//! }
//! ```
//!
//! Workload entries are listed in per-process program order; sequence numbers
//! are assigned by position. `schedule` may be omitted in fuzz templates.

use std::collections::{BTreeMap, VecDeque};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::engine::{EngineConfig, Mutation};
use crate::op::{OpId, OpInstance, ProcessId};
use crate::objects::spec_by_name;
use crate::seqspec::{ObjectSpec, SpecError, DEFAULT_COMMUTE_CAP};
use crate::value::Value;
use crate::FORMAT_VERSION;

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed scenario: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported format version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkloadEntry {
    pub process: ProcessId,
    pub method: String,
    #[serde(default)]
    pub args: Vec<Value>,
}

/// What the scheduler does once an explicit step list is exhausted.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Continuation {
    #[default]
    Stop,
    /// Cycle over enabled processes in id order until all are idle.
    RoundRobin,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    Explicit {
        steps: Vec<ProcessId>,
        #[serde(default)]
        then: Continuation,
    },
    /// Uniform choice among enabled processes, driven by this seed.
    Seed(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrashPoint {
    pub process: ProcessId,
    /// Scheduler slot from which the process takes no further steps.
    pub step: u64,
}

fn default_version() -> u32 {
    FORMAT_VERSION
}

fn default_cap() -> usize {
    DEFAULT_COMMUTE_CAP
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default = "default_version")]
    pub format_version: u32,
    pub spec: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec_config: Option<Value>,
    pub n_processes: u32,
    pub workload: Vec<WorkloadEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Schedule>,
    #[serde(default)]
    pub crashes: Vec<CrashPoint>,
    #[serde(default = "default_cap")]
    pub commute_cap: usize,
    #[serde(default)]
    pub mutation: Mutation,
}

impl Scenario {
    pub fn from_json(s: &str) -> Result<Self, ScenarioError> {
        let scn: Scenario = serde_json::from_str(s)?;
        if scn.format_version != FORMAT_VERSION {
            return Err(ScenarioError::Version { found: scn.format_version, expected: FORMAT_VERSION });
        }
        Ok(scn)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let s = std::fs::read_to_string(path)
            .map_err(|e| ScenarioError::Io { path: path.display().to_string(), source: e })?;
        Self::from_json(&s)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn engine_config(&self) -> EngineConfig {
        EngineConfig { commute_cap: self.commute_cap, mutation: self.mutation }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Scenario { schedule: Some(Schedule::Seed(seed)), ..self.clone() }
    }

    /// Operations with sequence numbers assigned by program order.
    pub fn ops(&self) -> Vec<OpInstance> {
        let mut next: BTreeMap<ProcessId, u32> = BTreeMap::new();
        self.workload
            .iter()
            .map(|w| {
                let seq = next.entry(w.process).or_insert(0);
                let op = OpInstance::new(w.process, *seq, w.method.clone(), w.args.clone());
                *seq += 1;
                op
            })
            .collect()
    }

    /// Resolves the specification and checks every structural constraint.
    pub fn prepare(&self) -> Result<Prepared, ScenarioError> {
        if self.format_version != FORMAT_VERSION {
            return Err(ScenarioError::Version { found: self.format_version, expected: FORMAT_VERSION });
        }
        if self.n_processes == 0 {
            return Err(ScenarioError::Invalid("n_processes must be positive".into()));
        }
        if self.commute_cap == 0 {
            return Err(ScenarioError::Invalid("commute_cap must be positive".into()));
        }
        let in_range = |p: ProcessId, what: &str| {
            if p < self.n_processes {
                Ok(())
            } else {
                Err(ScenarioError::Invalid(format!("{what} names process {p} but n_processes is {}", self.n_processes)))
            }
        };
        for w in &self.workload {
            in_range(w.process, "workload")?;
        }
        for c in &self.crashes {
            in_range(c.process, "crash")?;
        }
        if let Some(Schedule::Explicit { steps, .. }) = &self.schedule {
            for p in steps {
                in_range(*p, "schedule")?;
            }
        }
        let spec = spec_by_name(&self.spec, self.spec_config.as_ref())?;
        let ops = self.ops();
        for op in &ops {
            spec.validate(op)?;
        }
        let mut queues = vec![VecDeque::new(); self.n_processes as usize];
        for op in &ops {
            queues[op.process() as usize].push_back(op.id);
        }
        Ok(Prepared {
            spec,
            catalog: Arc::new(ops.iter().map(|o| (o.id, o.clone())).collect()),
            ops,
            queues,
        })
    }
}

/// A validated scenario ready to run.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub spec: Arc<dyn ObjectSpec>,
    pub ops: Vec<OpInstance>,
    pub catalog: Arc<BTreeMap<OpId, OpInstance>>,
    /// Program order per process.
    pub queues: Vec<VecDeque<OpId>>,
}

#[cfg(test)]
mod tests {
    use super::*;

    const ASSET: &str = r#"{
        "spec": "asset-transfer",
        "spec_config": {"balances": {"alice": 100, "bob": 0}},
        "n_processes": 2,
        "workload": [
            {"process": 0, "method": "transfer", "args": ["alice", "bob", 100]},
            {"process": 1, "method": "transfer", "args": ["alice", "bob", 50]},
            {"process": 0, "method": "readBalance", "args": ["bob"]}
        ],
        "schedule": {"explicit": {"steps": [0, 1], "then": "round_robin"}}
    }"#;

    #[test]
    fn parses_with_defaults() {
        let s = Scenario::from_json(ASSET).unwrap();
        assert_eq!(s.format_version, FORMAT_VERSION);
        assert_eq!(s.commute_cap, DEFAULT_COMMUTE_CAP);
        assert_eq!(s.mutation, Mutation::None);
        assert_eq!(s.schedule, Some(Schedule::Explicit { steps: vec![0, 1], then: Continuation::RoundRobin }));
        let ids: Vec<String> = s.ops().iter().map(|o| o.id.to_string()).collect();
        assert_eq!(ids, ["p0.0", "p1.0", "p0.1"]);
        let p = s.prepare().unwrap();
        assert_eq!(p.queues[0].len(), 2);
    }

    #[test]
    fn seed_schedule_shape() {
        let s: Schedule = serde_json::from_str(r#"{"seed": 7}"#).unwrap();
        assert_eq!(s, Schedule::Seed(7));
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut s = Scenario::from_json(ASSET).unwrap();
        s.workload[0].process = 5;
        assert!(matches!(s.prepare(), Err(ScenarioError::Invalid(_))));

        let mut s = Scenario::from_json(ASSET).unwrap();
        s.workload[0].args[0] = Value::str("mallory");
        assert!(matches!(s.prepare(), Err(ScenarioError::Spec(_))));

        let mut s = Scenario::from_json(ASSET).unwrap();
        s.spec = "queue".into();
        assert!(matches!(s.prepare(), Err(ScenarioError::Spec(SpecError::UnknownSpec(_)))));

        assert!(matches!(
            Scenario::from_json(r#"{"format_version": 2, "spec": "counter", "n_processes": 1, "workload": []}"#),
            Err(ScenarioError::Version { .. })
        ));
    }
}
