//! Trace format: a header line followed by one JSON event per line.
//!
//! ```text
//! {"kind":"header","format_version":1,"spec":"list","n_processes":2,"ops":[...],...}
//! {"step":0,"process":0,"kind":"inv","op":{"id":"p0.0","method":"append","args":["a"]}}
//! {"step":1,"process":0,"kind":"base_step","object":"abc","op":"add_a","value":["p0.0"]}
//! {"step":2,"process":0,"kind":"base_step","object":"abc","op":"read","value":{"a":[...],"b":{...},"c":{...}}}
//! ...
//! {"step":5,"process":0,"kind":"commit","certificate":{...}}
//! {"step":6,"process":0,"kind":"res","op":"p0.0","response":"ok"}
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::abc::AbcView;
use crate::base::SyncUsage;
use crate::check::history::{History, HistoryEvent};
use crate::engine::{CommitCertificate, EngineConfig};
use crate::op::{OpId, OpInstance, ProcessId};
use crate::value::Value;
use crate::FORMAT_VERSION;

/// One access to a shared base object, as recorded in the trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", content = "value", rename_all = "snake_case")]
pub enum Access {
    /// Write of the whole local `R_A` into the process's component.
    AddA(BTreeSet<OpId>),
    AddB(BTreeSet<(OpId, u64)>),
    AddC(BTreeSet<(OpId, BTreeSet<OpId>)>),
    Read(AbcView),
    /// `K[i].write(k)`.
    Write(u64),
    /// `K.snapshot()`.
    Scan(Vec<u64>),
    Propose { k: u64, proposed: OpId, decided: OpId },
}

impl Access {
    pub fn name(&self) -> &'static str {
        match self {
            Access::AddA(_) => "add_a",
            Access::AddB(_) => "add_b",
            Access::AddC(_) => "add_c",
            Access::Read(_) => "read",
            Access::Write(_) => "write",
            Access::Scan(_) => "scan",
            Access::Propose { .. } => "propose",
        }
    }

    pub fn object(&self) -> &'static str {
        match self {
            Access::AddA(_) | Access::AddB(_) | Access::AddC(_) | Access::Read(_) => "abc",
            Access::Write(_) | Access::Scan(_) => "k",
            Access::Propose { .. } => "cons",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventBody {
    Inv { op: OpInstance },
    Res { op: OpId, response: Value },
    BaseStep {
        object: String,
        #[serde(flatten)]
        access: Access,
    },
    Crash,
    Commit { certificate: CommitCertificate },
    /// The commutativity check overflowed its cap and the publish fell
    /// through to conflict resolution.
    CapFallthrough { op: OpId },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub step: u64,
    pub process: ProcessId,
    #[serde(flatten)]
    pub body: EventBody,
}

impl Event {
    pub fn base_step(step: u64, process: ProcessId, access: Access) -> Self {
        Event { step, process, body: EventBody::BaseStep { object: access.object().to_owned(), access } }
    }

    pub fn access(&self) -> Option<&Access> {
        match &self.body {
            EventBody::BaseStep { access, .. } => Some(access),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub format_version: u32,
    pub spec: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec_config: Option<Value>,
    pub n_processes: u32,
    /// Every operation of the workload, invoked or not.
    pub ops: Vec<OpInstance>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub engine: EngineConfig,
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error("trace is empty")]
    Empty,
    #[error("unsupported format version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },
    #[error("malformed trace: {0}")]
    Malformed(String),
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename = "header")]
struct HeaderLine {
    #[serde(flatten)]
    header: TraceHeader,
}

/// Globally ordered event log of one run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub header: TraceHeader,
    pub events: Vec<Event>,
}

impl Trace {
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<(), TraceError> {
        let header = HeaderLine { header: self.header.clone() };
        serde_json::to_writer(&mut w, &header).map_err(|e| TraceError::Json { line: 1, source: e })?;
        w.write_all(b"\n")?;
        for (i, ev) in self.events.iter().enumerate() {
            serde_json::to_writer(&mut w, ev).map_err(|e| TraceError::Json { line: i + 2, source: e })?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self, TraceError> {
        let mut lines = r.lines().enumerate().filter(|(_, l)| !matches!(l, Ok(s) if s.trim().is_empty()));
        let (_, first) = lines.next().ok_or(TraceError::Empty)?;
        let header: HeaderLine =
            serde_json::from_str(&first?).map_err(|e| TraceError::Json { line: 1, source: e })?;
        let header = header.header;
        if header.format_version != FORMAT_VERSION {
            return Err(TraceError::Version { found: header.format_version, expected: FORMAT_VERSION });
        }
        let mut events = Vec::new();
        for (i, line) in lines {
            let ev: Event = serde_json::from_str(&line?).map_err(|e| TraceError::Json { line: i + 1, source: e })?;
            events.push(ev);
        }
        let trace = Trace { header, events };
        trace.validate()?;
        Ok(trace)
    }

    pub fn from_jsonl_str(s: &str) -> Result<Self, TraceError> {
        Self::read_jsonl(s.as_bytes())
    }

    /// Structural invariants: strictly increasing steps, responses matched by
    /// earlier invocations of the same process, nothing after a crash.
    pub fn validate(&self) -> Result<(), TraceError> {
        let mut last: Option<u64> = None;
        let mut open: BTreeMap<OpId, ProcessId> = BTreeMap::new();
        let mut crashed = BTreeSet::new();
        for ev in &self.events {
            if last.is_some_and(|l| ev.step <= l) {
                return Err(TraceError::Malformed(format!("step {} does not increase", ev.step)));
            }
            last = Some(ev.step);
            if crashed.contains(&ev.process) {
                return Err(TraceError::Malformed(format!("p{} acts after crashing (step {})", ev.process, ev.step)));
            }
            match &ev.body {
                EventBody::Inv { op } => {
                    if op.process() != ev.process || open.insert(op.id, ev.process).is_some() {
                        return Err(TraceError::Malformed(format!("bad invocation of {} at step {}", op.id, ev.step)));
                    }
                }
                EventBody::Res { op, .. } => {
                    if open.get(op) != Some(&ev.process) {
                        return Err(TraceError::Malformed(format!("response of {op} without invocation")));
                    }
                    open.insert(*op, u32::MAX);
                }
                EventBody::Crash => {
                    crashed.insert(ev.process);
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn catalog(&self) -> BTreeMap<OpId, OpInstance> {
        self.header.ops.iter().map(|o| (o.id, o.clone())).collect()
    }

    /// Projection onto invocations and responses of the implemented object.
    pub fn history(&self) -> History {
        let mut ops = BTreeMap::new();
        let mut events = Vec::new();
        for ev in &self.events {
            match &ev.body {
                EventBody::Inv { op } => {
                    ops.insert(op.id, op.clone());
                    events.push(HistoryEvent::Inv { op: op.id });
                }
                EventBody::Res { op, response } => {
                    events.push(HistoryEvent::Res { op: *op, response: response.clone() })
                }
                _ => {}
            }
        }
        History::new(ops, events).expect("validated trace yields a well-formed history")
    }

    /// Every read together with its step and reader.
    pub fn views(&self) -> impl Iterator<Item = (u64, ProcessId, &AbcView)> {
        self.events.iter().filter_map(|ev| match ev.access() {
            Some(Access::Read(v)) => Some((ev.step, ev.process, v)),
            _ => None,
        })
    }

    pub fn certificates(&self) -> impl Iterator<Item = (u64, &CommitCertificate)> {
        self.events.iter().filter_map(|ev| match &ev.body {
            EventBody::Commit { certificate } => Some((ev.step, certificate)),
            _ => None,
        })
    }

    /// Strong-primitive uses, attributed to the publish the proposing process
    /// was executing.
    pub fn sync_usage(&self) -> Vec<SyncUsage> {
        let mut current: BTreeMap<ProcessId, OpId> = BTreeMap::new();
        let mut out = Vec::new();
        for ev in &self.events {
            match &ev.body {
                EventBody::Inv { op } => {
                    current.insert(ev.process, op.id);
                }
                EventBody::BaseStep { access: Access::Propose { k, .. }, .. } => {
                    if let Some(op) = current.get(&ev.process) {
                        out.push(SyncUsage { publish: *op, object: *k, step: ev.step });
                    }
                }
                _ => {}
            }
        }
        out
    }

    /// Publishes whose commutativity check overflowed the enumeration cap.
    pub fn cap_fallthroughs(&self) -> BTreeSet<OpId> {
        self.events
            .iter()
            .filter_map(|ev| match &ev.body {
                EventBody::CapFallthrough { op } => Some(*op),
                _ => None,
            })
            .collect()
    }

    pub fn crashed(&self) -> BTreeSet<ProcessId> {
        self.events.iter().filter(|e| e.body == EventBody::Crash).map(|e| e.process).collect()
    }

    pub fn consensus_uses(&self) -> usize {
        self.events.iter().filter(|e| matches!(e.access(), Some(Access::Propose { .. }))).count()
    }
}
