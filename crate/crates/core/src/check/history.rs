//! Histories: sequences of invocations and responses.
//!
//! History files carry the operation catalog next to the event list:
//!
//! ```json
//! {
//!   "format_version": 1,
//!   "spec": "list",
//!   "ops": [{"id": "p2.0", "method": "append", "args": ["a"]}, ...],
//!   "events": [{"type": "inv", "op": "p2.0"}, {"type": "res", "op": "p2.0", "response": "ok"}, ...]
//! }
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::op::{OpId, OpInstance};
use crate::value::Value;
use crate::FORMAT_VERSION;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum HistoryEvent {
    Inv { op: OpId },
    Res { op: OpId, response: Value },
}

impl HistoryEvent {
    pub fn op(&self) -> OpId {
        match self {
            HistoryEvent::Inv { op } | HistoryEvent::Res { op, .. } => *op,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HistoryError {
    #[error("malformed history: {0}")]
    Malformed(String),
}

fn malformed(msg: impl Into<String>) -> HistoryError {
    HistoryError::Malformed(msg.into())
}

/// A well-formed history: every operation is invoked once, responds at most
/// once and after its invocation, and each process has at most one pending
/// operation at any time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct History {
    ops: BTreeMap<OpId, OpInstance>,
    events: Vec<HistoryEvent>,
    inv_at: BTreeMap<OpId, usize>,
    res_at: BTreeMap<OpId, usize>,
}

impl History {
    pub fn new(ops: BTreeMap<OpId, OpInstance>, events: Vec<HistoryEvent>) -> Result<Self, HistoryError> {
        let mut inv_at = BTreeMap::new();
        let mut res_at = BTreeMap::new();
        let mut outstanding: BTreeMap<u32, OpId> = BTreeMap::new();
        for (i, ev) in events.iter().enumerate() {
            let id = ev.op();
            if !ops.contains_key(&id) {
                return Err(malformed(format!("event for {id}, which is not in the catalog")));
            }
            match ev {
                HistoryEvent::Inv { .. } => {
                    if inv_at.insert(id, i).is_some() {
                        return Err(malformed(format!("{id} invoked twice")));
                    }
                    if let Some(prev) = outstanding.insert(id.process, id) {
                        return Err(malformed(format!("{id} invoked while {prev} is pending")));
                    }
                }
                HistoryEvent::Res { .. } => {
                    if !inv_at.contains_key(&id) {
                        return Err(malformed(format!("{id} responds before being invoked")));
                    }
                    if res_at.insert(id, i).is_some() {
                        return Err(malformed(format!("{id} responds twice")));
                    }
                    outstanding.remove(&id.process);
                }
            }
        }
        // Catalog entries that were never invoked are dropped.
        let ops = ops.into_iter().filter(|(id, _)| inv_at.contains_key(id)).collect();
        Ok(History { ops, events, inv_at, res_at })
    }

    pub fn ops(&self) -> &BTreeMap<OpId, OpInstance> {
        &self.ops
    }

    pub fn op(&self, id: OpId) -> Option<&OpInstance> {
        self.ops.get(&id)
    }

    pub fn events(&self) -> &[HistoryEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Operation ids in invocation order.
    pub fn invocation_order(&self) -> Vec<OpId> {
        self.events
            .iter()
            .filter_map(|e| match e {
                HistoryEvent::Inv { op } => Some(*op),
                _ => None,
            })
            .collect()
    }

    pub fn inv_index(&self, id: OpId) -> Option<usize> {
        self.inv_at.get(&id).copied()
    }

    pub fn res_index(&self, id: OpId) -> Option<usize> {
        self.res_at.get(&id).copied()
    }

    pub fn is_complete(&self, id: OpId) -> bool {
        self.res_at.contains_key(&id)
    }

    pub fn response(&self, id: OpId) -> Option<&Value> {
        self.res_at.get(&id).map(|&i| match &self.events[i] {
            HistoryEvent::Res { response, .. } => response,
            HistoryEvent::Inv { .. } => unreachable!("res index points at a response"),
        })
    }

    /// Real-time order: `a`'s response precedes `b`'s invocation.
    pub fn precedes(&self, a: OpId, b: OpId) -> bool {
        match (self.res_at.get(&a), self.inv_at.get(&b)) {
            (Some(r), Some(i)) => r < i,
            _ => false,
        }
    }

    /// All `(a, b)` with `a` preceding `b`.
    pub fn precedence_pairs(&self) -> BTreeSet<(OpId, OpId)> {
        let mut out = BTreeSet::new();
        for &a in self.res_at.keys() {
            for &b in self.inv_at.keys() {
                if self.precedes(a, b) {
                    out.insert((a, b));
                }
            }
        }
        out
    }

    /// The history with every event of `id` removed.
    pub fn without(&self, id: OpId) -> History {
        let mut ops = self.ops.clone();
        ops.remove(&id);
        let events = self.events.iter().filter(|e| e.op() != id).cloned().collect();
        History::new(ops, events).expect("removing an operation keeps a history well formed")
    }
}

/// On-disk form of a history.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryFile {
    #[serde(default = "default_version")]
    pub format_version: u32,
    pub spec: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec_config: Option<Value>,
    pub ops: Vec<OpInstance>,
    pub events: Vec<HistoryEvent>,
}

fn default_version() -> u32 {
    FORMAT_VERSION
}

#[derive(Debug, thiserror::Error)]
pub enum HistoryFileError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed history file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported format version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },
    #[error(transparent)]
    History(#[from] HistoryError),
}

impl HistoryFile {
    pub fn from_json(s: &str) -> Result<Self, HistoryFileError> {
        let f: HistoryFile = serde_json::from_str(s)?;
        if f.format_version != FORMAT_VERSION {
            return Err(HistoryFileError::Version { found: f.format_version, expected: FORMAT_VERSION });
        }
        Ok(f)
    }

    pub fn load(path: &Path) -> Result<Self, HistoryFileError> {
        let s = std::fs::read_to_string(path)
            .map_err(|e| HistoryFileError::Io { path: path.display().to_string(), source: e })?;
        Self::from_json(&s)
    }

    pub fn history(&self) -> Result<History, HistoryError> {
        let mut ops = BTreeMap::new();
        for op in &self.ops {
            if ops.insert(op.id, op.clone()).is_some() {
                return Err(malformed(format!("{} listed twice", op.id)));
            }
        }
        History::new(ops, self.events.clone())
    }

    pub fn from_history(spec: &str, spec_config: Option<Value>, h: &History) -> Self {
        HistoryFile {
            format_version: FORMAT_VERSION,
            spec: spec.to_owned(),
            spec_config,
            ops: h.ops().values().cloned().collect(),
            events: h.events().to_vec(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(p: u32, s: u32) -> OpId {
        OpId::new(p, s)
    }

    fn catalog(ids: &[OpId]) -> BTreeMap<OpId, OpInstance> {
        ids.iter().map(|i| (*i, OpInstance::new(i.process, i.seq, "inc", vec![]))).collect()
    }

    #[test]
    fn precedence_is_real_time_order() {
        let (x, y, z) = (id(0, 0), id(1, 0), id(2, 0));
        let h = History::new(
            catalog(&[x, y, z]),
            vec![
                HistoryEvent::Inv { op: x },
                HistoryEvent::Res { op: x, response: Value::ok() },
                HistoryEvent::Inv { op: y },
                HistoryEvent::Inv { op: z },
                HistoryEvent::Res { op: y, response: Value::ok() },
            ],
        )
        .unwrap();
        assert!(h.precedes(x, y) && h.precedes(x, z));
        assert!(!h.precedes(y, z) && !h.precedes(z, y) && !h.precedes(y, x));
        assert!(!h.is_complete(z));
        assert_eq!(h.precedence_pairs().len(), 2);
        assert_eq!(h.without(x).precedence_pairs().len(), 0);
    }

    #[test]
    fn rejects_ill_formed() {
        let x = id(0, 0);
        let y = id(0, 1);
        assert!(History::new(catalog(&[x]), vec![HistoryEvent::Res { op: x, response: Value::Nil }]).is_err());
        assert!(History::new(catalog(&[x]), vec![HistoryEvent::Inv { op: x }, HistoryEvent::Inv { op: x }]).is_err());
        assert!(History::new(catalog(&[x, y]), vec![HistoryEvent::Inv { op: x }, HistoryEvent::Inv { op: y }]).is_err());
        assert!(History::new(catalog(&[]), vec![HistoryEvent::Inv { op: x }]).is_err());
    }

    #[test]
    fn file_round_trip() {
        let x = id(0, 0);
        let h = History::new(catalog(&[x]), vec![HistoryEvent::Inv { op: x }]).unwrap();
        let f = HistoryFile::from_history("counter", None, &h);
        let s = serde_json::to_string(&f).unwrap();
        assert!(s.contains(r#"{"type":"inv","op":"p0.0"}"#));
        assert_eq!(HistoryFile::from_json(&s).unwrap().history().unwrap(), h);
    }
}
