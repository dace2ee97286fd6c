//! Simulated linearizable base objects.
//!
//! Every method here is one atomic step; the scheduler is the only caller and
//! it decides when steps happen. Consensus is a one-shot compare-and-set cell,
//! and every `propose` is recorded in a [`SyncUsageLog`].

use serde::{Deserialize, Serialize};

use crate::op::{OpId, ProcessId};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BaseError {
    #[error("process {writer} wrote component {component} of snapshot {object}")]
    ForeignWrite { object: &'static str, writer: ProcessId, component: ProcessId },
    #[error("process {0} is outside the snapshot's component range")]
    NoSuchComponent(ProcessId),
}

/// Multi-writer snapshot: one component per process, atomic scan of all.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SnapshotObject<V> {
    object_id: &'static str,
    components: Vec<V>,
}

impl<V: Clone> SnapshotObject<V> {
    pub fn new(object_id: &'static str, n_processes: usize, initial: V) -> Self {
        SnapshotObject { object_id, components: vec![initial; n_processes] }
    }

    pub fn object_id(&self) -> &'static str {
        self.object_id
    }

    /// Writes `value` into `component`. Only the owning process may write.
    pub fn write(&mut self, writer: ProcessId, component: ProcessId, value: V) -> Result<(), BaseError> {
        if writer != component {
            return Err(BaseError::ForeignWrite { object: self.object_id, writer, component });
        }
        let slot = self
            .components
            .get_mut(component as usize)
            .ok_or(BaseError::NoSuchComponent(component))?;
        *slot = value;
        Ok(())
    }

    pub fn scan(&self) -> Vec<V> {
        self.components.clone()
    }

    pub fn component(&self, p: ProcessId) -> Option<&V> {
        self.components.get(p as usize)
    }

    pub fn components(&self) -> &[V] {
        &self.components
    }
}

/// One-shot consensus backed by compare-and-set: the first proposal wins.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConsensusObject<V> {
    index: u64,
    stored: Option<V>,
}

impl<V: Clone> ConsensusObject<V> {
    pub fn new(index: u64) -> Self {
        ConsensusObject { index, stored: None }
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    pub fn stored(&self) -> Option<&V> {
        self.stored.as_ref()
    }

    pub fn propose(&mut self, v: V) -> V {
        self.stored.get_or_insert(v).clone()
    }
}

/// One use of a strong synchronization primitive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyncUsage {
    /// The publish invocation on whose behalf the primitive was used.
    pub publish: OpId,
    /// Index `k` of the consensus object.
    pub object: u64,
    /// Trace step of the propose.
    pub step: u64,
}

/// Append-only record of strong-primitive usage.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SyncUsageLog {
    records: Vec<SyncUsage>,
}

impl SyncUsageLog {
    pub fn record(&mut self, usage: SyncUsage) {
        self.records.push(usage);
    }

    pub fn records(&self) -> &[SyncUsage] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn used_by(&self, op: OpId) -> bool {
        self.records.iter().any(|r| r.publish == op)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn write_then_scan() {
        let mut s = SnapshotObject::new("s", 2, 0u32);
        s.write(0, 0, 7).unwrap();
        assert_eq!(s.scan(), vec![7, 0]);
        s.write(0, 0, 9).unwrap();
        assert_eq!(s.scan(), vec![9, 0]);
    }

    #[test]
    fn fresh_scan_holds_initial_values() {
        let s = SnapshotObject::new("s", 3, String::from("-"));
        assert_eq!(s.scan(), vec!["-"; 3]);
    }

    #[test]
    fn foreign_write_rejected() {
        let mut s = SnapshotObject::new("s", 2, 0u32);
        assert_eq!(
            s.write(1, 0, 3),
            Err(BaseError::ForeignWrite { object: "s", writer: 1, component: 0 })
        );
        assert_eq!(s.write(5, 5, 3), Err(BaseError::NoSuchComponent(5)));
    }

    #[test]
    fn consensus_agreement_and_validity() {
        let mut c = ConsensusObject::new(1);
        assert_eq!(c.propose("x"), "x");
        assert_eq!(c.propose("y"), "x");
        assert_eq!(c.stored(), Some(&"x"));
    }
}
