//! Verification suite.
//!
//! All checkers are exhaustive and carry explicit operation-count bounds;
//! exceeding a bound is a [`CheckError::Capacity`], never a silent pass.

pub mod audit;
pub mod graph;
pub mod history;
pub mod lin;
pub mod report;
pub mod states;

use crate::engine::EngineError;
use crate::op::{OpId, OpInstance};
use crate::seqspec::SpecError;
use crate::value::Value;
use history::History;

pub use audit::{audit_dynamic_concurrency, AuditVerdict, PublishAudit, Witness};
pub use graph::{check_graph_invariants, GraphReport, Violation};
pub use history::{HistoryEvent, HistoryFile};
pub use lin::{check_linearizable, check_trace_linearizability, is_linearization, DEFAULT_MAX_LIN_OPS};
pub use report::{check_trace, CheckOptions, CheckReport, Checks, Status};
pub use states::{enumerate_system_states, SystemState, DEFAULT_MAX_STATE_OPS};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CheckError {
    #[error("{what}: {size} operations exceed the bound of {cap}{}", .op.map(|o| format!(" (publish {o})")).unwrap_or_default())]
    Capacity { what: &'static str, size: usize, cap: usize, op: Option<OpId> },
    #[error("malformed input: {0}")]
    Malformed(String),
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

impl CheckError {
    pub fn is_capacity(&self) -> bool {
        matches!(self, CheckError::Capacity { .. })
    }
}

/// Dense view of a history used by the search-based checkers: operations in
/// invocation order, with precedence and completeness as bitmasks.
pub(crate) struct Indexed<'a> {
    pub ids: Vec<OpId>,
    pub ops: Vec<&'a OpInstance>,
    /// `preds[i]`: operations that precede `i` in real time.
    pub preds: Vec<u32>,
    pub complete: u32,
    pub responses: Vec<Option<&'a Value>>,
    pub inv_pos: Vec<usize>,
    pub res_pos: Vec<Option<usize>>,
}

impl<'a> Indexed<'a> {
    pub fn new(h: &'a History) -> Self {
        let ids = h.invocation_order();
        assert!(ids.len() <= 32, "bitmask index over {} operations", ids.len());
        let ops = ids.iter().map(|id| h.op(*id).expect("invoked op in catalog")).collect();
        let preds = ids
            .iter()
            .map(|b| {
                ids.iter()
                    .enumerate()
                    .filter(|(_, a)| h.precedes(**a, *b))
                    .fold(0u32, |m, (i, _)| m | (1 << i))
            })
            .collect();
        let complete = ids.iter().enumerate().filter(|(_, id)| h.is_complete(**id)).fold(0u32, |m, (i, _)| m | (1 << i));
        Indexed {
            responses: ids.iter().map(|id| h.response(*id)).collect(),
            inv_pos: ids.iter().map(|id| h.inv_index(*id).expect("invoked")).collect(),
            res_pos: ids.iter().map(|id| h.res_index(*id)).collect(),
            ids,
            ops,
            preds,
            complete,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn index_of(&self, id: OpId) -> Option<usize> {
        self.ids.iter().position(|x| *x == id)
    }

    /// Operations that may come next after the set `mask`.
    pub fn ready(&self, mask: u32) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&i| mask & (1 << i) == 0 && self.preds[i] & !mask == 0)
    }

    pub fn ids_of(&self, seq: &[usize]) -> Vec<OpId> {
        seq.iter().map(|&i| self.ids[i]).collect()
    }
}
