//! Dynamic-concurrency audit: every publish that used consensus must have a
//! system state in which it fails to commute with some set of pending
//! operations.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::check::states::{enumerate_system_states, SystemState};
use crate::check::CheckError;
use crate::op::{OpId, OpInstance};
use crate::sched::trace::Trace;
use crate::seqspec::{self, ObjectSpec};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    pub state: SystemState,
    /// The non-commuting subset `O'` of `state.O`.
    pub subset: BTreeSet<OpId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublishAudit {
    pub op: OpId,
    pub used_strong_sync: bool,
    pub cap_triggered: bool,
    pub witness: Option<Witness>,
}

impl PublishAudit {
    pub fn passed(&self) -> bool {
        !self.used_strong_sync || self.cap_triggered || self.witness.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditVerdict {
    pub publishes: Vec<PublishAudit>,
}

impl AuditVerdict {
    pub fn passed(&self) -> bool {
        self.publishes.iter().all(PublishAudit::passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &PublishAudit> {
        self.publishes.iter().filter(|p| !p.passed())
    }

    pub fn consensus_users(&self) -> usize {
        self.publishes.iter().filter(|p| p.used_strong_sync).count()
    }
}

/// Audits every invoked publish of the trace. Only publishes that used
/// consensus without a cap fallthrough need the state enumeration, so the
/// bound applies only when such a publish exists.
pub fn audit_dynamic_concurrency(spec: &dyn ObjectSpec, trace: &Trace, max_ops: usize) -> Result<AuditVerdict, CheckError> {
    let h = trace.history();
    let users: BTreeSet<OpId> = trace.sync_usage().iter().map(|u| u.publish).collect();
    let capped = trace.cap_fallthroughs();
    let mut publishes = Vec::new();
    for id in h.invocation_order() {
        let used = users.contains(&id);
        let cap_triggered = capped.contains(&id);
        let witness = if used && !cap_triggered { find_witness(spec, &h, id, max_ops)? } else { None };
        publishes.push(PublishAudit { op: id, used_strong_sync: used, cap_triggered, witness });
    }
    Ok(AuditVerdict { publishes })
}

/// First system state during `op`, in enumeration order, with a subset of
/// pending operations `op` does not commute with.
pub fn find_witness(
    spec: &dyn ObjectSpec,
    h: &crate::check::history::History,
    op: OpId,
    max_ops: usize,
) -> Result<Option<Witness>, CheckError> {
    let target = h.op(op).ok_or_else(|| CheckError::Malformed(format!("{op} not in history")))?;
    for state in enumerate_system_states(spec, h, op, max_ops)? {
        if let Some(subset) = non_commuting_subset(spec, h.ops(), &state, target)? {
            return Ok(Some(Witness { state, subset }));
        }
    }
    Ok(None)
}

/// Smallest subset of `state.O` that `op` fails to commute with after `l`.
pub fn non_commuting_subset(
    spec: &dyn ObjectSpec,
    ops: &std::collections::BTreeMap<OpId, OpInstance>,
    state: &SystemState,
    op: &OpInstance,
) -> Result<Option<BTreeSet<OpId>>, CheckError> {
    let l: Vec<&OpInstance> = state.l.iter().map(|id| &ops[id]).collect();
    let pending: Vec<&OpInstance> = state.pending.iter().map(|id| &ops[id]).collect();
    let base = seqspec::state_after(spec, &l)?;
    Ok(seqspec::first_non_commuting_subset(spec, &base, op, &pending)?
        .map(|idx| idx.into_iter().map(|i| pending[i].id).collect()))
}
