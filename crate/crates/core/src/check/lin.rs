//! Exact linearizability checking by depth-first search over
//! precedence-respecting orders, with pending operations optional.

use std::collections::{BTreeSet, HashSet};

use crate::check::graph::{all_topological_orders, Violation};
use crate::check::history::History;
use crate::check::{CheckError, Indexed};
use crate::op::OpId;
use crate::sched::trace::Trace;
use crate::seqspec::{ObjectSpec, ObjectState};

pub const DEFAULT_MAX_LIN_OPS: usize = 10;

/// Returns a linearization of `h`, or `None` if there is none.
///
/// The witness contains every complete operation and those pending
/// operations that had to take effect.
pub fn check_linearizable(spec: &dyn ObjectSpec, h: &History, max_ops: usize) -> Result<Option<Vec<OpId>>, CheckError> {
    if h.len() > max_ops {
        return Err(CheckError::Capacity { what: "linearizability check", size: h.len(), cap: max_ops, op: None });
    }
    for op in h.ops().values() {
        spec.validate(op)?;
    }
    let idx = Indexed::new(h);
    let mut failed = HashSet::new();
    let mut seq = Vec::with_capacity(idx.len());
    if search(spec, &idx, 0, spec.initial_state(), &mut seq, &mut failed)? {
        Ok(Some(idx.ids_of(&seq)))
    } else {
        Ok(None)
    }
}

fn search(
    spec: &dyn ObjectSpec,
    idx: &Indexed<'_>,
    mask: u32,
    state: ObjectState,
    seq: &mut Vec<usize>,
    failed: &mut HashSet<(u32, ObjectState)>,
) -> Result<bool, CheckError> {
    if idx.complete & !mask == 0 {
        return Ok(true);
    }
    if failed.contains(&(mask, state.clone())) {
        return Ok(false);
    }
    for i in idx.ready(mask).collect::<Vec<_>>() {
        let (r, next) = spec.apply(&state, idx.ops[i])?;
        if idx.responses[i].is_some_and(|want| *want != r) {
            continue;
        }
        seq.push(i);
        if search(spec, idx, mask | (1 << i), next, seq, failed)? {
            return Ok(true);
        }
        seq.pop();
    }
    failed.insert((mask, state));
    Ok(false)
}

/// Whether `seq` is a linearization of `h`: it contains every complete
/// operation and only invoked ones, respects real-time order, and is legal
/// with the recorded responses.
pub fn is_linearization(spec: &dyn ObjectSpec, h: &History, seq: &[OpId]) -> Result<bool, CheckError> {
    let set: BTreeSet<OpId> = seq.iter().copied().collect();
    if set.len() != seq.len() || !set.iter().all(|id| h.op(*id).is_some()) {
        return Ok(false);
    }
    if !h.ops().keys().filter(|id| h.is_complete(**id)).all(|id| set.contains(id)) {
        return Ok(false);
    }
    for (j, b) in seq.iter().enumerate() {
        if seq[j + 1..].iter().any(|a| h.precedes(*a, *b)) {
            return Ok(false);
        }
    }
    let mut state = spec.initial_state();
    for id in seq {
        let (r, next) = spec.apply(&state, h.op(*id).expect("checked above"))?;
        if h.response(*id).is_some_and(|want| *want != r) {
            return Ok(false);
        }
        state = next;
    }
    Ok(true)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, serde::Serialize)]
pub struct LinReport {
    pub witness: Option<Vec<OpId>>,
    /// Topological orders of the final graph that were checked.
    pub orders_checked: usize,
    pub violations: Vec<Violation>,
}

/// Vertex bound for enumerating every topological order of the final graph.
pub const MAX_ORDER_VERTICES: usize = 8;

/// Checks a run's history, and that every topological order of the final
/// dependency graph (when small enough) is itself a linearization.
pub fn check_trace_linearizability(spec: &dyn ObjectSpec, trace: &Trace, max_ops: usize) -> Result<LinReport, CheckError> {
    let h = trace.history();
    let mut report = LinReport { witness: check_linearizable(spec, &h, max_ops)?, ..Default::default() };
    if report.witness.is_none() {
        report.violations.push(Violation::new("linearizability", "history has no linearization"));
    }
    let final_c = crate::check::graph::final_graph(trace);
    if final_c.committed().len() > MAX_ORDER_VERTICES {
        return Ok(report);
    }
    let Some(orders) = all_topological_orders(&final_c.c) else {
        report.violations.push(Violation::new("linearizability", "final graph is cyclic"));
        return Ok(report);
    };
    for order in orders {
        report.orders_checked += 1;
        if !is_linearization(spec, &h, &order)? {
            report.violations.push(Violation::new(
                "topological-linearization",
                format!("order {} of the final graph is not a linearization", fmt_seq(&order)),
            ));
            break;
        }
    }
    Ok(report)
}

pub(crate) fn fmt_seq(seq: &[OpId]) -> String {
    let parts: Vec<String> = seq.iter().map(|o| o.to_string()).collect();
    format!("[{}]", parts.join(","))
}
