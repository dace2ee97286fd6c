//! System states during an operation.
//!
//! A pair `(l, O)` is a system state during `op` when some event-boundary
//! prefix `H'` of the history contains `op`'s invocation but not its
//! response, `l` is a prefix of some linearization of the whole history and
//! a linearization of `H'` without `op`, and `O` holds the operations invoked
//! in `H'` that are neither in `l` nor `op` itself.
//!
//! Since `l` is a prefix of a legal linearization of the full history, being
//! a linearization of `H'` reduces to a membership condition: `l` contains
//! every operation that responded in `H'` and only operations invoked in
//! `H'`.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::check::history::History;
use crate::check::{CheckError, Indexed};
use crate::op::OpId;
use crate::seqspec::{ObjectSpec, ObjectState};

pub const DEFAULT_MAX_STATE_OPS: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SystemState {
    pub l: Vec<OpId>,
    #[serde(rename = "O")]
    pub pending: BTreeSet<OpId>,
}

/// All system states during `op`, deduplicated and ordered by the first
/// history prefix that produces them, then by the length and content of `l`.
pub fn enumerate_system_states(
    spec: &dyn ObjectSpec,
    h: &History,
    op: OpId,
    max_ops: usize,
) -> Result<Vec<SystemState>, CheckError> {
    if h.op(op).is_none() {
        return Err(CheckError::Malformed(format!("operation {op} does not occur in the history")));
    }
    if h.len() > max_ops {
        return Err(CheckError::Capacity { what: "system-state enumeration", size: h.len(), cap: max_ops, op: Some(op) });
    }
    for o in h.ops().values() {
        spec.validate(o)?;
    }
    let idx = Indexed::new(h);
    let target = idx.index_of(op).expect("op is invoked");

    let mut prefixes = Vec::new();
    let mut walker = PrefixWalker { spec, idx: &idx, target, extendable: HashMap::new() };
    walker.collect(0, spec.initial_state(), &mut Vec::new(), &mut prefixes)?;

    // Cuts t are event counts: H' is the first t events.
    let n_events = h.events().len();
    let first_cut = idx.inv_pos[target] + 1;
    let last_cut = idx.res_pos[target].unwrap_or(n_events);
    let mut found: BTreeMap<(usize, usize, Vec<OpId>, Vec<OpId>), SystemState> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for t in first_cut..=last_cut {
        let invoked = mask_where(&idx, |i| idx.inv_pos[i] < t) & !(1 << target);
        let responded = mask_where(&idx, |i| idx.res_pos[i].is_some_and(|r| r < t));
        for (seq, mask) in &prefixes {
            if responded & !mask != 0 || mask & !invoked != 0 {
                continue;
            }
            let state = SystemState {
                l: idx.ids_of(seq),
                pending: (0..idx.len()).filter(|i| invoked & !mask & (1 << i) != 0).map(|i| idx.ids[i]).collect(),
            };
            if seen.insert(state.clone()) {
                let key = (t, state.l.len(), state.l.clone(), state.pending.iter().copied().collect());
                found.insert(key, state);
            }
        }
    }
    Ok(found.into_values().collect())
}

fn mask_where(idx: &Indexed<'_>, f: impl Fn(usize) -> bool) -> u32 {
    (0..idx.len()).filter(|&i| f(i)).fold(0, |m, i| m | (1 << i))
}

struct PrefixWalker<'s, 'i, 'h> {
    spec: &'s dyn ObjectSpec,
    idx: &'i Indexed<'h>,
    target: usize,
    extendable: HashMap<(u32, ObjectState), bool>,
}

impl PrefixWalker<'_, '_, '_> {
    /// Legal steps from `(mask, state)`, with the next state.
    fn steps(&self, mask: u32, state: &ObjectState) -> Result<Vec<(usize, ObjectState)>, CheckError> {
        let mut out = Vec::new();
        for i in self.idx.ready(mask) {
            let (r, next) = self.spec.apply(state, self.idx.ops[i])?;
            if self.idx.responses[i].is_none_or(|want| *want == r) {
                out.push((i, next));
            }
        }
        Ok(out)
    }

    /// Whether the prefix can be completed to a linearization of the history.
    fn can_complete(&mut self, mask: u32, state: &ObjectState) -> Result<bool, CheckError> {
        if self.idx.complete & !mask == 0 {
            return Ok(true);
        }
        if let Some(&b) = self.extendable.get(&(mask, state.clone())) {
            return Ok(b);
        }
        let mut ok = false;
        for (i, next) in self.steps(mask, state)? {
            if self.can_complete(mask | (1 << i), &next)? {
                ok = true;
                break;
            }
        }
        self.extendable.insert((mask, state.clone()), ok);
        Ok(ok)
    }

    /// Every extendable prefix that does not contain the target operation.
    fn collect(
        &mut self,
        mask: u32,
        state: ObjectState,
        seq: &mut Vec<usize>,
        out: &mut Vec<(Vec<usize>, u32)>,
    ) -> Result<(), CheckError> {
        out.push((seq.clone(), mask));
        for (i, next) in self.steps(mask, &state)? {
            if i == self.target || !self.can_complete(mask | (1 << i), &next)? {
                continue;
            }
            seq.push(i);
            self.collect(mask | (1 << i), next, seq, out)?;
            seq.pop();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::check::history::HistoryEvent;
    use crate::objects::list_spec;
    use crate::op::OpInstance;

    #[test]
    fn solo_history_has_one_empty_state() {
        let a = OpInstance::new(0, 0, "append", vec!["a".into()]);
        let h = History::new([(a.id, a.clone())].into(), vec![HistoryEvent::Inv { op: a.id }]).unwrap();
        let states = enumerate_system_states(&list_spec(), &h, a.id, 8).unwrap();
        assert_eq!(states, vec![SystemState { l: vec![], pending: BTreeSet::new() }]);
    }

    #[test]
    fn unknown_op_is_malformed() {
        let a = OpInstance::new(0, 0, "append", vec!["a".into()]);
        let h = History::new([(a.id, a.clone())].into(), vec![HistoryEvent::Inv { op: a.id }]).unwrap();
        assert!(matches!(
            enumerate_system_states(&list_spec(), &h, OpId::new(5, 0), 8),
            Err(CheckError::Malformed(_))
        ));
    }

    #[test]
    fn wire_shape() {
        let s = SystemState { l: vec![OpId::new(1, 0)], pending: [OpId::new(2, 0)].into() };
        assert_eq!(serde_json::to_string(&s).unwrap(), r#"{"l":["p1.0"],"O":["p2.0"]}"#);
    }
}
