//! Sequential object model: specifications, folding sequences of operations,
//! equivalence of orderings and commutativity of an operation with
//! sequences and sets of operations.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::op::{OpId, OpInstance};
use crate::value::Value;

/// Object states are plain values; each specification documents its shape.
pub type ObjectState = Value;

/// Default cap on the number of concurrent operations over which subset and
/// permutation enumeration is attempted.
pub const DEFAULT_COMMUTE_CAP: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SpecError {
    #[error("malformed operation {op}: {reason}")]
    MalformedOp { op: String, reason: String },
    #[error("unknown object specification {0:?}")]
    UnknownSpec(String),
    #[error("invalid configuration for {spec}: {reason}")]
    BadConfig { spec: String, reason: String },
    #[error("malformed sequence: {0}")]
    MalformedSequence(String),
    #[error("enumeration over {size} operations exceeds the cap of {cap}")]
    Capacity { size: usize, cap: usize },
}

impl SpecError {
    pub fn malformed(op: &OpInstance, reason: impl Into<String>) -> Self {
        SpecError::MalformedOp { op: op.to_string(), reason: reason.into() }
    }
}

/// A sequential specification: initial state, a deterministic transition
/// function and an equivalence on states.
pub trait ObjectSpec: Send + Sync + fmt::Debug {
    /// Name under which scenario files refer to the specification.
    fn name(&self) -> &str;

    fn initial_state(&self) -> ObjectState;

    /// Rejects operations that are outside the object's signature.
    fn validate(&self, op: &OpInstance) -> Result<(), SpecError>;

    /// Applies `op` to `state`, returning the response and the next state.
    fn apply(&self, state: &ObjectState, op: &OpInstance) -> Result<(Value, ObjectState), SpecError>;

    /// State equivalence used when comparing orderings. Structural by default.
    fn state_eq(&self, a: &ObjectState, b: &ObjectState) -> bool {
        a == b
    }
}

/// Final state and per-operation responses of a folded sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrderingOutcome {
    pub final_state: ObjectState,
    pub responses: BTreeMap<OpId, Value>,
}

impl OrderingOutcome {
    pub fn response(&self, op: OpId) -> Option<&Value> {
        self.responses.get(&op)
    }
}

fn ensure_distinct(ops: &[&OpInstance], what: &str) -> Result<BTreeSet<OpId>, SpecError> {
    let mut ids = BTreeSet::new();
    for op in ops {
        if !ids.insert(op.id) {
            return Err(SpecError::MalformedSequence(format!("{what} contains {} twice", op.id)));
        }
    }
    Ok(ids)
}

/// Folds `seq` over `state`, pushing responses into `responses`.
pub fn fold_from(
    spec: &dyn ObjectSpec,
    state: &ObjectState,
    seq: &[&OpInstance],
    responses: &mut BTreeMap<OpId, Value>,
) -> Result<ObjectState, SpecError> {
    let mut state = state.clone();
    for op in seq {
        let (r, next) = spec.apply(&state, op)?;
        responses.insert(op.id, r);
        state = next;
    }
    Ok(state)
}

/// Folds `seq` from the initial state.
pub fn apply_sequence(spec: &dyn ObjectSpec, seq: &[&OpInstance]) -> Result<OrderingOutcome, SpecError> {
    ensure_distinct(seq, "sequence")?;
    let mut responses = BTreeMap::new();
    let final_state = fold_from(spec, &spec.initial_state(), seq, &mut responses)?;
    Ok(OrderingOutcome { final_state, responses })
}

/// State reached after folding `seq` from the initial state, ignoring responses.
pub fn state_after(spec: &dyn ObjectSpec, seq: &[&OpInstance]) -> Result<ObjectState, SpecError> {
    let mut state = spec.initial_state();
    for op in seq {
        state = spec.apply(&state, op)?.1;
    }
    Ok(state)
}

pub fn outcomes_equivalent(spec: &dyn ObjectSpec, a: &OrderingOutcome, b: &OrderingOutcome) -> bool {
    a.responses == b.responses && spec.state_eq(&a.final_state, &b.final_state)
}

/// Whether two orderings of the same set of operations reach equivalent
/// states with identical responses for every operation.
pub fn orderings_equivalent(
    spec: &dyn ObjectSpec,
    s: &[&OpInstance],
    s2: &[&OpInstance],
) -> Result<bool, SpecError> {
    let a = ensure_distinct(s, "first ordering")?;
    let b = ensure_distinct(s2, "second ordering")?;
    if a != b {
        return Err(SpecError::MalformedSequence("orderings are not permutations of each other".into()));
    }
    let oa = apply_sequence(spec, s)?;
    let ob = apply_sequence(spec, s2)?;
    Ok(outcomes_equivalent(spec, &oa, &ob))
}

fn check_commute_inputs(l: &[&OpInstance], op: &OpInstance, s: &[&OpInstance]) -> Result<(), SpecError> {
    let l_ids = ensure_distinct(l, "prefix")?;
    let s_ids = ensure_distinct(s, "operation set")?;
    if l_ids.contains(&op.id) {
        return Err(SpecError::MalformedSequence(format!("{} already in the prefix", op.id)));
    }
    if s_ids.contains(&op.id) {
        return Err(SpecError::MalformedSequence(format!("{} is part of the set it is compared with", op.id)));
    }
    if let Some(x) = l_ids.intersection(&s_ids).next() {
        return Err(SpecError::MalformedSequence(format!("{x} appears in both the prefix and the set")));
    }
    Ok(())
}

/// `l·s·op ≃ l·op·s`.
pub fn commutes_in(
    spec: &dyn ObjectSpec,
    l: &[&OpInstance],
    op: &OpInstance,
    s: &[&OpInstance],
) -> Result<bool, SpecError> {
    check_commute_inputs(l, op, s)?;
    let base = state_after(spec, l)?;
    // Responses of `l` are shared by both orderings, so compare from its end state.
    let mut ra = BTreeMap::new();
    let mid = fold_from(spec, &base, s, &mut ra)?;
    let (op_a, end_a) = spec.apply(&mid, op)?;
    ra.insert(op.id, op_a);

    let (op_b, after_op) = spec.apply(&base, op)?;
    let mut rb = BTreeMap::from([(op.id, op_b)]);
    let end_b = fold_from(spec, &after_op, s, &mut rb)?;

    Ok(ra == rb && spec.state_eq(&end_a, &end_b))
}

/// `op` commutes in `l` with every ordering of `set`.
pub fn commutes_with_set(
    spec: &dyn ObjectSpec,
    l: &[&OpInstance],
    op: &OpInstance,
    set: &[&OpInstance],
) -> Result<bool, SpecError> {
    check_commute_inputs(l, op, set)?;
    let base = state_after(spec, l)?;
    commutes_with_set_from(spec, &base, op, set)
}

/// Same as [`commutes_with_set`] but starting from an already folded prefix
/// state. Inputs are assumed to satisfy the disjointness preconditions.
pub fn commutes_with_set_from(
    spec: &dyn ObjectSpec,
    base: &ObjectState,
    op: &OpInstance,
    set: &[&OpInstance],
) -> Result<bool, SpecError> {
    let (op_resp, after_op) = spec.apply(base, op)?;
    let mut used = vec![false; set.len()];
    every_ordering_commutes(spec, op, &op_resp, set, &mut used, base.clone(), after_op)
}

// Walks all orderings `w` of the unused elements, keeping `a = l·w` and
// `b = l·op·w` side by side so that shared prefixes are folded once.
fn every_ordering_commutes(
    spec: &dyn ObjectSpec,
    op: &OpInstance,
    op_resp: &Value,
    set: &[&OpInstance],
    used: &mut [bool],
    a: ObjectState,
    b: ObjectState,
) -> Result<bool, SpecError> {
    let mut leaf = true;
    for i in 0..set.len() {
        if used[i] {
            continue;
        }
        leaf = false;
        let (ra, na) = spec.apply(&a, set[i])?;
        let (rb, nb) = spec.apply(&b, set[i])?;
        if ra != rb {
            return Ok(false);
        }
        used[i] = true;
        let ok = every_ordering_commutes(spec, op, op_resp, set, used, na, nb)?;
        used[i] = false;
        if !ok {
            return Ok(false);
        }
    }
    if leaf {
        let (r, end_a) = spec.apply(&a, op)?;
        return Ok(&r == op_resp && spec.state_eq(&end_a, &b));
    }
    Ok(true)
}

/// `op` commutes in `l` with every subset of `set`. Fails with
/// [`SpecError::Capacity`] when `set` is larger than `cap`.
pub fn commutes_with_all_subsets(
    spec: &dyn ObjectSpec,
    l: &[&OpInstance],
    op: &OpInstance,
    set: &[&OpInstance],
    cap: usize,
) -> Result<bool, SpecError> {
    check_commute_inputs(l, op, set)?;
    if set.len() > cap {
        return Err(SpecError::Capacity { size: set.len(), cap });
    }
    let base = state_after(spec, l)?;
    Ok(first_non_commuting_subset(spec, &base, op, set)?.is_none())
}

/// Smallest-first search for a subset of `set` with which `op` does not
/// commute from `base`. Returns the subset's indices.
pub fn first_non_commuting_subset(
    spec: &dyn ObjectSpec,
    base: &ObjectState,
    op: &OpInstance,
    set: &[&OpInstance],
) -> Result<Option<Vec<usize>>, SpecError> {
    let n = set.len();
    assert!(n < 32, "subset enumeration over {n} elements");
    let mut masks: Vec<u32> = (1..(1u32 << n)).collect();
    masks.sort_by_key(|m| (m.count_ones(), *m));
    let mut subset = Vec::with_capacity(n);
    for m in masks {
        subset.clear();
        subset.extend((0..n).filter(|i| m & (1 << i) != 0).map(|i| set[i]));
        if !commutes_with_set_from(spec, base, op, &subset)? {
            return Ok(Some((0..n).filter(|i| m & (1 << i) != 0).collect()));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objects::{asset_transfer_spec_with, counter_spec, list_spec, AssetConfig};

    fn op(p: u32, s: u32, m: &str, args: Vec<Value>) -> OpInstance {
        OpInstance::new(p, s, m, args)
    }

    fn append(p: u32, s: u32, v: &str) -> OpInstance {
        op(p, s, "append", vec![Value::str(v)])
    }

    fn refs(ops: &[OpInstance]) -> Vec<&OpInstance> {
        ops.iter().collect()
    }

    #[test]
    fn fold_list_read_last() {
        let spec = list_spec();
        let ops = [append(0, 0, "a"), append(0, 1, "b"), op(0, 2, "readLast", vec![])];
        let out = apply_sequence(&spec, &refs(&ops)).unwrap();
        assert_eq!(out.response(OpId::new(0, 2)), Some(&Value::str("b")));
    }

    #[test]
    fn fold_empty_sequence() {
        let spec = list_spec();
        let out = apply_sequence(&spec, &[]).unwrap();
        assert_eq!(out.final_state, spec.initial_state());
        assert!(out.responses.is_empty());
    }

    #[test]
    fn fold_read_all_matches_figure() {
        let spec = list_spec();
        let ops = [append(2, 0, "a"), append(1, 0, "b"), append(3, 0, "a"), op(2, 1, "readAll", vec![])];
        let out = apply_sequence(&spec, &refs(&ops)).unwrap();
        assert_eq!(
            out.response(OpId::new(2, 1)),
            Some(&Value::List(vec![Value::str("a"), Value::str("b"), Value::str("a")]))
        );
    }

    #[test]
    fn duplicate_in_sequence_is_rejected() {
        let spec = list_spec();
        let a = append(0, 0, "a");
        let err = apply_sequence(&spec, &[&a, &a]).unwrap_err();
        assert!(matches!(err, SpecError::MalformedSequence(_)));
    }

    #[test]
    fn equivalence_examples() {
        let spec = list_spec();
        let a = append(0, 0, "a");
        let b = append(1, 0, "b");
        assert!(orderings_equivalent(&spec, &[&a], &[&a]).unwrap());
        assert!(!orderings_equivalent(&spec, &[&a, &b], &[&b, &a]).unwrap());
        assert!(orderings_equivalent(&spec, &[&a], &[&b]).is_err());
    }

    #[test]
    fn swap_and_read_last_equivalent_after_prefix() {
        let spec = list_spec();
        let pre = [append(2, 0, "a"), append(1, 0, "b"), append(3, 0, "a")];
        let swap = op(3, 1, "swap", vec![Value::Int(0), Value::Int(2)]);
        let rl = op(2, 1, "readLast", vec![]);
        let mut s1 = refs(&pre);
        s1.extend([&swap, &rl]);
        let mut s2 = refs(&pre);
        s2.extend([&rl, &swap]);
        assert!(orderings_equivalent(&spec, &s1, &s2).unwrap());
    }

    #[test]
    fn commutes_in_empty_sequence() {
        let spec = list_spec();
        let a = append(0, 0, "a");
        assert!(commutes_in(&spec, &[], &a, &[]).unwrap());
    }

    fn transfer(p: u32, s: u32, amount: i64) -> OpInstance {
        op(p, s, "transfer", vec![Value::str("alice"), Value::str("bob"), Value::Int(amount)])
    }

    #[test]
    fn transfers_conflict_only_when_balance_is_tight() {
        let tight = asset_transfer_spec_with(AssetConfig::single("alice", 100));
        let loose = asset_transfer_spec_with(AssetConfig::single("alice", 150));
        let t100 = transfer(0, 0, 100);
        let t50 = transfer(1, 0, 50);
        assert!(!commutes_in(&tight, &[], &t100, &[&t50]).unwrap());
        assert!(commutes_in(&loose, &[], &t100, &[&t50]).unwrap());
    }

    #[test]
    fn commutes_in_rejects_overlap() {
        let spec = list_spec();
        let a = append(0, 0, "a");
        let b = append(1, 0, "b");
        assert!(commutes_in(&spec, &[&a], &a, &[]).is_err());
        assert!(commutes_in(&spec, &[], &a, &[&a]).is_err());
        assert!(commutes_in(&spec, &[&b], &a, &[&b]).is_err());
    }

    #[test]
    fn set_examples() {
        let spec = list_spec();
        let pre = [append(2, 0, "a"), append(1, 0, "b"), append(3, 0, "a")];
        let swap = op(3, 1, "swap", vec![Value::Int(0), Value::Int(2)]);
        let rl = op(2, 1, "readLast", vec![]);
        assert!(commutes_with_set(&spec, &refs(&pre), &swap, &[]).unwrap());
        assert!(commutes_with_set(&spec, &refs(&pre), &swap, &[&rl]).unwrap());

        let counter = counter_spec();
        let incs: Vec<_> = (0..3).map(|p| op(p, 0, "inc", vec![])).collect();
        assert!(commutes_with_set(&counter, &[], &incs[0], &[&incs[1], &incs[2]]).unwrap());
    }

    #[test]
    fn all_subsets_examples() {
        let spec = list_spec();
        let swap = op(3, 1, "swap", vec![Value::Int(0), Value::Int(2)]);
        assert!(commutes_with_all_subsets(&spec, &[], &swap, &[], DEFAULT_COMMUTE_CAP).unwrap());

        // State 5 of the worked list example.
        let l5 = [append(2, 0, "a"), append(1, 0, "b"), append(3, 0, "a"), op(2, 1, "readLast", vec![])];
        let o5 = [append(1, 1, "d"), append(0, 0, "c"), op(2, 2, "readAll", vec![])];
        assert!(commutes_with_all_subsets(&spec, &refs(&l5), &swap, &refs(&o5), DEFAULT_COMMUTE_CAP).unwrap());

        let tight = asset_transfer_spec_with(AssetConfig::single("alice", 100));
        let t100 = transfer(0, 0, 100);
        let t50 = transfer(1, 0, 50);
        let rb = op(2, 0, "readBalance", vec![Value::str("alice")]);
        assert!(!commutes_with_all_subsets(&tight, &[], &t100, &[&t50, &rb], DEFAULT_COMMUTE_CAP).unwrap());
    }

    #[test]
    fn all_subsets_cap_is_an_error() {
        let counter = counter_spec();
        let incs: Vec<_> = (0..4).map(|p| op(p, 0, "inc", vec![])).collect();
        let rest: Vec<_> = incs[1..].iter().collect();
        let err = commutes_with_all_subsets(&counter, &[], &incs[0], &rest, 2).unwrap_err();
        assert_eq!(err, SpecError::Capacity { size: 3, cap: 2 });
    }
}
