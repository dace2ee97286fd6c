//! The dynamically concurrent universal construction.
//!
//! `publish(op)` runs as a [`PublishMachine`]: every call to
//! [`PublishMachine::step`] performs exactly one access to a shared base
//! object followed by local computation. The step order is
//!
//! 1. `add_A(op)`, read, `add_B(op, |A|)`, read;
//! 2. return if `op` is already in C;
//! 3. if `op` commutes in `linearize(C)` with every subset of the announced
//!    but uncommitted operations, `add_C(op, vertices(C))` and return;
//! 4. otherwise scan `K`, then loop: read, return if committed, propose the
//!    uncommitted operation with the smallest B-value to `CONS_k`, read,
//!    commit the decided operation if needed, write `K[i] = k`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::abc::{AbcGraph, AbcLocal, AbcView};
use crate::base::{BaseError, ConsensusObject, SnapshotObject, SyncUsage, SyncUsageLog};
use crate::op::{OpId, OpInstance, ProcessId};
use crate::sched::trace::Access;
use crate::seqspec::{self, ObjectSpec, SpecError, DEFAULT_COMMUTE_CAP};
use crate::value::Value;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EngineError {
    #[error(transparent)]
    Base(#[from] BaseError),
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("dependency graph has a cycle through {0}")]
    Cycle(OpId),
    #[error("operation {0} is not part of the workload")]
    UnknownOp(OpId),
    #[error("operation {op} is not in the sequence it should be evaluated in")]
    NotInSequence { op: OpId },
    #[error("{0}: no booked uncommitted operation to propose")]
    EmptyArgmin(OpId),
    #[error("publish({0}) already returned")]
    Finished(OpId),
}

/// Deliberately broken engine variants used to show that the checkers catch
/// real bugs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mutation {
    #[default]
    None,
    /// Treat every commutativity check as passed.
    SkipCommuteCheck,
    /// Commit on the conflict-free path with `vertices(C)` from the first
    /// read instead of the second.
    StaleDeps,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineConfig {
    /// Largest set of concurrent operations the commutativity check
    /// enumerates; larger sets go straight to conflict resolution.
    pub commute_cap: usize,
    #[serde(default)]
    pub mutation: Mutation,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig { commute_cap: DEFAULT_COMMUTE_CAP, mutation: Mutation::None }
    }
}

/// Shared objects of the construction.
#[derive(Debug, Clone)]
pub struct SharedMemory {
    pub abc: AbcGraph,
    pub k: SnapshotObject<u64>,
    pub consensus: BTreeMap<u64, ConsensusObject<OpId>>,
    pub sync_log: SyncUsageLog,
}

impl SharedMemory {
    pub fn new(n_processes: usize) -> Self {
        SharedMemory {
            abc: AbcGraph::new(n_processes),
            k: SnapshotObject::new("k", n_processes, 0),
            consensus: BTreeMap::new(),
            sync_log: SyncUsageLog::default(),
        }
    }
}

/// Read-only inputs every machine needs.
#[derive(Debug, Clone, Copy)]
pub struct EngineContext<'a> {
    pub spec: &'a dyn ObjectSpec,
    pub ops: &'a BTreeMap<OpId, OpInstance>,
    pub config: &'a EngineConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommitPath {
    ConflictFree,
    ConflictResolution,
}

/// Audit record emitted when `publish(op)` returns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitCertificate {
    pub op: OpId,
    pub path: CommitPath,
    /// Incoming edges of `op` in the graph the response was computed from.
    pub dependencies: BTreeSet<OpId>,
    pub response: Value,
    pub used_consensus: bool,
    pub cap_triggered: bool,
    /// `max K` read when entering conflict resolution.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k0: Option<u64>,
    /// Loop counter at return.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_k: Option<u64>,
}

impl CommitCertificate {
    /// Conflict-resolution iterations executed, if the loop was entered.
    pub fn iterations(&self) -> Option<u64> {
        Some(self.final_k? - self.k0?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Phase {
    Announce,
    Read1,
    Book(u64),
    Read2,
    CommitFree { deps: BTreeSet<OpId>, l: Vec<OpId> },
    ScanK,
    CrRead1,
    Propose(OpId),
    CrRead2(OpId),
    CrCommit { decided: OpId, deps: BTreeSet<OpId> },
    WriteK,
    Done,
}

/// What one step did.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepOutput {
    pub access: Access,
    /// Set on the step after which the commutativity check overflowed the cap.
    pub cap_fallthrough: bool,
    pub returned: Option<CommitCertificate>,
}

impl StepOutput {
    fn plain(access: Access) -> Self {
        StepOutput { access, cap_fallthrough: false, returned: None }
    }
}

/// State of one `publish(op)` invocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublishMachine {
    op: OpId,
    process: ProcessId,
    phase: Phase,
    k: u64,
    k0: Option<u64>,
    read1_committed: BTreeSet<OpId>,
    cap_triggered: bool,
    proposals: u64,
}

impl PublishMachine {
    pub fn new(op: &OpInstance) -> Self {
        PublishMachine {
            op: op.id,
            process: op.process(),
            phase: Phase::Announce,
            k: 0,
            k0: None,
            read1_committed: BTreeSet::new(),
            cap_triggered: false,
            proposals: 0,
        }
    }

    pub fn op(&self) -> OpId {
        self.op
    }

    pub fn is_done(&self) -> bool {
        self.phase == Phase::Done
    }

    pub fn in_conflict_resolution(&self) -> bool {
        self.k0.is_some()
    }

    /// Performs the next shared-object access. `step` is the global trace step
    /// assigned to it, used to attribute consensus usage.
    pub fn step(
        &mut self,
        ctx: &EngineContext<'_>,
        mem: &mut SharedMemory,
        local: &mut AbcLocal,
        step: u64,
    ) -> Result<StepOutput, EngineError> {
        let p = self.process;
        let op = self.op;
        let phase = std::mem::replace(&mut self.phase, Phase::Done);
        let out = match phase {
            Phase::Announce => {
                let written = mem.abc.add_a(local, p, op)?;
                self.phase = Phase::Read1;
                StepOutput::plain(Access::AddA(written))
            }
            Phase::Read1 => {
                let view = mem.abc.read();
                self.read1_committed = view.committed();
                self.phase = Phase::Book(view.a.len() as u64);
                StepOutput::plain(Access::Read(view))
            }
            Phase::Book(b) => {
                let written = mem.abc.add_b(local, p, op, b)?;
                self.phase = Phase::Read2;
                StepOutput::plain(Access::AddB(written))
            }
            Phase::Read2 => {
                let view = mem.abc.read();
                let committed = view.committed();
                let l = linearize(&view.c)?;
                if committed.contains(&op) {
                    let response = result_in(ctx.spec, ctx.ops, &l, op)?;
                    let cert = self.certificate(CommitPath::ConflictResolution, &view, response);
                    return Ok(StepOutput { access: Access::Read(view), cap_fallthrough: false, returned: Some(cert) });
                }
                let concurrent: Vec<OpId> =
                    view.a.iter().copied().filter(|o| *o != op && !committed.contains(o)).collect();
                let commutes = match ctx.config.mutation {
                    Mutation::SkipCommuteCheck => true,
                    _ => self.commutes_with_concurrent(ctx, &l, &concurrent)?,
                };
                if commutes {
                    let deps = match ctx.config.mutation {
                        Mutation::StaleDeps => std::mem::take(&mut self.read1_committed),
                        _ => committed,
                    };
                    self.phase = Phase::CommitFree { deps, l };
                } else {
                    self.phase = Phase::ScanK;
                }
                StepOutput { access: Access::Read(view), cap_fallthrough: self.cap_triggered, returned: None }
            }
            Phase::CommitFree { deps, mut l } => {
                let written = mem.abc.add_c(local, p, op, deps.clone())?;
                l.push(op);
                let response = result_in(ctx.spec, ctx.ops, &l, op)?;
                let cert = CommitCertificate {
                    op,
                    path: CommitPath::ConflictFree,
                    dependencies: deps,
                    response,
                    used_consensus: false,
                    cap_triggered: false,
                    k0: None,
                    final_k: None,
                };
                StepOutput { access: Access::AddC(written), cap_fallthrough: false, returned: Some(cert) }
            }
            Phase::ScanK => {
                let ks = mem.k.scan();
                let k0 = ks.iter().copied().max().unwrap_or(0);
                self.k0 = Some(k0);
                self.k = k0 + 1;
                self.phase = Phase::CrRead1;
                StepOutput::plain(Access::Scan(ks))
            }
            Phase::CrRead1 => {
                let view = mem.abc.read();
                let committed = view.committed();
                if committed.contains(&op) {
                    let l = linearize(&view.c)?;
                    let response = result_in(ctx.spec, ctx.ops, &l, op)?;
                    let cert = self.certificate(CommitPath::ConflictResolution, &view, response);
                    return Ok(StepOutput { access: Access::Read(view), cap_fallthrough: false, returned: Some(cert) });
                }
                let candidate = view
                    .b
                    .iter()
                    .filter(|(o, _)| !committed.contains(o))
                    .min_by_key(|(o, b)| (**b, **o))
                    .map(|(o, _)| *o)
                    .ok_or(EngineError::EmptyArgmin(op))?;
                self.phase = Phase::Propose(candidate);
                StepOutput::plain(Access::Read(view))
            }
            Phase::Propose(candidate) => {
                let k = self.k;
                let decided = mem.consensus.entry(k).or_insert_with(|| ConsensusObject::new(k)).propose(candidate);
                mem.sync_log.record(SyncUsage { publish: op, object: k, step });
                self.proposals += 1;
                self.phase = Phase::CrRead2(decided);
                StepOutput::plain(Access::Propose { k, proposed: candidate, decided })
            }
            Phase::CrRead2(decided) => {
                let view = mem.abc.read();
                let committed = view.committed();
                self.phase = if committed.contains(&decided) {
                    Phase::WriteK
                } else {
                    Phase::CrCommit { decided, deps: committed }
                };
                StepOutput::plain(Access::Read(view))
            }
            Phase::CrCommit { decided, deps } => {
                let written = mem.abc.add_c(local, p, decided, deps)?;
                self.phase = Phase::WriteK;
                StepOutput::plain(Access::AddC(written))
            }
            Phase::WriteK => {
                mem.k.write(p, p, self.k)?;
                let written = self.k;
                self.k += 1;
                self.phase = Phase::CrRead1;
                StepOutput::plain(Access::Write(written))
            }
            Phase::Done => return Err(EngineError::Finished(op)),
        };
        Ok(out)
    }

    fn commutes_with_concurrent(
        &mut self,
        ctx: &EngineContext<'_>,
        l: &[OpId],
        concurrent: &[OpId],
    ) -> Result<bool, EngineError> {
        let l_ops = resolve(ctx.ops, l)?;
        let set = resolve(ctx.ops, concurrent)?;
        let op = resolve_one(ctx.ops, self.op)?;
        match seqspec::commutes_with_all_subsets(ctx.spec, &l_ops, op, &set, ctx.config.commute_cap) {
            Ok(b) => Ok(b),
            Err(SpecError::Capacity { size, cap }) => {
                log::warn!("{}: {size} concurrent operations exceed cap {cap}, resolving by consensus", self.op);
                self.cap_triggered = true;
                Ok(false)
            }
            Err(e) => Err(e.into()),
        }
    }

    fn certificate(&self, path: CommitPath, view: &AbcView, response: Value) -> CommitCertificate {
        CommitCertificate {
            op: self.op,
            path,
            dependencies: view.c.get(&self.op).cloned().unwrap_or_default(),
            response,
            used_consensus: self.proposals > 0,
            cap_triggered: self.cap_triggered,
            k0: self.k0,
            final_k: self.k0.map(|_| self.k),
        }
    }
}

pub fn resolve_one(ops: &BTreeMap<OpId, OpInstance>, id: OpId) -> Result<&OpInstance, EngineError> {
    ops.get(&id).ok_or(EngineError::UnknownOp(id))
}

pub fn resolve<'a>(ops: &'a BTreeMap<OpId, OpInstance>, ids: &[OpId]) -> Result<Vec<&'a OpInstance>, EngineError> {
    ids.iter().map(|id| resolve_one(ops, *id)).collect()
}

/// Deterministic topological ordering of a dependency graph (Kahn's
/// algorithm, ready operations taken in `(process, seq)` order).
pub fn linearize(c: &BTreeMap<OpId, BTreeSet<OpId>>) -> Result<Vec<OpId>, EngineError> {
    let mut vertices: BTreeSet<OpId> = c.keys().copied().collect();
    for deps in c.values() {
        vertices.extend(deps.iter().copied());
    }
    let mut indegree: BTreeMap<OpId, usize> = vertices.iter().map(|v| (*v, 0)).collect();
    let mut successors: BTreeMap<OpId, Vec<OpId>> = BTreeMap::new();
    for (target, deps) in c {
        for src in deps {
            *indegree.get_mut(target).expect("vertex") += 1;
            successors.entry(*src).or_default().push(*target);
        }
    }
    let mut ready: BTreeSet<OpId> = indegree.iter().filter(|(_, d)| **d == 0).map(|(v, _)| *v).collect();
    let mut order = Vec::with_capacity(vertices.len());
    while let Some(v) = ready.pop_first() {
        order.push(v);
        for s in successors.get(&v).into_iter().flatten() {
            let d = indegree.get_mut(s).expect("vertex");
            *d -= 1;
            if *d == 0 {
                ready.insert(*s);
            }
        }
    }
    if order.len() != vertices.len() {
        let stuck = indegree.iter().find(|(_, d)| **d > 0).map(|(v, _)| *v).expect("cycle vertex");
        return Err(EngineError::Cycle(stuck));
    }
    Ok(order)
}

/// Response of `op` when `l` is applied from the initial state.
pub fn result_in(
    spec: &dyn ObjectSpec,
    ops: &BTreeMap<OpId, OpInstance>,
    l: &[OpId],
    op: OpId,
) -> Result<Value, EngineError> {
    let mut state = spec.initial_state();
    for id in l {
        let (r, next) = spec.apply(&state, resolve_one(ops, *id)?)?;
        if *id == op {
            return Ok(r);
        }
        state = next;
    }
    Err(EngineError::NotInSequence { op })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objects::list_spec;

    fn id(p: u32, s: u32) -> OpId {
        OpId::new(p, s)
    }

    fn catalog(ops: &[OpInstance]) -> BTreeMap<OpId, OpInstance> {
        ops.iter().map(|o| (o.id, o.clone())).collect()
    }

    #[test]
    fn linearize_empty() {
        assert_eq!(linearize(&BTreeMap::new()).unwrap(), Vec::<OpId>::new());
    }

    #[test]
    fn linearize_chain() {
        let (x, y, z) = (id(2, 0), id(0, 0), id(1, 0));
        let c = BTreeMap::from([
            (x, BTreeSet::new()),
            (y, BTreeSet::from([x])),
            (z, BTreeSet::from([x, y])),
        ]);
        assert_eq!(linearize(&c).unwrap(), vec![x, y, z]);
    }

    #[test]
    fn linearize_diamond_breaks_ties_by_id() {
        let (x, y, z, w) = (id(3, 0), id(2, 0), id(1, 0), id(0, 0));
        let c = BTreeMap::from([
            (x, BTreeSet::new()),
            (y, BTreeSet::from([x])),
            (z, BTreeSet::from([x])),
            (w, BTreeSet::from([x, y, z])),
        ]);
        assert_eq!(linearize(&c).unwrap(), vec![x, z, y, w]);
    }

    #[test]
    fn linearize_detects_cycle() {
        let (x, y) = (id(0, 0), id(1, 0));
        let c = BTreeMap::from([(x, BTreeSet::from([y])), (y, BTreeSet::from([x]))]);
        assert!(matches!(linearize(&c), Err(EngineError::Cycle(_))));
    }

    #[test]
    fn result_in_examples() {
        let spec = list_spec();
        let ops = [
            OpInstance::new(2, 0, "append", vec!["a".into()]),
            OpInstance::new(1, 0, "append", vec!["b".into()]),
            OpInstance::new(3, 0, "append", vec!["a".into()]),
            OpInstance::new(2, 1, "readLast", vec![]),
            OpInstance::new(2, 2, "readAll", vec![]),
        ];
        let cat = catalog(&ops);
        assert_eq!(result_in(&spec, &cat, &[id(2, 0), id(2, 1)], id(2, 1)).unwrap(), Value::str("a"));
        assert_eq!(result_in(&spec, &cat, &[id(2, 1)], id(2, 1)).unwrap(), Value::Nil);
        let pre: Vec<_> = ops.iter().map(|o| o.id).collect();
        assert_eq!(
            result_in(&spec, &cat, &pre, id(2, 2)).unwrap(),
            Value::List(vec!["a".into(), "b".into(), "a".into()])
        );
        assert!(matches!(
            result_in(&spec, &cat, &[id(2, 0)], id(2, 2)),
            Err(EngineError::NotInSequence { .. })
        ));
    }

    #[test]
    fn solo_publish_takes_conflict_free_path() {
        let spec = list_spec();
        let op = OpInstance::new(0, 0, "append", vec!["a".into()]);
        let cat = catalog(std::slice::from_ref(&op));
        let config = EngineConfig::default();
        let ctx = EngineContext { spec: &spec, ops: &cat, config: &config };
        let mut mem = SharedMemory::new(1);
        let mut local = AbcLocal::default();
        let mut m = PublishMachine::new(&op);
        let mut kinds = Vec::new();
        let cert = loop {
            let out = m.step(&ctx, &mut mem, &mut local, kinds.len() as u64).unwrap();
            kinds.push(out.access.name());
            if let Some(c) = out.returned {
                break c;
            }
        };
        assert_eq!(kinds, ["add_a", "read", "add_b", "read", "add_c"]);
        assert_eq!(cert.path, CommitPath::ConflictFree);
        assert_eq!(cert.response, Value::ok());
        assert!(cert.dependencies.is_empty());
        assert!(mem.sync_log.is_empty());
        assert!(m.step(&ctx, &mut mem, &mut local, 9).is_err());
    }
}
