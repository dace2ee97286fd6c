//! Invariants of the ABC graph and of the conflict-resolution machinery,
//! checked over a recorded trace.
//!
//! The checker replays every write into a model of the snapshot object, so
//! each recorded read is compared with an independently merged view, and the
//! final graph is available even when the run ended without a read.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::abc::{AbcLocal, AbcView};
use crate::check::CheckError;
use crate::engine::{linearize, resolve_one, CommitCertificate};
use crate::op::{OpId, OpInstance, ProcessId};
use crate::sched::trace::{Access, EventBody, Trace};
use crate::seqspec::{ObjectSpec, ObjectState};
use crate::value::Value;

/// Vertex bound for checking every topological order of a recorded graph.
pub const MAX_EQUIVALENCE_VERTICES: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub check: String,
    pub detail: String,
}

impl Violation {
    pub fn new(check: impl Into<String>, detail: impl Into<String>) -> Self {
        Violation { check: check.into(), detail: detail.into() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphReport {
    pub views_checked: usize,
    pub graphs_checked_for_equivalence: usize,
    pub violations: Vec<Violation>,
}

impl GraphReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    fn flag(&mut self, check: &str, detail: String) {
        self.violations.push(Violation::new(check, detail));
    }
}

/// The graph left in shared memory after the last write of the trace.
pub fn final_graph(trace: &Trace) -> AbcView {
    let mut comps = vec![AbcLocal::default(); trace.header.n_processes as usize];
    for ev in &trace.events {
        if let Some(comp) = comps.get_mut(ev.process as usize) {
            apply_write(comp, ev.access());
        }
    }
    AbcView::merge(comps.iter())
}

fn apply_write(comp: &mut AbcLocal, access: Option<&Access>) {
    match access {
        Some(Access::AddA(a)) => comp.a = a.clone(),
        Some(Access::AddB(b)) => comp.b = b.clone(),
        Some(Access::AddC(c)) => comp.c = c.clone(),
        _ => {}
    }
}

/// Every topological order of `c`, or `None` if `c` has a cycle.
pub fn all_topological_orders(c: &BTreeMap<OpId, BTreeSet<OpId>>) -> Option<Vec<Vec<OpId>>> {
    linearize(c).ok()?;
    let verts = vertices(c);
    let preds = pred_masks(c, &verts);
    let mut out = Vec::new();
    let mut seq = Vec::new();
    fn go(verts: &[OpId], preds: &[u32], mask: u32, seq: &mut Vec<OpId>, out: &mut Vec<Vec<OpId>>) {
        if seq.len() == verts.len() {
            out.push(seq.clone());
            return;
        }
        for i in 0..verts.len() {
            if mask & (1 << i) == 0 && preds[i] & !mask == 0 {
                seq.push(verts[i]);
                go(verts, preds, mask | (1 << i), seq, out);
                seq.pop();
            }
        }
    }
    go(&verts, &preds, 0, &mut seq, &mut out);
    Some(out)
}

fn vertices(c: &BTreeMap<OpId, BTreeSet<OpId>>) -> Vec<OpId> {
    let mut v: BTreeSet<OpId> = c.keys().copied().collect();
    for deps in c.values() {
        v.extend(deps.iter().copied());
    }
    v.into_iter().collect()
}

fn pred_masks(c: &BTreeMap<OpId, BTreeSet<OpId>>, verts: &[OpId]) -> Vec<u32> {
    let pos: HashMap<OpId, usize> = verts.iter().enumerate().map(|(i, v)| (*v, i)).collect();
    verts
        .iter()
        .map(|v| c.get(v).into_iter().flatten().fold(0u32, |m, s| m | (1 << pos[s])))
        .collect()
}

/// Checks that all topological orders of `c` are equivalent, and so are any
/// two of their prefixes with equal sets. Dynamic programming over downsets:
/// the first path reaching a downset fixes its state and responses, and every
/// other path must agree.
fn check_order_equivalence(
    spec: &dyn ObjectSpec,
    ops: &BTreeMap<OpId, OpInstance>,
    c: &BTreeMap<OpId, BTreeSet<OpId>>,
) -> Result<Option<String>, CheckError> {
    let verts = vertices(c);
    let preds = pred_masks(c, &verts);
    let instances = verts.iter().map(|v| resolve_one(ops, *v)).collect::<Result<Vec<_>, _>>()?;
    let mut reached: BTreeMap<u32, (ObjectState, BTreeMap<OpId, Value>)> = BTreeMap::new();
    reached.insert(0, (spec.initial_state(), BTreeMap::new()));
    // Downsets in increasing popcount order are processed after all their
    // predecessors.
    let mut frontier = vec![0u32];
    while !frontier.is_empty() {
        let mut next_frontier = BTreeSet::new();
        for mask in frontier {
            let (state, resp) = reached[&mask].clone();
            for i in 0..verts.len() {
                if mask & (1 << i) != 0 || preds[i] & !mask != 0 {
                    continue;
                }
                let (r, next) = spec.apply(&state, instances[i])?;
                let mut nresp = resp.clone();
                nresp.insert(verts[i], r);
                let nmask = mask | (1 << i);
                match reached.get(&nmask) {
                    Some((s, rs)) => {
                        if rs != &nresp || !spec.state_eq(s, &next) {
                            let set: Vec<String> =
                                (0..verts.len()).filter(|j| nmask & (1 << j) != 0).map(|j| verts[j].to_string()).collect();
                            return Ok(Some(format!(
                                "two orders of the prefix set {{{}}} are not equivalent",
                                set.join(",")
                            )));
                        }
                    }
                    None => {
                        reached.insert(nmask, (next, nresp));
                        next_frontier.insert(nmask);
                    }
                }
            }
        }
        frontier = next_frontier.into_iter().collect();
    }
    Ok(None)
}

fn structural(view: &AbcView) -> Vec<(&'static str, String)> {
    let mut out = Vec::new();
    for (t, deps) in &view.c {
        if deps.contains(t) {
            out.push(("irreflexivity", format!("{t} depends on itself")));
        }
    }
    if let Err(e) = linearize(&view.c) {
        out.push(("acyclicity", e.to_string()));
    }
    for (t, deps) in &view.c {
        for s in deps {
            if let Some(sdeps) = view.c.get(s) {
                if let Some(x) = sdeps.iter().find(|x| !deps.contains(x) && *x != t) {
                    out.push(("transitivity", format!("{x} -> {s} -> {t} but no edge {x} -> {t}")));
                }
            }
        }
    }
    let committed = view.committed();
    let booked = view.booked();
    if let Some(x) = committed.iter().find(|x| !booked.contains(x)) {
        out.push(("containment", format!("{x} is committed but not booked")));
    }
    if let Some(x) = booked.iter().find(|x| !view.a.contains(x)) {
        out.push(("containment", format!("{x} is booked but not announced")));
    }
    out
}

/// Checks every graph invariant over `trace`; see the module docs.
pub fn check_graph_invariants(spec: &dyn ObjectSpec, trace: &Trace) -> Result<GraphReport, CheckError> {
    let ops = trace.catalog();
    let n = trace.header.n_processes as usize;
    let c_bound = n as u64 + 2;
    let h = trace.history();
    let mut report = GraphReport::default();

    let mut comps = vec![AbcLocal::default(); n];
    let mut k_comps = vec![0u64; n];
    let mut prev_view: Option<AbcView> = None;
    let mut seen_graphs: HashSet<BTreeMap<OpId, BTreeSet<OpId>>> = HashSet::new();
    let mut first_response: BTreeMap<OpId, Value> = BTreeMap::new();
    let mut consensus: BTreeMap<u64, OpId> = BTreeMap::new();
    let mut proposals_by: BTreeMap<OpId, u64> = BTreeMap::new();
    let mut current: BTreeMap<ProcessId, OpId> = BTreeMap::new();

    for ev in &trace.events {
        let p = ev.process;
        let at = ev.step;
        if p as usize >= n {
            report.flag("process-range", format!("step {at}: process {p} out of range"));
            continue;
        }
        match &ev.body {
            EventBody::Inv { op } => {
                current.insert(p, op.id);
            }
            EventBody::Res { op, response } => {
                let now = AbcView::merge(comps.iter());
                if !now.is_committed(*op) {
                    report.flag("commitment-on-return", format!("step {at}: {op} returned but is not in C"));
                }
                if let Some(first) = first_response.get(op) {
                    if first != response {
                        report.flag(
                            "response-stability",
                            format!("step {at}: {op} returned {response} but graphs computed {first}"),
                        );
                    }
                }
            }
            EventBody::Commit { certificate } => check_certificate(&mut report, at, certificate, c_bound),
            EventBody::BaseStep { object, access } => {
                if object != access.object() {
                    report.flag("trace-shape", format!("step {at}: {} on object {object}", access.name()));
                }
                match access {
                    Access::AddA(a) => {
                        if !a.is_superset(&comps[p as usize].a) {
                            report.flag("monotonicity", format!("step {at}: p{p} dropped entries from R_A"));
                        }
                        if let Some(x) = a.iter().find(|x| x.process != p) {
                            report.flag("ownership", format!("step {at}: p{p} announced {x}"));
                        }
                    }
                    Access::AddB(b) => {
                        if !b.is_superset(&comps[p as usize].b) {
                            report.flag("monotonicity", format!("step {at}: p{p} dropped entries from R_B"));
                        }
                        let booked: Vec<OpId> = b.iter().map(|(o, _)| *o).collect();
                        let distinct: BTreeSet<OpId> = booked.iter().copied().collect();
                        if distinct.len() != booked.len() {
                            report.flag("ownership", format!("step {at}: p{p} booked an operation twice"));
                        }
                        if let Some(x) = booked.iter().find(|x| x.process != p) {
                            report.flag("ownership", format!("step {at}: p{p} booked {x}"));
                        }
                    }
                    Access::AddC(c) => {
                        if !c.is_superset(&comps[p as usize].c) {
                            report.flag("monotonicity", format!("step {at}: p{p} dropped entries from R_C"));
                        }
                    }
                    Access::Read(view) => {
                        report.views_checked += 1;
                        let oracle = AbcView::merge(comps.iter());
                        if *view != oracle {
                            report.flag("read-oracle", format!("step {at}: read differs from the merge of all writes"));
                        }
                        let shape = structural(view);
                        let cyclic = shape.iter().any(|(c, _)| *c == "acyclicity");
                        for (check, detail) in shape {
                            report.flag(check, format!("step {at}: {detail}"));
                        }
                        if let Some(prev) = &prev_view {
                            if !view.includes(prev) {
                                report.flag("monotonicity", format!("step {at}: read lost entries of an earlier read"));
                            }
                        }
                        if !cyclic {
                            check_versions(spec, &ops, view, at, &mut first_response, &mut report)?;
                            let committed = view.committed();
                            if committed.len() <= MAX_EQUIVALENCE_VERTICES && seen_graphs.insert(view.c.clone()) {
                                report.graphs_checked_for_equivalence += 1;
                                if let Some(msg) = check_order_equivalence(spec, &ops, &view.c)? {
                                    report.flag("topological-equivalence", format!("step {at}: {msg}"));
                                }
                            }
                        }
                        prev_view = Some(view.clone());
                    }
                    Access::Write(k) => {
                        if *k <= k_comps[p as usize] {
                            report.flag(
                                "k-monotonicity",
                                format!("step {at}: p{p} wrote K={k} after {}", k_comps[p as usize]),
                            );
                        }
                        k_comps[p as usize] = *k;
                    }
                    Access::Scan(ks) => {
                        if *ks != k_comps {
                            report.flag("k-oracle", format!("step {at}: scan of K differs from the written values"));
                        }
                    }
                    Access::Propose { k, proposed, decided } => {
                        let first = *consensus.entry(*k).or_insert(*proposed);
                        if *decided != first {
                            report.flag(
                                "consensus",
                                format!("step {at}: CONS_{k} decided {decided}, first proposal was {first}"),
                            );
                        }
                        if let Some(op) = current.get(&p) {
                            *proposals_by.entry(*op).or_default() += 1;
                        }
                    }
                }
                apply_write(&mut comps[p as usize], Some(access));
            }
            EventBody::Crash | EventBody::CapFallthrough { .. } => {}
        }
    }

    for (op, count) in proposals_by {
        if count > c_bound {
            report.flag("wait-freedom", format!("{op} proposed {count} times, bound is {c_bound}"));
        }
    }

    let final_view = AbcView::merge(comps.iter());
    for (a, b) in h.precedence_pairs() {
        if final_view.is_committed(a) && final_view.is_committed(b) && !final_view.c.get(&b).is_some_and(|d| d.contains(&a)) {
            report.flag("real-time-edges", format!("{a} precedes {b} but C has no edge {a} -> {b}"));
        }
    }
    Ok(report)
}

fn check_certificate(report: &mut GraphReport, at: u64, cert: &CommitCertificate, c_bound: u64) {
    if let Some(it) = cert.iterations() {
        if it > c_bound {
            report.flag(
                "wait-freedom",
                format!("step {at}: {} returned after {it} conflict-resolution iterations, bound is {c_bound}", cert.op),
            );
        }
    }
}

/// Responses computed from any graph version must agree with those computed
/// from every other version in which the operation is committed.
fn check_versions(
    spec: &dyn ObjectSpec,
    ops: &BTreeMap<OpId, OpInstance>,
    view: &AbcView,
    at: u64,
    first_response: &mut BTreeMap<OpId, Value>,
    report: &mut GraphReport,
) -> Result<(), CheckError> {
    let l = linearize(&view.c)?;
    let mut state = spec.initial_state();
    for id in &l {
        let (r, next) = spec.apply(&state, resolve_one(ops, *id)?)?;
        match first_response.get(id) {
            Some(prev) if *prev != r => {
                report.flag("response-stability", format!("step {at}: {id} now computes {r}, earlier {prev}"));
            }
            Some(_) => {}
            None => {
                first_response.insert(*id, r);
            }
        }
        state = next;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(p: u32) -> OpId {
        OpId::new(p, 0)
    }

    #[test]
    fn orders_of_a_diamond() {
        let c = BTreeMap::from([
            (id(0), BTreeSet::new()),
            (id(1), BTreeSet::from([id(0)])),
            (id(2), BTreeSet::from([id(0)])),
            (id(3), BTreeSet::from([id(0), id(1), id(2)])),
        ]);
        let orders = all_topological_orders(&c).unwrap();
        assert_eq!(orders.len(), 2);
        assert!(all_topological_orders(&BTreeMap::from([
            (id(0), BTreeSet::from([id(1)])),
            (id(1), BTreeSet::from([id(0)]))
        ]))
        .is_none());
    }

    #[test]
    fn structural_flags() {
        let mut v = AbcView::default();
        v.c.insert(id(0), BTreeSet::from([id(0)]));
        let names: Vec<&str> = structural(&v).into_iter().map(|(c, _)| c).collect();
        assert!(names.contains(&"irreflexivity"));
        assert!(names.contains(&"acyclicity"));
        assert!(names.contains(&"containment"));
    }

    #[test]
    fn non_transitive_graph_flagged() {
        let mut v = AbcView::default();
        for p in 0..3 {
            v.a.insert(id(p));
            v.b.insert(id(p), 1);
        }
        v.c.insert(id(0), BTreeSet::new());
        v.c.insert(id(1), BTreeSet::from([id(0)]));
        v.c.insert(id(2), BTreeSet::from([id(1)]));
        let names: Vec<&str> = structural(&v).into_iter().map(|(c, _)| c).collect();
        assert_eq!(names, ["transitivity"]);
    }
}
