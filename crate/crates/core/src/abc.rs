//! The Announce-Book-Commit graph.
//!
//! Three structures live in one snapshot object so that a single scan reads
//! all of them atomically:
//!
//! - `A`, the announced operations;
//! - `B`, booked operations with the smallest booked integer per operation;
//! - `C`, the dependency graph, as a map from an operation to the union of the
//!   dependency sets it was committed with.
//!
//! Each process keeps its own `R_A`, `R_B`, `R_C` sets ([`AbcLocal`]) and
//! writes the whole local set into its component on every add.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::base::{BaseError, SnapshotObject};
use crate::op::{OpId, ProcessId};

/// A B-value. Unbooked operations compare greater than every booked one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BookValue {
    Booked(u64),
    Unbooked,
}

/// Per-process local sets; also the value stored in the process's snapshot
/// component.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbcLocal {
    pub a: BTreeSet<OpId>,
    pub b: BTreeSet<(OpId, u64)>,
    pub c: BTreeSet<(OpId, BTreeSet<OpId>)>,
}

/// Result of a read: the merged A, B and C structures.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct AbcView {
    pub a: BTreeSet<OpId>,
    pub b: BTreeMap<OpId, u64>,
    pub c: BTreeMap<OpId, BTreeSet<OpId>>,
}

impl AbcView {
    /// Groups all components by operation: union for A, minimum for B and
    /// union of dependency sets for C.
    pub fn merge<'a>(components: impl IntoIterator<Item = &'a AbcLocal>) -> Self {
        let mut view = AbcView::default();
        for comp in components {
            view.a.extend(comp.a.iter().copied());
            for &(op, b) in &comp.b {
                view.b.entry(op).and_modify(|v| *v = (*v).min(b)).or_insert(b);
            }
            for (op, deps) in &comp.c {
                view.c.entry(*op).or_default().extend(deps.iter().copied());
            }
        }
        view
    }

    pub fn b_value(&self, op: OpId) -> BookValue {
        self.b.get(&op).map_or(BookValue::Unbooked, |&b| BookValue::Booked(b))
    }

    /// Operations appearing anywhere in C.
    pub fn committed(&self) -> BTreeSet<OpId> {
        let mut v: BTreeSet<OpId> = self.c.keys().copied().collect();
        for deps in self.c.values() {
            v.extend(deps.iter().copied());
        }
        v
    }

    pub fn is_committed(&self, op: OpId) -> bool {
        self.c.contains_key(&op) || self.c.values().any(|d| d.contains(&op))
    }

    pub fn booked(&self) -> BTreeSet<OpId> {
        self.b.keys().copied().collect()
    }

    /// `(source, target)` pairs of C.
    pub fn edges(&self) -> impl Iterator<Item = (OpId, OpId)> + '_ {
        self.c.iter().flat_map(|(t, deps)| deps.iter().map(move |s| (*s, *t)))
    }

    /// Whether `self` contains `earlier` componentwise: A and booked sets
    /// grow, B-values do not increase, and C gains vertices and edges only.
    pub fn includes(&self, earlier: &AbcView) -> bool {
        earlier.a.is_subset(&self.a)
            && earlier.b.iter().all(|(op, b)| self.b.get(op).is_some_and(|nb| nb <= b))
            && earlier
                .c
                .iter()
                .all(|(op, deps)| self.c.get(op).is_some_and(|nd| deps.is_subset(nd)))
    }
}

#[derive(Serialize, Deserialize)]
struct AbcViewWire {
    a: Vec<OpId>,
    b: BTreeMap<OpId, Option<u64>>,
    c: BTreeMap<OpId, Vec<OpId>>,
}

impl Serialize for AbcView {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut b: BTreeMap<OpId, Option<u64>> = self.a.iter().map(|op| (*op, None)).collect();
        b.extend(self.b.iter().map(|(op, v)| (*op, Some(*v))));
        AbcViewWire {
            a: self.a.iter().copied().collect(),
            b,
            c: self.c.iter().map(|(op, deps)| (*op, deps.iter().copied().collect())).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for AbcView {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let w = AbcViewWire::deserialize(d)?;
        Ok(AbcView {
            a: w.a.into_iter().collect(),
            b: w.b.into_iter().filter_map(|(op, v)| v.map(|v| (op, v))).collect(),
            c: w.c.into_iter().map(|(op, deps)| (op, deps.into_iter().collect())).collect(),
        })
    }
}

/// The shared part of the ABC graph: one snapshot object whose component
/// `i` holds process `i`'s `(R_A, R_B, R_C)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbcGraph {
    snapshot: SnapshotObject<AbcLocal>,
}

impl AbcGraph {
    pub fn new(n_processes: usize) -> Self {
        AbcGraph { snapshot: SnapshotObject::new("abc", n_processes, AbcLocal::default()) }
    }

    /// Announces `op`; returns the written `R_A`.
    pub fn add_a(&mut self, local: &mut AbcLocal, p: ProcessId, op: OpId) -> Result<BTreeSet<OpId>, BaseError> {
        local.a.insert(op);
        self.write(local, p)?;
        Ok(local.a.clone())
    }

    /// Books `op` with `b`; returns the written `R_B`.
    pub fn add_b(
        &mut self,
        local: &mut AbcLocal,
        p: ProcessId,
        op: OpId,
        b: u64,
    ) -> Result<BTreeSet<(OpId, u64)>, BaseError> {
        local.b.insert((op, b));
        self.write(local, p)?;
        Ok(local.b.clone())
    }

    /// Commits `op` with incoming edges from `deps`; returns the written `R_C`.
    pub fn add_c(
        &mut self,
        local: &mut AbcLocal,
        p: ProcessId,
        op: OpId,
        deps: BTreeSet<OpId>,
    ) -> Result<BTreeSet<(OpId, BTreeSet<OpId>)>, BaseError> {
        local.c.insert((op, deps));
        self.write(local, p)?;
        Ok(local.c.clone())
    }

    pub fn read(&self) -> AbcView {
        AbcView::merge(self.snapshot.scan().iter())
    }

    pub fn components(&self) -> &[AbcLocal] {
        self.snapshot.components()
    }

    fn write(&mut self, local: &AbcLocal, p: ProcessId) -> Result<(), BaseError> {
        self.snapshot.write(p, p, local.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const X: OpId = OpId::new(0, 0);
    const Y: OpId = OpId::new(1, 0);
    const Z: OpId = OpId::new(2, 0);

    fn graph() -> (AbcGraph, Vec<AbcLocal>) {
        (AbcGraph::new(3), vec![AbcLocal::default(); 3])
    }

    #[test]
    fn fresh_read_is_empty() {
        let (g, _) = graph();
        assert_eq!(g.read(), AbcView::default());
    }

    #[test]
    fn add_a_visible() {
        let (mut g, mut l) = graph();
        g.add_a(&mut l[0], 0, X).unwrap();
        g.add_a(&mut l[1], 1, Y).unwrap();
        assert_eq!(g.read().a, BTreeSet::from([X, Y]));
    }

    #[test]
    fn b_takes_minimum() {
        let (mut g, mut l) = graph();
        g.add_b(&mut l[0], 0, X, 5).unwrap();
        g.add_b(&mut l[1], 1, X, 3).unwrap();
        let v = g.read();
        assert_eq!(v.b_value(X), BookValue::Booked(3));
        assert_eq!(v.b_value(Y), BookValue::Unbooked);
        assert!(BookValue::Booked(u64::MAX) < BookValue::Unbooked);
    }

    #[test]
    fn c_takes_union() {
        let (mut g, mut l) = graph();
        g.add_c(&mut l[0], 0, Z, BTreeSet::from([X])).unwrap();
        g.add_c(&mut l[1], 1, Z, BTreeSet::from([Y])).unwrap();
        let v = g.read();
        assert_eq!(v.c[&Z], BTreeSet::from([X, Y]));
        assert_eq!(v.edges().collect::<Vec<_>>(), vec![(X, Z), (Y, Z)]);
    }

    #[test]
    fn first_commit_has_no_edges() {
        let (mut g, mut l) = graph();
        g.add_a(&mut l[0], 0, X).unwrap();
        g.add_b(&mut l[0], 0, X, 1).unwrap();
        g.add_c(&mut l[0], 0, X, BTreeSet::new()).unwrap();
        let v = g.read();
        assert_eq!(v.a, BTreeSet::from([X]));
        assert_eq!(v.b, BTreeMap::from([(X, 1)]));
        assert_eq!(v.c, BTreeMap::from([(X, BTreeSet::new())]));
        assert!(v.is_committed(X));
        assert_eq!(v.edges().count(), 0);
    }

    #[test]
    fn includes_is_monotone_growth() {
        let (mut g, mut l) = graph();
        g.add_a(&mut l[0], 0, X).unwrap();
        let v1 = g.read();
        g.add_b(&mut l[0], 0, X, 1).unwrap();
        let v2 = g.read();
        assert!(v2.includes(&v1));
        assert!(!v1.includes(&v2));
    }

    #[test]
    fn view_wire_format() {
        let (mut g, mut l) = graph();
        g.add_a(&mut l[0], 0, X).unwrap();
        g.add_a(&mut l[1], 1, Y).unwrap();
        g.add_b(&mut l[0], 0, X, 2).unwrap();
        g.add_c(&mut l[0], 0, X, BTreeSet::new()).unwrap();
        let v = g.read();
        let json = serde_json::to_string(&v).unwrap();
        assert_eq!(json, r#"{"a":["p0.0","p1.0"],"b":{"p0.0":2,"p1.0":null},"c":{"p0.0":[]}}"#);
        assert_eq!(serde_json::from_str::<AbcView>(&json).unwrap(), v);
    }
}
