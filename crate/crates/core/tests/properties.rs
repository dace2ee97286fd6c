//! Laws of ordering equivalence and commutativity, and agreement of the
//! linearizability checker with a brute-force oracle.

use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dyncon::check::history::{History, HistoryEvent};
use dyncon::check::check_linearizable;
use dyncon::objects::{asset_transfer_spec_with, counter_spec, list_spec, register_spec, AssetConfig};
use dyncon::seqspec::{self, apply_sequence, orderings_equivalent, ObjectSpec};
use dyncon::{OpId, OpInstance, Value};

fn list_op() -> impl Strategy<Value = (String, Vec<Value>)> {
    prop_oneof![
        prop::sample::select(vec!["a", "b", "c", "d"]).prop_map(|v| ("append".to_owned(), vec![Value::str(v)])),
        Just(("readLast".to_owned(), vec![])),
        Just(("readAll".to_owned(), vec![])),
        (0i64..3, 0i64..3).prop_map(|(x, y)| ("swap".to_owned(), vec![Value::Int(x.min(y)), Value::Int(x.max(y))])),
    ]
}

fn asset_op() -> impl Strategy<Value = (String, Vec<Value>)> {
    let acct = prop::sample::select(vec!["alice", "bob"]);
    prop_oneof![
        (acct.clone(), acct.clone(), prop::sample::select(vec![0i64, 30, 60, 100])).prop_map(|(f, t, a)| (
            "transfer".to_owned(),
            vec![Value::str(f), Value::str(t), Value::Int(a)]
        )),
        acct.prop_map(|a| ("readBalance".to_owned(), vec![Value::str(a)])),
    ]
}

fn assets() -> AssetConfig {
    AssetConfig { balances: BTreeMap::from([("alice".into(), 100), ("bob".into(), 30)]) }
}

/// Distinct operation instances: the i-th one is `p{i}.0`.
fn instances(raw: Vec<(String, Vec<Value>)>) -> Vec<OpInstance> {
    raw.into_iter().enumerate().map(|(i, (m, a))| OpInstance::new(i as u32, 0, m, a)).collect()
}

fn refs(v: &[OpInstance]) -> Vec<&OpInstance> {
    v.iter().collect()
}

/// Ordering equivalence computed straight from the definition.
fn equivalent(spec: &dyn ObjectSpec, a: &[&OpInstance], b: &[&OpInstance]) -> bool {
    let x = apply_sequence(spec, a).unwrap();
    let y = apply_sequence(spec, b).unwrap();
    x.responses == y.responses && spec.state_eq(&x.final_state, &y.final_state)
}

fn cat<'a>(parts: &[&[&'a OpInstance]]) -> Vec<&'a OpInstance> {
    parts.iter().flat_map(|p| p.iter().copied()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn equivalence_is_an_equivalence_relation(
        raw in prop::collection::vec(list_op(), 1..6),
        seeds in prop::array::uniform3(any::<u64>()),
    ) {
        let spec = list_spec();
        let ops = instances(raw);
        let perms: Vec<Vec<&OpInstance>> = seeds
            .iter()
            .map(|s| {
                let mut p = refs(&ops);
                p.shuffle(&mut ChaCha8Rng::seed_from_u64(*s));
                p
            })
            .collect();
        let eq = |i: usize, j: usize| orderings_equivalent(&spec, &perms[i], &perms[j]).unwrap();
        for i in 0..3 {
            prop_assert!(eq(i, i));
            for j in 0..3 {
                prop_assert_eq!(eq(i, j), eq(j, i));
                prop_assert_eq!(eq(i, j), equivalent(&spec, &perms[i], &perms[j]));
                for k in 0..3 {
                    if eq(i, j) && eq(j, k) {
                        prop_assert!(eq(i, k));
                    }
                }
            }
        }
    }

    #[test]
    fn equivalence_preservation(
        raw in prop::collection::vec(asset_op(), 3..7),
        l_len in 0usize..2,
        seeds in prop::array::uniform2(any::<u64>()),
        cuts in (0usize..5, 0usize..5),
    ) {
        let spec = asset_transfer_spec_with(assets());
        let ops = instances(raw);
        let (l, rest) = ops.split_at(l_len.min(ops.len() - 2));
        let (op, set) = rest.split_first().unwrap();
        let (l, set) = (refs(l), refs(set));
        let shuffled = |seed: u64| {
            let mut v = set.clone();
            v.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            v
        };
        let (s, s2) = (shuffled(seeds[0]), shuffled(seeds[1]));
        let (c1, c2) = (cuts.0 % (s.len() + 1), cuts.1 % (s.len() + 1));
        let commutes = |x: &[&OpInstance]| seqspec::commutes_in(&spec, &l, op, x).unwrap();
        let premise = equivalent(&spec, &cat(&[&l, &s]), &cat(&[&l, &s2]))
            && commutes(&s[..c1])
            && commutes(&s2[..c2])
            && commutes(&s)
            && commutes(&s2);
        if premise {
            let a = cat(&[&l, &s[..c1], &[op], &s[c1..]]);
            let b = cat(&[&l, &s2[..c2], &[op], &s2[c2..]]);
            prop_assert!(equivalent(&spec, &a, &b));
        }
    }

    #[test]
    fn commuting_with_every_subset_makes_all_placements_equivalent(
        raw in prop::collection::vec(list_op(), 2..7),
        l_len in 0usize..3,
        seed in any::<u64>(),
    ) {
        let spec = list_spec();
        let ops = instances(raw);
        let (l, rest) = ops.split_at(l_len.min(ops.len() - 1));
        let (op, set) = rest.split_first().unwrap();
        let set: Vec<&OpInstance> = refs(set).into_iter().take(4).collect();
        let l = refs(l);
        if seqspec::commutes_with_all_subsets(&spec, &l, op, &set, 8).unwrap() {
            let mut s = set.clone();
            s.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let first = cat(&[&l, &[op], &s]);
            for i in 1..=s.len() {
                let placed = cat(&[&l, &s[..i], &[op], &s[i..]]);
                prop_assert!(equivalent(&spec, &first, &placed));
            }
        }
    }

    #[test]
    fn set_commutativity_matches_every_ordering(
        raw in prop::collection::vec(asset_op(), 2..6),
        l_len in 0usize..2,
    ) {
        let spec = asset_transfer_spec_with(assets());
        let ops = instances(raw);
        let (l, rest) = ops.split_at(l_len.min(ops.len() - 1));
        let (op, set) = rest.split_first().unwrap();
        let (l, set) = (refs(l), refs(set));
        let mut every = true;
        for_each_permutation(&set, &mut |perm| {
            let a = cat(&[&l, perm, &[op]]);
            let b = cat(&[&l, &[op], perm]);
            every &= equivalent(&spec, &a, &b);
        });
        prop_assert_eq!(seqspec::commutes_with_set(&spec, &l, op, &set).unwrap(), every);
    }

    #[test]
    fn subset_check_matches_brute_force(
        raw in prop::collection::vec(list_op(), 2..6),
    ) {
        let spec = list_spec();
        let ops = instances(raw);
        let (op, set) = ops.split_first().unwrap();
        let set = refs(set);
        let mut all = true;
        for mask in 0u32..(1 << set.len()) {
            let sub: Vec<&OpInstance> = (0..set.len()).filter(|i| mask & (1 << i) != 0).map(|i| set[i]).collect();
            all &= seqspec::commutes_with_set(&spec, &[], op, &sub).unwrap();
        }
        prop_assert_eq!(seqspec::commutes_with_all_subsets(&spec, &[], op, &set, 8).unwrap(), all);
    }

    #[test]
    fn specs_are_deterministic_and_state_eq_is_an_equivalence(
        raw in prop::collection::vec(list_op(), 0..6),
        araw in prop::collection::vec(asset_op(), 0..6),
        counts in prop::collection::vec(0u8..3, 0..6),
    ) {
        let asset = asset_transfer_spec_with(assets());
        let list = list_spec();
        let counter = counter_spec();
        let register = register_spec();
        let counter_ops: Vec<OpInstance> = counts
            .iter()
            .enumerate()
            .map(|(i, c)| OpInstance::new(i as u32, 0, if *c == 0 { "read" } else { "inc" }, vec![]))
            .collect();
        let register_ops: Vec<OpInstance> = counts
            .iter()
            .enumerate()
            .map(|(i, c)| match c {
                0 => OpInstance::new(i as u32, 0, "read", vec![]),
                _ => OpInstance::new(i as u32, 0, "write", vec![Value::Int(*c as i64)]),
            })
            .collect();
        let cases: [(&dyn ObjectSpec, Vec<OpInstance>); 4] =
            [(&list, instances(raw)), (&asset, instances(araw)), (&counter, counter_ops), (&register, register_ops)];
        for (spec, ops) in cases {
            let seq = refs(&ops);
            let a = apply_sequence(spec, &seq).unwrap();
            prop_assert_eq!(&a, &apply_sequence(spec, &seq).unwrap());
            // Collect every intermediate state and check the laws on them.
            let states: Vec<_> = (0..=seq.len()).map(|i| seqspec::state_after(spec, &seq[..i]).unwrap()).collect();
            for x in &states {
                prop_assert!(spec.state_eq(x, x));
                for y in &states {
                    prop_assert_eq!(spec.state_eq(x, y), spec.state_eq(y, x));
                    for z in &states {
                        if spec.state_eq(x, y) && spec.state_eq(y, z) {
                            prop_assert!(spec.state_eq(x, z));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn linearizability_checker_agrees_with_permutation_oracle(seed in any::<u64>()) {
        let (spec, h) = random_history(seed);
        let fast = check_linearizable(&*spec, &h, 10).unwrap();
        let slow = naive_linearizable(&*spec, &h);
        prop_assert_eq!(fast.is_some(), slow, "{:?}", h.events());
        if let Some(w) = fast {
            prop_assert!(dyncon::check::is_linearization(&*spec, &h, &w).unwrap());
        }
    }
}

fn for_each_permutation<'a>(items: &[&'a OpInstance], f: &mut dyn FnMut(&[&'a OpInstance])) {
    fn go<'a>(rest: &mut Vec<&'a OpInstance>, acc: &mut Vec<&'a OpInstance>, f: &mut dyn FnMut(&[&'a OpInstance])) {
        if rest.is_empty() {
            f(acc);
            return;
        }
        for i in 0..rest.len() {
            let x = rest.remove(i);
            acc.push(x);
            go(rest, acc, f);
            acc.pop();
            rest.insert(i, x);
        }
    }
    go(&mut items.to_vec(), &mut Vec::new(), f);
}

/// A random well-formed history of at most six operations. Responses come
/// either from a random sequential order (often linearizable) or are drawn
/// from a small domain (often not).
fn random_history(seed: u64) -> (Box<dyn ObjectSpec>, History) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let use_list = rng.gen_bool(0.5);
    let spec: Box<dyn ObjectSpec> = if use_list { Box::new(list_spec()) } else { Box::new(register_spec()) };
    let n_proc = rng.gen_range(1..=3u32);
    let n_ops = rng.gen_range(1..=6usize);
    let mut per_proc: Vec<Vec<OpInstance>> = vec![Vec::new(); n_proc as usize];
    for _ in 0..n_ops {
        let p = rng.gen_range(0..n_proc);
        let seq = per_proc[p as usize].len() as u32;
        let (m, args): (&str, Vec<Value>) = if use_list {
            match rng.gen_range(0..3) {
                0 => ("append", vec![Value::str(["a", "b"][rng.gen_range(0..2)])]),
                1 => ("readLast", vec![]),
                _ => ("readAll", vec![]),
            }
        } else if rng.gen_bool(0.5) {
            ("write", vec![Value::str(["x", "y"][rng.gen_range(0..2)])])
        } else {
            ("read", vec![])
        };
        per_proc[p as usize].push(OpInstance::new(p, seq, m, args));
    }
    let all: Vec<OpInstance> = per_proc.iter().flatten().cloned().collect();

    // Responses from a random total order consistent with program order.
    let mut order: Vec<&OpInstance> = all.iter().collect();
    order.shuffle(&mut rng);
    order.sort_by_key(|o| o.id.seq);
    let honest = apply_sequence(&*spec, &order).unwrap().responses;
    let forge = rng.gen_bool(0.5);
    let response = |rng: &mut ChaCha8Rng, op: &OpInstance| -> Value {
        if !forge || rng.gen_bool(0.6) {
            return honest[&op.id].clone();
        }
        match op.method.as_str() {
            "append" | "write" => Value::ok(),
            "readAll" => Value::List((0..rng.gen_range(0..3)).map(|_| Value::str(["a", "b"][rng.gen_range(0..2)])).collect()),
            _ => [Value::Nil, Value::str("a"), Value::str("b"), Value::str("x"), Value::str("y")][rng.gen_range(0..5)].clone(),
        }
    };

    let mut next = vec![0usize; n_proc as usize];
    let mut open: Vec<Option<OpId>> = vec![None; n_proc as usize];
    let mut events = Vec::new();
    loop {
        let live: Vec<usize> =
            (0..n_proc as usize).filter(|&p| open[p].is_some() || next[p] < per_proc[p].len()).collect();
        if live.is_empty() || rng.gen_bool(0.05) {
            break;
        }
        let p = *live.choose(&mut rng).unwrap();
        match open[p].take() {
            Some(id) => {
                let op = &per_proc[p][id.seq as usize];
                events.push(HistoryEvent::Res { op: id, response: response(&mut rng, op) });
            }
            None => {
                let op = &per_proc[p][next[p]];
                next[p] += 1;
                open[p] = Some(op.id);
                events.push(HistoryEvent::Inv { op: op.id });
            }
        }
    }
    let catalog = all.iter().map(|o| (o.id, o.clone())).collect();
    (spec, History::new(catalog, events).unwrap())
}

/// Every subset of pending operations, every permutation, filtered by
/// precedence and legality.
fn naive_linearizable(spec: &dyn ObjectSpec, h: &History) -> bool {
    let complete: Vec<&OpInstance> = h.ops().values().filter(|o| h.is_complete(o.id)).collect();
    let pending: Vec<&OpInstance> = h.ops().values().filter(|o| !h.is_complete(o.id)).collect();
    for mask in 0u32..(1 << pending.len()) {
        let mut chosen = complete.clone();
        chosen.extend((0..pending.len()).filter(|i| mask & (1 << i) != 0).map(|i| pending[i]));
        let mut found = false;
        for_each_permutation(&chosen, &mut |perm| {
            if found {
                return;
            }
            let respects = (0..perm.len()).all(|j| perm[j + 1..].iter().all(|a| !h.precedes(a.id, perm[j].id)));
            if !respects {
                return;
            }
            let out = apply_sequence(spec, perm).unwrap();
            found = perm.iter().all(|o| h.response(o.id).is_none_or(|r| out.responses[&o.id] == *r));
        });
        if found {
            return true;
        }
    }
    false
}

#[test]
fn random_histories_cover_both_verdicts() {
    let verdicts: Vec<bool> = (0..300).map(|s| {
        let (spec, h) = random_history(s);
        naive_linearizable(&*spec, &h)
    }).collect();
    let yes = verdicts.iter().filter(|v| **v).count();
    assert!(yes > 30 && yes < 270, "{yes} of 300 linearizable");
}
