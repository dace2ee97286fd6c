//! Random scenario corpus for fuzzing across every reference object.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::Mutation;
use crate::objects::{AssetConfig, LIST_VALUES, SPEC_NAMES};
use crate::op::ProcessId;
use crate::sched::scenario::{CrashPoint, Scenario, Schedule, WorkloadEntry};
use crate::seqspec::DEFAULT_COMMUTE_CAP;
use crate::value::Value;
use crate::FORMAT_VERSION;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorpusShape {
    pub min_processes: u32,
    pub max_processes: u32,
    pub min_ops: usize,
    pub max_ops: usize,
    /// Probability that a scenario crashes one process.
    pub crash_probability: f64,
    pub mutation: Mutation,
}

impl Default for CorpusShape {
    fn default() -> Self {
        CorpusShape {
            min_processes: 2,
            max_processes: 4,
            min_ops: 3,
            max_ops: 8,
            crash_probability: 0.3,
            mutation: Mutation::None,
        }
    }
}

/// Balances tight enough that transfers regularly conflict.
pub fn tight_assets() -> AssetConfig {
    AssetConfig { balances: BTreeMap::from([("alice".into(), 100), ("bob".into(), 50), ("carol".into(), 0)]) }
}

fn random_op(rng: &mut ChaCha8Rng, spec: &str, accounts: &[String]) -> (String, Vec<Value>) {
    let pick = |rng: &mut ChaCha8Rng, xs: &[&str]| xs.choose(rng).map(|s| Value::str(*s)).expect("non-empty");
    match spec {
        "list" => match rng.gen_range(0..10) {
            0..=3 => ("append".into(), vec![pick(rng, &LIST_VALUES)]),
            4..=5 => ("readLast".into(), vec![]),
            6..=7 => ("readAll".into(), vec![]),
            _ => {
                let j = rng.gen_range(0..3i64);
                let i = rng.gen_range(0..=j);
                ("swap".into(), vec![Value::Int(i), Value::Int(j)])
            }
        },
        "asset-transfer" => {
            let acct = |rng: &mut ChaCha8Rng| Value::str(accounts.choose(rng).expect("accounts").clone());
            if rng.gen_bool(0.75) {
                let amount = *[0, 25, 50, 75, 100].choose(rng).expect("amounts");
                ("transfer".into(), vec![acct(rng), acct(rng), Value::Int(amount)])
            } else {
                ("readBalance".into(), vec![acct(rng)])
            }
        }
        "counter" => {
            if rng.gen_bool(0.7) {
                ("inc".into(), vec![])
            } else {
                ("read".into(), vec![])
            }
        }
        "register" => {
            if rng.gen_bool(0.6) {
                ("write".into(), vec![pick(rng, &["x", "y", "z"])])
            } else {
                ("read".into(), vec![])
            }
        }
        other => panic!("no generator for {other}"),
    }
}

/// A random scenario for `spec` with a seeded schedule. Identical inputs give
/// identical scenarios.
pub fn random_scenario(spec: &str, seed: u64, shape: &CorpusShape) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_c0de);
    let n = rng.gen_range(shape.min_processes..=shape.max_processes);
    let n_ops = rng.gen_range(shape.min_ops..=shape.max_ops);
    let assets = tight_assets();
    let accounts: Vec<String> = assets.balances.keys().cloned().collect();
    let workload = (0..n_ops)
        .map(|_| {
            let process: ProcessId = rng.gen_range(0..n);
            let (method, args) = random_op(&mut rng, spec, &accounts);
            WorkloadEntry { process, method, args }
        })
        .collect();
    let crashes = if rng.gen_bool(shape.crash_probability) {
        vec![CrashPoint { process: rng.gen_range(0..n), step: rng.gen_range(0..(n_ops as u64 * 8)) }]
    } else {
        vec![]
    };
    Scenario {
        format_version: FORMAT_VERSION,
        spec: spec.to_owned(),
        spec_config: (spec == "asset-transfer").then(|| assets.to_value()),
        n_processes: n,
        workload,
        schedule: Some(Schedule::Seed(seed)),
        crashes,
        commute_cap: DEFAULT_COMMUTE_CAP,
        mutation: shape.mutation,
    }
}

/// `count` scenarios starting at `first_seed`, cycling through every
/// reference specification.
pub fn corpus(first_seed: u64, count: u64, shape: &CorpusShape) -> Vec<(u64, Scenario)> {
    (first_seed..first_seed + count)
        .map(|seed| (seed, random_scenario(SPEC_NAMES[(seed % SPEC_NAMES.len() as u64) as usize], seed, shape)))
        .collect()
}
