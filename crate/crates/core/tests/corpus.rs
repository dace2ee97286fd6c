//! Fuzz corpus across every reference object, checked with every checker.

use dyncon::check::{CheckOptions, Status};
use dyncon::engine::Mutation;
use dyncon::sched::gen::{corpus, CorpusShape};
use dyncon::sched::{fuzz_scenarios, FuzzSummary};

#[test]
fn reference_engine_passes_every_check() {
    let scenarios = corpus(0, 200, &CorpusShape::default());
    let out = fuzz_scenarios(&scenarios, &CheckOptions::default(), false);
    for o in out.iter().filter(|o| o.failed()) {
        eprintln!("seed {}: {:?} {:?}", o.seed, o.run_error, o.report.as_ref().map(|r| (r.violations(), r.error.clone())));
    }
    let s = FuzzSummary::of(&out);
    eprintln!("{s:?}");
    assert_eq!(s.status(), Status::Pass);
    assert!(s.consensus_uses > 0);
    assert!(s.runs_with_crashes * 5 >= s.runs);
}

#[test]
fn mutants_are_caught() {
    for m in [Mutation::SkipCommuteCheck, Mutation::StaleDeps] {
        let shape = CorpusShape { mutation: m, ..Default::default() };
        let out = fuzz_scenarios(&corpus(0, 200, &shape), &CheckOptions::default(), false);
        let s = FuzzSummary::of(&out);
        eprintln!("{m:?}: {s:?}");
        assert!(s.violations > 0, "{m:?} escaped every checker");
    }
}
