//! Command-line front end. Every command writes its report to the given
//! writer and returns the process exit code: 0 pass, 1 violation, 2 bad
//! input or a capacity bound hit.

use std::io::Write;
use std::ops::Range;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use dyncon::check::audit::non_commuting_subset;
use dyncon::check::{
    check_graph_invariants, check_trace, enumerate_system_states, CheckOptions, CheckReport, Checks, HistoryFile,
    Status, SystemState, DEFAULT_MAX_STATE_OPS,
};
use dyncon::engine::{CommitCertificate, CommitPath, Mutation};
use dyncon::objects::spec_by_name;
use dyncon::sched::{fuzz_scenarios, run, FuzzSummary, Scenario, Schedule, Trace};
use dyncon::{OpId, Value, FORMAT_VERSION};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

/// Environment variable that pins the trace schema version.
pub const FORMAT_VERSION_VAR: &str = "DYNCON_FORMAT_VERSION";

#[derive(Debug, Parser)]
#[command(name = "dyncon", version, about = "Run, fuzz and check the dynamically concurrent universal construction")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[arg(long, value_enum, default_value_t = Format::Human, global = true)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Human,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mutant {
    SkipCommuteCheck,
    StaleDeps,
}

impl From<Mutant> for Mutation {
    fn from(m: Mutant) -> Self {
        match m {
            Mutant::SkipCommuteCheck => Mutation::SkipCommuteCheck,
            Mutant::StaleDeps => Mutation::StaleDeps,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one scenario and write its trace.
    Run(RunArgs),
    /// Run a scenario template over a range of schedule seeds and check every run.
    Fuzz(FuzzArgs),
    /// Check a recorded trace.
    Check(CheckArgs),
    /// List the system states during one operation of a history.
    States(StatesArgs),
}

#[derive(Debug, clap::Args)]
pub struct EngineArgs {
    /// Largest concurrent set the commutativity check enumerates.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub cap: Option<u64>,
    /// Run a deliberately broken engine variant.
    #[arg(long, value_enum)]
    pub mutant: Option<Mutant>,
}

impl EngineArgs {
    fn apply(&self, s: &mut Scenario) {
        if let Some(cap) = self.cap {
            s.commute_cap = cap as usize;
        }
        if let Some(m) = self.mutant {
            s.mutation = m.into();
        }
    }
}

#[derive(Debug, clap::Args)]
pub struct CheckSelection {
    /// Comma-separated subset of lin, graph, dyncon.
    #[arg(long, default_value_t = Checks::ALL)]
    pub checks: Checks,
    /// Largest history the exhaustive checkers accept.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub max_ops: Option<u64>,
}

impl CheckSelection {
    fn options(&self) -> CheckOptions {
        let mut o = CheckOptions { checks: self.checks, ..CheckOptions::default() };
        if let Some(n) = self.max_ops {
            o.max_lin_ops = n as usize;
            o.max_state_ops = n as usize;
        }
        o
    }
}

#[derive(Debug, clap::Args)]
pub struct RunArgs {
    pub scenario: PathBuf,
    /// Trace output path; defaults to the scenario path with a `.trace.jsonl` extension.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Replace the scenario's schedule with a seeded random one.
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub engine: EngineArgs,
}

#[derive(Debug, clap::Args)]
pub struct FuzzArgs {
    pub template: PathBuf,
    /// Half-open seed range.
    #[arg(long, value_parser = parse_seeds, default_value = "0..200")]
    pub seeds: Range<u64>,
    #[command(flatten)]
    pub checks: CheckSelection,
    #[command(flatten)]
    pub engine: EngineArgs,
    /// Directory for the traces of failing seeds.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct CheckArgs {
    pub trace: PathBuf,
    #[command(flatten)]
    pub checks: CheckSelection,
}

#[derive(Debug, clap::Args)]
pub struct StatesArgs {
    pub history: PathBuf,
    /// Operation id such as `p3.1`.
    pub op: String,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub max_ops: Option<u64>,
}

/// Parses `A..B` into a half-open range with `A <= B`.
pub fn parse_seeds(s: &str) -> Result<Range<u64>, String> {
    let (a, b) = s.split_once("..").ok_or_else(|| format!("expected A..B, got {s:?}"))?;
    let a: u64 = a.trim().parse().map_err(|e| format!("bad range start {a:?}: {e}"))?;
    let b: u64 = b.trim().parse().map_err(|e| format!("bad range end {b:?}: {e}"))?;
    if a > b {
        return Err(format!("empty range {a}..{b} is reversed"));
    }
    Ok(a..b)
}

/// Input and capacity failures; all map to exit code 2.
#[derive(Debug)]
pub struct InputError(pub String);

impl<E: std::fmt::Display> From<E> for InputError {
    fn from(e: E) -> Self {
        InputError(e.to_string())
    }
}

type CmdResult = Result<i32, InputError>;

/// Checks `DYNCON_FORMAT_VERSION` against the supported schema version.
pub fn pinned_version_ok(value: Option<&str>) -> Result<(), InputError> {
    match value {
        None => Ok(()),
        Some(v) if v.trim().parse::<u32>().ok() == Some(FORMAT_VERSION) => Ok(()),
        Some(v) => Err(InputError(format!("{FORMAT_VERSION_VAR}={v} is not supported (this build writes version {FORMAT_VERSION})"))),
    }
}

/// Dispatches a parsed command line. Errors go to `err`, reports to `out`.
pub fn execute(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let pinned = std::env::var(FORMAT_VERSION_VAR).ok();
    let result = pinned_version_ok(pinned.as_deref()).and_then(|()| match &cli.command {
        Command::Run(a) => cmd_run(a, cli.format, out),
        Command::Fuzz(a) => cmd_fuzz(a, cli.format, out),
        Command::Check(a) => cmd_check(a, cli.format, out),
        Command::States(a) => cmd_states(a, cli.format, out),
    });
    match result {
        Ok(code) => code,
        Err(InputError(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_INPUT
        }
    }
}

#[derive(Debug, Serialize)]
struct OpSummary {
    op: OpId,
    call: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    response: Option<Value>,
}

#[derive(Debug, Serialize)]
struct PublishSummary {
    op: OpId,
    path: CommitPath,
    used_consensus: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    iterations: Option<u64>,
}

impl From<&CommitCertificate> for PublishSummary {
    fn from(c: &CommitCertificate) -> Self {
        PublishSummary { op: c.op, path: c.path, used_consensus: c.used_consensus, iterations: c.iterations() }
    }
}

#[derive(Debug, Serialize)]
struct RunSummary {
    trace: PathBuf,
    status: Status,
    operations: Vec<OpSummary>,
    publishes: Vec<PublishSummary>,
    /// Proposals made to consensus objects.
    consensus_uses: usize,
    consensus_publishes: usize,
    crashed: Vec<u32>,
    skipped_slots: usize,
    violations: Vec<String>,
}

fn default_trace_path(scenario: &Path) -> PathBuf {
    scenario.with_extension("trace.jsonl")
}

fn operations(trace: &Trace) -> Vec<OpSummary> {
    let h = trace.history();
    h.invocation_order()
        .into_iter()
        .map(|id| OpSummary { op: id, call: h.ops()[&id].to_string(), response: h.response(id).cloned() })
        .collect()
}

/// Runs one scenario, writes the trace and checks the graph invariants
/// inline.
pub fn cmd_run(a: &RunArgs, format: Format, out: &mut dyn Write) -> CmdResult {
    let mut scn = Scenario::load(&a.scenario)?;
    a.engine.apply(&mut scn);
    if let Some(seed) = a.seed {
        scn.schedule = Some(Schedule::Seed(seed));
    }
    let r = match run(&scn) {
        Ok(r) => r,
        Err(dyncon::sched::RunError::Scenario(e)) => return Err(e.into()),
        Err(e) => {
            writeln!(out, "run failed: {e}")?;
            return Ok(EXIT_VIOLATION);
        }
    };
    let path = a.out.clone().unwrap_or_else(|| default_trace_path(&a.scenario));
    let file = std::fs::File::create(&path).map_err(|e| InputError(format!("{}: {e}", path.display())))?;
    r.trace.write_jsonl(std::io::BufWriter::new(file))?;
    log::info!("wrote {}", path.display());

    let spec = spec_by_name(&scn.spec, scn.spec_config.as_ref())?;
    let graph = check_graph_invariants(&*spec, &r.trace)?;
    let violations: Vec<String> = graph.violations.iter().map(|v| format!("{}: {}", v.check, v.detail)).collect();
    let summary = RunSummary {
        trace: path,
        status: if violations.is_empty() { Status::Pass } else { Status::Violation },
        operations: operations(&r.trace),
        publishes: r.trace.certificates().map(|(_, c)| c.into()).collect(),
        consensus_uses: r.trace.consensus_uses(),
        consensus_publishes: r.sync_log.records().iter().map(|u| u.publish).collect::<std::collections::BTreeSet<_>>().len(),
        crashed: r.trace.crashed().into_iter().collect(),
        skipped_slots: r.skipped,
        violations,
    };
    match format {
        Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(&summary)?)?,
        Format::Human => write_run_human(&summary, out)?,
    }
    Ok(summary.status.exit_code())
}

fn write_run_human(s: &RunSummary, out: &mut dyn Write) -> std::io::Result<()> {
    writeln!(out, "trace: {}", s.trace.display())?;
    for o in &s.operations {
        match &o.response {
            Some(r) => writeln!(out, "  {:<6} {} -> {}", o.op.to_string(), o.call, r)?,
            None => writeln!(out, "  {:<6} {} -> (pending)", o.op.to_string(), o.call)?,
        }
    }
    write_publishes(&s.publishes, out)?;
    writeln!(out, "consensus uses: {} by {} publish(es)", s.consensus_uses, s.consensus_publishes)?;
    if !s.crashed.is_empty() {
        writeln!(out, "crashed processes: {:?}", s.crashed)?;
    }
    if s.skipped_slots > 0 {
        writeln!(out, "skipped schedule slots: {}", s.skipped_slots)?;
    }
    for v in &s.violations {
        writeln!(out, "VIOLATION {v}")?;
    }
    Ok(())
}

fn write_publishes(ps: &[PublishSummary], out: &mut dyn Write) -> std::io::Result<()> {
    for p in ps {
        let path = match p.path {
            CommitPath::ConflictFree => "conflict-free".to_string(),
            CommitPath::ConflictResolution => {
                format!("conflict resolution, {} iteration(s)", p.iterations.unwrap_or_default())
            }
        };
        writeln!(out, "  publish {:<6} {path}{}", p.op.to_string(), if p.used_consensus { ", consensus" } else { "" })?;
    }
    Ok(())
}

fn load_trace(path: &Path) -> Result<Trace, InputError> {
    let file = std::fs::File::open(path).map_err(|e| InputError(format!("{}: {e}", path.display())))?;
    let t = Trace::read_jsonl(std::io::BufReader::new(file))?;
    t.validate()?;
    Ok(t)
}

pub fn cmd_check(a: &CheckArgs, format: Format, out: &mut dyn Write) -> CmdResult {
    let trace = load_trace(&a.trace)?;
    let report = check_trace(&trace, &a.checks.options());
    match format {
        Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?,
        Format::Human => write_check_human(&trace, &report, out)?,
    }
    Ok(report.status.exit_code())
}

fn write_check_human(trace: &Trace, r: &CheckReport, out: &mut dyn Write) -> std::io::Result<()> {
    writeln!(out, "status: {}", status_word(r.status))?;
    if let Some(e) = &r.error {
        writeln!(out, "error: {e}")?;
    }
    let publishes: Vec<PublishSummary> = trace.certificates().map(|(_, c)| c.into()).collect();
    write_publishes(&publishes, out)?;
    if let Some(l) = &r.lin {
        writeln!(out, "lin: {} topological order(s) checked", l.orders_checked)?;
    }
    if let Some(g) = &r.graph {
        writeln!(out, "graph: {} view(s) checked", g.views_checked)?;
    }
    if let Some(d) = &r.dyncon {
        writeln!(out, "dyncon: {} consensus user(s), all witnessed: {}", d.consensus_users(), d.passed())?;
    }
    for v in r.violations() {
        writeln!(out, "VIOLATION {v}")?;
    }
    Ok(())
}

fn status_word(s: Status) -> &'static str {
    match s {
        Status::Pass => "pass",
        Status::Violation => "violation",
        Status::Error => "error",
    }
}

#[derive(Debug, Serialize)]
struct StateLine {
    index: usize,
    #[serde(flatten)]
    state: SystemState,
    /// Smallest concurrent subset the operation does not commute with here.
    non_commuting: Option<Vec<OpId>>,
}

pub fn cmd_states(a: &StatesArgs, format: Format, out: &mut dyn Write) -> CmdResult {
    let file = HistoryFile::load(&a.history)?;
    let h = file.history()?;
    let op: OpId = a.op.parse().map_err(|_| InputError(format!("bad operation id {:?}", a.op)))?;
    let target = h.op(op).ok_or_else(|| InputError(format!("operation {op} does not occur in the history")))?;
    let spec = spec_by_name(&file.spec, file.spec_config.as_ref())?;
    let max = a.max_ops.map_or(DEFAULT_MAX_STATE_OPS, |n| n as usize);
    let states = enumerate_system_states(&*spec, &h, op, max)?;
    let mut lines = Vec::new();
    for (i, s) in states.into_iter().enumerate() {
        let nc = non_commuting_subset(&*spec, h.ops(), &s, target)?;
        lines.push(StateLine { index: i + 1, state: s, non_commuting: nc.map(|s| s.into_iter().collect()) });
    }
    match format {
        Format::Json => {
            let doc = serde_json::json!({ "op": op, "call": target.to_string(), "states": lines });
            writeln!(out, "{}", serde_json::to_string_pretty(&doc)?)?;
        }
        Format::Human => {
            writeln!(out, "{} system state(s) during {op} {target}", lines.len())?;
            for s in &lines {
                let l: Vec<String> = s.state.l.iter().map(|id| h.ops()[id].to_string()).collect();
                let o: Vec<String> = s.state.pending.iter().map(|id| h.ops()[id].to_string()).collect();
                let verdict = match &s.non_commuting {
                    None => "commutes".to_string(),
                    Some(ids) => format!("does not commute with {ids:?}"),
                };
                writeln!(out, "{:>3}. l = [{}]  O = {{{}}}  {verdict}", s.index, l.join(", "), o.join(", "))?;
            }
        }
    }
    Ok(EXIT_PASS)
}

#[derive(Debug, Serialize)]
struct FuzzReport<'a> {
    template: &'a Path,
    seeds: String,
    checks: String,
    status: Status,
    #[serde(flatten)]
    summary: &'a FuzzSummary,
    failures: Vec<FuzzFailure>,
}

#[derive(Debug, Serialize)]
struct FuzzFailure {
    seed: u64,
    status: Status,
    reasons: Vec<String>,
}

pub fn cmd_fuzz(a: &FuzzArgs, format: Format, out: &mut dyn Write) -> CmdResult {
    let mut template = Scenario::load(&a.template)?;
    if matches!(template.schedule, Some(Schedule::Explicit { .. })) {
        return Err(InputError("fuzz templates must not carry an explicit schedule".into()));
    }
    a.engine.apply(&mut template);
    template.prepare()?;
    let opts = a.checks.options();
    let scenarios: Vec<(u64, Scenario)> = a.seeds.clone().map(|s| (s, template.with_seed(s))).collect();
    let outcomes = fuzz_scenarios(&scenarios, &opts, a.out.is_some());
    let summary = FuzzSummary::of(&outcomes);

    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir).map_err(|e| InputError(format!("{}: {e}", dir.display())))?;
        for o in outcomes.iter().filter(|o| o.failed()) {
            if let Some(t) = &o.trace {
                let p = dir.join(format!("seed-{}.trace.jsonl", o.seed));
                let f = std::fs::File::create(&p).map_err(|e| InputError(format!("{}: {e}", p.display())))?;
                t.write_jsonl(std::io::BufWriter::new(f))?;
            }
        }
    }

    let failures: Vec<FuzzFailure> = outcomes
        .iter()
        .filter(|o| o.failed())
        .map(|o| {
            let mut reasons: Vec<String> = o.run_error.iter().cloned().collect();
            if let Some(r) = &o.report {
                reasons.extend(r.error.iter().cloned());
                reasons.extend(r.violations());
            }
            FuzzFailure { seed: o.seed, status: o.status, reasons }
        })
        .collect();
    let report = FuzzReport {
        template: &a.template,
        seeds: format!("{}..{}", a.seeds.start, a.seeds.end),
        checks: opts.checks.to_string(),
        status: summary.status(),
        summary: &summary,
        failures,
    };
    match format {
        Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?,
        Format::Human => {
            writeln!(out, "status: {}", status_word(report.status))?;
            writeln!(
                out,
                "seeds {}: {} run(s), {} passed, {} violation(s), {} error(s)",
                report.seeds, summary.runs, summary.passed, summary.violations, summary.errors
            )?;
            writeln!(out, "consensus uses: {}", summary.consensus_uses)?;
            writeln!(out, "runs with crashes: {}", summary.runs_with_crashes)?;
            for f in &report.failures {
                writeln!(out, "seed {} ({}):", f.seed, status_word(f.status))?;
                for r in f.reasons.iter().take(5) {
                    writeln!(out, "    {r}")?;
                }
            }
            if !summary.failing_seeds.is_empty() {
                writeln!(out, "replay with: dyncon run {} --seed <seed>", a.template.display())?;
            }
        }
    }
    Ok(summary.status().exit_code())
}
