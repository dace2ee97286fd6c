//! A dynamically concurrent universal construction over simulated shared memory.
//!
//! The crate turns any sequential object specification into a wait-free,
//! linearizable concurrent object whose processes only fall back to consensus
//! when the pending operations they observe fail to commute in the current
//! object state. Everything runs under a deterministic single-threaded
//! scheduler so that runs can be replayed bit-for-bit and audited.
//!
//! Layout:
//!
//! - [`seqspec`]: sequential specifications, ordering equivalence and
//!   commutativity.
//! - [`objects`]: reference specifications (list, asset transfer, counter,
//!   register) and the name registry used by scenario files.
//! - [`base`]: snapshot and consensus base objects plus strong-primitive usage
//!   accounting.
//! - [`abc`]: the Announce-Book-Commit graph.
//! - [`engine`]: the `publish` step machine, `linearize` and `result_in`.
//! - [`sched`]: scenarios, the step scheduler, traces, fuzzing and exhaustive
//!   interleaving exploration.
//! - [`check`]: linearizability checking, system-state enumeration, the
//!   dynamic-concurrency audit and graph invariant checks.

pub mod abc;
pub mod base;
pub mod check;
pub mod engine;
pub mod objects;
pub mod op;
pub mod sched;
pub mod seqspec;
pub mod value;

pub use op::{OpId, OpInstance, ProcessId};
pub use value::Value;

/// Version of the scenario, history and trace file schemas.
pub const FORMAT_VERSION: u32 = 1;
