use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::value::Value;

pub type ProcessId = u32;

/// Identity of an operation invocation: the invoking process and its
/// per-process sequence number. Rendered as `p<process>.<seq>`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OpId {
    pub process: ProcessId,
    pub seq: u32,
}

impl OpId {
    pub const fn new(process: ProcessId, seq: u32) -> Self {
        OpId { process, seq }
    }
}

impl fmt::Display for OpId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}.{}", self.process, self.seq)
    }
}

#[derive(Debug, thiserror::Error)]
#[error("malformed operation id {0:?}, expected p<process>.<seq>")]
pub struct ParseOpIdError(String);

impl FromStr for OpId {
    type Err = ParseOpIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseOpIdError(s.to_owned());
        let rest = s.strip_prefix('p').ok_or_else(err)?;
        let (p, q) = rest.split_once('.').ok_or_else(err)?;
        Ok(OpId {
            process: p.parse().map_err(|_| err())?,
            seq: q.parse().map_err(|_| err())?,
        })
    }
}

impl Serialize for OpId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for OpId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A uniquely identified operation invocation.
///
/// Equality, ordering and hashing consider the full record, but within a run
/// the [`OpId`] alone is unique.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OpInstance {
    pub id: OpId,
    pub method: String,
    #[serde(default)]
    pub args: Vec<Value>,
}

impl OpInstance {
    pub fn new(process: ProcessId, seq: u32, method: impl Into<String>, args: Vec<Value>) -> Self {
        OpInstance { id: OpId::new(process, seq), method: method.into(), args }
    }

    pub fn process(&self) -> ProcessId {
        self.id.process
    }
}

impl fmt::Display for OpInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}.{}(", self.id.process, self.method)?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str(")")
    }
}
