//! Reference sequential specifications and the registry that maps scenario
//! names to them.

mod asset;
mod counter;
mod list;
mod register;

use std::sync::Arc;

pub use asset::{asset_transfer_spec, asset_transfer_spec_with, AssetConfig, AssetTransferSpec};
pub use counter::{counter_spec, CounterSpec};
pub use list::{list_spec, ListSpec, LIST_VALUES};
pub use register::{register_spec, RegisterSpec};

use crate::op::OpInstance;
use crate::seqspec::{ObjectSpec, SpecError};
use crate::value::Value;

/// Names accepted by [`spec_by_name`].
pub const SPEC_NAMES: [&str; 4] = ["list", "asset-transfer", "counter", "register"];

/// Looks up a registered specification. Only `asset-transfer` takes a
/// configuration (`{"balances": {"alice": 100, ...}}`).
pub fn spec_by_name(name: &str, config: Option<&Value>) -> Result<Arc<dyn ObjectSpec>, SpecError> {
    let no_config = |spec: Arc<dyn ObjectSpec>| match config {
        None | Some(Value::Nil) => Ok(spec),
        Some(_) => Err(SpecError::BadConfig { spec: name.to_owned(), reason: "takes no configuration".into() }),
    };
    match name {
        "list" => no_config(Arc::new(list_spec())),
        "counter" => no_config(Arc::new(counter_spec())),
        "register" => no_config(Arc::new(register_spec())),
        "asset-transfer" => {
            let cfg = match config {
                None | Some(Value::Nil) => AssetConfig::default(),
                Some(v) => AssetConfig::from_value(v)?,
            };
            Ok(Arc::new(asset_transfer_spec_with(cfg)))
        }
        other => Err(SpecError::UnknownSpec(other.to_owned())),
    }
}

fn expect_arity(op: &OpInstance, n: usize) -> Result<(), SpecError> {
    if op.args.len() == n {
        Ok(())
    } else {
        Err(SpecError::malformed(op, format!("expected {n} argument(s), got {}", op.args.len())))
    }
}

fn unknown_method(op: &OpInstance) -> SpecError {
    SpecError::malformed(op, format!("unknown method {:?}", op.method))
}
