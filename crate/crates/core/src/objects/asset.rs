use std::collections::BTreeMap;

use crate::objects::{expect_arity, unknown_method};
use crate::op::OpInstance;
use crate::seqspec::{ObjectSpec, ObjectState, SpecError};
use crate::value::Value;

/// Initial account balances of an asset-transfer object.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssetConfig {
    pub balances: BTreeMap<String, i64>,
}

impl Default for AssetConfig {
    fn default() -> Self {
        AssetConfig { balances: [("alice", 100), ("bob", 0), ("carol", 0)].map(|(k, v)| (k.to_owned(), v)).into() }
    }
}

impl AssetConfig {
    /// Default accounts with `account` holding `balance`.
    pub fn single(account: &str, balance: i64) -> Self {
        let mut cfg = AssetConfig::default();
        cfg.balances.insert(account.to_owned(), balance);
        cfg
    }

    pub fn from_value(v: &Value) -> Result<Self, SpecError> {
        let bad = |reason: &str| SpecError::BadConfig { spec: "asset-transfer".into(), reason: reason.into() };
        let balances = v
            .as_map()
            .and_then(|m| m.get("balances"))
            .and_then(Value::as_map)
            .ok_or_else(|| bad("expected {\"balances\": {account: amount}}"))?;
        let mut out = BTreeMap::new();
        for (acct, amount) in balances {
            match amount.as_int() {
                Some(a) if a >= 0 => {
                    out.insert(acct.clone(), a);
                }
                _ => return Err(bad("balances must be non-negative integers")),
            }
        }
        if out.is_empty() {
            return Err(bad("at least one account is required"));
        }
        Ok(AssetConfig { balances: out })
    }

    pub fn to_value(&self) -> Value {
        let balances = self.balances.iter().map(|(k, v)| (k.clone(), Value::Int(*v))).collect();
        Value::Map([("balances".to_owned(), Value::Map(balances))].into())
    }
}

/// Accounts with `transfer(from, to, amount)` and `readBalance(account)`.
///
/// A transfer is `accepted` and moves the amount when the source balance
/// suffices; otherwise it is `rejected` and has no effect. State: a
/// `Value::Map` from account name to balance.
#[derive(Debug, Clone)]
pub struct AssetTransferSpec {
    config: AssetConfig,
}

pub fn asset_transfer_spec() -> AssetTransferSpec {
    asset_transfer_spec_with(AssetConfig::default())
}

pub fn asset_transfer_spec_with(config: AssetConfig) -> AssetTransferSpec {
    AssetTransferSpec { config }
}

impl AssetTransferSpec {
    pub fn config(&self) -> &AssetConfig {
        &self.config
    }

    fn account<'a>(&self, op: &'a OpInstance, i: usize) -> Result<&'a str, SpecError> {
        match op.args[i].as_str() {
            Some(a) if self.config.balances.contains_key(a) => Ok(a),
            Some(a) => Err(SpecError::malformed(op, format!("unknown account {a:?}"))),
            None => Err(SpecError::malformed(op, format!("argument {i} must be an account name"))),
        }
    }
}

fn balance(state: &ObjectState, acct: &str) -> i64 {
    state.as_map().and_then(|m| m.get(acct)).and_then(Value::as_int).unwrap_or(0)
}

impl ObjectSpec for AssetTransferSpec {
    fn name(&self) -> &str {
        "asset-transfer"
    }

    fn initial_state(&self) -> ObjectState {
        Value::Map(self.config.balances.iter().map(|(k, v)| (k.clone(), Value::Int(*v))).collect())
    }

    fn validate(&self, op: &OpInstance) -> Result<(), SpecError> {
        match op.method.as_str() {
            "transfer" => {
                expect_arity(op, 3)?;
                self.account(op, 0)?;
                self.account(op, 1)?;
                match op.args[2].as_int() {
                    Some(a) if a >= 0 => Ok(()),
                    _ => Err(SpecError::malformed(op, "amount must be a non-negative integer")),
                }
            }
            "readBalance" => {
                expect_arity(op, 1)?;
                self.account(op, 0).map(|_| ())
            }
            _ => Err(unknown_method(op)),
        }
    }

    fn apply(&self, state: &ObjectState, op: &OpInstance) -> Result<(Value, ObjectState), SpecError> {
        self.validate(op)?;
        match op.method.as_str() {
            "transfer" => {
                let (from, to) = (self.account(op, 0)?, self.account(op, 1)?);
                let amount = op.args[2].as_int().unwrap_or_default();
                if balance(state, from) < amount {
                    return Ok((Value::str("rejected"), state.clone()));
                }
                let mut next = state.as_map().cloned().unwrap_or_default();
                next.insert(from.to_owned(), Value::Int(balance(state, from) - amount));
                let to_balance = next.get(to).and_then(Value::as_int).unwrap_or(0);
                next.insert(to.to_owned(), Value::Int(to_balance + amount));
                Ok((Value::str("accepted"), Value::Map(next)))
            }
            "readBalance" => Ok((Value::Int(balance(state, self.account(op, 0)?)), state.clone())),
            _ => Err(unknown_method(op)),
        }
    }
}
