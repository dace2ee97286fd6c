use crate::objects::{expect_arity, unknown_method};
use crate::op::OpInstance;
use crate::seqspec::{ObjectSpec, ObjectState, SpecError};
use crate::value::Value;

/// Values that may be appended to the list object.
pub const LIST_VALUES: [&str; 4] = ["a", "b", "c", "d"];

/// List object with `append(v)`, `readLast()`, `readAll()` and `swap(i, j)`.
///
/// State: `Value::List` of single-letter strings. `swap(i, j)` requires
/// `0 <= i <= j` and succeeds when indices `0..=j` exist; otherwise it
/// returns `⊥` and leaves the list untouched.
#[derive(Debug, Clone, Copy, Default)]
pub struct ListSpec;

pub fn list_spec() -> ListSpec {
    ListSpec
}

fn index_arg(op: &OpInstance, i: usize) -> Result<usize, SpecError> {
    match op.args[i].as_int() {
        Some(v) if v >= 0 => Ok(v as usize),
        _ => Err(SpecError::malformed(op, format!("argument {i} must be a non-negative integer"))),
    }
}

impl ObjectSpec for ListSpec {
    fn name(&self) -> &str {
        "list"
    }

    fn initial_state(&self) -> ObjectState {
        Value::List(Vec::new())
    }

    fn validate(&self, op: &OpInstance) -> Result<(), SpecError> {
        match op.method.as_str() {
            "append" => {
                expect_arity(op, 1)?;
                match op.args[0].as_str() {
                    Some(v) if LIST_VALUES.contains(&v) => Ok(()),
                    _ => Err(SpecError::malformed(op, "value must be one of a, b, c, d")),
                }
            }
            "readLast" | "readAll" => expect_arity(op, 0),
            "swap" => {
                expect_arity(op, 2)?;
                let (i, j) = (index_arg(op, 0)?, index_arg(op, 1)?);
                if i > j {
                    return Err(SpecError::malformed(op, "swap requires i <= j"));
                }
                Ok(())
            }
            _ => Err(unknown_method(op)),
        }
    }

    fn apply(&self, state: &ObjectState, op: &OpInstance) -> Result<(Value, ObjectState), SpecError> {
        self.validate(op)?;
        let items = state
            .as_list()
            .ok_or_else(|| SpecError::malformed(op, "list state expected"))?;
        Ok(match op.method.as_str() {
            "append" => {
                let mut next = items.to_vec();
                next.push(op.args[0].clone());
                (Value::ok(), Value::List(next))
            }
            "readLast" => (items.last().cloned().unwrap_or(Value::Nil), state.clone()),
            "readAll" => (state.clone(), state.clone()),
            "swap" => {
                let (i, j) = (index_arg(op, 0)?, index_arg(op, 1)?);
                if items.len() > i.max(j) {
                    let mut next = items.to_vec();
                    next.swap(i, j);
                    (Value::ok(), Value::List(next))
                } else {
                    (Value::Nil, state.clone())
                }
            }
            _ => return Err(unknown_method(op)),
        })
    }
}
