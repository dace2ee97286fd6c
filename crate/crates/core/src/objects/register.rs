use crate::objects::{expect_arity, unknown_method};
use crate::op::OpInstance;
use crate::seqspec::{ObjectSpec, ObjectState, SpecError};
use crate::value::Value;

/// Read/write register, initially `⊥`. The state is the stored value.
#[derive(Debug, Clone, Copy, Default)]
pub struct RegisterSpec;

pub fn register_spec() -> RegisterSpec {
    RegisterSpec
}

impl ObjectSpec for RegisterSpec {
    fn name(&self) -> &str {
        "register"
    }

    fn initial_state(&self) -> ObjectState {
        Value::Nil
    }

    fn validate(&self, op: &OpInstance) -> Result<(), SpecError> {
        match op.method.as_str() {
            "write" => expect_arity(op, 1),
            "read" => expect_arity(op, 0),
            _ => Err(unknown_method(op)),
        }
    }

    fn apply(&self, state: &ObjectState, op: &OpInstance) -> Result<(Value, ObjectState), SpecError> {
        self.validate(op)?;
        Ok(match op.method.as_str() {
            "write" => (Value::ok(), op.args[0].clone()),
            _ => (state.clone(), state.clone()),
        })
    }
}
