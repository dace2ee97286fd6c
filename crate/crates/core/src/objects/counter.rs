use crate::objects::{expect_arity, unknown_method};
use crate::op::OpInstance;
use crate::seqspec::{ObjectSpec, ObjectState, SpecError};
use crate::value::Value;

/// Counter with `inc()` and `read()`; state is `Value::Int`.
#[derive(Debug, Clone, Copy, Default)]
pub struct CounterSpec;

pub fn counter_spec() -> CounterSpec {
    CounterSpec
}

impl ObjectSpec for CounterSpec {
    fn name(&self) -> &str {
        "counter"
    }

    fn initial_state(&self) -> ObjectState {
        Value::Int(0)
    }

    fn validate(&self, op: &OpInstance) -> Result<(), SpecError> {
        match op.method.as_str() {
            "inc" | "read" => expect_arity(op, 0),
            _ => Err(unknown_method(op)),
        }
    }

    fn apply(&self, state: &ObjectState, op: &OpInstance) -> Result<(Value, ObjectState), SpecError> {
        self.validate(op)?;
        let n = state.as_int().unwrap_or(0);
        Ok(match op.method.as_str() {
            "inc" => (Value::ok(), Value::Int(n + 1)),
            _ => (Value::Int(n), state.clone()),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqspec::commutes_with_set;

    #[test]
    fn inc_commutes_with_inc_anywhere() {
        let incs: Vec<_> = (0..3).map(|p| OpInstance::new(p, 0, "inc", vec![])).collect();
        assert!(commutes_with_set(&CounterSpec, &[&incs[0]], &incs[1], &[&incs[2]]).unwrap());
    }

    #[test]
    fn read_sees_count() {
        let (r, _) = CounterSpec.apply(&Value::Int(4), &OpInstance::new(0, 0, "read", vec![])).unwrap();
        assert_eq!(r, Value::Int(4));
    }
}
