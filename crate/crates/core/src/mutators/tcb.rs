//! Always-true conditional blocks: wrap a span in `if <cond>:` where the
//! condition is synthesized to hold on the profiled values at that point.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{span_len, MutationDetail, MutationError, MutationKind, SITE_ATTEMPTS};
use crate::ir::{CmpOp, ConditionExpr, Program, ScalarExpr, Stmt, INT_CONST_BOUND};
use crate::profiler::{compare, eval_operand, profile_until};
use crate::tensor::{DType, TensorValue};

#[derive(Clone, Copy, PartialEq, Eq)]
enum Form {
    Element,
    ShapeDim,
    Rank,
    Max,
    Min,
    Const,
}

const FORMS: [Form; 6] = [Form::Element, Form::ShapeDim, Form::Rank, Form::Max, Form::Min, Form::Const];

fn pick_var<'e>(env: &'e BTreeMap<String, TensorValue>, rng: &mut impl Rng, ok: impl Fn(&TensorValue) -> bool) -> Option<(&'e String, &'e TensorValue)> {
    let vars: Vec<_> = env.iter().filter(|(_, t)| ok(t)).collect();
    vars.choose(rng).copied()
}

fn operand(env: &BTreeMap<String, TensorValue>, rng: &mut impl Rng) -> ScalarExpr {
    loop {
        let form = *FORMS.choose(rng).expect("non-empty");
        let picked = match form {
            Form::Element => pick_var(env, rng, |t| t.shape().rank() >= 1).map(|(v, t)| ScalarExpr::Element {
                var: v.clone(),
                pos: t.shape().dims().iter().map(|&d| rng.gen_range(0..d)).collect(),
            }),
            Form::ShapeDim => pick_var(env, rng, |t| t.shape().rank() >= 1)
                .map(|(v, t)| ScalarExpr::ShapeDim { var: v.clone(), dim: rng.gen_range(0..t.shape().rank()) }),
            Form::Rank => pick_var(env, rng, |_| true).map(|(v, _)| ScalarExpr::Rank { var: v.clone() }),
            Form::Max => pick_var(env, rng, |t| t.dtype().is_numeric()).map(|(v, _)| ScalarExpr::Max { var: v.clone() }),
            Form::Min => pick_var(env, rng, |t| t.dtype().is_numeric()).map(|(v, _)| ScalarExpr::Min { var: v.clone() }),
            Form::Const => Some(ScalarExpr::IntConst { value: rng.gen_range(-INT_CONST_BOUND..=INT_CONST_BOUND) }),
        };
        if let Some(e) = picked {
            return e;
        }
    }
}

fn is_bool_element(e: &ScalarExpr, env: &BTreeMap<String, TensorValue>) -> bool {
    matches!(e, ScalarExpr::Element { var, .. } if env[var].dtype() == DType::Bool)
}

fn is_zero_or_one(e: &ScalarExpr) -> bool {
    matches!(e, ScalarExpr::IntConst { value: 0 | 1 })
}

/// A condition over `env` that evaluates true, or `None` if `env` is empty.
pub fn synthesize_condition(env: &BTreeMap<String, TensorValue>, rng: &mut impl Rng) -> Option<ConditionExpr> {
    if env.is_empty() {
        return None;
    }
    let lhs = operand(env, rng);
    let rhs = if is_bool_element(&lhs, env) {
        ScalarExpr::IntConst { value: rng.gen_range(0..=1) }
    } else {
        loop {
            let r = operand(env, rng);
            if !is_bool_element(&r, env) || is_zero_or_one(&lhs) {
                break r;
            }
        }
    };
    let (lhs, rhs) = if rng.gen_bool(0.5) { (lhs, rhs) } else { (rhs, lhs) };
    let look = |n: &str| env.get(n).cloned();
    let l = eval_operand(&lhs, &look).ok()?;
    let r = eval_operand(&rhs, &look).ok()?;
    let coin = rng.gen_bool(0.5);
    let op = match compare(l, r)? {
        Ordering::Equal => {
            if coin {
                CmpOp::Ge
            } else {
                CmpOp::Le
            }
        }
        Ordering::Greater => {
            if coin {
                CmpOp::Gt
            } else {
                CmpOp::Ge
            }
        }
        Ordering::Less => {
            if coin {
                CmpOp::Lt
            } else {
                CmpOp::Le
            }
        }
    };
    Some(ConditionExpr { lhs, op, rhs })
}

/// Wrap a random top-level span without function definitions in an
/// always-true `if`.
pub fn tcb_insert(prog: &Program, inputs: &BTreeMap<String, TensorValue>, rng: &mut impl Rng) -> Result<(Program, MutationDetail), MutationError> {
    let len = prog.body.len();
    let mut failure = MutationError::NoApplicableSite(MutationKind::Tcb);
    if len == 0 {
        return Err(failure);
    }
    for _ in 0..SITE_ATTEMPTS {
        let start = rng.gen_range(0..len);
        let n = span_len(rng, len - start);
        let span = &prog.body[start..start + n];
        if span.iter().any(|s| matches!(s, Stmt::FuncDef(_))) {
            continue;
        }
        let profile = profile_until(prog, inputs, start)?;
        let Some(cond) = synthesize_condition(&profile.env, rng) else {
            failure = MutationError::SynthesisFailed(start);
            continue;
        };
        let mut body = Vec::with_capacity(len + 1 - n);
        body.extend_from_slice(&prog.body[..start]);
        body.push(Stmt::IfBlock { cond: cond.clone(), body: span.to_vec() });
        body.extend_from_slice(&prog.body[start + n..]);
        let out = Program { params: prog.params.clone(), body, returns: prog.returns.clone() };
        return Ok((out, MutationDetail::Tcb { start, len: n, cond }));
    }
    Err(failure)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiler::eval_condition;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn env() -> BTreeMap<String, TensorValue> {
        let mut e = BTreeMap::new();
        e.insert("a".to_string(), TensorValue::f32(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        e.insert("b".to_string(), TensorValue::bool(&[3], vec![true, false, true]).unwrap());
        e.insert("c".to_string(), TensorValue::i64(&[], vec![-5]).unwrap());
        e.insert("d".to_string(), TensorValue::f64(&[1, 3], vec![0.1, -0.2, 9.5]).unwrap());
        e
    }

    #[test]
    fn synthesized_conditions_hold() {
        let env = env();
        let look = |n: &str| env.get(n).cloned();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..2000 {
            let c = synthesize_condition(&env, &mut rng).unwrap();
            assert!(eval_condition(&c, &look).unwrap(), "{c}");
            for side in [&c.lhs, &c.rhs] {
                if is_bool_element(side, &env) {
                    let other = if std::ptr::eq(side, &c.lhs) { &c.rhs } else { &c.lhs };
                    assert!(is_zero_or_one(other));
                }
                assert!(!matches!(side, ScalarExpr::Max { var } | ScalarExpr::Min { var } if var == "b"));
            }
        }
    }

    #[test]
    fn ties_use_non_strict_ops() {
        let env: BTreeMap<String, TensorValue> = [("a".to_string(), TensorValue::f32(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap())].into();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let c = synthesize_condition(&env, &mut rng).unwrap();
            if c.lhs == c.rhs {
                assert!(matches!(c.op, CmpOp::Ge | CmpOp::Le));
            }
        }
    }

    #[test]
    fn empty_environment_fails() {
        assert!(synthesize_condition(&BTreeMap::new(), &mut ChaCha8Rng::seed_from_u64(0)).is_none());
    }
}
