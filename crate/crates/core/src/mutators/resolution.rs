//! Operator resolution: compute an elementwise op one slice at a time.

use rand::seq::SliceRandom;
use rand::Rng;

use super::{body_mut, walk_paths, MutationDetail, MutationError, MutationKind, UnrollForm};
use crate::ir::{infer_types, names, zeros_attrs, IndexExpr, Program, Stmt};
use crate::opset::OpKind;

/// Replace one elementwise `Assign` (anywhere in the program) by a loop of
/// slice assignments into a zero-filled buffer, or by a stacked comprehension.
pub fn op_resolution(prog: &Program, rng: &mut impl Rng) -> Result<(Program, MutationDetail), MutationError> {
    let none = || MutationError::NoApplicableSite(MutationKind::OperatorResolution);
    let types = infer_types(prog).map_err(|v| MutationError::Malformed(v.to_string()))?;
    let mut sites: Vec<Vec<usize>> = Vec::new();
    walk_paths(&prog.body, &mut Vec::new(), &mut |path, s| {
        if let Stmt::Assign { target, op, args, .. } = s {
            let rank = types.get(target).map_or(0, |t| t.0.rank());
            if op.is_elementwise() && rank >= 1 && !args.contains(target) {
                sites.push(path.to_vec());
            }
        }
    });
    let path = sites.choose(rng).ok_or_else(none)?.clone();
    let (last, parent) = path.split_last().expect("paths are non-empty");
    let mut out = prog.clone();
    let loop_var = out.fresh_name(names::LOOP);
    let body = body_mut(&mut out.body, parent);
    let Stmt::Assign { target, op, args, attrs } = body[*last].clone() else { unreachable!("site is an Assign") };
    let (shape, dtype) = types[&target].clone();
    let axis = rng.gen_range(0..shape.rank());
    let extent = shape.dims()[axis];
    let form = if rng.gen_bool(0.5) { UnrollForm::Loop } else { UnrollForm::Comprehension };
    let replacement = match form {
        UnrollForm::Loop => vec![
            Stmt::Assign { target: target.clone(), op: OpKind::Fill, args: vec![], attrs: zeros_attrs(&shape, dtype) },
            Stmt::ForLoop {
                var: loop_var.clone(),
                extent,
                body: vec![Stmt::SliceAssign { target: target.clone(), axis, index: IndexExpr::Var(loop_var), op, args, attrs }],
            },
        ],
        UnrollForm::Comprehension => vec![Stmt::ComprehensionAssign { target: target.clone(), axis, var: loop_var, extent, op, args, attrs }],
    };
    body.splice(*last..*last + 1, replacement);
    Ok((out, MutationDetail::OperatorResolution { path, target, axis, form }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{emit, EmitStyle, Param};
    use crate::opset::Attrs;
    use crate::profiler::{evaluate, outputs_bit_eq};
    use crate::tensor::{DType, Shape, TensorValue};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    fn relu_prog() -> (Program, BTreeMap<String, TensorValue>) {
        let prog = Program {
            params: vec![Param { name: "a".into(), shape: Shape::new(vec![2, 3]).unwrap(), dtype: DType::F32 }],
            body: vec![Stmt::Assign { target: "b".into(), op: OpKind::Relu, args: vec!["a".into()], attrs: Attrs::default() }],
            returns: vec!["b".into()],
        };
        let a = TensorValue::f32(&[2, 3], vec![-1.0, 2.0, -3.0, 4.0, -5.0, 6.0]).unwrap();
        (prog, [("a".to_string(), a)].into_iter().collect())
    }

    #[test]
    fn unrolled_relu_is_bit_equal() {
        let (prog, x) = relu_prog();
        let want = evaluate(&prog, &x).unwrap();
        let mut forms = std::collections::BTreeSet::new();
        for seed in 0..32 {
            let (m, d) = op_resolution(&prog, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            assert!(outputs_bit_eq(&evaluate(&m, &x).unwrap(), &want));
            if let MutationDetail::OperatorResolution { form, axis, .. } = d {
                forms.insert((format!("{form:?}"), axis));
                if form == UnrollForm::Loop && axis == 1 {
                    let text = emit(&m, EmitStyle::FunctionOnly).unwrap();
                    assert!(text.contains("    b = torch.full((2, 3), 0.0, dtype=torch.float32)\n    for i0 in range(3):\n        b[:, i0] = torch.relu(a[:, i0])\n"));
                }
            }
        }
        assert_eq!(forms.len(), 4);
    }

    #[test]
    fn no_site_without_elementwise_ops() {
        let prog = Program {
            params: vec![Param { name: "a".into(), shape: Shape::new(vec![2, 2]).unwrap(), dtype: DType::F32 }],
            body: vec![Stmt::Assign { target: "b".into(), op: OpKind::Matmul, args: vec!["a".into(), "a".into()], attrs: Attrs::default() }],
            returns: vec!["b".into()],
        };
        assert!(matches!(op_resolution(&prog, &mut ChaCha8Rng::seed_from_u64(0)), Err(MutationError::NoApplicableSite(_))));
    }

    #[test]
    fn rank_zero_targets_are_skipped() {
        let prog = Program {
            params: vec![Param { name: "a".into(), shape: Shape::scalar(), dtype: DType::F32 }],
            body: vec![Stmt::Assign { target: "b".into(), op: OpKind::Relu, args: vec!["a".into()], attrs: Attrs::default() }],
            returns: vec!["b".into()],
        };
        assert!(op_resolution(&prog, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }
}
