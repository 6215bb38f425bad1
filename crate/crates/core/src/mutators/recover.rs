//! Mutate-then-recover: clobber one element, restore it before anyone looks.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{random_literal, MutationDetail, MutationError, MutationKind};
use crate::ir::analysis::{func_table, stmt_touches};
use crate::ir::{names, Program, Stmt};
use crate::profiler::trace;
use crate::tensor::TensorValue;

/// Back up element `pos` of a live tensor `t`, overwrite it with a random
/// literal, and restore it just before the next top-level statement that
/// reads, rebinds or writes `t` (or at the end of the body).
pub fn mutate_then_recover(
    prog: &Program,
    inputs: &BTreeMap<String, TensorValue>,
    rng: &mut impl Rng,
) -> Result<(Program, MutationDetail), MutationError> {
    let envs = trace(prog, inputs)?;
    let sites: Vec<(usize, &String)> = envs
        .iter()
        .enumerate()
        .flat_map(|(p, env)| env.iter().filter(|(_, t)| t.shape().rank() >= 1).map(move |(n, _)| (p, n)))
        .collect();
    let &(at, name) = sites.choose(rng).ok_or(MutationError::NoApplicableSite(MutationKind::MutateThenRecover))?;
    let t = &envs[at][name];
    let pos: Vec<usize> = t.shape().dims().iter().map(|&d| rng.gen_range(0..d)).collect();
    let value = random_literal(rng, t.dtype());
    let funcs = func_table(prog);
    let restore_at = (at..prog.body.len()).find(|&j| stmt_touches(&prog.body[j], name, &funcs)).unwrap_or(prog.body.len());
    let backup = prog.fresh_name(names::BACKUP);

    let mut body = Vec::with_capacity(prog.body.len() + 3);
    body.extend_from_slice(&prog.body[..at]);
    body.push(Stmt::BackupStore { tmp: backup.clone(), source: name.clone(), pos: pos.clone() });
    body.push(Stmt::PointStore { target: name.clone(), pos: pos.clone(), value });
    body.extend_from_slice(&prog.body[at..restore_at]);
    body.push(Stmt::RestoreStore { target: name.clone(), pos: pos.clone(), tmp: backup.clone() });
    body.extend_from_slice(&prog.body[restore_at..]);
    let out = Program { params: prog.params.clone(), body, returns: prog.returns.clone() };
    let detail = MutationDetail::MutateThenRecover { tensor: name.clone(), pos, value, backup, store_at: at, restore_at: restore_at + 2 };
    Ok((out, detail))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::Param;
    use crate::opset::{Attrs, OpKind};
    use crate::profiler::{evaluate, outputs_bit_eq};
    use crate::tensor::{DType, Shape};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn chain() -> (Program, BTreeMap<String, TensorValue>) {
        let relu = |t: &str, a: &str| Stmt::Assign { target: t.into(), op: OpKind::Relu, args: vec![a.into()], attrs: Attrs::default() };
        let prog = Program {
            params: vec![Param { name: "a".into(), shape: Shape::new(vec![3]).unwrap(), dtype: DType::F32 }],
            body: vec![relu("v0", "a"), relu("v1", "v0"), relu("v2", "a")],
            returns: vec!["v1".into(), "v2".into()],
        };
        let x = [("a".to_string(), TensorValue::f32(&[3], vec![-1.0, 0.5, 2.0]).unwrap())].into_iter().collect();
        (prog, x)
    }

    #[test]
    fn restore_precedes_first_dependent() {
        let (prog, x) = chain();
        let want = evaluate(&prog, &x).unwrap();
        for seed in 0..64 {
            let (m, d) = mutate_then_recover(&prog, &x, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            assert!(outputs_bit_eq(&evaluate(&m, &x).unwrap(), &want), "seed {seed}");
            let MutationDetail::MutateThenRecover { tensor, store_at, restore_at, .. } = d else { panic!() };
            assert!(matches!(&m.body[restore_at], Stmt::RestoreStore { target, .. } if *target == tensor));
            // Nothing between the store and the restore touches the tensor.
            let funcs = func_table(&m);
            for s in &m.body[store_at + 2..restore_at] {
                assert!(!stmt_touches(s, &tensor, &funcs));
            }
        }
    }

    #[test]
    fn nested_windows_on_one_tensor() {
        let (prog, x) = chain();
        let want = evaluate(&prog, &x).unwrap();
        for seed in 0..64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (m1, _) = mutate_then_recover(&prog, &x, &mut rng).unwrap();
            let (m2, _) = mutate_then_recover(&m1, &x, &mut rng).unwrap();
            assert!(outputs_bit_eq(&evaluate(&m2, &x).unwrap(), &want));
            assert!(crate::ir::validate(&m2).is_empty());
        }
    }
}
