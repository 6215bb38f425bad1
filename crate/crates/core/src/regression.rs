//! Hand-built programs combining several mutations in ways known to have
//! broken real compilers. Each pairs a mutated program with the seed it must
//! agree with.

use std::collections::BTreeMap;

use crate::ir::{CmpOp, ConditionExpr, FuncDef, Param, Program, ScalarExpr, Stmt};
use crate::opset::{Attrs, OpKind};
use crate::tensor::{DType, Scalar, Shape, TensorValue};

#[derive(Debug, Clone)]
pub struct RegressionCase {
    pub name: &'static str,
    pub description: &'static str,
    pub seed: Program,
    pub program: Program,
    pub inputs: BTreeMap<String, TensorValue>,
}

fn param(name: &str, dims: &[usize]) -> Param {
    Param { name: name.into(), shape: Shape::new(dims.to_vec()).expect("valid shape"), dtype: DType::F32 }
}

fn assign(target: &str, op: OpKind, args: &[&str], attrs: Attrs) -> Stmt {
    Stmt::Assign { target: target.into(), op, args: args.iter().map(|s| s.to_string()).collect(), attrs }
}

fn names(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

fn backup(tmp: &str, source: &str, pos: &[usize]) -> Stmt {
    Stmt::BackupStore { tmp: tmp.into(), source: source.into(), pos: pos.to_vec() }
}

fn store(target: &str, pos: &[usize], v: f64) -> Stmt {
    Stmt::PointStore { target: target.into(), pos: pos.to_vec(), value: Scalar::Float(v) }
}

fn restore(target: &str, pos: &[usize], tmp: &str) -> Stmt {
    Stmt::RestoreStore { target: target.into(), pos: pos.to_vec(), tmp: tmp.into() }
}

/// A max reduction over a tensor whose element is clobbered inside an
/// always-true branch and restored before the reduction.
fn branch_in_recovery_window() -> RegressionCase {
    let params = vec![param("x0", &[2, 3]), param("x1", &[3])];
    let tail = vec![assign("v0", OpKind::MaxReduce, &["x0"], Attrs::axis(0)), assign("v1", OpKind::Mul, &["v0", "x1"], Attrs::default())];
    let cond = ConditionExpr { lhs: ScalarExpr::ShapeDim { var: "x0".into(), dim: 1 }, op: CmpOp::Ge, rhs: ScalarExpr::IntConst { value: 3 } };
    let mut body = vec![backup("_bk0", "x0", &[1, 2]), Stmt::IfBlock { cond, body: vec![store("x0", &[1, 2], 4.0)] }, restore("x0", &[1, 2], "_bk0")];
    body.extend(tail.clone());
    let inputs = [
        ("x0".to_string(), TensorValue::f32(&[2, 3], vec![0.5, -1.0, 1.5, 2.0, 0.25, -0.75]).expect("shape")),
        ("x1".to_string(), TensorValue::f32(&[3], vec![1.0, -2.0, 0.5]).expect("shape")),
    ]
    .into();
    RegressionCase {
        name: "branch_in_recovery_window",
        description: "mutate-then-recover on an input, with the store wrapped in an always-true branch, ahead of a reduction",
        seed: Program { params: params.clone(), body: tail, returns: names(&["v1"]) },
        program: Program { params, body, returns: names(&["v1"]) },
        inputs,
    }
}

/// A nested function writes into a captured tensor and hands it back; the
/// caller must observe the restored value.
fn captured_in_place_write() -> RegressionCase {
    let params = vec![param("x0", &[4])];
    let cond = ConditionExpr { lhs: ScalarExpr::Max { var: "v0".into() }, op: CmpOp::Ge, rhs: ScalarExpr::Min { var: "v0".into() } };
    let def = FuncDef {
        name: "subfunc0".into(),
        params: vec![],
        free_vars: names(&["v0"]),
        body: vec![backup("_bk0", "v0", &[1]), Stmt::IfBlock { cond, body: vec![store("v0", &[1], 2.0)] }, restore("v0", &[1], "_bk0")],
        returns: names(&["_bk0", "v0"]),
    };
    let relu = assign("v0", OpKind::Relu, &["x0"], Attrs::default());
    let add = assign("v1", OpKind::Add, &["v0", "v0"], Attrs::default());
    let body = vec![
        relu.clone(),
        Stmt::FuncDef(def),
        Stmt::Call { results: names(&["_bk0", "v0"]), func: "subfunc0".into(), args: vec![] },
        add.clone(),
    ];
    RegressionCase {
        name: "captured_in_place_write",
        description: "mutate-then-recover, an always-true branch and functionalization around a captured tensor",
        seed: Program { params: params.clone(), body: vec![relu, add], returns: names(&["v1"]) },
        program: Program { params, body, returns: names(&["v1"]) },
        inputs: [("x0".to_string(), TensorValue::f32(&[4], vec![-1.0, 1.0, 0.5, 3.0]).expect("shape"))].into(),
    }
}

/// A function defined before the backup variable it reads; the closure
/// resolves it at call time.
fn hoisted_closure_reads_later_backup() -> RegressionCase {
    let params = vec![param("x0", &[2, 2])];
    let relu = assign("v0", OpKind::Relu, &["x0"], Attrs::default());
    let tanh = assign("v1", OpKind::Tanh, &["v0"], Attrs::default());
    let def = FuncDef {
        name: "subfunc0".into(),
        params: vec![],
        free_vars: names(&["_bk0", "v0"]),
        body: vec![restore("v0", &[0, 1], "_bk0"), tanh.clone()],
        returns: names(&["v0", "v1"]),
    };
    let body = vec![
        Stmt::FuncDef(def),
        relu.clone(),
        backup("_bk0", "v0", &[0, 1]),
        store("v0", &[0, 1], -3.0),
        Stmt::Call { results: names(&["v0", "v1"]), func: "subfunc0".into(), args: vec![] },
    ];
    RegressionCase {
        name: "hoisted_closure_reads_later_backup",
        description: "a hoisted nested function restores a tensor from a backup bound after its definition",
        seed: Program { params: params.clone(), body: vec![relu, tanh], returns: names(&["v1"]) },
        program: Program { params, body, returns: names(&["v1"]) },
        inputs: [("x0".to_string(), TensorValue::f32(&[2, 2], vec![0.3, 1.2, -0.4, 0.9]).expect("shape"))].into(),
    }
}

pub fn corpus() -> Vec<RegressionCase> {
    vec![branch_in_recovery_window(), captured_in_place_write(), hoisted_closure_reads_later_backup()]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{emit, validate, EmitStyle};
    use crate::profiler::{evaluate_checked, outputs_bit_eq};

    #[test]
    fn every_case_is_valid_and_equivalent_to_its_seed() {
        for c in corpus() {
            assert!(validate(&c.seed).is_empty(), "{}", c.name);
            assert_eq!(validate(&c.program), vec![], "{}", c.name);
            let want = evaluate_checked(&c.seed, &c.inputs).unwrap();
            let got = evaluate_checked(&c.program, &c.inputs).unwrap();
            assert!(outputs_bit_eq(&got, &want), "{}", c.name);
        }
    }

    #[test]
    fn hoisted_definition_precedes_backup() {
        let c = hoisted_closure_reads_later_backup();
        let src = emit(&c.program, EmitStyle::FunctionOnly).unwrap();
        let def = src.find("def subfunc0").unwrap();
        let bk = src.find("_bk0 = v0[0, 1].clone()").unwrap();
        assert!(def < bk, "{src}");
        assert!(src.contains("v0[0, 1] = _bk0"));
    }

    #[test]
    fn branch_store_is_dead_on_output() {
        // Without the restore the clobbered element would win the reduction.
        let mut c = branch_in_recovery_window();
        c.program.body.remove(2);
        let want = evaluate_checked(&c.seed, &c.inputs).unwrap();
        assert!(!outputs_bit_eq(&evaluate_checked(&c.program, &c.inputs).unwrap(), &want));
    }
}
