//! Deterministic Python emission.

use std::fmt::Write as _;

use thiserror::Error;

use super::{validate, ConditionExpr, IndexExpr, Program, ScalarExpr, Stmt};
use crate::opset::{py_literal, Attrs, OpKind};
use crate::tensor::{DType, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EmitStyle {
    /// `import torch` header followed by the function.
    #[default]
    Module,
    /// The bare `def f(...)` block.
    FunctionOnly,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmitError {
    #[error("malformed program: {0}")]
    MalformedProgram(String),
}

const INDENT: &str = "    ";

fn position(pos: &[usize]) -> String {
    if pos.is_empty() {
        "()".to_string()
    } else {
        pos.iter().map(usize::to_string).collect::<Vec<_>>().join(", ")
    }
}

fn index(index: &IndexExpr) -> String {
    match index {
        IndexExpr::Var(v) => v.clone(),
        IndexExpr::Const(c) => c.to_string(),
    }
}

/// `name[:, :, idx]` selecting `idx` along `axis`.
fn sliced(name: &str, axis: usize, idx: &str) -> String {
    let mut s = format!("{name}[");
    for _ in 0..axis {
        s.push_str(":, ");
    }
    s.push_str(idx);
    s.push(']');
    s
}

fn scalar_expr(e: &ScalarExpr) -> String {
    match e {
        ScalarExpr::Element { var, pos } => format!("{var}[{}]", position(pos)),
        ScalarExpr::ShapeDim { var, dim } => format!("{var}.shape[{dim}]"),
        ScalarExpr::Rank { var } => format!("len({var}.shape)"),
        ScalarExpr::Max { var } => format!("{var}.max()"),
        ScalarExpr::Min { var } => format!("{var}.min()"),
        ScalarExpr::IntConst { value } => value.to_string(),
    }
}

/// Python spelling of a condition, e.g. `len(a.shape) >= 2`.
pub fn emit_condition(c: &ConditionExpr) -> String {
    format!("{} {} {}", scalar_expr(&c.lhs), c.op.symbol(), scalar_expr(&c.rhs))
}

fn call(op: OpKind, args: Vec<String>, attrs: &Attrs) -> String {
    op.spec().render(&args, attrs)
}

fn tuple(names: &[String]) -> String {
    match names.len() {
        0 => "()".to_string(),
        1 => format!("({},)", names[0]),
        _ => format!("({})", names.join(", ")),
    }
}

fn zero_of(dtype: DType) -> Scalar {
    match dtype {
        DType::F32 | DType::F64 => Scalar::Float(0.0),
        DType::I64 => Scalar::Int(0),
        DType::Bool => Scalar::Bool(false),
    }
}

struct Emitter {
    out: String,
}

impl Emitter {
    fn line(&mut self, depth: usize, text: &str) {
        for _ in 0..depth {
            self.out.push_str(INDENT);
        }
        self.out.push_str(text);
        self.out.push('\n');
    }

    fn body(&mut self, depth: usize, body: &[Stmt]) {
        if body.is_empty() {
            self.line(depth, "pass");
        }
        for s in body {
            self.stmt(depth, s);
        }
    }

    fn stmt(&mut self, d: usize, s: &Stmt) {
        match s {
            Stmt::Assign { target, op, args, attrs } => {
                let rhs = call(*op, args.clone(), attrs);
                self.line(d, &format!("{target} = {rhs}"));
            }
            Stmt::SliceAssign { target, axis, index: idx, op, args, attrs } => {
                let i = index(idx);
                let sl = args.iter().map(|a| sliced(a, *axis, &i)).collect();
                let rhs = call(*op, sl, attrs);
                self.line(d, &format!("{} = {rhs}", sliced(target, *axis, &i)));
            }
            Stmt::ForLoop { var, extent, body } => {
                self.line(d, &format!("for {var} in range({extent}):"));
                self.body(d + 1, body);
            }
            Stmt::ComprehensionAssign { target, axis, var, extent, op, args, attrs } => {
                let sl = args.iter().map(|a| sliced(a, *axis, var)).collect();
                let elem = call(*op, sl, attrs);
                self.line(d, &format!("{target} = torch.stack([{elem} for {var} in range({extent})], dim={axis})"));
            }
            Stmt::BackupStore { tmp, source, pos } => {
                self.line(d, &format!("{tmp} = {source}[{}].clone()", position(pos)));
            }
            Stmt::PointStore { target, pos, value } => {
                self.line(d, &format!("{target}[{}] = {}", position(pos), py_literal(*value)));
            }
            Stmt::RestoreStore { target, pos, tmp } => {
                self.line(d, &format!("{target}[{}] = {tmp}", position(pos)));
            }
            Stmt::IfBlock { cond, body } => {
                self.line(d, &format!("if {}:", emit_condition(cond)));
                self.body(d + 1, body);
            }
            Stmt::FuncDef(f) => {
                self.line(d, &format!("def {}({}):", f.name, f.params.join(", ")));
                for s in &f.body {
                    self.stmt(d + 1, s);
                }
                self.line(d + 1, &format!("return {}", tuple(&f.returns)));
            }
            Stmt::Call { results, func, args } => {
                let call = format!("{func}({})", args.join(", "));
                match results.len() {
                    0 => self.line(d, &call),
                    _ => {
                        let mut lhs = results.join(", ");
                        if results.len() == 1 {
                            lhs.push(',');
                        }
                        self.line(d, &format!("{lhs} = {call}"));
                    }
                }
            }
        }
    }
}

/// Emit the allocation that precedes an unrolled loop: `target = zeros`.
pub(crate) fn zeros_attrs(shape: &crate::tensor::Shape, dtype: DType) -> Attrs {
    Attrs::fill(shape.clone(), dtype, zero_of(dtype))
}

/// Render `prog` as Python source. Fails on the first well-formedness violation.
pub fn emit(prog: &Program, style: EmitStyle) -> Result<String, EmitError> {
    if let Some(v) = validate(prog).into_iter().next() {
        return Err(EmitError::MalformedProgram(v.to_string()));
    }
    let mut e = Emitter { out: String::new() };
    if style == EmitStyle::Module {
        e.out.push_str("import torch\n\n\n");
    }
    let params: Vec<&str> = prog.params.iter().map(|p| p.name.as_str()).collect();
    let _ = writeln!(e.out, "def f({}):", params.join(", "));
    for s in &prog.body {
        e.stmt(1, s);
    }
    e.line(1, &format!("return {}", tuple(&prog.returns)));
    Ok(e.out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{CmpOp, Param};
    use crate::tensor::Shape;

    fn param(name: &str, dims: &[usize]) -> Param {
        Param { name: name.into(), shape: Shape::new(dims.to_vec()).unwrap(), dtype: DType::F32 }
    }

    #[test]
    fn emits_relu_assignment() {
        let prog = Program {
            params: vec![param("a", &[2, 3])],
            body: vec![Stmt::Assign { target: "v0".into(), op: OpKind::Relu, args: vec!["a".into()], attrs: Attrs::default() }],
            returns: vec!["v0".into()],
        };
        let text = emit(&prog, EmitStyle::FunctionOnly).unwrap();
        assert_eq!(text, "def f(a):\n    v0 = torch.relu(a)\n    return (v0,)\n");
        assert!(emit(&prog, EmitStyle::Module).unwrap().starts_with("import torch\n"));
    }

    #[test]
    fn emits_rank_condition() {
        let c = ConditionExpr {
            lhs: ScalarExpr::Rank { var: "a".into() },
            op: CmpOp::Ge,
            rhs: ScalarExpr::IntConst { value: 2 },
        };
        assert_eq!(emit_condition(&c), "len(a.shape) >= 2");
        let c = ConditionExpr {
            lhs: ScalarExpr::Element { var: "a".into(), pos: vec![0, 1] },
            op: CmpOp::Lt,
            rhs: ScalarExpr::ShapeDim { var: "a".into(), dim: 1 },
        };
        assert_eq!(c.to_string(), "a[0, 1] < a.shape[1]");
    }

    #[test]
    fn emits_unrolled_loop() {
        let shape = Shape::new(vec![2, 3]).unwrap();
        let prog = Program {
            params: vec![param("a", &[2, 3])],
            body: vec![
                Stmt::Assign { target: "b".into(), op: OpKind::Fill, args: vec![], attrs: zeros_attrs(&shape, DType::F32) },
                Stmt::ForLoop {
                    var: "i0".into(),
                    extent: 3,
                    body: vec![Stmt::SliceAssign {
                        target: "b".into(),
                        axis: 1,
                        index: IndexExpr::Var("i0".into()),
                        op: OpKind::Relu,
                        args: vec!["a".into()],
                        attrs: Attrs::default(),
                    }],
                },
            ],
            returns: vec!["b".into()],
        };
        let text = emit(&prog, EmitStyle::FunctionOnly).unwrap();
        assert_eq!(
            text,
            "def f(a):\n    b = torch.full((2, 3), 0.0, dtype=torch.float32)\n    for i0 in range(3):\n        b[:, i0] = torch.relu(a[:, i0])\n    return (b,)\n"
        );
    }

    #[test]
    fn rejects_undefined_names() {
        let prog = Program {
            params: vec![],
            body: vec![Stmt::Assign { target: "v0".into(), op: OpKind::Relu, args: vec!["a".into()], attrs: Attrs::default() }],
            returns: vec!["v0".into()],
        };
        assert!(matches!(emit(&prog, EmitStyle::Module), Err(EmitError::MalformedProgram(_))));
    }
}
