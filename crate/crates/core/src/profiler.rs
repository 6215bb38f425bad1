//! Reference interpreter for test programs, including every mutation
//! construct, with the ability to halt before a top-level statement and
//! snapshot the live variables.
//!
//! Scoping follows Python: each call gets a frame whose parent is the frame
//! the function was defined in, and a name that a body binds anywhere is local
//! to that body from the start.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::ir::analysis::body_binds;
use crate::ir::{ConditionExpr, FuncDef, IndexExpr, Program, ScalarExpr, Stmt};
use crate::opset::{eval_op, EvalError};
use crate::tensor::{DType, Scalar, TensorError, TensorValue};

/// What went wrong while interpreting.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Fault {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("name `{0}` is not bound")]
    Unbound(String),
    #[error("`{0}` has the wrong kind of value")]
    Kind(String),
    #[error("non-finite value in `{0}`")]
    NotFinite(String),
    #[error("input mismatch: {0}")]
    Inputs(String),
    #[error("comparison involving NaN")]
    Unordered,
}

/// A failure of reference evaluation, located by statement path.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("ReferenceRuntimeError at {path:?}: {fault}")]
pub struct ReferenceRuntimeError {
    pub path: Vec<usize>,
    pub fault: Fault,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    /// Tensor variables bound in the function's top-level scope.
    pub env: BTreeMap<String, TensorValue>,
    pub halted_at: Vec<usize>,
}

#[derive(Clone)]
enum Value<'p> {
    Tensor(TensorValue),
    Index(usize),
    Func(&'p FuncDef, usize),
}

struct Frame<'p> {
    vars: BTreeMap<String, Value<'p>>,
    locals: BTreeSet<String>,
    parent: Option<usize>,
}

/// Operand of a condition after evaluation, carrying the promotion category
/// the target framework would use: 0-d tensors of a dtype, or Python ints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Operand {
    Tensor(Scalar, DType),
    Int(i64),
}

fn to_f32(s: Scalar) -> f32 {
    match s {
        Scalar::Float(v) => v as f32,
        Scalar::Int(v) => v as f32,
        Scalar::Bool(b) => b as i64 as f32,
    }
}

fn to_i64(s: Scalar) -> i64 {
    match s {
        Scalar::Int(v) => v,
        Scalar::Bool(b) => b as i64,
        Scalar::Float(v) => v as i64,
    }
}

/// Order two operands under tensor type promotion: a Python int adopts the
/// tensor's dtype; two 0-d tensors meet at the wider float dtype if either
/// is floating, else compare as integers.
pub fn compare(a: Operand, b: Operand) -> Option<Ordering> {
    use Operand::*;
    let common = match (a, b) {
        (Int(x), Int(y)) => return Some(x.cmp(&y)),
        (Tensor(_, d), Int(_)) | (Int(_), Tensor(_, d)) => d,
        (Tensor(_, d1), Tensor(_, d2)) => match (d1.is_float(), d2.is_float()) {
            (true, true) => {
                if d1 == DType::F64 || d2 == DType::F64 {
                    DType::F64
                } else {
                    DType::F32
                }
            }
            (true, false) => d1,
            (false, true) => d2,
            (false, false) => DType::I64,
        },
    };
    let scalar = |o: Operand| match o {
        Tensor(s, _) => s,
        Int(v) => Scalar::Int(v),
    };
    let (x, y) = (scalar(a), scalar(b));
    match common {
        DType::F32 => to_f32(x).partial_cmp(&to_f32(y)),
        DType::F64 => x.as_f64().partial_cmp(&y.as_f64()),
        DType::I64 | DType::Bool => Some(to_i64(x).cmp(&to_i64(y))),
    }
}

/// Evaluate one condition operand against a tensor lookup.
pub fn eval_operand(e: &ScalarExpr, lookup: &dyn Fn(&str) -> Option<TensorValue>) -> Result<Operand, Fault> {
    let get = |v: &str| lookup(v).ok_or_else(|| Fault::Unbound(v.to_string()));
    Ok(match e {
        ScalarExpr::Element { var, pos } => {
            let t = get(var)?;
            Operand::Tensor(t.index_get(pos)?, t.dtype())
        }
        ScalarExpr::ShapeDim { var, dim } => {
            let t = get(var)?;
            let d = *t.shape().dims().get(*dim).ok_or_else(|| Fault::Kind(var.clone()))?;
            Operand::Int(d as i64)
        }
        ScalarExpr::Rank { var } => Operand::Int(get(var)?.shape().rank() as i64),
        ScalarExpr::Max { var } | ScalarExpr::Min { var } => {
            let t = get(var)?;
            let is_max = matches!(e, ScalarExpr::Max { .. });
            let mut best = t.flat(0);
            for s in t.scalars() {
                let ord = compare(Operand::Tensor(s, t.dtype()), Operand::Tensor(best, t.dtype())).ok_or(Fault::Unordered)?;
                if (is_max && ord == Ordering::Greater) || (!is_max && ord == Ordering::Less) {
                    best = s;
                }
            }
            Operand::Tensor(best, t.dtype())
        }
        ScalarExpr::IntConst { value } => Operand::Int(*value),
    })
}

pub fn eval_condition(c: &ConditionExpr, lookup: &dyn Fn(&str) -> Option<TensorValue>) -> Result<bool, Fault> {
    let l = eval_operand(&c.lhs, lookup)?;
    let r = eval_operand(&c.rhs, lookup)?;
    Ok(c.op.holds(compare(l, r).ok_or(Fault::Unordered)?))
}

struct Interp<'p> {
    frames: Vec<Frame<'p>>,
    check_finite: bool,
    path: Vec<usize>,
}

type Run<T = ()> = Result<T, Fault>;

impl<'p> Interp<'p> {
    fn top(&self) -> usize {
        self.frames.len() - 1
    }

    /// Index of the frame holding `name`, following Python resolution.
    fn resolve(&self, name: &str) -> Run<usize> {
        let mut idx = self.top();
        loop {
            let f = &self.frames[idx];
            if f.vars.contains_key(name) {
                return Ok(idx);
            }
            if f.locals.contains(name) {
                return Err(Fault::Unbound(name.to_string()));
            }
            idx = f.parent.ok_or_else(|| Fault::Unbound(name.to_string()))?;
        }
    }

    fn get(&self, name: &str) -> Run<&Value<'p>> {
        let idx = self.resolve(name)?;
        Ok(&self.frames[idx].vars[name])
    }

    fn tensor(&self, name: &str) -> Run<&TensorValue> {
        match self.get(name)? {
            Value::Tensor(t) => Ok(t),
            _ => Err(Fault::Kind(name.to_string())),
        }
    }

    fn tensor_mut(&mut self, name: &str) -> Run<&mut TensorValue> {
        let idx = self.resolve(name)?;
        match self.frames[idx].vars.get_mut(name) {
            Some(Value::Tensor(t)) => Ok(t),
            _ => Err(Fault::Kind(name.to_string())),
        }
    }

    fn index(&self, idx: &IndexExpr) -> Run<usize> {
        match idx {
            IndexExpr::Const(c) => Ok(*c),
            IndexExpr::Var(v) => match self.get(v)? {
                Value::Index(i) => Ok(*i),
                _ => Err(Fault::Kind(v.clone())),
            },
        }
    }

    fn bind(&mut self, name: &str, v: Value<'p>) -> Run {
        if let (true, Value::Tensor(t)) = (self.check_finite, &v) {
            if !t.check_valid() {
                return Err(Fault::NotFinite(name.to_string()));
            }
        }
        let top = self.top();
        self.frames[top].vars.insert(name.to_string(), v);
        Ok(())
    }

    fn check_mutated(&self, name: &str) -> Run {
        if self.check_finite && !self.tensor(name)?.check_valid() {
            return Err(Fault::NotFinite(name.to_string()));
        }
        Ok(())
    }

    fn apply(&self, op: crate::opset::OpKind, args: &[TensorValue], attrs: &crate::opset::Attrs) -> Run<TensorValue> {
        let refs: Vec<&TensorValue> = args.iter().collect();
        Ok(eval_op(op, &refs, attrs)?)
    }

    fn args(&self, args: &[String]) -> Run<Vec<TensorValue>> {
        args.iter().map(|a| self.tensor(a).cloned()).collect()
    }

    fn sliced(&self, args: &[String], axis: usize, i: usize) -> Run<Vec<TensorValue>> {
        args.iter().map(|a| Ok(self.tensor(a)?.select(axis, i)?)).collect()
    }

    fn body(&mut self, body: &'p [Stmt]) -> Run {
        for (k, s) in body.iter().enumerate() {
            self.path.push(k);
            self.stmt(s)?;
            self.path.pop();
        }
        Ok(())
    }

    fn stmt(&mut self, s: &'p Stmt) -> Run {
        match s {
            Stmt::Assign { target, op, args, attrs } => {
                let out = self.apply(*op, &self.args(args)?, attrs)?;
                self.bind(target, Value::Tensor(out))
            }
            Stmt::SliceAssign { target, axis, index, op, args, attrs } => {
                let i = self.index(index)?;
                let out = self.apply(*op, &self.sliced(args, *axis, i)?, attrs)?;
                self.tensor_mut(target)?.assign_select(*axis, i, &out)?;
                self.check_mutated(target)
            }
            Stmt::ForLoop { var, extent, body } => {
                for i in 0..*extent {
                    self.bind(var, Value::Index(i))?;
                    self.body(body)?;
                }
                Ok(())
            }
            Stmt::ComprehensionAssign { target, axis, extent, op, args, attrs, .. } => {
                let parts = (0..*extent)
                    .map(|i| self.apply(*op, &self.sliced(args, *axis, i)?, attrs))
                    .collect::<Run<Vec<_>>>()?;
                let out = TensorValue::stack(&parts, *axis)?;
                self.bind(target, Value::Tensor(out))
            }
            Stmt::BackupStore { tmp, source, pos } => {
                let t = self.tensor(source)?;
                let v = t.index_get(pos)?;
                let saved = TensorValue::full(crate::tensor::Shape::scalar(), t.dtype(), v)?;
                self.bind(tmp, Value::Tensor(saved))
            }
            Stmt::PointStore { target, pos, value } => {
                self.tensor_mut(target)?.store(pos, *value)?;
                self.check_mutated(target)
            }
            Stmt::RestoreStore { target, pos, tmp } => {
                let v = self.tensor(tmp)?.flat(0);
                self.tensor_mut(target)?.store(pos, v)?;
                self.check_mutated(target)
            }
            Stmt::IfBlock { cond, body } => {
                let lookup = |n: &str| self.tensor(n).ok().cloned();
                if eval_condition(cond, &lookup)? {
                    self.body(body)?;
                }
                Ok(())
            }
            Stmt::FuncDef(f) => {
                let top = self.top();
                self.bind(&f.name, Value::Func(f, top))
            }
            Stmt::Call { results, func, args } => {
                let (def, home) = match self.get(func)? {
                    Value::Func(d, h) => (*d, *h),
                    _ => return Err(Fault::Kind(func.clone())),
                };
                let vals = args.iter().map(|a| self.get(a).cloned()).collect::<Run<Vec<_>>>()?;
                let mut locals = body_binds(&def.body);
                locals.extend(def.params.iter().cloned());
                let vars = def.params.iter().cloned().zip(vals).collect();
                self.frames.push(Frame { vars, locals, parent: Some(home) });
                let out = self.body(&def.body).and_then(|_| def.returns.iter().map(|r| self.get(r).cloned()).collect::<Run<Vec<_>>>());
                self.frames.pop();
                for (r, v) in results.iter().zip(out?) {
                    self.bind(r, v)?;
                }
                Ok(())
            }
        }
    }
}

fn start<'p>(prog: &'p Program, inputs: &BTreeMap<String, TensorValue>, check_finite: bool) -> Result<Interp<'p>, ReferenceRuntimeError> {
    let err = |fault| ReferenceRuntimeError { path: vec![], fault };
    let mut locals = body_binds(&prog.body);
    let mut vars = BTreeMap::new();
    for p in &prog.params {
        let t = inputs.get(&p.name).ok_or_else(|| err(Fault::Inputs(format!("missing `{}`", p.name))))?;
        if t.shape() != &p.shape || t.dtype() != p.dtype {
            return Err(err(Fault::Inputs(format!("`{}` is {}{}, expected {}{}", p.name, t.dtype(), t.shape(), p.dtype, p.shape))));
        }
        if check_finite && !t.check_valid() {
            return Err(err(Fault::NotFinite(p.name.clone())));
        }
        locals.insert(p.name.clone());
        vars.insert(p.name.clone(), Value::Tensor(t.clone()));
    }
    Ok(Interp { frames: vec![Frame { vars, locals, parent: None }], check_finite, path: vec![] })
}

/// Incremental execution of a program's top-level statements.
pub struct Stepper<'p> {
    prog: &'p Program,
    interp: Interp<'p>,
    next: usize,
}

impl<'p> Stepper<'p> {
    pub fn new(prog: &'p Program, inputs: &BTreeMap<String, TensorValue>, check_finite: bool) -> Result<Self, ReferenceRuntimeError> {
        Ok(Stepper { prog, interp: start(prog, inputs, check_finite)?, next: 0 })
    }

    /// Index of the next top-level statement to run.
    pub fn position(&self) -> usize {
        self.next
    }

    pub fn done(&self) -> bool {
        self.next >= self.prog.body.len()
    }

    /// Run one top-level statement.
    pub fn step(&mut self) -> Result<(), ReferenceRuntimeError> {
        let k = self.next;
        let s = &self.prog.body[k];
        self.interp.path = vec![k];
        self.interp.stmt(s).map_err(|fault| ReferenceRuntimeError { path: self.interp.path.clone(), fault })?;
        self.next += 1;
        Ok(())
    }

    /// Deep copy of the tensors bound at top level.
    pub fn env(&self) -> BTreeMap<String, TensorValue> {
        self.interp.frames[0]
            .vars
            .iter()
            .filter_map(|(k, v)| match v {
                Value::Tensor(t) => Some((k.clone(), t.clone())),
                _ => None,
            })
            .collect()
    }

    /// Values of the program's returns, once every statement has run.
    pub fn outputs(&self) -> Result<Vec<TensorValue>, ReferenceRuntimeError> {
        let at = vec![self.prog.body.len()];
        self.prog
            .returns
            .iter()
            .map(|r| {
                let t = self.interp.tensor(r).map_err(|fault| ReferenceRuntimeError { path: at.clone(), fault })?;
                if self.interp.check_finite && !t.check_valid() {
                    return Err(ReferenceRuntimeError { path: at.clone(), fault: Fault::NotFinite(r.clone()) });
                }
                Ok(t.clone())
            })
            .collect()
    }
}

/// Execute the top-level statements strictly before `stop`.
pub fn profile_until(prog: &Program, inputs: &BTreeMap<String, TensorValue>, stop: usize) -> Result<Profile, ReferenceRuntimeError> {
    let mut st = Stepper::new(prog, inputs, false)?;
    while st.position() < stop.min(prog.body.len()) {
        st.step()?;
    }
    Ok(Profile { env: st.env(), halted_at: vec![st.position()] })
}

/// Snapshot of the top-level environment before each statement and after the
/// last one (`body.len() + 1` entries).
pub fn trace(prog: &Program, inputs: &BTreeMap<String, TensorValue>) -> Result<Vec<BTreeMap<String, TensorValue>>, ReferenceRuntimeError> {
    let mut st = Stepper::new(prog, inputs, false)?;
    let mut out = vec![st.env()];
    while !st.done() {
        st.step()?;
        out.push(st.env());
    }
    Ok(out)
}

fn run(prog: &Program, inputs: &BTreeMap<String, TensorValue>, check_finite: bool) -> Result<Vec<TensorValue>, ReferenceRuntimeError> {
    let mut st = Stepper::new(prog, inputs, check_finite)?;
    while !st.done() {
        st.step()?;
    }
    st.outputs()
}

/// Reference outputs of `prog` on `inputs`.
pub fn evaluate(prog: &Program, inputs: &BTreeMap<String, TensorValue>) -> Result<Vec<TensorValue>, ReferenceRuntimeError> {
    run(prog, inputs, false)
}

/// Like [`evaluate`], additionally failing on the first non-finite input,
/// intermediate or output.
pub fn evaluate_checked(prog: &Program, inputs: &BTreeMap<String, TensorValue>) -> Result<Vec<TensorValue>, ReferenceRuntimeError> {
    run(prog, inputs, true)
}

/// Bitwise equality of two output lists.
pub fn outputs_bit_eq(a: &[TensorValue], b: &[TensorValue]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.bit_eq(y))
}
