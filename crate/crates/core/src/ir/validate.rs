//! Well-formedness checking by abstract execution.
//!
//! Statements are walked in execution order with Python's scoping rules:
//! function bodies are checked when their `Call` runs, so a function may be
//! defined before the variables it captures exist (hoisting).

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use super::analysis::{body_binds, func_table, function_free_vars, returned_names};
use super::{ConditionExpr, FuncDef, IndexExpr, Program, ScalarExpr, Stmt};
use crate::opset::{infer, Attrs, OpKind};
use crate::tensor::{DType, Shape};

/// Largest magnitude of an `IntConst` operand.
pub const INT_CONST_BOUND: i64 = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Violation {
    #[error("UndefinedName: `{0}` is not defined")]
    UndefinedName(String),
    #[error("UnboundLocal: `{0}` is read before assignment in its scope")]
    UnboundLocal(String),
    #[error("NotATensor: `{0}`")]
    NotATensor(String),
    #[error("NotAFunction: `{0}`")]
    NotAFunction(String),
    #[error("IllTyped: {0}")]
    IllTyped(String),
    #[error("OutOfBounds: {0}")]
    OutOfBounds(String),
    #[error("FuncDefInIfBlock: `{0}`")]
    FuncDefInIfBlock(String),
    #[error("DuplicateFunction: `{0}`")]
    DuplicateFunction(String),
    #[error("ReturnsMismatch: `{func}` returns {got:?}, body defines or mutates {expected:?}")]
    ReturnsMismatch { func: String, expected: Vec<String>, got: Vec<String> },
    #[error("FreeVarsMismatch: `{func}` declares {declared:?}, captures {actual:?}")]
    FreeVarsMismatch { func: String, declared: Vec<String>, actual: Vec<String> },
    #[error("CallArity: {0}")]
    CallArity(String),
    #[error("Recursion: `{0}` calls itself")]
    Recursion(String),
    #[error("BadCondition: {0}")]
    BadCondition(String),
    #[error("EmptyReturns")]
    EmptyReturns,
    #[error("DuplicateParam: `{0}`")]
    DuplicateParam(String),
}

#[derive(Clone)]
enum Kind<'p> {
    Tensor(Shape, DType),
    Index(usize),
    Func(&'p FuncDef, usize),
}

struct Frame<'p> {
    vars: BTreeMap<String, Kind<'p>>,
    locals: BTreeSet<String>,
    parent: Option<usize>,
}

struct Checker<'p> {
    frames: Vec<Frame<'p>>,
    active: Vec<String>,
    types: BTreeMap<String, (Shape, DType)>,
}

type Check<T = ()> = Result<T, Violation>;

impl<'p> Checker<'p> {
    fn top(&self) -> usize {
        self.frames.len() - 1
    }

    fn lookup(&self, name: &str) -> Check<Kind<'p>> {
        let mut idx = self.top();
        loop {
            let f = &self.frames[idx];
            if let Some(k) = f.vars.get(name) {
                return Ok(k.clone());
            }
            if f.locals.contains(name) {
                return Err(Violation::UnboundLocal(name.into()));
            }
            match f.parent {
                Some(p) => idx = p,
                None => return Err(Violation::UndefinedName(name.into())),
            }
        }
    }

    fn tensor(&self, name: &str) -> Check<(Shape, DType)> {
        match self.lookup(name)? {
            Kind::Tensor(s, d) => Ok((s, d)),
            _ => Err(Violation::NotATensor(name.into())),
        }
    }

    fn bind(&mut self, name: &str, kind: Kind<'p>) -> Check {
        if let Kind::Tensor(s, d) = &kind {
            if let Some(Kind::Tensor(s0, d0)) = self.frames[self.top()].vars.get(name) {
                if (s0, d0) != (s, d) {
                    return Err(Violation::IllTyped(format!("`{name}` rebound from {d0}{s0} to {d}{s}")));
                }
            }
            self.types.insert(name.to_string(), (s.clone(), *d));
        }
        let top = self.top();
        self.frames[top].vars.insert(name.to_string(), kind);
        Ok(())
    }

    fn infer(&self, op: OpKind, sigs: &[(Shape, DType)], attrs: &Attrs) -> Check<(Shape, DType)> {
        let shapes: Vec<&Shape> = sigs.iter().map(|s| &s.0).collect();
        let dtypes: Vec<DType> = sigs.iter().map(|s| s.1).collect();
        infer(op, &shapes, &dtypes, attrs).map_err(|r| Violation::IllTyped(r.to_string()))
    }

    fn args(&self, args: &[String]) -> Check<Vec<(Shape, DType)>> {
        args.iter().map(|a| self.tensor(a)).collect()
    }

    /// Signatures of `args` sliced along `axis`, checking every extent is `extent`.
    fn sliced_args(&self, op: OpKind, args: &[String], axis: usize, extent: usize) -> Check<Vec<(Shape, DType)>> {
        if !op.is_elementwise() {
            return Err(Violation::IllTyped(format!("{op} cannot be unrolled")));
        }
        let sigs = self.args(args)?;
        for (a, (s, _)) in args.iter().zip(&sigs) {
            if axis >= s.rank() || s.dims()[axis] != extent {
                return Err(Violation::OutOfBounds(format!("`{a}` {s} has no axis {axis} of extent {extent}")));
            }
        }
        Ok(sigs.into_iter().map(|(s, d)| (s.without_axis(axis), d)).collect())
    }

    fn pos_in_bounds(&self, name: &str, shape: &Shape, pos: &[usize]) -> Check {
        if shape.rank() == 0 || shape.flat_index(pos).is_err() {
            return Err(Violation::OutOfBounds(format!("position {pos:?} of `{name}` {shape}")));
        }
        Ok(())
    }

    fn operand(&self, e: &ScalarExpr) -> Check<Option<DType>> {
        match e {
            ScalarExpr::Element { var, pos } => {
                let (s, d) = self.tensor(var)?;
                self.pos_in_bounds(var, &s, pos)?;
                Ok(Some(d))
            }
            ScalarExpr::ShapeDim { var, dim } => {
                let (s, _) = self.tensor(var)?;
                if *dim >= s.rank() {
                    return Err(Violation::OutOfBounds(format!("`{var}` {s} has no dim {dim}")));
                }
                Ok(None)
            }
            ScalarExpr::Rank { var } => self.tensor(var).map(|_| None),
            ScalarExpr::Max { var } | ScalarExpr::Min { var } => {
                let (_, d) = self.tensor(var)?;
                if !d.is_numeric() {
                    return Err(Violation::BadCondition(format!("max/min of {d} tensor `{var}`")));
                }
                Ok(None)
            }
            ScalarExpr::IntConst { value } => {
                if value.abs() > INT_CONST_BOUND {
                    return Err(Violation::BadCondition(format!("constant {value} out of range")));
                }
                Ok(None)
            }
        }
    }

    fn condition(&self, c: &ConditionExpr) -> Check {
        let l = self.operand(&c.lhs)?;
        let r = self.operand(&c.rhs)?;
        let bool_ok = |other: &ScalarExpr| matches!(other, ScalarExpr::IntConst { value: 0 | 1 });
        if (l == Some(DType::Bool) && !bool_ok(&c.rhs)) || (r == Some(DType::Bool) && !bool_ok(&c.lhs)) {
            return Err(Violation::BadCondition(format!("bool element compared with non-0/1 operand in `{c}`")));
        }
        Ok(())
    }

    fn body(&mut self, body: &'p [Stmt], in_if: bool) -> Check {
        for s in body {
            self.stmt(s, in_if)?;
        }
        Ok(())
    }

    fn stmt(&mut self, s: &'p Stmt, in_if: bool) -> Check {
        match s {
            Stmt::Assign { target, op, args, attrs } => {
                let sigs = self.args(args)?;
                let (shape, dtype) = self.infer(*op, &sigs, attrs)?;
                self.bind(target, Kind::Tensor(shape, dtype))
            }
            Stmt::SliceAssign { target, axis, index, op, args, attrs } => {
                let (ts, td) = self.tensor(target)?;
                if *axis >= ts.rank() {
                    return Err(Violation::OutOfBounds(format!("`{target}` {ts} has no axis {axis}")));
                }
                let extent = ts.dims()[*axis];
                match index {
                    IndexExpr::Var(v) => match self.lookup(v)? {
                        Kind::Index(n) if n == extent => {}
                        _ => return Err(Violation::IllTyped(format!("`{v}` is not a loop index over {extent}"))),
                    },
                    IndexExpr::Const(c) if *c < extent => {}
                    IndexExpr::Const(c) => return Err(Violation::OutOfBounds(format!("index {c} >= {extent}"))),
                }
                let sigs = self.sliced_args(*op, args, *axis, extent)?;
                let got = self.infer(*op, &sigs, attrs)?;
                if got != (ts.without_axis(*axis), td) {
                    return Err(Violation::IllTyped(format!("slice of `{target}` receives {}{}", got.1, got.0)));
                }
                Ok(())
            }
            Stmt::ForLoop { var, extent, body } => {
                if *extent == 0 {
                    return Err(Violation::OutOfBounds(format!("empty loop over `{var}`")));
                }
                self.bind(var, Kind::Index(*extent))?;
                self.body(body, in_if)
            }
            Stmt::ComprehensionAssign { target, axis, var, extent, op, args, attrs } => {
                let parent = self.top();
                self.frames.push(Frame { vars: BTreeMap::new(), locals: BTreeSet::new(), parent: Some(parent) });
                let inner = self.bind(var, Kind::Index(*extent)).and_then(|_| {
                    let sigs = self.sliced_args(*op, args, *axis, *extent)?;
                    self.infer(*op, &sigs, attrs)
                });
                self.frames.pop();
                let (es, ed) = inner?;
                if *axis > es.rank() {
                    return Err(Violation::OutOfBounds(format!("stack axis {axis} for rank {}", es.rank())));
                }
                let mut dims = es.dims().to_vec();
                dims.insert(*axis, *extent);
                let shape = Shape::new(dims).map_err(|e| Violation::IllTyped(e.to_string()))?;
                self.bind(target, Kind::Tensor(shape, ed))
            }
            Stmt::BackupStore { tmp, source, pos } => {
                let (s, d) = self.tensor(source)?;
                self.pos_in_bounds(source, &s, pos)?;
                self.bind(tmp, Kind::Tensor(Shape::scalar(), d))
            }
            Stmt::PointStore { target, pos, value } => {
                let (s, d) = self.tensor(target)?;
                self.pos_in_bounds(target, &s, pos)?;
                if !value.matches(d) {
                    return Err(Violation::IllTyped(format!("literal {value:?} stored into {d} tensor `{target}`")));
                }
                Ok(())
            }
            Stmt::RestoreStore { target, pos, tmp } => {
                let (s, d) = self.tensor(target)?;
                self.pos_in_bounds(target, &s, pos)?;
                let (ts, td) = self.tensor(tmp)?;
                if ts.rank() != 0 || td != d {
                    return Err(Violation::IllTyped(format!("`{tmp}` cannot restore an element of `{target}`")));
                }
                Ok(())
            }
            Stmt::IfBlock { cond, body } => {
                self.condition(cond)?;
                self.body(body, true)
            }
            Stmt::FuncDef(f) => {
                if in_if {
                    return Err(Violation::FuncDefInIfBlock(f.name.clone()));
                }
                let top = self.top();
                self.bind(&f.name, Kind::Func(f, top))
            }
            Stmt::Call { results, func, args } => self.call(results, func, args),
        }
    }

    fn call(&mut self, results: &[String], func: &str, args: &[String]) -> Check {
        let (def, home) = match self.lookup(func)? {
            Kind::Func(d, h) => (d, h),
            _ => return Err(Violation::NotAFunction(func.into())),
        };
        if self.active.iter().any(|a| a == func) {
            return Err(Violation::Recursion(func.into()));
        }
        if args.len() != def.params.len() {
            return Err(Violation::CallArity(format!("`{func}` takes {} arguments, got {}", def.params.len(), args.len())));
        }
        if results.len() != def.returns.len() {
            return Err(Violation::CallArity(format!("`{func}` returns {} values, {} targets", def.returns.len(), results.len())));
        }
        let arg_kinds: Vec<Kind<'p>> = args.iter().map(|a| self.lookup(a)).collect::<Check<_>>()?;
        let mut locals = body_binds(&def.body);
        locals.extend(def.params.iter().cloned());
        let vars = def.params.iter().cloned().zip(arg_kinds).collect();
        self.frames.push(Frame { vars, locals, parent: Some(home) });
        self.active.push(func.to_string());
        let out = self.body(&def.body, false).and_then(|_| def.returns.iter().map(|r| self.lookup(r)).collect::<Check<Vec<_>>>());
        self.active.pop();
        self.frames.pop();
        for (r, k) in results.iter().zip(out?) {
            self.bind(r, k)?;
        }
        Ok(())
    }
}

fn check_funcs(prog: &Program) -> Check {
    let mut seen = BTreeSet::new();
    let mut dup = None;
    prog.walk(|s| {
        if let Stmt::FuncDef(d) = s {
            if !seen.insert(d.name.clone()) && dup.is_none() {
                dup = Some(d.name.clone());
            }
        }
    });
    if let Some(d) = dup {
        return Err(Violation::DuplicateFunction(d));
    }
    let funcs = func_table(prog);
    for def in funcs.values() {
        let expected = returned_names(&def.body);
        let exp_set: BTreeSet<&String> = expected.iter().collect();
        let got_set: BTreeSet<&String> = def.returns.iter().collect();
        if exp_set != got_set || got_set.len() != def.returns.len() {
            return Err(Violation::ReturnsMismatch { func: def.name.clone(), expected, got: def.returns.clone() });
        }
        let mut actual: BTreeSet<String> = function_free_vars(def, &funcs);
        for p in &def.params {
            actual.remove(p);
        }
        let declared: BTreeSet<String> = def.free_vars.iter().cloned().collect();
        if declared != actual {
            return Err(Violation::FreeVarsMismatch {
                func: def.name.clone(),
                declared: def.free_vars.clone(),
                actual: actual.into_iter().collect(),
            });
        }
    }
    Ok(())
}

fn run(prog: &Program) -> Check<BTreeMap<String, (Shape, DType)>> {
    let mut names = BTreeSet::new();
    for p in &prog.params {
        if !names.insert(p.name.clone()) {
            return Err(Violation::DuplicateParam(p.name.clone()));
        }
    }
    if prog.returns.is_empty() {
        return Err(Violation::EmptyReturns);
    }
    check_funcs(prog)?;
    let mut locals = body_binds(&prog.body);
    locals.extend(names);
    let mut c = Checker { frames: vec![Frame { vars: BTreeMap::new(), locals, parent: None }], active: vec![], types: BTreeMap::new() };
    for p in &prog.params {
        c.bind(&p.name, Kind::Tensor(p.shape.clone(), p.dtype))?;
    }
    c.body(&prog.body, false)?;
    for r in &prog.returns {
        c.tensor(r)?;
    }
    Ok(c.types)
}

/// Well-formedness violations of `prog`; empty iff the program is valid.
/// Checking stops at the first violation, so the list has at most one entry.
pub fn validate(prog: &Program) -> Vec<Violation> {
    run(prog).err().into_iter().collect()
}

/// Signature of every tensor name bound anywhere in a valid program.
pub fn infer_types(prog: &Program) -> Result<BTreeMap<String, (Shape, DType)>, Violation> {
    run(prog)
}
