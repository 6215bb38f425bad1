//! Name-binding analysis with Python scoping rules: which names a statement
//! binds, loads, or mutates in place, and which names a statement sequence
//! reads before binding them.

use std::collections::{BTreeMap, BTreeSet};

use super::{ConditionExpr, FuncDef, IndexExpr, Program, Stmt};

/// Every `FuncDef` in a program, by name.
pub type FuncTable<'p> = BTreeMap<&'p str, &'p FuncDef>;

pub fn func_table(prog: &Program) -> FuncTable<'_> {
    fn go<'p>(body: &'p [Stmt], out: &mut FuncTable<'p>) {
        for s in body {
            match s {
                Stmt::FuncDef(d) => {
                    out.insert(d.name.as_str(), d);
                    go(&d.body, out);
                }
                Stmt::ForLoop { body, .. } | Stmt::IfBlock { body, .. } => go(body, out),
                _ => {}
            }
        }
    }
    let mut out = BTreeMap::new();
    go(&prog.body, &mut out);
    out
}

/// Names bound in the enclosing scope when `stmt` executes.
pub fn stmt_binds(stmt: &Stmt) -> Vec<String> {
    match stmt {
        Stmt::Assign { target, .. } | Stmt::ComprehensionAssign { target, .. } => vec![target.clone()],
        Stmt::BackupStore { tmp, .. } => vec![tmp.clone()],
        Stmt::Call { results, .. } => results.clone(),
        Stmt::FuncDef(d) => vec![d.name.clone()],
        Stmt::ForLoop { var, body, .. } => {
            let mut out = vec![var.clone()];
            out.extend(body.iter().flat_map(stmt_binds));
            out
        }
        Stmt::IfBlock { body, .. } => body.iter().flat_map(stmt_binds).collect(),
        Stmt::SliceAssign { .. } | Stmt::PointStore { .. } | Stmt::RestoreStore { .. } => Vec::new(),
    }
}

/// Names bound anywhere in a body (Python's local-variable set).
pub fn body_binds(body: &[Stmt]) -> BTreeSet<String> {
    body.iter().flat_map(stmt_binds).collect()
}

/// Tensors written in place (element or slice stores), not rebound.
pub fn stmt_mutates(stmt: &Stmt) -> Vec<String> {
    match stmt {
        Stmt::SliceAssign { target, .. } | Stmt::PointStore { target, .. } | Stmt::RestoreStore { target, .. } => {
            vec![target.clone()]
        }
        Stmt::ForLoop { body, .. } | Stmt::IfBlock { body, .. } => body.iter().flat_map(stmt_mutates).collect(),
        _ => Vec::new(),
    }
}

pub fn condition_vars(cond: &ConditionExpr) -> Vec<String> {
    [&cond.lhs, &cond.rhs].iter().filter_map(|e| e.var()).map(str::to_string).collect()
}

/// Value names a functionalized span must hand back to its caller: every
/// name it binds or mutates in place, in first-appearance order, excluding
/// loop indices and function names.
pub fn returned_names(body: &[Stmt]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let mut skip: BTreeSet<String> = BTreeSet::new();
    fn go(body: &[Stmt], out: &mut Vec<String>, skip: &mut BTreeSet<String>) {
        for s in body {
            match s {
                Stmt::ForLoop { var, body, .. } => {
                    skip.insert(var.clone());
                    go(body, out, skip);
                }
                Stmt::IfBlock { body, .. } => go(body, out, skip),
                Stmt::FuncDef(d) => {
                    skip.insert(d.name.clone());
                }
                other => {
                    for n in stmt_binds(other).into_iter().chain(stmt_mutates(other)) {
                        if !out.contains(&n) {
                            out.push(n);
                        }
                    }
                }
            }
        }
    }
    go(body, &mut out, &mut skip);
    out.retain(|n| !skip.contains(n));
    out
}

/// Sequential read-before-bind analysis.
struct FreeWalk<'a, 'p> {
    funcs: &'a FuncTable<'p>,
    bound: BTreeSet<String>,
    free: BTreeSet<String>,
    // Guards against malformed self-recursive programs.
    active: Vec<String>,
}

impl FreeWalk<'_, '_> {
    fn load(&mut self, name: &str) {
        if !self.bound.contains(name) {
            self.free.insert(name.to_string());
        }
    }

    fn bind(&mut self, name: &str) {
        self.bound.insert(name.to_string());
    }

    fn body(&mut self, body: &[Stmt]) {
        for s in body {
            self.stmt(s);
        }
    }

    fn stmt(&mut self, s: &Stmt) {
        match s {
            Stmt::Assign { target, args, .. } | Stmt::ComprehensionAssign { target, args, .. } => {
                args.iter().for_each(|a| self.load(a));
                self.bind(target);
            }
            Stmt::SliceAssign { target, index, args, .. } => {
                args.iter().for_each(|a| self.load(a));
                if let IndexExpr::Var(v) = index {
                    self.load(v);
                }
                self.load(target);
            }
            Stmt::ForLoop { var, body, .. } => {
                self.bind(var);
                self.body(body);
            }
            Stmt::BackupStore { tmp, source, .. } => {
                self.load(source);
                self.bind(tmp);
            }
            Stmt::PointStore { target, .. } => self.load(target),
            Stmt::RestoreStore { target, tmp, .. } => {
                self.load(tmp);
                self.load(target);
            }
            Stmt::IfBlock { cond, body } => {
                for v in condition_vars(cond) {
                    self.load(&v);
                }
                self.body(body);
            }
            Stmt::FuncDef(d) => self.bind(&d.name),
            Stmt::Call { results, func, args } => {
                self.load(func);
                args.iter().for_each(|a| self.load(a));
                if let Some(def) = self.funcs.get(func.as_str()) {
                    if !self.active.contains(func) {
                        self.active.push(func.clone());
                        for n in callee_free(def, self.funcs, &self.active) {
                            self.load(&n);
                        }
                        self.active.pop();
                    }
                }
                results.iter().for_each(|r| self.bind(r));
            }
        }
    }
}

fn callee_free(def: &FuncDef, funcs: &FuncTable<'_>, active: &[String]) -> BTreeSet<String> {
    let mut w = FreeWalk { funcs, bound: def.params.iter().cloned().collect(), free: BTreeSet::new(), active: active.to_vec() };
    w.body(&def.body);
    for r in &def.returns {
        w.load(r);
    }
    w.free
}

/// Names the statements read before (or without) binding them, given the
/// names already bound on entry. Calls contribute the callee's captured names.
pub fn free_loads(body: &[Stmt], funcs: &FuncTable<'_>, bound: &BTreeSet<String>) -> BTreeSet<String> {
    let mut w = FreeWalk { funcs, bound: bound.clone(), free: BTreeSet::new(), active: Vec::new() };
    w.body(body);
    w.free
}

/// Names a function body captures from enclosing scopes at call time.
pub fn function_free_vars(def: &FuncDef, funcs: &FuncTable<'_>) -> BTreeSet<String> {
    callee_free(def, funcs, std::slice::from_ref(&def.name))
}

/// Does executing `stmt` read, rebind, or write in place the variable `name`?
pub fn stmt_touches(stmt: &Stmt, name: &str, funcs: &FuncTable<'_>) -> bool {
    let empty = BTreeSet::new();
    let free = free_loads(std::slice::from_ref(stmt), funcs, &empty);
    let mut all_loads = free.contains(name);
    // Loads after a local rebinding inside a nested body still count.
    if !all_loads {
        let mut found = false;
        let visit = |s: &Stmt, found: &mut bool| {
            let mut w = FreeWalk { funcs, bound: BTreeSet::new(), free: BTreeSet::new(), active: Vec::new() };
            w.stmt(s);
            *found |= w.free.contains(name);
        };
        fn each(body: &[Stmt], f: &mut dyn FnMut(&Stmt)) {
            for s in body {
                f(s);
                match s {
                    Stmt::ForLoop { body, .. } | Stmt::IfBlock { body, .. } => each(body, f),
                    _ => {}
                }
            }
        }
        each(std::slice::from_ref(stmt), &mut |s| visit(s, &mut found));
        all_loads = found;
    }
    all_loads
        || stmt_binds(stmt).iter().any(|n| n == name)
        || stmt_mutates(stmt).iter().any(|n| n == name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opset::{Attrs, OpKind};
    use crate::tensor::Scalar;

    fn assign(t: &str, op: OpKind, args: &[&str]) -> Stmt {
        Stmt::Assign { target: t.into(), op, args: args.iter().map(|s| s.to_string()).collect(), attrs: Attrs::default() }
    }

    #[test]
    fn free_loads_tracks_order() {
        let body = vec![assign("v0", OpKind::Relu, &["a"]), assign("v1", OpKind::Add, &["v0", "b"])];
        let funcs = FuncTable::new();
        let free = free_loads(&body, &funcs, &BTreeSet::new());
        assert_eq!(free, ["a", "b"].iter().map(|s| s.to_string()).collect());
    }

    #[test]
    fn returned_names_include_point_mutations() {
        let body = vec![
            assign("v0", OpKind::Relu, &["a"]),
            Stmt::PointStore { target: "t".into(), pos: vec![0], value: Scalar::Float(1.0) },
            Stmt::ForLoop { var: "i0".into(), extent: 2, body: vec![] },
        ];
        assert_eq!(returned_names(&body), vec!["v0".to_string(), "t".to_string()]);
    }

    #[test]
    fn calls_load_callee_captures() {
        let def = FuncDef {
            name: "subfunc0".into(),
            params: vec![],
            free_vars: vec!["a".into()],
            body: vec![assign("v0", OpKind::Relu, &["a"])],
            returns: vec!["v0".into()],
        };
        let prog = Program {
            params: vec![],
            body: vec![Stmt::FuncDef(def), Stmt::Call { results: vec!["v0".into()], func: "subfunc0".into(), args: vec![] }],
            returns: vec!["v0".into()],
        };
        let funcs = func_table(&prog);
        assert!(stmt_touches(&prog.body[1], "a", &funcs));
        assert!(!stmt_touches(&prog.body[0], "a", &funcs));
        assert_eq!(function_free_vars(funcs["subfunc0"], &funcs), ["a".to_string()].into_iter().collect());
    }
}
