//! Failure reduction: ddmin over top-level statements, plus unwrapping of
//! `if` blocks and single-use function calls, iterated to a fixpoint.
//!
//! Dropping a statement that binds a name later statements read turns that
//! name into a program parameter holding the value it had in the original run.

use std::collections::{BTreeMap, BTreeSet};

use super::{run_case, BackendConfig, HarnessError, TestCase};
use crate::ir::analysis::{free_loads, func_table, returned_names, stmt_binds};
use crate::ir::{validate, Param, Program, Stmt};
use crate::profiler::{evaluate_checked, trace};
use crate::tensor::TensorValue;

/// Runs a candidate must reproduce in a row to be kept.
pub const CANDIDATE_RUNS: usize = 3;

#[derive(Debug, Clone)]
pub struct Reduction {
    pub case: TestCase,
    /// Backend executions spent.
    pub runs: usize,
}

struct Reducer<'a> {
    backend: &'a BackendConfig,
    target: &'a str,
    runs: usize,
}

impl Reducer<'_> {
    fn hits(&mut self, case: &TestCase) -> Result<bool, HarnessError> {
        self.runs += 1;
        Ok(run_case(case, self.backend)?.fingerprint == self.target)
    }

    fn reproduces(&mut self, case: &TestCase) -> Result<bool, HarnessError> {
        for _ in 0..CANDIDATE_RUNS {
            if !self.hits(case)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    fn accept(&mut self, base: &TestCase, program: Program, inputs: BTreeMap<String, TensorValue>) -> Result<Option<TestCase>, HarnessError> {
        if !validate(&program).is_empty() || evaluate_checked(&program, &inputs).is_err() {
            return Ok(None);
        }
        let mut provenance = base.provenance.clone();
        provenance.reduced = true;
        let cand = TestCase::new(program, inputs, provenance)?;
        Ok(if self.reproduces(&cand)? { Some(cand) } else { None })
    }

    fn ddmin(&mut self, cur: TestCase) -> Result<TestCase, HarnessError> {
        let Ok(envs) = trace(&cur.program, &cur.inputs) else { return Ok(cur) };
        let mut best = cur.clone();
        let mut units: Vec<usize> = (0..cur.program.body.len()).collect();
        let mut n = 2usize;
        while units.len() >= 2 {
            let chunks: Vec<Vec<usize>> = split(&units, n);
            let mut progressed = false;
            let mut tries: Vec<(Vec<usize>, usize)> = chunks.iter().map(|c| (c.clone(), 2)).collect();
            if n > 2 {
                for c in &chunks {
                    let comp: Vec<usize> = units.iter().copied().filter(|u| !c.contains(u)).collect();
                    tries.push((comp, n - 1));
                }
            }
            for (keep, next_n) in tries {
                let Some((prog, inputs)) = repair(&cur, &envs, &keep) else { continue };
                if let Some(c) = self.accept(&cur, prog, inputs)? {
                    best = c;
                    units = keep;
                    n = next_n.max(2);
                    progressed = true;
                    break;
                }
            }
            if !progressed {
                if n >= units.len() {
                    break;
                }
                n = (2 * n).min(units.len());
            }
        }
        Ok(best)
    }

    /// Try to inline one `if` body or function call; returns the first
    /// reproducing result.
    fn unwrap_once(&mut self, cur: &TestCase) -> Result<Option<TestCase>, HarnessError> {
        for prog in unwrap_candidates(&cur.program) {
            if let Some(c) = self.accept(cur, prog, cur.inputs.clone())? {
                return Ok(Some(c));
            }
        }
        Ok(None)
    }
}

/// Split into `n` contiguous chunks of near-equal size.
fn split(units: &[usize], n: usize) -> Vec<Vec<usize>> {
    let n = n.min(units.len());
    let mut out = Vec::with_capacity(n);
    let mut start = 0;
    for i in 0..n {
        let end = start + (units.len() - start) / (n - i);
        out.push(units[start..end].to_vec());
        start = end;
    }
    out
}

/// The program keeping only top-level statements `keep` (indices into
/// `base`), with dangling reads turned into parameters seeded from `envs`
/// and returns restricted to names still bound.
fn repair(base: &TestCase, envs: &[BTreeMap<String, TensorValue>], keep: &[usize]) -> Option<(Program, BTreeMap<String, TensorValue>)> {
    let body: Vec<Stmt> = keep.iter().map(|&i| base.program.body[i].clone()).collect();
    let shell = Program { params: vec![], body, returns: vec![] };
    let funcs = func_table(&shell);
    let none = BTreeSet::new();
    let free = free_loads(&shell.body, &funcs, &none);

    let mut params: Vec<Param> = Vec::new();
    let mut inputs = BTreeMap::new();
    for p in &base.program.params {
        if free.contains(&p.name) {
            params.push(p.clone());
            inputs.insert(p.name.clone(), base.inputs[&p.name].clone());
        }
    }
    // Remaining free names were bound by dropped statements.
    for (j, &orig) in keep.iter().enumerate() {
        let reads = free_loads(std::slice::from_ref(&shell.body[j]), &funcs, &none);
        for name in reads {
            if !free.contains(&name) || inputs.contains_key(&name) {
                continue;
            }
            let value = envs[orig].get(&name)?.clone();
            params.push(Param { name: name.clone(), shape: value.shape().clone(), dtype: value.dtype() });
            inputs.insert(name, value);
        }
    }
    if free.iter().any(|n| !inputs.contains_key(n)) {
        return None;
    }

    let bound: BTreeSet<String> = shell.body.iter().flat_map(stmt_binds).chain(inputs.keys().cloned()).collect();
    let mut returns: Vec<String> = base.program.returns.iter().filter(|r| bound.contains(*r)).cloned().collect();
    if returns.is_empty() {
        returns.push(returned_names(&shell.body).pop()?);
    }
    Some((Program { params, body: shell.body, returns }, inputs))
}

/// Programs with one top-level `if` flattened or one top-level call inlined.
fn unwrap_candidates(prog: &Program) -> Vec<Program> {
    let mut out = Vec::new();
    let with = |i: usize, repl: Vec<Stmt>| {
        let mut body = prog.body[..i].to_vec();
        body.extend(repl);
        body.extend_from_slice(&prog.body[i + 1..]);
        Program { body, ..prog.clone() }
    };
    let funcs = func_table(prog);
    for (i, s) in prog.body.iter().enumerate() {
        match s {
            Stmt::IfBlock { body, .. } => out.push(with(i, body.clone())),
            Stmt::Call { func, args, results } => {
                let Some(def) = funcs.get(func.as_str()) else { continue };
                if def.params != *args || def.returns != *results {
                    continue;
                }
                let mut p = with(i, def.body.clone());
                // Drop the definition once nothing else calls it.
                let mut calls = 0;
                p.walk(|s| calls += matches!(s, Stmt::Call { func: f, .. } if f == func) as usize);
                if calls == 0 {
                    p.body.retain(|s| !matches!(s, Stmt::FuncDef(d) if d.name == *func));
                }
                out.push(p);
            }
            _ => {}
        }
    }
    out
}

/// Shrink `case` while its verdict keeps fingerprint `target`.
///
/// The original must reproduce at least once in [`CANDIDATE_RUNS`] tries;
/// each candidate must reproduce every time.
pub fn reduce(case: &TestCase, backend: &BackendConfig, target: &str) -> Result<Reduction, HarnessError> {
    let mut r = Reducer { backend, target, runs: 0 };
    let mut seen = false;
    for _ in 0..CANDIDATE_RUNS {
        if r.hits(case)? {
            seen = true;
            break;
        }
    }
    if !seen {
        return Err(HarnessError::NotReproducible(format!("case {} does not yield `{target}`", case.id)));
    }
    let mut cur = case.clone();
    loop {
        let before = cur.id.clone();
        cur = r.ddmin(cur)?;
        while let Some(next) = r.unwrap_once(&cur)? {
            cur = next;
        }
        if cur.id == before {
            break;
        }
    }
    Ok(Reduction { case: cur, runs: r.runs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{CmpOp, ConditionExpr, ScalarExpr};
    use crate::opset::{Attrs, OpKind};
    use crate::tensor::{DType, Shape};

    fn relu(t: &str, a: &str) -> Stmt {
        Stmt::Assign { target: t.into(), op: OpKind::Relu, args: vec![a.into()], attrs: Attrs::default() }
    }

    fn chain_case() -> TestCase {
        let prog = Program {
            params: vec![Param { name: "x0".into(), shape: Shape::new(vec![3]).unwrap(), dtype: DType::F32 }],
            body: vec![relu("v0", "x0"), relu("v1", "v0"), relu("v2", "v1"), relu("v3", "x0")],
            returns: vec!["v2".into(), "v3".into()],
        };
        let inputs = [("x0".to_string(), TensorValue::f32(&[3], vec![-1.0, 0.5, 2.0]).unwrap())].into();
        let prov = super::super::Provenance { seed_spec: Default::default(), mutations: vec![], reduced: false };
        TestCase::new(prog, inputs, prov).unwrap()
    }

    #[test]
    fn split_covers_units() {
        let u: Vec<usize> = (0..7).collect();
        for n in 1..=7 {
            let parts = split(&u, n);
            assert_eq!(parts.len(), n);
            assert_eq!(parts.concat(), u);
        }
    }

    #[test]
    fn dropped_binding_becomes_seeded_param() {
        let c = chain_case();
        let envs = trace(&c.program, &c.inputs).unwrap();
        // Keep only `v2 = relu(v1)`.
        let (p, x) = repair(&c, &envs, &[2]).unwrap();
        assert_eq!(p.params.len(), 1);
        assert_eq!(p.params[0].name, "v1");
        assert!(x["v1"].bit_eq(&envs[2]["v1"]));
        assert_eq!(p.returns, vec!["v2".to_string()]);
        assert!(validate(&p).is_empty());
        // Unused original params are dropped.
        assert!(!x.contains_key("x0"));
    }

    #[test]
    fn returns_fall_back_to_last_binding() {
        let c = chain_case();
        let envs = trace(&c.program, &c.inputs).unwrap();
        let (p, _) = repair(&c, &envs, &[0, 1]).unwrap();
        assert_eq!(p.returns, vec!["v1".to_string()]);
    }

    #[test]
    fn unwrap_flattens_if_and_inlines_call() {
        let cond = ConditionExpr { lhs: ScalarExpr::IntConst { value: 1 }, op: CmpOp::Ge, rhs: ScalarExpr::IntConst { value: 0 } };
        let def = crate::ir::FuncDef { name: "subfunc0".into(), params: vec![], free_vars: vec!["x0".into()], body: vec![relu("v0", "x0")], returns: vec!["v0".into()] };
        let prog = Program {
            params: vec![Param { name: "x0".into(), shape: Shape::new(vec![3]).unwrap(), dtype: DType::F32 }],
            body: vec![
                Stmt::FuncDef(def),
                Stmt::Call { results: vec!["v0".into()], func: "subfunc0".into(), args: vec![] },
                Stmt::IfBlock { cond, body: vec![relu("v1", "v0")] },
            ],
            returns: vec!["v1".into()],
        };
        assert!(validate(&prog).is_empty(), "{:?}", validate(&prog));
        let cands = unwrap_candidates(&prog);
        assert_eq!(cands.len(), 2);
        // Inlined call, definition gone.
        assert_eq!(cands[0].body[0], relu("v0", "x0"));
        assert!(matches!(&cands[0].body[1], Stmt::IfBlock { .. }));
        assert_eq!(cands[0].body.len(), 2);
        // Flattened `if`.
        assert_eq!(cands[1].body.len(), 3);
        assert_eq!(cands[1].body[2], relu("v1", "v0"));
        for c in &cands {
            assert!(validate(c).is_empty());
        }
    }
}
