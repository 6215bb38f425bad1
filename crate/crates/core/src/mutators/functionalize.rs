//! Functionalization: wrap a statement span in a nested function, call it in
//! place, and hoist the definition to any earlier top-level position.

use rand::Rng;

use super::{span_len, MutationDetail, MutationError, MutationKind, SITE_ATTEMPTS};
use crate::ir::analysis::{func_table, function_free_vars, free_loads, returned_names, stmt_mutates};
use crate::ir::{names, validate, FuncDef, Program, Stmt};

pub fn functionalize(prog: &Program, rng: &mut impl Rng) -> Result<(Program, MutationDetail), MutationError> {
    let len = prog.body.len();
    if len == 0 {
        return Err(MutationError::NoApplicableSite(MutationKind::Functionalize));
    }
    let funcs = func_table(prog);
    for _ in 0..SITE_ATTEMPTS {
        let start = rng.gen_range(0..len);
        let n = span_len(rng, len - start);
        let span = &prog.body[start..start + n];
        if span.iter().all(|s| matches!(s, Stmt::FuncDef(_))) {
            continue;
        }
        let returns = returned_names(span);
        if returns.is_empty() {
            continue;
        }
        // Tensors written in place stay captured so callee and caller never
        // hold two bindings of one object.
        let mutated: Vec<String> = span.iter().flat_map(stmt_mutates).collect();
        let free = free_loads(span, &funcs, &Default::default());
        let params: Vec<String> = free
            .into_iter()
            .filter(|n| !mutated.contains(n) && !funcs.contains_key(n.as_str()))
            .filter(|_| rng.gen_bool(0.5))
            .collect();
        let name = prog.fresh_name(names::FUNC);
        let def_at = rng.gen_range(0..=start);
        let def = FuncDef { name: name.clone(), params: params.clone(), free_vars: vec![], body: span.to_vec(), returns: returns.clone() };
        let call = Stmt::Call { results: returns, func: name.clone(), args: params.clone() };

        let mut body = Vec::with_capacity(len + 2 - n);
        body.extend_from_slice(&prog.body[..def_at]);
        body.push(Stmt::FuncDef(def));
        body.extend_from_slice(&prog.body[def_at..start]);
        body.push(call);
        body.extend_from_slice(&prog.body[start + n..]);
        let mut out = Program { params: prog.params.clone(), body, returns: prog.returns.clone() };

        let captured: Vec<String> = {
            let table = func_table(&out);
            let mut fv = function_free_vars(table[name.as_str()], &table);
            for p in &params {
                fv.remove(p);
            }
            fv.into_iter().collect()
        };
        if let Stmt::FuncDef(d) = &mut out.body[def_at] {
            d.free_vars = captured;
        }
        if validate(&out).is_empty() {
            return Ok((out, MutationDetail::Functionalize { start, len: n, func: name, params, def_at }));
        }
    }
    Err(MutationError::NoApplicableSite(MutationKind::Functionalize))
}
