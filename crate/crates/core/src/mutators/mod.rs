//! Numerics-preserving program mutations.
//!
//! Every mutation is a pure function of the program, the fixed inputs and a
//! generator seeded from one `u64`. A [`MutationRecord`] stores that seed, so
//! replaying a record list against the seed program rebuilds the mutant.

mod compose;
mod functionalize;
mod recover;
mod resolution;
mod tcb;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ir::{ConditionExpr, Program, Stmt};
use crate::profiler::ReferenceRuntimeError;
use crate::tensor::{Scalar, TensorValue};

pub use compose::{compose, replay, ComposeOutcome, MutationWeights};
pub use functionalize::functionalize;
pub use recover::mutate_then_recover;
pub use resolution::op_resolution;
pub use tcb::{synthesize_condition, tcb_insert};

/// Longest statement span a mutation wraps.
pub const MAX_SPAN: usize = 5;
/// Random site draws before a mutation reports `NoApplicableSite`.
pub const SITE_ATTEMPTS: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutationKind {
    OperatorResolution,
    MutateThenRecover,
    Functionalize,
    Tcb,
}

impl MutationKind {
    pub const ALL: [MutationKind; 4] =
        [MutationKind::OperatorResolution, MutationKind::MutateThenRecover, MutationKind::Functionalize, MutationKind::Tcb];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnrollForm {
    Loop,
    Comprehension,
}

/// What a mutation did and where.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MutationDetail {
    OperatorResolution { path: Vec<usize>, target: String, axis: usize, form: UnrollForm },
    MutateThenRecover { tensor: String, pos: Vec<usize>, value: Scalar, backup: String, store_at: usize, restore_at: usize },
    Functionalize { start: usize, len: usize, func: String, params: Vec<String>, def_at: usize },
    Tcb { start: usize, len: usize, cond: ConditionExpr },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MutationRecord {
    pub kind: MutationKind,
    /// Seed of the generator the mutation consumed.
    pub rng_seed: u64,
    pub detail: MutationDetail,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MutationError {
    #[error("NoApplicableSite for {0:?}")]
    NoApplicableSite(MutationKind),
    #[error("SynthesisFailed: no live tensor at statement {0}")]
    SynthesisFailed(usize),
    #[error(transparent)]
    Reference(#[from] ReferenceRuntimeError),
    #[error("replay diverged at record {index}")]
    ReplayDiverged { index: usize },
    #[error("mutation produced a malformed program: {0}")]
    Malformed(String),
}

pub type Mutated = (Program, MutationRecord);

/// Run one mutation of `kind` with a generator seeded from `rng_seed`.
pub fn apply(kind: MutationKind, prog: &Program, inputs: &BTreeMap<String, TensorValue>, rng_seed: u64) -> Result<Mutated, MutationError> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let (out, detail) = match kind {
        MutationKind::OperatorResolution => op_resolution(prog, &mut rng)?,
        MutationKind::MutateThenRecover => mutate_then_recover(prog, inputs, &mut rng)?,
        MutationKind::Functionalize => functionalize(prog, &mut rng)?,
        MutationKind::Tcb => tcb_insert(prog, inputs, &mut rng)?,
    };
    if let Some(v) = crate::ir::validate(&out).into_iter().next() {
        return Err(MutationError::Malformed(v.to_string()));
    }
    Ok((out, MutationRecord { kind, rng_seed, detail }))
}

/// Span length drawn geometrically with p = 0.5, capped at [`MAX_SPAN`] and `limit`.
pub(crate) fn span_len(rng: &mut impl rand::Rng, limit: usize) -> usize {
    let mut len = 1;
    while len < MAX_SPAN.min(limit) && rng.gen_bool(0.5) {
        len += 1;
    }
    len
}

/// A random scalar literal for `dtype`: quarter steps for floats, small ints.
pub(crate) fn random_literal(rng: &mut impl rand::Rng, dtype: crate::tensor::DType) -> Scalar {
    use crate::tensor::DType;
    match dtype {
        DType::F32 | DType::F64 => Scalar::Float(rng.gen_range(-64i32..=64) as f64 / 4.0),
        DType::I64 => Scalar::Int(rng.gen_range(-16..=16)),
        DType::Bool => Scalar::Bool(rng.gen_bool(0.5)),
    }
}

/// The statement list reached by following `path` (all but the last index).
pub(crate) fn body_mut<'a>(body: &'a mut Vec<Stmt>, path: &[usize]) -> &'a mut Vec<Stmt> {
    match path.split_first() {
        None => body,
        Some((&k, rest)) => match &mut body[k] {
            Stmt::ForLoop { body, .. } | Stmt::IfBlock { body, .. } => body_mut(body, rest),
            Stmt::FuncDef(d) => body_mut(&mut d.body, rest),
            _ => panic!("path descends into a statement without a body"),
        },
    }
}

/// Visit every statement with its path.
pub(crate) fn walk_paths(body: &[Stmt], prefix: &mut Vec<usize>, f: &mut dyn FnMut(&[usize], &Stmt)) {
    for (k, s) in body.iter().enumerate() {
        prefix.push(k);
        f(prefix, s);
        match s {
            Stmt::ForLoop { body, .. } | Stmt::IfBlock { body, .. } => walk_paths(body, prefix, f),
            Stmt::FuncDef(d) => walk_paths(&d.body, prefix, f),
            _ => {}
        }
        prefix.pop();
    }
}
