//! Seed generation: random computational graphs built forward one node at a
//! time, concrete inputs found by rejection sampling, and lowering to SSA.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ir::{names, Param, Program, Stmt};
use crate::opset::{cast_allowed, eval_op, infer, Attrs, OpKind, MIN_DIVISOR};
use crate::tensor::{DType, Scalar, Shape, TensorValue, MAX_RANK};

/// Attempts per node before generation gives up.
pub const NODE_RETRY_BUDGET: usize = 200;
/// Whole-input-set resamples before a graph is discarded.
pub const INPUT_ATTEMPTS: usize = 50;
/// Inclusive range for sampled integer inputs.
pub const INT_RANGE: (i64, i64) = (-8, 8);

/// Probability of a fresh placeholder when a compatible value exists.
const P_FRESH: f64 = 0.15;
/// Probability of restricting operand choice to values nobody consumes yet.
const P_PREFER_UNUSED: f64 = 0.75;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSpec {
    pub rng_seed: u64,
    pub num_ops: usize,
    pub max_rank: usize,
    pub max_extent: usize,
    /// Relative weights in `DType::ALL` order (f32, f64, i64, bool).
    pub dtype_weights: [f64; 4],
    pub input_value_range: (f64, f64),
    /// Operators the generator may use; empty means all.
    #[serde(default)]
    pub ops: Vec<OpKind>,
}

impl Default for SeedSpec {
    fn default() -> Self {
        SeedSpec {
            rng_seed: 0,
            num_ops: 20,
            max_rank: MAX_RANK,
            max_extent: 8,
            dtype_weights: [0.5, 0.2, 0.2, 0.1],
            input_value_range: (-2.0, 2.0),
            ops: Vec::new(),
        }
    }
}

impl SeedSpec {
    pub fn with_seed(rng_seed: u64) -> Self {
        SeedSpec { rng_seed, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), GenError> {
        let bad = |m: &str| Err(GenError::InvalidSpec(m.to_string()));
        if self.num_ops == 0 {
            return bad("num_ops must be at least 1");
        }
        if self.max_rank == 0 || self.max_rank > MAX_RANK {
            return bad("max_rank must be in 1..=4");
        }
        if self.max_extent == 0 {
            return bad("max_extent must be positive");
        }
        if self.dtype_weights.iter().any(|w| !w.is_finite() || *w < 0.0) || self.dtype_weights.iter().sum::<f64>() <= 0.0 {
            return bad("dtype weights must be non-negative with a positive sum");
        }
        let (lo, hi) = self.input_value_range;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return bad("input_value_range must be a finite, non-empty interval");
        }
        Ok(())
    }

    fn enabled_ops(&self) -> Vec<OpKind> {
        if self.ops.is_empty() {
            crate::opset::registry().iter().map(|s| s.kind).collect()
        } else {
            self.ops.clone()
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenError {
    #[error("invalid seed spec: {0}")]
    InvalidSpec(String),
    #[error("GenerationBudgetExhausted: no valid operator for node {node} after {attempts} attempts")]
    GenerationBudgetExhausted { node: usize, attempts: usize },
    #[error("InputSearchFailed: no valid input set after {0} attempts")]
    InputSearchFailed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueRef {
    Placeholder(usize),
    Node(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placeholder {
    pub id: usize,
    pub shape: Shape,
    pub dtype: DType,
    /// Sampled away from zero (divisor operands).
    pub nonzero: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: usize,
    pub op: OpKind,
    pub attrs: Attrs,
    pub inputs: Vec<ValueRef>,
    pub out_shape: Shape,
    pub out_dtype: DType,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Graph {
    pub placeholders: Vec<Placeholder>,
    pub nodes: Vec<GraphNode>,
}

impl Graph {
    pub fn sig(&self, v: ValueRef) -> (&Shape, DType) {
        match v {
            ValueRef::Placeholder(i) => (&self.placeholders[i].shape, self.placeholders[i].dtype),
            ValueRef::Node(i) => (&self.nodes[i].out_shape, self.nodes[i].out_dtype),
        }
    }

    pub fn name(v: ValueRef) -> String {
        match v {
            ValueRef::Placeholder(i) => format!("{}{i}", names::PARAM),
            ValueRef::Node(i) => format!("{}{i}", names::VALUE),
        }
    }

    /// Nodes whose output nobody consumes.
    pub fn sinks(&self) -> Vec<usize> {
        let mut used = vec![false; self.nodes.len()];
        for n in &self.nodes {
            for i in &n.inputs {
                if let ValueRef::Node(k) = i {
                    used[*k] = true;
                }
            }
        }
        (0..self.nodes.len()).filter(|&k| !used[k]).collect()
    }
}

/// Operand requirement used while building a node.
#[derive(Clone)]
struct Want {
    dtypes: Vec<DType>,
    min_rank: usize,
    max_rank: usize,
    shape: Option<Shape>,
}

enum Operand {
    Existing(ValueRef),
    Fresh(Shape, DType, bool),
}

struct Builder<'s> {
    spec: &'s SeedSpec,
    rng: ChaCha8Rng,
    graph: Graph,
    uses: BTreeMap<(bool, usize), usize>,
}

const FLOATS: [DType; 2] = [DType::F32, DType::F64];
const NUMERIC: [DType; 3] = [DType::F32, DType::F64, DType::I64];

impl Builder<'_> {
    fn sig_of(&self, op: &Operand) -> (Shape, DType) {
        match op {
            Operand::Existing(v) => {
                let (s, d) = self.graph.sig(*v);
                (s.clone(), d)
            }
            Operand::Fresh(s, d, _) => (s.clone(), *d),
        }
    }

    fn pick_dtype(&mut self, allowed: &[DType]) -> Option<DType> {
        let weights: Vec<(DType, f64)> = DType::ALL
            .iter()
            .zip(self.spec.dtype_weights)
            .filter(|(d, w)| allowed.contains(d) && *w > 0.0)
            .map(|(d, w)| (*d, w))
            .collect();
        weights.choose_weighted(&mut self.rng, |x| x.1).ok().map(|x| x.0)
    }

    fn random_shape(&mut self, min_rank: usize, max_rank: usize) -> Option<Shape> {
        let hi = max_rank.min(self.spec.max_rank);
        if min_rank > hi {
            return None;
        }
        let rank = self.rng.gen_range(min_rank..=hi);
        let dims = (0..rank).map(|_| self.rng.gen_range(1..=self.spec.max_extent)).collect();
        Shape::new(dims).ok()
    }

    fn candidates(&self, want: &Want, extra: &dyn Fn(&Shape, DType) -> bool) -> Vec<ValueRef> {
        let all = (0..self.graph.placeholders.len())
            .map(ValueRef::Placeholder)
            .chain((0..self.graph.nodes.len()).map(ValueRef::Node));
        all.filter(|v| {
            let (s, d) = self.graph.sig(*v);
            want.dtypes.contains(&d)
                && (want.min_rank..=want.max_rank).contains(&s.rank())
                && want.shape.as_ref().is_none_or(|w| w == s)
                && extra(s, d)
        })
        .collect()
    }

    fn use_count(&self, v: ValueRef) -> usize {
        let key = match v {
            ValueRef::Placeholder(i) => (false, i),
            ValueRef::Node(i) => (true, i),
        };
        self.uses.get(&key).copied().unwrap_or(0)
    }

    /// An existing compatible value, or a fresh placeholder.
    fn choose(&mut self, want: &Want, extra: &dyn Fn(&Shape, DType) -> bool, fresh_shape: Option<Shape>) -> Option<Operand> {
        let cands = self.candidates(want, extra);
        if !cands.is_empty() && !self.rng.gen_bool(P_FRESH) {
            let unused: Vec<ValueRef> = cands.iter().copied().filter(|v| self.use_count(*v) == 0).collect();
            let pool = if !unused.is_empty() && self.rng.gen_bool(P_PREFER_UNUSED) { unused } else { cands };
            return pool.choose(&mut self.rng).copied().map(Operand::Existing);
        }
        let dtype = self.pick_dtype(&want.dtypes)?;
        let shape = match (fresh_shape, &want.shape) {
            (Some(s), _) => s,
            (None, Some(s)) => s.clone(),
            (None, None) => self.random_shape(want.min_rank, want.max_rank)?,
        };
        Some(Operand::Fresh(shape, dtype, false))
    }

    fn any(dtypes: &[DType]) -> Want {
        Want { dtypes: dtypes.to_vec(), min_rank: 0, max_rank: MAX_RANK, shape: None }
    }

    fn same(sig: &(Shape, DType)) -> Want {
        Want { dtypes: vec![sig.1], min_rank: 0, max_rank: MAX_RANK, shape: Some(sig.0.clone()) }
    }

    fn scalar_literal(&mut self, dtype: DType) -> Scalar {
        match dtype {
            DType::F32 | DType::F64 => Scalar::Float(self.rng.gen_range(-8i32..=8) as f64 / 4.0),
            DType::I64 => Scalar::Int(self.rng.gen_range(INT_RANGE.0..=INT_RANGE.1)),
            DType::Bool => Scalar::Bool(self.rng.gen_bool(0.5)),
        }
    }

    fn no_extra(_: &Shape, _: DType) -> bool {
        true
    }

    /// Operands and attributes for one instance of `op`, if satisfiable.
    fn build(&mut self, op: OpKind) -> Option<(Vec<Operand>, Attrs)> {
        let none = &Self::no_extra;
        match op {
            OpKind::Add | OpKind::Sub | OpKind::Mul | OpKind::Maximum | OpKind::Minimum | OpKind::Greater | OpKind::Less => {
                let a = self.choose(&Self::any(&NUMERIC), none, None)?;
                let b = self.choose(&Self::same(&self.sig_of(&a)), none, None)?;
                Some((vec![a, b], Attrs::default()))
            }
            OpKind::SafeDiv => {
                let a = self.choose(&Self::any(&FLOATS), none, None)?;
                let (s, d) = self.sig_of(&a);
                Some((vec![a, Operand::Fresh(s, d, true)], Attrs::default()))
            }
            OpKind::Neg | OpKind::Relu | OpKind::Abs => Some((vec![self.choose(&Self::any(&NUMERIC), none, None)?], Attrs::default())),
            OpKind::Sigmoid | OpKind::Tanh | OpKind::ExpClamped => {
                Some((vec![self.choose(&Self::any(&FLOATS), none, None)?], Attrs::default()))
            }
            OpKind::Where => {
                let c = self.choose(&Self::any(&[DType::Bool]), none, None)?;
                let cs = self.sig_of(&c).0;
                let want = Want { shape: Some(cs), ..Self::any(&NUMERIC) };
                let a = self.choose(&want, none, None)?;
                let b = self.choose(&Self::same(&self.sig_of(&a)), none, None)?;
                Some((vec![c, a, b], Attrs::default()))
            }
            OpKind::Cast => {
                let a = self.choose(&Self::any(&DType::ALL), none, None)?;
                let from = self.sig_of(&a).1;
                let targets: Vec<DType> = DType::ALL.into_iter().filter(|t| cast_allowed(from, *t)).collect();
                let to = *targets.choose(&mut self.rng)?;
                Some((vec![a], Attrs { dtype: Some(to), ..Default::default() }))
            }
            OpKind::Matmul => {
                let want = Want { min_rank: 2, max_rank: 2, ..Self::any(&NUMERIC) };
                let a = self.choose(&want, none, None)?;
                let (sa, d) = self.sig_of(&a);
                let k = sa.dims()[1];
                let n = self.rng.gen_range(1..=self.spec.max_extent);
                let want_b = Want { dtypes: vec![d], ..want };
                let b = self.choose(&want_b, &|s: &Shape, _| s.dims()[0] == k, Shape::new(vec![k, n]).ok())?;
                Some((vec![a, b], Attrs::default()))
            }
            OpKind::MaxReduce | OpKind::MinReduce | OpKind::SumReduce => {
                let want = Want { min_rank: 1, ..Self::any(&NUMERIC) };
                let a = self.choose(&want, none, None)?;
                let axis = self.rng.gen_range(0..self.sig_of(&a).0.rank());
                Some((vec![a], Attrs::axis(axis)))
            }
            OpKind::Reshape => {
                let a = self.choose(&Self::any(&DType::ALL), none, None)?;
                let n = self.sig_of(&a).0.numel();
                let rank = self.rng.gen_range(1..=self.spec.max_rank);
                let shape = self.factorize(n, rank);
                Some((vec![a], Attrs { shape: Some(shape), ..Default::default() }))
            }
            OpKind::Transpose => {
                let want = Want { min_rank: 2, ..Self::any(&DType::ALL) };
                let a = self.choose(&want, none, None)?;
                let rank = self.sig_of(&a).0.rank();
                let d0 = self.rng.gen_range(0..rank);
                let d1 = (d0 + self.rng.gen_range(1..rank)) % rank;
                Some((vec![a], Attrs { axis: Some(d0.min(d1)), axis2: Some(d0.max(d1)), ..Default::default() }))
            }
            OpKind::Concat => {
                let want = Want { min_rank: 1, ..Self::any(&DType::ALL) };
                let a = self.choose(&want, none, None)?;
                let (sa, d) = self.sig_of(&a);
                let axis = self.rng.gen_range(0..sa.rank());
                let mut dims = sa.dims().to_vec();
                dims[axis] = self.rng.gen_range(1..=self.spec.max_extent);
                let fresh = Shape::new(dims).ok();
                let sa2 = sa.clone();
                let fits = move |s: &Shape, _: DType| {
                    s.rank() == sa2.rank() && s.dims().iter().zip(sa2.dims()).enumerate().all(|(k, (x, y))| k == axis || x == y)
                };
                let want_b = Want { dtypes: vec![d], min_rank: sa.rank(), max_rank: sa.rank(), shape: None };
                let b = self.choose(&want_b, &fits, fresh)?;
                Some((vec![a, b], Attrs::axis(axis)))
            }
            OpKind::Fill => {
                let shape = self.random_shape(0, self.spec.max_rank)?;
                let dtype = self.pick_dtype(&DType::ALL)?;
                let value = self.scalar_literal(dtype);
                Some((vec![], Attrs::fill(shape, dtype, value)))
            }
        }
    }

    /// A random shape of `rank` dims (at most) whose extents multiply to `n`.
    fn factorize(&mut self, mut n: usize, rank: usize) -> Shape {
        let mut dims = vec![1usize; rank];
        let mut f = 2;
        while n > 1 {
            while !n.is_multiple_of(f) {
                f += 1;
            }
            n /= f;
            let slot = self.rng.gen_range(0..rank);
            dims[slot] *= f;
        }
        Shape::new(dims).expect("rank within cap, extents positive")
    }

    fn commit(&mut self, op: OpKind, operands: Vec<Operand>, attrs: Attrs) -> bool {
        let sigs: Vec<(Shape, DType)> = operands.iter().map(|o| self.sig_of(o)).collect();
        let shapes: Vec<&Shape> = sigs.iter().map(|s| &s.0).collect();
        let dtypes: Vec<DType> = sigs.iter().map(|s| s.1).collect();
        let Ok((out_shape, out_dtype)) = infer(op, &shapes, &dtypes, &attrs) else {
            return false;
        };
        let inputs = operands
            .into_iter()
            .map(|o| match o {
                Operand::Existing(v) => v,
                Operand::Fresh(shape, dtype, nonzero) => {
                    let id = self.graph.placeholders.len();
                    self.graph.placeholders.push(Placeholder { id, shape, dtype, nonzero });
                    ValueRef::Placeholder(id)
                }
            })
            .collect::<Vec<_>>();
        for v in &inputs {
            let key = match v {
                ValueRef::Placeholder(i) => (false, *i),
                ValueRef::Node(i) => (true, *i),
            };
            *self.uses.entry(key).or_default() += 1;
        }
        let id = self.graph.nodes.len();
        self.graph.nodes.push(GraphNode { id, op, attrs, inputs, out_shape, out_dtype });
        true
    }
}

/// Build a random DAG of exactly `spec.num_ops` nodes.
pub fn generate_graph(spec: &SeedSpec) -> Result<Graph, GenError> {
    spec.validate()?;
    let ops = spec.enabled_ops();
    let mut b = Builder {
        spec,
        rng: ChaCha8Rng::seed_from_u64(spec.rng_seed),
        graph: Graph { placeholders: vec![], nodes: vec![] },
        uses: BTreeMap::new(),
    };
    for node in 0..spec.num_ops {
        let mut placed = false;
        for _ in 0..NODE_RETRY_BUDGET {
            let op = *ops.choose(&mut b.rng).expect("at least one op enabled");
            if let Some((operands, attrs)) = b.build(op) {
                if b.commit(op, operands, attrs) {
                    placed = true;
                    break;
                }
            }
        }
        if !placed {
            return Err(GenError::GenerationBudgetExhausted { node, attempts: NODE_RETRY_BUDGET });
        }
    }
    Ok(b.graph)
}

fn sample_tensor(p: &Placeholder, range: (f64, f64), rng: &mut impl Rng) -> TensorValue {
    let n = p.shape.numel();
    let dims = p.shape.dims();
    let float = |rng: &mut dyn rand::RngCore| loop {
        let v = rng.gen_range(range.0..=range.1);
        if !p.nonzero || v.abs() >= MIN_DIVISOR {
            return v;
        }
    };
    match p.dtype {
        DType::F32 => TensorValue::f32(
            dims,
            (0..n)
                .map(|_| loop {
                    let v = float(rng) as f32;
                    if !p.nonzero || (v as f64).abs() >= MIN_DIVISOR {
                        break v;
                    }
                })
                .collect(),
        ),
        DType::F64 => TensorValue::f64(dims, (0..n).map(|_| float(rng)).collect()),
        DType::I64 => TensorValue::i64(
            dims,
            (0..n)
                .map(|_| loop {
                    let v = rng.gen_range(INT_RANGE.0..=INT_RANGE.1);
                    if !p.nonzero || v != 0 {
                        break v;
                    }
                })
                .collect(),
        ),
        DType::Bool => TensorValue::bool(dims, (0..n).map(|_| rng.gen_bool(0.5)).collect()),
    }
    .expect("sampled data matches placeholder shape")
}

/// Evaluate every node in order; fails on kernel errors or non-finite values.
pub fn eval_graph(graph: &Graph, inputs: &BTreeMap<String, TensorValue>) -> Result<Vec<TensorValue>, String> {
    let mut outs: Vec<TensorValue> = Vec::with_capacity(graph.nodes.len());
    for p in &graph.placeholders {
        let name = Graph::name(ValueRef::Placeholder(p.id));
        match inputs.get(&name) {
            Some(t) if t.check_valid() => {}
            _ => return Err(format!("input {name} missing or non-finite")),
        }
    }
    for n in &graph.nodes {
        let args: Vec<&TensorValue> = n
            .inputs
            .iter()
            .map(|v| match v {
                ValueRef::Placeholder(i) => &inputs[&Graph::name(ValueRef::Placeholder(*i))],
                ValueRef::Node(i) => &outs[*i],
            })
            .collect();
        let out = eval_op(n.op, &args, &n.attrs).map_err(|e| format!("node {}: {e}", n.id))?;
        if !out.check_valid() {
            return Err(format!("node {} produced a non-finite value", n.id));
        }
        outs.push(out);
    }
    Ok(outs)
}

/// Sample one valid input set with a caller-supplied generator.
pub fn generate_inputs_with(graph: &Graph, spec: &SeedSpec, rng: &mut impl Rng) -> Result<BTreeMap<String, TensorValue>, GenError> {
    for _ in 0..INPUT_ATTEMPTS {
        let inputs: BTreeMap<String, TensorValue> = graph
            .placeholders
            .iter()
            .map(|p| (Graph::name(ValueRef::Placeholder(p.id)), sample_tensor(p, spec.input_value_range, rng)))
            .collect();
        if eval_graph(graph, &inputs).is_ok() {
            return Ok(inputs);
        }
    }
    Err(GenError::InputSearchFailed(INPUT_ATTEMPTS))
}

/// The seed's canonical input set `x0`, determined by `spec.rng_seed`.
pub fn generate_inputs(graph: &Graph, spec: &SeedSpec) -> Result<BTreeMap<String, TensorValue>, GenError> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    rng.set_stream(1);
    generate_inputs_with(graph, spec, &mut rng)
}

/// Straight-line program: one `v<k> = op(...)` per node, placeholders as
/// parameters, sink nodes returned.
pub fn lower_to_ssa(graph: &Graph) -> Program {
    let params = graph
        .placeholders
        .iter()
        .map(|p| Param { name: Graph::name(ValueRef::Placeholder(p.id)), shape: p.shape.clone(), dtype: p.dtype })
        .collect();
    let body = graph
        .nodes
        .iter()
        .map(|n| Stmt::Assign {
            target: Graph::name(ValueRef::Node(n.id)),
            op: n.op,
            args: n.inputs.iter().map(|v| Graph::name(*v)).collect(),
            attrs: n.attrs.clone(),
        })
        .collect();
    let returns = graph.sinks().into_iter().map(|k| Graph::name(ValueRef::Node(k))).collect();
    Program { params, body, returns }
}

/// Everything needed to start mutating: the graph, its program and `x0`.
#[derive(Debug, Clone)]
pub struct Seed {
    pub spec: SeedSpec,
    pub graph: Graph,
    pub program: Program,
    pub inputs: BTreeMap<String, TensorValue>,
}

pub fn generate_seed(spec: &SeedSpec) -> Result<Seed, GenError> {
    let graph = generate_graph(spec)?;
    let inputs = generate_inputs(&graph, spec)?;
    let program = lower_to_ssa(&graph);
    Ok(Seed { spec: spec.clone(), graph, program, inputs })
}
