//! Operator registry: signatures, shape/dtype inference, validity
//! preconditions, reference kernels and target-code emission templates.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{DType, Data, Scalar, Shape, TensorError, TensorValue, MAX_RANK};

/// Smallest divisor magnitude accepted by `safe_div`.
pub const MIN_DIVISOR: f64 = 1e-3;

/// `exp_clamped` clamps its input into `[-EXP_CLAMP, EXP_CLAMP]`.
pub const EXP_CLAMP: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    Add,
    Sub,
    Mul,
    SafeDiv,
    Neg,
    Relu,
    Sigmoid,
    Tanh,
    Abs,
    ExpClamped,
    Matmul,
    MaxReduce,
    MinReduce,
    SumReduce,
    Reshape,
    Transpose,
    Concat,
    Fill,
    Cast,
    Maximum,
    Minimum,
    Where,
    Greater,
    Less,
}

/// Operator attributes. Which fields are meaningful depends on the op.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Attrs {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis2: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<Shape>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dtype: Option<DType>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<Scalar>,
}

impl Attrs {
    pub fn axis(axis: usize) -> Self {
        Attrs { axis: Some(axis), ..Default::default() }
    }

    pub fn fill(shape: Shape, dtype: DType, value: Scalar) -> Self {
        Attrs { shape: Some(shape), dtype: Some(dtype), value: Some(value), ..Default::default() }
    }
}

/// Why an op rejected its operands.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Rejection {
    #[error("{op}: expected {expected} operands, got {got}")]
    Arity { op: OpKind, expected: usize, got: usize },
    #[error("{op}: shape rule rejected {shapes}: {why}")]
    Shape { op: OpKind, shapes: String, why: String },
    #[error("{op}: dtype rule rejected {dtypes:?}")]
    DType { op: OpKind, dtypes: Vec<DType> },
    #[error("{op}: missing or invalid attribute `{attr}`")]
    Attr { op: OpKind, attr: &'static str },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error(transparent)]
    Rejected(#[from] Rejection),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Static description of one operator.
#[derive(Debug, Clone, Copy)]
pub struct OpSpec {
    pub kind: OpKind,
    pub name: &'static str,
    pub arity: usize,
    /// Pointwise over one common shape; safe to unroll along any axis.
    pub elementwise: bool,
    /// Target-framework snippet. `{0}`..`{2}` are operands; `{axis}`,
    /// `{axis2}`, `{shape}`, `{dtype}` and `{value}` are attributes.
    pub template: &'static str,
}

const fn spec(kind: OpKind, name: &'static str, arity: usize, elementwise: bool, template: &'static str) -> OpSpec {
    OpSpec { kind, name, arity, elementwise, template }
}

static REGISTRY: [OpSpec; 24] = [
    spec(OpKind::Add, "add", 2, true, "torch.add({0}, {1})"),
    spec(OpKind::Sub, "sub", 2, true, "torch.sub({0}, {1})"),
    spec(OpKind::Mul, "mul", 2, true, "torch.mul({0}, {1})"),
    spec(OpKind::SafeDiv, "safe_div", 2, true, "torch.div({0}, {1})"),
    spec(OpKind::Neg, "neg", 1, true, "torch.neg({0})"),
    spec(OpKind::Relu, "relu", 1, true, "torch.relu({0})"),
    spec(OpKind::Sigmoid, "sigmoid", 1, true, "torch.sigmoid({0})"),
    spec(OpKind::Tanh, "tanh", 1, true, "torch.tanh({0})"),
    spec(OpKind::Abs, "abs", 1, true, "torch.abs({0})"),
    spec(OpKind::ExpClamped, "exp_clamped", 1, true, "torch.exp(torch.clamp({0}, -30.0, 30.0))"),
    spec(OpKind::Matmul, "matmul", 2, false, "torch.matmul({0}, {1})"),
    spec(OpKind::MaxReduce, "max_reduce", 1, false, "torch.amax({0}, dim={axis})"),
    spec(OpKind::MinReduce, "min_reduce", 1, false, "torch.amin({0}, dim={axis})"),
    spec(OpKind::SumReduce, "sum_reduce", 1, false, "torch.sum({0}, dim={axis})"),
    spec(OpKind::Reshape, "reshape", 1, false, "torch.reshape({0}, {shape}).clone()"),
    spec(OpKind::Transpose, "transpose", 1, false, "torch.transpose({0}, {axis}, {axis2}).clone()"),
    spec(OpKind::Concat, "concat", 2, false, "torch.cat([{0}, {1}], dim={axis})"),
    spec(OpKind::Fill, "fill", 0, false, "torch.full({shape}, {value}, dtype={dtype})"),
    spec(OpKind::Cast, "cast", 1, true, "{0}.to({dtype})"),
    spec(OpKind::Maximum, "maximum", 2, true, "torch.maximum({0}, {1})"),
    spec(OpKind::Minimum, "minimum", 2, true, "torch.minimum({0}, {1})"),
    spec(OpKind::Where, "where", 3, true, "torch.where({0}, {1}, {2})"),
    spec(OpKind::Greater, "greater", 2, true, "torch.gt({0}, {1})"),
    spec(OpKind::Less, "less", 2, true, "torch.lt({0}, {1})"),
];

/// The fixed built-in operator set.
pub fn registry() -> &'static [OpSpec] {
    &REGISTRY
}

impl OpKind {
    pub fn spec(self) -> &'static OpSpec {
        REGISTRY.iter().find(|s| s.kind == self).expect("every OpKind is registered")
    }

    pub fn name(self) -> &'static str {
        self.spec().name
    }

    pub fn is_elementwise(self) -> bool {
        self.spec().elementwise
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Casts that keep generated programs numerically valid.
pub fn cast_allowed(from: DType, to: DType) -> bool {
    matches!(
        (from, to),
        (DType::F32, DType::F64)
            | (DType::F64, DType::F32)
            | (DType::I64, DType::F32)
            | (DType::I64, DType::F64)
            | (DType::Bool, DType::I64)
    )
}

fn shape_list(shapes: &[&Shape]) -> String {
    shapes.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(", ")
}

impl OpSpec {
    /// Output shape, or why the operand shapes are unacceptable.
    pub fn shape_rule(&self, shapes: &[&Shape], attrs: &Attrs) -> Result<Shape, Rejection> {
        let op = self.kind;
        if shapes.len() != self.arity {
            return Err(Rejection::Arity { op, expected: self.arity, got: shapes.len() });
        }
        let reject = |why: &str| Rejection::Shape { op, shapes: shape_list(shapes), why: why.to_string() };
        if self.elementwise {
            let first = shapes[0];
            if shapes.iter().any(|s| *s != first) {
                return Err(reject("elementwise operands must share one shape"));
            }
            return Ok(first.clone());
        }
        match op {
            OpKind::Matmul => {
                let (a, b) = (shapes[0].dims(), shapes[1].dims());
                if a.len() != 2 || b.len() != 2 {
                    return Err(reject("matmul takes two rank-2 operands"));
                }
                if a[1] != b[0] {
                    return Err(reject("inner dimensions differ"));
                }
                Ok(Shape::new(vec![a[0], b[1]]).expect("extents positive"))
            }
            OpKind::MaxReduce | OpKind::MinReduce | OpKind::SumReduce => {
                let axis = attrs.axis.ok_or(Rejection::Attr { op, attr: "axis" })?;
                if axis >= shapes[0].rank() {
                    return Err(reject("axis out of range"));
                }
                Ok(shapes[0].without_axis(axis))
            }
            OpKind::Reshape => {
                let target = attrs.shape.as_ref().ok_or(Rejection::Attr { op, attr: "shape" })?;
                if target.numel() != shapes[0].numel() {
                    return Err(reject("element count mismatch"));
                }
                Ok(target.clone())
            }
            OpKind::Transpose => {
                let (d0, d1) = match (attrs.axis, attrs.axis2) {
                    (Some(a), Some(b)) => (a, b),
                    _ => return Err(Rejection::Attr { op, attr: "axis" }),
                };
                let rank = shapes[0].rank();
                if d0 >= rank || d1 >= rank || d0 == d1 {
                    return Err(reject("transpose needs two distinct in-range axes"));
                }
                let mut dims = shapes[0].dims().to_vec();
                dims.swap(d0, d1);
                Ok(Shape::new(dims).expect("permutation of a valid shape"))
            }
            OpKind::Concat => {
                let axis = attrs.axis.ok_or(Rejection::Attr { op, attr: "axis" })?;
                let (a, b) = (shapes[0].dims(), shapes[1].dims());
                if a.len() != b.len() || axis >= a.len() {
                    return Err(reject("concat needs equal ranks and an in-range axis"));
                }
                if a.iter().zip(b).enumerate().any(|(k, (x, y))| k != axis && x != y) {
                    return Err(reject("non-concat extents differ"));
                }
                let mut dims = a.to_vec();
                dims[axis] += b[axis];
                Ok(Shape::new(dims).expect("extents positive"))
            }
            OpKind::Fill => attrs.shape.clone().ok_or(Rejection::Attr { op, attr: "shape" }),
            _ => unreachable!("elementwise ops handled above"),
        }
    }

    /// Output dtype, or rejection.
    pub fn dtype_rule(&self, dtypes: &[DType], attrs: &Attrs) -> Result<DType, Rejection> {
        let op = self.kind;
        if dtypes.len() != self.arity {
            return Err(Rejection::Arity { op, expected: self.arity, got: dtypes.len() });
        }
        let reject = || Rejection::DType { op, dtypes: dtypes.to_vec() };
        let all_same = dtypes.windows(2).all(|w| w[0] == w[1]);
        match op {
            OpKind::Add | OpKind::Sub | OpKind::Mul | OpKind::Maximum | OpKind::Minimum | OpKind::Matmul => {
                (all_same && dtypes[0].is_numeric()).then_some(dtypes[0]).ok_or_else(reject)
            }
            OpKind::Greater | OpKind::Less => {
                (all_same && dtypes[0].is_numeric()).then_some(DType::Bool).ok_or_else(reject)
            }
            OpKind::SafeDiv => (all_same && dtypes[0].is_float()).then_some(dtypes[0]).ok_or_else(reject),
            OpKind::Neg | OpKind::Relu | OpKind::Abs | OpKind::MaxReduce | OpKind::MinReduce | OpKind::SumReduce => {
                dtypes[0].is_numeric().then_some(dtypes[0]).ok_or_else(reject)
            }
            OpKind::Sigmoid | OpKind::Tanh | OpKind::ExpClamped => {
                dtypes[0].is_float().then_some(dtypes[0]).ok_or_else(reject)
            }
            OpKind::Reshape | OpKind::Transpose => Ok(dtypes[0]),
            OpKind::Concat => all_same.then_some(dtypes[0]).ok_or_else(reject),
            OpKind::Fill => {
                let dtype = attrs.dtype.ok_or(Rejection::Attr { op, attr: "dtype" })?;
                match attrs.value {
                    Some(v) if v.matches(dtype) => Ok(dtype),
                    _ => Err(Rejection::Attr { op, attr: "value" }),
                }
            }
            OpKind::Cast => {
                let to = attrs.dtype.ok_or(Rejection::Attr { op, attr: "dtype" })?;
                cast_allowed(dtypes[0], to).then_some(to).ok_or_else(reject)
            }
            OpKind::Where => (dtypes[0] == DType::Bool && dtypes[1] == dtypes[2] && dtypes[1].is_numeric())
                .then_some(dtypes[1])
                .ok_or_else(reject),
        }
    }

    /// Concrete-value precondition checked before running the kernel.
    pub fn precondition(&self, inputs: &[&TensorValue]) -> Result<(), TensorError> {
        if self.kind == OpKind::SafeDiv {
            let small = inputs[1].scalars().any(|s| s.as_f64().abs() < MIN_DIVISOR);
            if small {
                return Err(TensorError::PreconditionViolated(format!(
                    "safe_div divisor has an element with magnitude below {MIN_DIVISOR}"
                )));
            }
        }
        Ok(())
    }

    /// Instantiate the emission template with operand expressions.
    pub fn render(&self, args: &[String], attrs: &Attrs) -> String {
        let mut out = self.template.to_string();
        for (i, a) in args.iter().enumerate() {
            out = out.replace(&format!("{{{i}}}"), a);
        }
        if let Some(axis) = attrs.axis {
            out = out.replace("{axis}", &axis.to_string());
        }
        if let Some(axis2) = attrs.axis2 {
            out = out.replace("{axis2}", &axis2.to_string());
        }
        if let Some(shape) = &attrs.shape {
            out = out.replace("{shape}", &shape.to_string());
        }
        if let Some(dtype) = attrs.dtype {
            out = out.replace("{dtype}", dtype.torch_name());
        }
        if let Some(value) = attrs.value {
            out = out.replace("{value}", &py_literal(value));
        }
        out
    }
}

/// Python spelling of a scalar literal.
pub fn py_literal(v: Scalar) -> String {
    match v {
        Scalar::Float(x) => format!("{x:?}"),
        Scalar::Int(x) => x.to_string(),
        Scalar::Bool(true) => "True".into(),
        Scalar::Bool(false) => "False".into(),
    }
}

/// Output signature of `op` applied to operands of the given signatures.
pub fn infer(op: OpKind, shapes: &[&Shape], dtypes: &[DType], attrs: &Attrs) -> Result<(Shape, DType), Rejection> {
    let spec = op.spec();
    let shape = spec.shape_rule(shapes, attrs)?;
    let dtype = spec.dtype_rule(dtypes, attrs)?;
    if shape.rank() > MAX_RANK {
        return Err(Rejection::Shape { op, shapes: shape_list(shapes), why: "result rank too large".into() });
    }
    Ok((shape, dtype))
}

fn map_float(t: &TensorValue, f32fn: impl Fn(f32) -> f32, f64fn: impl Fn(f64) -> f64) -> Data {
    match t.data() {
        Data::F32(v) => Data::F32(v.iter().map(|&x| f32fn(x)).collect()),
        Data::F64(v) => Data::F64(v.iter().map(|&x| f64fn(x)).collect()),
        _ => unreachable!("dtype rule admits floats only"),
    }
}

fn map_numeric(
    t: &TensorValue,
    f32fn: impl Fn(f32) -> f32,
    f64fn: impl Fn(f64) -> f64,
    i64fn: impl Fn(i64) -> i64,
) -> Data {
    match t.data() {
        Data::I64(v) => Data::I64(v.iter().map(|&x| i64fn(x)).collect()),
        _ => map_float(t, f32fn, f64fn),
    }
}

fn zip_numeric(
    a: &TensorValue,
    b: &TensorValue,
    f32fn: impl Fn(f32, f32) -> f32,
    f64fn: impl Fn(f64, f64) -> f64,
    i64fn: impl Fn(i64, i64) -> i64,
) -> Data {
    match (a.data(), b.data()) {
        (Data::F32(x), Data::F32(y)) => Data::F32(x.iter().zip(y).map(|(&p, &q)| f32fn(p, q)).collect()),
        (Data::F64(x), Data::F64(y)) => Data::F64(x.iter().zip(y).map(|(&p, &q)| f64fn(p, q)).collect()),
        (Data::I64(x), Data::I64(y)) => Data::I64(x.iter().zip(y).map(|(&p, &q)| i64fn(p, q)).collect()),
        _ => unreachable!("dtype rule admits equal numeric dtypes only"),
    }
}

fn compare(a: &TensorValue, b: &TensorValue, greater: bool) -> Data {
    let n = a.numel();
    let out = (0..n)
        .map(|i| {
            let (x, y) = (a.flat(i), b.flat(i));
            let ord = match (x, y) {
                (Scalar::Int(p), Scalar::Int(q)) => p.partial_cmp(&q),
                _ => x.as_f64().partial_cmp(&y.as_f64()),
            };
            match ord {
                Some(std::cmp::Ordering::Greater) => greater,
                Some(std::cmp::Ordering::Less) => !greater,
                _ => false,
            }
        })
        .collect();
    Data::Bool(out)
}

fn reduce(t: &TensorValue, axis: usize, kind: OpKind) -> Result<TensorValue, TensorError> {
    let extent = t.shape().dims()[axis];
    let slices: Vec<TensorValue> = (0..extent).map(|i| t.select(axis, i)).collect::<Result<_, _>>()?;
    let mut acc = slices[0].clone();
    for s in &slices[1..] {
        let data = match kind {
            OpKind::MaxReduce => zip_numeric(&acc, s, |p, q| if q > p { q } else { p }, |p, q| if q > p { q } else { p }, i64::max),
            OpKind::MinReduce => zip_numeric(&acc, s, |p, q| if q < p { q } else { p }, |p, q| if q < p { q } else { p }, i64::min),
            _ => zip_numeric(&acc, s, |p, q| p + q, |p, q| p + q, i64::wrapping_add),
        };
        acc = TensorValue::new(acc.shape().clone(), data)?;
    }
    Ok(acc)
}

fn matmul(a: &TensorValue, b: &TensorValue, out: &Shape) -> Data {
    let (m, k) = (a.shape().dims()[0], a.shape().dims()[1]);
    let n = b.shape().dims()[1];
    debug_assert_eq!(out.numel(), m * n);
    match (a.data(), b.data()) {
        (Data::F32(x), Data::F32(y)) => Data::F32(
            (0..m * n)
                .map(|o| (0..k).fold(0.0f32, |acc, j| acc + x[(o / n) * k + j] * y[j * n + o % n]))
                .collect(),
        ),
        (Data::F64(x), Data::F64(y)) => Data::F64(
            (0..m * n)
                .map(|o| (0..k).fold(0.0f64, |acc, j| acc + x[(o / n) * k + j] * y[j * n + o % n]))
                .collect(),
        ),
        (Data::I64(x), Data::I64(y)) => Data::I64(
            (0..m * n)
                .map(|o| {
                    (0..k).fold(0i64, |acc, j| acc.wrapping_add(x[(o / n) * k + j].wrapping_mul(y[j * n + o % n])))
                })
                .collect(),
        ),
        _ => unreachable!("dtype rule admits equal numeric dtypes only"),
    }
}

fn cast(t: &TensorValue, to: DType) -> Data {
    match (t.data(), to) {
        (Data::F32(v), DType::F64) => Data::F64(v.iter().map(|&x| x as f64).collect()),
        (Data::F64(v), DType::F32) => Data::F32(v.iter().map(|&x| x as f32).collect()),
        (Data::I64(v), DType::F32) => Data::F32(v.iter().map(|&x| x as f32).collect()),
        (Data::I64(v), DType::F64) => Data::F64(v.iter().map(|&x| x as f64).collect()),
        (Data::Bool(v), DType::I64) => Data::I64(v.iter().map(|&x| x as i64).collect()),
        _ => unreachable!("cast_allowed gates the pairs"),
    }
}

fn select_where(cond: &TensorValue, a: &TensorValue, b: &TensorValue) -> Data {
    let Data::Bool(c) = cond.data() else { unreachable!("dtype rule requires bool condition") };
    macro_rules! pick {
        ($x:expr, $y:expr, $ctor:path) => {
            $ctor(c.iter().zip($x.iter().zip($y)).map(|(&k, (&p, &q))| if k { p } else { q }).collect())
        };
    }
    match (a.data(), b.data()) {
        (Data::F32(x), Data::F32(y)) => pick!(x, y, Data::F32),
        (Data::F64(x), Data::F64(y)) => pick!(x, y, Data::F64),
        (Data::I64(x), Data::I64(y)) => pick!(x, y, Data::I64),
        (Data::Bool(x), Data::Bool(y)) => pick!(x, y, Data::Bool),
        _ => unreachable!("dtype rule requires equal branch dtypes"),
    }
}

// Finite for every finite input: exp overflow yields 1 / inf = 0.
fn sigmoid32(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

fn sigmoid64(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Reference semantics of every operator. Deterministic and pure; float
/// kernels compute at the tensor's own precision.
pub fn eval_op(op: OpKind, inputs: &[&TensorValue], attrs: &Attrs) -> Result<TensorValue, EvalError> {
    let spec = op.spec();
    let shapes: Vec<&Shape> = inputs.iter().map(|t| t.shape()).collect();
    let dtypes: Vec<DType> = inputs.iter().map(|t| t.dtype()).collect();
    let (out_shape, out_dtype) = infer(op, &shapes, &dtypes, attrs).map_err(|r| match r {
        Rejection::DType { .. } => EvalError::Tensor(TensorError::DTypeMismatch(r.to_string())),
        Rejection::Shape { .. } => EvalError::Tensor(TensorError::ShapeMismatch(r.to_string())),
        other => EvalError::Rejected(other),
    })?;
    spec.precondition(inputs)?;
    let data = match op {
        OpKind::Add => zip_numeric(inputs[0], inputs[1], |a, b| a + b, |a, b| a + b, i64::wrapping_add),
        OpKind::Sub => zip_numeric(inputs[0], inputs[1], |a, b| a - b, |a, b| a - b, i64::wrapping_sub),
        OpKind::Mul => zip_numeric(inputs[0], inputs[1], |a, b| a * b, |a, b| a * b, i64::wrapping_mul),
        OpKind::SafeDiv => zip_numeric(inputs[0], inputs[1], |a, b| a / b, |a, b| a / b, |_, _| unreachable!()),
        OpKind::Maximum => zip_numeric(inputs[0], inputs[1], f32::max, f64::max, i64::max),
        OpKind::Minimum => zip_numeric(inputs[0], inputs[1], f32::min, f64::min, i64::min),
        OpKind::Neg => map_numeric(inputs[0], |x| -x, |x| -x, i64::wrapping_neg),
        OpKind::Relu => map_numeric(inputs[0], |x| x.max(0.0), |x| x.max(0.0), |x| x.max(0)),
        OpKind::Abs => map_numeric(inputs[0], f32::abs, f64::abs, i64::wrapping_abs),
        OpKind::Sigmoid => map_float(inputs[0], sigmoid32, sigmoid64),
        OpKind::Tanh => map_float(inputs[0], f32::tanh, f64::tanh),
        OpKind::ExpClamped => map_float(
            inputs[0],
            |x| x.clamp(-EXP_CLAMP as f32, EXP_CLAMP as f32).exp(),
            |x| x.clamp(-EXP_CLAMP, EXP_CLAMP).exp(),
        ),
        OpKind::Greater => compare(inputs[0], inputs[1], true),
        OpKind::Less => compare(inputs[0], inputs[1], false),
        OpKind::Where => select_where(inputs[0], inputs[1], inputs[2]),
        OpKind::Cast => cast(inputs[0], out_dtype),
        OpKind::Matmul => matmul(inputs[0], inputs[1], &out_shape),
        OpKind::MaxReduce | OpKind::MinReduce | OpKind::SumReduce => {
            let axis = attrs.axis.expect("checked by shape rule");
            return Ok(reduce(inputs[0], axis, op)?);
        }
        OpKind::Reshape => return Ok(inputs[0].with_shape(out_shape)?),
        OpKind::Transpose => {
            return Ok(inputs[0].permute_two(attrs.axis.expect("checked"), attrs.axis2.expect("checked"))?)
        }
        OpKind::Concat => return Ok(TensorValue::concat(inputs[0], inputs[1], attrs.axis.expect("checked"))?),
        OpKind::Fill => {
            return Ok(TensorValue::full(out_shape, out_dtype, attrs.value.expect("checked by dtype rule"))?)
        }
    };
    Ok(TensorValue::new(out_shape, data)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::strategy::ValueTree;
    use proptest::prelude::*;

    fn s(d: &[usize]) -> Shape {
        Shape::new(d.to_vec()).unwrap()
    }

    #[test]
    fn registry_contents() {
        let reg = registry();
        assert!(reg.len() >= 20);
        for name in [
            "add", "sub", "mul", "safe_div", "neg", "relu", "sigmoid", "tanh", "abs", "exp_clamped", "matmul",
            "max_reduce", "min_reduce", "sum_reduce", "reshape", "transpose", "concat", "fill", "cast", "maximum",
            "minimum", "where",
        ] {
            assert!(reg.iter().any(|o| o.name == name), "missing {name}");
        }
        for op in reg {
            assert_eq!(op.kind.spec().name, op.name);
        }
    }

    #[test]
    fn elementwise_shape_rule_is_identity() {
        let sh = s(&[2, 3]);
        for op in registry().iter().filter(|o| o.elementwise) {
            let shapes = vec![&sh; op.arity];
            assert_eq!(op.shape_rule(&shapes, &Attrs::default()).unwrap(), sh, "{}", op.name);
        }
    }

    #[test]
    fn matmul_rejects_inner_mismatch() {
        let r = OpKind::Matmul.spec().shape_rule(&[&s(&[2, 3]), &s(&[4, 5])], &Attrs::default());
        assert!(matches!(r, Err(Rejection::Shape { .. })));
    }

    #[test]
    fn infer_examples() {
        let (sh, dt) = infer(OpKind::Concat, &[&s(&[2, 3]), &s(&[2, 5])], &[DType::F32; 2], &Attrs::axis(1)).unwrap();
        assert_eq!((sh, dt), (s(&[2, 8]), DType::F32));
        let reshape = |t: &[usize]| Attrs { shape: Some(s(t)), ..Default::default() };
        assert_eq!(infer(OpKind::Reshape, &[&s(&[2, 6])], &[DType::F32], &reshape(&[3, 4])).unwrap().0, s(&[3, 4]));
        assert!(infer(OpKind::Reshape, &[&s(&[2, 6])], &[DType::F32], &reshape(&[5, 3])).is_err());
        assert!(infer(OpKind::Add, &[&s(&[2])], &[DType::F32], &Attrs::default()).is_err());
        assert!(infer(OpKind::Sigmoid, &[&s(&[2])], &[DType::I64], &Attrs::default()).is_err());
        let cast = |d| Attrs { dtype: Some(d), ..Default::default() };
        assert!(infer(OpKind::Cast, &[&s(&[2])], &[DType::F32], &cast(DType::I64)).is_err());
        assert_eq!(infer(OpKind::Cast, &[&s(&[2])], &[DType::Bool], &cast(DType::I64)).unwrap().1, DType::I64);
    }

    #[test]
    fn kernel_examples() {
        let x = TensorValue::f32(&[3], vec![-1.5, 0.0, 2.0]).unwrap();
        let r = eval_op(OpKind::Relu, &[&x], &Attrs::default()).unwrap();
        assert_eq!(r, TensorValue::f32(&[3], vec![0.0, 0.0, 2.0]).unwrap());

        let a = TensorValue::f32(&[2, 3], vec![1.0; 6]).unwrap();
        let b = TensorValue::f32(&[3, 4], vec![1.0; 12]).unwrap();
        let m = eval_op(OpKind::Matmul, &[&a, &b], &Attrs::default()).unwrap();
        assert_eq!(m.shape(), &s(&[2, 4]));
        assert_eq!(m.flat(0), Scalar::Float(3.0));

        let a = TensorValue::i64(&[1, 2], vec![1, 2]).unwrap();
        let b = TensorValue::i64(&[1, 2], vec![3, 4]).unwrap();
        assert_eq!(eval_op(OpKind::Add, &[&a, &b], &Attrs::default()).unwrap(), TensorValue::i64(&[1, 2], vec![4, 6]).unwrap());
    }

    #[test]
    fn max_reduce_matches_row_max_oracle() {
        let t = TensorValue::f32(&[2, 2], vec![1.0, 5.0, 3.0, 2.0]).unwrap();
        let r = eval_op(OpKind::MaxReduce, &[&t], &Attrs::axis(1)).unwrap();
        let rows = [[1.0f32, 5.0], [3.0, 2.0]];
        let oracle: Vec<f32> = rows.iter().map(|r| r.iter().cloned().fold(f32::MIN, f32::max)).collect();
        assert_eq!(oracle, vec![5.0, 3.0]);
        assert_eq!(r, TensorValue::f32(&[2], oracle).unwrap());
    }

    #[test]
    fn safe_div_precondition() {
        let a = TensorValue::f32(&[2], vec![1.0, 1.0]).unwrap();
        let b = TensorValue::f32(&[2], vec![0.5, 1e-4]).unwrap();
        assert!(matches!(
            eval_op(OpKind::SafeDiv, &[&a, &b], &Attrs::default()),
            Err(EvalError::Tensor(TensorError::PreconditionViolated(_)))
        ));
    }

    #[test]
    fn shape_and_dtype_errors() {
        let a = TensorValue::f32(&[2], vec![1.0, 1.0]).unwrap();
        let b = TensorValue::f32(&[3], vec![1.0; 3]).unwrap();
        let c = TensorValue::i64(&[2], vec![1, 1]).unwrap();
        assert!(matches!(eval_op(OpKind::Add, &[&a, &b], &Attrs::default()), Err(EvalError::Tensor(TensorError::ShapeMismatch(_)))));
        assert!(matches!(eval_op(OpKind::Add, &[&a, &c], &Attrs::default()), Err(EvalError::Tensor(TensorError::DTypeMismatch(_)))));
    }

    #[test]
    fn templates_render() {
        let args = vec!["a".to_string(), "b".to_string()];
        assert_eq!(OpKind::Add.spec().render(&args, &Attrs::default()), "torch.add(a, b)");
        assert_eq!(OpKind::Relu.spec().render(&args[..1], &Attrs::default()), "torch.relu(a)");
        assert_eq!(OpKind::Matmul.spec().render(&args, &Attrs::default()), "torch.matmul(a, b)");
        assert_eq!(OpKind::Concat.spec().render(&args, &Attrs::axis(1)), "torch.cat([a, b], dim=1)");
        let fill = Attrs::fill(s(&[2]), DType::F32, Scalar::Float(0.0));
        assert_eq!(OpKind::Fill.spec().render(&[], &fill), "torch.full((2,), 0.0, dtype=torch.float32)");
    }

    fn arb_f32(n: usize) -> impl Strategy<Value = Vec<f32>> {
        prop::collection::vec(-50.0f32..50.0, n)
    }

    proptest! {
        // Evaluating slice-by-slice along any axis and re-stacking equals the
        // whole-tensor result, bit for bit.
        #[test]
        fn elementwise_slicewise_equals_whole(
            dims in prop::collection::vec(1usize..4, 1..=3),
            seed in any::<u64>(),
        ) {
            let n: usize = dims.iter().product();
            let mut runner = proptest::test_runner::TestRunner::deterministic();
            let xs = arb_f32(n).new_tree(&mut runner).unwrap().current();
            let ys: Vec<f32> = arb_f32(n).new_tree(&mut runner).unwrap().current()
                .into_iter().map(|v| if v.abs() < 0.01 { 1.0 } else { v }).collect();
            let a = TensorValue::f32(&dims, xs).unwrap();
            let b = TensorValue::f32(&dims, ys).unwrap();
            let cond = eval_op(OpKind::Greater, &[&a, &b], &Attrs::default()).unwrap();
            let axis = (seed as usize) % dims.len();
            for op in registry().iter().filter(|o| o.elementwise) {
                let (inputs, attrs): (Vec<&TensorValue>, Attrs) = match op.kind {
                    OpKind::Where => (vec![&cond, &a, &b], Attrs::default()),
                    OpKind::Cast => (vec![&a], Attrs { dtype: Some(DType::F64), ..Default::default() }),
                    _ if op.arity == 1 => (vec![&a], Attrs::default()),
                    _ => (vec![&a, &b], Attrs::default()),
                };
                let whole = eval_op(op.kind, &inputs, &attrs).unwrap();
                let parts: Vec<TensorValue> = (0..dims[axis]).map(|i| {
                    let sliced: Vec<TensorValue> = inputs.iter().map(|t| t.select(axis, i).unwrap()).collect();
                    let refs: Vec<&TensorValue> = sliced.iter().collect();
                    eval_op(op.kind, &refs, &attrs).unwrap()
                }).collect();
                prop_assert!(TensorValue::stack(&parts, axis).unwrap().bit_eq(&whole), "{}", op.name);
            }
        }

        #[test]
        fn eval_is_deterministic(xs in arb_f32(6)) {
            let a = TensorValue::f32(&[2, 3], xs).unwrap();
            for op in [OpKind::Sigmoid, OpKind::Tanh, OpKind::ExpClamped, OpKind::SumReduce] {
                let attrs = Attrs::axis(1);
                let r1 = eval_op(op, &[&a], &attrs).unwrap();
                let r2 = eval_op(op, &[&a], &attrs).unwrap();
                prop_assert!(r1.bit_eq(&r2));
                prop_assert!(r1.check_valid());
            }
        }
    }
}
