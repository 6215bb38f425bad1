//! Concrete tensor values and the element-level primitives the reference
//! evaluator is built on.
//!
//! Tensors are dense, row-major and immutable from the outside: every
//! operation that "changes" a tensor returns a new value.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Maximum tensor rank supported anywhere in the fuzzer.
pub const MAX_RANK: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("dtype mismatch: {0}")]
    DTypeMismatch(String),
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("index {pos:?} out of bounds for shape {shape}")]
    IndexOutOfBounds { pos: Vec<usize>, shape: Shape },
    #[error("invalid shape {0:?}: dims must be >= 1 and rank <= {MAX_RANK}")]
    InvalidShape(Vec<usize>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F32,
    F64,
    I64,
    Bool,
}

impl DType {
    pub const ALL: [DType; 4] = [DType::F32, DType::F64, DType::I64, DType::Bool];

    pub fn is_float(self) -> bool {
        matches!(self, DType::F32 | DType::F64)
    }

    /// Float or integer, i.e. totally ordered with arithmetic.
    pub fn is_numeric(self) -> bool {
        !matches!(self, DType::Bool)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DType::F32 => "f32",
            DType::F64 => "f64",
            DType::I64 => "i64",
            DType::Bool => "bool",
        }
    }

    pub fn torch_name(self) -> &'static str {
        match self {
            DType::F32 => "torch.float32",
            DType::F64 => "torch.float64",
            DType::I64 => "torch.int64",
            DType::Bool => "torch.bool",
        }
    }
}

impl fmt::Display for DType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Tensor extents. Rank is at most [`MAX_RANK`] and every extent is positive.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Shape(Vec<usize>);

impl Shape {
    pub fn new(dims: Vec<usize>) -> Result<Self, TensorError> {
        if dims.len() > MAX_RANK || dims.contains(&0) {
            return Err(TensorError::InvalidShape(dims));
        }
        Ok(Shape(dims))
    }

    pub fn scalar() -> Self {
        Shape(Vec::new())
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }

    /// Row-major strides.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.0.len()];
        for k in (0..self.0.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * self.0[k + 1];
        }
        strides
    }

    pub fn flat_index(&self, pos: &[usize]) -> Result<usize, TensorError> {
        if pos.len() != self.rank() || self.rank() == 0 {
            return Err(TensorError::IndexOutOfBounds { pos: pos.to_vec(), shape: self.clone() });
        }
        let mut flat = 0;
        for ((&p, &d), s) in pos.iter().zip(&self.0).zip(self.strides()) {
            if p >= d {
                return Err(TensorError::IndexOutOfBounds { pos: pos.to_vec(), shape: self.clone() });
            }
            flat += p * s;
        }
        Ok(flat)
    }

    /// The shape with `axis` removed.
    pub fn without_axis(&self, axis: usize) -> Shape {
        let mut dims = self.0.clone();
        dims.remove(axis);
        Shape(dims)
    }
}

impl TryFrom<Vec<usize>> for Shape {
    type Error = TensorError;

    fn try_from(dims: Vec<usize>) -> Result<Self, Self::Error> {
        Shape::new(dims)
    }
}

impl From<Shape> for Vec<usize> {
    fn from(shape: Shape) -> Self {
        shape.0
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, d) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{d}")?;
        }
        if self.0.len() == 1 {
            write!(f, ",")?;
        }
        write!(f, ")")
    }
}

/// A single element. Floats of either width are carried at f64 precision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scalar {
    Float(f64),
    Int(i64),
    Bool(bool),
}

impl Scalar {
    pub fn matches(self, dtype: DType) -> bool {
        matches!(
            (self, dtype),
            (Scalar::Float(_), DType::F32 | DType::F64)
                | (Scalar::Int(_), DType::I64)
                | (Scalar::Bool(_), DType::Bool)
        )
    }

    /// Numeric view used for ordered comparisons (bools are 0/1).
    pub fn as_f64(self) -> f64 {
        match self {
            Scalar::Float(v) => v,
            Scalar::Int(v) => v as f64,
            Scalar::Bool(b) => b as i64 as f64,
        }
    }

    /// Bitwise identity (distinguishes -0.0 from 0.0, equal NaN payloads match).
    pub fn bit_eq(self, other: Scalar) -> bool {
        match (self, other) {
            (Scalar::Float(a), Scalar::Float(b)) => a.to_bits() == b.to_bits(),
            (a, b) => a == b,
        }
    }
}

/// Flat row-major storage, one variant per dtype.
#[derive(Debug, Clone, PartialEq)]
pub enum Data {
    F32(Vec<f32>),
    F64(Vec<f64>),
    I64(Vec<i64>),
    Bool(Vec<bool>),
}

impl Data {
    pub fn dtype(&self) -> DType {
        match self {
            Data::F32(_) => DType::F32,
            Data::F64(_) => DType::F64,
            Data::I64(_) => DType::I64,
            Data::Bool(_) => DType::Bool,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Data::F32(v) => v.len(),
            Data::F64(v) => v.len(),
            Data::I64(v) => v.len(),
            Data::Bool(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn get(&self, i: usize) -> Scalar {
        match self {
            Data::F32(v) => Scalar::Float(v[i] as f64),
            Data::F64(v) => Scalar::Float(v[i]),
            Data::I64(v) => Scalar::Int(v[i]),
            Data::Bool(v) => Scalar::Bool(v[i]),
        }
    }

    fn gather(&self, idx: impl Iterator<Item = usize>) -> Data {
        match self {
            Data::F32(v) => Data::F32(idx.map(|i| v[i]).collect()),
            Data::F64(v) => Data::F64(idx.map(|i| v[i]).collect()),
            Data::I64(v) => Data::I64(idx.map(|i| v[i]).collect()),
            Data::Bool(v) => Data::Bool(idx.map(|i| v[i]).collect()),
        }
    }

    fn empty_like(&self, cap: usize) -> Data {
        match self {
            Data::F32(_) => Data::F32(Vec::with_capacity(cap)),
            Data::F64(_) => Data::F64(Vec::with_capacity(cap)),
            Data::I64(_) => Data::I64(Vec::with_capacity(cap)),
            Data::Bool(_) => Data::Bool(Vec::with_capacity(cap)),
        }
    }

    fn extend_from(&mut self, other: &Data, range: std::ops::Range<usize>) {
        match (self, other) {
            (Data::F32(a), Data::F32(b)) => a.extend_from_slice(&b[range]),
            (Data::F64(a), Data::F64(b)) => a.extend_from_slice(&b[range]),
            (Data::I64(a), Data::I64(b)) => a.extend_from_slice(&b[range]),
            (Data::Bool(a), Data::Bool(b)) => a.extend_from_slice(&b[range]),
            _ => unreachable!("extend_from called with mismatched dtypes"),
        }
    }
}

/// A concrete n-dimensional array.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorValue {
    shape: Shape,
    data: Data,
}

impl TensorValue {
    pub fn new(shape: Shape, data: Data) -> Result<Self, TensorError> {
        if shape.numel() != data.len() {
            return Err(TensorError::ShapeMismatch(format!(
                "shape {shape} needs {} elements, got {}",
                shape.numel(),
                data.len()
            )));
        }
        Ok(TensorValue { shape, data })
    }

    pub fn f32(dims: &[usize], values: Vec<f32>) -> Result<Self, TensorError> {
        Self::new(Shape::new(dims.to_vec())?, Data::F32(values))
    }

    pub fn f64(dims: &[usize], values: Vec<f64>) -> Result<Self, TensorError> {
        Self::new(Shape::new(dims.to_vec())?, Data::F64(values))
    }

    pub fn i64(dims: &[usize], values: Vec<i64>) -> Result<Self, TensorError> {
        Self::new(Shape::new(dims.to_vec())?, Data::I64(values))
    }

    pub fn bool(dims: &[usize], values: Vec<bool>) -> Result<Self, TensorError> {
        Self::new(Shape::new(dims.to_vec())?, Data::Bool(values))
    }

    /// A tensor of the given signature with every element set to `value`.
    pub fn full(shape: Shape, dtype: DType, value: Scalar) -> Result<Self, TensorError> {
        let n = shape.numel();
        let data = match (dtype, value) {
            (DType::F32, Scalar::Float(v)) => Data::F32(vec![v as f32; n]),
            (DType::F64, Scalar::Float(v)) => Data::F64(vec![v; n]),
            (DType::I64, Scalar::Int(v)) => Data::I64(vec![v; n]),
            (DType::Bool, Scalar::Bool(v)) => Data::Bool(vec![v; n]),
            (d, v) => return Err(TensorError::DTypeMismatch(format!("cannot fill {d} with {v:?}"))),
        };
        Ok(TensorValue { shape, data })
    }

    pub fn zeros(shape: Shape, dtype: DType) -> Self {
        let zero = match dtype {
            DType::F32 | DType::F64 => Scalar::Float(0.0),
            DType::I64 => Scalar::Int(0),
            DType::Bool => Scalar::Bool(false),
        };
        Self::full(shape, dtype, zero).expect("zero literal matches dtype")
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dtype(&self) -> DType {
        self.data.dtype()
    }

    pub fn data(&self) -> &Data {
        &self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn into_parts(self) -> (Shape, Data) {
        (self.shape, self.data)
    }

    /// Element at flat row-major offset `i`.
    pub fn flat(&self, i: usize) -> Scalar {
        self.data.get(i)
    }

    pub fn scalars(&self) -> impl Iterator<Item = Scalar> + '_ {
        (0..self.numel()).map(|i| self.data.get(i))
    }

    pub fn index_get(&self, pos: &[usize]) -> Result<Scalar, TensorError> {
        let flat = self.shape.flat_index(pos)?;
        Ok(self.data.get(flat))
    }

    pub fn index_set(&self, pos: &[usize], value: Scalar) -> Result<TensorValue, TensorError> {
        let mut out = self.clone();
        out.store(pos, value)?;
        Ok(out)
    }

    /// In-place form of [`TensorValue::index_set`], used by the interpreter.
    pub fn store(&mut self, pos: &[usize], value: Scalar) -> Result<(), TensorError> {
        let flat = self.shape.flat_index(pos)?;
        match (&mut self.data, value) {
            (Data::F32(v), Scalar::Float(x)) => v[flat] = x as f32,
            (Data::F64(v), Scalar::Float(x)) => v[flat] = x,
            (Data::I64(v), Scalar::Int(x)) => v[flat] = x,
            (Data::Bool(v), Scalar::Bool(x)) => v[flat] = x,
            (d, v) => {
                return Err(TensorError::DTypeMismatch(format!(
                    "cannot store {v:?} into {} tensor",
                    d.dtype()
                )))
            }
        }
        Ok(())
    }

    /// True iff every float element is finite.
    pub fn check_valid(&self) -> bool {
        match &self.data {
            Data::F32(v) => v.iter().all(|x| x.is_finite()),
            Data::F64(v) => v.iter().all(|x| x.is_finite()),
            Data::I64(_) | Data::Bool(_) => true,
        }
    }

    /// Bitwise equality of shape, dtype and every element.
    pub fn bit_eq(&self, other: &TensorValue) -> bool {
        if self.shape != other.shape {
            return false;
        }
        match (&self.data, &other.data) {
            (Data::F32(a), Data::F32(b)) => a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()),
            (Data::F64(a), Data::F64(b)) => a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()),
            (Data::I64(a), Data::I64(b)) => a == b,
            (Data::Bool(a), Data::Bool(b)) => a == b,
            _ => false,
        }
    }

    /// Largest elementwise absolute difference, or `None` if the signatures differ.
    pub fn max_abs_diff(&self, other: &TensorValue) -> Option<f64> {
        if self.shape != other.shape || self.dtype() != other.dtype() {
            return None;
        }
        let mut worst = 0.0f64;
        for (a, b) in self.scalars().zip(other.scalars()) {
            let (a, b) = (a.as_f64(), b.as_f64());
            let d = if a.is_nan() || b.is_nan() {
                if a.is_nan() && b.is_nan() {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else if a == b {
                0.0
            } else {
                (a - b).abs()
            };
            worst = worst.max(d);
        }
        Some(worst)
    }

    /// The sub-tensor at `index` along `axis` (rank drops by one).
    pub fn select(&self, axis: usize, index: usize) -> Result<TensorValue, TensorError> {
        let dims = self.shape.dims();
        if axis >= dims.len() || index >= dims[axis] {
            return Err(TensorError::IndexOutOfBounds { pos: vec![index], shape: self.shape.clone() });
        }
        let outer: usize = dims[..axis].iter().product();
        let inner: usize = dims[axis + 1..].iter().product();
        let extent = dims[axis];
        let idx = (0..outer).flat_map(move |o| (0..inner).map(move |i| (o * extent + index) * inner + i));
        Ok(TensorValue { shape: self.shape.without_axis(axis), data: self.data.gather(idx) })
    }

    /// Overwrites the slice at `index` along `axis` with `src`.
    pub fn assign_select(&mut self, axis: usize, index: usize, src: &TensorValue) -> Result<(), TensorError> {
        let dims = self.shape.dims().to_vec();
        if axis >= dims.len() || index >= dims[axis] {
            return Err(TensorError::IndexOutOfBounds { pos: vec![index], shape: self.shape.clone() });
        }
        if src.shape != self.shape.without_axis(axis) {
            return Err(TensorError::ShapeMismatch(format!(
                "slice of {} along axis {axis} is {}, got {}",
                self.shape,
                self.shape.without_axis(axis),
                src.shape
            )));
        }
        if src.dtype() != self.dtype() {
            return Err(TensorError::DTypeMismatch(format!(
                "cannot assign {} slice into {} tensor",
                src.dtype(),
                self.dtype()
            )));
        }
        let outer: usize = dims[..axis].iter().product();
        let inner: usize = dims[axis + 1..].iter().product();
        let extent = dims[axis];
        for o in 0..outer {
            for i in 0..inner {
                let dst = (o * extent + index) * inner + i;
                let s = o * inner + i;
                match (&mut self.data, &src.data) {
                    (Data::F32(d), Data::F32(v)) => d[dst] = v[s],
                    (Data::F64(d), Data::F64(v)) => d[dst] = v[s],
                    (Data::I64(d), Data::I64(v)) => d[dst] = v[s],
                    (Data::Bool(d), Data::Bool(v)) => d[dst] = v[s],
                    _ => unreachable!("dtypes checked above"),
                }
            }
        }
        Ok(())
    }

    /// Stacks equally-shaped tensors along a new `axis`.
    pub fn stack(parts: &[TensorValue], axis: usize) -> Result<TensorValue, TensorError> {
        let first = parts
            .first()
            .ok_or_else(|| TensorError::ShapeMismatch("cannot stack zero tensors".into()))?;
        if axis > first.shape.rank() {
            return Err(TensorError::ShapeMismatch(format!("stack axis {axis} beyond rank {}", first.shape.rank())));
        }
        let mut dims = first.shape.dims().to_vec();
        dims.insert(axis, parts.len());
        let mut out = TensorValue::zeros(Shape::new(dims)?, first.dtype());
        for (k, p) in parts.iter().enumerate() {
            out.assign_select(axis, k, p)?;
        }
        Ok(out)
    }

    pub(crate) fn with_shape(&self, shape: Shape) -> Result<TensorValue, TensorError> {
        TensorValue::new(shape, self.data.clone())
    }

    pub(crate) fn permute_two(&self, d0: usize, d1: usize) -> Result<TensorValue, TensorError> {
        let dims = self.shape.dims();
        if d0 >= dims.len() || d1 >= dims.len() {
            return Err(TensorError::ShapeMismatch(format!("transpose axes ({d0}, {d1}) for {}", self.shape)));
        }
        let mut out_dims = dims.to_vec();
        out_dims.swap(d0, d1);
        let out_shape = Shape::new(out_dims)?;
        let in_strides = self.shape.strides();
        let n = self.numel();
        let mut idx = Vec::with_capacity(n);
        let mut pos = vec![0usize; dims.len()];
        for _ in 0..n {
            // pos indexes the output; swap back to find the source element.
            let mut src = pos.clone();
            src.swap(d0, d1);
            idx.push(src.iter().zip(&in_strides).map(|(p, s)| p * s).sum());
            for k in (0..pos.len()).rev() {
                pos[k] += 1;
                if pos[k] < out_shape.dims()[k] {
                    break;
                }
                pos[k] = 0;
            }
        }
        Ok(TensorValue { shape: out_shape, data: self.data.gather(idx.into_iter()) })
    }

    pub(crate) fn concat(a: &TensorValue, b: &TensorValue, axis: usize) -> Result<TensorValue, TensorError> {
        let (da, db) = (a.shape.dims(), b.shape.dims());
        if da.len() != db.len() || axis >= da.len() {
            return Err(TensorError::ShapeMismatch(format!("concat {} and {} on axis {axis}", a.shape, b.shape)));
        }
        let mut dims = da.to_vec();
        dims[axis] += db[axis];
        let out_shape = Shape::new(dims)?;
        let outer: usize = da[..axis].iter().product();
        let ca: usize = da[axis..].iter().product();
        let cb: usize = db[axis..].iter().product();
        let mut data = a.data.empty_like(out_shape.numel());
        for o in 0..outer {
            data.extend_from(&a.data, o * ca..(o + 1) * ca);
            data.extend_from(&b.data, o * cb..(o + 1) * cb);
        }
        Ok(TensorValue { shape: out_shape, data })
    }
}

/// Tolerance comparison: floats use `|a - b| <= atol + rtol * |b|` with NaNs
/// matching positionally; integers and bools must be equal.
pub fn tensors_close(a: &TensorValue, b: &TensorValue, rtol: f64, atol: f64) -> bool {
    if a.shape() != b.shape() || a.dtype() != b.dtype() {
        return false;
    }
    fn close(x: f64, y: f64, rtol: f64, atol: f64) -> bool {
        if x.is_nan() || y.is_nan() {
            return x.is_nan() && y.is_nan();
        }
        if x == y {
            return true;
        }
        (x - y).abs() <= atol + rtol * y.abs()
    }
    match (a.data(), b.data()) {
        (Data::F32(x), Data::F32(y)) => x.iter().zip(y).all(|(&p, &q)| close(p as f64, q as f64, rtol, atol)),
        (Data::F64(x), Data::F64(y)) => x.iter().zip(y).all(|(&p, &q)| close(p, q, rtol, atol)),
        (Data::I64(x), Data::I64(y)) => x == y,
        (Data::Bool(x), Data::Bool(y)) => x == y,
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn iota(dims: &[usize]) -> TensorValue {
        let n = dims.iter().product::<usize>();
        TensorValue::i64(dims, (0..n as i64).collect()).unwrap()
    }

    #[test]
    fn shape_rejects_zero_and_high_rank() {
        assert!(Shape::new(vec![2, 0]).is_err());
        assert!(Shape::new(vec![1, 1, 1, 1, 1]).is_err());
        assert_eq!(Shape::new(vec![2, 3, 4]).unwrap().numel(), 24);
        assert_eq!(Shape::scalar().numel(), 1);
    }

    #[test]
    fn index_get_row_major() {
        let t = TensorValue::i64(&[2, 2], vec![1, 2, 3, 4]).unwrap();
        assert_eq!(t.index_get(&[0, 1]).unwrap(), Scalar::Int(2));
        let t = TensorValue::i64(&[1], vec![7]).unwrap();
        assert_eq!(t.index_get(&[0]).unwrap(), Scalar::Int(7));
        // flat index = 1*12 + 2*4 + 3
        assert_eq!(iota(&[2, 3, 4]).index_get(&[1, 2, 3]).unwrap(), Scalar::Int(23));
    }

    #[test]
    fn index_get_out_of_bounds() {
        let t = iota(&[2, 3]);
        assert!(matches!(t.index_get(&[2, 0]), Err(TensorError::IndexOutOfBounds { .. })));
        assert!(matches!(t.index_get(&[0]), Err(TensorError::IndexOutOfBounds { .. })));
    }

    #[test]
    fn index_set_basic_and_rank_zero() {
        let t = TensorValue::i64(&[3], vec![1, 2, 3]).unwrap();
        let u = t.index_set(&[1], Scalar::Int(9)).unwrap();
        assert_eq!(u, TensorValue::i64(&[3], vec![1, 9, 3]).unwrap());
        let back = u.index_set(&[1], t.index_get(&[1]).unwrap()).unwrap();
        assert!(back.bit_eq(&t));

        let r0 = TensorValue::f32(&[], vec![1.0]).unwrap();
        assert!(matches!(r0.index_set(&[], Scalar::Float(2.0)), Err(TensorError::IndexOutOfBounds { .. })));
    }

    #[test]
    fn index_set_dtype_mismatch() {
        let t = TensorValue::i64(&[3], vec![1, 2, 3]).unwrap();
        assert!(matches!(t.index_set(&[0], Scalar::Float(1.0)), Err(TensorError::DTypeMismatch(_))));
    }

    #[test]
    fn check_valid_cases() {
        assert!(TensorValue::f32(&[2], vec![1.0, 2.0]).unwrap().check_valid());
        assert!(!TensorValue::f32(&[2], vec![1.0, f32::NAN]).unwrap().check_valid());
        let inf = 1e308f64 * 10.0;
        assert!(!TensorValue::f64(&[1], vec![inf]).unwrap().check_valid());
        assert!(TensorValue::i64(&[1], vec![i64::MAX]).unwrap().check_valid());
    }

    #[test]
    fn tensors_close_cases() {
        let a = TensorValue::f32(&[1], vec![1.0000]).unwrap();
        let b = TensorValue::f32(&[1], vec![1.0005]).unwrap();
        assert!(tensors_close(&a, &b, 1e-3, 1e-3));
        let a = TensorValue::i64(&[2], vec![1, 2]).unwrap();
        let b = TensorValue::i64(&[2], vec![1, 3]).unwrap();
        assert!(!tensors_close(&a, &b, 1.0, 1.0));
        let a = TensorValue::zeros(Shape::new(vec![2, 3]).unwrap(), DType::F32);
        let b = TensorValue::zeros(Shape::new(vec![3, 2]).unwrap(), DType::F32);
        assert!(!tensors_close(&a, &b, 1.0, 1.0));
        let n = TensorValue::f64(&[2], vec![f64::NAN, 1.0]).unwrap();
        assert!(tensors_close(&n, &n, 0.0, 0.0));
    }

    #[test]
    fn select_and_stack_invert() {
        let t = iota(&[2, 3, 4]);
        for axis in 0..3 {
            let parts: Vec<_> = (0..t.shape().dims()[axis]).map(|i| t.select(axis, i).unwrap()).collect();
            assert!(TensorValue::stack(&parts, axis).unwrap().bit_eq(&t));
        }
        assert_eq!(t.select(1, 2).unwrap().index_get(&[1, 3]).unwrap(), t.index_get(&[1, 2, 3]).unwrap());
    }

    #[test]
    fn transpose_and_concat() {
        let t = iota(&[2, 3]);
        let tt = t.permute_two(0, 1).unwrap();
        assert_eq!(tt.shape().dims(), &[3, 2]);
        assert_eq!(tt.index_get(&[2, 1]).unwrap(), t.index_get(&[1, 2]).unwrap());
        let c = TensorValue::concat(&t, &iota(&[2, 5]), 1).unwrap();
        assert_eq!(c.shape().dims(), &[2, 8]);
        assert_eq!(c.index_get(&[0, 3]).unwrap(), Scalar::Int(0));
        assert_eq!(c.index_get(&[0, 4]).unwrap(), Scalar::Int(1));
        assert_eq!(c.index_get(&[1, 3]).unwrap(), Scalar::Int(5));
    }

    fn arb_tensor() -> impl Strategy<Value = TensorValue> {
        prop::collection::vec(1usize..4, 1..=4).prop_flat_map(|dims| {
            let n = dims.iter().product::<usize>();
            prop::collection::vec(-1.0e3f32..1.0e3, n).prop_map(move |v| TensorValue::f32(&dims, v).unwrap())
        })
    }

    proptest! {
        #[test]
        fn restore_round_trip(t in arb_tensor(), seed in any::<u64>(), v in -1.0e6f64..1.0e6) {
            let pos: Vec<usize> = t.shape().dims().iter().enumerate()
                .map(|(k, &d)| ((seed >> (8 * k)) as usize) % d).collect();
            let original = t.index_get(&pos).unwrap();
            let mutated = t.index_set(&pos, Scalar::Float(v)).unwrap();
            let restored = mutated.index_set(&pos, original).unwrap();
            prop_assert!(restored.bit_eq(&t));
        }

        #[test]
        fn tensors_close_reflexive(t in arb_tensor()) {
            prop_assert!(tensors_close(&t, &t, 0.0, 0.0));
        }
    }
}
