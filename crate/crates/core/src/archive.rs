//! Tensor archive: the JSON interchange format shared with runner processes.
//!
//! ```text
//! {"tensors": {"<name>": {"dtype": "f32|f64|i64|bool", "shape": [..], "data": [..]}}}
//! ```
//!
//! Float elements are written as strings holding the shortest decimal that
//! round-trips to the same value at the tensor's own width (`"nan"`/`"inf"`
//! spellings are accepted on input). Integers and bools are plain JSON values.
//! Names are emitted in sorted order so identical archives are identical bytes.

use std::collections::BTreeMap;

use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::tensor::{DType, Data, Shape, TensorValue};

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("malformed tensor archive: {0}")]
    Malformed(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn malformed(msg: impl Into<String>) -> ArchiveError {
    ArchiveError::Malformed(msg.into())
}

/// Serialize named tensors to the archive's canonical byte form.
pub fn encode(tensors: &BTreeMap<String, TensorValue>) -> String {
    let mut map = Map::new();
    for (name, t) in tensors {
        let data: Vec<Value> = match t.data() {
            Data::F32(v) => v.iter().map(|x| Value::String(format!("{x:?}"))).collect(),
            Data::F64(v) => v.iter().map(|x| Value::String(format!("{x:?}"))).collect(),
            Data::I64(v) => v.iter().map(|&x| json!(x)).collect(),
            Data::Bool(v) => v.iter().map(|&x| json!(x)).collect(),
        };
        map.insert(
            name.clone(),
            json!({"dtype": t.dtype().as_str(), "shape": t.shape().dims(), "data": data}),
        );
    }
    json!({ "tensors": map }).to_string()
}

fn parse_float(v: &Value) -> Result<f64, ArchiveError> {
    match v {
        Value::String(s) => match s.as_str() {
            "nan" | "NaN" => Ok(f64::NAN),
            "inf" | "Infinity" => Ok(f64::INFINITY),
            "-inf" | "-Infinity" => Ok(f64::NEG_INFINITY),
            _ => s.parse::<f64>().map_err(|e| malformed(format!("bad float {s:?}: {e}"))),
        },
        Value::Number(n) => n.as_f64().ok_or_else(|| malformed(format!("bad float {n}"))),
        other => Err(malformed(format!("expected float, got {other}"))),
    }
}

fn parse_f32(v: &Value) -> Result<f32, ArchiveError> {
    // Parse directly at f32 width so the shortest f32 spelling is exact.
    if let Value::String(s) = v {
        if let Ok(x) = s.parse::<f32>() {
            return Ok(x);
        }
    }
    parse_float(v).map(|x| x as f32)
}

fn decode_tensor(name: &str, v: &Value) -> Result<TensorValue, ArchiveError> {
    let obj = v.as_object().ok_or_else(|| malformed(format!("{name}: not an object")))?;
    let dtype: DType = serde_json::from_value(obj.get("dtype").cloned().unwrap_or(Value::Null))
        .map_err(|e| malformed(format!("{name}: dtype: {e}")))?;
    let dims: Vec<usize> = serde_json::from_value(obj.get("shape").cloned().unwrap_or(Value::Null))
        .map_err(|e| malformed(format!("{name}: shape: {e}")))?;
    let shape = Shape::new(dims).map_err(|e| malformed(format!("{name}: {e}")))?;
    let items = obj
        .get("data")
        .and_then(Value::as_array)
        .ok_or_else(|| malformed(format!("{name}: data must be an array")))?;
    let data = match dtype {
        DType::F32 => Data::F32(items.iter().map(parse_f32).collect::<Result<_, _>>()?),
        DType::F64 => Data::F64(items.iter().map(parse_float).collect::<Result<_, _>>()?),
        DType::I64 => Data::I64(
            items
                .iter()
                .map(|x| x.as_i64().ok_or_else(|| malformed(format!("{name}: bad int {x}"))))
                .collect::<Result<_, _>>()?,
        ),
        DType::Bool => Data::Bool(
            items
                .iter()
                .map(|x| x.as_bool().ok_or_else(|| malformed(format!("{name}: bad bool {x}"))))
                .collect::<Result<_, _>>()?,
        ),
    };
    TensorValue::new(shape, data).map_err(|e| malformed(format!("{name}: {e}")))
}

pub fn decode(text: &str) -> Result<BTreeMap<String, TensorValue>, ArchiveError> {
    let root: Value = serde_json::from_str(text)?;
    let tensors = root
        .get("tensors")
        .and_then(Value::as_object)
        .ok_or_else(|| malformed("missing \"tensors\" object"))?;
    tensors.iter().map(|(k, v)| Ok((k.clone(), decode_tensor(k, v)?))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn encodes_floats_as_shortest_strings() {
        let mut m = BTreeMap::new();
        m.insert("b".to_string(), TensorValue::f32(&[2], vec![0.1, -2.5]).unwrap());
        m.insert("a".to_string(), TensorValue::bool(&[], vec![true]).unwrap());
        let text = encode(&m);
        assert_eq!(
            text,
            r#"{"tensors":{"a":{"data":[true],"dtype":"bool","shape":[]},"b":{"data":["0.1","-2.5"],"dtype":"f32","shape":[2]}}}"#
        );
        assert_eq!(decode(&text).unwrap(), m);
    }

    #[test]
    fn rejects_bad_archives() {
        assert!(decode("{}").is_err());
        assert!(decode(r#"{"tensors":{"x":{"dtype":"f32","shape":[2],"data":["1.0"]}}}"#).is_err());
        assert!(decode(r#"{"tensors":{"x":{"dtype":"u8","shape":[1],"data":[1]}}}"#).is_err());
        assert!(decode("not json").is_err());
    }

    #[test]
    fn accepts_nonfinite_spellings() {
        let m = decode(r#"{"tensors":{"x":{"dtype":"f64","shape":[3],"data":["nan","inf","-inf"]}}}"#).unwrap();
        assert!(!m["x"].check_valid());
    }

    proptest! {
        #[test]
        fn round_trip_bit_exact(f in prop::collection::vec(any::<f32>(), 1..8),
                                d in prop::collection::vec(any::<f64>(), 1..8),
                                i in prop::collection::vec(any::<i64>(), 1..8)) {
            let mut m = BTreeMap::new();
            m.insert("f".to_string(), TensorValue::f32(&[f.len()], f.clone()).unwrap());
            m.insert("d".to_string(), TensorValue::f64(&[d.len()], d.clone()).unwrap());
            m.insert("i".to_string(), TensorValue::i64(&[i.len()], i.clone()).unwrap());
            let back = decode(&encode(&m)).unwrap();
            for (k, v) in &m {
                prop_assert!(back[k].bit_eq(v) || (!v.check_valid() && back[k].shape() == v.shape()));
            }
        }
    }
}
