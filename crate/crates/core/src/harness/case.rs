//! Test cases and their on-disk layout.
//!
//! ```text
//! case_<id>/program.py    emitted source defining f(...)
//! case_<id>/inputs.json   tensor archive keyed by parameter name
//! case_<id>/meta.json     param order, return arity, dtypes, tolerances
//! case_<id>/case.json     program IR and provenance, for replay and reduction
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{HarnessError, Tolerances};
use crate::archive;
use crate::graphgen::SeedSpec;
use crate::ir::{emit, infer_types, EmitStyle, Program};
use crate::mutators::MutationRecord;
use crate::tensor::{DType, TensorValue};

pub const PROGRAM_FILE: &str = "program.py";
pub const INPUTS_FILE: &str = "inputs.json";
pub const META_FILE: &str = "meta.json";
pub const CASE_FILE: &str = "case.json";
pub const VERDICT_FILE: &str = "verdict.json";

/// Where a case came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed_spec: SeedSpec,
    pub mutations: Vec<MutationRecord>,
    /// Set once the program no longer matches seed + mutations.
    #[serde(default)]
    pub reduced: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestCase {
    pub id: String,
    pub program: Program,
    pub inputs: BTreeMap<String, TensorValue>,
    pub provenance: Provenance,
    source: String,
    inputs_json: String,
}

/// The runner's view of a case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseMeta {
    pub param_order: Vec<String>,
    pub return_arity: usize,
    pub dtypes: BTreeMap<String, DType>,
    pub return_dtypes: Vec<DType>,
    pub tolerances: Tolerances,
}

#[derive(Serialize, Deserialize)]
struct CaseFile {
    id: String,
    program: Program,
    provenance: Provenance,
}

impl TestCase {
    /// Emit the program and derive the content id.
    pub fn new(program: Program, inputs: BTreeMap<String, TensorValue>, provenance: Provenance) -> Result<Self, HarnessError> {
        let source = emit(&program, EmitStyle::Module).map_err(|e| HarnessError::Case(e.to_string()))?;
        let inputs_json = archive::encode(&inputs);
        let id = content_id(&source, &inputs_json);
        Ok(TestCase { id, program, inputs, provenance, source, inputs_json })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn inputs_json(&self) -> &str {
        &self.inputs_json
    }

    pub fn dir_name(&self) -> String {
        format!("case_{}", self.id)
    }

    pub fn meta(&self, tolerances: &Tolerances) -> Result<CaseMeta, HarnessError> {
        let types = infer_types(&self.program).map_err(|v| HarnessError::Case(v.to_string()))?;
        let return_dtypes = self
            .program
            .returns
            .iter()
            .map(|r| types.get(r).map(|t| t.1).ok_or_else(|| HarnessError::Case(format!("return `{r}` has no type"))))
            .collect::<Result<_, _>>()?;
        Ok(CaseMeta {
            param_order: self.program.params.iter().map(|p| p.name.clone()).collect(),
            return_arity: self.program.returns.len(),
            dtypes: self.program.params.iter().map(|p| (p.name.clone(), p.dtype)).collect(),
            return_dtypes,
            tolerances: tolerances.clone(),
        })
    }

    /// Materialize as `root/case_<id>`, returning that directory.
    pub fn write(&self, root: &Path, tolerances: &Tolerances) -> Result<PathBuf, HarnessError> {
        let dir = root.join(self.dir_name());
        self.write_to(&dir, tolerances)?;
        Ok(dir)
    }

    /// Materialize into `dir` itself.
    pub fn write_to(&self, dir: &Path, tolerances: &Tolerances) -> Result<(), HarnessError> {
        fs::create_dir_all(dir)?;
        let meta = self.meta(tolerances)?;
        let case = CaseFile { id: self.id.clone(), program: self.program.clone(), provenance: self.provenance.clone() };
        fs::write(dir.join(PROGRAM_FILE), &self.source)?;
        fs::write(dir.join(INPUTS_FILE), &self.inputs_json)?;
        fs::write(dir.join(META_FILE), to_json(&meta))?;
        fs::write(dir.join(CASE_FILE), to_json(&case))?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self, HarnessError> {
        let case: CaseFile = serde_json::from_str(&fs::read_to_string(dir.join(CASE_FILE))?)
            .map_err(|e| HarnessError::Case(format!("{}: {e}", dir.join(CASE_FILE).display())))?;
        let inputs = archive::decode(&fs::read_to_string(dir.join(INPUTS_FILE))?).map_err(|e| HarnessError::Case(e.to_string()))?;
        TestCase::new(case.program, inputs, case.provenance)
    }
}

pub fn read_meta(dir: &Path) -> Result<CaseMeta, HarnessError> {
    serde_json::from_str(&fs::read_to_string(dir.join(META_FILE))?).map_err(|e| HarnessError::Case(e.to_string()))
}

/// First 16 hex digits of sha256(program.py || 0 || inputs.json).
pub fn content_id(source: &str, inputs_json: &str) -> String {
    let mut h = Sha256::new();
    h.update(source.as_bytes());
    h.update([0u8]);
    h.update(inputs_json.as_bytes());
    hex::encode(&h.finalize()[..8])
}

pub(crate) fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}
