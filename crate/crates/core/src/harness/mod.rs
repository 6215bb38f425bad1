//! Differential execution: materialize a case, run it eagerly and compiled in
//! fresh runner processes, and classify what happened.

mod case;
mod exec;
mod fuzz;
mod reduce;
mod verdict;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::archive;
use crate::profiler::evaluate_checked;
use crate::tensor::{tensors_close, DType, TensorValue};

pub(crate) use case::to_json;
pub use case::{content_id, read_meta, CaseMeta, Provenance, TestCase, CASE_FILE, INPUTS_FILE, META_FILE, PROGRAM_FILE, VERDICT_FILE};
pub use exec::{run_runner, Exit, Mode, RunOutcome, SENTINEL};
pub use fuzz::{
    fuzz_loop, generate_case, summarize_corpus, CampaignReport, CorpusEntry, FingerprintStats, GeneratedCase,
};
pub use reduce::{reduce, Reduction};
pub use verdict::{error_line, normalize, Verdict, VerdictKind};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("BackendUnavailable: {0}")]
    BackendUnavailable(String),
    #[error("NotReproducible: {0}")]
    NotReproducible(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("malformed case: {0}")]
    Case(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub rtol: f64,
    pub atol: f64,
}

/// Float comparison tolerances; integer and bool outputs compare exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub f32: Tolerance,
    pub f64: Tolerance,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { f32: Tolerance { rtol: 1e-3, atol: 1e-3 }, f64: Tolerance { rtol: 1e-6, atol: 1e-6 } }
    }
}

impl Tolerances {
    pub fn for_dtype(&self, d: DType) -> Tolerance {
        match d {
            DType::F32 => self.f32,
            DType::F64 => self.f64,
            DType::I64 | DType::Bool => Tolerance { rtol: 0.0, atol: 0.0 },
        }
    }

    pub fn is_valid(&self) -> bool {
        [self.f32, self.f64].iter().all(|t| t.rtol >= 0.0 && t.atol >= 0.0 && t.rtol.is_finite() && t.atol.is_finite())
    }

    pub fn close(&self, a: &TensorValue, b: &TensorValue) -> bool {
        let t = self.for_dtype(b.dtype());
        tensors_close(a, b, t.rtol, t.atol)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    /// Runner command, split on whitespace; the harness appends
    /// `--case <dir> --mode <mode> --out <file>`. Empty means the current
    /// executable's `runner` subcommand.
    pub runner: String,
    pub compile_timeout_s: f64,
    pub run_timeout_s: f64,
    pub tolerances: Tolerances,
    /// Where cases are materialized for execution; the runner's working
    /// directory. Defaults to the system temp dir.
    #[serde(default)]
    pub working_dir: Option<PathBuf>,
    /// Environment variables passed to the runner. `None` inherits all.
    #[serde(default)]
    pub env_allowlist: Option<Vec<String>>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            runner: String::new(),
            compile_timeout_s: 120.0,
            run_timeout_s: 60.0,
            tolerances: Tolerances::default(),
            working_dir: None,
            env_allowlist: None,
        }
    }
}

impl BackendConfig {
    pub fn with_runner(runner: impl Into<String>) -> Self {
        BackendConfig { runner: runner.into(), ..Default::default() }
    }

    pub fn runner_argv(&self) -> Vec<String> {
        let argv: Vec<String> = self.runner.split_whitespace().map(String::from).collect();
        if !argv.is_empty() {
            return argv;
        }
        let exe = std::env::current_exe().map(|p| p.display().to_string()).unwrap_or_else(|_| "dynfuzz".into());
        vec![exe, "runner".into()]
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let ok = |t: f64| t > 0.0 && t.is_finite();
        if !ok(self.compile_timeout_s) || !ok(self.run_timeout_s) {
            return Err(HarnessError::Config("timeouts must be positive".into()));
        }
        if !self.tolerances.is_valid() {
            return Err(HarnessError::Config("tolerances must be non-negative".into()));
        }
        Ok(())
    }
}

/// Returns archive keyed by output index.
pub fn encode_outputs(outputs: &[TensorValue]) -> String {
    let m: BTreeMap<String, TensorValue> = outputs.iter().enumerate().map(|(i, t)| (i.to_string(), t.clone())).collect();
    archive::encode(&m)
}

pub fn decode_outputs(text: &str) -> Result<Vec<TensorValue>, String> {
    let m = archive::decode(text).map_err(|e| e.to_string())?;
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.len() {
        out.push(m.get(&i.to_string()).cloned().ok_or_else(|| format!("output archive lacks key \"{i}\""))?);
    }
    Ok(out)
}

/// A uniquely named directory removed on drop.
struct Scratch(PathBuf);

impl Scratch {
    fn new(base: Option<&Path>, tag: &str) -> std::io::Result<Self> {
        static COUNTER: AtomicU64 = AtomicU64::new(0);
        let base = base.map(Path::to_path_buf).unwrap_or_else(std::env::temp_dir);
        let n = COUNTER.fetch_add(1, Ordering::Relaxed);
        let dir = base.join(format!("dynfuzz-{}-{n}-{tag}", std::process::id()));
        fs::create_dir_all(&dir)?;
        // Absolute, since the runner may run in another working directory.
        Ok(Scratch(fs::canonicalize(dir)?))
    }
}

impl Drop for Scratch {
    fn drop(&mut self) {
        let _ = fs::remove_dir_all(&self.0);
    }
}

/// Run one case against the backend and classify the outcome.
pub fn run_case(case: &TestCase, backend: &BackendConfig) -> Result<Verdict, HarnessError> {
    let reference = match evaluate_checked(&case.program, &case.inputs) {
        Ok(o) => o,
        Err(e) => return Ok(Verdict::from_stderr(VerdictKind::InvalidSeed, e.to_string(), "")),
    };
    let scratch = Scratch::new(backend.working_dir.as_deref(), &case.id)?;
    let dir = case.write(&scratch.0, &backend.tolerances)?;
    run_materialized(&dir, &scratch.0, &reference, backend)
}

fn run_materialized(dir: &Path, scratch: &Path, reference: &[TensorValue], backend: &BackendConfig) -> Result<Verdict, HarnessError> {
    let tol = &backend.tolerances;
    let eager_out = scratch.join("eager.json");
    let eager = run_runner(backend, dir, Mode::Eager, &eager_out)?;
    if !eager.success() {
        log::error!("eager run of {} failed ({}): {}", dir.display(), eager.describe(), eager.stderr.trim());
        return Ok(Verdict::from_stderr(VerdictKind::InvalidSeed, format!("eager run failed: {}", eager.describe()), &eager.stderr));
    }
    let eager_vals = match read_outputs(&eager_out) {
        Ok(v) => v,
        Err(e) => {
            log::error!("eager output of {} unreadable: {e}", dir.display());
            return Ok(Verdict::from_stderr(VerdictKind::InvalidSeed, format!("eager output unreadable: {e}"), ""));
        }
    };
    if let Some((i, why)) = first_mismatch(&eager_vals, reference, tol) {
        log::error!("runner drift on {}: eager output {i} disagrees with the reference ({why})", dir.display());
        return Ok(Verdict::from_stderr(VerdictKind::InvalidSeed, format!("eager output {i} disagrees with reference: {why}"), ""));
    }

    let compiled_out = scratch.join("compiled.json");
    let compiled = run_runner(backend, dir, Mode::Compiled, &compiled_out)?;
    let phase = if compiled.saw_sentinel { "run" } else { "compile" };
    let verdict = match compiled.exit {
        Exit::TimedOut => {
            Verdict::from_stderr(VerdictKind::CompilerHang, format!("{phase} phase {}", compiled.describe()), &compiled.stderr)
        }
        Exit::Code(0) if !compiled.saw_sentinel => {
            Verdict::from_stderr(VerdictKind::CompilerCrash, "exited without the compile sentinel".into(), "")
        }
        Exit::Code(0) => match read_outputs(&compiled_out) {
            Err(e) => Verdict::from_stderr(VerdictKind::RunCrash, format!("compiled output unreadable: {e}"), ""),
            Ok(vals) => match first_mismatch(&vals, &eager_vals, tol) {
                Some((i, why)) => Verdict::inconsistent(i, why),
                None => Verdict::pass(),
            },
        },
        _ => {
            let kind = if compiled.saw_sentinel { VerdictKind::RunCrash } else { VerdictKind::CompilerCrash };
            Verdict::from_stderr(kind, format!("{phase} phase {}", compiled.describe()), &compiled.stderr)
        }
    };
    Ok(verdict)
}

fn read_outputs(path: &Path) -> Result<Vec<TensorValue>, String> {
    let text = fs::read_to_string(path).map_err(|e| e.to_string())?;
    decode_outputs(&text)
}

/// First output index where `got` and `want` disagree, with an explanation.
fn first_mismatch(got: &[TensorValue], want: &[TensorValue], tol: &Tolerances) -> Option<(usize, String)> {
    for (i, w) in want.iter().enumerate() {
        let Some(g) = got.get(i) else {
            return Some((i, format!("missing; got {} outputs, expected {}", got.len(), want.len())));
        };
        if g.shape() != w.shape() || g.dtype() != w.dtype() {
            return Some((i, format!("got {:?} {}, expected {:?} {}", g.shape().dims(), g.dtype(), w.shape().dims(), w.dtype())));
        }
        if !tol.close(g, w) {
            let d = g.max_abs_diff(w).unwrap_or(f64::NAN);
            return Some((i, format!("max abs diff {d}")));
        }
    }
    (got.len() > want.len()).then(|| (want.len(), format!("got {} outputs, expected {}", got.len(), want.len())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn outputs_round_trip_in_index_order() {
        let outs: Vec<TensorValue> = (0..12).map(|i| TensorValue::i64(&[1], vec![i]).unwrap()).collect();
        assert_eq!(decode_outputs(&encode_outputs(&outs)).unwrap(), outs);
    }

    #[test]
    fn mismatch_reports_index_and_diff() {
        let a = TensorValue::f32(&[2], vec![1.0, 2.0]).unwrap();
        let b = TensorValue::f32(&[2], vec![1.0, 3.0]).unwrap();
        let tol = Tolerances::default();
        assert_eq!(first_mismatch(&[a.clone(), a.clone()], &[a.clone(), a.clone()], &tol), None);
        let (i, why) = first_mismatch(&[a.clone(), b], &[a.clone(), a.clone()], &tol).unwrap();
        assert_eq!(i, 1);
        assert!(why.contains("max abs diff 1"), "{why}");
        assert_eq!(first_mismatch(std::slice::from_ref(&a), &[a.clone(), a.clone()], &tol).unwrap().0, 1);
    }

    #[test]
    fn tolerances_scale_with_dtype() {
        let tol = Tolerances::default();
        let a = TensorValue::f32(&[1], vec![1.0]).unwrap();
        let b = TensorValue::f32(&[1], vec![1.0005]).unwrap();
        assert!(tol.close(&a, &b));
        let c = TensorValue::f64(&[1], vec![1.0]).unwrap();
        let d = TensorValue::f64(&[1], vec![1.0005]).unwrap();
        assert!(!tol.close(&c, &d));
    }

    #[test]
    fn backend_validation() {
        assert!(BackendConfig::default().validate().is_ok());
        assert!(BackendConfig { run_timeout_s: 0.0, ..Default::default() }.validate().is_err());
        assert_eq!(BackendConfig::with_runner("python3  r.py -v").runner_argv(), ["python3", "r.py", "-v"]);
    }
}
