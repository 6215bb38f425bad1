//! Built-in runner that executes a case with the reference interpreter.
//!
//! It speaks the same command-line contract as an external runner, so it
//! serves as the identity backend and, with `--fault`, as a fault injector
//! for testing the harness itself.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use clap::{Args, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::archive;
use crate::harness::{encode_outputs, TestCase, CASE_FILE, INPUTS_FILE, SENTINEL};
use crate::opset::OpKind;
use crate::profiler::evaluate;
use crate::tensor::{Data, TensorValue};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RunMode {
    Eager,
    Compiled,
}

/// Injected misbehaviour of the compiled mode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Fault {
    /// Add one to every element of output 0.
    Perturb,
    CrashCompile,
    CrashRun,
    /// Sleep before the sentinel.
    Hang,
    /// Crash at compile time if the program uses this operator.
    Op(OpKind),
}

impl std::str::FromStr for Fault {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "perturb" => Fault::Perturb,
            "crash-compile" => Fault::CrashCompile,
            "crash-run" => Fault::CrashRun,
            "hang" => Fault::Hang,
            _ => {
                let op = s.strip_prefix("op:").ok_or_else(|| format!("unknown fault `{s}`"))?;
                Fault::Op(serde_json::from_value(serde_json::Value::String(op.into())).map_err(|_| format!("unknown operator `{op}`"))?)
            }
        })
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunnerArgs {
    #[arg(long)]
    pub case: PathBuf,
    #[arg(long, value_enum)]
    pub mode: RunMode,
    #[arg(long)]
    pub out: PathBuf,
    /// perturb, crash-compile, crash-run, hang, or op:<name>.
    #[arg(long)]
    pub fault: Option<Fault>,
    /// Probability that the fault fires on a given invocation.
    #[arg(long, default_value_t = 1.0)]
    pub fault_prob: f64,
    /// How long `hang` sleeps, in seconds.
    #[arg(long, default_value_t = 3600.0)]
    pub hang_s: f64,
}

fn traceback(case: &Path, message: &str) -> String {
    let addr = (std::process::id() as u64) << 12 | 0x7f00_0000_0000;
    format!(
        "Traceback (most recent call last):\n  File \"{}\", line {}, in f\n{message} (object at {addr:#x})\n",
        case.join("program.py").display(),
        1 + std::process::id() % 97,
    )
}

fn load(case: &Path) -> Result<TestCase, String> {
    // Cross-check the archive, which is what an external runner would read.
    archive::decode(&fs::read_to_string(case.join(INPUTS_FILE)).map_err(|e| format!("OSError: {}: {e}", INPUTS_FILE))?)
        .map_err(|e| format!("ValueError: {e}"))?;
    fs::metadata(case.join(CASE_FILE)).map_err(|e| format!("OSError: {CASE_FILE}: {e}"))?;
    TestCase::read(case).map_err(|e| format!("ValueError: {e}"))
}

fn perturb(t: &TensorValue) -> TensorValue {
    let data = match t.data() {
        Data::F32(v) => Data::F32(v.iter().map(|x| x + 1.0).collect()),
        Data::F64(v) => Data::F64(v.iter().map(|x| x + 1.0).collect()),
        Data::I64(v) => Data::I64(v.iter().map(|x| x.wrapping_add(1)).collect()),
        Data::Bool(v) => Data::Bool(v.iter().map(|x| !x).collect()),
    };
    TensorValue::new(t.shape().clone(), data).expect("same shape")
}

fn execute(args: &RunnerArgs) -> Result<(), String> {
    let case = load(&args.case)?;
    let compiled = args.mode == RunMode::Compiled;
    let seed = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_nanos() as u64).unwrap_or(0) ^ std::process::id() as u64;
    let fires = compiled && args.fault.is_some() && ChaCha8Rng::seed_from_u64(seed).gen_bool(args.fault_prob.clamp(0.0, 1.0));
    let fault = if fires { args.fault.clone() } else { None };

    match &fault {
        Some(Fault::Hang) => std::thread::sleep(Duration::from_secs_f64(args.hang_s)),
        Some(Fault::CrashCompile) => return Err(traceback(&args.case, "RuntimeError: injected compiler failure")),
        Some(Fault::Op(op)) => {
            let mut uses = false;
            case.program.walk(|s| uses |= stmt_op(s) == Some(*op));
            if uses {
                return Err(traceback(&args.case, &format!("NotImplementedError: cannot lower {}", op.name())));
            }
        }
        _ => {}
    }
    if compiled {
        let mut out = std::io::stdout().lock();
        writeln!(out, "{SENTINEL}").and_then(|_| out.flush()).map_err(|e| e.to_string())?;
    }
    let mut outputs = evaluate(&case.program, &case.inputs).map_err(|e| format!("RuntimeError: {e}"))?;
    match fault {
        Some(Fault::CrashRun) => return Err(traceback(&args.case, "RuntimeError: injected runtime failure")),
        Some(Fault::Perturb) => {
            if let Some(first) = outputs.first_mut() {
                *first = perturb(first);
            }
        }
        _ => {}
    }
    fs::write(&args.out, encode_outputs(&outputs)).map_err(|e| format!("OSError: {}: {e}", args.out.display()))
}

fn stmt_op(s: &crate::ir::Stmt) -> Option<OpKind> {
    use crate::ir::Stmt;
    match s {
        Stmt::Assign { op, .. } | Stmt::SliceAssign { op, .. } | Stmt::ComprehensionAssign { op, .. } => Some(*op),
        _ => None,
    }
}

/// Run and return the process exit code.
pub fn run(args: &RunnerArgs) -> i32 {
    match execute(args) {
        Ok(()) => 0,
        Err(msg) => {
            eprint!("{msg}");
            if !msg.ends_with('\n') {
                eprintln!();
            }
            1
        }
    }
}
