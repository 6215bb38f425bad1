use std::collections::BTreeSet;
use std::path::Path;
use std::process::Command;

use dynfuzz::config::Config;
use dynfuzz::harness::{
    decode_outputs, fuzz_loop, generate_case, read_meta, run_case, run_runner, summarize_corpus, BackendConfig, Exit, HarnessError, Mode,
    TestCase, VerdictKind, SENTINEL,
};
use dynfuzz::profiler::{evaluate, outputs_bit_eq};

const BIN: &str = env!("CARGO_BIN_EXE_dynfuzz");

fn backend(extra: &str) -> BackendConfig {
    BackendConfig { compile_timeout_s: 10.0, run_timeout_s: 10.0, ..BackendConfig::with_runner(format!("{BIN} runner {extra}")) }
}

fn case(index: u64) -> TestCase {
    let cfg = Config { master_seed: 7, num_ops: 12, ..Config::default() };
    generate_case(&cfg, index).unwrap().case
}

#[test]
fn identity_backend_passes() {
    for i in 0..5 {
        let v = run_case(&case(i), &backend("")).unwrap();
        assert_eq!(v.kind, VerdictKind::Pass, "{v:?}");
        assert!(v.fingerprint.is_empty());
    }
}

#[test]
fn perturbed_output_is_inconsistent() {
    let v = run_case(&case(1), &backend("--fault perturb")).unwrap();
    assert_eq!(v.kind, VerdictKind::Inconsistent);
    assert_eq!(v.fingerprint, "Inconsistent: output 0");
}

#[test]
fn compile_hang_is_killed_at_the_limit() {
    let b = BackendConfig { compile_timeout_s: 0.5, ..backend("--fault hang") };
    let t = std::time::Instant::now();
    let v = run_case(&case(2), &b).unwrap();
    assert_eq!(v.kind, VerdictKind::CompilerHang);
    assert!(t.elapsed().as_secs_f64() < 5.0, "{:?}", t.elapsed());
}

#[test]
fn crash_phase_follows_the_sentinel() {
    let c = run_case(&case(3), &backend("--fault crash-compile")).unwrap();
    let r = run_case(&case(3), &backend("--fault crash-run")).unwrap();
    assert_eq!(c.kind, VerdictKind::CompilerCrash);
    assert_eq!(r.kind, VerdictKind::RunCrash);
    // Addresses, pids and paths differ between runs but not in the fingerprint.
    assert_eq!(c.fingerprint, run_case(&case(4), &backend("--fault crash-compile")).unwrap().fingerprint);
    assert!(!c.fingerprint.contains("0x7f"), "{}", c.fingerprint);
}

#[test]
fn missing_runner_is_a_backend_error() {
    let b = BackendConfig::with_runner("/nonexistent/dynfuzz-runner");
    assert!(matches!(run_case(&case(0), &b), Err(HarnessError::BackendUnavailable(_))));
}

#[test]
fn runner_contract_on_a_written_case() {
    let dir = tempfile::tempdir().unwrap();
    let c = case(5);
    let tol = BackendConfig::default().tolerances;
    let case_dir = c.write(dir.path(), &tol).unwrap();
    let meta = read_meta(&case_dir).unwrap();
    assert_eq!(meta.param_order, c.program.params.iter().map(|p| p.name.clone()).collect::<Vec<_>>());
    assert_eq!(meta.return_arity, c.program.returns.len());

    let out = dir.path().join("out.json");
    let b = backend("");
    let r = run_runner(&b, &case_dir, Mode::Compiled, &out).unwrap();
    assert!(r.saw_sentinel && r.success(), "{}", r.describe());
    assert!(r.stdout.contains(SENTINEL));
    let got = decode_outputs(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!(outputs_bit_eq(&got, &evaluate(&c.program, &c.inputs).unwrap()));

    let r = run_runner(&b, &case_dir, Mode::Eager, &out).unwrap();
    assert!(!r.saw_sentinel && r.success());

    let r = run_runner(&BackendConfig { run_timeout_s: 10.0, ..backend("--fault crash-run") }, &case_dir, Mode::Compiled, &out).unwrap();
    assert!(r.saw_sentinel);
    assert_eq!(r.exit, Exit::Code(1));
}

#[test]
fn flaky_fault_yields_a_mix() {
    let b = backend("--fault perturb --fault-prob 0.5");
    let c = case(6);
    let kinds: BTreeSet<_> = (0..16).map(|_| run_case(&c, &b).unwrap().kind).collect();
    assert_eq!(kinds, [VerdictKind::Pass, VerdictKind::Inconsistent].into());
}

fn campaign(dir: &Path, runner_extra: &str, iters: u64) -> Config {
    Config {
        master_seed: 3,
        num_ops: 10,
        max_iters: iters,
        workers: 4,
        corpus_dir: dir.to_path_buf(),
        backend: backend(runner_extra),
        ..Config::default()
    }
}

#[test]
fn campaign_persists_non_pass_cases() {
    let dir = tempfile::tempdir().unwrap();
    let report = fuzz_loop(&campaign(dir.path(), "--fault perturb", 12)).unwrap();
    assert_eq!(report.attempted, 12);
    assert_eq!(report.count(VerdictKind::Inconsistent) + report.generation_failures, 12);
    assert_eq!(report.unique_fingerprints(), 1);

    let entries = summarize_corpus(dir.path()).unwrap();
    assert_eq!(entries.len() as u64, report.non_pass());
    for e in &entries {
        let d = dir.path().join(format!("case_{}", e.case_id));
        assert_eq!(TestCase::read(&d).unwrap().id, e.case_id);
        assert_eq!(e.master_seed, 3);
    }
}

#[test]
fn clean_campaign_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let report = fuzz_loop(&campaign(dir.path(), "", 8)).unwrap();
    assert_eq!(report.count(VerdictKind::Pass) + report.generation_failures, 8);
    assert!(summarize_corpus(dir.path()).unwrap().is_empty());
}

#[test]
fn operator_fault_only_hits_cases_using_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = campaign(dir.path(), "--fault op:relu", 16);
    fuzz_loop(&cfg).unwrap();
    let hit: BTreeSet<_> = summarize_corpus(dir.path()).unwrap().into_iter().map(|e| e.index).collect();
    for i in 0..16 {
        let g = generate_case(&cfg, i).unwrap();
        let mut uses = false;
        g.case.program.walk(|s| uses |= format!("{s:?}").contains("Relu"));
        assert_eq!(hit.contains(&i), uses, "case {i}");
    }
}

fn torch_available() -> bool {
    Command::new("python3").args(["-c", "import torch, numpy"]).output().map(|o| o.status.success()).unwrap_or(false)
}

#[test]
fn python_runner_agrees_with_the_reference() {
    if !torch_available() {
        eprintln!("skipping: torch not importable");
        return;
    }
    let script = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../python/dynfuzz_runner.py");
    let b = BackendConfig {
        compile_timeout_s: 120.0,
        run_timeout_s: 120.0,
        ..BackendConfig::with_runner(format!("python3 {} --backend eager", script.display()))
    };
    let v = run_case(&case(0), &b).unwrap();
    assert_eq!(v.kind, VerdictKind::Pass, "{v:?}");
}
