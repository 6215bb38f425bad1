use std::path::Path;
use std::process::{Command, Output};

use dynfuzz::config::RUNNER_ENV;
use dynfuzz::harness::{summarize_corpus, TestCase, PROGRAM_FILE};

const BIN: &str = env!("CARGO_BIN_EXE_dynfuzz");

fn dynfuzz(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove(RUNNER_ENV).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).trim().to_string()
}

fn runner(fault: &str) -> String {
    if fault.is_empty() {
        format!("{BIN} runner")
    } else {
        format!("{BIN} runner --fault {fault}")
    }
}

fn dir_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_is_stable_and_writes_a_case() {
    let d = tempfile::tempdir().unwrap();
    let a = dynfuzz(&["gen", "--master-seed", "5", "--index", "2", "--out", dir_str(d.path())]);
    let b = dynfuzz(&["gen", "--master-seed", "5", "--index", "2", "--out", dir_str(d.path())]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(stdout(&a), stdout(&b));
    let case_dir = d.path().join(format!("case_{}", stdout(&a)));
    assert_eq!(TestCase::read(&case_dir).unwrap().id, stdout(&a));
    let other = dynfuzz(&["gen", "--master-seed", "5", "--index", "3", "--out", dir_str(d.path())]);
    assert_ne!(stdout(&a), stdout(&other));
}

#[test]
fn gen_without_mutations_emits_the_seed() {
    let d = tempfile::tempdir().unwrap();
    let o = dynfuzz(&["gen", "--k", "0", "--out", dir_str(d.path())]);
    assert!(o.status.success());
    let src = std::fs::read_to_string(d.path().join(format!("case_{}", stdout(&o))).join(PROGRAM_FILE)).unwrap();
    assert!(!src.contains("_bk") && !src.contains("if "), "{src}");
}

#[test]
fn fuzz_exit_codes_and_iteration_cap() {
    let d = tempfile::tempdir().unwrap();
    let corpus = d.path().join("c");
    let clean = dynfuzz(&["fuzz", "--max-iters", "10", "--runner", &runner(""), "--corpus", dir_str(&corpus), "--json"]);
    assert_eq!(clean.status.code(), Some(0), "{}", String::from_utf8_lossy(&clean.stderr));
    let report: serde_json::Value = serde_json::from_slice(&clean.stdout).unwrap();
    assert_eq!(report["attempted"], 10);

    let dirty = dynfuzz(&["fuzz", "--max-iters", "4", "--runner", &runner("perturb"), "--corpus", dir_str(&corpus)]);
    assert_eq!(dirty.status.code(), Some(2));
    assert!(stdout(&dirty).contains("unique fingerprints: 1"), "{}", stdout(&dirty));

    let rep = dynfuzz(&["report", dir_str(&corpus), "--json"]);
    assert!(rep.status.success());
    let r: serde_json::Value = serde_json::from_slice(&rep.stdout).unwrap();
    assert_eq!(r["attempted"].as_u64(), Some(summarize_corpus(&corpus).unwrap().len() as u64));
}

#[test]
fn replay_and_reduce() {
    let d = tempfile::tempdir().unwrap();
    let corpus = d.path().join("c");
    let o = dynfuzz(&["fuzz", "--max-iters", "1", "--num-ops", "12", "--runner", &runner("crash-run"), "--corpus", dir_str(&corpus)]);
    assert_eq!(o.status.code(), Some(2));
    let entry = summarize_corpus(&corpus).unwrap().pop().unwrap();
    let case_dir = corpus.join(format!("case_{}", entry.case_id));

    let replay = dynfuzz(&["replay", dir_str(&case_dir), "--runner", &runner("crash-run")]);
    assert!(replay.status.success());
    let v: serde_json::Value = serde_json::from_slice(&replay.stdout).unwrap();
    assert_eq!(v["kind"], "RunCrash");
    assert!(String::from_utf8_lossy(&replay.stderr).contains("reproduced"));

    let pass = dynfuzz(&["replay", dir_str(&case_dir), "--runner", &runner("")]);
    let v: serde_json::Value = serde_json::from_slice(&pass.stdout).unwrap();
    assert_eq!(v["kind"], "Pass");

    // The clean runner cannot reproduce the persisted fingerprint.
    let no = dynfuzz(&["reduce", dir_str(&case_dir), "--runner", &runner("")]);
    assert_eq!(no.status.code(), Some(3));

    let out = d.path().join("reduced");
    let yes = dynfuzz(&["reduce", dir_str(&case_dir), "--runner", &runner("crash-run"), "--out", dir_str(&out)]);
    assert!(yes.status.success(), "{}", String::from_utf8_lossy(&yes.stderr));
    let small = TestCase::read(Path::new(&stdout(&yes))).unwrap();
    let big = TestCase::read(&case_dir).unwrap();
    assert!(small.program.statement_count() < big.program.statement_count());
    assert!(small.provenance.reduced);
}

#[test]
fn flags_override_the_config_file() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"master_seed": 9, "num_ops": 6}"#).unwrap();
    let from_file = dynfuzz(&["gen", "--config", dir_str(&cfg), "--out", dir_str(d.path())]);
    let explicit = dynfuzz(&["gen", "--master-seed", "9", "--num-ops", "6", "--out", dir_str(d.path())]);
    let overridden = dynfuzz(&["gen", "--config", dir_str(&cfg), "--master-seed", "10", "--out", dir_str(d.path())]);
    let by_flags = dynfuzz(&["gen", "--master-seed", "10", "--num-ops", "6", "--out", dir_str(d.path())]);
    assert_eq!(stdout(&from_file), stdout(&explicit));
    assert_eq!(stdout(&overridden), stdout(&by_flags));
    assert_ne!(stdout(&from_file), stdout(&overridden));

    std::fs::write(&cfg, r#"{"bogus": 1}"#).unwrap();
    let bad = dynfuzz(&["gen", "--config", dir_str(&cfg)]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn runner_env_var_is_below_the_flag() {
    let d = tempfile::tempdir().unwrap();
    let corpus = d.path().join("c");
    let base = ["fuzz", "--max-iters", "2", "--corpus", dir_str(&corpus)];
    let env_only = Command::new(BIN).args(base).env(RUNNER_ENV, runner("perturb")).output().unwrap();
    assert_eq!(env_only.status.code(), Some(2));
    let r = runner("");
    let flag_wins = Command::new(BIN).args(base).args(["--runner", &r]).env(RUNNER_ENV, runner("perturb")).output().unwrap();
    assert_eq!(flag_wins.status.code(), Some(0));
}
