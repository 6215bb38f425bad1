//! A small multi-worker campaign against a flaky backend that perturbs a
//! quarter of its compiled outputs. Non-passing cases land in a temporary
//! corpus, which is then summarized.

use clap::Parser;
use dynfuzz::config::Config;
use dynfuzz::harness::{fuzz_loop, summarize_corpus, BackendConfig, VerdictKind};
use dynfuzz::runner::{self, RunnerArgs};

#[derive(Parser)]
struct RunnerCli {
    #[command(flatten)]
    args: RunnerArgs,
}

fn main() {
    if std::env::args().nth(1).as_deref() == Some("runner") {
        std::process::exit(runner::run(&RunnerCli::parse_from(std::env::args().skip(1)).args));
    }
    env_logger::init();
    let me = std::env::current_exe().unwrap();
    let corpus = std::env::temp_dir().join(format!("dynfuzz-campaign-{}", std::process::id()));
    let cfg = Config {
        master_seed: 2024,
        max_iters: 40,
        workers: 4,
        corpus_dir: corpus.clone(),
        backend: BackendConfig::with_runner(format!("{} runner --fault perturb --fault-prob 0.25", me.display())),
        ..Config::default()
    };
    let report = fuzz_loop(&cfg).unwrap();
    println!("{} cases in {:.1}s", report.attempted, report.elapsed_s);
    for kind in VerdictKind::ALL {
        println!("  {kind:<14} {}", report.count(kind));
    }
    for e in summarize_corpus(&corpus).unwrap() {
        println!("  case_{} (#{}) {}", e.case_id, e.index, e.verdict.fingerprint);
    }
    std::fs::remove_dir_all(&corpus).ok();
}
