//! Run one case through eager and compiled mode and classify the outcome.
//! The example doubles as its own runner, so the faults below are injected
//! into a child process exactly as a real backend would misbehave.
//!
//!     cargo run --example differential_run

use clap::Parser;
use dynfuzz::config::Config;
use dynfuzz::harness::{generate_case, run_case, BackendConfig};
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
    let me = std::env::current_exe().unwrap();
    let case = generate_case(&Config { master_seed: 5, num_ops: 10, ..Config::default() }, 0).unwrap().case;
    println!("case {}", case.id);

    for fault in ["", "perturb", "crash-compile", "crash-run", "hang"] {
        let runner = if fault.is_empty() { String::new() } else { format!("{} runner --fault {fault} --hang-s 30", me.display()) };
        let backend = BackendConfig { compile_timeout_s: 1.0, ..BackendConfig::with_runner(runner) };
        let v = run_case(&case, &backend).unwrap();
        println!("{:<14} {:<14} {}", if fault.is_empty() { "none" } else { fault }, v.kind, v.fingerprint);
    }
}
