//! Shrink a case that crashes a backend which cannot lower one operator.

use clap::Parser;
use dynfuzz::config::Config;
use dynfuzz::harness::{generate_case, reduce, run_case, BackendConfig};
use dynfuzz::ir::{emit, EmitStyle};
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
    let backend = BackendConfig::with_runner(format!("{} runner --fault op:add", me.display()));
    let cfg = Config { master_seed: 13, num_ops: 25, ..Config::default() };

    let (case, verdict) = (0..)
        .map(|i| generate_case(&cfg, i).unwrap().case)
        .map(|c| {
            let v = run_case(&c, &backend).unwrap();
            (c, v)
        })
        .find(|(_, v)| !v.fingerprint.is_empty())
        .unwrap();
    println!("{} statements, fingerprint: {}", case.program.statement_count(), verdict.fingerprint);

    let r = reduce(&case, &backend, &verdict.fingerprint).unwrap();
    println!("reduced to {} statements in {} runs:\n", r.case.program.statement_count(), r.runs);
    print!("{}", emit(&r.case.program, EmitStyle::FunctionOnly).unwrap());
}
