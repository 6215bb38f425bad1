use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dynfuzz::config::Config;
use dynfuzz::harness::{
    fuzz_loop, generate_case, reduce, run_case, summarize_corpus, CampaignReport, CorpusEntry, HarnessError, TestCase, VerdictKind,
    VERDICT_FILE,
};
use dynfuzz::runner::{self, RunnerArgs};

#[derive(Parser)]
#[command(name = "dynfuzz", version, about = "Mutation-based fuzzer for dynamic deep-learning compilers")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate one case without running it.
    Gen {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Position in the case stream.
        #[arg(long, default_value_t = 0)]
        index: u64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run a campaign.
    Fuzz {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Re-run a case directory and print its verdict.
    Replay {
        case_dir: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Shrink a failing case directory.
    Reduce {
        case_dir: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Fingerprint to preserve; defaults to the persisted verdict's.
        #[arg(long)]
        fingerprint: Option<String>,
        /// Where to write the reduced case; defaults to next to the input.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize a corpus directory.
    Report {
        corpus_dir: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Execute a case with the built-in reference runner.
    #[command(hide = true)]
    Runner(RunnerArgs),
}

/// Flags mirror the config file; each one overrides the file.
#[derive(clap::Args, Default)]
struct ConfigArgs {
    /// JSON config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    master_seed: Option<u64>,
    #[arg(long)]
    num_ops: Option<usize>,
    #[arg(long)]
    max_rank: Option<usize>,
    #[arg(long)]
    max_extent: Option<usize>,
    /// Mutations composed per case.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    weight_resolution: Option<f64>,
    #[arg(long)]
    weight_recover: Option<f64>,
    #[arg(long)]
    weight_functionalize: Option<f64>,
    #[arg(long)]
    weight_tcb: Option<f64>,
    /// Runner command; also settable through TORCHPROBE_RUNNER.
    #[arg(long)]
    runner: Option<String>,
    #[arg(long)]
    compile_timeout: Option<f64>,
    #[arg(long)]
    run_timeout: Option<f64>,
    #[arg(long)]
    rtol_f32: Option<f64>,
    #[arg(long)]
    atol_f32: Option<f64>,
    #[arg(long)]
    rtol_f64: Option<f64>,
    #[arg(long)]
    atol_f64: Option<f64>,
    #[arg(long)]
    working_dir: Option<PathBuf>,
    /// Environment variable passed to the runner; repeatable. Without it the
    /// runner inherits the whole environment.
    #[arg(long = "env-allow")]
    env_allow: Vec<String>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    max_iters: Option<u64>,
    #[arg(long)]
    wall_budget: Option<f64>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<Config, HarnessError> {
        let mut c = match &self.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        c.apply_env();
        fn set<T: Clone>(dst: &mut T, v: &Option<T>) {
            if let Some(v) = v {
                *dst = v.clone();
            }
        }
        set(&mut c.master_seed, &self.master_seed);
        set(&mut c.num_ops, &self.num_ops);
        set(&mut c.max_rank, &self.max_rank);
        set(&mut c.max_extent, &self.max_extent);
        set(&mut c.k, &self.k);
        set(&mut c.weights.operator_resolution, &self.weight_resolution);
        set(&mut c.weights.mutate_then_recover, &self.weight_recover);
        set(&mut c.weights.functionalize, &self.weight_functionalize);
        set(&mut c.weights.tcb, &self.weight_tcb);
        set(&mut c.backend.runner, &self.runner);
        set(&mut c.backend.compile_timeout_s, &self.compile_timeout);
        set(&mut c.backend.run_timeout_s, &self.run_timeout);
        set(&mut c.backend.tolerances.f32.rtol, &self.rtol_f32);
        set(&mut c.backend.tolerances.f32.atol, &self.atol_f32);
        set(&mut c.backend.tolerances.f64.rtol, &self.rtol_f64);
        set(&mut c.backend.tolerances.f64.atol, &self.atol_f64);
        if self.working_dir.is_some() {
            c.backend.working_dir = self.working_dir.clone();
        }
        if !self.env_allow.is_empty() {
            c.backend.env_allowlist = Some(self.env_allow.clone());
        }
        set(&mut c.corpus_dir, &self.corpus);
        set(&mut c.workers, &self.workers);
        set(&mut c.max_iters, &self.max_iters);
        set(&mut c.wall_budget_s, &self.wall_budget);
        c.validate()?;
        Ok(c)
    }
}

fn print_report(r: &CampaignReport, json: bool) {
    if json {
        println!("{}", serde_json::to_string_pretty(r).expect("serializable"));
        return;
    }
    println!("cases: {} ({:.1}/s, {} without a case)", r.attempted, r.cases_per_s, r.generation_failures);
    for kind in VerdictKind::ALL {
        println!("  {kind:<14} {}", r.count(kind));
    }
    println!("unique fingerprints: {}", r.unique_fingerprints());
    for (fp, s) in &r.fingerprints {
        println!("  {:>5}  {fp}  (first: case_{})", s.count, s.first_case);
    }
}

fn persisted(case_dir: &Path) -> Option<CorpusEntry> {
    serde_json::from_str(&std::fs::read_to_string(case_dir.join(VERDICT_FILE)).ok()?).ok()
}

fn run(cmd: Cmd) -> Result<ExitCode, HarnessError> {
    match cmd {
        Cmd::Gen { cfg, index, out } => {
            let c = cfg.resolve()?;
            let g = generate_case(&c, index)?;
            let dir = g.case.write(&out, &c.backend.tolerances)?;
            println!("{}", g.case.id);
            log::info!("wrote {}", dir.display());
        }
        Cmd::Fuzz { cfg, json } => {
            let c = cfg.resolve()?;
            let report = fuzz_loop(&c)?;
            print_report(&report, json);
            if report.non_pass() > 0 {
                return Ok(ExitCode::from(2));
            }
        }
        Cmd::Replay { case_dir, cfg } => {
            let c = cfg.resolve()?;
            let case = TestCase::read(&case_dir)?;
            let v = run_case(&case, &c.backend)?;
            println!("{}", serde_json::to_string_pretty(&v).expect("serializable"));
            if let Some(prev) = persisted(&case_dir) {
                let same = prev.verdict.kind == v.kind;
                eprintln!("persisted verdict {}: {}", prev.verdict.kind, if same { "reproduced" } else { "NOT reproduced" });
            }
        }
        Cmd::Reduce { case_dir, cfg, fingerprint, out } => {
            let c = cfg.resolve()?;
            let case = TestCase::read(&case_dir)?;
            let target = match fingerprint.or_else(|| persisted(&case_dir).map(|e| e.verdict.fingerprint)) {
                Some(fp) => fp,
                None => run_case(&case, &c.backend)?.fingerprint,
            };
            if target.is_empty() {
                return Err(HarnessError::NotReproducible("the case passes; nothing to reduce".into()));
            }
            let r = reduce(&case, &c.backend, &target)?;
            let root = out.unwrap_or_else(|| case_dir.parent().map(Path::to_path_buf).unwrap_or_default());
            let dir = r.case.write(&root, &c.backend.tolerances)?;
            eprintln!(
                "{} -> {} statements in {} runs",
                case.program.statement_count(),
                r.case.program.statement_count(),
                r.runs
            );
            println!("{}", dir.display());
        }
        Cmd::Report { corpus_dir, json } => {
            let entries = summarize_corpus(&corpus_dir)?;
            let r = CampaignReport::from_entries(entries.iter().map(|e| (e.case_id.as_str(), &e.verdict)));
            print_report(&r, json);
        }
        Cmd::Runner(args) => return Ok(ExitCode::from(runner::run(&args) as u8)),
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                HarnessError::NotReproducible(_) => 3,
                _ => 1,
            })
        }
    }
}
