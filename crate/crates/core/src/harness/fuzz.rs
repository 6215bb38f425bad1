//! The campaign loop: generate, mutate, run, triage, persist.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::case::to_json;
use super::{run_case, HarnessError, Provenance, TestCase, Verdict, VerdictKind, VERDICT_FILE};
use crate::config::Config;
use crate::graphgen::generate_seed;
use crate::mutators::compose;
use crate::profiler::{evaluate_checked, outputs_bit_eq};

/// Seed draws per case index before giving up on it.
pub const GEN_ATTEMPTS: usize = 10;

#[derive(Debug, Clone)]
pub struct GeneratedCase {
    pub index: u64,
    pub case: TestCase,
    pub skipped: usize,
    pub rejected: usize,
}

/// Case `index` of the stream defined by `config.master_seed`. Identical
/// inputs give byte-identical cases.
pub fn generate_case(config: &Config, index: u64) -> Result<GeneratedCase, HarnessError> {
    let mut stream = ChaCha8Rng::seed_from_u64(config.master_seed);
    stream.set_stream(index);
    let mut last = String::new();
    for _ in 0..GEN_ATTEMPTS {
        let spec = config.seed_spec(stream.gen());
        let compose_seed: u64 = stream.gen();
        let seed = match generate_seed(&spec) {
            Ok(s) => s,
            Err(e) => {
                last = e.to_string();
                continue;
            }
        };
        let want = evaluate_checked(&seed.program, &seed.inputs).map_err(|e| HarnessError::Case(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(compose_seed);
        let out = compose(&seed.program, &seed.inputs, config.k, &config.weights, &mut rng);
        match evaluate_checked(&out.program, &seed.inputs) {
            Ok(got) if outputs_bit_eq(&got, &want) => {}
            other => {
                let why = other.err().map(|e| e.to_string()).unwrap_or_else(|| "outputs differ from the seed".into());
                log::error!("case {index}: mutated program fails its self-check: {why}");
                return Err(HarnessError::Case(format!("self-check failed: {why}")));
            }
        }
        let provenance = Provenance { seed_spec: spec, mutations: out.records, reduced: false };
        let case = TestCase::new(out.program, seed.inputs, provenance)?;
        return Ok(GeneratedCase { index, case, skipped: out.skipped, rejected: out.rejected });
    }
    Err(HarnessError::Case(format!("case {index}: no seed after {GEN_ATTEMPTS} attempts: {last}")))
}

/// Persisted next to each corpus case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub case_id: String,
    pub index: u64,
    pub master_seed: u64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FingerprintStats {
    pub kind: VerdictKind,
    pub count: u64,
    pub first_case: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub attempted: u64,
    pub counts: BTreeMap<VerdictKind, u64>,
    pub fingerprints: BTreeMap<String, FingerprintStats>,
    /// Indices that produced no runnable case.
    pub generation_failures: u64,
    /// Case ids in stream order; generation failures are skipped.
    pub case_ids: Vec<String>,
    pub elapsed_s: f64,
    pub cases_per_s: f64,
}

impl CampaignReport {
    pub fn from_entries<'a>(entries: impl IntoIterator<Item = (&'a str, &'a Verdict)>) -> Self {
        let mut r = CampaignReport {
            attempted: 0,
            counts: BTreeMap::new(),
            fingerprints: BTreeMap::new(),
            generation_failures: 0,
            case_ids: Vec::new(),
            elapsed_s: 0.0,
            cases_per_s: 0.0,
        };
        for (id, v) in entries {
            r.attempted += 1;
            r.case_ids.push(id.to_string());
            *r.counts.entry(v.kind).or_default() += 1;
            if v.kind != VerdictKind::Pass {
                r.fingerprints
                    .entry(v.fingerprint.clone())
                    .or_insert_with(|| FingerprintStats { kind: v.kind, count: 0, first_case: id.to_string() })
                    .count += 1;
            }
        }
        r
    }

    pub fn count(&self, kind: VerdictKind) -> u64 {
        self.counts.get(&kind).copied().unwrap_or(0)
    }

    pub fn non_pass(&self) -> u64 {
        self.counts.iter().filter(|(k, _)| **k != VerdictKind::Pass).map(|(_, n)| n).sum()
    }

    pub fn unique_fingerprints(&self) -> usize {
        self.fingerprints.len()
    }
}

fn persist(config: &Config, g: &GeneratedCase, verdict: &Verdict) -> Result<(), HarnessError> {
    let dir = g.case.write(&config.corpus_dir, &config.backend.tolerances)?;
    let entry = CorpusEntry { case_id: g.case.id.clone(), index: g.index, master_seed: config.master_seed, verdict: verdict.clone() };
    fs::write(dir.join(VERDICT_FILE), to_json(&entry))?;
    Ok(())
}

enum Slot {
    Ran(String, Verdict),
    NoCase,
}

/// Run a campaign. Workers pull case indices from a shared counter until
/// `max_iters` are taken or the wall budget runs out; the report lists
/// results in index order regardless of scheduling.
pub fn fuzz_loop(config: &Config) -> Result<CampaignReport, HarnessError> {
    config.validate()?;
    let start = Instant::now();
    let budget = Duration::from_secs_f64(config.wall_budget_s);
    let next = AtomicU64::new(0);
    let stop = AtomicBool::new(false);
    let results: Mutex<BTreeMap<u64, Slot>> = Mutex::new(BTreeMap::new());
    let failure: Mutex<Option<HarnessError>> = Mutex::new(None);

    let work = || loop {
        if stop.load(Ordering::Relaxed) || start.elapsed() >= budget {
            break;
        }
        let index = next.fetch_add(1, Ordering::Relaxed);
        if index >= config.max_iters {
            break;
        }
        let slot = match generate_case(config, index) {
            Err(e) => {
                log::warn!("case {index}: {e}");
                Slot::NoCase
            }
            Ok(g) => {
                let verdict = run_case(&g.case, &config.backend).and_then(|v| {
                    if v.kind != VerdictKind::Pass {
                        log::info!("case {index} ({}): {} {}", g.case.id, v.kind, v.detail);
                        persist(config, &g, &v)?;
                    }
                    Ok(v)
                });
                match verdict {
                    Ok(v) => Slot::Ran(g.case.id, v),
                    Err(e) => {
                        stop.store(true, Ordering::Relaxed);
                        failure.lock().expect("poisoned").get_or_insert(e);
                        break;
                    }
                }
            }
        };
        results.lock().expect("poisoned").insert(index, slot);
    };
    thread::scope(|s| {
        for _ in 0..config.workers {
            s.spawn(work);
        }
    });
    if let Some(e) = failure.into_inner().expect("poisoned") {
        return Err(e);
    }

    let results = results.into_inner().expect("poisoned");
    let ran: Vec<(&str, &Verdict)> = results
        .values()
        .filter_map(|s| match s {
            Slot::Ran(id, v) => Some((id.as_str(), v)),
            Slot::NoCase => None,
        })
        .collect();
    let mut report = CampaignReport::from_entries(ran);
    report.generation_failures = results.values().filter(|s| matches!(s, Slot::NoCase)).count() as u64;
    report.attempted = results.len() as u64;
    report.elapsed_s = start.elapsed().as_secs_f64();
    report.cases_per_s = report.attempted as f64 / report.elapsed_s.max(1e-9);
    Ok(report)
}

/// Read every `verdict.json` under a corpus directory, in stream order.
pub fn summarize_corpus(dir: &Path) -> Result<Vec<CorpusEntry>, HarnessError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path().join(VERDICT_FILE);
        if !path.is_file() {
            continue;
        }
        let e: CorpusEntry =
            serde_json::from_str(&fs::read_to_string(&path)?).map_err(|e| HarnessError::Case(format!("{}: {e}", path.display())))?;
        out.push(e);
    }
    out.sort_by(|a, b| (a.master_seed, a.index, &a.case_id).cmp(&(b.master_seed, b.index, &b.case_id)));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stream_is_deterministic_and_varied() {
        let c = Config { master_seed: 17, ..Default::default() };
        let a: Vec<String> = (0..6).map(|i| generate_case(&c, i).unwrap().case.id).collect();
        let b: Vec<String> = (0..6).map(|i| generate_case(&c, i).unwrap().case.id).collect();
        assert_eq!(a, b);
        let distinct: std::collections::BTreeSet<_> = a.iter().collect();
        assert_eq!(distinct.len(), 6);
        let other = Config { master_seed: 18, ..Default::default() };
        assert_ne!(generate_case(&other, 0).unwrap().case.id, a[0]);
    }

    #[test]
    fn zero_mutations_give_the_seed() {
        let c = Config { k: 0, ..Default::default() };
        let g = generate_case(&c, 3).unwrap();
        assert!(g.case.provenance.mutations.is_empty());
        let seed = generate_seed(&g.case.provenance.seed_spec).unwrap();
        assert_eq!(g.case.program, seed.program);
    }

    #[test]
    fn report_tallies() {
        let p = Verdict::pass();
        let h = Verdict::from_stderr(VerdictKind::CompilerHang, String::new(), "");
        let r = CampaignReport::from_entries([("a", &p), ("b", &h), ("c", &h)]);
        assert_eq!((r.attempted, r.non_pass(), r.unique_fingerprints()), (3, 2, 1));
        assert_eq!(r.fingerprints["CompilerHang"].first_case, "b");
        assert_eq!(r.count(VerdictKind::Pass), 1);
    }
}
