//! Campaign configuration, stored as one JSON document.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::graphgen::SeedSpec;
use crate::harness::{BackendConfig, HarnessError};
use crate::mutators::MutationWeights;

/// Environment variable that overrides the runner command.
pub const RUNNER_ENV: &str = "TORCHPROBE_RUNNER";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub master_seed: u64,
    pub num_ops: usize,
    pub max_rank: usize,
    pub max_extent: usize,
    /// Mutations composed per case.
    pub k: usize,
    pub weights: MutationWeights,
    pub backend: BackendConfig,
    pub corpus_dir: PathBuf,
    pub workers: usize,
    pub max_iters: u64,
    pub wall_budget_s: f64,
}

impl Default for Config {
    fn default() -> Self {
        let spec = SeedSpec::default();
        Config {
            master_seed: 0,
            num_ops: spec.num_ops,
            max_rank: spec.max_rank,
            max_extent: spec.max_extent,
            k: 3,
            weights: MutationWeights::default(),
            backend: BackendConfig::default(),
            corpus_dir: PathBuf::from("corpus"),
            workers: 1,
            max_iters: 100,
            wall_budget_s: 3600.0,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        crate::harness::to_json(self)
    }

    /// Replace the runner command with `$TORCHPROBE_RUNNER` when set.
    pub fn apply_env(&mut self) {
        if let Ok(r) = std::env::var(RUNNER_ENV) {
            if !r.trim().is_empty() {
                self.backend.runner = r;
            }
        }
    }

    /// Seed generation parameters for one case.
    pub fn seed_spec(&self, rng_seed: u64) -> SeedSpec {
        SeedSpec { rng_seed, num_ops: self.num_ops, max_rank: self.max_rank, max_extent: self.max_extent, ..SeedSpec::default() }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.into()));
        if self.workers == 0 || self.max_iters == 0 {
            return bad("workers and max_iters must be positive");
        }
        if !(self.wall_budget_s > 0.0 && self.wall_budget_s.is_finite()) {
            return bad("wall_budget_s must be positive");
        }
        if !self.weights.is_valid() {
            return bad("mutation weights must be non-negative with a positive sum");
        }
        self.seed_spec(0).validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.backend.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn defaults_are_valid() {
        let c = Config::default();
        c.validate().unwrap();
        assert_eq!((c.num_ops, c.k), (20, 3));
        assert_eq!((c.backend.compile_timeout_s, c.backend.run_timeout_s), (120.0, 60.0));
    }

    #[test]
    fn partial_documents_fill_defaults() {
        let c = Config::from_json(r#"{"master_seed": 9, "backend": {"runner": "python3 r.py", "compile_timeout_s": 5, "run_timeout_s": 5, "tolerances": {"f32": {"rtol": 0.1, "atol": 0.1}, "f64": {"rtol": 0, "atol": 0}}}}"#).unwrap();
        assert_eq!(c.master_seed, 9);
        assert_eq!(c.backend.runner, "python3 r.py");
        assert_eq!(c.k, 3);
        assert!(Config::from_json(r#"{"mystery": 1}"#).is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(Config { workers: 0, ..Default::default() }.validate().is_err());
        assert!(Config { num_ops: 0, ..Default::default() }.validate().is_err());
        assert!(Config { wall_budget_s: -1.0, ..Default::default() }.validate().is_err());
    }

    proptest! {
        #[test]
        fn json_round_trip_is_lossless(
            seed in any::<u64>(), ops in 1usize..64, k in 0usize..8, workers in 1usize..16,
            iters in 1u64..1_000_000, budget in 0.001f64..1e6, w in prop::array::uniform4(0.0f64..10.0),
            ct in 0.001f64..1e4, rt in 0.001f64..1e4, rtol in 0.0f64..1.0,
        ) {
            let mut c = Config {
                master_seed: seed, num_ops: ops, k, workers, max_iters: iters, wall_budget_s: budget,
                corpus_dir: PathBuf::from(format!("c{seed}")), ..Default::default()
            };
            c.weights = MutationWeights { operator_resolution: w[0], mutate_then_recover: w[1], functionalize: w[2], tcb: w[3] };
            c.backend.compile_timeout_s = ct;
            c.backend.run_timeout_s = rt;
            c.backend.tolerances.f32.rtol = rtol;
            c.backend.env_allowlist = Some(vec!["PATH".into()]);
            prop_assert_eq!(Config::from_json(&c.to_json()).unwrap(), c);
        }
    }
}
