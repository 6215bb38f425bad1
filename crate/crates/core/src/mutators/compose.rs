//! Mutation scheduling and replay.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{apply, MutationError, MutationKind, MutationRecord};
use crate::ir::Program;
use crate::tensor::TensorValue;

/// Relative draw weights per mutation kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MutationWeights {
    pub operator_resolution: f64,
    pub mutate_then_recover: f64,
    pub functionalize: f64,
    pub tcb: f64,
}

impl Default for MutationWeights {
    fn default() -> Self {
        MutationWeights { operator_resolution: 1.0, mutate_then_recover: 1.0, functionalize: 1.0, tcb: 1.0 }
    }
}

impl MutationWeights {
    pub fn weight(&self, kind: MutationKind) -> f64 {
        match kind {
            MutationKind::OperatorResolution => self.operator_resolution,
            MutationKind::MutateThenRecover => self.mutate_then_recover,
            MutationKind::Functionalize => self.functionalize,
            MutationKind::Tcb => self.tcb,
        }
    }

    pub fn is_valid(&self) -> bool {
        let ws = MutationKind::ALL.map(|k| self.weight(k));
        ws.iter().all(|w| *w >= 0.0 && w.is_finite()) && ws.iter().sum::<f64>() > 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComposeOutcome {
    pub program: Program,
    pub records: Vec<MutationRecord>,
    /// Draws with no applicable site.
    pub skipped: usize,
    /// Draws whose result failed validation or reference evaluation; each is
    /// a mutator defect and is logged.
    pub rejected: usize,
}

/// Apply `k` weighted mutation draws in sequence. Inapplicable draws are
/// skipped and counted.
pub fn compose(
    prog: &Program,
    inputs: &BTreeMap<String, TensorValue>,
    k: usize,
    weights: &MutationWeights,
    rng: &mut impl Rng,
) -> ComposeOutcome {
    let mut out = ComposeOutcome { program: prog.clone(), records: Vec::new(), skipped: 0, rejected: 0 };
    for _ in 0..k {
        let kind = *MutationKind::ALL.choose_weighted(rng, |k| weights.weight(*k)).expect("weights validated by caller");
        let seed: u64 = rng.gen();
        match apply(kind, &out.program, inputs, seed) {
            Ok((p, rec)) => {
                out.program = p;
                out.records.push(rec);
            }
            Err(MutationError::NoApplicableSite(_) | MutationError::SynthesisFailed(_)) => out.skipped += 1,
            Err(e) => {
                log::error!("{kind:?} mutation (seed {seed}) failed: {e}");
                out.rejected += 1;
            }
        }
    }
    out
}

/// Re-apply recorded mutations to the seed program, checking each step
/// reproduces its recorded detail.
pub fn replay(prog: &Program, inputs: &BTreeMap<String, TensorValue>, records: &[MutationRecord]) -> Result<Program, MutationError> {
    let mut cur = prog.clone();
    for (index, r) in records.iter().enumerate() {
        let (next, again) = apply(r.kind, &cur, inputs, r.rng_seed)?;
        if again.detail != r.detail {
            return Err(MutationError::ReplayDiverged { index });
        }
        cur = next;
    }
    Ok(cur)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphgen::{generate_seed, SeedSpec};
    use crate::profiler::{evaluate, outputs_bit_eq};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_draws_is_identity() {
        let seed = generate_seed(&SeedSpec::with_seed(1)).unwrap();
        let out = compose(&seed.program, &seed.inputs, 0, &MutationWeights::default(), &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(out.program, seed.program);
        assert!(out.records.is_empty());
    }

    #[test]
    fn five_draws_preserve_outputs_and_replay() {
        for s in 0..40 {
            let seed = generate_seed(&SeedSpec::with_seed(s)).unwrap();
            let want = evaluate(&seed.program, &seed.inputs).unwrap();
            let out = compose(&seed.program, &seed.inputs, 5, &MutationWeights::default(), &mut ChaCha8Rng::seed_from_u64(s));
            assert_eq!(out.rejected, 0);
            assert!(outputs_bit_eq(&evaluate(&out.program, &seed.inputs).unwrap(), &want), "seed {s}");
            assert_eq!(replay(&seed.program, &seed.inputs, &out.records).unwrap(), out.program);
        }
    }

    #[test]
    fn weights_select_kinds() {
        let only_tcb = MutationWeights { operator_resolution: 0.0, mutate_then_recover: 0.0, functionalize: 0.0, tcb: 1.0 };
        let seed = generate_seed(&SeedSpec::with_seed(3)).unwrap();
        let out = compose(&seed.program, &seed.inputs, 4, &only_tcb, &mut ChaCha8Rng::seed_from_u64(9));
        assert!(out.records.iter().all(|r| r.kind == MutationKind::Tcb));
        assert!(!MutationWeights { tcb: 0.0, ..only_tcb }.is_valid());
    }
}
