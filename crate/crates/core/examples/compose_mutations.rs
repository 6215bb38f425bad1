//! Stack weighted mutations on a seed, then rebuild the same program from
//! the mutation records alone.

use dynfuzz::graphgen::{generate_seed, SeedSpec};
use dynfuzz::ir::{emit, EmitStyle};
use dynfuzz::mutators::{compose, replay, MutationWeights};
use dynfuzz::profiler::{evaluate, outputs_bit_eq};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let k = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(4);
    let seed = generate_seed(&SeedSpec { num_ops: 8, max_extent: 4, ..SeedSpec::with_seed(2) }).unwrap();
    let out = compose(&seed.program, &seed.inputs, k, &MutationWeights::default(), &mut ChaCha8Rng::seed_from_u64(77));
    println!("{} applied, {} skipped, {} rejected", out.records.len(), out.skipped, out.rejected);
    for r in &out.records {
        println!("  {:?} (seed {})", r.kind, r.rng_seed);
    }
    println!("{}", emit(&out.program, EmitStyle::Module).unwrap());

    assert_eq!(replay(&seed.program, &seed.inputs, &out.records).unwrap(), out.program);
    assert!(outputs_bit_eq(&evaluate(&out.program, &seed.inputs).unwrap(), &evaluate(&seed.program, &seed.inputs).unwrap()));
    println!("replayed and verified");
}
