//! Move a span of statements into a nested function. The definition is
//! hoisted, so the closure may be defined before the names it captures.

use dynfuzz::graphgen::{generate_seed, SeedSpec};
use dynfuzz::ir::{emit, EmitStyle};
use dynfuzz::mutators::{apply, MutationKind};
use dynfuzz::profiler::{evaluate, outputs_bit_eq};

fn main() {
    let seed = generate_seed(&SeedSpec { num_ops: 6, max_extent: 4, ..SeedSpec::with_seed(12) }).unwrap();
    let mut prog = seed.program.clone();
    // Nest twice to show a function defined inside another.
    for rng_seed in [5, 6] {
        let (next, rec) = apply(MutationKind::Functionalize, &prog, &seed.inputs, rng_seed).unwrap();
        println!("{:?}", rec.detail);
        prog = next;
    }
    println!("{}", emit(&prog, EmitStyle::FunctionOnly).unwrap());
    let want = evaluate(&seed.program, &seed.inputs).unwrap();
    assert!(outputs_bit_eq(&evaluate(&prog, &seed.inputs).unwrap(), &want));
}
