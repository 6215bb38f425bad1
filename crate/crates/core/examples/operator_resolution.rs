//! Unroll one elementwise operator into per-slice work and check the result
//! is bit-identical to the original.

use dynfuzz::graphgen::{generate_seed, SeedSpec};
use dynfuzz::ir::{emit, EmitStyle};
use dynfuzz::mutators::{apply, MutationKind};
use dynfuzz::profiler::{evaluate, outputs_bit_eq};

fn main() {
    let seed = generate_seed(&SeedSpec { num_ops: 4, max_rank: 2, max_extent: 3, ..SeedSpec::with_seed(4) }).unwrap();
    println!("{}", emit(&seed.program, EmitStyle::FunctionOnly).unwrap());

    // Two draws usually show both unroll forms.
    for rng_seed in [1, 2] {
        let (prog, rec) = apply(MutationKind::OperatorResolution, &seed.program, &seed.inputs, rng_seed).expect("has an elementwise op");
        println!("{:?}", rec.detail);
        println!("{}", emit(&prog, EmitStyle::FunctionOnly).unwrap());
        let same = outputs_bit_eq(&evaluate(&prog, &seed.inputs).unwrap(), &evaluate(&seed.program, &seed.inputs).unwrap());
        println!("bit-identical: {same}\n");
        assert!(same);
    }
}
