//! Clobber one element of a live tensor and restore it before anyone reads
//! it again.

use dynfuzz::graphgen::{generate_seed, SeedSpec};
use dynfuzz::ir::{emit, EmitStyle};
use dynfuzz::mutators::{apply, MutationDetail, MutationKind};
use dynfuzz::profiler::{evaluate, outputs_bit_eq};

fn main() {
    let seed = generate_seed(&SeedSpec { num_ops: 5, max_extent: 4, ..SeedSpec::with_seed(8) }).unwrap();
    let (prog, rec) = apply(MutationKind::MutateThenRecover, &seed.program, &seed.inputs, 3).unwrap();
    if let MutationDetail::MutateThenRecover { tensor, pos, value, store_at, restore_at, .. } = &rec.detail {
        println!("{tensor}{pos:?} <- {value:?}, live between statements {store_at} and {restore_at}");
    }
    println!("{}", emit(&prog, EmitStyle::FunctionOnly).unwrap());

    let want = evaluate(&seed.program, &seed.inputs).unwrap();
    assert!(outputs_bit_eq(&evaluate(&prog, &seed.inputs).unwrap(), &want));
    println!("outputs unchanged");
}
