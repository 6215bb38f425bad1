//! Synthesize conditions that hold on the profiled values and wrap a span of
//! statements in them.

use dynfuzz::graphgen::{generate_seed, SeedSpec};
use dynfuzz::ir::{emit, emit_condition, EmitStyle};
use dynfuzz::mutators::{apply, synthesize_condition, MutationKind};
use dynfuzz::profiler::{eval_condition, evaluate, outputs_bit_eq, trace};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let seed = generate_seed(&SeedSpec { num_ops: 5, max_extent: 4, ..SeedSpec::with_seed(21) }).unwrap();
    let envs = trace(&seed.program, &seed.inputs).unwrap();
    let env = &envs[envs.len() / 2];
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..6 {
        let c = synthesize_condition(env, &mut rng).expect("env has tensors");
        let holds = eval_condition(&c, &|n| env.get(n).cloned()).unwrap();
        println!("{:<40} {holds}", emit_condition(&c));
        assert!(holds);
    }

    let (prog, _) = apply(MutationKind::Tcb, &seed.program, &seed.inputs, 9).unwrap();
    println!("\n{}", emit(&prog, EmitStyle::FunctionOnly).unwrap());
    assert!(outputs_bit_eq(&evaluate(&prog, &seed.inputs).unwrap(), &evaluate(&seed.program, &seed.inputs).unwrap()));
}
