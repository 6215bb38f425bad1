//! Build a random seed graph, lower it to a straight-line program and print
//! the Python it emits along with the sampled inputs.

use dynfuzz::graphgen::{generate_seed, SeedSpec};
use dynfuzz::ir::{emit, EmitStyle};
use dynfuzz::profiler::evaluate_checked;

fn main() {
    let seed_arg = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let spec = SeedSpec { num_ops: 8, max_rank: 3, max_extent: 4, ..SeedSpec::with_seed(seed_arg) };
    let seed = generate_seed(&spec).expect("spec is valid");

    println!("# {} nodes, {} placeholders", seed.graph.nodes.len(), seed.program.params.len());
    print!("{}", emit(&seed.program, EmitStyle::Module).expect("seed programs emit"));
    for (name, t) in &seed.inputs {
        println!("# {name}: {} {}", t.dtype(), t.shape());
    }
    let outs = evaluate_checked(&seed.program, &seed.inputs).expect("seed inputs are in range");
    for (name, t) in seed.program.returns.iter().zip(&outs) {
        println!("# -> {name}: {} {}", t.dtype(), t.shape());
    }
}
