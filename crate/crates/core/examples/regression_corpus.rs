//! Emit the built-in regression programs, each next to the seed it must
//! agree with.

use dynfuzz::ir::{emit, EmitStyle};
use dynfuzz::profiler::{evaluate_checked, outputs_bit_eq};
use dynfuzz::regression::corpus;

fn main() {
    for c in corpus() {
        println!("## {}: {}\n", c.name, c.description);
        print!("{}", emit(&c.program, EmitStyle::FunctionOnly).unwrap());
        let same = outputs_bit_eq(&evaluate_checked(&c.program, &c.inputs).unwrap(), &evaluate_checked(&c.seed, &c.inputs).unwrap());
        println!("\n# agrees with seed: {same}\n");
    }
}
