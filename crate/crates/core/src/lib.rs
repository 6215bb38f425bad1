//! Mutation-based differential fuzzing for dynamic deep-learning compilers.
//!
//! Seed programs are generated as straight-line tensor code, rewritten by
//! numerics-preserving mutations, emitted as Python, and executed eagerly and
//! under a compiler by an external runner process. Disagreements, crashes and
//! hangs are classified, deduplicated and reduced.

pub mod archive;
pub mod config;
pub mod graphgen;
pub mod harness;
pub mod ir;
pub mod mutators;
pub mod opset;
pub mod profiler;
pub mod regression;
pub mod runner;
pub mod tensor;
