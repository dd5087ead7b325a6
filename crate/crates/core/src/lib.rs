//! Taint-guided branch predicate synthesis for hybrid fuzzing.

pub mod bench;
pub mod bits;
pub mod branch;
pub mod flip;
pub mod fuzz;
pub mod gen;
pub mod ir;
pub mod mutate;
pub mod solver;
pub mod synth;
pub mod taint;
pub mod vm;
