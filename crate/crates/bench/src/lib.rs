//! Benchmark fixtures shared by the criterion benches.

use vibim::simgen::schema;
use vibim::{encode, generate, GroupedDesign, Scenario, SimDesignSpec};

/// Example 1 Model I design and response.
pub fn ex1_instance(n: usize, p: usize, seed: u64) -> (GroupedDesign, Vec<f64>) {
    let data = generate(&SimDesignSpec::new(Scenario::Ex1I, n, p, seed)).expect("valid simulation spec");
    (encode(&schema(p), &data.raw).expect("simulation schema encodes"), data.response)
}
