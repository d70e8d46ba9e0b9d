//! Shared inputs for the criterion benchmarks.

use gbsed::scenarios::{generate, ScenarioSpec};
use gbsed::{GraphSequence, RelationOntology, RelationParams};

/// A small default-parameter corpus with a fixed seed.
pub fn corpus(num_sequences: usize) -> (RelationOntology, Vec<GraphSequence>) {
    let o = RelationOntology::default_fixture();
    let spec = ScenarioSpec {
        num_sequences,
        ..Default::default()
    };
    let seqs = generate(&spec, &o, &RelationParams::default()).expect("default spec is feasible");
    (o, seqs)
}
