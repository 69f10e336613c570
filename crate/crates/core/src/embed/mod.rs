//! Encoder port, cosine retrieval index, and ontological grounding.

pub mod encoder;
pub mod index;
pub mod ontology;

pub use encoder::{Encoder, HashedBowEncoder};
pub use index::{cosine, VectorIndex};
pub use ontology::{build_ontology, Ontology, OntologyCluster};

use crate::memory::procedure::Procedure;

/// Canonical embedding input: goal, sorted preconditions, sorted
/// postconditions, `|`-separated. The action schema is deliberately absent
/// so procedures differing only in actions embed identically.
pub fn embedding_text(
    goal: &str,
    preconditions: &std::collections::BTreeSet<crate::memory::pattern::Pattern>,
    postconditions: &std::collections::BTreeSet<crate::memory::pattern::Pattern>,
) -> String {
    let pre: Vec<String> = preconditions.iter().map(|p| p.display()).collect();
    let post: Vec<String> = postconditions.iter().map(|p| p.display()).collect();
    format!("{goal} | {} | {}", pre.join(" "), post.join(" "))
}

/// Embeds a procedure from its goal and condition sets.
pub fn embed_procedure(p: &Procedure, enc: &dyn Encoder) -> Vec<f64> {
    enc.encode(&embedding_text(&p.goal, &p.preconditions, &p.postconditions))
}

/// Embeds a meta-procedure from its goal and entry preconditions.
pub fn embed_meta(m: &crate::memory::meta::MetaProcedure, enc: &dyn Encoder) -> Vec<f64> {
    let pre: Vec<String> = m.meta_pre.iter().map(|p| p.display()).collect();
    enc.encode(&format!("{} | {}", m.meta_goal, pre.join(" ")))
}
