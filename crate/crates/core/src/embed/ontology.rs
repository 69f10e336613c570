use super::encoder::Encoder;
use super::index::cosine;
use crate::text::tokenize;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// A semantic category: a representative word plus the words it absorbs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OntologyCluster {
    pub representative: String,
    pub members: BTreeSet<String>,
}

/// The vocabulary clustering used for cross-context grounding.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Ontology {
    pub clusters: Vec<OntologyCluster>,
}

impl Ontology {
    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    /// Representative of the cluster containing `word`, if any.
    pub fn representative(&self, word: &str) -> Option<&str> {
        self.clusters
            .iter()
            .find(|c| c.members.contains(word))
            .map(|c| c.representative.as_str())
    }

    /// The `cat:<rep>` tag for `word`, if it belongs to a cluster.
    pub fn tag(&self, word: &str) -> Option<String> {
        self.representative(word).map(|r| format!("cat:{r}"))
    }

    /// Appends a `cat:<rep>` tag for every clustered word in `obs`, keeping
    /// the original text. Idempotent: tags contain `:` and are never
    /// vocabulary words.
    pub fn canonicalize(&self, obs: &str) -> String {
        if self.is_empty() {
            return obs.to_string();
        }
        let mut tags: Vec<String> = Vec::new();
        for token in tokenize(obs) {
            if token.contains(':') {
                continue;
            }
            if let Some(tag) = self.tag(&token) {
                if !tags.contains(&tag) && !obs.contains(&tag) {
                    tags.push(tag);
                }
            }
        }
        if tags.is_empty() {
            obs.to_string()
        } else {
            format!("{obs} {}", tags.join(" "))
        }
    }
}

/// Extracts the `k_vocab` most frequent words from `corpus` and greedily
/// clusters them: words are processed by descending frequency and attach to
/// the first cluster whose representative exceeds `theta_sim`, else open a
/// new cluster. Every extracted word lands in exactly one cluster.
pub fn build_ontology(
    corpus: &[String],
    k_vocab: usize,
    theta_sim: f64,
    enc: &dyn Encoder,
) -> Ontology {
    let mut freq: BTreeMap<String, usize> = BTreeMap::new();
    for text in corpus {
        for token in tokenize(text) {
            if token.contains(':') || token.starts_with('<') {
                continue;
            }
            *freq.entry(token).or_default() += 1;
        }
    }
    let mut vocab: Vec<(String, usize)> = freq.into_iter().collect();
    // Descending frequency, alphabetical within ties for determinism.
    vocab.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    vocab.truncate(k_vocab);

    let mut clusters: Vec<OntologyCluster> = Vec::new();
    let mut rep_vectors: Vec<Vec<f64>> = Vec::new();
    for (word, _) in vocab {
        let v = enc.encode(&word);
        let mut placed = false;
        for (c, rv) in clusters.iter_mut().zip(&rep_vectors) {
            if cosine(&v, rv).map(|s| s > theta_sim).unwrap_or(false) {
                c.members.insert(word.clone());
                placed = true;
                break;
            }
        }
        if !placed {
            clusters.push(OntologyCluster {
                representative: word.clone(),
                members: BTreeSet::from([word]),
            });
            rep_vectors.push(v);
        }
    }
    // Singleton clusters carry no grounding signal; drop them so that
    // canonicalize only tags words with at least one alternative.
    clusters.retain(|c| c.members.len() > 1);
    Ontology { clusters }
}
