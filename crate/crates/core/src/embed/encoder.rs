use crate::text::tokenize;
use std::collections::BTreeMap;

/// Text-to-vector port. Implementations must be deterministic and return
/// unit-norm vectors; the engine treats the encoder as a black box.
pub trait Encoder: Send + Sync {
    fn dim(&self) -> usize;
    fn encode(&self, text: &str) -> Vec<f64>;
}

/// FNV-1a, used for signed feature hashing. Stable across platforms and
/// releases, unlike `DefaultHasher`.
pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Deterministic hashed bag-of-words encoder.
///
/// Each token hashes to two of `dim` buckets, each with a hash-derived sign;
/// the result is L2-normalized. Shared tokens therefore raise cosine
/// similarity, which is all downstream retrieval needs at desk scale. Two
/// coordinates per token keep distinct-word collisions (cosine ±1 by
/// accident) rare enough that ontology clustering stays trustworthy at small
/// dimensions. An optional normalizer maps synonyms onto a shared token
/// before hashing, standing in for a real sentence encoder's semantic
/// smoothing.
pub struct HashedBowEncoder {
    dim: usize,
    synonyms: BTreeMap<String, String>,
}

impl HashedBowEncoder {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            synonyms: BTreeMap::new(),
        }
    }

    /// Adds synonym -> canonical rewrites applied before hashing.
    pub fn with_synonyms<I, S>(mut self, pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, S)>,
        S: Into<String>,
    {
        for (from, to) in pairs {
            self.synonyms.insert(from.into(), to.into());
        }
        self
    }

    fn normalize<'a>(&'a self, token: &'a str) -> &'a str {
        self.synonyms.get(token).map(String::as_str).unwrap_or(token)
    }
}

impl Encoder for HashedBowEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        let mut bump = |key: &str, weight: f64| {
            let h1 = fnv1a(key.as_bytes());
            let h2 = fnv1a(&h1.to_le_bytes());
            for h in [h1, h2] {
                let bucket = (h % self.dim as u64) as usize;
                let sign = if (h >> 63) & 1 == 0 { weight } else { -weight };
                v[bucket] += sign;
            }
        };
        let tokens: Vec<String> = tokenize(text)
            .iter()
            .map(|t| self.normalize(t).to_string())
            .collect();
        for t in &tokens {
            bump(t, 1.0);
        }
        // Adjacent-pair features separate texts that share vocabulary but
        // not structure, e.g. differing goal templates.
        for w in tokens.windows(2) {
            bump(&format!("{} {}", w[0], w[1]), 1.0);
        }
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            // Empty or fully cancelled input still needs a direction.
            v[0] = 1.0;
        } else {
            for x in v.iter_mut() {
                *x /= norm;
            }
        }
        v
    }
}
