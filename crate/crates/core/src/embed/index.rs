use crate::error::{EngineError, Result};

/// Cosine similarity. Errors on zero vectors or mismatched dimensions.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(EngineError::DimensionMismatch(u.len(), v.len()));
    }
    let (mut dot, mut nu, mut nv) = (0.0, 0.0, 0.0);
    for (x, y) in u.iter().zip(v) {
        dot += x * y;
        nu += x * x;
        nv += y * y;
    }
    if nu == 0.0 || nv == 0.0 {
        return Err(EngineError::ZeroVector);
    }
    Ok((dot / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0))
}

/// Entries beyond this size switch the index to the partitioned backend.
const PARTITION_THRESHOLD: usize = 5_000;

#[derive(Debug, Clone)]
struct Bucket {
    centroid: Vec<f64>,
    /// Max angle (radians) from the centroid to any member.
    radius: f64,
    members: Vec<usize>,
}

/// Top-k cosine retrieval over (id, vector) pairs.
///
/// Below `PARTITION_THRESHOLD` entries this is an exact linear scan. Above
/// it, entries are bucketed around centroids and buckets are pruned with the
/// spherical triangle inequality, so results stay exact while most buckets
/// are skipped.
#[derive(Debug, Clone, Default)]
pub struct VectorIndex {
    ids: Vec<String>,
    vectors: Vec<Vec<f64>>,
    buckets: Option<Vec<Bucket>>,
}

impl VectorIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn insert(&mut self, id: impl Into<String>, vector: Vec<f64>) {
        self.ids.push(id.into());
        self.vectors.push(vector);
        self.buckets = None; // rebuilt lazily
    }

    /// Rebuilds from scratch; used after bulk mutation of the library.
    pub fn rebuild<'a>(&mut self, entries: impl Iterator<Item = (&'a str, &'a [f64])>) {
        self.ids.clear();
        self.vectors.clear();
        self.buckets = None;
        for (id, v) in entries {
            self.ids.push(id.to_string());
            self.vectors.push(v.to_vec());
        }
    }

    fn ensure_buckets(&mut self) {
        if self.buckets.is_some() || self.len() < PARTITION_THRESHOLD {
            return;
        }
        let n = self.len();
        let k = (n as f64).sqrt().ceil() as usize;
        // Deterministic seeding: evenly spaced members as initial centroids.
        let mut centroids: Vec<Vec<f64>> =
            (0..k).map(|i| self.vectors[i * n / k].clone()).collect();
        let mut assignment = vec![0usize; n];
        for _ in 0..4 {
            for (i, v) in self.vectors.iter().enumerate() {
                let mut best = (f64::NEG_INFINITY, 0);
                for (b, c) in centroids.iter().enumerate() {
                    let d: f64 = v.iter().zip(c).map(|(x, y)| x * y).sum();
                    if d > best.0 {
                        best = (d, b);
                    }
                }
                assignment[i] = best.1;
            }
            for (b, c) in centroids.iter_mut().enumerate() {
                let mut sum = vec![0.0; c.len()];
                let mut count = 0usize;
                for (i, v) in self.vectors.iter().enumerate() {
                    if assignment[i] == b {
                        for (s, x) in sum.iter_mut().zip(v) {
                            *s += x;
                        }
                        count += 1;
                    }
                }
                if count > 0 {
                    let norm: f64 = sum.iter().map(|x| x * x).sum::<f64>().sqrt();
                    if norm > 0.0 {
                        *c = sum.into_iter().map(|x| x / norm).collect();
                    }
                }
            }
        }
        let mut buckets: Vec<Bucket> = centroids
            .into_iter()
            .map(|centroid| Bucket {
                centroid,
                radius: 0.0,
                members: Vec::new(),
            })
            .collect();
        for (i, v) in self.vectors.iter().enumerate() {
            let b = &mut buckets[assignment[i]];
            let cos: f64 = v
                .iter()
                .zip(&b.centroid)
                .map(|(x, y)| x * y)
                .sum::<f64>()
                .clamp(-1.0, 1.0);
            b.radius = b.radius.max(cos.acos());
            b.members.push(i);
        }
        buckets.retain(|b| !b.members.is_empty());
        self.buckets = Some(buckets);
    }

    /// Returns min(k, size) ids ordered by non-increasing cosine to `query`,
    /// ties broken by lexicographic id.
    pub fn query_topk(&mut self, query: &[f64], k: usize) -> Result<Vec<String>> {
        if self.is_empty() || k == 0 {
            return Ok(Vec::new());
        }
        self.ensure_buckets();
        let mut scored: Vec<(f64, &str)> = Vec::new();
        match &self.buckets {
            None => {
                for (id, v) in self.ids.iter().zip(&self.vectors) {
                    scored.push((cosine(query, v)?, id));
                }
            }
            Some(buckets) => {
                let qn: f64 = query.iter().map(|x| x * x).sum::<f64>().sqrt();
                if qn == 0.0 {
                    return Err(EngineError::ZeroVector);
                }
                // Bound the best achievable cosine per bucket, visit in
                // decreasing bound order, stop once the bound cannot beat
                // the current k-th best.
                let mut order: Vec<(f64, usize)> = buckets
                    .iter()
                    .enumerate()
                    .map(|(i, b)| {
                        let cq: f64 = query
                            .iter()
                            .zip(&b.centroid)
                            .map(|(x, y)| x * y)
                            .sum::<f64>()
                            / qn;
                        let theta = cq.clamp(-1.0, 1.0).acos();
                        let bound = (theta - b.radius).max(0.0).cos();
                        (bound, i)
                    })
                    .collect();
                order.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
                for (bound, bi) in order {
                    if scored.len() >= k {
                        let mut kth: Vec<f64> = scored.iter().map(|s| s.0).collect();
                        kth.sort_by(|a, b| b.partial_cmp(a).unwrap());
                        if bound < kth[k - 1] - 1e-12 {
                            break;
                        }
                    }
                    for &mi in &buckets[bi].members {
                        scored.push((cosine(query, &self.vectors[mi])?, &self.ids[mi]));
                    }
                }
            }
        }
        scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then_with(|| a.1.cmp(b.1)));
        scored.truncate(k);
        Ok(scored.into_iter().map(|(_, id)| id.to_string()).collect())
    }
}
