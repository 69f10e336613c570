//! Contrastive refinement: discriminator extraction from paired
//! success/failure contexts, schema edits, variant specialization, and the
//! statistical gates.

use crate::embed::{cosine, Encoder};
use crate::error::{EngineError, Result};
use crate::memory::pattern::Pattern;
use crate::memory::posterior::BetaPosterior;
use crate::memory::procedure::Procedure;
use crate::text::tokenize;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta as BetaDist, Distribution};
use statrs::distribution::{ContinuousCDF, Normal};
use std::collections::{BTreeMap, BTreeSet};

/// One ordered edit to an action schema.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemaEdit {
    /// Insert `step` so that it ends up at `index`.
    Insert { index: usize, step: String },
    Remove { index: usize },
    Reorder { from: usize, to: usize },
}

/// Discriminating differences between success and failure contexts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Discriminators {
    pub pre_plus: BTreeSet<Pattern>,
    pub pre_minus: BTreeSet<Pattern>,
    pub action_delta: Vec<SchemaEdit>,
    pub post_delta: BTreeSet<Pattern>,
}

impl Discriminators {
    pub fn is_empty(&self) -> bool {
        self.pre_plus.is_empty()
            && self.pre_minus.is_empty()
            && self.action_delta.is_empty()
            && self.post_delta.is_empty()
    }
}

/// Fixed-count refinement gate: both context sets at their minimums.
pub fn refine_trigger(p: &Procedure, n_min_s: usize, n_min_f: usize) -> bool {
    p.successes.len() >= n_min_s && p.failures.len() >= n_min_f
}

/// Token-frequency differencing over two context sets. A token lands in the
/// positive set when it appears in at least `hi` of successes and at most
/// `lo` of failures; the reverse for the negative set.
pub fn frequency_discriminators(
    successes: &[String],
    failures: &[String],
    hi: f64,
    lo: f64,
) -> (BTreeSet<Pattern>, BTreeSet<Pattern>) {
    fn token_freq(contexts: &[String]) -> BTreeMap<String, f64> {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for ctx in contexts {
            let tokens: BTreeSet<String> = tokenize(ctx).into_iter().collect();
            for t in tokens {
                *counts.entry(t).or_default() += 1;
            }
        }
        let n = contexts.len().max(1) as f64;
        counts.into_iter().map(|(t, c)| (t, c as f64 / n)).collect()
    }
    let fs = token_freq(successes);
    let ff = token_freq(failures);
    let freq = |m: &BTreeMap<String, f64>, t: &str| m.get(t).copied().unwrap_or(0.0);
    let mut plus = BTreeSet::new();
    let mut minus = BTreeSet::new();
    for t in fs.keys().chain(ff.keys()) {
        let (s, f) = (freq(&fs, t), freq(&ff, t));
        if s >= hi && f <= lo {
            plus.insert(Pattern::positive(t));
        } else if f >= hi && s <= lo {
            minus.insert(Pattern::positive(t));
        }
    }
    (plus, minus)
}

/// Longest-common-subsequence diff between two step lists, expressed as an
/// ordered edit list transforming `from` into `to`.
pub fn lcs_edits(from: &[String], to: &[String]) -> Vec<SchemaEdit> {
    let (n, m) = (from.len(), to.len());
    let mut lcs = vec![vec![0usize; m + 1]; n + 1];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            lcs[i][j] = if from[i] == to[j] {
                lcs[i + 1][j + 1] + 1
            } else {
                lcs[i + 1][j].max(lcs[i][j + 1])
            };
        }
    }
    let mut edits = Vec::new();
    let (mut i, mut j) = (0usize, 0usize);
    // `offset` tracks how removals shift indices of the evolving list.
    let mut out_index = 0usize;
    while i < n || j < m {
        if i < n && j < m && from[i] == to[j] {
            i += 1;
            j += 1;
            out_index += 1;
        } else if j < m && (i == n || lcs[i][j + 1] >= lcs[i + 1][j]) {
            edits.push(SchemaEdit::Insert {
                index: out_index,
                step: to[j].clone(),
            });
            out_index += 1;
            j += 1;
        } else {
            edits.push(SchemaEdit::Remove { index: out_index });
            i += 1;
        }
    }
    edits
}

/// Applies discriminators: preconditions gain the positive set and the
/// negations of the negative set; the schema takes the edit list in order;
/// postconditions gain the post set. The posterior and context sets are
/// untouched.
pub fn apply_refinement(p: &Procedure, d: &Discriminators) -> Result<Procedure> {
    let mut steps = p.schema.steps.clone();
    for edit in &d.action_delta {
        match edit {
            SchemaEdit::Insert { index, step } => {
                if *index > steps.len() {
                    return Err(EngineError::RefinementRejected(format!(
                        "insert index {index} out of range for {} steps",
                        steps.len()
                    )));
                }
                steps.insert(*index, step.clone());
            }
            SchemaEdit::Remove { index } => {
                if *index >= steps.len() {
                    return Err(EngineError::RefinementRejected(format!(
                        "remove index {index} out of range for {} steps",
                        steps.len()
                    )));
                }
                steps.remove(*index);
            }
            SchemaEdit::Reorder { from, to } => {
                if *from >= steps.len() || *to >= steps.len() {
                    return Err(EngineError::RefinementRejected(format!(
                        "reorder {from}->{to} out of range for {} steps",
                        steps.len()
                    )));
                }
                let step = steps.remove(*from);
                steps.insert(*to, step);
            }
        }
    }
    let mut refined = p.clone();
    refined.schema.steps = steps;
    for pat in &d.pre_plus {
        refined.preconditions.insert(pat.clone());
    }
    for pat in &d.pre_minus {
        refined.preconditions.insert(pat.negate());
    }
    for pat in &d.post_delta {
        refined.postconditions.insert(pat.clone());
    }
    Ok(refined)
}

/// Splits a procedure into per-mode variants with proportionally inherited
/// evidence, floored at Beta(1,1). Mode-discriminating tokens become extra
/// preconditions. Returns the variants; the caller retires the parent.
/// A degenerate partition (fewer than 2 modes) returns the procedure as-is.
pub fn specialize(p: &Procedure, modes: &[Vec<String>]) -> Vec<Procedure> {
    if modes.len() < 2 {
        return vec![p.clone()];
    }
    let total: usize = modes.iter().map(Vec::len).sum();
    if total == 0 {
        return vec![p.clone()];
    }
    let mut variants = Vec::new();
    for (k, mode) in modes.iter().enumerate() {
        let share = mode.len() as f64 / total as f64;
        let mut v = p.clone();
        v.id = format!("{}_v{k}", p.id);
        v.posterior = BetaPosterior::new(
            (p.posterior.alpha * share).max(1.0),
            (p.posterior.beta * share).max(1.0),
        );
        v.prior_mass = v.posterior.total();
        v.usage_count = 0;
        v.successes = mode.clone();
        v.failures = Vec::new();
        v.retired = false;
        v.specialized_into = Vec::new();
        // Tokens frequent in this mode and absent from the others tighten
        // the variant's preconditions.
        let others: Vec<String> = modes
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != k)
            .flat_map(|(_, m)| m.iter().cloned())
            .collect();
        let (plus, _) = frequency_discriminators(mode, &others, 0.8, 0.2);
        for pat in plus {
            v.preconditions.insert(pat);
        }
        variants.push(v);
    }
    variants
}

/// Detects distinct execution modes in success contexts by 2-means over
/// their embeddings; returns a partition only when the silhouette score
/// clears `silhouette_min`.
pub fn detect_modes(
    contexts: &[String],
    enc: &dyn Encoder,
    silhouette_min: f64,
) -> Option<[Vec<String>; 2]> {
    if contexts.len() < 4 {
        return None;
    }
    let vectors: Vec<Vec<f64>> = contexts.iter().map(|c| enc.encode(c)).collect();
    // Seed with the most dissimilar pair.
    let mut seeds = (0, 1);
    let mut worst = f64::INFINITY;
    for i in 0..vectors.len() {
        for j in (i + 1)..vectors.len() {
            let s = cosine(&vectors[i], &vectors[j]).unwrap_or(1.0);
            if s < worst {
                worst = s;
                seeds = (i, j);
            }
        }
    }
    let mut centroids = [vectors[seeds.0].clone(), vectors[seeds.1].clone()];
    let mut assignment = vec![0usize; vectors.len()];
    for _ in 0..8 {
        for (i, v) in vectors.iter().enumerate() {
            let s0 = cosine(v, &centroids[0]).unwrap_or(0.0);
            let s1 = cosine(v, &centroids[1]).unwrap_or(0.0);
            assignment[i] = if s1 > s0 { 1 } else { 0 };
        }
        for c in 0..2 {
            let members: Vec<&Vec<f64>> = vectors
                .iter()
                .zip(&assignment)
                .filter(|(_, a)| **a == c)
                .map(|(v, _)| v)
                .collect();
            if members.is_empty() {
                continue;
            }
            let dim = members[0].len();
            let mut mean = vec![0.0; dim];
            for m in &members {
                for (s, x) in mean.iter_mut().zip(m.iter()) {
                    *s += x;
                }
            }
            let norm: f64 = mean.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                centroids[c] = mean.into_iter().map(|x| x / norm).collect();
            }
        }
    }
    let counts = [
        assignment.iter().filter(|a| **a == 0).count(),
        assignment.iter().filter(|a| **a == 1).count(),
    ];
    if counts[0] < 2 || counts[1] < 2 {
        return None;
    }
    // Cosine-distance silhouette.
    let dist = |a: &[f64], b: &[f64]| 1.0 - cosine(a, b).unwrap_or(0.0);
    let mut silhouette = 0.0;
    for (i, v) in vectors.iter().enumerate() {
        let (mut same, mut other, mut ns, mut no) = (0.0, 0.0, 0, 0);
        for (j, w) in vectors.iter().enumerate() {
            if i == j {
                continue;
            }
            if assignment[j] == assignment[i] {
                same += dist(v, w);
                ns += 1;
            } else {
                other += dist(v, w);
                no += 1;
            }
        }
        let a = if ns > 0 { same / ns as f64 } else { 0.0 };
        let b = if no > 0 { other / no as f64 } else { 0.0 };
        let denom = a.max(b);
        if denom > 0.0 {
            silhouette += (b - a) / denom;
        }
    }
    silhouette /= vectors.len() as f64;
    if silhouette <= silhouette_min {
        return None;
    }
    let mut modes: [Vec<String>; 2] = [Vec::new(), Vec::new()];
    for (ctx, a) in contexts.iter().zip(&assignment) {
        modes[*a].push(ctx.clone());
    }
    Some(modes)
}

/// Monte-Carlo estimate of P(rho_s > rho_f) from paired Beta draws.
/// The sequential refinement gate fires when this exceeds 0.95.
pub fn bayes_superiority(
    post_s: &BetaPosterior,
    post_f: &BetaPosterior,
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    if n_samples < 1_000 {
        return Err(EngineError::TooFewSamples(n_samples));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ds = BetaDist::new(post_s.alpha, post_s.beta)
        .map_err(|e| EngineError::InvalidConfig(e.to_string()))?;
    let df = BetaDist::new(post_f.alpha, post_f.beta)
        .map_err(|e| EngineError::InvalidConfig(e.to_string()))?;
    let mut wins = 0usize;
    for _ in 0..n_samples {
        if ds.sample(&mut rng) > df.sample(&mut rng) {
            wins += 1;
        }
    }
    Ok(wins as f64 / n_samples as f64)
}

/// Two-sided power-analysis sample size n* = ((z_{1-a/2} + z_{1-b}) / ES)^2.
pub fn required_sample_size(alpha_sig: f64, power: f64, effect: f64) -> f64 {
    let normal = Normal::standard();
    let z_a = normal.inverse_cdf(1.0 - alpha_sig / 2.0);
    let z_b = normal.inverse_cdf(power);
    ((z_a + z_b) / effect).powi(2)
}
