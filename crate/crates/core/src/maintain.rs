//! Bounded-memory maintenance: duplicate merging on insert, utility-based
//! pruning under the library capacity, failure-context eviction under the
//! per-procedure cap, and the fixed-size episode buffer.

use crate::bayes::posterior_mean;
use crate::config::{EngineConfig, PruneStrategy};
use crate::embed::{cosine, embed_procedure, Encoder};
use crate::error::{EngineError, Result};
use crate::memory::library::Library;
use crate::memory::pattern::Bindings;
use crate::memory::procedure::Procedure;
use crate::text::tokenize;
use std::collections::VecDeque;

/// Outcome of a deduplicating insert.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DedupOutcome {
    Inserted(String),
    /// The draft was absorbed into an existing procedure.
    Merged { incumbent: String },
}

/// Inserts a draft procedure, merging into the most similar incumbent when
/// cosine similarity reaches `theta_dup`. A merge unions the condition sets
/// into the incumbent and re-embeds it; the incumbent keeps its schema and
/// posterior (its evidence outranks a draft's prior). At capacity, pruning
/// frees a slot first; `CapacityExhausted` if it cannot.
pub fn dedup_insert(
    lib: &mut Library,
    mut draft: Procedure,
    enc: &dyn Encoder,
    now: u64,
) -> Result<DedupOutcome> {
    if draft.embedding.is_empty() {
        draft.embedding = embed_procedure(&draft, enc);
    }
    let mut best: Option<(String, f64)> = None;
    for p in lib.active_procedures() {
        if p.embedding.is_empty() {
            continue;
        }
        if let Ok(sim) = cosine(&draft.embedding, &p.embedding) {
            if best.as_ref().map(|(_, s)| sim > *s).unwrap_or(true) {
                best = Some((p.id.clone(), sim));
            }
        }
    }
    if let Some((id, sim)) = best {
        if sim >= lib.config.theta_dup {
            let incumbent = lib.procedures.get_mut(&id).expect("id from scan");
            for pat in draft.preconditions {
                incumbent.preconditions.insert(pat);
            }
            for pat in draft.postconditions {
                incumbent.postconditions.insert(pat);
            }
            incumbent.embedding = embed_procedure(incumbent, enc);
            return Ok(DedupOutcome::Merged { incumbent: id });
        }
    }
    if lib.procedures.len() >= lib.config.n_p {
        let want = lib.procedures.len() + 1 - lib.config.n_p;
        let removed = prune(lib, now, want);
        if lib.procedures.len() + 1 > lib.config.n_p {
            debug_assert!(removed.len() < want);
            return Err(EngineError::CapacityExhausted);
        }
    }
    let id = draft.id.clone();
    lib.procedures.insert(id.clone(), draft);
    Ok(DedupOutcome::Inserted(id))
}

/// Retention utility of a procedure under the configured strategy.
pub fn pruning_utility(p: &Procedure, now: u64, n_total: u64, cfg: &EngineConfig) -> f64 {
    let mean = posterior_mean(&p.posterior);
    let age = now.saturating_sub(p.last_used) as f64;
    let n = p.usage_count as f64;
    let freq = if n_total > 0 { n / n_total as f64 } else { 0.0 };
    match cfg.prune_strategy {
        PruneStrategy::Blend => {
            cfg.lambda_r * mean + cfg.lambda_f * freq + cfg.lambda_t * (-age / cfg.tau).exp()
        }
        PruneStrategy::LinearAge => {
            cfg.lambda_r * mean
                + cfg.lambda_f * (n / 10.0).min(1.0)
                + cfg.lambda_t * (1.0 - age / cfg.max_age as f64).max(0.0)
        }
        PruneStrategy::FutureValue => {
            mean * freq * (1.0 / (1.0 - cfg.gamma)) * (-age / cfg.tau).exp()
        }
    }
}

/// A procedure with strong evidence of working is never pruned while any
/// alternative exists.
pub fn is_protected(p: &Procedure) -> bool {
    posterior_mean(&p.posterior) > 0.7 && p.usage_count > 10
}

/// Stratum key for coverage-aware pruning: the ontology representative of
/// the goal's head token, so synonymous goals share a stratum.
fn stratum(p: &Procedure, lib: &Library) -> String {
    let head = tokenize(&p.goal)
        .into_iter()
        .find(|t| !t.starts_with('<'))
        .unwrap_or_else(|| p.goal.clone());
    lib.ontology
        .representative(&head)
        .map(str::to_string)
        .unwrap_or(head)
}

/// Removes up to `want` procedures, lowest retention utility first, with two
/// overrides: retired procedures go before anything live, and a stratum's
/// last member or a protected procedure is spared unless nothing else is
/// left. Returns the removed ids.
pub fn prune(lib: &mut Library, now: u64, want: usize) -> Vec<String> {
    let n_total = lib.stats.total_invocations.max(1);
    let mut removed = Vec::new();
    for _ in 0..want {
        let mut entries: Vec<(String, f64, bool, String)> = lib
            .procedures
            .values()
            .map(|p| {
                (
                    p.id.clone(),
                    pruning_utility(p, now, n_total, &lib.config),
                    p.retired,
                    stratum(p, lib),
                )
            })
            .collect();
        if entries.is_empty() {
            break;
        }
        entries.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then_with(|| a.0.cmp(&b.0)));
        let count_in = |s: &str, entries: &[(String, f64, bool, String)]| {
            entries.iter().filter(|e| e.3 == s).count()
        };
        let victim = entries
            .iter()
            .find(|e| e.2) // retired first, lowest utility among them
            .or_else(|| {
                entries.iter().find(|e| {
                    !is_protected(&lib.procedures[&e.0]) && count_in(&e.3, &entries) > 1
                })
            })
            .or_else(|| entries.iter().find(|e| !is_protected(&lib.procedures[&e.0])))
            .or_else(|| entries.first())
            .map(|e| e.0.clone());
        match victim {
            Some(id) => {
                lib.procedures.remove(&id);
                removed.push(id);
            }
            None => break,
        }
    }
    removed
}

/// Drops one failure context, in preference order: a context a negated
/// precondition already rules out (the refinement subsumes it), then the
/// newer of the most similar pair above 0.95 (near-duplicate evidence), then
/// simply the oldest.
pub fn evict_failure_context(p: &mut Procedure, enc: &dyn Encoder) {
    if p.failures.is_empty() {
        return;
    }
    // 1. contexts contradicted by a negated precondition
    for (i, ctx) in p.failures.iter().enumerate() {
        let tokens: std::collections::BTreeSet<String> = tokenize(ctx).into_iter().collect();
        let has = |t: &str| tokens.contains(t);
        let ruled_out = p
            .preconditions
            .iter()
            .filter(|pat| pat.negated)
            // the negated pattern's positive form matching means this
            // context can no longer select the procedure
            .any(|pat| pat.negate().matches_with(&has, &Bindings::new()));
        if ruled_out {
            p.failures.remove(i);
            return;
        }
    }
    // 2. near-duplicate pair
    let vectors: Vec<Vec<f64>> = p.failures.iter().map(|f| enc.encode(f)).collect();
    let mut best: Option<(usize, f64)> = None;
    for i in 0..vectors.len() {
        for j in (i + 1)..vectors.len() {
            if let Ok(sim) = cosine(&vectors[i], &vectors[j]) {
                if sim > 0.95 && best.map(|(_, s)| sim > s).unwrap_or(true) {
                    best = Some((j, sim)); // evict the newer of the pair
                }
            }
        }
    }
    if let Some((j, _)) = best {
        p.failures.remove(j);
        return;
    }
    // 3. oldest
    p.failures.remove(0);
}

/// Shrinks the failure set to the cap, one eviction at a time.
pub fn enforce_failure_cap(p: &mut Procedure, k_fail: usize, enc: &dyn Encoder) {
    while p.failures.len() > k_fail {
        evict_failure_context(p, enc);
    }
}

/// Fixed-capacity FIFO buffer for recent episode steps/records.
#[derive(Debug, Clone)]
pub struct RingBuffer<T> {
    items: VecDeque<T>,
    capacity: usize,
}

impl<T> RingBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        Self {
            items: VecDeque::with_capacity(capacity.min(4096)),
            capacity,
        }
    }

    pub fn push(&mut self, item: T) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(item);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.items.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::HashedBowEncoder;
    use crate::memory::pattern::Pattern;
    use crate::memory::posterior::BetaPosterior;
    use crate::memory::procedure::ActionSchema;

    fn proc(id: &str, goal: &str, post: BetaPosterior, usage: u64, last_used: u64) -> Procedure {
        let mut p = Procedure::new(id, goal, 0).with_posterior(post);
        p.usage_count = usage;
        p.last_used = last_used;
        p.prior_mass = post.total();
        p.schema = ActionSchema::new(["step"]);
        p
    }

    fn lib_with(cfg: EngineConfig) -> Library {
        Library::new(cfg)
    }

    #[test]
    fn identical_drafts_merge() {
        let enc = HashedBowEncoder::new(64);
        let mut lib = lib_with(EngineConfig::default());
        let mut a = proc("a", "cool <object> with <appliance>", BetaPosterior::new(5.0, 2.0), 5, 0);
        a.preconditions.insert(Pattern::positive("holding <object>"));
        a.preconditions.insert(Pattern::positive("you are at <appliance>"));
        a.postconditions.insert(Pattern::positive("<object> is cooled"));
        let mut b = a.clone();
        b.id = "b".into();
        b.preconditions.insert(Pattern::positive("fridge open"));
        assert_eq!(
            dedup_insert(&mut lib, a, &enc, 0).unwrap(),
            DedupOutcome::Inserted("a".into())
        );
        assert_eq!(
            dedup_insert(&mut lib, b, &enc, 0).unwrap(),
            DedupOutcome::Merged { incumbent: "a".into() }
        );
        assert_eq!(lib.procedures.len(), 1);
        let merged = &lib.procedures["a"];
        assert!(merged.preconditions.contains(&Pattern::positive("fridge open")));
        // posterior untouched by the merge
        assert_eq!(merged.posterior, BetaPosterior::new(5.0, 2.0));
    }

    #[test]
    fn dissimilar_drafts_coexist() {
        let enc = HashedBowEncoder::new(64);
        let mut lib = lib_with(EngineConfig::default());
        let a = proc("a", "cool <object> with <appliance>", BetaPosterior::uniform(), 0, 0);
        let b = proc("b", "examine <object>", BetaPosterior::uniform(), 0, 0);
        dedup_insert(&mut lib, a, &enc, 0).unwrap();
        assert_eq!(
            dedup_insert(&mut lib, b, &enc, 0).unwrap(),
            DedupOutcome::Inserted("b".into())
        );
        assert_eq!(lib.procedures.len(), 2);
    }

    #[test]
    fn capacity_respected_via_pruning() {
        let enc = HashedBowEncoder::new(64);
        let mut cfg = EngineConfig::default();
        cfg.n_p = 3;
        let mut lib = lib_with(cfg);
        lib.stats.total_invocations = 100;
        for i in 0..3 {
            // distinct goals so nothing merges
            let p = proc(
                &format!("p{i}"),
                &format!("goal{i} alpha{i} beta{i} gamma{i}"),
                BetaPosterior::new(2.0 + i as f64, 2.0),
                2,
                i as u64,
            );
            dedup_insert(&mut lib, p, &enc, 10).unwrap();
        }
        let newcomer = proc("new", "different target entirely", BetaPosterior::new(3.0, 1.0), 0, 10);
        dedup_insert(&mut lib, newcomer, &enc, 10).unwrap();
        assert_eq!(lib.procedures.len(), 3);
        assert!(lib.procedures.contains_key("new"));
        // p0 had the lowest mean and oldest use
        assert!(!lib.procedures.contains_key("p0"));
    }

    #[test]
    fn blend_utility_anchor() {
        let cfg = EngineConfig::default();
        let p = proc("p", "g", BetaPosterior::new(10.0, 3.0), 10, 100);
        let u = pruning_utility(&p, 100, 100, &cfg);
        assert!((u - 0.6146).abs() < 1e-4, "u = {u}");
    }

    #[test]
    fn linear_age_utility_anchor() {
        let mut cfg = EngineConfig::default();
        cfg.prune_strategy = PruneStrategy::LinearAge;
        // mean 0.79 ≈ Beta(79,21); count >= 10 caps the frequency term
        let p = proc("p", "g", BetaPosterior::new(79.0, 21.0), 12, 50);
        let u = pruning_utility(&p, 50, 1000, &cfg);
        assert!((u - 0.895).abs() < 1e-4, "u = {u}");
    }

    #[test]
    fn future_value_decays_with_age() {
        let mut cfg = EngineConfig::default();
        cfg.prune_strategy = PruneStrategy::FutureValue;
        let p = proc("p", "g", BetaPosterior::new(10.0, 3.0), 10, 0);
        let young = pruning_utility(&p, 0, 100, &cfg);
        let old = pruning_utility(&p, 100, 100, &cfg);
        assert!(young > old);
        let expected = (10.0 / 13.0) * 0.1 * 10.0; // age 0, gamma 0.9
        assert!((young - expected).abs() < 1e-9);
    }

    #[test]
    fn protected_survive_when_avoidable() {
        let mut cfg = EngineConfig::default();
        cfg.n_p = 5;
        let mut lib = lib_with(cfg);
        lib.stats.total_invocations = 100;
        let star = proc("star", "wash dishes", BetaPosterior::new(20.0, 2.0), 30, 0);
        assert!(is_protected(&star));
        lib.procedures.insert("star".into(), star);
        for i in 0..4 {
            lib.procedures.insert(
                format!("weak{i}"),
                proc(&format!("weak{i}"), "wash dishes", BetaPosterior::new(1.0, 3.0), 1, 0),
            );
        }
        let removed = prune(&mut lib, 200, 4);
        assert_eq!(removed.len(), 4);
        assert!(lib.procedures.contains_key("star"));
    }

    #[test]
    fn retired_pruned_first() {
        let mut lib = lib_with(EngineConfig::default());
        lib.stats.total_invocations = 10;
        let mut retired = proc("old", "goal one", BetaPosterior::new(9.0, 1.0), 20, 100);
        retired.retired = true;
        lib.procedures.insert("old".into(), retired);
        lib.procedures.insert(
            "weak".into(),
            proc("weak", "goal two", BetaPosterior::new(1.0, 5.0), 1, 0),
        );
        let removed = prune(&mut lib, 100, 1);
        assert_eq!(removed, vec!["old".to_string()]);
    }

    #[test]
    fn last_of_stratum_spared() {
        let mut lib = lib_with(EngineConfig::default());
        lib.stats.total_invocations = 100;
        // "examine" stratum has one weak member; "place" has two stronger ones
        lib.procedures.insert(
            "ex".into(),
            proc("ex", "examine <object>", BetaPosterior::new(1.0, 4.0), 1, 0),
        );
        for i in 0..2 {
            lib.procedures.insert(
                format!("pl{i}"),
                proc(&format!("pl{i}"), "place <object> on <location>", BetaPosterior::new(3.0, 2.0), 3, 50),
            );
        }
        let removed = prune(&mut lib, 100, 1);
        // the weak examine procedure is its stratum's only member; a place
        // procedure goes instead
        assert_eq!(removed.len(), 1);
        assert!(removed[0].starts_with("pl"), "{removed:?}");
    }

    #[test]
    fn eviction_prefers_contradicted_contexts() {
        let enc = HashedBowEncoder::new(64);
        let mut p = proc("p", "g", BetaPosterior::uniform(), 0, 0);
        p.preconditions.insert(Pattern::negative("microwave"));
        p.failures = vec![
            "near the sink".to_string(),
            "at the microwave humming".to_string(),
            "by the door".to_string(),
        ];
        evict_failure_context(&mut p, &enc);
        assert_eq!(p.failures.len(), 2);
        assert!(p.failures.iter().all(|f| !f.contains("microwave")));
    }

    #[test]
    fn eviction_collapses_near_duplicates_then_oldest() {
        let enc = HashedBowEncoder::new(64);
        let mut p = proc("p", "g", BetaPosterior::uniform(), 0, 0);
        p.failures = vec![
            "first unique context".to_string(),
            "at the big fridge door".to_string(),
            "at the big fridge door".to_string(),
        ];
        evict_failure_context(&mut p, &enc);
        assert_eq!(p.failures.len(), 2);
        assert_eq!(p.failures[0], "first unique context");
        // no duplicates left: oldest goes next
        evict_failure_context(&mut p, &enc);
        assert_eq!(p.failures, vec!["at the big fridge door".to_string()]);
    }

    #[test]
    fn failure_cap_enforced() {
        let enc = HashedBowEncoder::new(64);
        let mut p = proc("p", "g", BetaPosterior::uniform(), 0, 0);
        p.failures = (0..40).map(|i| format!("context number {i} entirely")).collect();
        enforce_failure_cap(&mut p, 15, &enc);
        assert_eq!(p.failures.len(), 15);
    }

    #[test]
    fn ring_buffer_is_bounded_fifo() {
        let mut rb = RingBuffer::new(3);
        for i in 0..10 {
            rb.push(i);
            assert!(rb.len() <= 3);
        }
        let items: Vec<i32> = rb.iter().copied().collect();
        assert_eq!(items, vec![7, 8, 9]);
    }
}
