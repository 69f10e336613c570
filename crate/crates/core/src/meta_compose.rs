//! Meta-procedure composition: mining recurring procedure sequences from
//! recent episodes, valuing them, distilling a branch-rule control policy,
//! and trimming members that the policy keeps skipping.

use crate::embed::encoder::fnv1a;
use crate::error::{EngineError, Result};
use crate::memory::episode::EpisodeRecord;
use crate::memory::library::Library;
use crate::memory::meta::{BranchRule, MetaProcedure, Verdict};
use crate::memory::pattern::Bindings;
use crate::memory::posterior::BetaPosterior;
use crate::memory::procedure::Procedure;
use crate::port::AbstractionPort;
use std::collections::BTreeMap;

/// A mined contiguous procedure sequence with its episode statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceStat {
    pub sequence: Vec<String>,
    /// Episodes (among those considered) containing the sequence.
    pub occurrences: usize,
    /// occurrences / episodes considered.
    pub frequency: f64,
}

/// Finds contiguous procedure subsequences of length at least `min_len`
/// across successful episodes. Each episode counts a sequence at most once.
/// Output is sorted by frequency, then length, then lexicographically —
/// deterministic and most promising first.
pub fn mine_sequences(episodes: &[EpisodeRecord], min_len: usize) -> Vec<SequenceStat> {
    let successes: Vec<Vec<String>> = episodes
        .iter()
        .filter(|e| e.terminal_success)
        .map(|e| e.procedure_sequence())
        .collect();
    if successes.is_empty() {
        return Vec::new();
    }
    let mut counts: BTreeMap<Vec<String>, usize> = BTreeMap::new();
    for seq in &successes {
        let mut seen: std::collections::BTreeSet<&[String]> = Default::default();
        for len in min_len..=seq.len() {
            for window in seq.windows(len) {
                if seen.insert(window) {
                    *counts.entry(window.to_vec()).or_default() += 1;
                }
            }
        }
    }
    let total = successes.len() as f64;
    let mut stats: Vec<SequenceStat> = counts
        .into_iter()
        .map(|(sequence, occurrences)| SequenceStat {
            frequency: occurrences as f64 / total,
            sequence,
            occurrences,
        })
        .collect();
    stats.sort_by(|a, b| {
        b.frequency
            .partial_cmp(&a.frequency)
            .unwrap()
            .then_with(|| b.sequence.len().cmp(&a.sequence.len()))
            .then_with(|| a.sequence.cmp(&b.sequence))
    });
    stats
}

/// Composition value V = f·ℓ − c_store + ΔR: frequency-weighted length saved
/// against a storage charge, plus any estimated reliability gain.
pub fn meta_value(frequency: f64, len: usize, c_store: f64, delta_r: f64) -> f64 {
    frequency * len as f64 - c_store + delta_r
}

/// Builds a meta-procedure over an ordered member id list: entry
/// preconditions come from the first member, the control policy from the
/// port, and the posterior starts at the given prior.
pub fn compose_meta(
    lib: &Library,
    member_ids: &[String],
    port: &dyn AbstractionPort,
    prior: (f64, f64),
    created: u64,
) -> Result<MetaProcedure> {
    let members: Vec<Procedure> = member_ids
        .iter()
        .map(|id| {
            lib.procedures
                .get(id)
                .cloned()
                .ok_or_else(|| EngineError::UnresolvedMember(id.clone()))
        })
        .collect::<Result<_>>()?;
    let policy = port.distill(&members)?;
    let meta_goal = members
        .iter()
        .map(|m| m.goal.clone())
        .collect::<Vec<_>>()
        .join(" then ");
    let id = format!("meta_{:016x}", fnv1a(member_ids.join(";").as_bytes()));
    let n = member_ids.len();
    Ok(MetaProcedure {
        id,
        meta_goal,
        meta_pre: members[0].preconditions.clone(),
        members: member_ids.to_vec(),
        policy,
        posterior: BetaPosterior::new(prior.0, prior.1),
        usage_count: 0,
        last_used: created,
        created,
        member_runs: vec![0; n],
        member_skips: vec![0; n],
    })
}

/// Mines recent episodes and composes every sequence clearing the frequency
/// threshold, the occurrence minimum, and a positive composition value,
/// until meta capacity is reached. Returns new meta ids.
pub fn maybe_compose(
    lib: &mut Library,
    episodes: &[EpisodeRecord],
    port: &dyn AbstractionPort,
    now: u64,
) -> Result<Vec<String>> {
    let cfg = lib.config.clone();
    let c_store = 1.0 / cfg.n_meta as f64;
    let mut created = Vec::new();
    for stat in mine_sequences(episodes, cfg.min_meta_len) {
        if lib.metas.len() >= cfg.n_meta {
            break;
        }
        if stat.frequency < cfg.theta_meta
            || stat.occurrences < cfg.min_occurrences
            || meta_value(stat.frequency, stat.sequence.len(), c_store, 0.0) <= 0.0
        {
            continue;
        }
        if lib.metas.values().any(|m| m.members == stat.sequence) {
            continue;
        }
        // Skip sequences wholly contained in an existing meta's member list.
        if lib.metas.values().any(|m| {
            m.members.len() > stat.sequence.len()
                && m.members
                    .windows(stat.sequence.len())
                    .any(|w| w == stat.sequence.as_slice())
        }) {
            continue;
        }
        let meta = compose_meta(lib, &stat.sequence, port, cfg.prior_counts(), now)?;
        let id = meta.id.clone();
        lib.metas.insert(id.clone(), meta);
        created.push(id);
    }
    Ok(created)
}

/// Evaluates the control policy at member `index`: the first matching rule
/// decides, a repeat verdict past its limit degrades to continue, and no
/// match means continue.
pub fn control_step(
    meta: &MetaProcedure,
    index: usize,
    repeat_count: u32,
    has_token: &dyn Fn(&str) -> bool,
    bindings: &Bindings,
) -> Verdict {
    for rule in meta.policy.iter().filter(|r| r.index == index) {
        if rule.obs_pattern.matches_with(has_token, bindings) {
            if rule.verdict == Verdict::Repeat && repeat_count >= rule.repeat_limit {
                return Verdict::Continue;
            }
            return rule.verdict;
        }
    }
    Verdict::Continue
}

/// Drops members the policy skipped in more than 90% of at least five
/// decisions. Returns the trimmed meta, or `None` when fewer than two
/// members would remain (the composition has degenerated and should retire).
pub fn refine_meta(meta: &MetaProcedure) -> Option<MetaProcedure> {
    let keep: Vec<usize> = (0..meta.members.len())
        .filter(|&i| {
            let runs = meta.member_runs.get(i).copied().unwrap_or(0);
            let skips = meta.member_skips.get(i).copied().unwrap_or(0);
            let total = runs + skips;
            total < 5 || (skips as f64 / total as f64) <= 0.9
        })
        .collect();
    if keep.len() == meta.members.len() {
        return Some(meta.clone());
    }
    if keep.len() < 2 {
        return None;
    }
    let remap: BTreeMap<usize, usize> = keep.iter().enumerate().map(|(new, &old)| (old, new)).collect();
    let mut trimmed = meta.clone();
    trimmed.members = keep.iter().map(|&i| meta.members[i].clone()).collect();
    trimmed.member_runs = keep.iter().map(|&i| meta.member_runs[i]).collect();
    trimmed.member_skips = keep.iter().map(|&i| meta.member_skips[i]).collect();
    trimmed.policy = meta
        .policy
        .iter()
        .filter_map(|r| {
            remap.get(&r.index).map(|&new| BranchRule {
                index: new,
                ..r.clone()
            })
        })
        .collect();
    Some(trimmed)
}
