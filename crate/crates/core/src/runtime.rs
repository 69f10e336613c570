//! The episode loop: subgoal tracking, expected-utility selection over the
//! library, procedure and meta-procedure execution with pre/postcondition
//! checking, zero-shot fallback, and post-episode learning and maintenance.
//! Also offline memory construction from a labeled trajectory corpus.

use crate::bayes::{expected_utility_parts, rank_and_decide, risk, ScoredCandidate, Selection, UtilityParams};
use crate::config::RefineGate;
use crate::embed::encoder::fnv1a;
use crate::embed::{build_ontology, cosine, embed_procedure, Encoder, Ontology};
use crate::error::{EngineError, Result};
use crate::maintain::{dedup_insert, enforce_failure_cap, prune, RingBuffer};
use crate::memory::episode::{EpisodeRecord, EpisodeStep, StepSource};
use crate::memory::library::Library;
use crate::memory::meta::Verdict;
use crate::memory::pattern::{Bindings, Pattern};
use crate::memory::posterior::BetaPosterior;
use crate::memory::procedure::Procedure;
use crate::meta_compose::{control_step, maybe_compose, refine_meta};
use crate::port::{instantiate, AbstractionPort, BudgetedPort, Segment, Subgoal};
use crate::refine::{apply_refinement, bayes_superiority, detect_modes, refine_trigger, specialize};
use crate::text::tokenize;
use crate::trajectory::{TrajStep, Trajectory};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Function words carrying no effect semantics, ignored when matching a
/// subgoal phrase against candidate postconditions.
const FILLER: &[&str] = &[
    "the", "a", "an", "is", "are", "you", "your", "to", "of", "and", "it",
];
use std::collections::{BTreeMap, BTreeSet};

use crate::env::Environment;

/// Component toggles for ablation runs; `true` means enabled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AblationFlags {
    /// Expected-utility scoring; disabled, ranking is pure relevance.
    pub bayes: bool,
    /// Contrastive refinement and mode specialization.
    pub contrast: bool,
    /// Meta-procedure composition and execution.
    pub meta: bool,
    /// Ontological grounding of observations.
    pub ontology: bool,
}

impl Default for AblationFlags {
    fn default() -> Self {
        Self {
            bayes: true,
            contrast: true,
            meta: true,
            ontology: true,
        }
    }
}

impl AblationFlags {
    /// Parses a comma-separated list of component names to disable.
    pub fn parse_disabled(list: &str) -> Result<Self> {
        let mut flags = Self::default();
        for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match name {
                "bayes" => flags.bayes = false,
                "contrast" => flags.contrast = false,
                "meta" => flags.meta = false,
                "ontology" => flags.ontology = false,
                other => {
                    return Err(EngineError::InvalidConfig(format!(
                        "unknown ablation {other:?}; expected bayes|contrast|meta|ontology"
                    )))
                }
            }
        }
        Ok(flags)
    }
}

/// A tokenized observation with optional ontological grounding: token
/// membership, representative-equivalent membership, and contiguous phrase
/// matching.
#[derive(Debug, Clone)]
pub struct ObsView {
    pub raw: String,
    pub canonical: String,
    sequence: Vec<String>,
    sentences: Vec<Vec<String>>,
    token_set: BTreeSet<String>,
    rep_set: BTreeSet<String>,
    ontology: Option<Ontology>,
}

impl ObsView {
    pub fn new(obs: &str, ontology: Option<&Ontology>) -> Self {
        let sequence = tokenize(obs);
        let sentences: Vec<Vec<String>> = obs
            .split(['.', '\n'])
            .map(tokenize)
            .filter(|s| !s.is_empty())
            .collect();
        let token_set: BTreeSet<String> = sequence.iter().cloned().collect();
        let ontology = ontology.filter(|o| !o.is_empty()).cloned();
        let rep_set = match &ontology {
            Some(ont) => token_set
                .iter()
                .filter_map(|t| ont.representative(t).map(str::to_string))
                .collect(),
            None => BTreeSet::new(),
        };
        let canonical = match &ontology {
            Some(ont) => ont.canonicalize(obs),
            None => obs.to_string(),
        };
        Self {
            raw: obs.to_string(),
            canonical,
            sequence,
            sentences,
            token_set,
            rep_set,
            ontology,
        }
    }

    /// True when the pattern's tokens appear in order within a single
    /// observation sentence (bindings substituted, unbound placeholders
    /// wild, gaps allowed). Patterns are extracted sentence-wise with filler
    /// tokens dropped, so an ordered in-sentence match is the faithful
    /// inverse; bag-of-tokens matching is too loose ("fridge closed" must
    /// not pass just because some other door is closed).
    pub fn pattern_holds(&self, pattern: &Pattern, bindings: &Bindings) -> bool {
        let resolved: Vec<Option<&str>> = pattern
            .tokens
            .iter()
            .map(|t| {
                if crate::text::is_placeholder(t) {
                    bindings.get(t).map(String::as_str)
                } else {
                    Some(t.as_str())
                }
            })
            .collect();
        let found = self.sentences.iter().any(|s| {
            let mut i = 0;
            for tok in s {
                if i == resolved.len() {
                    break;
                }
                match resolved[i] {
                    Some(want) => {
                        if self.tok_eq(want, tok) {
                            i += 1;
                        }
                    }
                    None => i += 1,
                }
            }
            i == resolved.len()
        });
        found != pattern.negated
    }

    /// Token membership up to ontological equivalence: `t` is present, or a
    /// token sharing `t`'s cluster representative is.
    pub fn has_token(&self, t: &str) -> bool {
        if self.token_set.contains(t) {
            return true;
        }
        match &self.ontology {
            Some(ont) => ont
                .representative(t)
                .map(|r| self.rep_set.contains(r))
                .unwrap_or(false),
            None => false,
        }
    }

    fn tok_eq(&self, a: &str, b: &str) -> bool {
        if a == b {
            return true;
        }
        match &self.ontology {
            Some(ont) => match (ont.representative(a), ont.representative(b)) {
                (Some(ra), Some(rb)) => ra == rb,
                _ => false,
            },
            None => false,
        }
    }

    /// The state that matters for outcome bookkeeping: sentences mentioning
    /// a bound entity, minus any restating the task. Full observations share
    /// so much boilerplate that every pair looks alike to the risk and
    /// contrast machinery; a few early failures would then shadow every
    /// future state.
    pub fn focus(&self, bindings: &Bindings, task: &str) -> String {
        let task_toks = tokenize(task);
        let mut kept: Vec<String> = Vec::new();
        for s in &self.sentences {
            if !task_toks.is_empty()
                && s.len() >= task_toks.len()
                && s.windows(task_toks.len()).any(|w| w == task_toks.as_slice())
            {
                continue;
            }
            if bindings.values().any(|v| s.iter().any(|t| self.tok_eq(v, t))) {
                kept.push(s.join(" "));
            }
        }
        if kept.is_empty() {
            self.canonical.clone()
        } else {
            kept.join(". ")
        }
    }

    /// True when the phrase's tokens (bindings substituted, unbound
    /// placeholders wild) appear contiguously in the observation.
    pub fn phrase_satisfied(&self, phrase: &[String], bindings: &Bindings) -> bool {
        if phrase.is_empty() {
            return true;
        }
        if phrase.len() > self.sequence.len() {
            return false;
        }
        let resolved: Vec<Option<&str>> = phrase
            .iter()
            .map(|t| {
                if crate::text::is_placeholder(t) {
                    bindings.get(t).map(String::as_str)
                } else {
                    Some(t.as_str())
                }
            })
            .collect();
        self.sequence.windows(phrase.len()).any(|w| {
            w.iter().zip(&resolved).all(|(tok, want)| match want {
                Some(want) => self.tok_eq(want, tok),
                None => true, // unbound placeholder: any token
            })
        })
    }
}

/// True iff every pattern in `patterns` matches the observation.
pub fn check_pre(patterns: &BTreeSet<Pattern>, view: &ObsView, bindings: &Bindings) -> bool {
    patterns.iter().all(|p| view.pattern_holds(p, bindings))
}

/// Postcondition check over the successor observation; same semantics.
pub fn check_post(patterns: &BTreeSet<Pattern>, view: &ObsView, bindings: &Bindings) -> bool {
    check_pre(patterns, view, bindings)
}

/// Segment lists from any port are validated before use: in-bounds, ordered,
/// non-overlapping.
pub fn validate_segments(segments: &[Segment], len: usize) -> bool {
    let mut prev_end: Option<usize> = None;
    for s in segments {
        if s.start > s.end || s.end >= len {
            return false;
        }
        if let Some(pe) = prev_end {
            if s.start <= pe {
                return false;
            }
        }
        prev_end = Some(s.end);
    }
    true
}

/// Per-episode metrics line, JSONL-serializable and self-describing.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetrics {
    pub schema: &'static str,
    pub episode: u64,
    pub task: String,
    pub success: bool,
    pub steps: usize,
    pub reuse_rate: f64,
    pub fallback_rate: f64,
    pub llm_calls: u32,
    pub procedure_count: usize,
    pub meta_count: usize,
    pub meta_executions: u64,
    pub mean_posterior: f64,
}

pub const METRICS_SCHEMA: &str = "run_metrics/1";

/// Aggregate over a run, for summary lines and acceptance checks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub schema: &'static str,
    pub episodes: usize,
    pub success_rate: f64,
    pub mean_reuse_rate: f64,
    pub mean_fallback_rate: f64,
    pub mean_llm_calls: f64,
    pub procedure_count: usize,
    pub meta_count: usize,
    pub meta_executions: u64,
    pub mean_posterior: f64,
    pub compression_ratio: f64,
}

/// Averages a metrics series into one summary row.
pub fn summarize(metrics: &[RunMetrics]) -> RunSummary {
    let n = metrics.len().max(1) as f64;
    let last = metrics.last();
    let total_steps: usize = metrics.iter().map(|m| m.steps).sum();
    let procs = last.map(|m| m.procedure_count).unwrap_or(0);
    RunSummary {
        schema: "run_summary/1",
        episodes: metrics.len(),
        success_rate: metrics.iter().filter(|m| m.success).count() as f64 / n,
        mean_reuse_rate: metrics.iter().map(|m| m.reuse_rate).sum::<f64>() / n,
        mean_fallback_rate: metrics.iter().map(|m| m.fallback_rate).sum::<f64>() / n,
        mean_llm_calls: metrics.iter().map(|m| m.llm_calls as f64).sum::<f64>() / n,
        procedure_count: procs,
        meta_count: last.map(|m| m.meta_count).unwrap_or(0),
        meta_executions: metrics.iter().map(|m| m.meta_executions).sum(),
        mean_posterior: last.map(|m| m.mean_posterior).unwrap_or(0.0),
        compression_ratio: total_steps as f64 / procs.max(1) as f64,
    }
}

/// Mean posterior success over procedures with execution evidence (all
/// active procedures when nothing has run yet).
pub fn mean_posterior(lib: &Library) -> f64 {
    let used: Vec<f64> = lib
        .active_procedures()
        .filter(|p| p.usage_count > 0)
        .map(|p| p.posterior.mean())
        .collect();
    let pool: Vec<f64> = if used.is_empty() {
        lib.active_procedures().map(|p| p.posterior.mean()).collect()
    } else {
        used
    };
    if pool.is_empty() {
        0.0
    } else {
        pool.iter().sum::<f64>() / pool.len() as f64
    }
}

enum Chosen {
    Proc(String),
    Meta(String),
}

struct ExecOutcome {
    steps: Vec<EpisodeStep>,
    labels: Vec<Option<String>>,
    obs: String,
    done: bool,
    rewarded: bool,
    all_effective: bool,
}

fn execute_schema(
    env: &mut dyn Environment,
    schema: &[String],
    bindings: &Bindings,
    start_obs: String,
    max_steps: usize,
) -> ExecOutcome {
    let mut out = ExecOutcome {
        steps: Vec::new(),
        labels: Vec::new(),
        obs: start_obs,
        done: false,
        rewarded: false,
        all_effective: true,
    };
    for template in schema {
        if out.steps.len() >= max_steps || out.done {
            out.all_effective = false;
            break;
        }
        let action = instantiate(template, bindings);
        let (next, reward, done) = env.step(&action);
        let effective = !next.starts_with("nothing happens");
        out.steps.push(EpisodeStep {
            obs: std::mem::replace(&mut out.obs, next),
            action,
            reward,
        });
        out.labels.push(env.last_label().map(str::to_string));
        out.done = done;
        out.rewarded |= reward > 0.0;
        if !effective {
            // An inapplicable action invalidates the rest of the schema.
            out.all_effective = false;
            break;
        }
    }
    out
}

/// The runtime engine: owns the library and the learning state across
/// episodes. The port and environment are passed per call so one engine can
/// drive different stubs.
pub struct Engine<'e> {
    pub lib: Library,
    pub encoder: &'e dyn Encoder,
    pub ablation: AblationFlags,
    /// When set, selection and execution decisions are appended to `trace`.
    pub tracing: bool,
    pub trace: Vec<String>,
    episodes: RingBuffer<EpisodeRecord>,
    step_buffer: RingBuffer<EpisodeStep>,
    /// Context count at last refinement, per procedure, to avoid re-refining
    /// on unchanged evidence.
    refine_marks: BTreeMap<String, usize>,
    total_action_steps: u64,
    meta_executions: u64,
}

impl<'e> Engine<'e> {
    pub fn new(lib: Library, encoder: &'e dyn Encoder) -> Self {
        let window = lib.config.window.max(1);
        let n_b = lib.config.n_b;
        Self {
            lib,
            encoder,
            ablation: AblationFlags::default(),
            tracing: false,
            trace: Vec::new(),
            episodes: RingBuffer::new(window),
            step_buffer: RingBuffer::new(n_b),
            refine_marks: BTreeMap::new(),
            total_action_steps: 0,
            meta_executions: 0,
        }
    }

    pub fn with_ablation(mut self, flags: AblationFlags) -> Self {
        self.ablation = flags;
        self
    }

    pub fn total_action_steps(&self) -> u64 {
        self.total_action_steps
    }

    fn tr(&mut self, msg: String) {
        if self.tracing {
            self.trace.push(msg);
        }
    }

    fn view(&self, obs: &str) -> ObsView {
        let ont = if self.ablation.ontology {
            Some(&self.lib.ontology)
        } else {
            None
        };
        ObsView::new(obs, ont)
    }

    /// Scores every eligible candidate against the query; precondition
    /// failures and per-episode exclusions never make the list.
    pub fn score_candidates(
        &self,
        query: &str,
        view: &ObsView,
        bindings: &Bindings,
        excluded: &BTreeSet<String>,
        target: Option<&[String]>,
        meta_target: Option<&[String]>,
        risk_ctx: Option<&str>,
    ) -> Vec<ScoredCandidate> {
        let cfg = &self.lib.config;
        let params = UtilityParams::from_config(cfg);
        let q = self.encoder.encode(query);
        // Goal-conditioned applicability: when the active subgoal names an
        // effect ("cooled", "holding", ...), only candidates whose declared
        // postconditions promise that effect are admissible. Without this a
        // well-scored but irrelevant skill (place during a cleaning subgoal)
        // wins on posterior strength alone, acts, and poisons its own
        // statistics and the episode state.
        let promises = |post: &BTreeSet<Pattern>, tgt: Option<&[String]>| -> bool {
            let Some(phrase) = tgt else { return true };
            let wanted: Vec<&str> = phrase
                .iter()
                .map(String::as_str)
                .filter(|t| !crate::text::is_placeholder(t) && !FILLER.contains(t))
                .collect();
            if wanted.is_empty() || post.is_empty() {
                return true;
            }
            post.iter().filter(|p| !p.negated).any(|p| {
                p.tokens
                    .iter()
                    .any(|t| wanted.iter().any(|w| view.tok_eq(w, t)))
            })
        };
        // A schema step whose placeholder has no binding cannot instantiate.
        let instantiable = |p: &Procedure| {
            p.schema.steps.iter().all(|s| {
                tokenize(s)
                    .iter()
                    .filter(|t| crate::text::is_placeholder(t))
                    .all(|t| bindings.contains_key(t))
            })
        };
        let mut rels: Vec<(f64, &Procedure)> = self
            .lib
            .active_procedures()
            .filter(|p| !excluded.contains(&p.id) && !p.schema.is_empty())
            .filter(|p| instantiable(p))
            .filter(|p| promises(&p.postconditions, target))
            .filter(|p| check_pre(&p.preconditions, view, bindings))
            .map(|p| (cosine(&q, &p.embedding).unwrap_or(0.0), p))
            .collect();
        rels.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then_with(|| a.1.id.cmp(&b.1.id)));
        rels.truncate(cfg.top_k);
        let mut scored: Vec<ScoredCandidate> = rels
            .into_iter()
            .map(|(rel, p)| {
                if self.ablation.bayes {
                    let ctx = risk_ctx.unwrap_or(&view.canonical);
                    let r = risk(ctx, p, self.encoder, cfg.theta_risk);
                    expected_utility_parts(&p.id, rel, r, &p.posterior, &params)
                } else {
                    ScoredCandidate {
                        id: p.id.clone(),
                        eu: rel,
                        relevance: rel,
                        risk: 0.0,
                        posterior_mean: p.posterior.mean(),
                        entropy_term: 0.0,
                    }
                }
            })
            .collect();
        if self.ablation.meta {
            for m in self.lib.metas.values() {
                if excluded.contains(&m.id) || !check_pre(&m.meta_pre, view, bindings) {
                    continue;
                }
                // A composition is judged by its final member's effects.
                let final_post = m
                    .members
                    .last()
                    .and_then(|id| self.lib.procedures.get(id))
                    .map(|p| &p.postconditions);
                if let Some(post) = final_post {
                    if !promises(post, meta_target) {
                        continue;
                    }
                }
                let emb = crate::embed::embed_meta(m, self.encoder);
                let rel = cosine(&q, &emb).unwrap_or(0.0);
                scored.push(if self.ablation.bayes {
                    expected_utility_parts(&m.id, rel, 0.0, &m.posterior, &params)
                } else {
                    ScoredCandidate {
                        id: m.id.clone(),
                        eu: rel,
                        relevance: rel,
                        risk: 0.0,
                        posterior_mean: m.posterior.mean(),
                        entropy_term: 0.0,
                    }
                });
            }
        }
        scored
    }

    fn select(
        &mut self,
        query: &str,
        view: &ObsView,
        bindings: &Bindings,
        excluded: &BTreeSet<String>,
        target: Option<&[String]>,
        meta_target: Option<&[String]>,
        risk_ctx: Option<&str>,
    ) -> Option<Chosen> {
        let scored =
            self.score_candidates(query, view, bindings, excluded, target, meta_target, risk_ctx);
        if self.tracing && !scored.is_empty() {
            let mut sorted = scored.clone();
            sorted.sort_by(|a, b| b.eu.partial_cmp(&a.eu).unwrap());
            self.tr("candidates (id, eu, relevance, risk, mean, info):".to_string());
            for c in &sorted {
                self.tr(format!(
                    "  {:<24} {:>7.4} {:>7.4} {:>7.4} {:>7.4} {:>7.4}",
                    c.id, c.eu, c.relevance, c.risk, c.posterior_mean, c.entropy_term
                ));
            }
        }
        match rank_and_decide(scored, self.lib.config.theta_conf) {
            Selection::Selected(best) => {
                let chosen = if self.lib.metas.contains_key(&best.id) {
                    Chosen::Meta(best.id.clone())
                } else {
                    Chosen::Proc(best.id.clone())
                };
                self.tr(format!("selected {} (eu {:.4})", best.id, best.eu));
                Some(chosen)
            }
            Selection::Fallback => {
                self.tr("no candidate above theta_conf: zero-shot fallback".to_string());
                None
            }
        }
    }

    /// Runs one episode end to end: Algorithm-style selection loop, Beta
    /// updates, post-episode abstraction of fallback segments, and
    /// maintenance. Returns the record and its metrics line.
    pub fn run_episode(
        &mut self,
        env: &mut dyn Environment,
        port: &dyn AbstractionPort,
        episode_seed: u64,
    ) -> Result<(EpisodeRecord, RunMetrics)> {
        let cfg = self.lib.config.clone();
        let episode_no = self.lib.stats.episodes_seen;
        let budget = BudgetedPort::new(port, cfg.llm_budget);
        let mut rng = ChaCha8Rng::seed_from_u64(episode_seed ^ 0x9e37_79b9_7f4a_7c15);
        let mut obs = env.reset(episode_seed);
        let task = env.task().to_string();
        self.tr(format!("task: {task}"));

        let subgoals: Vec<Subgoal> = budget.parse_task(&task).unwrap_or_default();
        let bindings: Bindings = subgoals
            .first()
            .map(|s| s.bindings.clone())
            .unwrap_or_default();
        if self.tracing {
            for sg in &subgoals {
                self.tr(format!("subgoal: {}", sg.description));
            }
        }

        let mut steps: Vec<EpisodeStep> = Vec::new();
        let mut labels: Vec<Option<String>> = Vec::new();
        let mut provenance: Vec<StepSource> = Vec::new();
        let mut done = false;
        let mut success = false;
        let mut meta_execs_here = 0u64;
        let mut sg_idx = 0usize;
        // Failures are excluded per (candidate, state) so a procedure that
        // misfired may be retried once the observation changes, but the same
        // state can never loop on it.
        let mut failed_at: BTreeSet<(String, String)> = BTreeSet::new();

        while !done && steps.len() < cfg.horizon {
            let view = self.view(&obs);
            while sg_idx < subgoals.len()
                && view.phrase_satisfied(&subgoals[sg_idx].phrase, &bindings)
            {
                self.tr(format!("subgoal done: {}", subgoals[sg_idx].description));
                sg_idx += 1;
            }
            // Query on the subgoal description alone: the raw task text and
            // observation carry concrete entity names that dilute similarity
            // against lifted procedure embeddings.
            let query = match subgoals.get(sg_idx) {
                Some(sg) => sg.description.clone(),
                None => format!("{} | {}", task, view.canonical),
            };
            let state_key = view.focus(&bindings, &task);
            let excluded: BTreeSet<String> = failed_at
                .iter()
                .filter(|(_, at)| *at == state_key)
                .map(|(id, _)| id.clone())
                .collect();
            let target = subgoals.get(sg_idx).map(|sg| sg.phrase.as_slice());
            // Compositions replay the whole pipeline, so they are offered
            // only on a fresh episode and judged against the final subgoal.
            let meta_target = if sg_idx == 0 {
                subgoals.last().map(|sg| sg.phrase.as_slice())
            } else {
                None
            };
            let offer_meta = sg_idx == 0 || subgoals.is_empty();
            let prev_meta = self.ablation.meta;
            self.ablation.meta = prev_meta && offer_meta;
            let chosen = self.select(
                &query,
                &view,
                &bindings,
                &excluded,
                target,
                meta_target,
                Some(&state_key),
            );
            self.ablation.meta = prev_meta;
            match chosen {
                Some(Chosen::Proc(id)) => {
                    let context = state_key.clone();
                    let (schema, post) = {
                        let p = &self.lib.procedures[&id];
                        (p.schema.steps.clone(), p.postconditions.clone())
                    };
                    let exec = execute_schema(env, &schema, &bindings, obs, cfg.horizon - steps.len());
                    let n_exec = exec.steps.len();
                    steps.extend(exec.steps);
                    labels.extend(exec.labels);
                    provenance.extend(std::iter::repeat_n(StepSource::Procedure(id.clone()), n_exec));
                    obs = exec.obs;
                    done = exec.done;
                    success |= exec.rewarded;
                    let post_view = self.view(&obs);
                    let y = exec.all_effective && check_post(&post, &post_view, &bindings);
                    let before;
                    let after;
                    {
                        let p = self.lib.procedures.get_mut(&id).expect("selected id");
                        before = p.posterior;
                        p.record_outcome(y, &context, episode_no);
                        after = p.posterior;
                        enforce_failure_cap(p, cfg.k_fail, self.encoder);
                    }
                    self.lib.stats.total_invocations += 1;
                    self.tr(format!(
                        "executed {id}: y={y}, posterior ({},{}) -> ({},{})",
                        before.alpha, before.beta, after.alpha, after.beta
                    ));
                    if !y || n_exec == 0 {
                        failed_at.insert((id, context));
                    }
                }
                Some(Chosen::Meta(id)) => {
                    let context = state_key.clone();
                    let state = self.execute_meta(env, &id, &bindings, obs, cfg.horizon - steps.len(), episode_no)?;
                    let n_exec = state.steps.len();
                    steps.extend(state.steps);
                    labels.extend(state.labels);
                    provenance.extend(std::iter::repeat_n(StepSource::Meta(id.clone()), n_exec));
                    obs = state.obs;
                    done = state.done;
                    success |= state.rewarded;
                    meta_execs_here += 1;
                    self.meta_executions += 1;
                    let m = self.lib.metas.get_mut(&id).expect("selected meta id");
                    m.posterior.observe(state.y);
                    m.usage_count += 1;
                    m.last_used = episode_no;
                    for (i, (r, s)) in state.runs.iter().zip(&state.skips).enumerate() {
                        m.member_runs[i] += r;
                        m.member_skips[i] += s;
                    }
                    self.tr(format!("executed meta {id}: y={}", state.y));
                    if !state.y || n_exec == 0 {
                        failed_at.insert((id, context));
                    }
                }
                None => {
                    let legal = env.legal_actions();
                    if legal.is_empty() {
                        break;
                    }
                    // Keep two calls in reserve so post-episode segmentation
                    // and at least one abstraction can still run.
                    let action = if budget.remaining() > 2 {
                        let oracle = env.oracle_action();
                        budget
                            .zero_shot(&obs, oracle.as_deref(), &legal, &mut rng)
                            .unwrap_or_else(|_| legal[rng.random_range(0..legal.len())].clone())
                    } else {
                        legal[rng.random_range(0..legal.len())].clone()
                    };
                    let (next, reward, d) = env.step(&action);
                    steps.push(EpisodeStep {
                        obs: std::mem::replace(&mut obs, next),
                        action,
                        reward,
                    });
                    labels.push(env.last_label().map(str::to_string));
                    provenance.push(StepSource::Fallback);
                    done = d;
                    success |= reward > 0.0;
                }
            }
        }

        let record = EpisodeRecord {
            task: task.clone(),
            steps,
            provenance,
            terminal_success: success,
        };
        self.total_action_steps += record.steps.len() as u64;

        // Post-episode learning: abstract fallback-driven segments whose
        // phase actually completed, under whatever budget remains.
        let traj = Trajectory {
            task,
            steps: record
                .steps
                .iter()
                .zip(&labels)
                .map(|(s, label)| TrajStep {
                    obs: s.obs.clone(),
                    action: s.action.clone(),
                    reward: s.reward,
                    label: label.clone(),
                    bindings: bindings.clone(),
                })
                .collect(),
            final_obs: Some(obs),
        };
        // Exploration only teaches when it worked: drafts are admitted from
        // successful episodes, for phases the episode actually completed,
        // and only when they generalize — a schema or effect set without a
        // single placeholder is pinned to one entity and would union junk
        // into a healthy incumbent on merge.
        if success && !traj.steps.is_empty() {
            let generalizes = |draft: &Procedure| {
                let schema_lifted = draft
                    .schema
                    .steps
                    .iter()
                    .any(|s| tokenize(s).iter().any(|t| crate::text::is_placeholder(t)));
                let post_lifted = draft.postconditions.iter().any(|p| {
                    !p.negated && p.tokens.iter().any(|t| crate::text::is_placeholder(t))
                });
                schema_lifted && post_lifted
            };
            if let Ok(segments) = budget.segment(&traj) {
                if validate_segments(&segments, traj.steps.len()) {
                    for seg in segments {
                        let fallback_frac = (seg.start..=seg.end)
                            .filter(|&i| record.provenance[i] == StepSource::Fallback)
                            .count() as f64
                            / seg.len() as f64;
                        if fallback_frac < 0.5 || !env.phase_completed(&seg.label) {
                            continue;
                        }
                        match budget.abstract_segment(&traj, &seg, cfg.prior_counts(), episode_no) {
                            Ok(draft) if !draft.schema.is_empty() && generalizes(&draft) => {
                                let _ = dedup_insert(&mut self.lib, draft, self.encoder, episode_no);
                            }
                            Ok(_) => {}
                            Err(_) => break, // budget exhausted
                        }
                    }
                }
            }
        }

        let llm_calls = budget.used();
        self.tr(format!("port calls: {llm_calls}"));
        for s in &record.steps {
            self.step_buffer.push(s.clone());
        }
        self.episodes.push(record.clone());
        self.lib.stats.episodes_seen += 1;
        self.maintain(port, episode_no)?;

        let action_steps = record.steps.len().max(1) as f64;
        let fallback_steps = record
            .provenance
            .iter()
            .filter(|p| **p == StepSource::Fallback)
            .count() as f64;
        let metrics = RunMetrics {
            schema: METRICS_SCHEMA,
            episode: episode_no,
            task: record.task.clone(),
            success,
            steps: record.steps.len(),
            reuse_rate: 1.0 - fallback_steps / action_steps,
            fallback_rate: fallback_steps / action_steps,
            llm_calls,
            procedure_count: self.lib.active_count(),
            meta_count: self.lib.metas.len(),
            meta_executions: meta_execs_here,
            mean_posterior: mean_posterior(&self.lib),
        };
        Ok((record, metrics))
    }

    /// Runs `n` episodes with per-episode seeds derived from `base_seed`.
    pub fn run_episodes(
        &mut self,
        env: &mut dyn Environment,
        port: &dyn AbstractionPort,
        n: usize,
        base_seed: u64,
    ) -> Result<Vec<RunMetrics>> {
        (0..n)
            .map(|i| {
                self.run_episode(env, port, base_seed.wrapping_add(i as u64))
                    .map(|(_, m)| m)
            })
            .collect()
    }

    fn execute_meta(
        &mut self,
        env: &mut dyn Environment,
        meta_id: &str,
        bindings: &Bindings,
        start_obs: String,
        max_steps: usize,
        episode_no: u64,
    ) -> Result<MetaExecState> {
        let meta = self
            .lib
            .metas
            .get(meta_id)
            .cloned()
            .ok_or_else(|| EngineError::UnresolvedMember(meta_id.to_string()))?;
        let n = meta.members.len();
        let mut state = MetaExecState {
            steps: Vec::new(),
            labels: Vec::new(),
            obs: start_obs,
            done: false,
            rewarded: false,
            y: false,
            runs: vec![0; n],
            skips: vec![0; n],
        };
        let mut aborted = false;
        let mut i = 0usize;
        while i < n && !state.done && state.steps.len() < max_steps {
            let view = self.view(&state.obs);
            let has = |t: &str| view.has_token(t);
            match control_step(&meta, i, 0, &has, bindings) {
                Verdict::Skip => {
                    state.skips[i] += 1;
                    self.tr(format!("meta {meta_id}[{i}]: skip"));
                    i += 1;
                    continue;
                }
                Verdict::Abort => {
                    self.tr(format!("meta {meta_id}[{i}]: abort"));
                    aborted = true;
                    break;
                }
                _ => {}
            }
            let member_id = &meta.members[i];
            let (schema, post) = {
                let p = self
                    .lib
                    .procedures
                    .get(member_id)
                    .ok_or_else(|| EngineError::UnresolvedMember(member_id.clone()))?;
                (p.schema.steps.clone(), p.postconditions.clone())
            };
            let mut repeat_count = 0u32;
            loop {
                let context = self.view(&state.obs).canonical;
                let budget_left = max_steps - state.steps.len();
                let exec = execute_schema(env, &schema, bindings, std::mem::take(&mut state.obs), budget_left);
                state.steps.extend(exec.steps);
                state.labels.extend(exec.labels);
                state.obs = exec.obs;
                state.done = exec.done;
                state.rewarded |= exec.rewarded;
                let post_view = self.view(&state.obs);
                let y_member = exec.all_effective && check_post(&post, &post_view, bindings);
                {
                    let p = self.lib.procedures.get_mut(member_id).expect("member id");
                    p.record_outcome(y_member, &context, episode_no);
                    enforce_failure_cap(p, self.lib.config.k_fail, self.encoder);
                }
                self.lib.stats.total_invocations += 1;
                self.tr(format!("meta {meta_id}[{i}] ran {member_id}: y={y_member}"));
                if state.done || state.steps.len() >= max_steps {
                    break;
                }
                let has_after = |t: &str| post_view.has_token(t);
                match control_step(&meta, i, repeat_count, &has_after, bindings) {
                    Verdict::Repeat => {
                        repeat_count += 1;
                        self.tr(format!("meta {meta_id}[{i}]: repeat {repeat_count}"));
                        continue;
                    }
                    Verdict::Abort => {
                        aborted = true;
                        break;
                    }
                    _ => break,
                }
            }
            state.runs[i] += 1;
            if aborted {
                break;
            }
            i += 1;
        }
        let final_view = self.view(&state.obs);
        let last_post = meta
            .members
            .last()
            .and_then(|id| self.lib.procedures.get(id))
            .map(|p| p.postconditions.clone())
            .unwrap_or_default();
        state.y = !aborted && i == n && check_post(&last_post, &final_view, bindings);
        Ok(state)
    }

    /// Post-episode maintenance: contrastive refinement, mode
    /// specialization, meta composition and trimming, ontology rebuilds,
    /// and capacity enforcement.
    fn maintain(&mut self, port: &dyn AbstractionPort, now: u64) -> Result<()> {
        let cfg = self.lib.config.clone();
        if self.ablation.contrast {
            self.refinement_pass(port)?;
            self.specialization_pass(now);
        }
        if self.ablation.meta && now % 10 == 9 {
            let episodes: Vec<EpisodeRecord> = self.episodes.iter().cloned().collect();
            maybe_compose(&mut self.lib, &episodes, port, now)?;
            self.trim_metas();
        }
        if self.ablation.ontology && now % 25 == 24 {
            let corpus: Vec<String> = self.step_buffer.iter().map(|s| s.obs.clone()).collect();
            if !corpus.is_empty() {
                self.lib.ontology =
                    build_ontology(&corpus, cfg.k_vocab, cfg.theta_sim, self.encoder);
            }
        }
        // A procedure that fails more than it works is worse than relearning
        // the skill: retiring it also stops it from absorbing healthy drafts
        // on dedup merge (the incumbent's schema would survive the union).
        for p in self.lib.procedures.values_mut() {
            if !p.retired && p.usage_count >= 2 && p.posterior.beta >= 3.0 && p.posterior.mean() < 0.5
            {
                p.retired = true;
            }
        }
        if self.lib.procedures.len() > cfg.n_p {
            let want = self.lib.procedures.len() - cfg.n_p;
            prune(&mut self.lib, now, want);
        }
        Ok(())
    }

    fn gate_fires(&self, p: &Procedure) -> bool {
        match self.lib.config.refine_gate {
            RefineGate::FixedMin => {
                refine_trigger(p, self.lib.config.n_min_s, self.lib.config.n_min_f)
            }
            RefineGate::Sequential => {
                if p.successes.is_empty() || p.failures.is_empty() {
                    return false;
                }
                // Fire once the failure rate credibly exceeds the Beta(1,4)
                // baseline (mean 0.2) at the 0.95 level.
                let fail_post =
                    BetaPosterior::new(1.0 + p.failures.len() as f64, 1.0 + p.successes.len() as f64);
                bayes_superiority(&fail_post, &BetaPosterior::new(1.0, 4.0), 2_000, fnv1a(p.id.as_bytes()))
                    .map(|prob| prob > 0.95)
                    .unwrap_or(false)
            }
        }
    }

    fn refinement_pass(&mut self, port: &dyn AbstractionPort) -> Result<()> {
        let ids: Vec<String> = self.lib.procedures.keys().cloned().collect();
        for id in ids {
            let (fire, contexts, successes, failures) = {
                let p = &self.lib.procedures[&id];
                let contexts = p.successes.len() + p.failures.len();
                let fresh = self.refine_marks.get(&id).copied().unwrap_or(0) < contexts;
                (
                    fresh && !p.retired && self.gate_fires(p),
                    contexts,
                    p.successes.clone(),
                    p.failures.clone(),
                )
            };
            if !fire {
                continue;
            }
            let mut d = port.contrast(&successes, &failures)?;
            self.refine_marks.insert(id.clone(), contexts);
            // Proposed new preconditions are validated against the
            // procedure's own vocabulary (goal, schema, conditions). A word
            // the procedure never talks about cannot gate when it applies;
            // accepting one pins the skill to a sampling coincidence of the
            // contrast windows.
            {
                let p = &self.lib.procedures[&id];
                let mut vocab: BTreeSet<String> = tokenize(&p.goal).into_iter().collect();
                for s in &p.schema.steps {
                    vocab.extend(tokenize(s));
                }
                for pat in p.preconditions.iter().chain(p.postconditions.iter()) {
                    vocab.extend(pat.tokens.iter().cloned());
                }
                let in_vocab = |pat: &Pattern| {
                    pat.tokens
                        .iter()
                        .all(|t| crate::text::is_placeholder(t) || vocab.contains(t))
                };
                d.pre_plus.retain(in_vocab);
                d.pre_minus.retain(in_vocab);
            }
            if d.is_empty() {
                continue;
            }
            let refined = {
                let p = &self.lib.procedures[&id];
                match apply_refinement(p, &d) {
                    Ok(r) => r,
                    Err(_) => continue, // stale edit list; keep the original
                }
            };
            let mut refined = refined;
            refined.embedding = embed_procedure(&refined, self.encoder);
            self.tr(format!("refined {id}"));
            self.lib.procedures.insert(id, refined);
        }
        Ok(())
    }

    fn specialization_pass(&mut self, now: u64) {
        let min_contexts = (2 * self.lib.config.n_min_s).max(8);
        // Splitting is only warranted when the procedure shows real trouble;
        // a reliable procedure with multimodal contexts is just widely used.
        let ids: Vec<String> = self
            .lib
            .procedures
            .values()
            .filter(|p| {
                !p.retired
                    && p.specialized_into.is_empty()
                    && p.successes.len() >= min_contexts
                    && p.failures.len() >= self.lib.config.n_min_f
            })
            .map(|p| p.id.clone())
            .collect();
        for id in ids {
            let modes = {
                let p = &self.lib.procedures[&id];
                detect_modes(&p.successes, self.encoder, self.lib.config.silhouette_min)
            };
            let Some(mut modes) = modes else { continue };
            // Only portable state words may become variant preconditions.
            for m in modes.iter_mut() {
                m.retain(|t| !t.contains(':') && !t.chars().any(|c| c.is_ascii_digit()));
            }
            if modes.iter().any(|m| m.is_empty()) {
                continue;
            }
            let variants = specialize(&self.lib.procedures[&id], &modes);
            if variants.len() < 2 {
                continue;
            }
            let variant_ids: Vec<String> = variants.iter().map(|v| v.id.clone()).collect();
            for mut v in variants {
                v.created = now;
                v.embedding = embed_procedure(&v, self.encoder);
                self.lib.procedures.insert(v.id.clone(), v);
            }
            let parent = self.lib.procedures.get_mut(&id).expect("parent id");
            parent.retired = true;
            parent.specialized_into = variant_ids;
            self.tr(format!("specialized {id}"));
        }
    }

    fn trim_metas(&mut self) {
        let ids: Vec<String> = self.lib.metas.keys().cloned().collect();
        for id in ids {
            let trimmed = refine_meta(&self.lib.metas[&id]);
            match trimmed {
                Some(t) => {
                    self.lib.metas.insert(id, t);
                }
                None => {
                    self.lib.metas.remove(&id);
                }
            }
        }
    }
}

struct MetaExecState {
    steps: Vec<EpisodeStep>,
    labels: Vec<Option<String>>,
    obs: String,
    done: bool,
    rewarded: bool,
    y: bool,
    runs: Vec<u64>,
    skips: Vec<u64>,
}

/// Builds a library offline from a labeled corpus: segment and abstract each
/// trajectory (parallelizable), then merge drafts in corpus order through
/// `dedup_insert` so the result is independent of `jobs`.
pub fn build_memory_offline(
    corpus: &[Trajectory],
    cfg: &crate::config::EngineConfig,
    port: &dyn AbstractionPort,
    enc: &dyn Encoder,
    jobs: usize,
) -> Result<Library> {
    cfg.validate()?;
    let mut lib = Library::new(cfg.clone());
    let mut texts: Vec<String> = Vec::new();
    for t in corpus {
        texts.push(t.task.clone());
        for s in &t.steps {
            texts.push(s.obs.clone());
        }
    }
    lib.ontology = build_ontology(&texts, cfg.k_vocab, cfg.theta_sim, enc);

    let jobs = jobs.max(1).min(corpus.len().max(1));
    let prior = cfg.prior_counts();
    let mut drafts: Vec<Vec<Procedure>> = Vec::with_capacity(corpus.len());
    if jobs <= 1 {
        for traj in corpus {
            drafts.push(draft_trajectory(traj, port, prior)?);
        }
    } else {
        let results: Vec<std::sync::Mutex<Vec<(usize, Result<Vec<Procedure>>)>>> =
            (0..jobs).map(|_| std::sync::Mutex::new(Vec::new())).collect();
        std::thread::scope(|scope| {
            for w in 0..jobs {
                let slot = &results[w];
                scope.spawn(move || {
                    let mut local = Vec::new();
                    for (i, traj) in corpus.iter().enumerate() {
                        if i % jobs == w {
                            local.push((i, draft_trajectory(traj, port, prior)));
                        }
                    }
                    *slot.lock().expect("worker mutex") = local;
                });
            }
        });
        let mut ordered: Vec<Option<Vec<Procedure>>> = vec![None; corpus.len()];
        for slot in results {
            for (i, r) in slot.into_inner().expect("worker mutex") {
                ordered[i] = Some(r?);
            }
        }
        drafts = ordered.into_iter().map(|d| d.expect("complete cover")).collect();
    }

    for per_traj in drafts {
        for draft in per_traj {
            if draft.schema.is_empty() {
                continue;
            }
            dedup_insert(&mut lib, draft, enc, 0)?;
        }
    }
    lib.stats.episodes_seen = corpus.len() as u64;
    Ok(lib)
}

/// Abstracts every trajectory in a corpus into draft procedures without
/// deduplication; raw input for the description-length threshold sweep.
pub fn draft_corpus(
    corpus: &[Trajectory],
    port: &dyn AbstractionPort,
    prior: (f64, f64),
) -> Result<Vec<Procedure>> {
    let mut drafts = Vec::new();
    for traj in corpus {
        drafts.extend(draft_trajectory(traj, port, prior)?);
    }
    Ok(drafts)
}

fn draft_trajectory(
    traj: &Trajectory,
    port: &dyn AbstractionPort,
    prior: (f64, f64),
) -> Result<Vec<Procedure>> {
    if traj.steps.is_empty() {
        return Ok(Vec::new());
    }
    let segments = port.segment(traj)?;
    if !validate_segments(&segments, traj.steps.len()) {
        return Ok(Vec::new());
    }
    segments
        .iter()
        .map(|seg| port.abstract_segment(traj, seg, prior, 0))
        .collect()
}

/// The worked-example memory used by the trace command and its tests: three
/// kitchen skills with informative posteriors plus a weaker distractor.
pub fn worked_example_library(cfg: crate::config::EngineConfig, enc: &dyn Encoder) -> Library {
    let mut lib = Library::new(cfg);
    let mut add = |id: &str,
                   goal: &str,
                   pre: &[&str],
                   schema: &[&str],
                   post: &[&str],
                   a: f64,
                   b: f64,
                   usage: u64| {
        let mut p = Procedure::new(id, goal, 0).with_posterior(BetaPosterior::new(a, b));
        p.preconditions = pre.iter().map(|s| Pattern::positive(s)).collect();
        p.postconditions = post.iter().map(|s| Pattern::positive(s)).collect();
        p.schema = crate::memory::procedure::ActionSchema::new(schema.iter().copied());
        p.usage_count = usage;
        p.prior_mass = 2.0;
        p.embedding = embed_procedure(&p, enc);
        lib.procedures.insert(p.id.clone(), p);
    };
    add(
        "proc_acquire",
        "acquire <object>",
        &["<object>"],
        &["go to <object>", "take <object>"],
        &["holding <object>"],
        12.0,
        2.0,
        12,
    );
    add(
        "proc_cool_fridge",
        "cool <object> with <appliance>",
        &["holding <object>"],
        &[
            "go to <appliance>",
            "open <appliance>",
            "cool <object> with <appliance>",
            "close <appliance>",
        ],
        &["<object> cooled"],
        10.0,
        3.0,
        11,
    );
    add(
        "proc_cool_freezer",
        "chill <object> inside freezer box",
        &[],
        &["go to freezer", "chill <object>"],
        &["<object> cooled"],
        4.0,
        6.0,
        8,
    );
    add(
        "proc_place",
        "place <object> on <location>",
        &["holding <object>"],
        &["go to <location>", "put <object> on <location>"],
        &["<object> on <location>"],
        8.0,
        2.0,
        8,
    );
    lib
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::EngineConfig;
    use crate::embed::HashedBowEncoder;
    use crate::env::minikitchen::{MiniKitchen, Phase, TaskSpec};
    use crate::env::{domain_synonyms, generate_corpus};
    use crate::port::{NoisyPort, ScriptedPort};

    fn encoder() -> HashedBowEncoder {
        HashedBowEncoder::new(64).with_synonyms(domain_synonyms())
    }

    fn chilled_env() -> MiniKitchen {
        let mut env = MiniKitchen::new(0.0);
        env.reset_with(
            TaskSpec::Put {
                modifier: Some(Phase::Cool),
                object: "lettuce".into(),
                location: "counter1".into(),
            },
            42,
            false,
        );
        env
    }

    #[test]
    fn phrase_matching_is_contiguous() {
        let view = ObsView::new("the lettuce is on counter2. you are at counter1.", None);
        let phrase = |ts: &[&str]| ts.iter().map(|t| t.to_string()).collect::<Vec<_>>();
        let b = Bindings::from([("<object>".to_string(), "lettuce".to_string())]);
        assert!(view.phrase_satisfied(&phrase(&["<object>", "is", "on", "counter2"]), &b));
        // tokens present but not contiguous
        assert!(!view.phrase_satisfied(&phrase(&["<object>", "is", "on", "counter1"]), &b));
        // unbound placeholder is a single-token wildcard
        assert!(view.phrase_satisfied(&phrase(&["<location>", "is", "on"]), &b));
    }

    #[test]
    fn ontology_grounds_tokens_and_phrases() {
        let enc = encoder();
        let corpus = vec!["greens lettuce greens lettuce holding".to_string()];
        let ont = build_ontology(&corpus, 10, 0.8, &enc);
        assert!(!ont.is_empty());
        let view = ObsView::new("you are holding the greens", Some(&ont));
        assert!(view.has_token("lettuce"));
        let b = Bindings::from([("<object>".to_string(), "lettuce".to_string())]);
        let phrase: Vec<String> = ["holding", "the", "<object>"].iter().map(|s| s.to_string()).collect();
        assert!(view.phrase_satisfied(&phrase, &b));
        // without grounding the synonym is opaque
        let blind = ObsView::new("you are holding the greens", None);
        assert!(!blind.has_token("lettuce"));
        assert!(!blind.phrase_satisfied(&phrase, &b));
    }

    #[test]
    fn segment_validation() {
        let seg = |s, e| Segment {
            start: s,
            end: e,
            label: "x".into(),
        };
        assert!(validate_segments(&[seg(0, 1), seg(2, 3)], 4));
        assert!(!validate_segments(&[seg(0, 2), seg(2, 3)], 4)); // overlap
        assert!(!validate_segments(&[seg(2, 3), seg(0, 1)], 4)); // unordered
        assert!(!validate_segments(&[seg(0, 4)], 4)); // out of bounds
    }

    #[test]
    fn worked_example_episode_runs_in_eight_actions() {
        let enc = encoder();
        let lib = worked_example_library(EngineConfig::default(), &enc);
        let mut engine = Engine::new(lib, &enc);
        engine.tracing = true;
        let port = ScriptedPort::new();
        let mut env = chilled_env();
        // run_episode resets the env itself; force the fixture task instead
        // by resetting afterwards is not possible, so use a wrapper seed that
        // yields the chilled-lettuce task via reset_with below.
        let (record, metrics) = {
            struct Fixed(MiniKitchen);
            impl Environment for Fixed {
                fn reset(&mut self, seed: u64) -> String {
                    self.0.reset_with(
                        TaskSpec::Put {
                            modifier: Some(Phase::Cool),
                            object: "lettuce".into(),
                            location: "counter1".into(),
                        },
                        seed,
                        false,
                    )
                }
                fn task(&self) -> &str {
                    self.0.task()
                }
                fn step(&mut self, a: &str) -> (String, f64, bool) {
                    self.0.step(a)
                }
                fn legal_actions(&self) -> Vec<String> {
                    self.0.legal_actions()
                }
                fn oracle_action(&self) -> Option<String> {
                    self.0.oracle_action()
                }
                fn last_label(&self) -> Option<&str> {
                    self.0.last_label()
                }
                fn bindings(&self) -> Bindings {
                    self.0.bindings()
                }
                fn phase_completed(&self, l: &str) -> bool {
                    self.0.phase_completed(l)
                }
            }
            let mut fixed = Fixed(env);
            engine.run_episode(&mut fixed, &port, 42).unwrap()
        };
        assert!(record.terminal_success, "trace:\n{}", engine.trace.join("\n"));
        assert_eq!(record.steps.len(), 8, "trace:\n{}", engine.trace.join("\n"));
        assert_eq!(metrics.fallback_rate, 0.0);
        assert_eq!(metrics.llm_calls, 2, "parse + segment only");
        let cool = &engine.lib.procedures["proc_cool_fridge"];
        assert_eq!((cool.posterior.alpha, cool.posterior.beta), (11.0, 3.0));
        let place = &engine.lib.procedures["proc_place"];
        assert_eq!((place.posterior.alpha, place.posterior.beta), (9.0, 2.0));
        let freezer = &engine.lib.procedures["proc_cool_freezer"];
        assert_eq!((freezer.posterior.alpha, freezer.posterior.beta), (4.0, 6.0));
        env = chilled_env();
        let _ = env;
    }

    #[test]
    fn empty_library_all_fallback_with_perfect_stub() {
        let enc = encoder();
        let mut cfg = EngineConfig::default();
        cfg.llm_budget = u32::MAX; // unlimited: pure oracle fallback
        let lib = Library::new(cfg);
        let mut engine = Engine::new(lib, &enc);
        let port = ScriptedPort::with_rho(1.0);
        let mut env = MiniKitchen::new(0.0);
        let (record, metrics) = engine.run_episode(&mut env, &port, 7).unwrap();
        assert!(record.terminal_success);
        assert_eq!(metrics.fallback_rate, 1.0);
        assert_eq!(metrics.reuse_rate, 0.0);
        // the successful fallback segments were abstracted into memory
        assert!(engine.lib.active_count() > 0);
    }

    #[test]
    fn episodes_are_deterministic_under_seed() {
        let enc = encoder();
        let port = ScriptedPort::new();
        let run = || {
            let lib = Library::new(EngineConfig::default());
            let mut engine = Engine::new(lib, &enc);
            let mut env = MiniKitchen::new(0.2);
            engine.run_episodes(&mut env, &port, 20, 99).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn offline_build_compresses_and_is_idempotent() {
        let enc = encoder();
        let cfg = EngineConfig::default();
        let port = ScriptedPort::new();
        let corpus = generate_corpus(100, 1234, 0.0, 30);
        let lib = build_memory_offline(&corpus, &cfg, &port, &enc, 1).unwrap();
        assert!(!lib.is_empty());
        assert!(lib.len() * 5 < 100, "library size {} is not a 5:1 compression over 100 trajectories", lib.len());
        // doubling the corpus changes nothing
        let mut doubled = corpus.clone();
        doubled.extend(corpus.iter().cloned());
        let lib2 = build_memory_offline(&doubled, &cfg, &port, &enc, 1).unwrap();
        assert_eq!(lib.procedures.keys().collect::<Vec<_>>(), lib2.procedures.keys().collect::<Vec<_>>());
    }

    #[test]
    fn offline_build_is_job_invariant() {
        let enc = encoder();
        let cfg = EngineConfig::default();
        let port = NoisyPort::new(ScriptedPort::new(), 0.2, 5);
        let corpus = generate_corpus(60, 77, 0.2, 30);
        let a = build_memory_offline(&corpus, &cfg, &port, &enc, 1).unwrap();
        let b = build_memory_offline(&corpus, &cfg, &port, &enc, 8).unwrap();
        assert_eq!(a.to_snapshot_json().unwrap(), b.to_snapshot_json().unwrap());
    }

    #[test]
    fn built_memory_supports_high_success_low_fallback() {
        let enc = encoder();
        let cfg = EngineConfig::default();
        let port = ScriptedPort::new();
        let corpus = generate_corpus(120, 5000, 0.3, 30);
        let lib = build_memory_offline(&corpus, &cfg, &port, &enc, 4).unwrap();
        let mut engine = Engine::new(lib, &enc);
        let mut env = MiniKitchen::new(0.3);
        let metrics = engine.run_episodes(&mut env, &port, 120, 424242).unwrap();
        // Offline drafts carry weak (2,1) posteriors, so a few get retired
        // and relearned early on; judge the converged half.
        let summary = summarize(&metrics[60..]);
        assert!(
            summary.success_rate >= 0.85,
            "success {:.2}",
            summary.success_rate
        );
        assert!(
            summary.mean_fallback_rate <= 0.10,
            "fallback {:.2}",
            summary.mean_fallback_rate
        );
    }

    #[test]
    fn meta_ablation_kills_meta_executions() {
        let enc = encoder();
        let port = ScriptedPort::new();
        let cfg = EngineConfig::default();
        let corpus = generate_corpus(80, 31, 0.0, 30);
        let run = |flags: AblationFlags| {
            let lib = build_memory_offline(&corpus, &cfg, &port, &enc, 1).unwrap();
            let mut engine = Engine::new(lib, &enc).with_ablation(flags);
            let mut env = MiniKitchen::new(0.0);
            let metrics = engine.run_episodes(&mut env, &port, 60, 3).unwrap();
            summarize(&metrics)
        };
        let on = run(AblationFlags::default());
        let off = run(AblationFlags {
            meta: false,
            ..AblationFlags::default()
        });
        assert_eq!(off.meta_executions, 0);
        assert_eq!(off.meta_count, 0);
        // with meta enabled the recurring sequences eventually compose
        assert!(on.meta_count > 0, "no metas composed: {on:?}");
    }
}
