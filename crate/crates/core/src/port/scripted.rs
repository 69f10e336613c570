//! Deterministic port stubs.
//!
//! `ScriptedPort` is driven entirely by ground-truth step labels and entity
//! bindings carried on the trajectory, so abstraction quality is an upper
//! bound and every run replays exactly. `NoisyPort` corrupts its output with
//! an input-keyed probability, approximating an imperfect model; keying the
//! randomness on the call inputs (not call order) keeps parallel builds
//! deterministic.

use super::{AbstractionPort, Segment, Subgoal};
use crate::embed::encoder::fnv1a;
use crate::error::{EngineError, Result};
use crate::memory::meta::{BranchRule, Verdict};
use crate::memory::pattern::{Bindings, Pattern};
use crate::memory::posterior::BetaPosterior;
use crate::memory::procedure::{ActionSchema, Procedure};
use crate::refine::{frequency_discriminators, Discriminators};
use crate::text::tokenize;
use crate::trajectory::Trajectory;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;

/// Words carrying no state information, dropped from extracted patterns.
const STOPWORDS: &[&str] = &[
    "the", "a", "an", "is", "are", "you", "your", "to", "of", "and", "it", "have", "see",
];

/// Task modifiers and the segment label each one belongs to.
const MODIFIERS: &[(&str, &str)] = &[
    ("chilled", "cool"),
    ("cold", "cool"),
    ("cooled", "cool"),
    ("hot", "heat"),
    ("warm", "heat"),
    ("heated", "heat"),
    ("clean", "clean"),
    ("cleaned", "clean"),
    ("examined", "examine"),
];

/// Surface variants the toy environment may render; the stub reads through
/// them the way a language model would read through paraphrase.
const SURFACE_VARIANTS: &[(&str, &str)] = &[
    ("greens", "lettuce"),
    ("cup", "mug"),
    ("spud", "potato"),
    ("dish", "plate"),
    ("refrigerator", "fridge1"),
];

fn is_stopword(t: &str) -> bool {
    STOPWORDS.contains(&t)
}

fn canonical_word(t: &str) -> &str {
    SURFACE_VARIANTS
        .iter()
        .find(|(alt, _)| *alt == t)
        .map(|(_, canon)| *canon)
        .unwrap_or(t)
}

fn modifier_label(t: &str) -> Option<&'static str> {
    MODIFIERS.iter().find(|(m, _)| *m == t).map(|(_, l)| *l)
}

/// The observation token that marks a phase's characteristic effect.
fn effect_token(label: &str) -> Option<&'static str> {
    match label {
        "acquire" => Some("holding"),
        "cool" => Some("cooled"),
        "heat" => Some("heated"),
        "clean" => Some("cleaned"),
        "place" => Some("on"),
        "examine" => Some("examined"),
        _ => None,
    }
}

/// Canonical lifted goal for a segment label.
pub fn goal_for_label(label: &str) -> String {
    match label {
        "acquire" => "acquire <object>".to_string(),
        "cool" => "cool <object> with <appliance>".to_string(),
        "heat" => "heat <object> with <appliance>".to_string(),
        "clean" => "clean <object> with <appliance>".to_string(),
        "place" => "place <object> on <location>".to_string(),
        "examine" => "examine <object>".to_string(),
        other => other.to_string(),
    }
}

/// Replaces bound entity values with their placeholders, reading through
/// surface variants first.
fn lift(tokens: &[String], bindings: &Bindings) -> Vec<String> {
    tokens
        .iter()
        .map(|t| {
            let canon = canonical_word(t);
            bindings
                .iter()
                .find(|(_, v)| v.as_str() == canon)
                .map(|(k, _)| k.clone())
                .unwrap_or_else(|| canon.to_string())
        })
        .collect()
}

fn lift_action(action: &str, bindings: &Bindings) -> String {
    lift(&tokenize(action), bindings).join(" ")
}

/// Sentence-wise pattern extraction with placeholder lifting.
///
/// Per sentence: stopwords out, bound entities lifted, unbound digit-bearing
/// tokens (incidental rooms and appliances) dropped, modifier/attribute
/// tokens foreign to `label` dropped so sibling segments generalize across
/// task variants. Only sentences that still mention a placeholder yield a
/// pattern; the rest is scene noise.
fn extract_patterns(obs: &str, bindings: &Bindings, label: &str) -> BTreeSet<Pattern> {
    let mut patterns = BTreeSet::new();
    for sentence in obs.split(['.', '\n']) {
        let raw = tokenize(sentence);
        if raw.is_empty() {
            continue;
        }
        let mut tokens = Vec::new();
        let mut has_placeholder = false;
        for t in lift(&raw, bindings) {
            if is_stopword(&t) || t.contains(':') {
                continue;
            }
            if t.starts_with('<') {
                has_placeholder = true;
                tokens.push(t);
                continue;
            }
            if let Some(owner) = modifier_label(&t) {
                if owner != label {
                    continue;
                }
            }
            if t.chars().any(|c| c.is_ascii_digit()) {
                continue; // unbound entity-like token; would overfit
            }
            tokens.push(t);
        }
        if has_placeholder && !tokens.is_empty() {
            patterns.insert(Pattern {
                tokens,
                negated: false,
            });
        }
    }
    patterns
}

fn goal_fallback_pattern(goal: &str, label: &str) -> Pattern {
    let tokens: Vec<String> = tokenize(goal)
        .into_iter()
        .filter(|t| !t.starts_with('<'))
        .collect();
    if tokens.is_empty() {
        Pattern::positive(label)
    } else {
        Pattern {
            tokens,
            negated: false,
        }
    }
}

/// The ground-truth-driven stub.
#[derive(Debug, Clone)]
pub struct ScriptedPort {
    /// Probability that a zero-shot proposal matches the oracle action.
    pub rho: f64,
}

impl Default for ScriptedPort {
    fn default() -> Self {
        Self { rho: 0.42 }
    }
}

impl ScriptedPort {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_rho(rho: f64) -> Self {
        Self { rho }
    }
}

impl AbstractionPort for ScriptedPort {
    fn segment(&self, traj: &Trajectory) -> Result<Vec<Segment>> {
        let mut segments: Vec<Segment> = Vec::new();
        for (i, step) in traj.steps.iter().enumerate() {
            let label = step.label.as_ref().ok_or(EngineError::StubRequiresLabels)?;
            if label == "noise" {
                continue;
            }
            // A run may bridge interior noise steps: the phase is the same
            // activity even when stray actions interleave. Abstraction drops
            // the off-label steps.
            match segments.last_mut() {
                Some(last) if last.label == *label => last.end = i,
                _ => segments.push(Segment {
                    start: i,
                    end: i,
                    label: label.clone(),
                }),
            }
        }
        Ok(segments)
    }

    fn abstract_segment(
        &self,
        traj: &Trajectory,
        seg: &Segment,
        prior: (f64, f64),
        created: u64,
    ) -> Result<Procedure> {
        let bindings = traj.bindings();
        let goal = goal_for_label(&seg.label);
        // Keep only patterns about the segment's subject entity; the task
        // line and bystander objects are scene noise that would block merging
        // of sibling drafts and poison merged preconditions.
        // Door state only matters to the door-using phases; elsewhere an
        // appliance mention is scene noise.
        let appliance_ok = matches!(seg.label.as_str(), "cool" | "heat");
        let relevant = |pats: BTreeSet<Pattern>| -> BTreeSet<Pattern> {
            pats.into_iter()
                .filter(|p| p.tokens.first().map(String::as_str) != Some("task"))
                .filter(|p| {
                    p.tokens.iter().any(|t| t == "<object>")
                        || (appliance_ok && p.tokens.iter().any(|t| t == "<appliance>"))
                })
                .collect()
        };
        let mut pre = relevant(extract_patterns(&traj.steps[seg.start].obs, &bindings, &seg.label));
        // Postconditions are the delta the segment produced, not the scene.
        let mut post: BTreeSet<Pattern> =
            relevant(extract_patterns(traj.obs_after(seg.end), &bindings, &seg.label))
                .into_iter()
                .filter(|p| !pre.contains(p))
                .collect();
        // The postcondition is the phase's characteristic effect, not every
        // true sentence at segment end; incidental state (still holding the
        // object after examining it) would make honest executions read as
        // failures.
        if let Some(effect) = effect_token(&seg.label) {
            post.retain(|p| p.tokens.iter().any(|t| t == effect));
        }
        if pre.is_empty() {
            pre.insert(goal_fallback_pattern(&goal, &seg.label));
        }
        if post.is_empty() {
            post.insert(goal_fallback_pattern(&goal, &seg.label));
        }
        let mut steps: Vec<String> = Vec::new();
        for i in seg.start..=seg.end {
            if traj.steps[i].label.as_deref() != Some(seg.label.as_str()) {
                continue;
            }
            let step = lift_action(&traj.steps[i].action, &bindings);
            // Consecutive repeats are exploration stutter, not structure.
            if steps.last() != Some(&step) {
                steps.push(step);
            }
        }
        let fingerprint = format!(
            "{goal}|{}|{}|{}",
            steps.join(";"),
            pre.iter().map(Pattern::display).collect::<Vec<_>>().join(";"),
            post.iter().map(Pattern::display).collect::<Vec<_>>().join(";"),
        );
        let id = format!("proc_{:016x}", fnv1a(fingerprint.as_bytes()));
        // The source segment is one observed completion of this skill.
        let mut p = Procedure::new(id, goal, created)
            .with_posterior(BetaPosterior::new(prior.0 + 1.0, prior.1));
        p.preconditions = pre;
        p.postconditions = post;
        p.schema = ActionSchema { steps };
        Ok(p)
    }

    fn contrast(&self, successes: &[String], failures: &[String]) -> Result<Discriminators> {
        let (pre_plus, pre_minus) = frequency_discriminators(successes, failures, 0.8, 0.2);
        // Discriminators must be state words; specific entities showing up in
        // one class are sampling noise, and pinning a lifted procedure to
        // them would destroy its generality.
        let state_word = |p: &Pattern| {
            p.tokens.iter().all(|t| {
                !t.contains(':')
                    && !t.chars().any(|c| c.is_ascii_digit())
                    && !is_stopword(t)
                    && canonical_word(t) == t.as_str()
                    && !matches!(
                        t.as_str(),
                        "lettuce" | "apple" | "potato" | "tomato" | "mug" | "plate"
                    )
                    // "holding"/"nothing" appear on both sides of the hand
                    // state ("holding nothing" vs "holding the mug"), so a
                    // bare token can't discriminate anything.
                    && !matches!(t.as_str(), "holding" | "nothing")
            })
        };
        Ok(Discriminators {
            pre_plus: pre_plus.into_iter().filter(state_word).collect(),
            pre_minus: pre_minus.into_iter().filter(state_word).collect(),
            ..Default::default()
        })
    }

    fn distill(&self, members: &[Procedure]) -> Result<Vec<BranchRule>> {
        let mut rules = Vec::new();
        for (i, m) in members.iter().enumerate() {
            // The member's distinctive effect: first postcondition not
            // already implied by its preconditions.
            let effect = m
                .postconditions
                .iter()
                .find(|p| !p.negated && !m.preconditions.contains(*p));
            if let Some(effect) = effect {
                rules.push(BranchRule {
                    index: i,
                    obs_pattern: effect.clone(),
                    verdict: Verdict::Skip,
                    repeat_limit: 2,
                });
            }
            rules.push(BranchRule {
                index: i,
                obs_pattern: Pattern::positive("nothing happens"),
                verdict: Verdict::Abort,
                repeat_limit: 2,
            });
            if let Some(effect) = effect {
                rules.push(BranchRule {
                    index: i,
                    obs_pattern: effect.negate(),
                    verdict: Verdict::Repeat,
                    repeat_limit: 2,
                });
            }
        }
        Ok(rules)
    }

    fn parse_task(&self, instruction: &str) -> Result<Vec<Subgoal>> {
        let tokens = tokenize(instruction);
        // Strip a leading "your task is to" style preamble.
        let start = tokens
            .iter()
            .position(|t| t == "put" || t == "examine")
            .ok_or_else(|| EngineError::TaskUnparsable(instruction.to_string()))?;
        let rest: Vec<&str> = tokens[start + 1..]
            .iter()
            .map(String::as_str)
            .filter(|t| !matches!(*t, "a" | "an" | "the"))
            .collect();
        let unparsable = || EngineError::TaskUnparsable(instruction.to_string());

        if tokens[start] == "examine" {
            let object = rest.first().ok_or_else(unparsable)?.to_string();
            let bindings = Bindings::from([("<object>".to_string(), object)]);
            return Ok(vec![Subgoal {
                description: "examine <object>".to_string(),
                phrase: phrase(&["examined", "the", "<object>"]),
                bindings,
            }]);
        }

        // put [modifier] OBJ on LOC
        let mut iter = rest.iter();
        let mut first = *iter.next().ok_or_else(unparsable)?;
        let modifier = modifier_label(first).map(|l| {
            first = "";
            l
        });
        let object = if first.is_empty() {
            (*iter.next().ok_or_else(unparsable)?).to_string()
        } else {
            first.to_string()
        };
        if iter.next() != Some(&"on") {
            return Err(unparsable());
        }
        let location = (*iter.next().ok_or_else(unparsable)?).to_string();

        let mut bindings = Bindings::from([
            ("<object>".to_string(), object),
            ("<location>".to_string(), location),
        ]);
        let mut subgoals = vec![Subgoal {
            description: "acquire <object>".to_string(),
            phrase: phrase(&["holding", "the", "<object>"]),
            bindings: Bindings::new(), // filled below once complete
        }];
        if let Some(label) = modifier {
            let (appliance, attr) = match label {
                "cool" => ("fridge1", "cooled"),
                "heat" => ("microwave1", "heated"),
                _ => ("sink1", "cleaned"),
            };
            bindings.insert("<appliance>".to_string(), appliance.to_string());
            subgoals.push(Subgoal {
                description: format!("{label} <object> with <appliance>"),
                phrase: phrase(&["<object>", "is", attr]),
                bindings: Bindings::new(),
            });
        }
        subgoals.push(Subgoal {
            description: "place <object> on <location>".to_string(),
            phrase: phrase(&["<object>", "is", "on", "<location>"]),
            bindings: Bindings::new(),
        });
        for sg in &mut subgoals {
            sg.bindings = bindings.clone();
        }
        Ok(subgoals)
    }

    fn zero_shot(
        &self,
        _obs: &str,
        oracle: Option<&str>,
        legal: &[String],
        rng: &mut dyn rand::RngCore,
    ) -> Result<String> {
        let roll: f64 = rng.random();
        if let Some(action) = oracle {
            if roll < self.rho {
                return Ok(action.to_string());
            }
        }
        if legal.is_empty() {
            return Err(EngineError::TaskUnparsable("no legal actions".to_string()));
        }
        Ok(legal[rng.random_range(0..legal.len())].clone())
    }
}

fn phrase(tokens: &[&str]) -> Vec<String> {
    tokens.iter().map(|t| t.to_string()).collect()
}

/// Input-keyed corruption wrapper: with probability `p_noise` a segmentation
/// boundary is dropped, an entity is left unlifted, or a zero-shot proposal
/// ignores the oracle.
pub struct NoisyPort {
    inner: ScriptedPort,
    p_noise: f64,
    seed: u64,
}

impl NoisyPort {
    pub fn new(inner: ScriptedPort, p_noise: f64, seed: u64) -> Self {
        Self {
            inner,
            p_noise,
            seed,
        }
    }

    fn keyed_rng(&self, salt: &str, key: &str) -> ChaCha8Rng {
        let h = fnv1a(format!("{salt}|{key}").as_bytes());
        ChaCha8Rng::seed_from_u64(self.seed ^ h)
    }
}

impl AbstractionPort for NoisyPort {
    fn segment(&self, traj: &Trajectory) -> Result<Vec<Segment>> {
        let mut segments = self.inner.segment(traj)?;
        let mut rng = self.keyed_rng("segment", &traj.task);
        if segments.len() >= 2 && rng.random::<f64>() < self.p_noise {
            // Drop one boundary: merge an adjacent pair under the first label.
            let i = rng.random_range(0..segments.len() - 1);
            let merged_end = segments[i + 1].end;
            segments[i].end = merged_end;
            segments.remove(i + 1);
        }
        Ok(segments)
    }

    fn abstract_segment(
        &self,
        traj: &Trajectory,
        seg: &Segment,
        prior: (f64, f64),
        created: u64,
    ) -> Result<Procedure> {
        let mut rng = self.keyed_rng("abstract", &format!("{}#{}", traj.task, seg.start));
        if rng.random::<f64>() < self.p_noise {
            // Mislift: one entity stays literal across patterns and schema.
            let bindings = traj.bindings();
            if !bindings.is_empty() {
                let victim = bindings
                    .keys()
                    .nth(rng.random_range(0..bindings.len()))
                    .cloned()
                    .unwrap();
                let mut corrupted = traj.clone();
                for step in &mut corrupted.steps {
                    step.bindings.remove(&victim);
                }
                return self.inner.abstract_segment(&corrupted, seg, prior, created);
            }
        }
        self.inner.abstract_segment(traj, seg, prior, created)
    }

    fn contrast(&self, successes: &[String], failures: &[String]) -> Result<Discriminators> {
        self.inner.contrast(successes, failures)
    }

    fn distill(&self, members: &[Procedure]) -> Result<Vec<BranchRule>> {
        self.inner.distill(members)
    }

    fn parse_task(&self, instruction: &str) -> Result<Vec<Subgoal>> {
        self.inner.parse_task(instruction)
    }

    fn zero_shot(
        &self,
        obs: &str,
        oracle: Option<&str>,
        legal: &[String],
        rng: &mut dyn rand::RngCore,
    ) -> Result<String> {
        let degrade: f64 = rng.random();
        let oracle = if degrade < self.p_noise { None } else { oracle };
        self.inner.zero_shot(obs, oracle, legal, rng)
    }
}
