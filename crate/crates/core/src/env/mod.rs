//! Desk-scale text environment used for end-to-end runs and corpus
//! generation. The engine only sees observation strings and action strings;
//! ground truth (oracle actions, step labels, bindings) feeds the scripted
//! port and evaluation, never selection.

pub mod minikitchen;

pub use minikitchen::{MiniKitchen, TaskSpec};

use crate::memory::pattern::Bindings;

/// A text environment with ground-truth access for stubs and evaluation.
pub trait Environment {
    /// Starts a new episode with a seeded random task; returns the initial
    /// observation.
    fn reset(&mut self, episode_seed: u64) -> String;

    /// Current task instruction.
    fn task(&self) -> &str;

    /// Executes one action: (observation, reward, done).
    fn step(&mut self, action: &str) -> (String, f64, bool);

    /// Syntactically valid actions in the current state (may be
    /// ineffective).
    fn legal_actions(&self) -> Vec<String>;

    /// Ground truth: the action an ideal policy would take now.
    fn oracle_action(&self) -> Option<String>;

    /// Ground truth: phase label of the most recently executed step.
    fn last_label(&self) -> Option<&str>;

    /// Ground truth: task entity bindings.
    fn bindings(&self) -> Bindings;

    /// Ground truth: whether the phase named by `label` has completed.
    fn phase_completed(&self, label: &str) -> bool;
}

/// Rolls out the environment's oracle policy from a freshly reset state,
/// recording a fully labeled trajectory for corpus generation.
pub fn oracle_rollout<E: Environment>(env: &mut E, initial_obs: String, max_steps: usize) -> crate::trajectory::Trajectory {
    let bindings = env.bindings();
    let mut obs = initial_obs;
    let mut steps = Vec::new();
    for _ in 0..max_steps {
        let Some(action) = env.oracle_action() else { break };
        let (next_obs, reward, done) = env.step(&action);
        steps.push(crate::trajectory::TrajStep {
            obs: std::mem::replace(&mut obs, next_obs),
            action,
            reward,
            label: env.last_label().map(str::to_string),
            bindings: bindings.clone(),
        });
        if done {
            break;
        }
    }
    crate::trajectory::Trajectory {
        task: env.task().to_string(),
        steps,
        final_obs: Some(obs),
    }
}

/// Generates a labeled oracle corpus of `n` episodes.
pub fn generate_corpus(n: usize, base_seed: u64, p_syn: f64, max_steps: usize) -> Vec<crate::trajectory::Trajectory> {
    let mut env = MiniKitchen::new(p_syn);
    (0..n)
        .map(|i| {
            let obs = env.reset(base_seed.wrapping_add(i as u64));
            oracle_rollout(&mut env, obs, max_steps)
        })
        .collect()
}

/// Synonym table handed to the encoder; stands in for the semantic
/// smoothing a real sentence encoder would provide. Maps surface variants
/// onto the canonical environment vocabulary.
pub fn domain_synonyms() -> Vec<(&'static str, &'static str)> {
    vec![
        ("greens", "lettuce"),
        ("cup", "mug"),
        ("spud", "potato"),
        ("dish", "plate"),
        ("refrigerator", "fridge1"),
        ("chilled", "cooled"),
        ("cold", "cooled"),
        ("hot", "heated"),
        ("warm", "heated"),
        ("clean", "cleaned"),
        ("cool", "cooled"),
        ("heat", "heated"),
        ("wash", "cleaned"),
    ]
}
