//! Engine configuration: every threshold, weight, and capacity in one place.
//!
//! Values can be loaded from a flat `key = value` text file; unknown keys are
//! rejected so sweep scripts fail loudly on typos.

use crate::error::{EngineError, Result};
use serde::{Deserialize, Serialize};

/// Sign convention for the information-gain term of the utility score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InfoTerm {
    /// Absolute differential entropy (matches the worked trace numbers).
    #[default]
    Abs,
    /// Raw (signed) differential entropy.
    Raw,
}

/// Which pruning utility formula to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PruneStrategy {
    /// Exponential temporal decay blend (default).
    #[default]
    Blend,
    /// Linear-age blend with a capped frequency term.
    LinearAge,
    /// Expected-future-value product form.
    FutureValue,
}

/// Gate deciding when contrastive refinement fires.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RefineGate {
    /// Fixed minimum success/failure counts.
    #[default]
    FixedMin,
    /// Sequential Bayesian superiority test at 0.95.
    Sequential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    /// Dedup-merge cosine threshold.
    pub theta_dup: f64,
    /// Confidence threshold below which selection falls back to zero-shot.
    pub theta_conf: f64,
    /// Episode-frequency threshold for meta-procedure creation.
    pub theta_meta: f64,
    /// Ontology clustering similarity threshold.
    pub theta_sim: f64,
    /// Context-similarity cutoff for the failure-risk estimate.
    pub theta_risk: f64,
    /// Minimum success contexts before refinement.
    pub n_min_s: usize,
    /// Minimum failure contexts before refinement.
    pub n_min_f: usize,
    /// Pruning-utility reliability weight.
    pub lambda_r: f64,
    /// Pruning-utility frequency weight.
    pub lambda_f: f64,
    /// Pruning-utility recency weight.
    pub lambda_t: f64,
    /// Exploration (information-gain) weight in expected utility.
    pub lambda_info: f64,
    /// Failure cost in expected utility.
    pub c_fail: f64,
    /// Reward scale in expected utility.
    pub r_max: f64,
    /// Per-procedure failure-context capacity.
    pub k_fail: usize,
    /// Episode buffer capacity (steps).
    pub n_b: usize,
    /// Procedure library capacity.
    pub n_p: usize,
    /// Meta-procedure capacity.
    pub n_meta: usize,
    /// Temporal decay constant (episodes) for pruning.
    pub tau: f64,
    /// Vocabulary size for ontology construction.
    pub k_vocab: usize,
    /// Embedding dimension.
    pub d: usize,
    /// Max port calls per episode.
    pub llm_budget: u32,
    /// Episode step horizon.
    pub horizon: usize,
    /// Candidate set size for retrieval.
    pub top_k: usize,
    /// Sign convention for the entropy term.
    pub info_term: InfoTerm,
    /// Pruning formula selector.
    pub prune_strategy: PruneStrategy,
    /// Refinement gate selector.
    pub refine_gate: RefineGate,
    /// max_age used by the linear-age pruning strategy.
    pub max_age: usize,
    /// Recent-episode window for meta mining and N_total accounting.
    pub window: usize,
    /// Minimum sequence length for meta mining.
    pub min_meta_len: usize,
    /// Minimum occurrences for a mined sequence.
    pub min_occurrences: usize,
    /// Noisy-stub corruption probability.
    pub p_noise: f64,
    /// Zero-shot stub success rate.
    pub rho_llm: f64,
    /// Silhouette threshold for execution-mode detection.
    pub silhouette_min: f64,
    /// Discount for the future-value pruning strategy.
    pub gamma: f64,
    /// Optional empirical-Bayes prior; `None` means Beta(1,1).
    pub prior: Option<(f64, f64)>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            theta_dup: 0.85,
            theta_conf: 0.4,
            theta_meta: 0.15,
            theta_sim: 0.8,
            theta_risk: 0.7,
            n_min_s: 3,
            n_min_f: 3,
            lambda_r: 0.5,
            lambda_f: 0.3,
            lambda_t: 0.2,
            lambda_info: 0.1,
            c_fail: 0.5,
            r_max: 1.0,
            k_fail: 15,
            n_b: 1000,
            n_p: 200,
            n_meta: 50,
            tau: 50.0,
            k_vocab: 60,
            d: 64,
            llm_budget: 8,
            horizon: 30,
            top_k: 10,
            info_term: InfoTerm::Abs,
            prune_strategy: PruneStrategy::Blend,
            refine_gate: RefineGate::FixedMin,
            max_age: 100,
            window: 100,
            min_meta_len: 3,
            min_occurrences: 2,
            p_noise: 0.0,
            rho_llm: 0.42,
            silhouette_min: 0.4,
            gamma: 0.9,
            prior: None,
        }
    }
}

impl EngineConfig {
    /// Checks the cross-field invariants. Called on load and before snapshots.
    pub fn validate(&self) -> Result<()> {
        let sum = self.lambda_r + self.lambda_f + self.lambda_t;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(EngineError::InvalidConfig(format!(
                "lambda_r + lambda_f + lambda_t must be 1.0, got {sum}"
            )));
        }
        for (name, v) in [
            ("theta_dup", self.theta_dup),
            ("theta_conf", self.theta_conf),
            ("theta_meta", self.theta_meta),
            ("theta_sim", self.theta_sim),
            ("theta_risk", self.theta_risk),
        ] {
            if !(0.0 < v && v < 1.0) {
                return Err(EngineError::InvalidConfig(format!(
                    "{name} must lie in (0,1), got {v}"
                )));
            }
        }
        for (name, v) in [
            ("k_fail", self.k_fail),
            ("n_b", self.n_b),
            ("n_p", self.n_p),
            ("n_meta", self.n_meta),
            ("d", self.d),
            ("horizon", self.horizon),
            ("top_k", self.top_k),
        ] {
            if v == 0 {
                return Err(EngineError::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if self.tau <= 0.0 {
            return Err(EngineError::InvalidConfig("tau must be positive".into()));
        }
        Ok(())
    }

    /// Parses a flat `key = value` file. `#` starts a comment.
    pub fn from_kv_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                EngineError::InvalidConfig(format!("line {}: expected key = value", lineno + 1))
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies a single `key = value` override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn f(v: &str, k: &str) -> Result<f64> {
            v.parse()
                .map_err(|_| EngineError::InvalidConfig(format!("{k}: bad float {v:?}")))
        }
        fn u(v: &str, k: &str) -> Result<usize> {
            v.parse()
                .map_err(|_| EngineError::InvalidConfig(format!("{k}: bad integer {v:?}")))
        }
        match key {
            "theta_dup" => self.theta_dup = f(value, key)?,
            "theta_conf" => self.theta_conf = f(value, key)?,
            "theta_meta" => self.theta_meta = f(value, key)?,
            "theta_sim" => self.theta_sim = f(value, key)?,
            "theta_risk" => self.theta_risk = f(value, key)?,
            "n_min_s" => self.n_min_s = u(value, key)?,
            "n_min_f" => self.n_min_f = u(value, key)?,
            "lambda_r" => self.lambda_r = f(value, key)?,
            "lambda_f" => self.lambda_f = f(value, key)?,
            "lambda_t" => self.lambda_t = f(value, key)?,
            "lambda_info" => self.lambda_info = f(value, key)?,
            "c_fail" => self.c_fail = f(value, key)?,
            "r_max" => self.r_max = f(value, key)?,
            "k_fail" => self.k_fail = u(value, key)?,
            "n_b" => self.n_b = u(value, key)?,
            "n_p" => self.n_p = u(value, key)?,
            "n_meta" => self.n_meta = u(value, key)?,
            "tau" => self.tau = f(value, key)?,
            "k_vocab" => self.k_vocab = u(value, key)?,
            "d" => self.d = u(value, key)?,
            "llm_budget" => self.llm_budget = u(value, key)? as u32,
            "horizon" => self.horizon = u(value, key)?,
            "top_k" => self.top_k = u(value, key)?,
            "max_age" => self.max_age = u(value, key)?,
            "window" => self.window = u(value, key)?,
            "min_meta_len" => self.min_meta_len = u(value, key)?,
            "min_occurrences" => self.min_occurrences = u(value, key)?,
            "p_noise" => self.p_noise = f(value, key)?,
            "rho_llm" => self.rho_llm = f(value, key)?,
            "silhouette_min" => self.silhouette_min = f(value, key)?,
            "gamma" => self.gamma = f(value, key)?,
            "info_term" => {
                self.info_term = match value {
                    "abs" => InfoTerm::Abs,
                    "raw" => InfoTerm::Raw,
                    other => {
                        return Err(EngineError::InvalidConfig(format!(
                            "info_term: expected abs|raw, got {other:?}"
                        )))
                    }
                }
            }
            "prune_strategy" => {
                self.prune_strategy = match value {
                    "blend" => PruneStrategy::Blend,
                    "linear_age" => PruneStrategy::LinearAge,
                    "future_value" => PruneStrategy::FutureValue,
                    other => {
                        return Err(EngineError::InvalidConfig(format!(
                            "prune_strategy: expected blend|linear_age|future_value, got {other:?}"
                        )))
                    }
                }
            }
            "refine_gate" => {
                self.refine_gate = match value {
                    "fixed_min" => RefineGate::FixedMin,
                    "sequential" => RefineGate::Sequential,
                    other => {
                        return Err(EngineError::InvalidConfig(format!(
                            "refine_gate: expected fixed_min|sequential, got {other:?}"
                        )))
                    }
                }
            }
            "prior" => {
                let (a, b) = value.split_once(',').ok_or_else(|| {
                    EngineError::InvalidConfig("prior: expected alpha,beta".into())
                })?;
                self.prior = Some((f(a.trim(), key)?, f(b.trim(), key)?));
            }
            other => {
                return Err(EngineError::InvalidConfig(format!("unknown key {other:?}")))
            }
        }
        Ok(())
    }

    /// Prior evidence counts for freshly created procedures.
    pub fn prior_counts(&self) -> (f64, f64) {
        self.prior.unwrap_or((1.0, 1.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        EngineConfig::default().validate().unwrap();
    }

    #[test]
    fn weight_sum_enforced() {
        let mut cfg = EngineConfig::default();
        cfg.lambda_r = 0.9;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn kv_roundtrip_and_unknown_key() {
        let cfg = EngineConfig::from_kv_text("theta_dup = 0.9\n# comment\nd = 32\n").unwrap();
        assert_eq!(cfg.theta_dup, 0.9);
        assert_eq!(cfg.d, 32);
        assert!(EngineConfig::from_kv_text("no_such_key = 1\n").is_err());
    }
}
