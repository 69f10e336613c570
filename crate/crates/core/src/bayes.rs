//! Posterior math and expected-utility ranking of candidates.

use crate::config::{EngineConfig, InfoTerm};
use crate::embed::{cosine, Encoder};
use crate::memory::meta::MetaProcedure;
use crate::memory::posterior::BetaPosterior;
use crate::memory::procedure::Procedure;
use statrs::function::beta::ln_beta;
use statrs::function::gamma::digamma;

/// alpha / (alpha + beta)
pub fn posterior_mean(post: &BetaPosterior) -> f64 {
    post.mean()
}

/// alpha*beta / ((alpha+beta)^2 (alpha+beta+1))
pub fn posterior_variance(post: &BetaPosterior) -> f64 {
    post.variance()
}

/// Differential entropy of Beta(alpha, beta) in nats:
/// ln B(a,b) - (a-1)ψ(a) - (b-1)ψ(b) + (a+b-2)ψ(a+b)
pub fn beta_entropy(post: &BetaPosterior) -> f64 {
    let (a, b) = (post.alpha, post.beta);
    ln_beta(a, b) - (a - 1.0) * digamma(a) - (b - 1.0) * digamma(b)
        + (a + b - 2.0) * digamma(a + b)
}

/// Absolute entropy change |H(before) - H(after)| between two posteriors.
pub fn information_gain(before: &BetaPosterior, after: &BetaPosterior) -> f64 {
    (beta_entropy(before) - beta_entropy(after)).abs()
}

/// Fraction of recorded failure contexts whose similarity to the current
/// observation exceeds `theta_risk`. Zero when no failures are recorded.
pub fn risk(obs: &str, p: &Procedure, enc: &dyn Encoder, theta_risk: f64) -> f64 {
    if p.failures.is_empty() {
        return 0.0;
    }
    let q = enc.encode(obs);
    let similar = p
        .failures
        .iter()
        .filter(|f| {
            cosine(&q, &enc.encode(f))
                .map(|s| s > theta_risk)
                .unwrap_or(false)
        })
        .count();
    similar as f64 / p.failures.len() as f64
}

/// Scoring parameters for expected utility.
#[derive(Debug, Clone, Copy)]
pub struct UtilityParams {
    pub r_max: f64,
    pub c_fail: f64,
    pub lambda_info: f64,
    pub theta_conf: f64,
    pub theta_risk: f64,
    pub info_term: InfoTerm,
}

impl UtilityParams {
    pub fn from_config(cfg: &EngineConfig) -> Self {
        Self {
            r_max: cfg.r_max,
            c_fail: cfg.c_fail,
            lambda_info: cfg.lambda_info,
            theta_conf: cfg.theta_conf,
            theta_risk: cfg.theta_risk,
            info_term: cfg.info_term,
        }
    }
}

/// An expected-utility score with its decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredCandidate {
    pub id: String,
    pub eu: f64,
    pub relevance: f64,
    pub risk: f64,
    pub posterior_mean: f64,
    pub entropy_term: f64,
}

/// Closed-form expected utility from precomputed relevance and risk:
/// Rel·mean·R_max − Risk·(β/(α+β))·C_fail + λ_info·|H|.
///
/// The entropy term is a constant of the posterior, outside the
/// ρ-expectation, so the closed form integrates the reward/cost terms
/// exactly.
pub fn expected_utility_parts(
    id: &str,
    relevance: f64,
    risk: f64,
    post: &BetaPosterior,
    params: &UtilityParams,
) -> ScoredCandidate {
    let mean = post.mean();
    let fail_mean = post.beta / post.total();
    let entropy = beta_entropy(post);
    let info = match params.info_term {
        InfoTerm::Abs => entropy.abs(),
        InfoTerm::Raw => entropy,
    };
    let eu = relevance * mean * params.r_max - risk * fail_mean * params.c_fail
        + params.lambda_info * info;
    ScoredCandidate {
        id: id.to_string(),
        eu,
        relevance,
        risk,
        posterior_mean: mean,
        entropy_term: info,
    }
}

/// Scores a procedure against an observation (already canonicalized by the
/// caller when grounding is enabled).
pub fn expected_utility(
    p: &Procedure,
    obs: &str,
    params: &UtilityParams,
    enc: &dyn Encoder,
) -> ScoredCandidate {
    let relevance = cosine(&enc.encode(obs), &p.embedding).unwrap_or(0.0);
    let r = risk(obs, p, enc, params.theta_risk);
    expected_utility_parts(&p.id, relevance, r, &p.posterior, params)
}

/// Scores a meta-procedure; relevance from its goal/meta_pre embedding,
/// risk zero (metas keep no failure contexts).
pub fn expected_utility_meta(
    m: &MetaProcedure,
    obs: &str,
    params: &UtilityParams,
    enc: &dyn Encoder,
) -> ScoredCandidate {
    let emb = crate::embed::embed_meta(m, enc);
    let relevance = cosine(&enc.encode(obs), &emb).unwrap_or(0.0);
    expected_utility_parts(&m.id, relevance, 0.0, &m.posterior, params)
}

/// Outcome of ranking: either the argmax candidate above the confidence
/// threshold, or a fallback to zero-shot reasoning.
#[derive(Debug, Clone, PartialEq)]
pub enum Selection {
    Selected(ScoredCandidate),
    Fallback,
}

/// Argmax by EU with deterministic tie-breaking (higher posterior mean,
/// then lexicographic id); Fallback when no candidate reaches `theta_conf`.
pub fn rank_and_decide(mut scored: Vec<ScoredCandidate>, theta_conf: f64) -> Selection {
    scored.sort_by(|a, b| {
        b.eu.partial_cmp(&a.eu)
            .unwrap()
            .then_with(|| b.posterior_mean.partial_cmp(&a.posterior_mean).unwrap())
            .then_with(|| a.id.cmp(&b.id))
    });
    match scored.into_iter().next() {
        Some(best) if best.eu >= theta_conf => Selection::Selected(best),
        _ => Selection::Fallback,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::InfoTerm;

    fn params() -> UtilityParams {
        UtilityParams {
            r_max: 1.0,
            c_fail: 0.5,
            lambda_info: 0.1,
            theta_conf: 0.4,
            theta_risk: 0.7,
            info_term: InfoTerm::Abs,
        }
    }

    #[test]
    fn golden_posterior_numbers() {
        let p10_3 = BetaPosterior::new(10.0, 3.0);
        let p11_3 = BetaPosterior::new(11.0, 3.0);
        assert!((posterior_mean(&p10_3) - 0.76923).abs() < 1e-5);
        assert!((posterior_mean(&p11_3) - 0.78571).abs() < 1e-5);
        assert!((posterior_variance(&p10_3) - 0.01268).abs() < 1e-5);
        assert!((beta_entropy(&p10_3) - (-0.81764)).abs() < 1e-4);
        assert!((beta_entropy(&p11_3) - (-0.88268)).abs() < 1e-4);
        assert!((information_gain(&p10_3, &p11_3) - 0.06504).abs() < 1e-4);
    }

    #[test]
    fn uniform_entropy_is_zero() {
        let u = BetaPosterior::uniform();
        assert!(beta_entropy(&u).abs() < 1e-12);
        assert!(information_gain(&u, &u).abs() < 1e-12);
    }

    #[test]
    fn golden_expected_utility() {
        let sc = expected_utility_parts(
            "fridge",
            0.91,
            0.19,
            &BetaPosterior::new(10.0, 3.0),
            &params(),
        );
        // 0.91·(10/13) − 0.19·(3/13)·0.5 + 0.1·|H(10,3)| = 0.7598
        assert!((sc.eu - 0.7598).abs() < 0.005, "eu = {}", sc.eu);
        // components recombine exactly
        let recombined = sc.relevance * sc.posterior_mean * 1.0
            - sc.risk * (3.0 / 13.0) * 0.5
            + 0.1 * sc.entropy_term;
        assert!((recombined - sc.eu).abs() < 1e-12);
    }

    #[test]
    fn reduces_to_posterior_mean() {
        let mut p = params();
        p.lambda_info = 0.0;
        let sc = expected_utility_parts("x", 1.0, 0.0, &BetaPosterior::uniform(), &p);
        assert!((sc.eu - 0.5).abs() < 1e-12);
    }

    #[test]
    fn monotonicity_with_lambda_zero() {
        let mut prm = params();
        prm.lambda_info = 0.0;
        let base = expected_utility_parts("x", 0.5, 0.3, &BetaPosterior::new(5.0, 5.0), &prm);
        let more_rel = expected_utility_parts("x", 0.6, 0.3, &BetaPosterior::new(5.0, 5.0), &prm);
        let more_alpha = expected_utility_parts("x", 0.5, 0.3, &BetaPosterior::new(6.0, 5.0), &prm);
        let more_risk = expected_utility_parts("x", 0.5, 0.4, &BetaPosterior::new(5.0, 5.0), &prm);
        let more_beta = expected_utility_parts("x", 0.5, 0.3, &BetaPosterior::new(5.0, 6.0), &prm);
        assert!(more_rel.eu > base.eu);
        assert!(more_alpha.eu > base.eu);
        assert!(more_risk.eu < base.eu);
        assert!(more_beta.eu < base.eu);
    }

    #[test]
    fn argmax_invariant_under_joint_scaling() {
        let mut prm = params();
        prm.lambda_info = 0.0;
        let score = |prm: &UtilityParams| {
            rank_and_decide(
                vec![
                    expected_utility_parts("a", 0.8, 0.1, &BetaPosterior::new(8.0, 3.0), prm),
                    expected_utility_parts("b", 0.9, 0.4, &BetaPosterior::new(5.0, 2.0), prm),
                ],
                f64::NEG_INFINITY,
            )
        };
        let before = score(&prm);
        prm.r_max *= 3.7;
        prm.c_fail *= 3.7;
        let after = score(&prm);
        let id = |s: &Selection| match s {
            Selection::Selected(c) => c.id.clone(),
            Selection::Fallback => "fallback".into(),
        };
        assert_eq!(id(&before), id(&after));
    }

    #[test]
    fn empty_candidates_fall_back() {
        assert_eq!(rank_and_decide(vec![], 0.4), Selection::Fallback);
    }

    #[test]
    fn below_threshold_falls_back() {
        let sc = expected_utility_parts("a", 0.1, 0.9, &BetaPosterior::new(1.0, 9.0), &params());
        assert!(sc.eu < 0.4);
        assert_eq!(rank_and_decide(vec![sc], 0.4), Selection::Fallback);
    }

    #[test]
    fn fridge_beats_freezer() {
        let prm = params();
        let fridge = expected_utility_parts("fridge", 0.91, 0.19, &BetaPosterior::new(10.0, 3.0), &prm);
        let freezer = expected_utility_parts("freezer", 0.88, 0.30, &BetaPosterior::new(4.0, 6.0), &prm);
        match rank_and_decide(vec![freezer, fridge], 0.4) {
            Selection::Selected(c) => assert_eq!(c.id, "fridge"),
            Selection::Fallback => panic!("expected a selection"),
        }
    }

    #[test]
    fn variance_shrinks_like_one_over_n() {
        for n in [10u64, 50, 200] {
            // worst case alpha = beta
            let post = BetaPosterior::new(1.0 + n as f64 / 2.0, 1.0 + n as f64 / 2.0);
            assert!(post.variance() <= 1.0 / (4.0 * (n as f64 + 2.0)) + 1e-12);
        }
    }
}
