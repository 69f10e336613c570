//! Standalone analyses behind the engine's derived constants: the
//! description-length duplicate threshold, the fallback-calibrated
//! confidence threshold, empirical-Bayes priors, evolution-strategy weight
//! adaptation, and the future-value pruning utility. Every analysis is a
//! pure function of its inputs plus an explicit seed, and renders to a CSV
//! curve plus a JSON summary.

use crate::bayes::{expected_utility, UtilityParams};
use crate::config::EngineConfig;
use crate::embed::Encoder;
use crate::error::{EngineError, Result};
use crate::maintain::{dedup_insert, DedupOutcome};
use crate::memory::library::Library;
use crate::memory::procedure::Procedure;
use crate::text::tokenize;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use statrs::function::gamma::{digamma, ln_gamma};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

/// One grid point of the description-length sweep.
#[derive(Debug, Clone, Serialize)]
pub struct DlPoint {
    pub theta: f64,
    pub library_size: usize,
    pub description_length: f64,
}

/// Shannon entropy (nats) of a token multiset.
fn token_entropy(counts: &BTreeMap<String, usize>) -> f64 {
    let total: usize = counts.values().sum();
    if total == 0 {
        return 0.0;
    }
    counts
        .values()
        .map(|&c| {
            let p = c as f64 / total as f64;
            -p * p.ln()
        })
        .sum()
}

/// Sweeps the duplicate-merge threshold over `theta_grid`, building the
/// library at each point through the production `dedup_insert` path, and
/// returns the threshold minimizing total description length together with
/// the full curve.
///
/// DL(θ) = N_p(θ)·ln|A| + Σ_i n_i·H_i, where |A| is the action vocabulary
/// measured from the drafts, n_i the number of drafts absorbed into
/// procedure i, and H_i the entropy of the pooled action-token distribution
/// of those drafts. Weighting by n_i is what prices over-merging: one big
/// cluster must encode every member trajectory with a blurred distribution,
/// while a split library pays ln|A| once per extra procedure.
pub fn dl_optimal_dup_threshold(
    drafts: &[Procedure],
    theta_grid: &[f64],
    cfg: &EngineConfig,
    enc: &dyn Encoder,
) -> Result<(f64, Vec<DlPoint>)> {
    if theta_grid.is_empty() || theta_grid.iter().any(|t| *t <= 0.0 || *t >= 1.0) {
        return Err(EngineError::InvalidConfig(
            "theta grid must be non-empty and inside (0,1)".into(),
        ));
    }
    let mut vocab: BTreeMap<String, usize> = BTreeMap::new();
    for d in drafts {
        for step in &d.schema.steps {
            for tok in tokenize(step) {
                *vocab.entry(tok).or_default() += 1;
            }
        }
    }
    let ln_vocab = (vocab.len().max(2) as f64).ln();

    let mut curve = Vec::with_capacity(theta_grid.len());
    for &theta in theta_grid {
        let mut sweep_cfg = cfg.clone();
        sweep_cfg.theta_dup = theta;
        let mut lib = Library::new(sweep_cfg);
        // procedure id -> pooled action tokens of its member drafts
        let mut members: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for draft in drafts {
            let tokens: Vec<String> =
                draft.schema.steps.iter().flat_map(|s| tokenize(s)).collect();
            let id = match dedup_insert(&mut lib, draft.clone(), enc, 0)? {
                DedupOutcome::Inserted(id) => id,
                DedupOutcome::Merged { incumbent } => incumbent,
            };
            let pool = members.entry(id.clone()).or_default();
            for t in tokens {
                *pool.entry(t).or_default() += 1;
            }
            *counts.entry(id).or_default() += 1;
        }
        let data_cost: f64 = members
            .iter()
            .map(|(id, pool)| counts[id] as f64 * token_entropy(pool))
            .sum();
        curve.push(DlPoint {
            theta,
            library_size: lib.len(),
            description_length: lib.len() as f64 * ln_vocab + data_cost,
        });
    }
    let best = curve
        .iter()
        .min_by(|a, b| {
            a.description_length
                .partial_cmp(&b.description_length)
                .unwrap()
                .then(a.theta.partial_cmp(&b.theta).unwrap())
        })
        .expect("non-empty grid");
    Ok((best.theta, curve))
}

/// Confidence threshold justified by the fallback's expected value:
/// θ* = ρ·R_max − (1−ρ)·C_fail − C_llm. Executing a procedure is only
/// worthwhile when its expected utility beats this.
pub fn derived_conf_threshold(rho_llm: f64, r_max: f64, c_fail: f64, c_llm: f64) -> f64 {
    rho_llm * r_max - (1.0 - rho_llm) * c_fail - c_llm
}

/// Miscalibration-aware threshold: the derived base plus a variance margin,
/// θ*_conf = base + λ_calib·Var[EU].
pub fn calibrated_conf_threshold(base: f64, lambda_calib: f64, var_eu: f64) -> f64 {
    base + lambda_calib * var_eu
}

/// Variance of expected-utility scores across the library's active
/// procedures, each scored as its mean EU over a reference observation set.
/// This is the Var[EU] input to `calibrated_conf_threshold`.
pub fn eu_variance(
    lib: &Library,
    reference_obs: &[String],
    params: &UtilityParams,
    enc: &dyn Encoder,
) -> f64 {
    let scores: Vec<f64> = lib
        .active_procedures()
        .map(|p| {
            if reference_obs.is_empty() {
                return 0.0;
            }
            reference_obs
                .iter()
                .map(|obs| expected_utility(p, obs, params, enc).eu)
                .sum::<f64>()
                / reference_obs.len() as f64
        })
        .collect();
    if scores.len() < 2 {
        return 0.0;
    }
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / scores.len() as f64
}

fn beta_loglik(alpha: f64, beta: f64, n: f64, mean_ln: f64, mean_ln1m: f64) -> f64 {
    n * (ln_gamma(alpha + beta) - ln_gamma(alpha) - ln_gamma(beta)
        + (alpha - 1.0) * mean_ln
        + (beta - 1.0) * mean_ln1m)
}

/// Inverse of the digamma function by Newton iteration from Minka's
/// initializer; the derivative is taken by central difference, which is
/// ample at the tolerances involved.
fn inv_digamma(y: f64) -> f64 {
    let mut x = if y >= -2.22 {
        y.exp() + 0.5
    } else {
        -1.0 / (y - digamma(1.0))
    };
    for _ in 0..8 {
        let h = 1e-6 * x.max(1e-6);
        let d = (digamma(x + h) - digamma(x - h)) / (2.0 * h);
        if d.abs() < 1e-300 {
            break;
        }
        x -= (digamma(x) - y) / d;
        if !x.is_finite() || x <= 0.0 {
            x = 1e-8;
        }
    }
    x
}

/// Maximum-likelihood Beta(α₀, β₀) fit to observed success rates, for use
/// as an informative prior on new procedures. Rates at the boundary are
/// clamped into [1e-3, 1−1e-3]; the optimizer is the digamma fixed point
/// seeded from method-of-moments, so the log-likelihood never decreases.
pub fn empirical_bayes_fit(success_rates: &[f64]) -> Result<(f64, f64)> {
    if success_rates.len() < 10 {
        return Err(EngineError::InvalidConfig(format!(
            "empirical-Bayes fit needs at least 10 rates, got {}",
            success_rates.len()
        )));
    }
    let clamped: Vec<f64> = success_rates
        .iter()
        .map(|r| r.clamp(1e-3, 1.0 - 1e-3))
        .collect();
    let n = clamped.len() as f64;
    let mean = clamped.iter().sum::<f64>() / n;
    let var = clamped.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let mean_ln = clamped.iter().map(|x| x.ln()).sum::<f64>() / n;
    let mean_ln1m = clamped.iter().map(|x| (1.0 - x).ln()).sum::<f64>() / n;

    // Method-of-moments start; degenerate variance gets a concentrated but
    // finite prior.
    let common = if var > 1e-12 && var < mean * (1.0 - mean) {
        mean * (1.0 - mean) / var - 1.0
    } else {
        1e4
    };
    let mut alpha = (mean * common).clamp(1e-3, 1e6);
    let mut beta = ((1.0 - mean) * common).clamp(1e-3, 1e6);
    let mut ll = beta_loglik(alpha, beta, n, mean_ln, mean_ln1m);

    for _ in 0..500 {
        let s = digamma(alpha + beta);
        let next_alpha = inv_digamma(s + mean_ln).clamp(1e-6, 1e8);
        let next_beta = inv_digamma(s + mean_ln1m).clamp(1e-6, 1e8);
        let next_ll = beta_loglik(next_alpha, next_beta, n, mean_ln, mean_ln1m);
        if next_ll + 1e-12 < ll {
            // Fixed point overshot; the current iterate is the optimum to
            // working precision.
            break;
        }
        let moved = (next_alpha - alpha).abs() + (next_beta - beta).abs();
        alpha = next_alpha;
        beta = next_beta;
        ll = next_ll;
        if moved < 1e-10 {
            return Ok((alpha, beta));
        }
    }
    let s = digamma(alpha + beta);
    let residual = (digamma(alpha) - s - mean_ln).abs() + (digamma(beta) - s - mean_ln1m).abs();
    if residual > 1e-4 {
        return Err(EngineError::FitFailed(alpha, beta));
    }
    Ok((alpha, beta))
}

/// Euclidean projection onto the probability simplex.
fn project_simplex(w: [f64; 3]) -> [f64; 3] {
    let mut sorted = w;
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, &v) in sorted.iter().enumerate() {
        cum += v;
        let t = (cum - 1.0) / (k as f64 + 1.0);
        if v - t > 0.0 {
            theta = t;
        }
    }
    let mut out = [0.0; 3];
    for i in 0..3 {
        out[i] = (w[i] - theta).max(0.0);
    }
    out
}

/// Gradient-free evolution-strategy adaptation of the pruning weights
/// (λ_r, λ_f, λ_t): λ ← λ + η·(1/Nσ)·Σ F(λ+σε_i)·ε_i, projected back onto
/// the simplex each generation. Deterministic given the seed.
pub fn es_adapt_weights(
    fitness: &dyn Fn(&[f64; 3]) -> f64,
    eta: f64,
    sigma: f64,
    n: usize,
    generations: usize,
    seed: u64,
) -> [f64; 3] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = [1.0 / 3.0; 3];
    if eta == 0.0 || n == 0 {
        return w;
    }
    for _ in 0..generations {
        let mut grad = [0.0; 3];
        for _ in 0..n {
            let eps: [f64; 3] = [
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
            ];
            // Antithetic pair: the difference estimator cancels the fitness
            // baseline, cutting the gradient variance without extra knobs.
            let plus = [
                w[0] + sigma * eps[0],
                w[1] + sigma * eps[1],
                w[2] + sigma * eps[2],
            ];
            let minus = [
                w[0] - sigma * eps[0],
                w[1] - sigma * eps[1],
                w[2] - sigma * eps[2],
            ];
            let f = (fitness(&plus) - fitness(&minus)) / 2.0;
            for i in 0..3 {
                grad[i] += f * eps[i];
            }
        }
        for i in 0..3 {
            w[i] += eta * grad[i] / (n as f64 * sigma);
        }
        w = project_simplex(w);
    }
    w
}

/// Expected-future-value retention utility,
/// U ≈ mean·(n/N_total)·1/(1−γ)·e^{−λ·(now−t_last)}: the posterior mean of
/// one more use, times how often the procedure is reached, over a geometric
/// horizon, decayed by recency.
pub fn derived_pruning_utility(
    p: &Procedure,
    gamma: f64,
    lambda: f64,
    now: u64,
    n_total: u64,
) -> f64 {
    let mean = p.posterior.mean();
    let freq = if n_total > 0 {
        p.usage_count as f64 / n_total as f64
    } else {
        0.0
    };
    let age = now.saturating_sub(p.last_used) as f64;
    mean * freq * (1.0 / (1.0 - gamma)) * (-lambda * age).exp()
}

/// Kendall rank correlation between two score vectors over the same items.
pub fn kendall_tau(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    if n < 2 {
        return 1.0;
    }
    let mut concordant = 0i64;
    let mut discordant = 0i64;
    for i in 0..n {
        for j in (i + 1)..n {
            let x = (a[i] - a[j]).signum();
            let y = (b[i] - b[j]).signum();
            let s = x * y;
            if s > 0.0 {
                concordant += 1;
            } else if s < 0.0 {
                discordant += 1;
            }
        }
    }
    let pairs = (n * (n - 1) / 2) as f64;
    (concordant - discordant) as f64 / pairs
}

/// JSON summary emitted next to each analysis' CSV curve.
#[derive(Debug, Serialize)]
pub struct AnalysisSummary {
    pub analysis: String,
    pub config: serde_json::Value,
    pub result: serde_json::Value,
    pub seed: u64,
}

/// Writes a CSV curve file: one header row, then numeric rows.
pub fn emit_csv<P: AsRef<Path>>(path: P, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

/// Writes the JSON summary for an analysis.
pub fn emit_summary<P: AsRef<Path>>(path: P, summary: &AnalysisSummary) -> Result<()> {
    let text = serde_json::to_string_pretty(summary)
        .map_err(|e| EngineError::InvalidConfig(e.to_string()))?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    f.write_all(b"\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::encoder::HashedBowEncoder;
    use crate::memory::posterior::BetaPosterior;
    use crate::memory::procedure::ActionSchema;
    use rand_distr::Beta as BetaDist;

    fn draft(id: &str, goal: &str, steps: &[&str]) -> Procedure {
        let mut p = Procedure::new(id, goal, 0);
        p.schema = ActionSchema::new(steps.iter().copied());
        p
    }

    #[test]
    fn dl_identical_corpus_prefers_grid_minimum() {
        let enc = HashedBowEncoder::new(64);
        let drafts: Vec<Procedure> = (0..10)
            .map(|i| {
                draft(
                    &format!("d{i}"),
                    "cool <object> with <appliance>",
                    &["go to <appliance>", "cool <object> with <appliance>"],
                )
            })
            .collect();
        let grid = [0.5, 0.7, 0.9];
        let (best, curve) =
            dl_optimal_dup_threshold(&drafts, &grid, &EngineConfig::default(), &enc).unwrap();
        assert!(curve.iter().all(|p| p.library_size == 1), "{curve:?}");
        assert_eq!(best, 0.5);
    }

    #[test]
    fn dl_two_families_give_interior_optimum() {
        let enc = HashedBowEncoder::new(64);
        let mut drafts = Vec::new();
        // two families; within-family variants share goal and schema shape,
        // across families only function words overlap
        for (f, (goal, steps)) in [
            (
                "cool the produce with the fridge appliance",
                ["walk to the fridge", "open the fridge door", "chill the produce inside"],
            ),
            (
                "scrub the dishes in the basin sink",
                ["walk to the basin", "run the water tap", "scrub the dishes clean"],
            ),
        ]
        .iter()
        .enumerate()
        {
            for v in 0..8 {
                let mut p = draft(&format!("f{f}v{v}"), goal, steps);
                // small per-variant wrinkle so within-family cosine < 1
                p.preconditions
                    .insert(crate::memory::pattern::Pattern::positive(&format!(
                        "variant marker {v}"
                    )));
                drafts.push(p);
            }
        }
        let grid: Vec<f64> = (1..19).map(|i| i as f64 * 0.05).collect();
        let (best, curve) =
            dl_optimal_dup_threshold(&drafts, &grid, &EngineConfig::default(), &enc).unwrap();
        let first = curve.first().unwrap();
        let last = curve.last().unwrap();
        let best_point = curve
            .iter()
            .find(|p| p.theta == best)
            .unwrap();
        assert!(best > grid[0] && best < *grid.last().unwrap(), "best={best} {curve:?}");
        assert!(best_point.description_length < first.description_length);
        assert!(best_point.description_length < last.description_length);
    }

    #[test]
    fn dl_library_size_monotone_in_threshold() {
        let enc = HashedBowEncoder::new(64);
        let corpus = crate::env::generate_corpus(40, 99, 0.0, 30);
        let port = crate::port::scripted::ScriptedPort::new();
        let drafts = crate::runtime::draft_corpus(&corpus, &port, (1.0, 1.0)).unwrap();
        let grid: Vec<f64> = (0..6).map(|i| 0.70 + i as f64 * 0.05).collect();
        let (_, curve) =
            dl_optimal_dup_threshold(&drafts, &grid, &EngineConfig::default(), &enc).unwrap();
        // a stricter merge bar can only keep libraries apart
        for w in curve.windows(2) {
            assert!(w[1].library_size >= w[0].library_size, "{curve:?}");
        }
    }

    #[test]
    fn conf_threshold_formula_anchors() {
        assert!((derived_conf_threshold(0.42, 1.0, 0.5, 0.15) - (-0.02)).abs() < 1e-9);
        assert!((derived_conf_threshold(1.0, 1.0, 0.5, 0.0) - 1.0).abs() < 1e-12);
        assert!((derived_conf_threshold(0.5, 1.0, 0.5, 0.0) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn calibrated_threshold_reproduces_operating_point() {
        let base = derived_conf_threshold(0.42, 1.0, 0.5, 0.15);
        assert!((calibrated_conf_threshold(base, 2.0, 0.2) - 0.38).abs() < 0.05);
        assert_eq!(calibrated_conf_threshold(base, 0.0, 0.73), base);
    }

    #[test]
    fn eu_variance_degenerate_library_is_zero() {
        let enc = HashedBowEncoder::new(64);
        let mut lib = Library::new(EngineConfig::default());
        let mut p = draft("only", "cool <object>", &["cool <object>"]);
        p.embedding = crate::embed::embed_procedure(&p, &enc);
        lib.procedures.insert(p.id.clone(), p);
        let params = UtilityParams::from_config(&EngineConfig::default());
        let v = eu_variance(&lib, &["cool the mug".into()], &params, &enc);
        assert_eq!(v, 0.0);
        let base = derived_conf_threshold(0.42, 1.0, 0.5, 0.15);
        assert_eq!(calibrated_conf_threshold(base, 2.0, v), base);
    }

    #[test]
    fn prior_fit_recovers_planted_beta() {
        let dist = BetaDist::new(3.2, 1.8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let rates: Vec<f64> = (0..500).map(|_| dist.sample(&mut rng)).collect();
        let (a, b) = empirical_bayes_fit(&rates).unwrap();
        assert!((a - 3.2).abs() < 0.3, "alpha {a}");
        assert!((b - 1.8).abs() < 0.3, "beta {b}");
    }

    #[test]
    fn prior_fit_symmetric_data_centers_on_half() {
        let rates: Vec<f64> = (0..50)
            .map(|i| 0.5 + 1e-4 * ((i % 5) as f64 - 2.0))
            .collect();
        let (a, b) = empirical_bayes_fit(&rates).unwrap();
        let mean = a / (a + b);
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn prior_fit_beats_method_of_moments() {
        let dist = BetaDist::new(0.7, 2.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rates: Vec<f64> = (0..200).map(|_| dist.sample(&mut rng)).collect();
        let (a, b) = empirical_bayes_fit(&rates).unwrap();
        let n = rates.len() as f64;
        let mean = rates.iter().sum::<f64>() / n;
        let var = rates.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let common = mean * (1.0 - mean) / var - 1.0;
        let (ma, mb) = (mean * common, (1.0 - mean) * common);
        let mean_ln = rates.iter().map(|x| x.ln()).sum::<f64>() / n;
        let mean_ln1m = rates.iter().map(|x| (1.0 - x).ln()).sum::<f64>() / n;
        assert!(
            beta_loglik(a, b, n, mean_ln, mean_ln1m)
                >= beta_loglik(ma, mb, n, mean_ln, mean_ln1m) - 1e-9
        );
    }

    #[test]
    fn prior_fit_rejects_tiny_samples() {
        assert!(empirical_bayes_fit(&[0.5; 9]).is_err());
    }

    #[test]
    fn es_converges_to_planted_peak() {
        let peak = [0.5, 0.3, 0.2];
        let fitness = move |w: &[f64; 3]| {
            -(w[0] - peak[0]).powi(2) - (w[1] - peak[1]).powi(2) - (w[2] - peak[2]).powi(2)
        };
        let w = es_adapt_weights(&fitness, 0.15, 0.1, 24, 200, 11);
        let l1: f64 = w.iter().zip(&peak).map(|(a, b)| (a - b).abs()).sum();
        assert!(l1 <= 0.05, "weights {w:?} l1 {l1}");
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn es_zero_rate_is_identity() {
        let fitness = |w: &[f64; 3]| w[0];
        assert_eq!(
            es_adapt_weights(&fitness, 0.0, 0.1, 16, 50, 3),
            [1.0 / 3.0; 3]
        );
    }

    #[test]
    fn es_constant_fitness_stays_on_simplex() {
        let fitness = |_: &[f64; 3]| 1.0;
        for seed in 0..10 {
            let w = es_adapt_weights(&fitness, 0.05, 0.1, 8, 100, seed);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9, "{w:?}");
            assert!(w.iter().all(|x| *x >= 0.0), "{w:?}");
        }
    }

    #[test]
    fn future_value_zero_usage_annihilates() {
        let mut p = draft("p", "g", &["step"]);
        p.posterior = BetaPosterior::new(9.0, 1.0);
        p.usage_count = 0;
        assert_eq!(derived_pruning_utility(&p, 0.9, 0.02, 50, 100), 0.0);
    }

    #[test]
    fn future_value_horizon_collapse_at_gamma_zero() {
        let mut p = draft("p", "g", &["step"]);
        p.posterior = BetaPosterior::new(8.0, 2.0);
        p.usage_count = 10;
        p.last_used = 40;
        let got = derived_pruning_utility(&p, 0.0, 0.1, 50, 100);
        let want = 0.8 * 0.1 * (-0.1f64 * 10.0).exp();
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn future_value_ranking_tracks_blend() {
        let lambda = 1.0 / 50.0;
        let mut cfg = EngineConfig::default();
        cfg.tau = 1.0 / lambda;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let procs: Vec<Procedure> = (0..50)
            .map(|i| {
                let mut p = draft(&format!("p{i}"), "g", &["step"]);
                p.posterior = BetaPosterior::new(
                    1.0 + rng.random_range(0.0..30.0),
                    1.0 + rng.random_range(0.0..10.0),
                );
                p.usage_count = rng.random_range(18..30);
                p.last_used = rng.random_range(0..100);
                p
            })
            .collect();
        let now = 100;
        let n_total = 400;
        let fv: Vec<f64> = procs
            .iter()
            .map(|p| derived_pruning_utility(p, 0.9, lambda, now, n_total))
            .collect();
        let blend: Vec<f64> = procs
            .iter()
            .map(|p| crate::maintain::pruning_utility(p, now, n_total, &cfg))
            .collect();
        let tau = kendall_tau(&fv, &blend);
        assert!(tau > 0.7, "kendall tau {tau}");
    }

    #[test]
    fn kendall_tau_extremes() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [4.0, 3.0, 2.0, 1.0];
        assert_eq!(kendall_tau(&a, &a), 1.0);
        assert_eq!(kendall_tau(&a, &b), -1.0);
    }

    #[test]
    fn emitters_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("curve.csv");
        emit_csv(&csv, &["theta", "dl"], &[vec![0.5, 10.0], vec![0.6, 9.0]]).unwrap();
        let text = std::fs::read_to_string(&csv).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("theta,dl\n"));

        let json = dir.path().join("summary.json");
        emit_summary(
            &json,
            &AnalysisSummary {
                analysis: "dup-threshold".into(),
                config: serde_json::json!({"grid": [0.5, 0.6]}),
                result: serde_json::json!({"theta_star": 0.6}),
                seed: 7,
            },
        )
        .unwrap();
        let parsed: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
        assert_eq!(parsed["result"]["theta_star"], 0.6);
    }
}
