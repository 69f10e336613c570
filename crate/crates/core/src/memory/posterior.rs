use serde::{Deserialize, Serialize};

/// Beta(alpha, beta) evidence counts over a success probability.
///
/// Counts are reals: variant specialization inherits scaled counts, so
/// integer bookkeeping would lose information.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaPosterior {
    pub alpha: f64,
    pub beta: f64,
}

impl BetaPosterior {
    pub fn new(alpha: f64, beta: f64) -> Self {
        Self { alpha, beta }
    }

    /// Uniform Beta(1,1) prior.
    pub fn uniform() -> Self {
        Self::new(1.0, 1.0)
    }

    pub fn is_valid(&self) -> bool {
        self.alpha > 0.0 && self.beta > 0.0 && self.alpha.is_finite() && self.beta.is_finite()
    }

    /// alpha / (alpha + beta)
    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    /// alpha*beta / ((alpha+beta)^2 (alpha+beta+1))
    pub fn variance(&self) -> f64 {
        let s = self.alpha + self.beta;
        self.alpha * self.beta / (s * s * (s + 1.0))
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    /// Total evidence mass alpha + beta.
    pub fn total(&self) -> f64 {
        self.alpha + self.beta
    }

    /// One observation: alpha += y, beta += 1 - y.
    pub fn observe(&mut self, success: bool) {
        if success {
            self.alpha += 1.0;
        } else {
            self.beta += 1.0;
        }
    }
}
