use crate::text::{is_placeholder, tokenize};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Entity bindings for placeholder slots, e.g. `<object>` -> `lettuce`.
pub type Bindings = BTreeMap<String, String>;

/// A bag-of-tokens observation pattern, optionally negated.
///
/// A positive pattern matches when every token (after binding substitution)
/// is present in the observation; a negated pattern matches exactly when the
/// positive form does not.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pattern {
    pub tokens: Vec<String>,
    #[serde(default)]
    pub negated: bool,
}

impl Pattern {
    pub fn positive(text: &str) -> Self {
        Self {
            tokens: tokenize(text),
            negated: false,
        }
    }

    pub fn negative(text: &str) -> Self {
        Self {
            tokens: tokenize(text),
            negated: true,
        }
    }

    /// The same pattern with the negation flag flipped.
    pub fn negate(&self) -> Self {
        Self {
            tokens: self.tokens.clone(),
            negated: !self.negated,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Canonical display form, `!` prefix for negation.
    pub fn display(&self) -> String {
        let body = self.tokens.join(" ");
        if self.negated {
            format!("!{body}")
        } else {
            body
        }
    }

    /// Matches against an observation described by a token predicate.
    ///
    /// Placeholders are substituted from `bindings`; an unbound placeholder
    /// is treated as a wildcard.
    pub fn matches_with(&self, has_token: &dyn Fn(&str) -> bool, bindings: &Bindings) -> bool {
        let positive = self.tokens.iter().all(|t| {
            if is_placeholder(t) {
                match bindings.get(t) {
                    Some(entity) => has_token(entity),
                    None => true,
                }
            } else {
                has_token(t)
            }
        });
        positive != self.negated
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn obs(text: &str) -> HashSet<String> {
        tokenize(text).into_iter().collect()
    }

    #[test]
    fn positive_and_negated() {
        let o = obs("you see a fridge near the counter");
        let has = |t: &str| o.contains(t);
        assert!(Pattern::positive("fridge").matches_with(&has, &Bindings::new()));
        assert!(!Pattern::negative("fridge").matches_with(&has, &Bindings::new()));
        assert!(Pattern::negative("oven").matches_with(&has, &Bindings::new()));
    }

    #[test]
    fn placeholder_binding() {
        let o = obs("you see lettuce");
        let has = |t: &str| o.contains(t);
        let mut b = Bindings::new();
        b.insert("<object>".into(), "lettuce".into());
        assert!(Pattern::positive("<object>").matches_with(&has, &b));
        b.insert("<object>".into(), "apple".into());
        assert!(!Pattern::positive("<object>").matches_with(&has, &b));
        // unbound placeholder is a wildcard
        assert!(Pattern::positive("<location>").matches_with(&has, &b));
    }
}
