//! Procedural-memory decision engine: trajectory abstraction, Bayesian
//! expected-utility selection, contrastive refinement, meta-procedure
//! composition, ontological grounding, and bounded maintenance — with every
//! language-model-shaped operation isolated behind a deterministic port.

pub mod bayes;
pub mod config;
pub mod embed;
pub mod env;
pub mod error;
pub mod maintain;
pub mod memory;
pub mod meta_compose;
pub mod port;
pub mod refine;
pub mod runtime;
pub mod text;
pub mod theory;
pub mod trajectory;

pub use config::EngineConfig;
pub use error::{EngineError, Result};
pub use memory::{Library, MetaProcedure, Procedure};
pub use runtime::Engine;
