//! Persistent domain types: posteriors, patterns, procedures,
//! meta-procedures, episodes, and the snapshot-backed library.

pub mod episode;
pub mod library;
pub mod meta;
pub mod pattern;
pub mod posterior;
pub mod procedure;

pub use episode::{EpisodeRecord, EpisodeStep, StepSource};
pub use library::{Library, LibraryStats, SNAPSHOT_VERSION};
pub use meta::{BranchRule, MetaProcedure, Verdict};
pub use pattern::{Bindings, Pattern};
pub use posterior::BetaPosterior;
pub use procedure::{validate_procedure, ActionSchema, Procedure, CONTEXT_SNIPPET_LEN};
