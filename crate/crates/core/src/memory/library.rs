use super::meta::MetaProcedure;
use super::procedure::Procedure;
use crate::config::EngineConfig;
use crate::embed::ontology::{Ontology, OntologyCluster};
use crate::error::{EngineError, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const SNAPSHOT_VERSION: &str = "1";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LibraryStats {
    pub episodes_seen: u64,
    pub total_invocations: u64,
}

/// The persistent procedure/meta-procedure store.
///
/// Plain value type; concurrent use goes through a single-writer lock owned
/// by the caller, readers work on clones.
#[derive(Debug, Clone, PartialEq)]
pub struct Library {
    pub config: EngineConfig,
    pub procedures: BTreeMap<String, Procedure>,
    pub metas: BTreeMap<String, MetaProcedure>,
    pub ontology: Ontology,
    pub stats: LibraryStats,
}

/// On-disk snapshot layout, version-gated.
#[derive(Serialize, Deserialize)]
struct SnapshotDoc {
    version: String,
    config: EngineConfig,
    procedures: Vec<Procedure>,
    meta_procedures: Vec<MetaProcedure>,
    ontology: Vec<OntologyCluster>,
    stats: LibraryStats,
}

impl Library {
    pub fn new(config: EngineConfig) -> Self {
        Self {
            config,
            procedures: BTreeMap::new(),
            metas: BTreeMap::new(),
            ontology: Ontology::default(),
            stats: LibraryStats::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.procedures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.procedures.is_empty()
    }

    /// Procedures eligible for retrieval (not retired).
    pub fn active_procedures(&self) -> impl Iterator<Item = &Procedure> {
        self.procedures.values().filter(|p| !p.retired)
    }

    pub fn active_count(&self) -> usize {
        self.active_procedures().count()
    }

    /// Serializes to the versioned JSON snapshot. Deterministic: maps are
    /// ordered, so equal libraries produce byte-equal snapshots.
    pub fn to_snapshot_json(&self) -> Result<String> {
        let doc = SnapshotDoc {
            version: SNAPSHOT_VERSION.to_string(),
            config: self.config.clone(),
            procedures: self.procedures.values().cloned().collect(),
            meta_procedures: self.metas.values().cloned().collect(),
            ontology: self.ontology.clusters.clone(),
            stats: self.stats.clone(),
        };
        serde_json::to_string_pretty(&doc)
            .map_err(|e| EngineError::InvalidConfig(format!("snapshot serialize: {e}")))
    }

    pub fn from_snapshot_json(text: &str) -> Result<Self> {
        let doc: SnapshotDoc = serde_json::from_str(text).map_err(|e| {
            let (line, column) = (e.line(), e.column());
            EngineError::SnapshotParse {
                offset: byte_offset(text, line, column),
                line,
                column,
                message: e.to_string(),
            }
        })?;
        if doc.version != SNAPSHOT_VERSION {
            return Err(EngineError::SnapshotVersion(doc.version));
        }
        Ok(Self {
            config: doc.config,
            procedures: doc
                .procedures
                .into_iter()
                .map(|p| (p.id.clone(), p))
                .collect(),
            metas: doc
                .meta_procedures
                .into_iter()
                .map(|m| (m.id.clone(), m))
                .collect(),
            ontology: Ontology {
                clusters: doc.ontology,
            },
            stats: doc.stats,
        })
    }
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let mut offset = 0;
    for (i, l) in text.lines().enumerate() {
        if i + 1 == line {
            return offset + column.saturating_sub(1);
        }
        offset += l.len() + 1;
    }
    offset
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::posterior::BetaPosterior;
    use crate::memory::procedure::ActionSchema;

    fn library_of(n: usize) -> Library {
        let mut lib = Library::new(EngineConfig::default());
        for i in 0..n {
            let mut p = Procedure::new(format!("proc_{i:03}"), format!("goal {i}"), i as u64)
                .with_posterior(BetaPosterior::new(1.0 + i as f64, 1.0));
            p.schema = ActionSchema::new([format!("step {i}")]);
            p.embedding = {
                let mut v = vec![0.0; 8];
                v[i % 8] = 1.0;
                v
            };
            lib.procedures.insert(p.id.clone(), p);
        }
        lib
    }

    #[test]
    fn empty_roundtrip() {
        let lib = Library::new(EngineConfig::default());
        let json = lib.to_snapshot_json().unwrap();
        assert_eq!(Library::from_snapshot_json(&json).unwrap(), lib);
    }

    #[test]
    fn large_roundtrip_is_identity() {
        let lib = library_of(187);
        let json = lib.to_snapshot_json().unwrap();
        let back = Library::from_snapshot_json(&json).unwrap();
        assert_eq!(back, lib);
        // and embeddings are bit-equal
        for (id, p) in &lib.procedures {
            assert_eq!(back.procedures[id].embedding, p.embedding);
        }
    }

    #[test]
    fn unknown_version_rejected() {
        let lib = library_of(1);
        let json = lib.to_snapshot_json().unwrap().replace(
            "\"version\": \"1\"",
            "\"version\": \"99\"",
        );
        assert!(matches!(
            Library::from_snapshot_json(&json),
            Err(EngineError::SnapshotVersion(v)) if v == "99"
        ));
    }

    #[test]
    fn corrupt_snapshot_reports_offset() {
        let err = Library::from_snapshot_json("{\"version\": \"1\", !!").unwrap_err();
        match err {
            EngineError::SnapshotParse { offset, .. } => assert!(offset > 0),
            other => panic!("unexpected error {other:?}"),
        }
    }
}
