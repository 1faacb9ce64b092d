//! Reasoning paths: alternating entity/relation sequences rooted at a seed.

use std::collections::BTreeSet;

use crate::kgstore::{EntityId, KnowledgeGraph, RelationId, Triple};

/// Separator used for the canonical string key of a path. Tabs cannot occur
/// inside labels loaded from TSV, so the key is unambiguous.
pub const CANONICAL_SEPARATOR: char = '\t';

/// Label-level path as exchanged with policies: `[v0, r1, v1, ..., rk, vk]`.
pub type LabelPath = Vec<String>;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ReasoningPath {
    seed: EntityId,
    hops: Vec<(RelationId, EntityId)>,
}

pub type PathSet = BTreeSet<ReasoningPath>;

impl ReasoningPath {
    pub fn seed(seed: EntityId) -> Self {
        Self {
            seed,
            hops: Vec::new(),
        }
    }

    pub fn root(&self) -> EntityId {
        self.seed
    }

    /// Number of hops `k`.
    pub fn len(&self) -> usize {
        self.hops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hops.is_empty()
    }

    pub fn hops(&self) -> &[(RelationId, EntityId)] {
        &self.hops
    }

    /// Final entity (the path's frontier node).
    pub fn frontier(&self) -> EntityId {
        self.hops.last().map_or(self.seed, |&(_, v)| v)
    }

    pub fn entities(&self) -> impl Iterator<Item = EntityId> + '_ {
        std::iter::once(self.seed).chain(self.hops.iter().map(|&(_, v)| v))
    }

    pub fn visits(&self, v: EntityId) -> bool {
        self.entities().any(|e| e == v)
    }

    pub fn extend(&self, relation: RelationId, tail: EntityId) -> Self {
        let mut hops = Vec::with_capacity(self.hops.len() + 1);
        hops.extend_from_slice(&self.hops);
        hops.push((relation, tail));
        Self {
            seed: self.seed,
            hops,
        }
    }

    /// Prefix with `k` hops. Panics if `k > self.len()`.
    pub fn prefix(&self, k: usize) -> Self {
        Self {
            seed: self.seed,
            hops: self.hops[..k].to_vec(),
        }
    }

    pub fn last_triple(&self) -> Option<Triple> {
        let n = self.hops.len();
        if n == 0 {
            return None;
        }
        let head = if n == 1 { self.seed } else { self.hops[n - 2].1 };
        let (relation, tail) = self.hops[n - 1];
        Some(Triple {
            head,
            relation,
            tail,
        })
    }

    pub fn triples(&self) -> impl Iterator<Item = Triple> + '_ {
        self.entities()
            .zip(self.hops.iter())
            .map(|(head, &(relation, tail))| Triple {
                head,
                relation,
                tail,
            })
    }

    pub fn is_simple(&self) -> bool {
        let mut seen = BTreeSet::new();
        self.entities().all(|e| seen.insert(e))
    }

    pub fn labels(&self, g: &KnowledgeGraph) -> LabelPath {
        let mut out = Vec::with_capacity(2 * self.hops.len() + 1);
        out.push(g.entity_label(self.seed).to_string());
        for &(r, v) in &self.hops {
            out.push(g.relation_label(r).to_string());
            out.push(g.entity_label(v).to_string());
        }
        out
    }

    pub fn canonical(&self, g: &KnowledgeGraph) -> String {
        canonical_key(&self.labels(g))
    }

    /// Resolves a label path against `g`. Returns `None` when the sequence
    /// is malformed, a label is unknown, or any triple is absent.
    pub fn from_labels(g: &KnowledgeGraph, labels: &[String]) -> Option<Self> {
        if labels.is_empty() || labels.len().is_multiple_of(2) {
            return None;
        }
        let mut path = Self::seed(g.entity_id(&labels[0])?);
        for pair in labels[1..].chunks(2) {
            let relation = g.relation_id(&pair[0])?;
            let tail = g.entity_id(&pair[1])?;
            let t = Triple {
                head: path.frontier(),
                relation,
                tail,
            };
            if !g.contains(t) {
                return None;
            }
            path.hops.push((relation, tail));
        }
        Some(path)
    }
}

pub fn canonical_key(labels: &[String]) -> String {
    labels.join(&CANONICAL_SEPARATOR.to_string())
}

/// True iff every consecutive triple of the label path exists in `g`.
pub fn label_path_is_valid(g: &KnowledgeGraph, labels: &[String]) -> bool {
    ReasoningPath::from_labels(g, labels).is_some()
}

pub fn frontier_of(paths: &PathSet) -> BTreeSet<EntityId> {
    paths.iter().map(ReasoningPath::frontier).collect()
}

pub fn paths_to_labels(g: &KnowledgeGraph, paths: &PathSet) -> Vec<LabelPath> {
    paths.iter().map(|p| p.labels(g)).collect()
}
