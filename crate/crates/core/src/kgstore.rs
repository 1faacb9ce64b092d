//! Interned triple store with inverse-edge augmentation.
//!
//! Entities and relations are interned into dense `u32` handles in order of
//! first appearance. When augmentation is on, every relation `r` gets a
//! companion relation labelled `r` + suffix (default `.inv`) and each triple
//! `(h, r, t)` also yields `(t, r.inv, h)`. A label that already ends in the
//! suffix is treated as the inverse of its stem, so pre-augmented dumps load
//! without producing `r.inv.inv`.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;

use thiserror::Error;

pub const DEFAULT_INVERSE_SUFFIX: &str = ".inv";

#[derive(Debug, Error)]
pub enum KgError {
    #[error("triple #{index}: empty {field} label")]
    EmptyLabel { index: usize, field: &'static str },
    #[error("{path}:{line}: expected 3 tab-separated fields, found {found}")]
    Arity {
        path: String,
        line: usize,
        found: usize,
    },
    #[error("unknown entity id {0}")]
    UnknownEntity(u32),
    #[error("unknown entity label {0:?}")]
    UnknownLabel(String),
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntityId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RelationId(pub u32);

impl EntityId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RelationId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

/// Raw labelled triple as read from disk: `(head, relation, tail)`.
pub type RawTriple = (String, String, String);

/// Outgoing edges of one entity, in `(relation id, tail id)` order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborSet {
    pub center: EntityId,
    pub edges: Vec<Triple>,
}

#[derive(Debug, Clone)]
pub struct GraphOptions {
    pub augment: bool,
    pub inverse_suffix: String,
}

impl Default for GraphOptions {
    fn default() -> Self {
        Self {
            augment: true,
            inverse_suffix: DEFAULT_INVERSE_SUFFIX.to_string(),
        }
    }
}

#[derive(Debug, Default)]
struct Interner {
    labels: Vec<String>,
    index: HashMap<String, u32>,
}

impl Interner {
    fn intern(&mut self, label: &str) -> u32 {
        if let Some(&id) = self.index.get(label) {
            return id;
        }
        let id = self.labels.len() as u32;
        self.labels.push(label.to_string());
        self.index.insert(label.to_string(), id);
        id
    }

    fn get(&self, label: &str) -> Option<u32> {
        self.index.get(label).copied()
    }
}

/// Immutable knowledge graph. Safe to share across threads once built.
#[derive(Debug)]
pub struct KnowledgeGraph {
    entities: Interner,
    relations: Interner,
    inverse_of: Vec<Option<RelationId>>,
    out: Vec<Vec<(RelationId, EntityId)>>,
    edge_count: usize,
    augmented: bool,
    inverse_suffix: String,
}

struct Builder {
    entities: Interner,
    relations: Interner,
    inverse_of: Vec<Option<RelationId>>,
    out: Vec<Vec<(RelationId, EntityId)>>,
    suffix: String,
}

impl Builder {
    fn entity(&mut self, label: &str) -> EntityId {
        let id = self.entities.intern(label);
        if id as usize == self.out.len() {
            self.out.push(Vec::new());
        }
        EntityId(id)
    }

    fn relation(&mut self, label: &str) -> RelationId {
        let id = self.relations.intern(label);
        if id as usize == self.inverse_of.len() {
            self.inverse_of.push(None);
        }
        RelationId(id)
    }

    /// Returns the inverse of `rel`, creating and linking it on first use.
    fn inverse(&mut self, rel: RelationId) -> RelationId {
        if let Some(inv) = self.inverse_of[rel.index()] {
            return inv;
        }
        let label = self.relations.labels[rel.index()].clone();
        let inv_label = match label.strip_suffix(self.suffix.as_str()) {
            Some(stem) if !stem.is_empty() => stem.to_string(),
            _ => format!("{label}{}", self.suffix),
        };
        let inv = self.relation(&inv_label);
        self.inverse_of[rel.index()] = Some(inv);
        self.inverse_of[inv.index()] = Some(rel);
        inv
    }
}

/// Builds a graph from labelled triples. Duplicates collapse; with
/// `opts.augment` each triple also contributes its inverse edge.
pub fn build_graph<'a, I>(raw: I, opts: &GraphOptions) -> Result<KnowledgeGraph, KgError>
where
    I: IntoIterator<Item = &'a RawTriple>,
{
    let mut b = Builder {
        entities: Interner::default(),
        relations: Interner::default(),
        inverse_of: Vec::new(),
        out: Vec::new(),
        suffix: opts.inverse_suffix.clone(),
    };
    for (index, (h, r, t)) in raw.into_iter().enumerate() {
        for (field, value) in [("head", h), ("relation", r), ("tail", t)] {
            if value.is_empty() {
                return Err(KgError::EmptyLabel { index, field });
            }
        }
        let head = b.entity(h);
        let rel = b.relation(r);
        let tail = b.entity(t);
        b.out[head.index()].push((rel, tail));
        if opts.augment {
            let inv = b.inverse(rel);
            b.out[tail.index()].push((inv, head));
        }
    }

    let mut edge_count = 0;
    for row in &mut b.out {
        row.sort_unstable();
        row.dedup();
        edge_count += row.len();
    }

    Ok(KnowledgeGraph {
        entities: b.entities,
        relations: b.relations,
        inverse_of: b.inverse_of,
        out: b.out,
        edge_count,
        augmented: opts.augment,
        inverse_suffix: b.suffix,
    })
}

impl KnowledgeGraph {
    pub fn entity_count(&self) -> usize {
        self.entities.labels.len()
    }

    pub fn relation_count(&self) -> usize {
        self.relations.labels.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn is_augmented(&self) -> bool {
        self.augmented
    }

    pub fn inverse_suffix(&self) -> &str {
        &self.inverse_suffix
    }

    pub fn entity_id(&self, label: &str) -> Option<EntityId> {
        self.entities.get(label).map(EntityId)
    }

    pub fn relation_id(&self, label: &str) -> Option<RelationId> {
        self.relations.get(label).map(RelationId)
    }

    pub fn entity_label(&self, id: EntityId) -> &str {
        &self.entities.labels[id.index()]
    }

    pub fn relation_label(&self, id: RelationId) -> &str {
        &self.relations.labels[id.index()]
    }

    pub fn inverse_of(&self, id: RelationId) -> Option<RelationId> {
        self.inverse_of[id.index()]
    }

    pub fn entities(&self) -> impl Iterator<Item = EntityId> + '_ {
        (0..self.entity_count() as u32).map(EntityId)
    }

    pub fn relations(&self) -> impl Iterator<Item = RelationId> + '_ {
        (0..self.relation_count() as u32).map(RelationId)
    }

    /// Outgoing `(relation, tail)` pairs of `v`, sorted. Panics on an id
    /// not issued by this graph; use [`KnowledgeGraph::neighbors`] for a
    /// checked lookup.
    pub fn out_edges(&self, v: EntityId) -> &[(RelationId, EntityId)] {
        &self.out[v.index()]
    }

    pub fn neighbors(&self, v: EntityId) -> Result<NeighborSet, KgError> {
        let row = self.out.get(v.index()).ok_or(KgError::UnknownEntity(v.0))?;
        Ok(NeighborSet {
            center: v,
            edges: row
                .iter()
                .map(|&(relation, tail)| Triple {
                    head: v,
                    relation,
                    tail,
                })
                .collect(),
        })
    }

    pub fn contains(&self, t: Triple) -> bool {
        self.out
            .get(t.head.index())
            .is_some_and(|row| row.binary_search(&(t.relation, t.tail)).is_ok())
    }

    /// Label-level membership test; unresolvable labels yield `false`.
    pub fn has_triple(&self, h: &str, r: &str, t: &str) -> bool {
        match (self.entity_id(h), self.relation_id(r), self.entity_id(t)) {
            (Some(head), Some(relation), Some(tail)) => self.contains(Triple {
                head,
                relation,
                tail,
            }),
            _ => false,
        }
    }

    /// All augmented edges in `(head, relation, tail)` id order.
    pub fn edges(&self) -> impl Iterator<Item = Triple> + '_ {
        self.out.iter().enumerate().flat_map(|(h, row)| {
            row.iter().map(move |&(relation, tail)| Triple {
                head: EntityId(h as u32),
                relation,
                tail,
            })
        })
    }

    pub fn triple_labels(&self, t: Triple) -> [String; 3] {
        [
            self.entity_label(t.head).to_string(),
            self.relation_label(t.relation).to_string(),
            self.entity_label(t.tail).to_string(),
        ]
    }

    pub fn display_triple(&self, t: Triple) -> DisplayTriple<'_> {
        DisplayTriple { g: self, t }
    }
}

pub struct DisplayTriple<'a> {
    g: &'a KnowledgeGraph,
    t: Triple,
}

impl fmt::Display for DisplayTriple<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}, {}, {})",
            self.g.entity_label(self.t.head),
            self.g.relation_label(self.t.relation),
            self.g.entity_label(self.t.tail)
        )
    }
}

/// Reads `head<TAB>relation<TAB>tail` lines. Order is preserved; a trailing
/// `\r` is stripped so CRLF files load too.
pub fn load_triples_tsv(path: impl AsRef<Path>) -> Result<Vec<RawTriple>, KgError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| KgError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_triples_tsv(&text, &path.display().to_string())
}

pub fn parse_triples_tsv(text: &str, origin: &str) -> Result<Vec<RawTriple>, KgError> {
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            let line = line.strip_suffix('\r').unwrap_or(line);
            let fields: Vec<&str> = line.split('\t').collect();
            match fields.as_slice() {
                [h, r, t] => Ok((h.to_string(), r.to_string(), t.to_string())),
                _ => Err(KgError::Arity {
                    path: origin.to_string(),
                    line: i + 1,
                    found: fields.len(),
                }),
            }
        })
        .collect()
}
