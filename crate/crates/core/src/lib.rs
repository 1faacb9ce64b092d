//! Step-wise knowledge-graph exploration toolkit.
//!
//! * [`kgstore`]: interned, inverse-augmented triple store
//! * [`corpus`]: question datasets
//! * [`miner`]: gold path mining and supervised step records
//! * [`runtime`]: exploration episodes driven by a [`policy::Policy`]
//! * [`rewards`]: rule-based step rewards and group advantages
//! * [`evalkit`]: Hit/F1 metrics and the k-hop retrieval baseline
//! * [`config`]: run configuration

pub mod config;
pub mod corpus;
pub mod evalkit;
pub mod kgstore;
pub mod miner;
pub mod path;
pub mod policy;
pub mod rewards;
pub mod runtime;

pub use corpus::QuestionInstance;
pub use kgstore::{build_graph, EntityId, GraphOptions, KnowledgeGraph, RelationId, Triple};
pub use path::{LabelPath, PathSet, ReasoningPath};
