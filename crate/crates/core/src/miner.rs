//! Gold trajectory mining.
//!
//! Phase I enumerates every simple path of at most `l_max` hops that starts
//! at a seed and ends at a gold answer. Phase II slices those paths by depth
//! into `(state, gold action)` step records, widening each gold extension to
//! all tails reachable from the same head through the same relation.

use std::collections::{BTreeSet, VecDeque};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::QuestionInstance;
use crate::kgstore::{EntityId, KnowledgeGraph, NeighborSet, Triple};
use crate::path::{LabelPath, PathSet, ReasoningPath};

pub const SFT_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_NEIGHBOR_CAP: usize = 256;

#[derive(Debug, Error)]
pub enum MineError {
    #[error("l_max must be at least 1")]
    ZeroLmax,
    #[error("gold path of {len} hops exceeds l_max = {l_max}")]
    Inconsistent { len: usize, l_max: usize },
    #[error("{path}:{line}: {message}")]
    Import {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// One supervised step: the state at depth `d` and its gold action.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldStepRecord {
    pub qid: String,
    pub question: String,
    pub depth: usize,
    /// All `depth`-hop prefixes of mined gold paths.
    pub current_paths: PathSet,
    /// Outgoing edges of each frontier node, possibly truncated per node.
    pub frontier_neighbors: Vec<NeighborSet>,
    /// Gold answers one hop from the frontier.
    pub gold_answers: BTreeSet<EntityId>,
    /// Gold extensions plus same-relation siblings.
    pub gold_paths: PathSet,
    /// Seeds that are themselves answers. Only populated at depth 0.
    pub seed_answers: BTreeSet<EntityId>,
    /// The question's full gold answer set, as labels.
    pub all_answers: BTreeSet<String>,
}

impl GoldStepRecord {
    pub fn gold_answer_labels(&self, g: &KnowledgeGraph) -> Vec<String> {
        self.gold_answers
            .iter()
            .map(|&a| g.entity_label(a).to_string())
            .collect()
    }
}

/// Phase I. Paths are expanded FIFO; a path is recorded whenever its final
/// node is an answer and expansion continues past it.
pub fn mine_gold_paths(
    g: &KnowledgeGraph,
    q: &QuestionInstance,
    l_max: usize,
) -> Result<PathSet, MineError> {
    if l_max == 0 {
        return Err(MineError::ZeroLmax);
    }
    let answers = q.resolved_answers(g);
    let mut gold = PathSet::new();
    if answers.is_empty() {
        return Ok(gold);
    }
    let mut queue: VecDeque<ReasoningPath> =
        q.seeds.iter().map(|&s| ReasoningPath::seed(s)).collect();
    while let Some(p) = queue.pop_front() {
        let v = p.frontier();
        if answers.contains(&v) {
            gold.insert(p.clone());
        }
        if p.len() == l_max {
            continue;
        }
        for &(r, u) in g.out_edges(v) {
            if !p.visits(u) {
                queue.push_back(p.extend(r, u));
            }
        }
    }
    Ok(gold)
}

/// Phase II. Depths with no gold prefix are omitted.
pub fn build_step_records(
    g: &KnowledgeGraph,
    q: &QuestionInstance,
    gold: &PathSet,
    l_max: usize,
    neighbor_cap: Option<usize>,
) -> Result<Vec<GoldStepRecord>, MineError> {
    if l_max == 0 {
        return Err(MineError::ZeroLmax);
    }
    if let Some(p) = gold.iter().find(|p| p.len() > l_max) {
        return Err(MineError::Inconsistent {
            len: p.len(),
            l_max,
        });
    }
    let answers = q.resolved_answers(g);
    let all_answers: BTreeSet<String> = q.answers.clone();
    let mut records = Vec::new();

    for depth in 0..l_max {
        let current: PathSet = gold
            .iter()
            .filter(|p| p.len() >= depth)
            .map(|p| p.prefix(depth))
            .collect();
        if current.is_empty() {
            continue;
        }
        let frontier: BTreeSet<EntityId> = current.iter().map(ReasoningPath::frontier).collect();

        let mut gold_answers = BTreeSet::new();
        let mut frontier_neighbors = Vec::with_capacity(frontier.len());
        for &v in &frontier {
            let row = g.out_edges(v);
            gold_answers.extend(row.iter().map(|&(_, u)| u).filter(|u| answers.contains(u)));
            let keep = neighbor_cap.map_or(row.len(), |cap| cap.min(row.len()));
            frontier_neighbors.push(NeighborSet {
                center: v,
                edges: row[..keep]
                    .iter()
                    .map(|&(relation, tail)| Triple {
                        head: v,
                        relation,
                        tail,
                    })
                    .collect(),
            });
        }

        let extensions: PathSet = gold
            .iter()
            .filter(|p| p.len() > depth)
            .map(|p| p.prefix(depth + 1))
            .collect();
        let mut gold_paths = PathSet::new();
        for ext in &extensions {
            let t = ext.last_triple().expect("extension has at least one hop");
            let base = ext.prefix(depth);
            for &(r, u) in g.out_edges(t.head) {
                if r == t.relation {
                    gold_paths.insert(base.extend(r, u));
                }
            }
        }

        let seed_answers = if depth == 0 {
            q.seeds.intersection(&answers).copied().collect()
        } else {
            BTreeSet::new()
        };

        records.push(GoldStepRecord {
            qid: q.qid.clone(),
            question: q.text.clone(),
            depth,
            current_paths: current,
            frontier_neighbors,
            gold_answers,
            gold_paths,
            seed_answers,
            all_answers: all_answers.clone(),
        });
    }
    Ok(records)
}

/// Mines and slices one question.
pub fn mine_question(
    g: &KnowledgeGraph,
    q: &QuestionInstance,
    l_max: usize,
    neighbor_cap: Option<usize>,
) -> Result<Vec<GoldStepRecord>, MineError> {
    let gold = mine_gold_paths(g, q, l_max)?;
    build_step_records(g, q, &gold, l_max, neighbor_cap)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftHeader {
    pub format_version: u32,
    pub l_max: usize,
    pub neighbor_cap: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftNeighbors {
    pub center: String,
    pub edges: Vec<[String; 3]>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftState {
    pub question: String,
    pub current_paths: Vec<LabelPath>,
    pub frontier_neighbors: Vec<SftNeighbors>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftAction {
    pub answers: Vec<String>,
    pub exploration_paths: Vec<LabelPath>,
}

/// Label-level form of a [`GoldStepRecord`]; one JSONL line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftLine {
    pub qid: String,
    pub depth: usize,
    pub state: SftState,
    pub gold_action: SftAction,
    #[serde(default)]
    pub seed_answers: Vec<String>,
    #[serde(default)]
    pub all_answers: Vec<String>,
}

impl SftLine {
    pub fn from_record(g: &KnowledgeGraph, r: &GoldStepRecord) -> Self {
        let ent = |e: &EntityId| g.entity_label(*e).to_string();
        SftLine {
            qid: r.qid.clone(),
            depth: r.depth,
            state: SftState {
                question: r.question.clone(),
                current_paths: r.current_paths.iter().map(|p| p.labels(g)).collect(),
                frontier_neighbors: r
                    .frontier_neighbors
                    .iter()
                    .map(|n| SftNeighbors {
                        center: g.entity_label(n.center).to_string(),
                        edges: n.edges.iter().map(|&t| g.triple_labels(t)).collect(),
                    })
                    .collect(),
            },
            gold_action: SftAction {
                answers: r.gold_answers.iter().map(ent).collect(),
                exploration_paths: r.gold_paths.iter().map(|p| p.labels(g)).collect(),
            },
            seed_answers: r.seed_answers.iter().map(ent).collect(),
            all_answers: r.all_answers.iter().cloned().collect(),
        }
    }

    pub fn to_record(&self, g: &KnowledgeGraph) -> Result<GoldStepRecord, String> {
        let entity = |l: &String| g.entity_id(l).ok_or_else(|| format!("unknown entity {l:?}"));
        let path = |p: &LabelPath| {
            ReasoningPath::from_labels(g, p).ok_or_else(|| format!("invalid path {p:?}"))
        };
        let triple = |t: &[String; 3]| -> Result<Triple, String> {
            let tr = Triple {
                head: entity(&t[0])?,
                relation: g
                    .relation_id(&t[1])
                    .ok_or_else(|| format!("unknown relation {:?}", t[1]))?,
                tail: entity(&t[2])?,
            };
            if g.contains(tr) {
                Ok(tr)
            } else {
                Err(format!("absent triple {t:?}"))
            }
        };
        Ok(GoldStepRecord {
            qid: self.qid.clone(),
            question: self.state.question.clone(),
            depth: self.depth,
            current_paths: self.state.current_paths.iter().map(path).collect::<Result<_, _>>()?,
            frontier_neighbors: self
                .state
                .frontier_neighbors
                .iter()
                .map(|n| {
                    Ok(NeighborSet {
                        center: entity(&n.center)?,
                        edges: n.edges.iter().map(triple).collect::<Result<_, String>>()?,
                    })
                })
                .collect::<Result<_, String>>()?,
            gold_answers: self.gold_action.answers.iter().map(entity).collect::<Result<_, _>>()?,
            gold_paths: self
                .gold_action
                .exploration_paths
                .iter()
                .map(path)
                .collect::<Result<_, _>>()?,
            seed_answers: self.seed_answers.iter().map(entity).collect::<Result<_, _>>()?,
            all_answers: self.all_answers.iter().cloned().collect(),
        })
    }
}

/// Writes the header line followed by one line per record. Returns the
/// number of records written (the header is not counted).
pub fn export_sft_dataset(
    g: &KnowledgeGraph,
    records: &[GoldStepRecord],
    header: &SftHeader,
    path: impl AsRef<Path>,
) -> Result<usize, MineError> {
    let path = path.as_ref();
    let io = |source| MineError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    write_sft_lines(g, records, header, &mut w).map_err(io)?;
    w.flush().map_err(io)?;
    Ok(records.len())
}

pub fn write_sft_lines<W: Write>(
    g: &KnowledgeGraph,
    records: &[GoldStepRecord],
    header: &SftHeader,
    w: &mut W,
) -> std::io::Result<()> {
    serde_json::to_writer(&mut *w, header)?;
    writeln!(w)?;
    for r in records {
        serde_json::to_writer(&mut *w, &SftLine::from_record(g, r))?;
        writeln!(w)?;
    }
    Ok(())
}

/// Reads an SFT file at the label level, without a graph.
pub fn read_sft_lines(path: impl AsRef<Path>) -> Result<(SftHeader, Vec<SftLine>), MineError> {
    let path = path.as_ref();
    let origin = path.display().to_string();
    let file = File::open(path).map_err(|source| MineError::Io {
        path: origin.clone(),
        source,
    })?;
    let mut header = None;
    let mut lines = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| MineError::Io {
            path: origin.clone(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |e: serde_json::Error| MineError::Import {
            path: origin.clone(),
            line: i + 1,
            message: e.to_string(),
        };
        if header.is_none() {
            header = Some(serde_json::from_str::<SftHeader>(&line).map_err(err)?);
        } else {
            lines.push(serde_json::from_str::<SftLine>(&line).map_err(err)?);
        }
    }
    let header = header.ok_or_else(|| MineError::Import {
        path: origin,
        line: 1,
        message: "missing header line".into(),
    })?;
    Ok((header, lines))
}

pub fn import_sft_dataset(
    g: &KnowledgeGraph,
    path: impl AsRef<Path>,
) -> Result<(SftHeader, Vec<GoldStepRecord>), MineError> {
    let path = path.as_ref();
    let (header, lines) = read_sft_lines(path)?;
    let records = lines
        .iter()
        .enumerate()
        .map(|(i, l)| {
            l.to_record(g).map_err(|message| MineError::Import {
                path: path.display().to_string(),
                line: i + 2,
                message,
            })
        })
        .collect::<Result<_, _>>()?;
    Ok((header, records))
}
