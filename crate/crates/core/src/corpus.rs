//! Question datasets in the canonical JSONL form
//! `{"qid": .., "question": .., "seeds": [..], "answers": [..]}`.

use std::collections::{BTreeSet, HashSet, VecDeque};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kgstore::{EntityId, KnowledgeGraph};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}:{line}: malformed question record: {message}")]
    Malformed {
        path: String,
        line: usize,
        message: String,
    },
    #[error("question {qid}: seed {seed:?} not found in graph")]
    UnresolvedSeed { qid: String, seed: String },
    #[error("question {qid}: no seed entities")]
    NoSeeds { qid: String },
    #[error("duplicate qid {0}")]
    DuplicateQid(String),
    #[error("split ratio {0} outside [0, 1]")]
    BadRatio(f64),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// One line of a question file, before graph resolution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub qid: String,
    pub question: String,
    pub seeds: Vec<String>,
    pub answers: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuestionInstance {
    pub qid: String,
    pub text: String,
    pub seeds: BTreeSet<EntityId>,
    /// Gold answer labels. Kept as labels since the graph may lack some.
    pub answers: BTreeSet<String>,
}

impl QuestionInstance {
    /// Gold answers that exist as entities in `g`.
    pub fn resolved_answers(&self, g: &KnowledgeGraph) -> BTreeSet<EntityId> {
        self.answers.iter().filter_map(|a| g.entity_id(a)).collect()
    }

    pub fn seed_labels(&self, g: &KnowledgeGraph) -> Vec<String> {
        self.seeds
            .iter()
            .map(|&s| g.entity_label(s).to_string())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusStats {
    pub n_questions: usize,
    pub avg_answers: f64,
    pub max_hops_observed: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub dropped_unresolved: usize,
}

pub fn read_question_records(path: impl AsRef<Path>) -> Result<Vec<QuestionRecord>, CorpusError> {
    let path = path.as_ref();
    let origin = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: origin.clone(),
        source,
    })?;
    parse_question_records(&text, &origin)
}

pub fn parse_question_records(text: &str, origin: &str) -> Result<Vec<QuestionRecord>, CorpusError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: QuestionRecord =
            serde_json::from_str(line).map_err(|e| CorpusError::Malformed {
                path: origin.to_string(),
                line: i + 1,
                message: e.to_string(),
            })?;
        if !seen.insert(rec.qid.clone()) {
            return Err(CorpusError::DuplicateQid(rec.qid));
        }
        out.push(rec);
    }
    Ok(out)
}

/// Resolves records against `g`. In strict mode an unresolvable seed is an
/// error; otherwise the record is dropped and counted in the report.
pub fn resolve_questions(
    records: &[QuestionRecord],
    g: &KnowledgeGraph,
    strict: bool,
) -> Result<(Vec<QuestionInstance>, LoadReport), CorpusError> {
    let mut report = LoadReport::default();
    let mut out = Vec::with_capacity(records.len());
    'records: for rec in records {
        if rec.seeds.is_empty() {
            if strict {
                return Err(CorpusError::NoSeeds {
                    qid: rec.qid.clone(),
                });
            }
            report.dropped_unresolved += 1;
            continue;
        }
        let mut seeds = BTreeSet::new();
        for s in &rec.seeds {
            match g.entity_id(s) {
                Some(id) => {
                    seeds.insert(id);
                }
                None if strict => {
                    return Err(CorpusError::UnresolvedSeed {
                        qid: rec.qid.clone(),
                        seed: s.clone(),
                    })
                }
                None => {
                    report.dropped_unresolved += 1;
                    continue 'records;
                }
            }
        }
        out.push(QuestionInstance {
            qid: rec.qid.clone(),
            text: rec.question.clone(),
            seeds,
            answers: rec.answers.iter().cloned().collect(),
        });
    }
    if report.dropped_unresolved > 0 {
        log::warn!(
            "dropped {} question(s) with unresolved seeds",
            report.dropped_unresolved
        );
    }
    Ok((out, report))
}

pub fn load_questions(
    path: impl AsRef<Path>,
    g: &KnowledgeGraph,
    strict: bool,
) -> Result<(Vec<QuestionInstance>, LoadReport), CorpusError> {
    let records = read_question_records(path)?;
    resolve_questions(&records, g, strict)
}

fn stats_from_counts(counts: impl ExactSizeIterator<Item = usize>) -> CorpusStats {
    let n = counts.len();
    let total: usize = counts.sum();
    CorpusStats {
        n_questions: n,
        avg_answers: if n == 0 { 0.0 } else { total as f64 / n as f64 },
        max_hops_observed: None,
    }
}

pub fn corpus_stats(questions: &[QuestionInstance]) -> CorpusStats {
    stats_from_counts(questions.iter().map(|q| q.answers.len()))
}

/// Stats straight from raw records. Answer lists are deduplicated first so
/// the figure agrees with [`corpus_stats`] on the same data.
pub fn record_stats(records: &[QuestionRecord]) -> CorpusStats {
    stats_from_counts(records.iter().map(|r| {
        r.answers.iter().collect::<BTreeSet<_>>().len()
    }))
}

/// Like [`corpus_stats`], also filling `max_hops_observed` with the largest
/// shortest-path distance from a question's seeds to one of its answers,
/// searching at most `limit` hops.
pub fn corpus_stats_in_graph(
    questions: &[QuestionInstance],
    g: &KnowledgeGraph,
    limit: usize,
) -> CorpusStats {
    let mut stats = corpus_stats(questions);
    stats.max_hops_observed = questions
        .iter()
        .filter_map(|q| {
            let answers = q.resolved_answers(g);
            let dist = bfs_distances(g, &q.seeds, limit);
            answers.iter().filter_map(|a| dist.get(a).copied()).max()
        })
        .max();
    stats
}

fn bfs_distances(
    g: &KnowledgeGraph,
    seeds: &BTreeSet<EntityId>,
    limit: usize,
) -> std::collections::HashMap<EntityId, usize> {
    let mut dist = std::collections::HashMap::new();
    let mut queue = VecDeque::new();
    for &s in seeds {
        dist.insert(s, 0);
        queue.push_back(s);
    }
    while let Some(v) = queue.pop_front() {
        let d = dist[&v];
        if d == limit {
            continue;
        }
        for &(_, u) in g.out_edges(v) {
            if let std::collections::hash_map::Entry::Vacant(e) = dist.entry(u) {
                e.insert(d + 1);
                queue.push_back(u);
            }
        }
    }
    dist
}

/// Seeded random partition: the first part receives `round(ratio * n)`
/// records. Both parts keep the input order.
pub fn split_records<T: Clone>(
    records: &[T],
    ratio: f64,
    seed: u64,
) -> Result<(Vec<T>, Vec<T>), CorpusError> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(CorpusError::BadRatio(ratio));
    }
    let n = records.len();
    let take = ((ratio * n as f64).round() as usize).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut first: Vec<usize> = order[..take].to_vec();
    let mut second: Vec<usize> = order[take..].to_vec();
    first.sort_unstable();
    second.sort_unstable();
    Ok((
        first.into_iter().map(|i| records[i].clone()).collect(),
        second.into_iter().map(|i| records[i].clone()).collect(),
    ))
}
