use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::sync::{Arc, Mutex};

use super::protocol::{PolicyRequest, RawPolicyResponse, StepAction};
use super::{Policy, PolicyError};
use crate::kgstore::KnowledgeGraph;
use crate::miner::{GoldStepRecord, SftLine};
use crate::path::LabelPath;

#[derive(Debug, Clone, Default)]
struct GoldStep {
    answers: Vec<String>,
    paths: Vec<LabelPath>,
    /// Path indices keyed by their last triple.
    by_last: HashMap<[String; 3], Vec<usize>>,
}

impl GoldStep {
    fn new(answers: Vec<String>, paths: Vec<LabelPath>) -> Self {
        let mut by_last: HashMap<[String; 3], Vec<usize>> = HashMap::new();
        for (i, p) in paths.iter().enumerate() {
            if let [.., h, r, t] = p.as_slice() {
                by_last
                    .entry([h.clone(), r.clone(), t.clone()])
                    .or_default()
                    .push(i);
            }
        }
        Self {
            answers,
            paths,
            by_last,
        }
    }
}

type PathIndex = (Arc<Vec<LabelPath>>, Arc<HashSet<LabelPath>>);

/// Replays mined gold actions.
#[derive(Debug, Default)]
pub struct OraclePolicy {
    steps: HashMap<String, BTreeMap<usize, GoldStep>>,
    /// Lookup set for the most recent `current_paths`; batches of one step
    /// share the same allocation.
    last_current: Mutex<Option<PathIndex>>,
}

impl Clone for OraclePolicy {
    fn clone(&self) -> Self {
        Self {
            steps: self.steps.clone(),
            last_current: Mutex::default(),
        }
    }
}

impl OraclePolicy {
    pub fn from_lines<'a>(lines: impl IntoIterator<Item = &'a SftLine>) -> Self {
        let mut oracle = Self::default();
        for l in lines {
            oracle.steps.entry(l.qid.clone()).or_default().insert(
                l.depth,
                GoldStep::new(
                    l.gold_action.answers.clone(),
                    l.gold_action.exploration_paths.clone(),
                ),
            );
        }
        oracle
    }

    pub fn from_records<'a>(
        g: &KnowledgeGraph,
        records: impl IntoIterator<Item = &'a GoldStepRecord>,
    ) -> Self {
        let lines: Vec<SftLine> = records
            .into_iter()
            .map(|r| SftLine::from_record(g, r))
            .collect();
        Self::from_lines(&lines)
    }

    /// Registers questions that mined no records, so requests for them get
    /// the empty action instead of an unknown-qid error.
    pub fn register_qids<I, S>(&mut self, qids: I)
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        for q in qids {
            self.steps.entry(q.into()).or_default();
        }
    }

    fn current_index(&self, paths: &Arc<Vec<LabelPath>>) -> Arc<HashSet<LabelPath>> {
        let mut cached = self.last_current.lock().unwrap_or_else(|e| e.into_inner());
        if let Some((key, index)) = cached.as_ref() {
            if Arc::ptr_eq(key, paths) {
                return Arc::clone(index);
            }
        }
        let index: Arc<HashSet<LabelPath>> = Arc::new(paths.iter().cloned().collect());
        *cached = Some((Arc::clone(paths), Arc::clone(&index)));
        index
    }

    pub fn step(&self, req: &PolicyRequest) -> Result<StepAction, PolicyError> {
        let per_depth = self
            .steps
            .get(&req.qid)
            .ok_or_else(|| PolicyError::UnknownQid(req.qid.clone()))?;
        let Some(gold) = per_depth.get(&req.depth) else {
            return Ok(StepAction::default());
        };

        let tails: HashSet<&str> = req.neighbors.iter().map(|[_, _, t]| t.as_str()).collect();
        let candidates: BTreeSet<usize> = req
            .neighbors
            .iter()
            .filter_map(|triple| gold.by_last.get(triple))
            .flatten()
            .copied()
            .collect();
        let current = if candidates.is_empty() {
            Arc::default()
        } else {
            self.current_index(&req.current_paths)
        };
        let hits = candidates.into_iter().filter(|&i| {
            let p = &gold.paths[i];
            current.contains(&p[..p.len() - 2])
        });

        let answers = gold
            .answers
            .iter()
            .filter(|a| tails.contains(a.as_str()))
            .cloned()
            .collect();
        let new_paths = hits.map(|i| gold.paths[i].clone()).collect();
        Ok(StepAction {
            answers,
            new_paths,
            stop: false,
        })
    }
}

/// Gold action at `req.depth`, restricted to what this batch can justify:
/// answers that are tails of batch triples, and paths whose last triple is
/// in the batch and whose prefix is one of the request's current paths.
pub fn oracle_step(oracle: &OraclePolicy, req: &PolicyRequest) -> Result<StepAction, PolicyError> {
    oracle.step(req)
}

impl Policy for OraclePolicy {
    fn respond(&self, req: &PolicyRequest) -> Result<RawPolicyResponse, PolicyError> {
        self.step(req).map(RawPolicyResponse::from_action)
    }
}
