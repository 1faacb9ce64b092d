//! Answer-set metrics, macro-averaged reports and the k-hop baseline.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::kgstore::{EntityId, KnowledgeGraph};

/// Casefold, trim and collapse internal whitespace.
pub fn normalize_label(label: &str) -> String {
    label
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

pub fn normalized_set<'a, I>(labels: I) -> BTreeSet<String>
where
    I: IntoIterator<Item = &'a String>,
{
    labels.into_iter().map(|l| normalize_label(l)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionScore {
    pub qid: String,
    pub hit: u8,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// `pred` and `gold` are compared after normalization. `gold` should be
/// non-empty; callers exclude empty-gold questions beforehand.
pub fn answer_metrics(qid: &str, pred: &BTreeSet<String>, gold: &BTreeSet<String>) -> QuestionScore {
    let pred = normalized_set(pred);
    let gold = normalized_set(gold);
    let overlap = pred.intersection(&gold).count() as f64;
    let precision = if pred.is_empty() {
        0.0
    } else {
        overlap / pred.len() as f64
    };
    let recall = if gold.is_empty() {
        0.0
    } else {
        overlap / gold.len() as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    QuestionScore {
        qid: qid.to_string(),
        hit: u8::from(overlap > 0.0),
        precision,
        recall,
        f1,
    }
}

/// Macro averages, in percent. `hit_pct` is what KGQA tables label Hits@1:
/// predictions are unranked sets, so it is the share of questions with at
/// least one correct answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub n: usize,
    pub hit_pct: f64,
    pub f1_pct: f64,
    pub precision_pct: f64,
    pub recall_pct: f64,
    #[serde(default)]
    pub hit_ub: f64,
    #[serde(default)]
    pub recall_ub: f64,
    pub averaging: String,
    #[serde(default)]
    pub n_excluded: usize,
}

pub fn aggregate_report(scores: &[QuestionScore]) -> Report {
    let n = scores.len();
    let mean = |f: &dyn Fn(&QuestionScore) -> f64| {
        if n == 0 {
            0.0
        } else {
            100.0 * scores.iter().map(f).sum::<f64>() / n as f64
        }
    };
    Report {
        n,
        hit_pct: mean(&|s| f64::from(s.hit)),
        f1_pct: mean(&|s| s.f1),
        precision_pct: mean(&|s| s.precision),
        recall_pct: mean(&|s| s.recall),
        hit_ub: 0.0,
        recall_ub: 0.0,
        averaging: "macro".into(),
        n_excluded: 0,
    }
}

/// Ground-truth ceiling from answer presence in the graph: `(hit_ub,
/// recall_ub)` in percent, macro over questions with non-empty gold.
pub fn upper_bounds<'a, I>(g: &KnowledgeGraph, golds: I) -> (f64, f64)
where
    I: IntoIterator<Item = &'a BTreeSet<String>>,
{
    let mut n = 0usize;
    let mut hit = 0.0;
    let mut recall = 0.0;
    for gold in golds {
        if gold.is_empty() {
            continue;
        }
        n += 1;
        let present = gold.iter().filter(|a| g.entity_id(a).is_some()).count();
        if present > 0 {
            hit += 1.0;
        }
        recall += present as f64 / gold.len() as f64;
    }
    if n == 0 {
        (0.0, 0.0)
    } else {
        (100.0 * hit / n as f64, 100.0 * recall / n as f64)
    }
}

/// Entities within `k` hops of any seed, seeds excluded.
pub fn retrieve_khop(g: &KnowledgeGraph, seeds: &BTreeSet<EntityId>, k: usize) -> BTreeSet<EntityId> {
    let mut seen: BTreeSet<EntityId> = seeds.clone();
    let mut queue: VecDeque<(EntityId, usize)> = seeds.iter().map(|&s| (s, 0)).collect();
    while let Some((v, d)) = queue.pop_front() {
        if d == k {
            continue;
        }
        for &(_, u) in g.out_edges(v) {
            if seen.insert(u) {
                queue.push_back((u, d + 1));
            }
        }
    }
    seen.retain(|e| !seeds.contains(e));
    seen
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalScore {
    pub hit: u8,
    pub recall: f64,
    pub precision: f64,
}

/// Hit/recall/precision of a retrieved entity set against gold labels.
/// Precision counts retrieved entities in the denominator.
pub fn retrieval_metrics(
    g: &KnowledgeGraph,
    retrieved: &BTreeSet<EntityId>,
    gold: &BTreeSet<String>,
) -> RetrievalScore {
    let gold = normalized_set(gold);
    let correct = retrieved
        .iter()
        .filter(|&&e| gold.contains(&normalize_label(g.entity_label(e))))
        .count();
    let gold_found = retrieved
        .iter()
        .map(|&e| normalize_label(g.entity_label(e)))
        .filter(|l| gold.contains(l))
        .collect::<BTreeSet<_>>()
        .len();
    RetrievalScore {
        hit: u8::from(correct > 0),
        recall: if gold.is_empty() {
            0.0
        } else {
            gold_found as f64 / gold.len() as f64
        },
        precision: if retrieved.is_empty() {
            0.0
        } else {
            correct as f64 / retrieved.len() as f64
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub k: usize,
    pub n: usize,
    pub hit_pct: f64,
    pub recall_pct: f64,
    pub precision_pct: f64,
    pub avg_retrieved: f64,
}

pub fn aggregate_retrieval(k: usize, scores: &[(RetrievalScore, usize)]) -> RetrievalReport {
    let n = scores.len();
    let mean = |f: &dyn Fn(&(RetrievalScore, usize)) -> f64| {
        if n == 0 {
            0.0
        } else {
            scores.iter().map(f).sum::<f64>() / n as f64
        }
    };
    RetrievalReport {
        k,
        n,
        hit_pct: 100.0 * mean(&|s| f64::from(s.0.hit)),
        recall_pct: 100.0 * mean(&|s| s.0.recall),
        precision_pct: 100.0 * mean(&|s| s.0.precision),
        avg_retrieved: mean(&|s| s.1 as f64),
    }
}
