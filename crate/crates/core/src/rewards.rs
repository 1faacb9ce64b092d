//! Rule-based step rewards and group-relative advantages.
//!
//! Per step, with predicted answers `Ap`, step gold answers `A*`, all gold
//! answers `A`, predicted paths `Pp` and gold paths `P*`:
//!
//! * format   = value if the response parsed, else 0
//! * ans      = |Ap ∩ A*| / |A*|
//! * ans_dis  = |Ap ∩ (A \ A*)| - beta·|Ap \ A|
//! * explore  = |Pp ∩ P*| / |P*|
//! * exp_dis  = #(Pp \ P*, valid in graph) - beta·#(Pp, some triple absent)
//!
//! Recalls over an empty gold set are 1. Answers compare after label
//! normalization, paths compare exactly.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evalkit::normalized_set;
use crate::kgstore::KnowledgeGraph;
use crate::miner::SftLine;
use crate::path::{label_path_is_valid, LabelPath};
use crate::runtime::TraceLine;

pub const DEFAULT_BETA: f64 = 1.0;
pub const DEFAULT_FORMAT_REWARD: f64 = 1.0;

#[derive(Debug, Error, PartialEq)]
pub enum RewardError {
    #[error("cannot compute advantages of an empty group")]
    EmptyGroup,
    #[error("beta must be non-negative, got {0}")]
    NegativeBeta(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub beta: f64,
    pub format_reward_value: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            beta: DEFAULT_BETA,
            format_reward_value: DEFAULT_FORMAT_REWARD,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), RewardError> {
        if self.beta < 0.0 || self.beta.is_nan() {
            return Err(RewardError::NegativeBeta(self.beta));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub format: f64,
    pub ans: f64,
    pub ans_dis: f64,
    pub explore: f64,
    pub exp_dis: f64,
    pub total: f64,
}

impl RewardBreakdown {
    fn summed(format: f64, ans: f64, ans_dis: f64, explore: f64, exp_dis: f64) -> Self {
        Self {
            format,
            ans,
            ans_dis,
            explore,
            exp_dis,
            total: format + ans + ans_dis + explore + exp_dis,
        }
    }
}

pub fn format_reward(format_ok: bool, cfg: &RewardConfig) -> f64 {
    if format_ok {
        cfg.format_reward_value
    } else {
        0.0
    }
}

fn recall<T: Ord>(pred: &BTreeSet<T>, gold: &BTreeSet<T>) -> f64 {
    if gold.is_empty() {
        return 1.0;
    }
    pred.intersection(gold).count() as f64 / gold.len() as f64
}

pub fn answer_reward(pred: &BTreeSet<String>, gold_step: &BTreeSet<String>) -> f64 {
    recall(&normalized_set(pred), &normalized_set(gold_step))
}

pub fn answer_discovery_reward(
    pred: &BTreeSet<String>,
    gold_step: &BTreeSet<String>,
    gold_all: &BTreeSet<String>,
    cfg: &RewardConfig,
) -> f64 {
    let pred = normalized_set(pred);
    let step = normalized_set(gold_step);
    let all = normalized_set(gold_all);
    let new_correct = pred
        .iter()
        .filter(|a| all.contains(*a) && !step.contains(*a))
        .count();
    let invalid = pred.iter().filter(|a| !all.contains(*a)).count();
    new_correct as f64 - cfg.beta * invalid as f64
}

pub fn exploration_reward(pred: &BTreeSet<LabelPath>, gold: &BTreeSet<LabelPath>) -> f64 {
    recall(pred, gold)
}

pub fn exploration_discovery_reward(
    g: &KnowledgeGraph,
    pred: &BTreeSet<LabelPath>,
    gold: &BTreeSet<LabelPath>,
    cfg: &RewardConfig,
) -> f64 {
    let mut new_valid = 0usize;
    let mut invalid = 0usize;
    for p in pred.iter().filter(|p| !gold.contains(*p)) {
        if label_path_is_valid(g, p) {
            new_valid += 1;
        } else {
            invalid += 1;
        }
    }
    new_valid as f64 - cfg.beta * invalid as f64
}

/// Gold side of one step.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StepGold {
    pub answers: BTreeSet<String>,
    pub all_answers: BTreeSet<String>,
    pub paths: BTreeSet<LabelPath>,
}

impl StepGold {
    pub fn from_line(line: &SftLine) -> Self {
        Self {
            answers: line.gold_action.answers.iter().cloned().collect(),
            all_answers: line.all_answers.iter().cloned().collect(),
            paths: line.gold_action.exploration_paths.iter().cloned().collect(),
        }
    }
}

/// Predicted side of one step. `parsed` is false when the format check
/// failed; the lists are then ignored.
#[derive(Debug, Clone, Copy)]
pub struct StepPrediction<'a> {
    pub answers: &'a [String],
    pub paths: &'a [LabelPath],
    pub parsed: bool,
}

pub fn total_reward(
    g: &KnowledgeGraph,
    pred: StepPrediction<'_>,
    gold: &StepGold,
    cfg: &RewardConfig,
) -> RewardBreakdown {
    // An unparsable response counts as the empty prediction.
    let (answers, paths): (BTreeSet<String>, BTreeSet<LabelPath>) = if pred.parsed {
        (
            pred.answers.iter().cloned().collect(),
            pred.paths.iter().cloned().collect(),
        )
    } else {
        Default::default()
    };
    RewardBreakdown::summed(
        format_reward(pred.parsed, cfg),
        answer_reward(&answers, &gold.answers),
        answer_discovery_reward(&answers, &gold.answers, &gold.all_answers, cfg),
        exploration_reward(&paths, &gold.paths),
        exploration_discovery_reward(g, &paths, &gold.paths, cfg),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAdvantages {
    pub rewards: Vec<f64>,
    pub advantages: Vec<f64>,
}

/// `(R_i - mean) / std` with the population standard deviation. A group
/// whose rewards are all equal gets zero advantages.
pub fn group_advantages(rewards: &[f64]) -> Result<GroupAdvantages, RewardError> {
    if rewards.is_empty() {
        return Err(RewardError::EmptyGroup);
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    let scale = rewards.iter().fold(0.0f64, |m, r| m.max(r.abs())).max(1.0);
    let advantages = if std <= 1e-12 * scale {
        vec![0.0; rewards.len()]
    } else {
        rewards.iter().map(|r| (r - mean) / std).collect()
    };
    Ok(GroupAdvantages {
        rewards: rewards.to_vec(),
        advantages,
    })
}

/// One scoring-report line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreLine {
    pub qid: String,
    pub depth: usize,
    pub sample_index: usize,
    #[serde(flatten)]
    pub reward: RewardBreakdown,
    /// Sum of step totals over the whole episode of this sample.
    pub episode_total: f64,
    /// Group-relative advantage of `episode_total` among samples of the
    /// same question.
    pub advantage: f64,
}

/// Gold lookup by `(qid, depth)`. Depths without a record have empty gold
/// step sets but keep the question's full answer set.
#[derive(Debug, Clone, Default)]
pub struct GoldIndex {
    steps: HashMap<(String, usize), StepGold>,
    all_answers: HashMap<String, BTreeSet<String>>,
}

impl GoldIndex {
    pub fn from_lines<'a>(lines: impl IntoIterator<Item = &'a SftLine>) -> Self {
        let mut idx = Self::default();
        for l in lines {
            idx.all_answers
                .entry(l.qid.clone())
                .or_default()
                .extend(l.all_answers.iter().cloned());
            idx.steps.insert((l.qid.clone(), l.depth), StepGold::from_line(l));
        }
        idx
    }

    pub fn get(&self, qid: &str, depth: usize) -> StepGold {
        self.steps
            .get(&(qid.to_string(), depth))
            .cloned()
            .unwrap_or_else(|| StepGold {
                all_answers: self.all_answers.get(qid).cloned().unwrap_or_default(),
                ..Default::default()
            })
    }
}

pub fn score_trace(
    g: &KnowledgeGraph,
    trace: &[TraceLine],
    gold: &GoldIndex,
    cfg: &RewardConfig,
) -> Vec<ScoreLine> {
    let mut lines: Vec<ScoreLine> = trace
        .iter()
        .map(|t| {
            let step_gold = gold.get(&t.qid, t.depth);
            let reward = total_reward(
                g,
                StepPrediction {
                    answers: &t.action.answers,
                    paths: &t.action.exploration_paths,
                    parsed: t.format_ok,
                },
                &step_gold,
                cfg,
            );
            ScoreLine {
                qid: t.qid.clone(),
                depth: t.depth,
                sample_index: t.sample,
                reward,
                episode_total: 0.0,
                advantage: 0.0,
            }
        })
        .collect();

    let mut episode: BTreeMap<(String, usize), f64> = BTreeMap::new();
    for l in &lines {
        *episode.entry((l.qid.clone(), l.sample_index)).or_default() += l.reward.total;
    }
    let mut groups: BTreeMap<&str, Vec<(usize, f64)>> = BTreeMap::new();
    for ((qid, sample), total) in &episode {
        groups.entry(qid.as_str()).or_default().push((*sample, *total));
    }
    let mut advantage: HashMap<(String, usize), f64> = HashMap::new();
    for (qid, members) in &groups {
        let totals: Vec<f64> = members.iter().map(|m| m.1).collect();
        let adv = group_advantages(&totals).expect("groups are non-empty");
        for (&(sample, _), a) in members.iter().zip(adv.advantages) {
            advantage.insert((qid.to_string(), sample), a);
        }
    }
    for l in &mut lines {
        let key = (l.qid.clone(), l.sample_index);
        l.episode_total = episode[&key];
        l.advantage = advantage[&key];
    }
    lines
}
