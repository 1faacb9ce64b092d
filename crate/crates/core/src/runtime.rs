//! Exploration episodes: observe the frontier, ask the policy, apply the
//! action, repeat until nothing is left to expand or the depth cap is hit.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::QuestionInstance;
use crate::kgstore::{EntityId, KnowledgeGraph, Triple};
use crate::miner::SftAction;
use crate::path::{frontier_of, LabelPath, PathSet, ReasoningPath};
use crate::policy::{Policy, PolicyRequest, StepAction};

pub const DEFAULT_D_MAX: usize = 5;
pub const DEFAULT_BATCH_BUDGET: usize = 256;
pub const DEFAULT_FANOUT_CAP: usize = 64;
pub const DEFAULT_DFS_STEP_LIMIT: usize = 4096;

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error("question {qid}: seed id {seed} not in graph")]
    UnresolvedSeed { qid: String, seed: u32 },
    #[error("invalid episode config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraversalMode {
    /// Expand every current path together, one depth per step.
    #[default]
    StepSynchronous,
    /// Follow one accepted path at a time to the depth cap.
    DepthFirst,
}

impl FromStr for TraversalMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "step_synchronous" | "step-synchronous" | "sync" => Ok(Self::StepSynchronous),
            "depth_first" | "depth-first" | "dfs" => Ok(Self::DepthFirst),
            other => Err(format!("unknown traversal mode {other:?}")),
        }
    }
}

impl fmt::Display for TraversalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::StepSynchronous => "step_synchronous",
            Self::DepthFirst => "depth_first",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeConfig {
    pub d_max: usize,
    /// Maximum neighbor triples per policy request.
    pub batch_budget: usize,
    pub mode: TraversalMode,
    /// Reject predicted paths that revisit an entity already on the path.
    pub forbid_revisit: bool,
    /// Maximum accepted paths per step; `None` disables the cap.
    pub fanout_cap: Option<usize>,
    /// Upper bound on policy rounds in depth-first mode.
    pub dfs_step_limit: usize,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            d_max: DEFAULT_D_MAX,
            batch_budget: DEFAULT_BATCH_BUDGET,
            mode: TraversalMode::default(),
            forbid_revisit: false,
            fanout_cap: Some(DEFAULT_FANOUT_CAP),
            dfs_step_limit: DEFAULT_DFS_STEP_LIMIT,
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<(), RuntimeError> {
        if self.d_max == 0 {
            return Err(RuntimeError::Config("d_max must be >= 1".into()));
        }
        if self.batch_budget == 0 {
            return Err(RuntimeError::Config("batch_budget must be >= 1".into()));
        }
        if self.fanout_cap == Some(0) {
            return Err(RuntimeError::Config("fanout_cap must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpisodeState {
    pub depth: usize,
    pub current_paths: PathSet,
    pub answers_so_far: BTreeSet<String>,
}

impl EpisodeState {
    /// Final entities of the current paths.
    pub fn frontier(&self) -> BTreeSet<EntityId> {
        frontier_of(&self.current_paths)
    }
}

pub fn init_episode(g: &KnowledgeGraph, q: &QuestionInstance) -> Result<EpisodeState, RuntimeError> {
    if let Some(s) = q.seeds.iter().find(|s| s.index() >= g.entity_count()) {
        return Err(RuntimeError::UnresolvedSeed {
            qid: q.qid.clone(),
            seed: s.0,
        });
    }
    Ok(EpisodeState {
        depth: 0,
        current_paths: q.seeds.iter().map(|&s| ReasoningPath::seed(s)).collect(),
        answers_so_far: BTreeSet::new(),
    })
}

/// Splits the frontier's outgoing edges into requests of at most
/// `cfg.batch_budget` triples each, in frontier-id then edge order.
pub fn observe(
    g: &KnowledgeGraph,
    q: &QuestionInstance,
    state: &EpisodeState,
    cfg: &EpisodeConfig,
) -> Vec<PolicyRequest> {
    let edges: Vec<[String; 3]> = state
        .frontier()
        .into_iter()
        .flat_map(|v| {
            g.out_edges(v).iter().map(move |&(relation, tail)| Triple {
                head: v,
                relation,
                tail,
            })
        })
        .map(|t| g.triple_labels(t))
        .collect();
    if edges.is_empty() {
        return Vec::new();
    }
    let current: Arc<Vec<LabelPath>> =
        Arc::new(state.current_paths.iter().map(|p| p.labels(g)).collect());
    edges
        .chunks(cfg.batch_budget.max(1))
        .map(|batch| PolicyRequest {
            qid: q.qid.clone(),
            question: q.text.clone(),
            depth: state.depth,
            current_paths: Arc::clone(&current),
            neighbors: batch.to_vec(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AppliedStep {
    pub state: EpisodeState,
    /// Union of the batch actions, before validation.
    pub action: StepAction,
    /// Predicted paths that did not extend a current path by one graph
    /// triple (or revisited an entity under `forbid_revisit`).
    pub dropped_paths: Vec<LabelPath>,
    /// Valid paths discarded by the fan-out cap.
    pub fanout_truncated: usize,
}

/// Unions per-batch actions and advances the state by one depth.
pub fn apply_action(
    g: &KnowledgeGraph,
    state: &EpisodeState,
    actions: &[StepAction],
    cfg: &EpisodeConfig,
) -> AppliedStep {
    let answers: BTreeSet<String> = actions.iter().flat_map(|a| a.answers.iter().cloned()).collect();
    let predicted: BTreeSet<LabelPath> = actions
        .iter()
        .flat_map(|a| a.new_paths.iter().cloned())
        .collect();

    let mut accepted = PathSet::new();
    let mut dropped = Vec::new();
    for labels in &predicted {
        match extend_current(g, &state.current_paths, labels, cfg.forbid_revisit) {
            Some(p) => {
                accepted.insert(p);
            }
            None => dropped.push(labels.clone()),
        }
    }

    let mut fanout_truncated = 0;
    if let Some(cap) = cfg.fanout_cap {
        if accepted.len() > cap {
            fanout_truncated = accepted.len() - cap;
            accepted = accepted.into_iter().take(cap).collect();
        }
    }

    let mut answers_so_far = state.answers_so_far.clone();
    answers_so_far.extend(answers.iter().cloned());

    AppliedStep {
        state: EpisodeState {
            depth: state.depth + 1,
            current_paths: accepted,
            answers_so_far,
        },
        action: StepAction {
            answers: answers.into_iter().collect(),
            new_paths: predicted.into_iter().collect(),
            stop: actions.iter().any(|a| a.stop),
        },
        dropped_paths: dropped,
        fanout_truncated,
    }
}

fn extend_current(
    g: &KnowledgeGraph,
    current: &PathSet,
    labels: &[String],
    forbid_revisit: bool,
) -> Option<ReasoningPath> {
    let path = ReasoningPath::from_labels(g, labels)?;
    let n = path.len();
    if n == 0 {
        return None;
    }
    let base = path.prefix(n - 1);
    if !current.contains(&base) || (forbid_revisit && base.visits(path.frontier())) {
        return None;
    }
    Some(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseTrace {
    pub text: String,
    pub format_ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepTrace {
    pub depth: usize,
    pub current_paths: Vec<LabelPath>,
    pub request_count: usize,
    pub responses: Vec<ResponseTrace>,
    pub action: StepAction,
    pub dropped_paths: Vec<LabelPath>,
    pub accepted_paths: usize,
    pub fanout_truncated: usize,
    pub answers_so_far: Vec<String>,
}

impl StepTrace {
    /// A step is well formed only if every batch response parsed.
    pub fn format_ok(&self) -> bool {
        self.responses.iter().all(|r| r.format_ok)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "detail")]
pub enum Termination {
    EmptyFrontier,
    DMax,
    PolicyStop,
    StepLimit,
    Aborted(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub qid: String,
    pub answers: BTreeSet<String>,
    pub trace: Vec<StepTrace>,
    pub steps_taken: usize,
    pub termination: Termination,
    /// Depth-first mode: expansions of a frontier entity already expanded
    /// at the same depth on another branch.
    pub repeated_expansions: usize,
}

enum StepOutcome {
    Applied(AppliedStep),
    Aborted(String),
}

fn run_step(
    g: &KnowledgeGraph,
    q: &QuestionInstance,
    policy: &dyn Policy,
    cfg: &EpisodeConfig,
    state: &EpisodeState,
    trace: &mut Vec<StepTrace>,
) -> StepOutcome {
    let requests = observe(g, q, state, cfg);
    let mut responses = Vec::with_capacity(requests.len());
    let mut actions = Vec::with_capacity(requests.len());
    for req in &requests {
        match policy.respond(req) {
            Ok(r) => {
                actions.push(r.action_or_empty());
                responses.push(ResponseTrace {
                    text: r.text,
                    format_ok: r.format_ok,
                    latency_ms: r.latency_ms,
                });
            }
            Err(e) => return StepOutcome::Aborted(e.to_string()),
        }
    }
    let applied = apply_action(g, state, &actions, cfg);
    if applied.fanout_truncated > 0 {
        log::debug!(
            "{}: fan-out cap dropped {} path(s) at depth {}",
            q.qid,
            applied.fanout_truncated,
            state.depth
        );
    }
    trace.push(StepTrace {
        depth: state.depth,
        current_paths: state.current_paths.iter().map(|p| p.labels(g)).collect(),
        request_count: requests.len(),
        responses,
        action: applied.action.clone(),
        dropped_paths: applied.dropped_paths.clone(),
        accepted_paths: applied.state.current_paths.len(),
        fanout_truncated: applied.fanout_truncated,
        answers_so_far: applied.state.answers_so_far.iter().cloned().collect(),
    });
    StepOutcome::Applied(applied)
}

/// Runs one episode. Policy transport failures end the episode with
/// [`Termination::Aborted`] and the trace collected so far.
pub fn run_episode(
    g: &KnowledgeGraph,
    q: &QuestionInstance,
    policy: &dyn Policy,
    cfg: &EpisodeConfig,
) -> Result<EpisodeResult, RuntimeError> {
    cfg.validate()?;
    let init = init_episode(g, q)?;
    Ok(match cfg.mode {
        TraversalMode::StepSynchronous => run_synchronous(g, q, policy, cfg, init),
        TraversalMode::DepthFirst => run_depth_first(g, q, policy, cfg, init),
    })
}

fn run_synchronous(
    g: &KnowledgeGraph,
    q: &QuestionInstance,
    policy: &dyn Policy,
    cfg: &EpisodeConfig,
    mut state: EpisodeState,
) -> EpisodeResult {
    let mut trace = Vec::new();
    let termination = loop {
        if state.depth >= cfg.d_max {
            break Termination::DMax;
        }
        let applied = match run_step(g, q, policy, cfg, &state, &mut trace) {
            StepOutcome::Applied(a) => a,
            StepOutcome::Aborted(msg) => break Termination::Aborted(msg),
        };
        state = applied.state;
        if applied.action.stop {
            break Termination::PolicyStop;
        }
        if state.current_paths.is_empty() {
            break Termination::EmptyFrontier;
        }
    };
    EpisodeResult {
        qid: q.qid.clone(),
        answers: state.answers_so_far,
        steps_taken: trace.len(),
        trace,
        termination,
        repeated_expansions: 0,
    }
}

fn run_depth_first(
    g: &KnowledgeGraph,
    q: &QuestionInstance,
    policy: &dyn Policy,
    cfg: &EpisodeConfig,
    init: EpisodeState,
) -> EpisodeResult {
    let mut trace = Vec::new();
    let mut answers = BTreeSet::new();
    let mut expanded: HashSet<(usize, EntityId)> = HashSet::new();
    let mut repeated = 0;
    let mut reached_cap = false;
    let mut stack: Vec<EpisodeState> = init
        .current_paths
        .iter()
        .rev()
        .map(|p| EpisodeState {
            depth: 0,
            current_paths: PathSet::from([p.clone()]),
            answers_so_far: BTreeSet::new(),
        })
        .collect();

    let mut termination = None;
    while let Some(mut branch) = stack.pop() {
        if branch.depth >= cfg.d_max {
            reached_cap = true;
            continue;
        }
        if trace.len() >= cfg.dfs_step_limit {
            termination = Some(Termination::StepLimit);
            break;
        }
        for v in branch.frontier() {
            if !expanded.insert((branch.depth, v)) {
                repeated += 1;
            }
        }
        branch.answers_so_far = answers.clone();
        let applied = match run_step(g, q, policy, cfg, &branch, &mut trace) {
            StepOutcome::Applied(a) => a,
            StepOutcome::Aborted(msg) => {
                termination = Some(Termination::Aborted(msg));
                break;
            }
        };
        answers = applied.state.answers_so_far.clone();
        if applied.action.stop {
            termination = Some(Termination::PolicyStop);
            break;
        }
        for p in applied.state.current_paths.iter().rev() {
            stack.push(EpisodeState {
                depth: applied.state.depth,
                current_paths: PathSet::from([p.clone()]),
                answers_so_far: BTreeSet::new(),
            });
        }
    }
    let termination = termination.unwrap_or(if reached_cap {
        Termination::DMax
    } else {
        Termination::EmptyFrontier
    });
    EpisodeResult {
        qid: q.qid.clone(),
        answers,
        steps_taken: trace.len(),
        trace,
        termination,
        repeated_expansions: repeated,
    }
}

/// One trace JSONL line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceLine {
    pub qid: String,
    #[serde(default)]
    pub sample: usize,
    pub depth: usize,
    pub request_count: usize,
    pub action: SftAction,
    pub dropped_paths: Vec<LabelPath>,
    pub answers: Vec<String>,
    pub format_ok: bool,
    #[serde(default)]
    pub responses: Vec<ResponseTrace>,
    #[serde(default)]
    pub fanout_truncated: usize,
}

pub fn trace_lines(result: &EpisodeResult, sample: usize) -> Vec<TraceLine> {
    result
        .trace
        .iter()
        .map(|s| TraceLine {
            qid: result.qid.clone(),
            sample,
            depth: s.depth,
            request_count: s.request_count,
            action: SftAction {
                answers: s.action.answers.clone(),
                exploration_paths: s.action.new_paths.clone(),
            },
            dropped_paths: s.dropped_paths.clone(),
            answers: s.answers_so_far.clone(),
            format_ok: s.format_ok(),
            responses: s.responses.clone(),
            fanout_truncated: s.fanout_truncated,
        })
        .collect()
}

/// One predictions JSONL line, the input of evaluation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionLine {
    pub qid: String,
    #[serde(default)]
    pub sample: usize,
    pub answers: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub termination: Option<Termination>,
    #[serde(default)]
    pub steps: usize,
}

impl PredictionLine {
    pub fn from_result(result: &EpisodeResult, sample: usize) -> Self {
        Self {
            qid: result.qid.clone(),
            sample,
            answers: result.answers.iter().cloned().collect(),
            termination: Some(result.termination.clone()),
            steps: result.steps_taken,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kgstore::tests::g1;
    use crate::miner::mine_question;
    use crate::miner::tests::q;
    use crate::policy::{NullPolicy, OraclePolicy, PolicyError, RawPolicyResponse};

    fn s(v: &[&str]) -> LabelPath {
        v.iter().map(|x| x.to_string()).collect()
    }

    fn oracle(g: &KnowledgeGraph) -> OraclePolicy {
        let recs = mine_question(g, &q(g, &["A"], &["C", "D", "F"]), 2, None).unwrap();
        OraclePolicy::from_records(g, &recs)
    }

    fn cfg(d_max: usize, budget: usize) -> EpisodeConfig {
        EpisodeConfig {
            d_max,
            batch_budget: budget,
            ..Default::default()
        }
    }

    #[test]
    fn init_states() {
        let g = g1();
        let st = init_episode(&g, &q(&g, &["A"], &["C"])).unwrap();
        assert_eq!(st.depth, 0);
        assert_eq!(st.current_paths.len(), 1);
        assert_eq!(st.frontier(), BTreeSet::from([g.entity_id("A").unwrap()]));

        let st = init_episode(&g, &q(&g, &["A", "B"], &["C"])).unwrap();
        assert_eq!(st.current_paths.len(), 2);
        assert_eq!(st.frontier().len(), 2);

        let mut bad = q(&g, &["A"], &["C"]);
        bad.seeds.insert(EntityId(42));
        assert!(init_episode(&g, &bad).is_err());
    }

    #[test]
    fn observe_batches() {
        let g = g1();
        let question = q(&g, &["A"], &["C"]);
        let st = init_episode(&g, &question).unwrap();
        let reqs = observe(&g, &question, &st, &cfg(5, 10));
        assert_eq!(reqs.len(), 1);
        assert_eq!(reqs[0].neighbors.len(), 2);
        let reqs = observe(&g, &question, &st, &cfg(5, 1));
        assert_eq!(reqs.len(), 2);
        assert!(reqs.iter().all(|r| r.neighbors.len() == 1));

        let empty = EpisodeState {
            depth: 1,
            current_paths: PathSet::new(),
            answers_so_far: BTreeSet::new(),
        };
        assert!(observe(&g, &question, &empty, &cfg(5, 1)).is_empty());
    }

    #[test]
    fn apply_extends_and_filters() {
        let g = g1();
        let st = init_episode(&g, &q(&g, &["A"], &["C"])).unwrap();
        let a = StepAction {
            answers: vec![],
            new_paths: vec![s(&["A", "friend", "B"]), s(&["A", "friend", "E"])],
            stop: false,
        };
        let out = apply_action(&g, &st, &[a], &cfg(5, 10));
        assert_eq!(out.state.depth, 1);
        let frontier: Vec<_> = out
            .state
            .frontier()
            .into_iter()
            .map(|e| g.entity_label(e).to_string())
            .collect();
        assert_eq!(frontier, ["B", "E"]);
        assert!(out.dropped_paths.is_empty());

        let bad = StepAction {
            new_paths: vec![s(&["A", "child", "B"])],
            ..Default::default()
        };
        let out = apply_action(&g, &st, &[bad], &cfg(5, 10));
        assert_eq!(out.dropped_paths.len(), 1);
        assert!(out.state.current_paths.is_empty());
    }

    #[test]
    fn apply_merges_answers_and_dedupes() {
        let g = g1();
        let st = EpisodeState {
            depth: 1,
            current_paths: [ReasoningPath::from_labels(&g, &s(&["A", "friend", "B"])).unwrap()]
                .into(),
            answers_so_far: BTreeSet::new(),
        };
        let a = StepAction {
            answers: vec!["C".into()],
            new_paths: vec![s(&["A", "friend", "B", "child", "C"])],
            stop: false,
        };
        let out = apply_action(&g, &st, &[a.clone(), a], &cfg(5, 10));
        assert_eq!(out.state.answers_so_far, BTreeSet::from(["C".to_string()]));
        assert_eq!(out.state.current_paths.len(), 1);
        assert_eq!(out.action.new_paths.len(), 1);
    }

    #[test]
    fn revisit_guard() {
        let g = g1();
        let st = EpisodeState {
            depth: 1,
            current_paths: [ReasoningPath::from_labels(&g, &s(&["A", "friend", "B"])).unwrap()]
                .into(),
            answers_so_far: BTreeSet::new(),
        };
        let a = StepAction {
            new_paths: vec![s(&["A", "friend", "B", "friend.inv", "A"])],
            ..Default::default()
        };
        assert_eq!(
            apply_action(&g, &st, std::slice::from_ref(&a), &cfg(5, 10)).state.current_paths.len(),
            1
        );
        let guarded = EpisodeConfig {
            forbid_revisit: true,
            ..cfg(5, 10)
        };
        assert_eq!(apply_action(&g, &st, &[a], &guarded).dropped_paths.len(), 1);
    }

    #[test]
    fn fanout_cap_truncates() {
        let g = g1();
        let st = init_episode(&g, &q(&g, &["A"], &["C"])).unwrap();
        let a = StepAction {
            new_paths: vec![s(&["A", "friend", "B"]), s(&["A", "friend", "E"])],
            ..Default::default()
        };
        let capped = EpisodeConfig {
            fanout_cap: Some(1),
            ..cfg(5, 10)
        };
        let out = apply_action(&g, &st, &[a], &capped);
        assert_eq!(out.state.current_paths.len(), 1);
        assert_eq!(out.fanout_truncated, 1);
    }

    #[test]
    fn oracle_episode_g1() {
        let g = g1();
        let question = q(&g, &["A"], &["C", "D", "F"]);
        let r = run_episode(&g, &question, &oracle(&g), &cfg(2, 256)).unwrap();
        assert_eq!(r.answers, ["C", "D", "F"].map(String::from).into());
        assert_eq!(r.termination, Termination::DMax);
        assert_eq!(r.steps_taken, 2);

        let r = run_episode(&g, &question, &oracle(&g), &cfg(1, 256)).unwrap();
        assert!(r.answers.is_empty());
        assert_eq!(r.termination, Termination::DMax);
        assert_eq!(r.steps_taken, 1);
    }

    #[test]
    fn oracle_depth_first_matches() {
        let g = g1();
        let question = q(&g, &["A"], &["C", "D", "F"]);
        for budget in [1, 2, 256] {
            let dfs = EpisodeConfig {
                mode: TraversalMode::DepthFirst,
                ..cfg(2, budget)
            };
            let r = run_episode(&g, &question, &oracle(&g), &dfs).unwrap();
            assert_eq!(r.answers, ["C", "D", "F"].map(String::from).into());
            assert_eq!(r.termination, Termination::DMax);
            // one step at A, then one per branch B and E
            assert_eq!(r.steps_taken, 3);
        }
    }

    #[test]
    fn null_policy_stops_at_first_step() {
        let g = g1();
        let question = q(&g, &["A"], &["C"]);
        let r = run_episode(&g, &question, &NullPolicy, &cfg(5, 256)).unwrap();
        assert!(r.answers.is_empty());
        assert_eq!(r.termination, Termination::EmptyFrontier);
        assert_eq!(r.steps_taken, 1);
    }

    struct Failing;
    impl Policy for Failing {
        fn respond(&self, _: &PolicyRequest) -> Result<RawPolicyResponse, PolicyError> {
            Err(PolicyError::Transport {
                endpoint: "x".into(),
                attempts: 1,
                message: "down".into(),
            })
        }
    }

    struct Stopper;
    impl Policy for Stopper {
        fn respond(&self, req: &PolicyRequest) -> Result<RawPolicyResponse, PolicyError> {
            let mut p = req.current_paths[0].clone();
            p.extend(req.neighbors[0][1..].iter().cloned());
            Ok(RawPolicyResponse::from_action(StepAction {
                answers: vec!["B".into()],
                new_paths: vec![p],
                stop: true,
            }))
        }
    }

    #[test]
    fn transport_failure_aborts() {
        let g = g1();
        let r = run_episode(&g, &q(&g, &["A"], &["C"]), &Failing, &cfg(5, 256)).unwrap();
        assert!(matches!(r.termination, Termination::Aborted(_)));
        assert!(r.trace.is_empty());
    }

    #[test]
    fn explicit_stop() {
        let g = g1();
        let r = run_episode(&g, &q(&g, &["A"], &["C"]), &Stopper, &cfg(5, 256)).unwrap();
        assert_eq!(r.termination, Termination::PolicyStop);
        assert_eq!(r.steps_taken, 1);
        assert!(r.answers.contains("B"));
    }

    #[test]
    fn config_validation() {
        assert!(cfg(0, 1).validate().is_err());
        assert!(cfg(1, 0).validate().is_err());
        assert!(cfg(1, 1).validate().is_ok());
        assert_eq!("dfs".parse::<TraversalMode>().unwrap(), TraversalMode::DepthFirst);
        assert!("bfs".parse::<TraversalMode>().is_err());
    }

    #[test]
    fn trace_serializes() {
        let g = g1();
        let question = q(&g, &["A"], &["C", "D", "F"]);
        let r = run_episode(&g, &question, &oracle(&g), &cfg(2, 256)).unwrap();
        let lines = trace_lines(&r, 0);
        assert_eq!(lines.len(), 2);
        let json = serde_json::to_string(&lines[1]).unwrap();
        let back: TraceLine = serde_json::from_str(&json).unwrap();
        assert_eq!(back, lines[1]);
        assert_eq!(back.answers, ["C", "D", "F"]);
        let p = PredictionLine::from_result(&r, 0);
        let json = serde_json::to_string(&p).unwrap();
        assert!(json.contains(r#""termination":{"kind":"d_max"}"#), "{json}");
    }
}
