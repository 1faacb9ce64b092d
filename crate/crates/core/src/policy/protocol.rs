//! Request/response wire types and the structured JSON action format.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::path::LabelPath;

/// Bumped whenever the rendered prompt text changes.
pub const PROMPT_TEMPLATE_VERSION: u32 = 1;
pub const ACTION_SCHEMA_LINE: &str = r#"{"answers": [], "exploration_paths": []}"#;
pub const NO_PATHS_SENTINEL: &str = "(none)";

/// One batch of the observed state, as sent to a policy. Batches of one
/// step share their `current_paths`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyRequest {
    pub qid: String,
    pub question: String,
    pub depth: usize,
    pub current_paths: Arc<Vec<LabelPath>>,
    pub neighbors: Vec<[String; 3]>,
}

/// Predicted answers and next-step paths. Labels, not ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StepAction {
    pub answers: Vec<String>,
    pub new_paths: Vec<LabelPath>,
    /// Optional `"stop": true` in the action object ends the episode after
    /// this step.
    pub stop: bool,
}

#[derive(Serialize)]
struct ActionWire<'a> {
    answers: &'a [String],
    exploration_paths: &'a [LabelPath],
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    stop: bool,
}

impl StepAction {
    pub fn is_empty(&self) -> bool {
        self.answers.is_empty() && self.new_paths.is_empty()
    }

    /// Serializes to the action object a policy is expected to emit.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&ActionWire {
            answers: &self.answers,
            exploration_paths: &self.new_paths,
            stop: self.stop,
        })
        .expect("string lists always serialize")
    }
}

/// Verbatim policy output plus its parse. `format_ok` iff `parsed` is set.
#[derive(Debug, Clone, PartialEq)]
pub struct RawPolicyResponse {
    pub text: String,
    pub parsed: Option<StepAction>,
    pub format_ok: bool,
    pub latency_ms: Option<f64>,
}

impl RawPolicyResponse {
    pub fn from_action(action: StepAction) -> Self {
        Self {
            text: action.to_json(),
            parsed: Some(action),
            format_ok: true,
            latency_ms: None,
        }
    }

    /// The parsed action, or an empty one when the format check failed.
    pub fn action_or_empty(&self) -> StepAction {
        self.parsed.clone().unwrap_or_default()
    }
}

/// Renders a request as prompt text. Output is byte-stable for equal input.
pub fn render_request(req: &PolicyRequest) -> String {
    let mut s = String::new();
    s.push_str("You are exploring a knowledge graph to answer a question.\n");
    s.push_str(&format!("question: {}\n", req.question));
    s.push_str(&format!("step: {}\n", req.depth));
    if req.current_paths.is_empty() {
        s.push_str(&format!("current paths: {NO_PATHS_SENTINEL}\n"));
    } else {
        s.push_str("current paths:\n");
        for p in req.current_paths.iter() {
            s.push_str(&format!("- {}\n", json_list(p)));
        }
    }
    if req.neighbors.is_empty() {
        s.push_str(&format!("neighbor triples: {NO_PATHS_SENTINEL}\n"));
    } else {
        s.push_str("neighbor triples:\n");
        for t in &req.neighbors {
            s.push_str(&format!("- {}\n", json_list(t)));
        }
    }
    s.push_str(
        "List entities that answer the question, and extend current paths by one \
         neighbor triple each to keep exploring.\n",
    );
    s.push_str("Respond with one JSON object:\n");
    s.push_str(ACTION_SCHEMA_LINE);
    s.push('\n');
    s
}

/// Upper bound on `render_request` length (in chars) for requests with at
/// most `max_paths` paths of at most `max_path_hops` hops, at most
/// `batch_budget` neighbors and labels of at most `max_label_chars` chars.
pub fn render_char_budget(
    question_chars: usize,
    max_paths: usize,
    max_path_hops: usize,
    batch_budget: usize,
    max_label_chars: usize,
) -> usize {
    // Worst-case JSON escaping is 6 chars per input char (\uXXXX).
    let label = 6 * max_label_chars + 3;
    let path = 4 + (2 * max_path_hops + 1) * label;
    let triple = 4 + 3 * label;
    render_request(&PolicyRequest {
        qid: String::new(),
        question: String::new(),
        depth: usize::MAX,
        current_paths: Default::default(),
        neighbors: vec![],
    })
    .chars()
    .count()
        + question_chars
        + 40
        + max_paths * path
        + batch_budget * triple
}

fn json_list<S: Serialize + ?Sized>(items: &S) -> String {
    serde_json::to_string(items).expect("string lists always serialize")
}

/// Extracts the first JSON object in `text` and checks it against the
/// action schema. Surrounding prose and extra keys are tolerated.
/// Parses the action out of raw policy output. The text must contain exactly
/// one top-level JSON object (prose around it is fine) with list-valued
/// `answers` and `exploration_paths`; each path alternates entity and
/// relation labels, so it has odd length.
pub fn parse_action(text: &str) -> RawPolicyResponse {
    let parsed = match json_objects(text).as_slice() {
        [obj] => action_from_object(obj),
        _ => None,
    };
    RawPolicyResponse {
        text: text.to_string(),
        format_ok: parsed.is_some(),
        parsed,
        latency_ms: None,
    }
}

/// Top-level JSON objects embedded in `text`, left to right.
fn json_objects(text: &str) -> Vec<serde_json::Map<String, Value>> {
    let mut out = Vec::new();
    let mut pos = 0;
    while let Some(off) = text[pos..].find('{') {
        let start = pos + off;
        let mut stream = serde_json::Deserializer::from_str(&text[start..]).into_iter::<Value>();
        match stream.next() {
            Some(Ok(Value::Object(map))) => {
                out.push(map);
                pos = start + stream.byte_offset();
            }
            _ => pos = start + 1,
        }
    }
    out
}

fn string_list(v: &Value) -> Option<Vec<String>> {
    v.as_array()?
        .iter()
        .map(|x| x.as_str().map(str::to_string))
        .collect()
}

fn action_from_object(obj: &serde_json::Map<String, Value>) -> Option<StepAction> {
    let answers = string_list(obj.get("answers")?)?;
    let new_paths = obj
        .get("exploration_paths")?
        .as_array()?
        .iter()
        .map(|p| string_list(p).filter(|p| p.len() % 2 == 1))
        .collect::<Option<Vec<_>>>()?;
    let stop = match obj.get("stop") {
        None | Some(Value::Null) => false,
        Some(Value::Bool(b)) => *b,
        Some(_) => return None,
    };
    Some(StepAction {
        answers,
        new_paths,
        stop,
    })
}
