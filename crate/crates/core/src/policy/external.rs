use std::time::{Duration, Instant};

use serde::Serialize;

use super::protocol::{
    parse_action, render_request, PolicyRequest, RawPolicyResponse, PROMPT_TEMPLATE_VERSION,
};
use super::{Policy, PolicyError};
use crate::path::LabelPath;

/// Bearer token sent to the policy endpoint when set.
pub const AUTH_TOKEN_ENV: &str = "KGWALK_POLICY_TOKEN";

#[derive(Debug, Clone)]
pub struct ExternalPolicyConfig {
    pub endpoint: String,
    pub timeout: Duration,
    /// Extra attempts after the first one fails at the transport level.
    pub retries: usize,
    pub retry_backoff: Duration,
    pub auth_token: Option<String>,
}

impl ExternalPolicyConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            timeout: Duration::from_secs(60),
            retries: 2,
            retry_backoff: Duration::from_millis(200),
            auth_token: std::env::var(AUTH_TOKEN_ENV).ok().filter(|t| !t.is_empty()),
        }
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    qid: &'a str,
    question: &'a str,
    depth: usize,
    current_paths: &'a [LabelPath],
    neighbors: &'a [[String; 3]],
    prompt: String,
    template_version: u32,
}

/// Posts each request as JSON and parses the response body as the action.
pub struct ExternalPolicy {
    cfg: ExternalPolicyConfig,
    agent: ureq::Agent,
}

impl ExternalPolicy {
    pub fn new(cfg: ExternalPolicyConfig) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(cfg.timeout).build();
        Self { cfg, agent }
    }

    fn attempt(&self, body: &str) -> Result<String, String> {
        let mut call = self
            .agent
            .post(&self.cfg.endpoint)
            .set("Content-Type", "application/json");
        if let Some(token) = &self.cfg.auth_token {
            call = call.set("Authorization", &format!("Bearer {token}"));
        }
        match call.send_string(body) {
            Ok(resp) => resp.into_string().map_err(|e| e.to_string()),
            Err(e) => Err(e.to_string()),
        }
    }
}

impl Policy for ExternalPolicy {
    fn respond(&self, req: &PolicyRequest) -> Result<RawPolicyResponse, PolicyError> {
        let body = serde_json::to_string(&WireRequest {
            qid: &req.qid,
            question: &req.question,
            depth: req.depth,
            current_paths: &req.current_paths,
            neighbors: &req.neighbors,
            prompt: render_request(req),
            template_version: PROMPT_TEMPLATE_VERSION,
        })
        .expect("request serializes");

        let attempts = self.cfg.retries + 1;
        let mut last_err = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                std::thread::sleep(self.cfg.retry_backoff);
            }
            let started = Instant::now();
            match self.attempt(&body) {
                Ok(text) => {
                    let mut resp = parse_action(&text);
                    resp.latency_ms = Some(started.elapsed().as_secs_f64() * 1e3);
                    return Ok(resp);
                }
                Err(e) => {
                    log::warn!(
                        "policy endpoint {} attempt {}/{} failed: {e}",
                        self.cfg.endpoint,
                        attempt + 1,
                        attempts
                    );
                    last_err = e;
                }
            }
        }
        Err(PolicyError::Transport {
            endpoint: self.cfg.endpoint.clone(),
            attempts,
            message: last_err,
        })
    }
}
