//! Policies decide, per neighbor batch, which answers to emit and which
//! paths to extend.

mod external;
pub mod mock;
mod oracle;
pub mod protocol;

use std::collections::BTreeSet;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use external::{ExternalPolicy, ExternalPolicyConfig, AUTH_TOKEN_ENV};
pub use oracle::{oracle_step, OraclePolicy};
pub use protocol::{parse_action, render_request, PolicyRequest, RawPolicyResponse, StepAction};

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("no gold records for question {0}")]
    UnknownQid(String),
    #[error("policy endpoint {endpoint} failed after {attempts} attempt(s): {message}")]
    Transport {
        endpoint: String,
        attempts: usize,
        message: String,
    },
    #[error("invalid policy spec {0:?}")]
    BadSpec(String),
}

/// Policy selector as written on the command line: `oracle`, `null`,
/// `random`, `random:<k>` or `external:<url>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PolicySpec {
    Oracle,
    Null,
    Random { k: usize },
    External { url: String },
}

pub const DEFAULT_RANDOM_K: usize = 2;

impl FromStr for PolicySpec {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || PolicyError::BadSpec(s.to_string());
        let (kind, arg) = match s.split_once(':') {
            Some((kind, arg)) => (kind, Some(arg)),
            None => (s, None),
        };
        match (kind, arg) {
            ("oracle", None) => Ok(Self::Oracle),
            ("null", None) => Ok(Self::Null),
            ("random", None) => Ok(Self::Random { k: DEFAULT_RANDOM_K }),
            ("random", Some(k)) => match k.parse() {
                Ok(k) if k >= 1 => Ok(Self::Random { k }),
                _ => Err(bad()),
            },
            ("external", Some(url)) if url.starts_with("http://") || url.starts_with("https://") => {
                Ok(Self::External { url: url.to_string() })
            }
            _ => Err(bad()),
        }
    }
}

/// A policy answers one [`PolicyRequest`] at a time. Implementations hold
/// no per-episode state so one instance can serve concurrent episodes.
pub trait Policy: Send + Sync {
    fn respond(&self, req: &PolicyRequest) -> Result<RawPolicyResponse, PolicyError>;
}

impl<P: Policy + ?Sized> Policy for &P {
    fn respond(&self, req: &PolicyRequest) -> Result<RawPolicyResponse, PolicyError> {
        (**self).respond(req)
    }
}

impl<P: Policy + ?Sized> Policy for Box<P> {
    fn respond(&self, req: &PolicyRequest) -> Result<RawPolicyResponse, PolicyError> {
        (**self).respond(req)
    }
}

/// Always returns the empty action.
#[derive(Debug, Clone, Copy, Default)]
pub struct NullPolicy;

impl Policy for NullPolicy {
    fn respond(&self, _req: &PolicyRequest) -> Result<RawPolicyResponse, PolicyError> {
        Ok(RawPolicyResponse::from_action(StepAction::default()))
    }
}

/// Picks up to `k` one-triple extensions uniformly from the batch and names
/// their tails as answers.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    pub k: usize,
    pub seed: u64,
}

impl Policy for RandomPolicy {
    fn respond(&self, req: &PolicyRequest) -> Result<RawPolicyResponse, PolicyError> {
        let mut candidates = Vec::new();
        for p in req.current_paths.iter() {
            let Some(last) = p.last() else { continue };
            for t in req.neighbors.iter().filter(|t| &t[0] == last) {
                let mut ext = p.clone();
                ext.push(t[1].clone());
                ext.push(t[2].clone());
                candidates.push(ext);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ request_fingerprint(req));
        let chosen: Vec<_> = candidates
            .choose_multiple(&mut rng, self.k)
            .cloned()
            .collect();
        let answers: BTreeSet<String> = chosen.iter().filter_map(|p| p.last().cloned()).collect();
        Ok(RawPolicyResponse::from_action(StepAction {
            answers: answers.into_iter().collect(),
            new_paths: chosen,
            stop: false,
        }))
    }
}

/// FNV-1a over the request's identifying fields; stable across builds.
fn request_fingerprint(req: &PolicyRequest) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut feed = |bytes: &[u8]| {
        for &b in bytes {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        h ^= 0xff;
        h = h.wrapping_mul(0x0100_0000_01b3);
    };
    feed(req.qid.as_bytes());
    feed(&req.depth.to_le_bytes());
    for p in req.current_paths.iter() {
        for l in p {
            feed(l.as_bytes());
        }
    }
    for t in &req.neighbors {
        for l in t {
            feed(l.as_bytes());
        }
    }
    h
}
