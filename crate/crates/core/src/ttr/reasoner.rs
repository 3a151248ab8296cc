//! Reasoner backends and the request/response audit records.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::prompt::RethinkRequest;
use crate::{Result, RuleError};

/// A call that never produced a text answer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransportError(pub String);

pub trait Reasoner: Sync {
    /// Answers one prompt. `attempt` counts re-asks after malformed answers.
    fn complete(&self, request: &RethinkRequest, prompt: &str, attempt: usize) -> std::result::Result<String, TransportError>;
}

/// Identifies one reasoner call within a run.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CallKey {
    pub query: usize,
    pub modality: String,
    pub candidate: usize,
    pub attempt: usize,
}

impl CallKey {
    pub fn of(request: &RethinkRequest, attempt: usize) -> Self {
        CallKey {
            query: request.query,
            modality: request.modality.clone(),
            candidate: request.candidate_entry().id,
            attempt,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestRecord {
    #[serde(flatten)]
    pub key: CallKey,
    pub prompt: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord {
    #[serde(flatten)]
    pub key: CallKey,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub text: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).expect("record serializes");
        out.push(b'\n');
    }
    fs::File::create(path)
        .and_then(|mut f| f.write_all(&out))
        .map_err(|e| RuleError::io(path, e))
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| RuleError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| RuleError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| RuleError::data(path.display().to_string(), Some(i + 1), e.to_string()))?,
        );
    }
    Ok(out)
}

/// Scores from an answer key: 10 for the keyed counterpart, 0 otherwise.
/// With probability `error_rate` a call answers uniformly at random
/// instead; the draw is a pure function of the call.
#[derive(Debug, Clone)]
pub struct MockReasoner {
    key: HashMap<usize, usize>,
    error_rate: f64,
    seed: u64,
}

impl MockReasoner {
    pub fn new(key: HashMap<usize, usize>, error_rate: f64, seed: u64) -> Self {
        MockReasoner { key, error_rate, seed }
    }

    fn call_rng(&self, k: &CallKey) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let salt = k.modality.bytes().fold(0u64, |h, b| h.wrapping_mul(31).wrapping_add(b as u64));
        rng.set_stream(
            (k.query as u64)
                .wrapping_mul(0x9e37_79b9_7f4a_7c15)
                .wrapping_add((k.candidate as u64).wrapping_mul(0xc2b2_ae3d_27d4_eb4f))
                .wrapping_add(salt.rotate_left(17))
                .wrapping_add(k.attempt as u64),
        );
        rng
    }
}

impl Reasoner for MockReasoner {
    fn complete(&self, request: &RethinkRequest, _prompt: &str, attempt: usize) -> std::result::Result<String, TransportError> {
        let key = CallKey::of(request, attempt);
        let mut rng = self.call_rng(&key);
        let score = if rng.random::<f64>() < self.error_rate {
            rng.random_range(0..=10u8)
        } else if self.key.get(&request.query) == Some(&key.candidate) {
            10
        } else {
            0
        };
        Ok(format!("{} = {score} out of 10", request.target.tag()))
    }
}

/// Serves answers from a recorded response log.
#[derive(Debug, Clone, Default)]
pub struct ReplayReasoner {
    responses: HashMap<CallKey, ResponseRecord>,
}

impl ReplayReasoner {
    pub fn from_records(records: Vec<ResponseRecord>) -> Self {
        ReplayReasoner {
            responses: records.into_iter().map(|r| (r.key.clone(), r)).collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(Self::from_records(read_jsonl(path)?))
    }
}

impl Reasoner for ReplayReasoner {
    fn complete(&self, request: &RethinkRequest, _prompt: &str, attempt: usize) -> std::result::Result<String, TransportError> {
        let key = CallKey::of(request, attempt);
        match self.responses.get(&key) {
            Some(ResponseRecord { text: Some(t), .. }) => Ok(t.clone()),
            Some(ResponseRecord { error: Some(e), .. }) => Err(TransportError(e.clone())),
            _ => Err(TransportError(format!("no recorded response for {key:?}"))),
        }
    }
}
