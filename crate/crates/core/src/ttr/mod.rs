//! Test-time reasoning: ambiguous attribute rows are shortlisted and
//! re-scored by a reasoner, and the reliability-weighted rethinking scores
//! are added to the prior similarities.

pub mod http;
pub mod prompt;
pub mod reasoner;

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::thread;

use log::warn;
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::config::{Backend, ExperimentConfig, TtrConfig};
use crate::dataset::MMKGPair;
use crate::eval::{ranking_metrics, RankingReport};
use crate::experiment::{test_pairs, Scoring};
use crate::objective::softmax;
use crate::{Result, RuleError};

pub use http::HttpReasoner;
pub use prompt::{build_prompt, normalize_score, parse_verdict, MalformedOutput, RethinkRequest, RethinkTarget, ShortlistEntry};
pub use reasoner::{
    read_jsonl, write_jsonl, CallKey, MockReasoner, Reasoner, ReplayReasoner, RequestRecord, ResponseRecord, TransportError,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TtrSettings {
    pub k: usize,
    pub skip_threshold: f64,
    pub retries: usize,
    pub parallelism: usize,
    pub all_attributes: bool,
}

impl From<&TtrConfig> for TtrSettings {
    fn from(c: &TtrConfig) -> Self {
        TtrSettings {
            k: c.k,
            skip_threshold: c.skip_threshold,
            retries: c.retries,
            parallelism: c.parallelism,
            all_attributes: c.all_attributes,
        }
    }
}

impl Default for TtrSettings {
    fn default() -> Self {
        (&TtrConfig::default()).into()
    }
}

fn first_argmax(row: &[f64]) -> Option<(usize, f64)> {
    row.iter()
        .copied()
        .enumerate()
        .fold(None, |best, (j, s)| match best {
            Some((_, b)) if b >= s => best,
            _ => Some((j, s)),
        })
}

/// A row is left alone when its peak is already confident, or when the
/// peak leads every other candidate by at least the threshold.
pub fn should_skip(row: &[f64], threshold: f64) -> bool {
    let Some((top, max)) = first_argmax(row) else {
        return true;
    };
    max >= threshold || row.iter().enumerate().all(|(j, &s)| j == top || max - s >= threshold)
}

/// Indices of the `k` highest scores, lower index first on ties.
pub fn shortlist(row: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..row.len()).collect();
    idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModalityStatus {
    Rethought,
    Skipped,
    Absent,
    NotRethinkable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityVerdict {
    pub modality: String,
    pub status: ModalityStatus,
    pub candidates: Vec<usize>,
    /// Raw scores `o` in `0..=10`, aligned with `candidates`.
    pub raw: Vec<u8>,
    pub normalized: Vec<f64>,
    /// Softmax of the normalised scores over the shortlist.
    pub rethink: Vec<f64>,
    /// Renormalised rethinking weight.
    pub weight: f64,
    /// Calls whose answer did not parse, including ones retried successfully.
    pub malformed: usize,
}

impl ModalityVerdict {
    fn idle(modality: &str, status: ModalityStatus) -> Self {
        ModalityVerdict {
            modality: modality.to_string(),
            status,
            candidates: Vec::new(),
            raw: Vec::new(),
            normalized: Vec::new(),
            rethink: Vec::new(),
            weight: 0.0,
            malformed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasonerVerdict {
    pub query: usize,
    pub modalities: Vec<ModalityVerdict>,
    /// Fused rethinking row as `(candidate, score)`, zero elsewhere.
    pub rethink: Vec<(usize, f64)>,
    /// Transport failure that sent this query back to its prior ranking.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub fallback: Option<String>,
}

impl ReasonerVerdict {
    /// `s + s_hat`.
    pub fn joint_row(&self, prior: &[f64]) -> Vec<f64> {
        let mut joint = prior.to_vec();
        for &(j, v) in &self.rethink {
            joint[j] += v;
        }
        joint
    }

    pub fn calls(&self) -> usize {
        self.modalities.iter().map(|m| m.raw.len()).sum()
    }
}

/// Everything rerank needs about the queries, indexed by left entity.
#[derive(Debug, Clone)]
pub struct RerankInput<'a> {
    pub prior: ArrayView2<'a, f64>,
    pub modality_rows: Vec<ArrayView2<'a, f64>>,
    pub modality_names: Vec<String>,
    /// `[modality][left entity]`.
    pub query_present: Vec<Vec<bool>>,
    /// `[left entity][modality]` reliability weights.
    pub weights: Vec<Vec<f64>>,
    pub left_names: Vec<String>,
    pub right_names: Vec<String>,
}

#[derive(Debug, Clone, Default)]
pub struct RerankOutcome {
    pub verdicts: Vec<ReasonerVerdict>,
    pub requests: Vec<RequestRecord>,
    pub responses: Vec<ResponseRecord>,
}

impl RerankOutcome {
    /// Prior scores with every verdict's rethinking row added.
    pub fn joint_scores(&self, prior: ArrayView2<f64>) -> Array2<f64> {
        let mut joint = prior.to_owned();
        for v in &self.verdicts {
            for &(j, s) in &v.rethink {
                joint[[v.query, j]] += s;
            }
        }
        joint
    }
}

struct QueryResult {
    verdict: ReasonerVerdict,
    requests: Vec<RequestRecord>,
    responses: Vec<ResponseRecord>,
}

fn rethink_modality(
    input: &RerankInput,
    q: usize,
    m: usize,
    target: RethinkTarget,
    reasoner: &dyn Reasoner,
    settings: &TtrSettings,
    requests: &mut Vec<RequestRecord>,
    responses: &mut Vec<ResponseRecord>,
) -> std::result::Result<ModalityVerdict, TransportError> {
    let row = input.modality_rows[m].row(q).to_vec();
    let candidates = shortlist(&row, settings.k);
    let entries: Vec<ShortlistEntry> = candidates
        .iter()
        .map(|&j| ShortlistEntry {
            id: j,
            name: input.right_names.get(j).cloned().unwrap_or_default(),
            prior: row[j],
        })
        .collect();
    let mut raw = Vec::with_capacity(candidates.len());
    let mut malformed = 0;
    for c in 0..candidates.len() {
        let request = RethinkRequest {
            query: q,
            query_name: input.left_names.get(q).cloned().unwrap_or_default(),
            modality: input.modality_names[m].clone(),
            target,
            shortlist: entries.clone(),
            candidate: c,
            all_attributes: settings.all_attributes,
        };
        let prompt = build_prompt(&request);
        let mut score = None;
        for attempt in 0..=settings.retries {
            let key = CallKey::of(&request, attempt);
            requests.push(RequestRecord {
                key: key.clone(),
                prompt: prompt.clone(),
            });
            match reasoner.complete(&request, &prompt, attempt) {
                Ok(text) => {
                    let parsed = parse_verdict(&text, target);
                    responses.push(ResponseRecord {
                        key,
                        text: Some(text),
                        error: None,
                    });
                    match parsed {
                        Ok(o) => {
                            score = Some(o);
                            break;
                        }
                        Err(MalformedOutput(text)) => {
                            malformed += 1;
                            warn!("malformed reasoner output for query {q}: {text:?}");
                        }
                    }
                }
                Err(e) => {
                    responses.push(ResponseRecord {
                        key,
                        text: None,
                        error: Some(e.0.clone()),
                    });
                    return Err(e);
                }
            }
        }
        // neutral after exhausted retries
        raw.push(score.unwrap_or(5));
    }
    let normalized: Vec<f64> = raw.iter().map(|&o| normalize_score(o)).collect();
    Ok(ModalityVerdict {
        modality: input.modality_names[m].clone(),
        status: ModalityStatus::Rethought,
        rethink: softmax(&normalized),
        candidates,
        raw,
        normalized,
        weight: 0.0,
        malformed,
    })
}

fn rethink_query(input: &RerankInput, q: usize, reasoner: &dyn Reasoner, settings: &TtrSettings) -> QueryResult {
    let mut requests = Vec::new();
    let mut responses = Vec::new();
    let mut modalities = Vec::with_capacity(input.modality_names.len());
    for m in 0..input.modality_names.len() {
        let name = &input.modality_names[m];
        let verdict = match RethinkTarget::for_modality(name) {
            None => ModalityVerdict::idle(name, ModalityStatus::NotRethinkable),
            Some(_) if !input.query_present[m][q] => ModalityVerdict::idle(name, ModalityStatus::Absent),
            Some(_) if should_skip(&input.modality_rows[m].row(q).to_vec(), settings.skip_threshold) => {
                ModalityVerdict::idle(name, ModalityStatus::Skipped)
            }
            Some(target) => {
                match rethink_modality(input, q, m, target, reasoner, settings, &mut requests, &mut responses) {
                    Ok(v) => v,
                    Err(e) => {
                        warn!("reasoner unavailable for query {q}, keeping the prior ranking: {}", e.0);
                        return QueryResult {
                            verdict: ReasonerVerdict {
                                query: q,
                                modalities: Vec::new(),
                                rethink: Vec::new(),
                                fallback: Some(e.0),
                            },
                            requests,
                            responses,
                        };
                    }
                }
            }
        };
        modalities.push(verdict);
    }

    let active: Vec<usize> = (0..modalities.len()).filter(|&m| modalities[m].status == ModalityStatus::Rethought).collect();
    let total: f64 = active.iter().map(|&m| input.weights[q][m].max(0.0)).sum();
    for &m in &active {
        modalities[m].weight = if total > 0.0 {
            input.weights[q][m].max(0.0) / total
        } else {
            1.0 / active.len() as f64
        };
    }
    let mut fused: BTreeMap<usize, f64> = BTreeMap::new();
    for &m in &active {
        let v = &modalities[m];
        for (&j, &s) in v.candidates.iter().zip(&v.rethink) {
            *fused.entry(j).or_insert(0.0) += v.weight * s;
        }
    }
    QueryResult {
        verdict: ReasonerVerdict {
            query: q,
            modalities,
            rethink: fused.into_iter().collect(),
            fallback: None,
        },
        requests,
        responses,
    }
}

/// Rethinks every query, at most `parallelism` at a time. Output order
/// follows `queries` regardless of completion order.
pub fn rerank(input: &RerankInput, queries: &[usize], reasoner: &dyn Reasoner, settings: &TtrSettings) -> Result<RerankOutcome> {
    let n_left = input.prior.nrows();
    if let Some(&q) = queries.iter().find(|&&q| q >= n_left) {
        return Err(RuleError::InvalidArgument(format!("query {q} outside {n_left} left entities")));
    }
    if input.modality_rows.len() != input.modality_names.len() || input.query_present.len() != input.modality_names.len() {
        return Err(RuleError::DimMismatch("modality rows, names and presence flags disagree".into()));
    }
    let workers = settings.parallelism.max(1).min(queries.len().max(1));
    let mut slots: Vec<Option<QueryResult>> = (0..queries.len()).map(|_| None).collect();
    thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                scope.spawn(move || {
                    (w..queries.len())
                        .step_by(workers)
                        .map(|i| (i, rethink_query(input, queries[i], reasoner, settings)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("reasoner worker panicked") {
                slots[i] = Some(r);
            }
        }
    });
    let mut out = RerankOutcome::default();
    for r in slots.into_iter().flatten() {
        out.verdicts.push(r.verdict);
        out.requests.extend(r.requests);
        out.responses.extend(r.responses);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TtrSummary {
    pub backend: Backend,
    pub queries: usize,
    /// Queries with at least one modality rethought.
    pub rethought_queries: usize,
    pub skipped_modalities: usize,
    pub absent_modalities: usize,
    pub calls: usize,
    pub malformed: usize,
    pub fallbacks: Vec<usize>,
    pub before: RankingReport,
    pub after: RankingReport,
}

#[derive(Debug, Clone)]
pub struct TtrOutcome {
    pub summary: TtrSummary,
    pub rerank: RerankOutcome,
}

impl TtrOutcome {
    pub fn write_logs(&self, dir: &Path) -> Result<()> {
        write_jsonl(&dir.join("ttr_requests.jsonl"), &self.rerank.requests)?;
        write_jsonl(&dir.join("ttr_responses.jsonl"), &self.rerank.responses)
    }
}

pub fn build_reasoner(pair: &MMKGPair, cfg: &ExperimentConfig, seed: u64) -> Result<Box<dyn Reasoner>> {
    Ok(match cfg.ttr.backend {
        Backend::Mock => {
            let view = pair.eval_view();
            let key: HashMap<usize, usize> = view.test_anchors().map(|(k, a)| (a.left, view.planted_right(k))).collect();
            Box::new(MockReasoner::new(key, cfg.ttr.mock_error_rate, seed))
        }
        Backend::Http => Box::new(HttpReasoner::from_config(&cfg.ttr)?),
        Backend::Replay => {
            let path = cfg
                .ttr
                .replay_log
                .as_ref()
                .ok_or_else(|| RuleError::Config("ttr.replay_log is required for the replay backend".into()))?;
            Box::new(ReplayReasoner::load(Path::new(path))?)
        }
    })
}

/// Reranks every test query of a scored pair.
pub fn rerank_pair(pair: &MMKGPair, scoring: &Scoring, cfg: &ExperimentConfig, seed: u64, reasoner: Option<&dyn Reasoner>) -> Result<TtrOutcome> {
    let owned;
    let reasoner = match reasoner {
        Some(r) => r,
        None => {
            owned = build_reasoner(pair, cfg, seed)?;
            owned.as_ref()
        }
    };
    let modalities = pair.modalities();
    let input = RerankInput {
        prior: scoring.scores.view(),
        modality_rows: scoring.modality_scores.iter().map(|s| s.view()).collect(),
        modality_names: modalities.iter().map(|m| m.name.clone()).collect(),
        query_present: (0..modalities.len())
            .map(|m| (0..pair.left().len()).map(|i| pair.left().attribute(i, m).is_some()).collect())
            .collect(),
        weights: scoring
            .reliability
            .left
            .iter()
            .map(|q| q.modality_level.iter().map(|l| l.map_or(0.0, |l| l.weight)).collect())
            .collect(),
        left_names: pair.left().entities.iter().map(|e| e.name.clone()).collect(),
        right_names: pair.right().entities.iter().map(|e| e.name.clone()).collect(),
    };
    let anchors = test_pairs(pair);
    let queries: Vec<usize> = anchors.iter().map(|&(l, _)| l).collect();
    let outcome = rerank(&input, &queries, reasoner, &(&cfg.ttr).into())?;
    let joint = outcome.joint_scores(scoring.scores.view());
    let summary = TtrSummary {
        backend: cfg.ttr.backend,
        queries: queries.len(),
        rethought_queries: outcome
            .verdicts
            .iter()
            .filter(|v| v.modalities.iter().any(|m| m.status == ModalityStatus::Rethought))
            .count(),
        skipped_modalities: count_status(&outcome, ModalityStatus::Skipped),
        absent_modalities: count_status(&outcome, ModalityStatus::Absent),
        calls: outcome.requests.len(),
        malformed: outcome.verdicts.iter().flat_map(|v| &v.modalities).map(|m| m.malformed).sum(),
        fallbacks: outcome.verdicts.iter().filter(|v| v.fallback.is_some()).map(|v| v.query).collect(),
        before: ranking_metrics(scoring.scores.view(), &anchors, cfg.eval.direction)?,
        after: ranking_metrics(joint.view(), &anchors, cfg.eval.direction)?,
    };
    Ok(TtrOutcome { summary, rerank: outcome })
}

fn count_status(outcome: &RerankOutcome, status: ModalityStatus) -> usize {
    outcome.verdicts.iter().flat_map(|v| &v.modalities).filter(|m| m.status == status).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use proptest::prelude::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    #[test]
    fn skip_rule_examples() {
        assert!(should_skip(&[0.25, 0.1, 0.0], 0.2));
        assert!(!should_skip(&[0.15, 0.14, 0.0], 0.2));
        assert!(should_skip(&[0.15, -0.05, -0.3], 0.2));
        // a tie at the peak cannot satisfy the gap condition
        assert!(!should_skip(&[0.1, 0.1, -0.5], 0.2));
    }

    #[test]
    fn shortlist_orders_by_score_then_index() {
        assert_eq!(shortlist(&[0.1, 0.3, 0.3, -0.2], 3), vec![1, 2, 0]);
        assert_eq!(shortlist(&[0.1, 0.2], 8), vec![1, 0]);
    }

    /// Answers 10 for the keyed candidate, or garbage for the first
    /// `garbage` attempts of every call.
    struct Scripted {
        key: HashMap<usize, usize>,
        garbage: usize,
        calls: AtomicUsize,
    }

    impl Reasoner for Scripted {
        fn complete(&self, r: &RethinkRequest, _p: &str, attempt: usize) -> std::result::Result<String, TransportError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            if attempt < self.garbage {
                return Ok(format!("{} = 11 out of 10", r.target.tag()));
            }
            let o = if self.key.get(&r.query) == Some(&r.candidate_entry().id) { 10 } else { 0 };
            Ok(format!("{} = {o} out of 10", r.target.tag()))
        }
    }

    struct Down;

    impl Reasoner for Down {
        fn complete(&self, _r: &RethinkRequest, _p: &str, _a: usize) -> std::result::Result<String, TransportError> {
            Err(TransportError("connection refused".into()))
        }
    }

    fn input<'a>(prior: &'a Array2<f64>, rows: &'a [Array2<f64>], present: Vec<Vec<bool>>) -> RerankInput<'a> {
        let n = prior.nrows();
        RerankInput {
            prior: prior.view(),
            modality_rows: rows.iter().map(|r| r.view()).collect(),
            modality_names: vec!["structure".into(), "image".into(), "text".into()],
            query_present: present,
            weights: vec![vec![0.9, 0.6, 0.2]; n],
            left_names: (0..n).map(|i| format!("l{i}")).collect(),
            right_names: (0..prior.ncols()).map(|i| format!("r{i}")).collect(),
        }
    }

    #[test]
    fn keyed_reasoner_fixes_a_misranked_query() {
        // prior prefers candidate 0, truth is 2
        let prior = Array2::from_shape_vec((1, 4), vec![0.12, 0.05, 0.10, 0.01]).unwrap();
        let rows = vec![prior.clone(), prior.clone(), prior.clone()];
        let inp = input(&prior, &rows, vec![vec![true]; 3]);
        let reasoner = Scripted {
            key: HashMap::from([(0, 2)]),
            garbage: 0,
            calls: AtomicUsize::new(0),
        };
        let out = rerank(&inp, &[0], &reasoner, &TtrSettings::default()).unwrap();
        let v = &out.verdicts[0];
        assert_eq!(v.modalities[0].status, ModalityStatus::NotRethinkable);
        assert_eq!(v.modalities[1].raw.len(), 4);
        assert!((v.modalities[1].weight - 0.75).abs() < 1e-12);
        let joint = v.joint_row(prior.row(0).as_slice().unwrap());
        assert_eq!(first_argmax(&joint).unwrap().0, 2);
        // direct arithmetic: rethink share of the true candidate
        let e = std::f64::consts::E;
        let top = e / (e + 3.0 / e);
        assert!((joint[2] - (0.10 + top)).abs() < 1e-12);
        assert_eq!(out.requests.len(), 8);
        assert_eq!(reasoner.calls.load(Ordering::SeqCst), 8);
    }

    #[test]
    fn absent_and_skipped_modalities_contribute_nothing() {
        let prior = Array2::from_shape_vec((2, 3), vec![0.5, 0.1, 0.0, 0.1, 0.09, 0.0]).unwrap();
        let rows = vec![prior.clone(), prior.clone(), prior.clone()];
        let present = vec![vec![true, true], vec![true, false], vec![true, false]];
        let inp = input(&prior, &rows, present);
        let out = rerank(&inp, &[0, 1], &Down, &TtrSettings::default()).unwrap();
        // query 0 skips every row; query 1 has no rethinkable attribute
        for v in &out.verdicts {
            assert!(v.rethink.is_empty());
            assert!(v.fallback.is_none());
        }
        assert_eq!(out.verdicts[0].modalities[1].status, ModalityStatus::Skipped);
        assert_eq!(out.verdicts[1].modalities[1].status, ModalityStatus::Absent);
        assert_eq!(out.joint_scores(prior.view()), prior);
    }

    #[test]
    fn malformed_answers_retry_then_fall_back_to_neutral() {
        let prior = Array2::from_shape_vec((1, 3), vec![0.1, 0.09, 0.0]).unwrap();
        let rows = vec![prior.clone(), prior.clone(), prior.clone()];
        let mut inp = input(&prior, &rows, vec![vec![true]; 3]);
        inp.modality_names[2] = "structure".into();
        let settings = TtrSettings { retries: 2, ..TtrSettings::default() };
        let reasoner = Scripted { key: HashMap::from([(0, 1)]), garbage: 2, calls: AtomicUsize::new(0) };
        let out = rerank(&inp, &[0], &reasoner, &settings).unwrap();
        assert_eq!(out.verdicts[0].modalities[1].raw, vec![0, 10, 0]);
        assert_eq!(out.verdicts[0].modalities[1].malformed, 6);
        let always_bad = Scripted { key: HashMap::new(), garbage: 99, calls: AtomicUsize::new(0) };
        let out = rerank(&inp, &[0], &always_bad, &settings).unwrap();
        let m = &out.verdicts[0].modalities[1];
        assert_eq!(m.raw, vec![5, 5, 5]);
        assert!(m.normalized.iter().all(|&v| v == 0.0));
        assert_eq!(always_bad.calls.load(Ordering::SeqCst), 9);
    }

    #[test]
    fn transport_failure_keeps_prior_ranking() {
        let prior = Array2::from_shape_vec((1, 3), vec![0.1, 0.09, 0.0]).unwrap();
        let rows = vec![prior.clone(), prior.clone(), prior.clone()];
        let inp = input(&prior, &rows, vec![vec![true]; 3]);
        let out = rerank(&inp, &[0], &Down, &TtrSettings::default()).unwrap();
        assert_eq!(out.verdicts[0].fallback.as_deref(), Some("connection refused"));
        assert_eq!(out.joint_scores(prior.view()), prior);
        assert_eq!(out.responses[0].error.as_deref(), Some("connection refused"));
    }

    #[test]
    fn parallel_merge_is_deterministic() {
        let n = 12;
        let prior = Array2::from_shape_fn((n, 10), |(i, j)| ((i * 7 + j * 3) % 10) as f64 / 100.0);
        let rows = vec![prior.clone(), prior.clone(), prior.clone()];
        let inp = input(&prior, &rows, vec![vec![true; n]; 3]);
        let key: HashMap<usize, usize> = (0..n).map(|i| (i, (i + 1) % 10)).collect();
        let mock = MockReasoner::new(key, 0.3, 4);
        let queries: Vec<usize> = (0..n).rev().collect();
        let serial = rerank(&inp, &queries, &mock, &TtrSettings { parallelism: 1, ..TtrSettings::default() }).unwrap();
        let parallel = rerank(&inp, &queries, &mock, &TtrSettings { parallelism: 5, ..TtrSettings::default() }).unwrap();
        assert_eq!(serial.verdicts, parallel.verdicts);
        assert_eq!(serial.requests, parallel.requests);
        assert_eq!(parallel.verdicts[0].query, n - 1);
    }

    struct Neutral;

    impl Reasoner for Neutral {
        fn complete(&self, r: &RethinkRequest, _p: &str, _a: usize) -> std::result::Result<String, TransportError> {
            Ok(format!("{} = 5 out of 10", r.target.tag()))
        }
    }

    proptest! {
        #[test]
        fn neutral_reasoner_adds_a_uniform_bonus(
            vals in proptest::collection::vec(-0.3f64..0.19, 20),
        ) {
            let prior = Array2::from_shape_vec((1, 20), vals.clone()).unwrap();
            let rows = vec![prior.clone(), prior.clone(), prior.clone()];
            let inp = input(&prior, &rows, vec![vec![true]; 3]);
            let out = rerank(&inp, &[0], &Neutral, &TtrSettings::default()).unwrap();
            let v = &out.verdicts[0];
            let joint = v.joint_row(&vals);
            if should_skip(&vals, 0.2) {
                prop_assert_eq!(joint, vals);
            } else {
                let short = shortlist(&vals, 8);
                // two rethought modalities, each uniform over the same shortlist
                for j in 0..20 {
                    let bonus = if short.contains(&j) { 1.0 / 8.0 } else { 0.0 };
                    prop_assert!((joint[j] - vals[j] - bonus).abs() < 1e-12);
                }
                let (top, _) = first_argmax(&joint).unwrap();
                let (prior_top, _) = first_argmax(&vals).unwrap();
                if top != prior_top {
                    // only a non-shortlisted prior winner can lose, and only by less than the bonus
                    prop_assert!(!short.contains(&prior_top));
                    prop_assert!(vals[prior_top] - vals[top] < 1.0 / 8.0);
                }
            }
        }
    }
}
