//! End-to-end runs: generate, inject noise, train, evaluate, and
//! optionally rerank with test-time reasoning. Multi-seed sweeps report
//! means.

use std::fmt::Write as _;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::config::{AblationConfig, ExperimentConfig};
use crate::dataset::{generate_synthetic, inject_noise, MMKGPair, NoiseRatios};
use crate::encoders::{encode, modality_similarity, EmbeddingTable, EncoderBank};
use crate::eval::{noise_diagnostics, ranking_metrics, NoiseDiagnostics, RankingReport, ScoredAnchor};
use crate::fusion::{estimate_reliability, fuse, FusionWeights, TableReliability};
use crate::train::{train, AnchorReliability, TrainOutcome};
use crate::ttr::{rerank_pair, TtrOutcome, TtrSummary};
use crate::Result;

/// Independent RNG stream for one pipeline stage.
pub fn stage_seed(seed: u64, stage: u64) -> u64 {
    seed ^ stage.wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

pub const STAGE_NOISE: u64 = 1;
pub const STAGE_INIT: u64 = 2;
pub const STAGE_REASONER: u64 = 3;

/// Test-time scores of one trained model.
#[derive(Debug, Clone)]
pub struct Scoring {
    pub table: EmbeddingTable,
    pub reliability: TableReliability,
    pub weights: FusionWeights,
    /// Fused left-by-right similarities.
    pub scores: Array2<f64>,
    pub modality_scores: Vec<Array2<f64>>,
}

/// Scores every left entity against every right entity. Fusion weights come
/// from greedy correspondence estimates when weighted fusion is enabled.
pub fn score_pair(pair: &MMKGPair, bank: &EncoderBank, cfg: &ExperimentConfig) -> Result<Scoring> {
    let table = encode(bank, pair)?;
    let reliability = estimate_reliability(&table, cfg.model.tau, cfg.model.balance)?;
    let weights = if cfg.ablation.drf {
        reliability.weights()
    } else {
        FusionWeights::plain(pair.left().len(), pair.right().len(), pair.modalities().len())
    };
    let fused = fuse(&table, &weights)?;
    let scores = fused.left.dot(&fused.right.t());
    let modality_scores = (0..pair.modalities().len())
        .map(|m| modality_similarity(&table, m))
        .collect::<Result<Vec<_>>>()?;
    Ok(Scoring {
        table,
        reliability,
        weights,
        scores,
        modality_scores,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub seed: u64,
    pub ablation: AblationConfig,
    pub noise: NoiseRatios,
    pub ranking: RankingReport,
    pub noise_detection: NoiseDiagnostics,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ttr: Option<TtrSummary>,
}

pub fn test_pairs(pair: &MMKGPair) -> Vec<(usize, usize)> {
    pair.eval_view().test_anchors().map(|(_, a)| (a.left, a.right)).collect()
}

/// Ranking on test anchors plus detection of corrupted train anchors.
pub fn evaluate(
    pair: &MMKGPair,
    bank: &EncoderBank,
    reliability: &[AnchorReliability],
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<(EvalReport, Scoring)> {
    let scoring = score_pair(pair, bank, cfg)?;
    let ranking = ranking_metrics(scoring.scores.view(), &test_pairs(pair), cfg.eval.direction)?;
    let view = pair.eval_view();
    let scored: Vec<ScoredAnchor> = reliability
        .iter()
        .map(|r| ScoredAnchor {
            weight: r.w,
            subset: r.subset,
            corrupted: view.anchor_mask(r.anchor).any(),
        })
        .collect();
    let report = EvalReport {
        seed,
        ablation: cfg.ablation.clone(),
        noise: cfg.noise.ratios(),
        ranking,
        noise_detection: noise_diagnostics(&scored),
        ttr: None,
    };
    Ok((report, scoring))
}

/// Builds the noisy pair of a run.
pub fn build_pair(cfg: &ExperimentConfig, seed: u64) -> Result<MMKGPair> {
    let mut gen = cfg.data.clone();
    gen.seed = seed;
    let pristine = generate_synthetic(&gen)?;
    inject_noise(&pristine, &cfg.noise, stage_seed(seed, STAGE_NOISE))
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub pair: MMKGPair,
    pub train: TrainOutcome,
    pub report: EvalReport,
    pub ttr: Option<TtrOutcome>,
}

pub fn run(cfg: &ExperimentConfig, seed: u64) -> Result<RunOutput> {
    let pair = build_pair(cfg, seed)?;
    let trained = train(&pair, cfg, stage_seed(seed, STAGE_INIT))?;
    let (mut report, scoring) = evaluate(&pair, &trained.bank, &trained.reliability, cfg, seed)?;
    let ttr = if cfg.ttr.enabled {
        let outcome = rerank_pair(&pair, &scoring, cfg, stage_seed(seed, STAGE_REASONER), None)?;
        report.ttr = Some(outcome.summary.clone());
        Some(outcome)
    } else {
        None
    };
    Ok(RunOutput {
        pair,
        train: trained,
        report,
        ttr,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(MeanStd {
            mean,
            std: var.sqrt(),
            n: values.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub seeds: Vec<u64>,
    #[serde(rename = "hits@1")]
    pub hits1: Option<MeanStd>,
    #[serde(rename = "hits@10")]
    pub hits10: Option<MeanStd>,
    pub mrr: Option<MeanStd>,
    pub auc: Option<MeanStd>,
    #[serde(rename = "ttr_hits@1", skip_serializing_if = "Option::is_none", default)]
    pub ttr_hits1: Option<MeanStd>,
}

pub fn summarize(reports: &[EvalReport]) -> SweepSummary {
    let pick = |f: &dyn Fn(&EvalReport) -> Option<f64>| MeanStd::of(&reports.iter().filter_map(f).collect::<Vec<_>>());
    SweepSummary {
        seeds: reports.iter().map(|r| r.seed).collect(),
        hits1: pick(&|r| Some(r.ranking.hits1)),
        hits10: pick(&|r| Some(r.ranking.hits10)),
        mrr: pick(&|r| Some(r.ranking.mrr)),
        auc: pick(&|r| r.noise_detection.auc),
        ttr_hits1: pick(&|r| r.ttr.as_ref().map(|t| t.after.hits1)),
    }
}

/// Runs every configured seed.
pub fn sweep(cfg: &ExperimentConfig) -> Result<(Vec<EvalReport>, SweepSummary)> {
    let reports = cfg
        .seeds
        .iter()
        .map(|&s| run(cfg, s).map(|o| o.report))
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize(&reports);
    Ok((reports, summary))
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{:.1}", 100.0 * v))
}

/// Human-readable summary of one evaluation.
pub fn report_markdown(r: &EvalReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# Evaluation (seed {})\n", r.seed);
    let _ = writeln!(
        s,
        "Noise ratios: E-E {:.2}, E-A {:.2}, A-A {:.2}. Ablation: drl={} drf={} only_unc={} only_cons={}.\n",
        r.noise.ee, r.noise.ea, r.noise.aa, r.ablation.drl, r.ablation.drf, r.ablation.only_unc, r.ablation.only_cons
    );
    let _ = writeln!(s, "| metric | value |\n|---|---|");
    let _ = writeln!(s, "| Hits@1 | {} |", pct(Some(r.ranking.hits1)));
    let _ = writeln!(s, "| Hits@5 | {} |", pct(Some(r.ranking.hits5)));
    let _ = writeln!(s, "| Hits@10 | {} |", pct(Some(r.ranking.hits10)));
    let _ = writeln!(s, "| MRR | {:.4} |", r.ranking.mrr);
    let d = &r.noise_detection;
    let _ = writeln!(s, "| reliability AUC | {} |", d.auc.map_or("n/a".into(), |a| format!("{a:.4}")));
    if let Some(t) = &r.ttr {
        let _ = writeln!(s, "| Hits@1 after reasoning | {} |", pct(Some(t.after.hits1)));
    }
    let _ = writeln!(s, "\n## Train anchor subsets\n");
    let _ = writeln!(s, "| subset | clean | corrupted | fraction | precision | recall |\n|---|---|---|---|---|---|");
    for (name, c) in [("S_C", &d.clean), ("S_I", &d.low_consensus), ("S_U", &d.high_uncertainty)] {
        let _ = writeln!(
            s,
            "| {name} | {} | {} | {:.3} | {} | {} |",
            c.clean,
            c.corrupted,
            c.fraction,
            pct(c.precision),
            pct(c.recall)
        );
    }
    s
}
