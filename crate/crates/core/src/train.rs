//! Training loop: per-epoch reliability refresh, pair division, and Adam
//! steps on the combined objective.

use log::debug;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{AblationConfig, ExperimentConfig};
use crate::dataset::MMKGPair;
use crate::encoders::{encode_inputs, prepare_inputs, EmbeddingTable, EncoderBank, EncoderInputs};
use crate::eval::{ranking_metrics, Direction};
use crate::fusion::{estimate_reliability, fuse, FusedTable, FusionWeights, TableReliability};
use crate::objective::{refine_targets, total_loss, TrainItem};
use crate::reliability::{divide_pairs, reliability_weight, DivisionState, PairStats, Subset};
use crate::Result;

/// Adam with the usual moment decay rates.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub warmup: bool,
    pub l_dr: f64,
    pub l_reg: f64,
    pub total: f64,
    #[serde(rename = "|S_C|")]
    pub clean: usize,
    #[serde(rename = "|S_I|")]
    pub low_consensus: usize,
    #[serde(rename = "|S_U|")]
    pub high_uncertainty: usize,
    #[serde(rename = "hits@1(dev)")]
    pub dev_hits1: f64,
}

/// Diagnostic record of one train anchor after training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorReliability {
    pub anchor: usize,
    pub left: usize,
    pub right: usize,
    pub u: f64,
    /// Consensus with the annotated counterpart.
    pub c: f64,
    pub w: f64,
    pub subset: Subset,
    pub estimated_index: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub bank: EncoderBank,
    pub epochs: Vec<EpochLog>,
    pub reliability: Vec<AnchorReliability>,
}

/// Applies the ablation to a division: without consensus refinement the
/// low-consensus subset counts as clean; without uncertainty exclusion the
/// high-uncertainty subset is re-split on consensus alone.
fn ablate(mut state: DivisionState, stats: &[PairStats], flags: &AblationConfig) -> DivisionState {
    for (a, s) in state.assignments.iter_mut().zip(stats) {
        if flags.only_unc && *a == Subset::LowConsensus {
            *a = Subset::Clean;
        }
        if flags.only_cons && *a == Subset::HighUncertainty {
            *a = if s.consensus < state.beta_c {
                Subset::LowConsensus
            } else {
                Subset::Clean
            };
        }
    }
    state
}

fn row(query: ndarray::ArrayView1<f64>, candidates: &Array2<f64>) -> Vec<f64> {
    candidates.dot(&query).to_vec()
}

/// Train pairs `(anchor index, left, right)`.
fn train_pairs(pair: &MMKGPair) -> Vec<(usize, usize, usize)> {
    pair.train_anchors().map(|(k, a)| (k, a.left, a.right)).collect()
}

/// Divides the train pairs at the entity level and per modality.
fn divide(
    pairs: &[(usize, usize, usize)],
    inputs: &EncoderInputs,
    table: &EmbeddingTable,
    fused: &FusedTable,
    cfg: &ExperimentConfig,
    all_clean: bool,
) -> Result<(Vec<TrainItem>, DivisionState)> {
    let tau = cfg.model.tau;
    let beta = cfg.objective.beta;
    let flags = &cfg.ablation;
    let m_count = table.left.len();
    let entity_stats = pairs
        .iter()
        .map(|&(_, l, r)| PairStats::from_row(&row(fused.left.row(l), &fused.right), r, tau))
        .collect::<Result<Vec<_>>>()?;
    let entity_state = if all_clean {
        DivisionState {
            true_positives: Vec::new(),
            beta_u: 1.0 - beta,
            beta_c: beta,
            assignments: vec![Subset::Clean; pairs.len()],
        }
    } else {
        ablate(divide_pairs(&entity_stats, beta), &entity_stats, flags)
    };
    let mut modality: Vec<Vec<Option<Subset>>> = vec![vec![None; m_count]; pairs.len()];
    for m in 0..m_count {
        let members: Vec<usize> = (0..pairs.len()).filter(|&k| inputs.left[m].present[pairs[k].1]).collect();
        let stats = members
            .iter()
            .map(|&k| PairStats::from_row(&row(table.left[m].row(pairs[k].1), &table.right[m]), pairs[k].2, tau))
            .collect::<Result<Vec<_>>>()?;
        let assignments = if all_clean {
            vec![Subset::Clean; members.len()]
        } else {
            ablate(divide_pairs(&stats, beta), &stats, flags).assignments
        };
        for (&k, a) in members.iter().zip(assignments) {
            modality[k][m] = Some(a);
        }
    }
    let items = pairs
        .iter()
        .zip(&entity_state.assignments)
        .zip(modality)
        .map(|((&(_, left, right), &entity), modality)| TrainItem {
            left,
            right,
            entity,
            modality,
        })
        .collect();
    Ok((items, entity_state))
}

fn fusion_weights(table: &EmbeddingTable, cfg: &ExperimentConfig, weighted: bool) -> Result<(FusionWeights, Option<TableReliability>)> {
    if weighted {
        let rel = estimate_reliability(table, cfg.model.tau, cfg.model.balance)?;
        Ok((rel.weights(), Some(rel)))
    } else {
        let m = table.left.len();
        Ok((FusionWeights::plain(table.left[0].nrows(), table.right[0].nrows(), m), None))
    }
}

fn dev_hits1(fused: &FusedTable, test: &[(usize, usize)]) -> Result<f64> {
    if test.is_empty() {
        return Ok(0.0);
    }
    let scores = fused.left.dot(&fused.right.t());
    Ok(ranking_metrics(scores.view(), test, Direction::LeftToRight)?.hits1)
}

/// Trains encoders on the pair's train anchors. Test anchors only feed the
/// logged dev metric.
pub fn train(pair: &MMKGPair, cfg: &ExperimentConfig, seed: u64) -> Result<TrainOutcome> {
    cfg.validate()?;
    let inputs = prepare_inputs(pair);
    let mut bank = EncoderBank::new(pair.modalities(), cfg.model.d_embed, seed);
    let settings = cfg.loss_settings();
    let pairs = train_pairs(pair);
    let test: Vec<(usize, usize)> = pair.eval_view().test_anchors().map(|(_, a)| (a.left, a.right)).collect();
    let mut adam = Adam::new(bank.num_params(), cfg.objective.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x05ee_d0fb_a7c4);
    let mut epochs = Vec::with_capacity(cfg.objective.epochs);

    for epoch in 0..cfg.objective.epochs {
        let warmup = epoch < cfg.objective.warmup_epochs;
        let (table, _) = encode_inputs(&bank, &inputs)?;
        let (weights, _) = fusion_weights(&table, cfg, cfg.ablation.drf && !warmup)?;
        let fused = fuse(&table, &weights)?;
        let (items, state) = divide(&pairs, &inputs, &table, &fused, cfg, warmup || !cfg.ablation.drl)?;

        let mut order: Vec<usize> = (0..items.len()).collect();
        order.shuffle(&mut rng);
        let (mut l_dr, mut l_reg, mut total) = (0.0, 0.0, 0.0);
        for chunk in order.chunks(cfg.objective.batch_size) {
            let batch: Vec<TrainItem> = chunk.iter().map(|&k| items[k].clone()).collect();
            let (table, _) = encode_inputs(&bank, &inputs)?;
            let fused = fuse(&table, &weights)?;
            let targets = refine_targets(&table, &fused, &batch)?;
            let (loss, grad) = total_loss(&bank, &inputs, &weights, &targets, &settings)?;
            let share = batch.len() as f64 / items.len() as f64;
            l_dr += share * loss.l_dr();
            l_reg += share * loss.l_reg();
            total += share * loss.total;
            let mut params = bank.flatten();
            adam.step(&mut params, &grad);
            bank.assign(&params);
        }

        let (table, _) = encode_inputs(&bank, &inputs)?;
        let [clean, low_consensus, high_uncertainty] = state.counts();
        let log = EpochLog {
            epoch,
            warmup,
            l_dr,
            l_reg,
            total,
            clean,
            low_consensus,
            high_uncertainty,
            dev_hits1: dev_hits1(&fuse(&table, &weights)?, &test)?,
        };
        debug!("epoch {epoch}: total {total:.5} division {:?} dev hits@1 {:.3}", state.counts(), log.dev_hits1);
        epochs.push(log);
    }

    // checkpoints hold f32, so train results are reported at that precision
    let rounded: Vec<f64> = bank.flatten().into_iter().map(|v| v as f32 as f64).collect();
    bank.assign(&rounded);
    let reliability = anchor_reliability(pair, &bank, cfg)?;
    Ok(TrainOutcome {
        bank,
        epochs,
        reliability,
    })
}

/// Reliability of every train anchor under the given encoders, with
/// consensus taken against the annotated counterpart.
pub fn anchor_reliability(pair: &MMKGPair, bank: &EncoderBank, cfg: &ExperimentConfig) -> Result<Vec<AnchorReliability>> {
    let inputs = prepare_inputs(pair);
    let pairs = train_pairs(pair);
    let (table, _) = encode_inputs(bank, &inputs)?;
    let weighted = cfg.ablation.drf && cfg.objective.epochs > cfg.objective.warmup_epochs;
    let (weights, rel) = fusion_weights(&table, cfg, weighted)?;
    let rel = match rel {
        Some(r) => r,
        None => estimate_reliability(&table, cfg.model.tau, cfg.model.balance)?,
    };
    let fused = fuse(&table, &weights)?;
    let (_, state) = divide(&pairs, &inputs, &table, &fused, cfg, !cfg.ablation.drl)?;
    pairs
        .iter()
        .zip(&state.assignments)
        .map(|(&(anchor, left, right), &subset)| {
            let stats = PairStats::from_row(&row(fused.left.row(left), &fused.right), right, cfg.model.tau)?;
            Ok(AnchorReliability {
                anchor,
                left,
                right,
                u: stats.uncertainty,
                c: stats.consensus,
                w: reliability_weight(stats.uncertainty, stats.consensus, cfg.model.balance)?,
                subset,
                estimated_index: rel.left[left].estimated_index,
            })
        })
        .collect()
}
