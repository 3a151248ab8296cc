//! Ranking metrics and noise-detection diagnostics.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::reliability::Subset;
use crate::{Result, RuleError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    #[default]
    LeftToRight,
    Bidirectional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingReport {
    #[serde(rename = "hits@1")]
    pub hits1: f64,
    #[serde(rename = "hits@5")]
    pub hits5: f64,
    #[serde(rename = "hits@10")]
    pub hits10: f64,
    pub mrr: f64,
    pub direction: Direction,
    /// 1-based ranks, one per query (left-to-right queries first when bidirectional).
    #[serde(skip_serializing, default)]
    pub ranks: Vec<usize>,
}

impl RankingReport {
    pub fn from_ranks(ranks: Vec<usize>, direction: Direction) -> Self {
        let n = ranks.len().max(1) as f64;
        let hits = |k: usize| ranks.iter().filter(|&&r| r <= k).count() as f64 / n;
        RankingReport {
            hits1: hits(1),
            hits5: hits(5),
            hits10: hits(10),
            mrr: ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n,
            direction,
            ranks,
        }
    }

    pub fn hits_at(&self, k: usize) -> f64 {
        let n = self.ranks.len().max(1) as f64;
        self.ranks.iter().filter(|&&r| r <= k).count() as f64 / n
    }
}

/// Rank of `target` in `row`: candidates scoring strictly higher, plus
/// equal-scoring candidates with a lower index, come first.
pub fn rank_of(row: &[f64], target: usize) -> usize {
    let t = row[target];
    1 + row.iter().enumerate().filter(|&(j, &v)| v > t || (v == t && j < target)).count()
}

fn ranks(scores: ArrayView2<f64>, pairs: impl Iterator<Item = (usize, usize)>) -> Result<Vec<usize>> {
    let (rows, cols) = scores.dim();
    pairs
        .map(|(q, c)| {
            if q >= rows || c >= cols {
                return Err(RuleError::InvalidArgument(format!("anchor ({q}, {c}) outside {rows}x{cols} score matrix")));
            }
            let row = scores.row(q);
            Ok(match row.as_slice() {
                Some(s) => rank_of(s, c),
                None => rank_of(&row.to_vec(), c),
            })
        })
        .collect()
}

/// Hits@{1,5,10} and MRR of `(left, right)` pairs under a left-by-right
/// score matrix.
pub fn ranking_metrics(scores: ArrayView2<f64>, anchors: &[(usize, usize)], direction: Direction) -> Result<RankingReport> {
    let mut r = ranks(scores, anchors.iter().copied())?;
    if direction == Direction::Bidirectional {
        r.extend(ranks(scores.t(), anchors.iter().map(|&(l, rr)| (rr, l)))?);
    }
    Ok(RankingReport::from_ranks(r, direction))
}

/// Mann-Whitney AUC: probability that a random clean item outscores a
/// random corrupted one, ties counting one half. `None` when either class
/// is empty.
pub fn mann_whitney_auc(scores: &[f64], corrupted: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), corrupted.len());
    let n_pos = corrupted.iter().filter(|&&c| !c).count();
    let n_neg = scores.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // sum of mid-ranks of the clean items
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += order[i..=j].iter().filter(|&&k| !corrupted[k]).count() as f64 * mid;
        i = j + 1;
    }
    let n_pos = n_pos as f64;
    Some((rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SubsetConfusion {
    pub clean: usize,
    pub corrupted: usize,
    /// Share of the subset that is corrupted.
    pub precision: Option<f64>,
    /// Share of all corrupted anchors that landed in the subset.
    pub recall: Option<f64>,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseDiagnostics {
    pub anchors: usize,
    pub corrupted: usize,
    pub auc: Option<f64>,
    #[serde(rename = "S_C")]
    pub clean: SubsetConfusion,
    #[serde(rename = "S_I")]
    pub low_consensus: SubsetConfusion,
    #[serde(rename = "S_U")]
    pub high_uncertainty: SubsetConfusion,
}

/// One train anchor's reliability weight, subset and ground-truth flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredAnchor {
    pub weight: f64,
    pub subset: Subset,
    pub corrupted: bool,
}

pub fn noise_diagnostics(anchors: &[ScoredAnchor]) -> NoiseDiagnostics {
    let weights: Vec<f64> = anchors.iter().map(|a| a.weight).collect();
    let flags: Vec<bool> = anchors.iter().map(|a| a.corrupted).collect();
    let total_corrupted = flags.iter().filter(|&&c| c).count();
    let confusion = |subset: Subset| {
        let members: Vec<&ScoredAnchor> = anchors.iter().filter(|a| a.subset == subset).collect();
        let corrupted = members.iter().filter(|a| a.corrupted).count();
        SubsetConfusion {
            clean: members.len() - corrupted,
            corrupted,
            precision: (!members.is_empty()).then(|| corrupted as f64 / members.len() as f64),
            recall: (total_corrupted > 0).then(|| corrupted as f64 / total_corrupted as f64),
            fraction: if anchors.is_empty() {
                0.0
            } else {
                members.len() as f64 / anchors.len() as f64
            },
        }
    };
    NoiseDiagnostics {
        anchors: anchors.len(),
        corrupted: total_corrupted,
        auc: mann_whitney_auc(&weights, &flags),
        clean: confusion(Subset::Clean),
        low_consensus: confusion(Subset::LowConsensus),
        high_uncertainty: confusion(Subset::HighUncertainty),
    }
}
