//! Correspondence reliability from uncertainty and consensus.
//!
//! A similarity row against every candidate becomes Dirichlet evidence
//! `e_j = exp(tanh(s_j / tau))`, from which subjective-logic belief masses
//! and an uncertainty mass follow. Consensus is the clipped similarity
//! at the (annotated or estimated) counterpart. The two combine into a
//! reliability weight, and train anchors are divided into clean,
//! low-consensus and high-uncertainty subsets with self-adaptive thresholds.

use serde::{Deserialize, Serialize};

use crate::{Result, RuleError};

/// Subjective opinion of one query over `K` candidates.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletOpinion {
    pub evidence: Vec<f64>,
    pub alpha: Vec<f64>,
    pub strength: f64,
    pub uncertainty: f64,
    pub belief: Vec<f64>,
    pub expected_prob: Vec<f64>,
}

impl DirichletOpinion {
    /// Builds the opinion from a non-negative evidence vector.
    pub fn from_evidence(evidence: Vec<f64>) -> Self {
        let k = evidence.len() as f64;
        let alpha: Vec<f64> = evidence.iter().map(|e| e + 1.0).collect();
        let strength: f64 = alpha.iter().sum();
        let belief = evidence.iter().map(|e| e / strength).collect();
        let expected_prob = alpha.iter().map(|a| a / strength).collect();
        DirichletOpinion {
            evidence,
            alpha,
            strength,
            uncertainty: k / strength,
            belief,
            expected_prob,
        }
    }

    pub fn len(&self) -> usize {
        self.evidence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.evidence.is_empty()
    }

    /// Upper bound `(Q - K + 1) / Q` on every expected probability.
    pub fn expected_prob_bound(&self) -> f64 {
        (self.strength - self.len() as f64 + 1.0) / self.strength
    }
}

/// Evidence of a single similarity value.
#[inline]
pub fn evidence_value(s: f64, tau: f64) -> f64 {
    (s / tau).tanh().exp()
}

/// `d e / d s` for [`evidence_value`].
#[inline]
pub fn evidence_slope(s: f64, tau: f64) -> f64 {
    let t = (s / tau).tanh();
    t.exp() * (1.0 - t * t) / tau
}

pub fn evidence(row: &[f64], tau: f64) -> Result<DirichletOpinion> {
    if !(tau > 0.0) {
        return Err(RuleError::InvalidArgument(format!("temperature {tau} must be positive")));
    }
    Ok(DirichletOpinion::from_evidence(row.iter().map(|&s| evidence_value(s, tau)).collect()))
}

/// `max(0, s . y)` for a one-hot `y` at `target`; `None` means no
/// correspondence and yields zero.
pub fn consensus(row: &[f64], target: Option<usize>) -> f64 {
    target.map_or(0.0, |j| row[j].max(0.0))
}

/// Consensus against an explicit correspondence vector.
pub fn consensus_dense(row: &[f64], y: &[f64]) -> f64 {
    row.iter().zip(y).map(|(s, y)| s * y).sum::<f64>().max(0.0)
}

/// First index of the maximum; `None` for an empty row.
pub fn argmax(row: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, &v) in row.iter().enumerate() {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((j, v)),
        }
    }
    best.map(|(j, _)| j)
}

fn mean_row(rows: &[&[f64]], subset: &[usize]) -> Vec<f64> {
    let k = rows[subset[0]].len();
    let mut acc = vec![0.0; k];
    for &m in subset {
        for (a, s) in acc.iter_mut().zip(rows[m]) {
            *a += s;
        }
    }
    let n = subset.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

/// Value of a modality subset: the peak of the averaged similarity row.
pub fn subset_value(rows: &[&[f64]], subset: &[usize]) -> Result<f64> {
    if subset.is_empty() {
        return Err(RuleError::InvalidArgument("value of an empty modality subset".into()));
    }
    Ok(mean_row(rows, subset).into_iter().fold(f64::NEG_INFINITY, f64::max))
}

/// Change in [`subset_value`] when modality `m` joins `subset`.
pub fn marginal_contribution(rows: &[&[f64]], subset: &[usize], m: usize) -> Result<f64> {
    if subset.contains(&m) {
        return Err(RuleError::InvalidArgument(format!("modality {m} already in the subset")));
    }
    let base = subset_value(rows, subset)?;
    let mut grown = subset.to_vec();
    grown.push(m);
    Ok(subset_value(rows, &grown)? - base)
}

/// `floor(M/2) + 1` for three or more modalities, otherwise one.
pub fn initial_subset_size(m: usize) -> usize {
    if m >= 3 {
        m / 2 + 1
    } else {
        m.min(1)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GreedySelection {
    /// Modalities with informative (non-zero) rows.
    pub available: Vec<usize>,
    pub initial: Vec<usize>,
    pub selected: Vec<usize>,
    /// `(modality, marginal contribution against the initial subset)`.
    pub contributions: Vec<(usize, f64)>,
}

/// Greedy correspondence estimate from per-modality similarity rows.
///
/// All-zero rows (absent attributes) are left out of the candidate pool.
/// The initial subset holds the modalities with the highest peak
/// similarity, lower modality index first on ties; every other modality
/// with a strictly positive contribution against it is added in one sweep.
pub fn greedy_estimate(rows: &[&[f64]]) -> (GreedySelection, Option<usize>) {
    let available: Vec<usize> = (0..rows.len()).filter(|&m| rows[m].iter().any(|&s| s != 0.0)).collect();
    if available.is_empty() {
        return (GreedySelection::default(), None);
    }
    let peak = |m: usize| rows[m].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut ranked = available.clone();
    ranked.sort_by(|&a, &b| peak(b).total_cmp(&peak(a)).then(a.cmp(&b)));
    let initial: Vec<usize> = ranked[..initial_subset_size(available.len())].to_vec();

    let base = subset_value(rows, &initial).expect("initial subset is non-empty");
    let mut selected = initial.clone();
    let mut contributions = Vec::new();
    for &m in &available {
        if initial.contains(&m) {
            continue;
        }
        let mut grown = initial.clone();
        grown.push(m);
        let delta = subset_value(rows, &grown).expect("non-empty") - base;
        contributions.push((m, delta));
        if delta > 0.0 {
            selected.push(m);
        }
    }
    let estimate = argmax(&mean_row(rows, &selected));
    (
        GreedySelection {
            available,
            initial,
            selected,
            contributions,
        },
        estimate,
    )
}

/// `w = (1 - u) * balance + c * (1 - balance)`.
pub fn reliability_weight(uncertainty: f64, consensus: f64, balance: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&balance) {
        return Err(RuleError::InvalidArgument(format!("balance {balance} outside [0,1]")));
    }
    Ok((1.0 - uncertainty) * balance + consensus * (1.0 - balance))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Subset {
    /// Clean: low uncertainty and high consensus.
    #[serde(rename = "S_C")]
    Clean,
    /// Low consensus: label gets refined.
    #[serde(rename = "S_I")]
    LowConsensus,
    /// High uncertainty: excluded from the robust loss.
    #[serde(rename = "S_U")]
    HighUncertainty,
}

impl Subset {
    pub fn as_str(self) -> &'static str {
        match self {
            Subset::Clean => "S_C",
            Subset::LowConsensus => "S_I",
            Subset::HighUncertainty => "S_U",
        }
    }
}

/// Uncertainty, consensus and true-positive flag for one annotated pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairStats {
    pub uncertainty: f64,
    pub consensus: f64,
    /// `argmax s == argmax y`.
    pub true_positive: bool,
}

impl PairStats {
    pub fn from_row(row: &[f64], annotated: usize, tau: f64) -> Result<Self> {
        Ok(PairStats {
            uncertainty: evidence(row, tau)?.uncertainty,
            consensus: consensus(row, Some(annotated)),
            true_positive: argmax(row) == Some(annotated),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DivisionState {
    pub true_positives: Vec<usize>,
    pub beta_u: f64,
    pub beta_c: f64,
    pub assignments: Vec<Subset>,
}

impl DivisionState {
    pub fn members(&self, subset: Subset) -> Vec<usize> {
        (0..self.assignments.len()).filter(|&i| self.assignments[i] == subset).collect()
    }

    pub fn counts(&self) -> [usize; 3] {
        let mut c = [0; 3];
        for s in &self.assignments {
            c[match s {
                Subset::Clean => 0,
                Subset::LowConsensus => 1,
                Subset::HighUncertainty => 2,
            }] += 1;
        }
        c
    }
}

/// Subset membership for given thresholds.
pub fn classify(stats: &PairStats, beta_u: f64, beta_c: f64) -> Subset {
    if stats.uncertainty > beta_u {
        Subset::HighUncertainty
    } else if stats.consensus < beta_c {
        Subset::LowConsensus
    } else {
        Subset::Clean
    }
}

/// Divides annotated pairs with thresholds adapted to the true positives:
/// `beta_u = min(max u over TP, 1 - beta)`, `beta_c = max(beta, min c over TP)`.
/// Without true positives the thresholds fall back to `1 - beta` and `beta`.
pub fn divide_pairs(stats: &[PairStats], beta: f64) -> DivisionState {
    let true_positives: Vec<usize> = (0..stats.len()).filter(|&i| stats[i].true_positive).collect();
    let (beta_u, beta_c) = if true_positives.is_empty() {
        (1.0 - beta, beta)
    } else {
        let u_tp = true_positives.iter().map(|&i| stats[i].uncertainty).fold(f64::NEG_INFINITY, f64::max);
        let c_tp = true_positives.iter().map(|&i| stats[i].consensus).fold(f64::INFINITY, f64::min);
        (u_tp.min(1.0 - beta), beta.max(c_tp))
    };
    DivisionState {
        assignments: stats.iter().map(|s| classify(s, beta_u, beta_c)).collect(),
        true_positives,
        beta_u,
        beta_c,
    }
}

/// Per-level reliability of one entity's correspondence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelReliability {
    pub uncertainty: f64,
    pub consensus: f64,
    pub weight: f64,
}

impl LevelReliability {
    pub fn from_row(row: &[f64], target: Option<usize>, tau: f64, balance: f64) -> Result<Self> {
        let uncertainty = evidence(row, tau)?.uncertainty;
        let consensus = consensus(row, target);
        Ok(LevelReliability {
            uncertainty,
            consensus,
            weight: reliability_weight(uncertainty, consensus, balance)?,
        })
    }
}

/// Reliability of one entity at the entity level and per modality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityRecord {
    pub entity: usize,
    pub entity_level: LevelReliability,
    /// `None` for absent attributes.
    pub modality_level: Vec<Option<LevelReliability>>,
    pub subset: Option<Subset>,
    pub estimated_index: Option<usize>,
}
