//! Reliability-weighted concatenation of per-modality embeddings.
//!
//! Each entity's fused vector is `concat_m(w^m * z^m)`, re-normalised to
//! unit length. Weights only apply to entities whose reliability passes
//! the gate `(1 - u) + c >= 1`; every other entity uses unit weights.

use ndarray::{s, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::encoders::{similarity, EmbeddingTable};
use crate::reliability::{greedy_estimate, LevelReliability};
use crate::{Result, RuleError};

const NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityWeights {
    pub weights: Vec<f64>,
    /// Whether the weights are applied; otherwise the entity is fused with unit weights.
    pub gated: bool,
}

impl EntityWeights {
    pub fn plain(modalities: usize) -> Self {
        EntityWeights {
            weights: vec![1.0; modalities],
            gated: false,
        }
    }

    pub fn effective(&self, m: usize) -> f64 {
        if self.gated {
            self.weights[m]
        } else {
            1.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionWeights {
    pub left: Vec<EntityWeights>,
    pub right: Vec<EntityWeights>,
}

impl FusionWeights {
    pub fn plain(n_left: usize, n_right: usize, modalities: usize) -> Self {
        FusionWeights {
            left: vec![EntityWeights::plain(modalities); n_left],
            right: vec![EntityWeights::plain(modalities); n_right],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedTable {
    pub left: Array2<f64>,
    pub right: Array2<f64>,
    pub gated_left: Vec<bool>,
    pub gated_right: Vec<bool>,
    /// Norms of the weighted concatenation before re-normalisation.
    norms_left: Vec<f64>,
    norms_right: Vec<f64>,
}

/// Weighted concatenation without re-normalisation.
pub fn weighted_concat(blocks: &[Array2<f64>], weights: &[EntityWeights]) -> Result<Array2<f64>> {
    let first = blocks.first().ok_or_else(|| RuleError::InvalidArgument("no modality tables to fuse".into()))?;
    let (n, d) = first.dim();
    if blocks.iter().any(|b| b.dim() != (n, d)) {
        return Err(RuleError::DimMismatch("modality tables differ in shape".into()));
    }
    if weights.len() != n || weights.iter().any(|w| w.weights.len() != blocks.len()) {
        return Err(RuleError::DimMismatch(format!(
            "weights cover {} entities, tables have {n} rows over {} modalities",
            weights.len(),
            blocks.len()
        )));
    }
    let mut out = Array2::zeros((n, d * blocks.len()));
    for (m, block) in blocks.iter().enumerate() {
        let mut dst = out.slice_mut(s![.., m * d..(m + 1) * d]);
        for i in 0..n {
            let w = weights[i].effective(m);
            dst.row_mut(i).zip_mut_with(&block.row(i), |o, z| *o = w * z);
        }
    }
    Ok(out)
}

fn normalise_rows(mut x: Array2<f64>) -> (Array2<f64>, Vec<f64>) {
    let mut norms = Vec::with_capacity(x.nrows());
    for mut row in x.axis_iter_mut(Axis(0)) {
        let n = row.dot(&row).sqrt();
        norms.push(n);
        if n > NORM_EPS {
            row.mapv_inplace(|v| v / n);
        }
    }
    (x, norms)
}

pub fn fuse(table: &EmbeddingTable, weights: &FusionWeights) -> Result<FusedTable> {
    let (left, norms_left) = normalise_rows(weighted_concat(&table.left, &weights.left)?);
    let (right, norms_right) = normalise_rows(weighted_concat(&table.right, &weights.right)?);
    Ok(FusedTable {
        left,
        right,
        gated_left: weights.left.iter().map(|w| w.gated).collect(),
        gated_right: weights.right.iter().map(|w| w.gated).collect(),
        norms_left,
        norms_right,
    })
}

fn backward_side(
    blocks: &[Array2<f64>],
    weights: &[EntityWeights],
    fused: &Array2<f64>,
    norms: &[f64],
    grad: &Array2<f64>,
) -> Vec<Array2<f64>> {
    let d = blocks[0].ncols();
    let mut out: Vec<Array2<f64>> = blocks.iter().map(|b| Array2::zeros(b.raw_dim())).collect();
    for i in 0..fused.nrows() {
        if norms[i] <= NORM_EPS {
            continue;
        }
        let f = fused.row(i);
        let g = grad.row(i);
        let proj = f.dot(&g);
        for (m, o) in out.iter_mut().enumerate() {
            let w = weights[i].effective(m);
            for k in 0..d {
                let idx = m * d + k;
                o[[i, k]] = w * (g[idx] - f[idx] * proj) / norms[i];
            }
        }
    }
    out
}

/// Pulls gradients on the fused rows back onto the per-modality embeddings.
/// Weights and gates are constants.
pub fn fuse_backward(
    table: &EmbeddingTable,
    weights: &FusionWeights,
    fused: &FusedTable,
    grad_left: &Array2<f64>,
    grad_right: &Array2<f64>,
) -> EmbeddingTable {
    EmbeddingTable {
        left: backward_side(&table.left, &weights.left, &fused.left, &fused.norms_left, grad_left),
        right: backward_side(&table.right, &weights.right, &fused.right, &fused.norms_right, grad_right),
    }
}

/// Unit-weight fusion.
pub fn plain_fuse(table: &EmbeddingTable) -> Result<FusedTable> {
    let m = table.left.len();
    let weights = FusionWeights::plain(
        table.left.first().map_or(0, |z| z.nrows()),
        table.right.first().map_or(0, |z| z.nrows()),
        m,
    );
    fuse(table, &weights)
}

/// Reliability of one query against all candidates, at the greedy
/// correspondence estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryReliability {
    pub estimated_index: Option<usize>,
    pub entity_level: LevelReliability,
    pub modality_level: Vec<Option<LevelReliability>>,
}

impl QueryReliability {
    /// The gate `(1 - u) + c >= 1` on the entity level.
    pub fn passes_gate(&self) -> bool {
        (1.0 - self.entity_level.uncertainty) + self.entity_level.consensus >= 1.0
    }

    pub fn weights(&self) -> EntityWeights {
        EntityWeights {
            weights: self.modality_level.iter().map(|l| l.map_or(0.0, |l| l.weight)).collect(),
            gated: self.passes_gate(),
        }
    }
}

fn query_reliability(
    modality_rows: &[ArrayView1<f64>],
    fused_row: ArrayView1<f64>,
    tau: f64,
    balance: f64,
) -> Result<QueryReliability> {
    let owned: Vec<Vec<f64>> = modality_rows.iter().map(|r| r.to_vec()).collect();
    let rows: Vec<&[f64]> = owned.iter().map(|r| r.as_slice()).collect();
    let (_, estimate) = greedy_estimate(&rows);
    let modality_level = rows
        .iter()
        .map(|row| {
            if row.iter().all(|&s| s == 0.0) {
                Ok(None)
            } else {
                LevelReliability::from_row(row, estimate, tau, balance).map(Some)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let fused: Vec<f64> = fused_row.to_vec();
    Ok(QueryReliability {
        estimated_index: estimate,
        entity_level: LevelReliability::from_row(&fused, estimate, tau, balance)?,
        modality_level,
    })
}

fn side_reliability(
    modality_sims: &[Array2<f64>],
    fused_sim: ArrayView2<f64>,
    tau: f64,
    balance: f64,
) -> Result<Vec<QueryReliability>> {
    (0..fused_sim.nrows())
        .map(|i| {
            let rows: Vec<ArrayView1<f64>> = modality_sims.iter().map(|s| s.row(i)).collect();
            query_reliability(&rows, fused_sim.row(i), tau, balance)
        })
        .collect()
}

/// Reliability of every entity on both sides, each side querying the other,
/// with correspondences estimated greedily (no annotations).
#[derive(Debug, Clone, PartialEq)]
pub struct TableReliability {
    pub left: Vec<QueryReliability>,
    pub right: Vec<QueryReliability>,
}

impl TableReliability {
    pub fn weights(&self) -> FusionWeights {
        FusionWeights {
            left: self.left.iter().map(|q| q.weights()).collect(),
            right: self.right.iter().map(|q| q.weights()).collect(),
        }
    }
}

pub fn estimate_reliability(table: &EmbeddingTable, tau: f64, balance: f64) -> Result<TableReliability> {
    let sims = (0..table.left.len())
        .map(|m| similarity(table.left[m].view(), table.right[m].view()))
        .collect::<Result<Vec<_>>>()?;
    let plain = plain_fuse(table)?;
    let fused_sim = similarity(plain.left.view(), plain.right.view())?;
    let left = side_reliability(&sims, fused_sim.view(), tau, balance)?;
    let sims_t: Vec<Array2<f64>> = sims.iter().map(|s| s.t().to_owned()).collect();
    let right = side_reliability(&sims_t, fused_sim.t(), tau, balance)?;
    Ok(TableReliability { left, right })
}
