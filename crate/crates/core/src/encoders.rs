//! Per-modality encoders mapping raw attribute features to unit-norm
//! embeddings of a shared dimension.
//!
//! Plain modalities go through one affine map. The structural modality
//! first averages its features over each entity's closed neighbourhood in
//! the triple graph. Absent attributes produce zero rows.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Graph, MMKGPair, ModalitySpec, Side};
use crate::{Result, RuleError};

const NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    Plain,
    Neighbourhood,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    /// `dim_in x dim_out`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Affine {
    pub fn dim_in(&self) -> usize {
        self.weight.nrows()
    }

    pub fn dim_out(&self) -> usize {
        self.weight.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModalityEncoder {
    pub name: String,
    pub kind: EncoderKind,
    pub affine: Affine,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderBank {
    pub d: usize,
    pub encoders: Vec<ModalityEncoder>,
}

impl EncoderBank {
    /// Unit Gaussian weights, zero bias.
    pub fn new(modalities: &[ModalitySpec], d: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoders = modalities
            .iter()
            .map(|spec| {
                // unit scale: cosine outputs ignore weight scale, so this only sets
                // how far one fixed-size optimizer step moves the embedding
                let normal = Normal::new(0.0, 1.0).expect("valid std");
                ModalityEncoder {
                    name: spec.name.clone(),
                    kind: if spec.is_structural() {
                        EncoderKind::Neighbourhood
                    } else {
                        EncoderKind::Plain
                    },
                    affine: Affine {
                        weight: Array2::from_shape_simple_fn((spec.dim, d), || normal.sample(&mut rng)),
                        bias: Array1::zeros(d),
                    },
                }
            })
            .collect();
        EncoderBank { d, encoders }
    }

    pub fn from_encoders(encoders: Vec<ModalityEncoder>) -> Result<Self> {
        let d = encoders.first().map(|e| e.affine.dim_out()).unwrap_or(0);
        for e in &encoders {
            if e.affine.dim_out() != d || e.affine.bias.len() != d {
                return Err(RuleError::DimMismatch(format!(
                    "encoder {} emits {} dims, expected {d}",
                    e.name,
                    e.affine.dim_out()
                )));
            }
        }
        Ok(EncoderBank { d, encoders })
    }

    pub fn num_modalities(&self) -> usize {
        self.encoders.len()
    }

    pub fn num_params(&self) -> usize {
        self.encoders.iter().map(|e| e.affine.weight.len() + e.affine.bias.len()).sum()
    }

    /// Parameters in a fixed order: per encoder, weight (row-major) then bias.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for e in &self.encoders {
            out.extend(e.affine.weight.iter());
            out.extend(e.affine.bias.iter());
        }
        out
    }

    pub fn assign(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_params());
        let mut it = flat.iter();
        for e in &mut self.encoders {
            for w in e.affine.weight.iter_mut() {
                *w = *it.next().unwrap();
            }
            for b in e.affine.bias.iter_mut() {
                *b = *it.next().unwrap();
            }
        }
    }

    /// Writes a single blob: `u64` little-endian header length, a JSON
    /// header naming every tensor with its shape, then the f32le payloads
    /// in header order.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut tensors = Vec::new();
        let mut payload = Vec::new();
        for e in &self.encoders {
            for (suffix, shape, values) in [
                ("weight", vec![e.affine.dim_in(), e.affine.dim_out()], e.affine.weight.iter().copied().collect::<Vec<_>>()),
                ("bias", vec![e.affine.dim_out()], e.affine.bias.to_vec()),
            ] {
                tensors.push(TensorEntry {
                    name: format!("{}.{suffix}", e.name),
                    shape,
                });
                payload.extend(values.iter().flat_map(|v| (*v as f32).to_le_bytes()));
            }
        }
        let header = CheckpointHeader {
            format: CHECKPOINT_FORMAT.into(),
            d: self.d,
            modalities: self
                .encoders
                .iter()
                .map(|e| CheckpointModality {
                    name: e.name.clone(),
                    kind: e.kind,
                })
                .collect(),
            tensors,
        };
        let header = serde_json::to_vec(&header).expect("header serializes");
        let mut bytes = Vec::with_capacity(8 + header.len() + payload.len());
        bytes.extend((header.len() as u64).to_le_bytes());
        bytes.extend(header);
        bytes.extend(payload);
        fs::write(path, bytes).map_err(|e| RuleError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = path.display().to_string();
        let bytes = fs::read(path).map_err(|e| RuleError::io(path, e))?;
        let bad = |msg: &str| RuleError::data(file.clone(), None, msg.to_string());
        if bytes.len() < 8 {
            return Err(bad("truncated checkpoint"));
        }
        let header_len = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
        let header_end = 8usize.checked_add(header_len).filter(|&e| e <= bytes.len()).ok_or_else(|| bad("header overruns file"))?;
        let header: CheckpointHeader =
            serde_json::from_slice(&bytes[8..header_end]).map_err(|e| bad(&format!("bad header: {e}")))?;
        if header.format != CHECKPOINT_FORMAT {
            return Err(bad(&format!("unknown checkpoint format {:?}", header.format)));
        }
        let mut floats = bytes[header_end..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64);
        let mut take = |n: usize| -> Result<Vec<f64>> {
            let v: Vec<f64> = floats.by_ref().take(n).collect();
            if v.len() != n {
                return Err(bad("payload shorter than header declares"));
            }
            Ok(v)
        };
        let mut encoders = Vec::new();
        let mut tensors = header.tensors.iter();
        for m in &header.modalities {
            let (w, b) = match (tensors.next(), tensors.next()) {
                (Some(w), Some(b)) if w.name == format!("{}.weight", m.name) && b.name == format!("{}.bias", m.name) => (w, b),
                _ => return Err(bad(&format!("tensors for modality {} missing or out of order", m.name))),
            };
            if w.shape.len() != 2 || b.shape.len() != 1 || w.shape[1] != header.d || b.shape[0] != header.d {
                return Err(RuleError::DimMismatch(format!("{file}: bad shapes for {}", m.name)));
            }
            let weight = Array2::from_shape_vec((w.shape[0], w.shape[1]), take(w.shape[0] * w.shape[1])?)
                .map_err(|e| bad(&e.to_string()))?;
            let bias = Array1::from(take(header.d)?);
            encoders.push(ModalityEncoder {
                name: m.name.clone(),
                kind: m.kind,
                affine: Affine { weight, bias },
            });
        }
        EncoderBank::from_encoders(encoders)
    }
}

const CHECKPOINT_FORMAT: &str = "rule-encoders-v1";

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointModality {
    name: String,
    kind: EncoderKind,
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    format: String,
    d: usize,
    modalities: Vec<CheckpointModality>,
    tensors: Vec<TensorEntry>,
}

/// Encoder input rows for one modality on one side.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalityInputs {
    pub x: Array2<f64>,
    pub present: Vec<bool>,
}

/// Encoder inputs for both sides, indexed `[side][modality]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderInputs {
    pub left: Vec<ModalityInputs>,
    pub right: Vec<ModalityInputs>,
}

impl EncoderInputs {
    pub fn side(&self, side: Side) -> &[ModalityInputs] {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }
}

fn side_inputs(graph: &Graph, modalities: &[ModalitySpec]) -> Vec<ModalityInputs> {
    let n = graph.len();
    let neighbours = graph.neighbours();
    modalities
        .iter()
        .enumerate()
        .map(|(m, spec)| {
            let mut x = Array2::zeros((n, spec.dim));
            let mut present = vec![false; n];
            for i in 0..n {
                let members: Vec<usize> = if spec.is_structural() {
                    std::iter::once(i).chain(neighbours[i].iter().copied()).collect()
                } else {
                    vec![i]
                };
                let rows: Vec<&[f32]> = members.iter().filter_map(|&j| graph.attribute(j, m)).collect();
                if rows.is_empty() {
                    continue;
                }
                present[i] = true;
                let scale = 1.0 / rows.len() as f64;
                let mut dst = x.row_mut(i);
                for row in rows {
                    for (d, &v) in dst.iter_mut().zip(row) {
                        *d += v as f64 * scale;
                    }
                }
            }
            ModalityInputs { x, present }
        })
        .collect()
}

pub fn prepare_inputs(pair: &MMKGPair) -> EncoderInputs {
    EncoderInputs {
        left: side_inputs(pair.left(), pair.modalities()),
        right: side_inputs(pair.right(), pair.modalities()),
    }
}

/// Per-modality embedding matrices (`n x d`) for both sides.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub left: Vec<Array2<f64>>,
    pub right: Vec<Array2<f64>>,
}

impl EmbeddingTable {
    pub fn side(&self, side: Side) -> &[Array2<f64>] {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }
}

/// Pre-normalisation activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `[side][modality]` row norms of the affine output (0 when absent).
    norms: [Vec<Array1<f64>>; 2],
}

fn check_dims(bank: &EncoderBank, inputs: &EncoderInputs) -> Result<()> {
    for side in [&inputs.left, &inputs.right] {
        if side.len() != bank.encoders.len() {
            return Err(RuleError::DimMismatch(format!(
                "{} modality inputs for {} encoders",
                side.len(),
                bank.encoders.len()
            )));
        }
        for (mi, enc) in side.iter().zip(&bank.encoders) {
            if mi.x.ncols() != enc.affine.dim_in() {
                return Err(RuleError::DimMismatch(format!(
                    "modality {} has {} features, encoder expects {}",
                    enc.name,
                    mi.x.ncols(),
                    enc.affine.dim_in()
                )));
            }
        }
    }
    Ok(())
}

fn encode_side(bank: &EncoderBank, side: &[ModalityInputs]) -> (Vec<Array2<f64>>, Vec<Array1<f64>>) {
    side.iter()
        .zip(&bank.encoders)
        .map(|(mi, enc)| {
            let mut z = mi.x.dot(&enc.affine.weight) + &enc.affine.bias;
            let mut norms = Array1::zeros(z.nrows());
            for (i, mut row) in z.axis_iter_mut(Axis(0)).enumerate() {
                if !mi.present[i] {
                    row.fill(0.0);
                    continue;
                }
                let n = row.dot(&row).sqrt().max(NORM_EPS);
                norms[i] = n;
                row.mapv_inplace(|v| v / n);
            }
            (z, norms)
        })
        .unzip()
}

pub fn encode_inputs(bank: &EncoderBank, inputs: &EncoderInputs) -> Result<(EmbeddingTable, ForwardCache)> {
    check_dims(bank, inputs)?;
    let (left, ln) = encode_side(bank, &inputs.left);
    let (right, rn) = encode_side(bank, &inputs.right);
    Ok((EmbeddingTable { left, right }, ForwardCache { norms: [ln, rn] }))
}

/// Encodes both graphs; absent attributes yield zero rows.
pub fn encode(bank: &EncoderBank, pair: &MMKGPair) -> Result<EmbeddingTable> {
    Ok(encode_inputs(bank, &prepare_inputs(pair))?.0)
}

/// Back-propagates gradients w.r.t. the unit-norm embeddings into a flat
/// parameter gradient laid out like [`EncoderBank::flatten`].
pub fn backward(
    bank: &EncoderBank,
    inputs: &EncoderInputs,
    table: &EmbeddingTable,
    cache: &ForwardCache,
    grad: &EmbeddingTable,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(bank.num_params());
    for (m, enc) in bank.encoders.iter().enumerate() {
        let mut gw = Array2::<f64>::zeros(enc.affine.weight.raw_dim());
        let mut gb = Array1::<f64>::zeros(bank.d);
        for (s, (side_inputs, z_side, g_side)) in [
            (&inputs.left, &table.left, &grad.left),
            (&inputs.right, &table.right, &grad.right),
        ]
        .into_iter()
        .enumerate()
        {
            let z = &z_side[m];
            let g = &g_side[m];
            let norms = &cache.norms[s][m];
            // gradient w.r.t. the pre-normalisation activations
            let mut gv = Array2::<f64>::zeros(z.raw_dim());
            for i in 0..z.nrows() {
                if norms[i] == 0.0 {
                    continue;
                }
                let zi = z.row(i);
                let gi = g.row(i);
                let proj = zi.dot(&gi);
                let mut dst = gv.row_mut(i);
                for k in 0..bank.d {
                    dst[k] = (gi[k] - zi[k] * proj) / norms[i];
                }
            }
            gw += &side_inputs[m].x.t().dot(&gv);
            gb += &gv.sum_axis(Axis(0));
        }
        out.extend(gw.iter());
        out.extend(gb.iter());
    }
    out
}

/// `s_ij = a_i . b_j`; rows are unit or zero so entries lie in `[-1, 1]`.
pub fn similarity(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<Array2<f64>> {
    if a.ncols() != b.ncols() {
        return Err(RuleError::DimMismatch(format!("embedding dims {} vs {}", a.ncols(), b.ncols())));
    }
    Ok(a.dot(&b.t()))
}

/// Similarity matrix between the two sides at one modality.
pub fn modality_similarity(table: &EmbeddingTable, modality: usize) -> Result<Array2<f64>> {
    let (l, r) = (table.left.get(modality), table.right.get(modality));
    match (l, r) {
        (Some(l), Some(r)) => similarity(l.view(), r.view()),
        _ => Err(RuleError::InvalidArgument(format!("no modality {modality} in table"))),
    }
}
