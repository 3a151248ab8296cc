//! Evidential training objectives.
//!
//! For a query with Dirichlet parameters `alpha` over `K` candidates and a
//! target vector `y`, the robust term is the expected squared error (or
//! expected cross-entropy) under `Dir(alpha)`, both in closed form. The
//! regulariser is `KL[Dir(y + (1 - y) alpha) || Dir(1)]`, which only
//! penalises evidence on non-target candidates.

use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::encoders::{backward, encode_inputs, EmbeddingTable, EncoderBank, EncoderInputs};
use crate::fusion::{fuse, fuse_backward, FusedTable, FusionWeights};
use crate::reliability::{evidence_slope, evidence_value, Subset};
use crate::special::{digamma, ln_gamma, trigamma};
use crate::{Result, RuleError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    #[default]
    Mse,
    Ce,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSettings {
    pub variant: Variant,
    pub lambda: f64,
    pub tau: f64,
}

impl Default for LossSettings {
    fn default() -> Self {
        LossSettings {
            variant: Variant::Mse,
            lambda: 1e-4,
            tau: 0.07,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Annotated,
    Blended,
    Excluded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinedLabel {
    pub values: Vec<f64>,
    pub provenance: Provenance,
}

impl RefinedLabel {
    /// Zero target for anchors left out of the robust term.
    pub fn excluded(k: usize) -> Self {
        RefinedLabel {
            values: vec![0.0; k],
            provenance: Provenance::Excluded,
        }
    }

    pub fn is_excluded(&self) -> bool {
        self.provenance == Provenance::Excluded
    }
}

pub fn softmax(s: &[f64]) -> Vec<f64> {
    let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = s.iter().map(|v| (v - max).exp()).collect();
    let z: f64 = exp.iter().sum();
    exp.into_iter().map(|v| v / z).collect()
}

/// Clean pairs keep their annotation; low-consensus pairs blend it with
/// the model's own softmax distribution, weighted by consensus.
pub fn refine_label(y: &[f64], s: &[f64], c: f64, subset: Subset) -> Result<RefinedLabel> {
    if y.len() != s.len() {
        return Err(RuleError::DimMismatch(format!("label length {} vs row length {}", y.len(), s.len())));
    }
    match subset {
        Subset::Clean => Ok(RefinedLabel {
            values: y.to_vec(),
            provenance: Provenance::Annotated,
        }),
        Subset::LowConsensus => {
            let p = softmax(s);
            Ok(RefinedLabel {
                values: y.iter().zip(p).map(|(y, p)| c * y + (1.0 - c) * p).collect(),
                provenance: Provenance::Blended,
            })
        }
        Subset::HighUncertainty => Err(RuleError::InvalidArgument("high-uncertainty pairs have no refined label".into())),
    }
}

fn check(alpha: &[f64], y: &[f64]) -> Result<()> {
    if alpha.len() != y.len() {
        return Err(RuleError::DimMismatch(format!("alpha length {} vs label length {}", alpha.len(), y.len())));
    }
    if alpha.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(RuleError::NonFinite("loss input"));
    }
    Ok(())
}

/// `sum_j (y_j - a_j/Q)^2 + a_j (Q - a_j) / (Q^2 (Q + 1))`; zero for excluded pairs.
pub fn l_dr_mse(alpha: &[f64], y: &[f64], subset: Subset) -> Result<f64> {
    check(alpha, y)?;
    if subset == Subset::HighUncertainty {
        return Ok(0.0);
    }
    let q: f64 = alpha.iter().sum();
    Ok(alpha
        .iter()
        .zip(y)
        .map(|(&a, &y)| (y - a / q).powi(2) + a * (q - a) / (q * q * (q + 1.0)))
        .sum())
}

pub fn l_dr_mse_grad(alpha: &[f64], y: &[f64]) -> Vec<f64> {
    let q: f64 = alpha.iter().sum();
    let p: Vec<f64> = alpha.iter().map(|a| a / q).collect();
    let sum_p2: f64 = p.iter().map(|p| p * p).sum();
    let resid_p: f64 = y.iter().zip(&p).map(|(y, p)| (y - p) * p).sum();
    p.iter()
        .zip(y)
        .map(|(&pk, &yk)| {
            let fit = -2.0 / q * ((yk - pk) - resid_p);
            let var = -2.0 / (q * (q + 1.0)) * (pk - sum_p2) - (1.0 - sum_p2) / (q + 1.0).powi(2);
            fit + var
        })
        .collect()
}

/// `sum_j y_j (psi(Q) - psi(a_j))`; zero for excluded pairs.
pub fn l_dr_ce(alpha: &[f64], y: &[f64], subset: Subset) -> Result<f64> {
    check(alpha, y)?;
    if subset == Subset::HighUncertainty {
        return Ok(0.0);
    }
    let q: f64 = alpha.iter().sum();
    let psi_q = digamma(q);
    Ok(alpha.iter().zip(y).filter(|(_, &y)| y != 0.0).map(|(&a, &y)| y * (psi_q - digamma(a))).sum())
}

pub fn l_dr_ce_grad(alpha: &[f64], y: &[f64]) -> Vec<f64> {
    let q: f64 = alpha.iter().sum();
    let mass: f64 = y.iter().sum();
    let tq = trigamma(q);
    alpha
        .iter()
        .zip(y)
        .map(|(&a, &y)| mass * tq - if y != 0.0 { y * trigamma(a) } else { 0.0 })
        .collect()
}

fn target_alpha(alpha: &[f64], y: &[f64]) -> Vec<f64> {
    alpha.iter().zip(y).map(|(a, y)| y + (1.0 - y) * a).collect()
}

/// `KL[Dir(y + (1 - y) alpha) || Dir(1)]`.
pub fn l_reg_kl(alpha: &[f64], y: &[f64]) -> Result<f64> {
    check(alpha, y)?;
    let at = target_alpha(alpha, y);
    let k = at.len() as f64;
    let s: f64 = at.iter().sum();
    let psi_s = digamma(s);
    let mut kl = ln_gamma(s) - ln_gamma(k);
    for &a in &at {
        kl += (a - 1.0) * (digamma(a) - psi_s) - ln_gamma(a);
    }
    // rounding can leave a tiny negative value at alpha-tilde = 1
    Ok(kl.max(0.0))
}

pub fn l_reg_kl_grad(alpha: &[f64], y: &[f64]) -> Vec<f64> {
    let at = target_alpha(alpha, y);
    let k = at.len() as f64;
    let s: f64 = at.iter().sum();
    let ts = (s - k) * trigamma(s);
    at.iter().zip(y).map(|(&a, &y)| (1.0 - y) * ((a - 1.0) * trigamma(a) - ts)).collect()
}

/// Loss terms of one similarity row and the gradient of
/// `dr + lambda * reg` with respect to the row.
#[derive(Debug, Clone, PartialEq)]
pub struct RowLoss {
    pub dr: f64,
    pub reg: f64,
    pub grad: Vec<f64>,
}

pub fn row_loss(s: &[f64], label: &RefinedLabel, settings: &LossSettings) -> Result<RowLoss> {
    if settings.tau <= 0.0 {
        return Err(RuleError::InvalidArgument(format!("tau must be positive, got {}", settings.tau)));
    }
    let alpha: Vec<f64> = s.iter().map(|&v| evidence_value(v, settings.tau) + 1.0).collect();
    let y = &label.values;
    let subset = if label.is_excluded() {
        Subset::HighUncertainty
    } else {
        Subset::Clean
    };
    let (dr, mut grad) = match settings.variant {
        Variant::Mse => (l_dr_mse(&alpha, y, subset)?, l_dr_mse_grad(&alpha, y)),
        Variant::Ce => (l_dr_ce(&alpha, y, subset)?, l_dr_ce_grad(&alpha, y)),
    };
    if label.is_excluded() {
        grad.iter_mut().for_each(|g| *g = 0.0);
    }
    let reg = l_reg_kl(&alpha, y)?;
    for ((g, r), &v) in grad.iter_mut().zip(l_reg_kl_grad(&alpha, y)).zip(s) {
        *g = (*g + settings.lambda * r) * evidence_slope(v, settings.tau);
    }
    if !dr.is_finite() || !reg.is_finite() {
        return Err(RuleError::NonFinite("row loss"));
    }
    Ok(RowLoss { dr, reg, grad })
}

/// One annotated train pair and its subset at each level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainItem {
    pub left: usize,
    pub right: usize,
    pub entity: Subset,
    /// `None` where the query's attribute is absent.
    pub modality: Vec<Option<Subset>>,
}

/// Refined targets of one train pair, frozen for a gradient step.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemTargets {
    pub left: usize,
    pub entity: RefinedLabel,
    pub modality: Vec<Option<RefinedLabel>>,
}

fn row_of(query: ArrayView1<f64>, candidates: &Array2<f64>) -> Vec<f64> {
    candidates.dot(&query).to_vec()
}

fn target_for(row: &[f64], right: usize, subset: Subset) -> Result<RefinedLabel> {
    if subset == Subset::HighUncertainty {
        return Ok(RefinedLabel::excluded(row.len()));
    }
    let mut y = vec![0.0; row.len()];
    y[right] = 1.0;
    refine_label(&y, row, row[right].max(0.0), subset)
}

/// Refines every item's labels against the current embeddings.
pub fn refine_targets(table: &EmbeddingTable, fused: &FusedTable, items: &[TrainItem]) -> Result<Vec<ItemTargets>> {
    items
        .iter()
        .map(|item| {
            if item.left >= fused.left.nrows() || item.right >= fused.right.nrows() {
                return Err(RuleError::InvalidArgument(format!("pair ({}, {}) out of range", item.left, item.right)));
            }
            let entity = target_for(&row_of(fused.left.row(item.left), &fused.right), item.right, item.entity)?;
            let modality = item
                .modality
                .iter()
                .enumerate()
                .map(|(m, subset)| match subset {
                    Some(subset) => {
                        target_for(&row_of(table.left[m].row(item.left), &table.right[m]), item.right, *subset).map(Some)
                    }
                    None => Ok(None),
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(ItemTargets {
                left: item.left,
                entity,
                modality,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_dr_entity: f64,
    pub l_dr_modality: Vec<f64>,
    pub l_reg_entity: f64,
    pub l_reg_modality: Vec<f64>,
    pub lambda: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn l_dr(&self) -> f64 {
        self.l_dr_entity + self.l_dr_modality.iter().sum::<f64>()
    }

    pub fn l_reg(&self) -> f64 {
        self.l_reg_entity + self.l_reg_modality.iter().sum::<f64>()
    }
}

/// Accumulates `g_j` into the query row and candidate rows of a dot-product
/// similarity row.
fn scatter(
    grad: &[f64],
    query: ArrayView1<f64>,
    candidates: &Array2<f64>,
    gq: &mut Array2<f64>,
    gc: &mut Array2<f64>,
    qi: usize,
    scale: f64,
) {
    let g = ArrayView1::from(grad);
    gq.row_mut(qi).scaled_add(scale, &candidates.t().dot(&g));
    for (j, mut row) in gc.axis_iter_mut(Axis(0)).enumerate() {
        if grad[j] != 0.0 {
            row.scaled_add(scale * grad[j], &query);
        }
    }
}

/// Entity-level plus per-modality losses averaged over the items, and the
/// gradient with respect to the flattened encoder parameters.
pub fn total_loss(
    bank: &EncoderBank,
    inputs: &EncoderInputs,
    weights: &FusionWeights,
    targets: &[ItemTargets],
    settings: &LossSettings,
) -> Result<(LossBreakdown, Vec<f64>)> {
    let m_count = bank.num_modalities();
    let (table, cache) = encode_inputs(bank, inputs)?;
    let fused = fuse(&table, weights)?;
    let mut breakdown = LossBreakdown {
        l_dr_entity: 0.0,
        l_dr_modality: vec![0.0; m_count],
        l_reg_entity: 0.0,
        l_reg_modality: vec![0.0; m_count],
        lambda: settings.lambda,
        total: 0.0,
    };
    let zeros = |t: &[Array2<f64>]| t.iter().map(|z| Array2::zeros(z.raw_dim())).collect::<Vec<_>>();
    let mut grad = EmbeddingTable {
        left: zeros(&table.left),
        right: zeros(&table.right),
    };
    let mut gf_left = Array2::zeros(fused.left.raw_dim());
    let mut gf_right = Array2::zeros(fused.right.raw_dim());
    if targets.is_empty() {
        return Ok((breakdown, vec![0.0; bank.num_params()]));
    }
    let scale = 1.0 / targets.len() as f64;
    for t in targets {
        if t.modality.len() != m_count {
            return Err(RuleError::DimMismatch(format!("{} modality targets for {m_count} modalities", t.modality.len())));
        }
        let q = fused.left.row(t.left);
        let rl = row_loss(&row_of(q, &fused.right), &t.entity, settings)?;
        breakdown.l_dr_entity += scale * rl.dr;
        breakdown.l_reg_entity += scale * rl.reg;
        scatter(&rl.grad, q, &fused.right, &mut gf_left, &mut gf_right, t.left, scale);
        for (m, label) in t.modality.iter().enumerate() {
            let Some(label) = label else { continue };
            let q = table.left[m].row(t.left);
            let rl = row_loss(&row_of(q, &table.right[m]), label, settings)?;
            breakdown.l_dr_modality[m] += scale * rl.dr;
            breakdown.l_reg_modality[m] += scale * rl.reg;
            scatter(&rl.grad, q, &table.right[m], &mut grad.left[m], &mut grad.right[m], t.left, scale);
        }
    }
    breakdown.total = breakdown.l_dr() + settings.lambda * breakdown.l_reg();
    let via_fusion = fuse_backward(&table, weights, &fused, &gf_left, &gf_right);
    for (g, v) in grad.left.iter_mut().chain(grad.right.iter_mut()).zip(via_fusion.left.iter().chain(&via_fusion.right)) {
        *g += v;
    }
    Ok((breakdown, backward(bank, inputs, &table, &cache, &grad)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::prepare_inputs;
    use crate::fusion::EntityWeights;
    use crate::dataset::{generate_synthetic, GenConfig, ModalityGen};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Gamma};

    fn dirichlet_samples(alpha: &[f64], n: usize, seed: u64, mut f: impl FnMut(&[f64])) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gammas: Vec<Gamma<f64>> = alpha.iter().map(|&a| Gamma::new(a, 1.0).unwrap()).collect();
        let mut p = vec![0.0; alpha.len()];
        for _ in 0..n {
            let mut z = 0.0;
            for (pj, g) in p.iter_mut().zip(&gammas) {
                *pj = g.sample(&mut rng);
                z += *pj;
            }
            p.iter_mut().for_each(|v| *v /= z);
            f(&p);
        }
    }

    fn mc_mse(alpha: &[f64], y: &[f64], n: usize) -> f64 {
        let mut acc = 0.0;
        dirichlet_samples(alpha, n, 11, |p| acc += p.iter().zip(y).map(|(p, y)| (y - p).powi(2)).sum::<f64>());
        acc / n as f64
    }

    #[test]
    fn refine_label_examples() {
        let y = [1.0, 0.0];
        let r = refine_label(&y, &[0.3, -0.2], 0.9, Subset::Clean).unwrap();
        assert_eq!(r.values, y.to_vec());
        assert_eq!(r.provenance, Provenance::Annotated);
        let s = [0.3, -0.2];
        let r = refine_label(&y, &s, 0.0, Subset::LowConsensus).unwrap();
        assert_eq!(r.values, softmax(&s));
        let r = refine_label(&y, &[0.0, 0.0], 0.5, Subset::LowConsensus).unwrap();
        assert_eq!(r.values, vec![0.75, 0.25]);
        assert!(refine_label(&y, &s, 0.5, Subset::HighUncertainty).is_err());
    }

    #[test]
    fn mse_examples_match_monte_carlo() {
        let v = l_dr_mse(&[2.0, 1.0], &[1.0, 0.0], Subset::Clean).unwrap();
        assert!((v - 1.0 / 3.0).abs() < 1e-12);
        assert!((mc_mse(&[2.0, 1.0], &[1.0, 0.0], 200_000) - v).abs() < 1e-2);
        let v = l_dr_mse(&[1.0, 1.0], &[1.0, 0.0], Subset::Clean).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-12);
        assert!((mc_mse(&[1.0, 1.0], &[1.0, 0.0], 200_000) - v).abs() < 1e-2);
        assert_eq!(l_dr_mse(&[9.0, 1.0], &[0.0, 1.0], Subset::HighUncertainty).unwrap(), 0.0);
    }

    #[test]
    fn ce_examples() {
        let v = l_dr_ce(&[1.0, 1.0], &[1.0, 0.0], Subset::Clean).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
        let v = l_dr_ce(&[2.0, 1.0], &[1.0, 0.0], Subset::Clean).unwrap();
        assert!((v - 0.5).abs() < 1e-12);
        let mut acc = 0.0;
        dirichlet_samples(&[1.0, 1.0], 200_000, 3, |p| acc -= p[0].ln());
        assert!((acc / 200_000.0 - 1.0).abs() < 1e-2);
        assert_eq!(l_dr_ce(&[1.0, 1.0], &[1.0, 0.0], Subset::HighUncertainty).unwrap(), 0.0);
    }

    #[test]
    fn kl_examples() {
        assert!(l_reg_kl(&[1.0; 4], &[0.0; 4]).unwrap().abs() < 1e-12);
        let v = l_reg_kl(&[3.0, 2.0], &[1.0, 0.0]).unwrap();
        // alpha-tilde = [1, 2]: p ~ Beta(1, 2), density 2(1 - x) against the uniform
        let n = 200_000;
        let h = 1.0 / n as f64;
        let integral: f64 = (0..n)
            .map(|i| {
                let x = (i as f64 + 0.5) * h;
                let f = 2.0 * (1.0 - x);
                f * f.ln() * h
            })
            .sum();
        assert!((v - integral).abs() < 1e-3);
        assert!((v - (2f64.ln() - 0.5)).abs() < 1e-9);
        // evidence at the annotated index does not matter
        let a = l_reg_kl(&[50.0, 2.0, 1.5], &[1.0, 0.0, 0.0]).unwrap();
        let b = l_reg_kl(&[1.0, 2.0, 1.5], &[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(a, b);
    }

    fn fd_check(f: impl Fn(&[f64]) -> f64, grad: &[f64], x: &[f64]) {
        let h = 1e-6;
        for k in 0..x.len() {
            let mut p = x.to_vec();
            p[k] += h;
            let mut m = x.to_vec();
            m[k] -= h;
            let fd = (f(&p) - f(&m)) / (2.0 * h);
            assert!((fd - grad[k]).abs() < 1e-6 * (1.0 + fd.abs()), "k={k}: fd {fd} vs {}", grad[k]);
        }
    }

    #[test]
    fn alpha_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let k = rng.random_range(2..8);
            let alpha: Vec<f64> = (0..k).map(|_| rng.random_range(1.0..4.0)).collect();
            let mut y: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
            let z: f64 = y.iter().sum();
            y.iter_mut().for_each(|v| *v /= z);
            fd_check(|a| l_dr_mse(a, &y, Subset::Clean).unwrap(), &l_dr_mse_grad(&alpha, &y), &alpha);
            fd_check(|a| l_dr_ce(a, &y, Subset::Clean).unwrap(), &l_dr_ce_grad(&alpha, &y), &alpha);
            fd_check(|a| l_reg_kl(a, &y).unwrap(), &l_reg_kl_grad(&alpha, &y), &alpha);
        }
    }

    #[test]
    fn kl_gradient_is_zero_at_annotated_index() {
        let g = l_reg_kl_grad(&[2.5, 1.7, 3.1], &[0.0, 1.0, 0.0]);
        assert_eq!(g[1], 0.0);
        assert!(g[0] > 0.0 && g[2] > 0.0);
    }

    #[test]
    fn one_step_raises_expected_prob() {
        let label = RefinedLabel {
            values: vec![1.0, 0.0],
            provenance: Provenance::Annotated,
        };
        let settings = LossSettings::default();
        let s = [0.05, 0.1];
        let p0 = |s: &[f64]| {
            let a: Vec<f64> = s.iter().map(|&v| evidence_value(v, settings.tau) + 1.0).collect();
            a[0] / (a[0] + a[1])
        };
        let rl = row_loss(&s, &label, &settings).unwrap();
        let stepped: Vec<f64> = s.iter().zip(&rl.grad).map(|(s, g)| s - 1e-3 * g).collect();
        assert!(p0(&stepped) > p0(&s));
    }

    fn small_instance() -> (EncoderBank, EncoderInputs, FusionWeights, Vec<TrainItem>) {
        let pair = generate_synthetic(&GenConfig {
            n: 10,
            clusters: 2,
            seed: 3,
            modalities: vec![
                ModalityGen {
                    name: "structure".into(),
                    dim: 6,
                    missing_rate: 0.0,
                },
                ModalityGen {
                    name: "image".into(),
                    dim: 5,
                    missing_rate: 0.2,
                },
                ModalityGen {
                    name: "text".into(),
                    dim: 4,
                    missing_rate: 0.0,
                },
            ],
            ..GenConfig::default()
        })
        .unwrap();
        let inputs = prepare_inputs(&pair);
        let bank = EncoderBank::new(pair.modalities(), 4, 8);
        let mut weights = FusionWeights::plain(10, 10, 3);
        weights.left[2] = EntityWeights {
            weights: vec![0.3, 0.8, 0.5],
            gated: true,
        };
        let subsets = [Subset::Clean, Subset::LowConsensus, Subset::HighUncertainty];
        let items = pair
            .train_anchors()
            .chain(pair.eval_view().test_anchors())
            .take(6)
            .enumerate()
            .map(|(n, (_, a))| TrainItem {
                left: a.left,
                right: a.right,
                entity: subsets[n % 3],
                modality: (0..3)
                    .map(|m| inputs.left[m].present[a.left].then_some(subsets[(n + m + 1) % 3]))
                    .collect(),
            })
            .collect();
        (bank, inputs, weights, items)
    }

    #[test]
    fn total_loss_gradient_matches_finite_differences() {
        let (mut bank, inputs, weights, items) = small_instance();
        for settings in [
            LossSettings {
                variant: Variant::Mse,
                lambda: 0.1,
                tau: 0.5,
            },
            LossSettings {
                variant: Variant::Ce,
                lambda: 0.1,
                tau: 0.5,
            },
        ] {
            let (table, _) = encode_inputs(&bank, &inputs).unwrap();
            let targets = refine_targets(&table, &fuse(&table, &weights).unwrap(), &items).unwrap();
            let (_, grad) = total_loss(&bank, &inputs, &weights, &targets, &settings).unwrap();
            let base = bank.flatten();
            let h = 1e-5;
            let (mut num, mut den) = (0.0, 0.0);
            for idx in 0..base.len() {
                let mut p = base.clone();
                p[idx] += h;
                bank.assign(&p);
                let lp = total_loss(&bank, &inputs, &weights, &targets, &settings).unwrap().0.total;
                p[idx] -= 2.0 * h;
                bank.assign(&p);
                let lm = total_loss(&bank, &inputs, &weights, &targets, &settings).unwrap().0.total;
                let fd = (lp - lm) / (2.0 * h);
                num += (fd - grad[idx]).powi(2);
                den += fd.powi(2);
            }
            bank.assign(&base);
            let rel = (num / den).sqrt();
            assert!(rel < 1e-4, "{settings:?}: relative error {rel}");
        }
    }

    #[test]
    fn total_loss_special_cases() {
        let (bank, inputs, weights, mut items) = small_instance();
        let (table, _) = encode_inputs(&bank, &inputs).unwrap();
        let fused = fuse(&table, &weights).unwrap();
        let targets = refine_targets(&table, &fused, &items).unwrap();
        let no_reg = LossSettings {
            lambda: 0.0,
            ..LossSettings::default()
        };
        let (b, _) = total_loss(&bank, &inputs, &weights, &targets, &no_reg).unwrap();
        assert_eq!(b.total, b.l_dr());
        for item in items.iter_mut() {
            item.entity = Subset::HighUncertainty;
            for m in item.modality.iter_mut().flatten() {
                *m = Subset::HighUncertainty;
            }
        }
        let targets = refine_targets(&table, &fused, &items).unwrap();
        let settings = LossSettings::default();
        let (b, _) = total_loss(&bank, &inputs, &weights, &targets, &settings).unwrap();
        assert_eq!(b.l_dr(), 0.0);
        assert!(b.l_reg() > 0.0);
        assert_eq!(b.total, settings.lambda * b.l_reg());
    }
}
