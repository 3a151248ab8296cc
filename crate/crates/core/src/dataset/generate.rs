use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{AnchorPair, EntityRecord, FeatureMatrix, Graph, MMKGPair, ModalitySpec, Split, Triple, STRUCTURE};
use crate::{Result, RuleError};

/// Largest intra-cluster spread for which every pair of latents in one
/// cluster keeps a positive inner product (`1 - 2r - r^2 > 0`).
pub const MAX_CLUSTER_SPREAD: f64 = std::f64::consts::SQRT_2 - 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModalityGen {
    pub name: String,
    pub dim: usize,
    #[serde(default)]
    pub missing_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenConfig {
    /// Entities per graph; every one has a planted counterpart.
    pub n: usize,
    pub latent_dim: usize,
    pub clusters: usize,
    /// Radius of a cluster relative to the norm of its centre.
    pub cluster_spread: f64,
    /// Std of the isotropic noise added to every feature view.
    pub feature_noise: f64,
    pub modalities: Vec<ModalityGen>,
    /// Latent-nearest neighbours linked by structural triples.
    pub neighbours: usize,
    /// Per-side probability of dropping a structural edge.
    pub edge_drop: f64,
    pub relations: usize,
    pub train_ratio: f64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n: 500,
            latent_dim: 16,
            clusters: 50,
            cluster_spread: 0.4,
            feature_noise: 0.3,
            modalities: vec![
                ModalityGen {
                    name: STRUCTURE.into(),
                    dim: 64,
                    missing_rate: 0.0,
                },
                ModalityGen {
                    name: "image".into(),
                    dim: 64,
                    missing_rate: 0.05,
                },
                ModalityGen {
                    name: "text".into(),
                    dim: 48,
                    missing_rate: 0.0,
                },
            ],
            neighbours: 4,
            edge_drop: 0.1,
            relations: 8,
            train_ratio: 0.3,
            seed: 7,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(RuleError::InvalidArgument(msg));
        if self.n < 4 {
            return bad(format!("entity count {} < 4", self.n));
        }
        if self.latent_dim < 2 {
            return bad(format!("latent dim {} < 2", self.latent_dim));
        }
        if self.clusters == 0 || self.clusters > self.n {
            return bad(format!("cluster count {} outside 1..={}", self.clusters, self.n));
        }
        if !(0.0..MAX_CLUSTER_SPREAD).contains(&self.cluster_spread) {
            return bad(format!("cluster spread {} outside [0, {MAX_CLUSTER_SPREAD:.4})", self.cluster_spread));
        }
        if !(self.feature_noise >= 0.0 && self.feature_noise.is_finite()) {
            return bad(format!("feature noise {} must be non-negative", self.feature_noise));
        }
        if self.modalities.is_empty() {
            return bad("at least one modality is required".into());
        }
        for (i, m) in self.modalities.iter().enumerate() {
            if m.dim < 2 {
                return bad(format!("modality {} has dim {} < 2", m.name, m.dim));
            }
            if !(0.0..1.0).contains(&m.missing_rate) {
                return bad(format!("modality {} missing rate {} outside [0,1)", m.name, m.missing_rate));
            }
            if m.name == STRUCTURE && m.missing_rate > 0.0 {
                return bad("the structure modality cannot have missing attributes".into());
            }
            if m.name.is_empty() || m.name.contains(|c: char| !(c.is_ascii_alphanumeric() || c == '_')) {
                return bad(format!("modality name {:?} must be [A-Za-z0-9_]+", m.name));
            }
            if self.modalities[..i].iter().any(|o| o.name == m.name) {
                return bad(format!("duplicate modality {}", m.name));
            }
        }
        if !(self.train_ratio > 0.0 && self.train_ratio < 1.0) {
            return bad(format!("train ratio {} outside (0,1)", self.train_ratio));
        }
        if !(0.0..1.0).contains(&self.edge_drop) {
            return bad(format!("edge drop {} outside [0,1)", self.edge_drop));
        }
        if self.relations == 0 {
            return bad("relation count must be positive".into());
        }
        Ok(())
    }
}

fn gaussian_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| StandardNormal.sample(rng)).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn random_name(rng: &mut ChaCha8Rng) -> String {
    const CONSONANTS: &[u8] = b"bcdfghjklmnprstvz";
    const VOWELS: &[u8] = b"aeiou";
    let syllables = rng.random_range(2..=4);
    let mut s = String::new();
    for _ in 0..syllables {
        s.push(CONSONANTS[rng.random_range(0..CONSONANTS.len())] as char);
        s.push(VOWELS[rng.random_range(0..VOWELS.len())] as char);
    }
    s
}

/// Builds a pair of graphs whose planted equivalents share a latent vector.
///
/// Each modality is a fixed random linear view of the latent, shared by both
/// graphs, plus independent isotropic noise per side. Structural triples
/// link latent-nearest neighbours within each graph. The right graph lists
/// entities in a random permutation of the left order.
pub fn generate_synthetic(config: &GenConfig) -> Result<MMKGPair> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.n;
    let dz = config.latent_dim;

    let centres: Vec<Vec<f64>> = (0..config.clusters).map(|_| gaussian_vec(&mut rng, dz)).collect();
    let cluster_of: Vec<usize> = (0..n).map(|i| i % config.clusters).collect();
    let latents: Vec<Vec<f64>> = cluster_of
        .iter()
        .map(|&k| {
            let c = &centres[k];
            let dir = gaussian_vec(&mut rng, dz);
            let dn = norm(&dir).max(1e-12);
            let radius = config.cluster_spread * norm(c) * rng.random_range(0.5..1.0);
            c.iter().zip(&dir).map(|(ci, di)| ci + radius * di / dn).collect()
        })
        .collect();

    // right index of the counterpart of left entity i
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);

    let mut modalities = Vec::with_capacity(config.modalities.len());
    let mut left_features = Vec::new();
    let mut right_features = Vec::new();
    let mut left_rows = vec![Vec::with_capacity(config.modalities.len()); n];
    let mut right_rows = vec![Vec::with_capacity(config.modalities.len()); n];
    for spec in &config.modalities {
        let scale = 1.0 / (dz as f64).sqrt();
        let proj: Vec<f64> = gaussian_vec(&mut rng, dz * spec.dim).into_iter().map(|x| x * scale).collect();
        let mut left = FeatureMatrix::zeros(n, spec.dim);
        let mut right = FeatureMatrix::zeros(n, spec.dim);
        for (i, z) in latents.iter().enumerate() {
            let clean: Vec<f64> = (0..spec.dim)
                .map(|f| (0..dz).map(|k| z[k] * proj[k * spec.dim + f]).sum())
                .collect();
            for (row, target) in [(i, &mut left), (perm[i], &mut right)] {
                for (dst, c) in target.row_mut(row).iter_mut().zip(&clean) {
                    let eps: f64 = StandardNormal.sample(&mut rng);
                    *dst = (c + config.feature_noise * eps) as f32;
                }
            }
        }
        for (rows, matrix) in [(&mut left_rows, &mut left), (&mut right_rows, &mut right)] {
            for (e, r) in rows.iter_mut().enumerate() {
                if spec.missing_rate > 0.0 && rng.random_bool(spec.missing_rate) {
                    matrix.row_mut(e).fill(0.0);
                    r.push(None);
                } else {
                    r.push(Some(e));
                }
            }
        }
        modalities.push(ModalitySpec {
            name: spec.name.clone(),
            dim: spec.dim,
        });
        left_features.push(left);
        right_features.push(right);
    }

    // latent kNN graph shared by both sides before per-side edge dropping
    let mut edges = Vec::new();
    for i in 0..n {
        let mut dists: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| {
                let d: f64 = latents[i].iter().zip(&latents[j]).map(|(a, b)| (a - b) * (a - b)).sum();
                (d, j)
            })
            .collect();
        dists.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, j) in dists.iter().take(config.neighbours) {
            edges.push((i.min(j), i.max(j)));
        }
    }
    edges.sort_unstable();
    edges.dedup();
    let mut side_triples = |map: &dyn Fn(usize) -> usize| {
        let mut triples: Vec<Triple> = edges
            .iter()
            .filter(|_| !rng.random_bool(config.edge_drop))
            .map(|&(a, b)| Triple {
                head: map(a),
                relation: (cluster_of[a] + cluster_of[b]) % config.relations,
                tail: map(b),
            })
            .collect();
        triples.sort_unstable();
        triples
    };
    let left_triples = side_triples(&|i| i);
    let right_triples = side_triples(&|i| perm[i]);

    let names: Vec<String> = (0..n).map(|_| random_name(&mut rng)).collect();
    let mut right_names = vec![String::new(); n];
    for (i, name) in names.iter().enumerate() {
        right_names[perm[i]] = name.clone();
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_train = ((config.train_ratio * n as f64) + 1e-9).floor() as usize;
    let mut split = vec![Split::Test; n];
    for &i in &order[..n_train] {
        split[i] = Split::Train;
    }
    let anchors = (0..n)
        .map(|i| AnchorPair {
            left: i,
            right: perm[i],
            split: split[i],
        })
        .collect();

    let build = |names: Vec<String>, rows: Vec<Vec<Option<usize>>>, triples, features| Graph {
        entities: names
            .into_iter()
            .zip(rows)
            .enumerate()
            .map(|(id, (name, attribute_rows))| EntityRecord {
                id,
                name,
                attribute_rows,
            })
            .collect(),
        triples,
        features,
    };
    let left = build(names, left_rows, left_triples, left_features);
    let right = build(right_names, right_rows, right_triples, right_features);
    MMKGPair::new(modalities, left, right, anchors, config.seed)
}
