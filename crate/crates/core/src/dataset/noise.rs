use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{CorruptionEvent, MMKGPair, Side, Split};
use crate::{Result, RuleError};

/// Fractions of entity-entity, entity-attribute and attribute-attribute
/// correspondences to corrupt.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseRatios {
    pub ee: f64,
    pub ea: f64,
    pub aa: f64,
}

impl NoiseRatios {
    pub fn uniform(r: f64) -> Self {
        NoiseRatios { ee: r, ea: r, aa: r }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    pub ee: f64,
    pub ea: f64,
    pub aa: f64,
    /// Gaussian perturbation std as a multiple of each feature's std.
    pub aa_feature_scale: f64,
    /// Fraction of name characters replaced.
    pub aa_char_rate: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            ee: 0.0,
            ea: 0.0,
            aa: 0.0,
            aa_feature_scale: 1.0,
            aa_char_rate: 0.3,
        }
    }
}

impl From<NoiseRatios> for NoiseConfig {
    fn from(ratios: NoiseRatios) -> Self {
        NoiseConfig {
            ee: ratios.ee,
            ea: ratios.ea,
            aa: ratios.aa,
            ..NoiseConfig::default()
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, r) in [("ee", self.ee), ("ea", self.ea), ("aa", self.aa)] {
            if !(0.0..=1.0).contains(&r) {
                return Err(RuleError::InvalidArgument(format!("{name} ratio {r} outside [0,1]")));
            }
        }
        if !(self.aa_feature_scale >= 0.0 && (0.0..=1.0).contains(&self.aa_char_rate)) {
            return Err(RuleError::InvalidArgument("invalid A-A noise magnitudes".into()));
        }
        Ok(())
    }

    pub fn ratios(&self) -> NoiseRatios {
        NoiseRatios {
            ee: self.ee,
            ea: self.ea,
            aa: self.aa,
        }
    }
}

/// `floor(ratio * count)`, robust to ratios like 0.29 that are not exact in binary.
fn portion(ratio: f64, count: usize) -> usize {
    ((ratio * count as f64) + 1e-9).floor() as usize
}

fn sample_sorted(rng: &mut ChaCha8Rng, pool: &[usize], k: usize) -> Vec<usize> {
    let mut picked: Vec<usize> = index::sample(rng, pool.len(), k).into_iter().map(|i| pool[i]).collect();
    picked.sort_unstable();
    picked
}

/// Injects the three kinds of correspondence noise and logs every change.
///
/// * E-E: `floor(ee * |train|)` train anchors get their right entity
///   replaced by a uniformly drawn entity other than the planted one.
/// * E-A: per side and non-structural modality, `floor(ea * |present|)`
///   entities have their attribute row swapped with another selected
///   entity's row (a derangement), so each one ends up wrong.
/// * A-A: per non-structural modality, `floor(aa * |present|)` right-side
///   attributes are replaced by a Gaussian-perturbed copy, and
///   `floor(aa * n_right)` right-side names get characters replaced.
///
/// Test anchors keep their correspondence; attribute noise hits entities
/// regardless of split.
pub fn inject_noise(pair: &MMKGPair, config: &NoiseConfig, seed: u64) -> Result<MMKGPair> {
    config.validate()?;
    let NoiseRatios { ee, ea, aa } = config.ratios();
    let view = pair.eval_view();
    let train: Vec<usize> = pair.train_anchors().map(|(k, _)| k).collect();
    let n_ee = portion(ee, train.len());
    if train.len() <= n_ee {
        return Err(RuleError::InvalidArgument(format!(
            "ee ratio {ee} would leave no clean train anchor out of {}",
            train.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = pair.clone();
    let mut events = Vec::new();

    // E-E
    let already: Vec<bool> = {
        let mut v = vec![false; pair.anchors.len()];
        for e in &pair.log.events {
            if let CorruptionEvent::EntityEntity { anchor, .. } = e {
                v[*anchor] = true;
            }
        }
        v
    };
    let eligible: Vec<usize> = train.iter().copied().filter(|&k| !already[k]).collect();
    let n_right = pair.right.len();
    for k in sample_sorted(&mut rng, &eligible, n_ee.min(eligible.len())) {
        let planted = view.planted_right(k);
        let mut new_right = rng.random_range(0..n_right - 1);
        if new_right >= planted {
            new_right += 1;
        }
        events.push(CorruptionEvent::EntityEntity {
            anchor: k,
            original_right: out.anchors[k].right,
            new_right,
        });
        out.anchors[k].right = new_right;
    }
    debug_assert!(out.anchors.iter().all(|a| a.split == Split::Train || pair.anchors.contains(a)));

    let attribute_modalities: Vec<usize> = (0..pair.modalities.len())
        .filter(|&m| !pair.modalities[m].is_structural())
        .collect();

    // E-A
    for &m in &attribute_modalities {
        for side in [Side::Left, Side::Right] {
            let g = match side {
                Side::Left => &mut out.left,
                Side::Right => &mut out.right,
            };
            let present: Vec<usize> = (0..g.len()).filter(|&e| g.entities[e].attribute_rows[m].is_some()).collect();
            let clean: Vec<usize> = present
                .iter()
                .copied()
                .filter(|&e| view.ea_indicator(side, e, m) == Some(true))
                .collect();
            let k = portion(ea, present.len()).min(clean.len());
            if k == 0 {
                continue;
            }
            let mut chosen = sample_sorted(&mut rng, &clean, k);
            chosen.shuffle(&mut rng);
            let rows: Vec<usize> = chosen.iter().map(|&e| g.entities[e].attribute_rows[m].unwrap()).collect();
            for (t, &e) in chosen.iter().enumerate() {
                let new_row = if k >= 2 {
                    rows[(t + 1) % k]
                } else {
                    let donors: Vec<usize> = present
                        .iter()
                        .map(|&d| g.entities[d].attribute_rows[m].unwrap())
                        .filter(|&r| r != rows[t])
                        .collect();
                    match donors.get(rng.random_range(0..donors.len().max(1))) {
                        Some(&r) => r,
                        None => continue,
                    }
                };
                events.push(CorruptionEvent::EntityAttribute {
                    side,
                    modality: m,
                    entity: e,
                    original_row: rows[t],
                    new_row,
                });
                g.entities[e].attribute_rows[m] = Some(new_row);
            }
        }
    }

    // A-A: right-side features
    for &m in &attribute_modalities {
        let g = &mut out.right;
        let pristine = pair.log.pristine_rows.get(m).map(|r| r[1]).unwrap_or(g.features[m].rows());
        let dim = g.features[m].dim();
        let mut std = vec![0.0f64; dim];
        if pristine > 1 {
            let mut mean = vec![0.0f64; dim];
            for r in 0..pristine {
                for (acc, &x) in mean.iter_mut().zip(g.features[m].row(r)) {
                    *acc += x as f64;
                }
            }
            mean.iter_mut().for_each(|x| *x /= pristine as f64);
            for r in 0..pristine {
                for ((acc, &x), mu) in std.iter_mut().zip(g.features[m].row(r)).zip(&mean) {
                    *acc += (x as f64 - mu).powi(2);
                }
            }
            std.iter_mut().for_each(|x| *x = (*x / (pristine - 1) as f64).sqrt());
        }
        let present: Vec<usize> = (0..g.len()).filter(|&e| g.entities[e].attribute_rows[m].is_some()).collect();
        for e in sample_sorted(&mut rng, &present, portion(aa, present.len())) {
            let original_row = g.entities[e].attribute_rows[m].unwrap();
            let perturbed: Vec<f32> = g.features[m]
                .row(original_row)
                .iter()
                .zip(&std)
                .map(|(&x, s)| {
                    let eps: f64 = StandardNormal.sample(&mut rng);
                    (x as f64 + config.aa_feature_scale * s * eps) as f32
                })
                .collect();
            let new_row = g.features[m].push_row(&perturbed);
            g.entities[e].attribute_rows[m] = Some(new_row);
            events.push(CorruptionEvent::AttributeFeature {
                side: Side::Right,
                modality: m,
                entity: e,
                original_row,
                new_row,
            });
        }
    }

    // A-A: right-side names
    let n_names = portion(aa, out.right.len());
    let all: Vec<usize> = (0..out.right.len()).collect();
    for e in sample_sorted(&mut rng, &all, n_names) {
        let original = out.right.entities[e].name.clone();
        let corrupted = corrupt_name(&mut rng, &original, config.aa_char_rate);
        if corrupted == original {
            continue;
        }
        out.right.entities[e].name = corrupted.clone();
        events.push(CorruptionEvent::AttributeName {
            side: Side::Right,
            entity: e,
            original,
            corrupted,
        });
    }

    out.log.events.extend(events);
    Ok(out)
}

fn corrupt_name(rng: &mut ChaCha8Rng, name: &str, rate: f64) -> String {
    let mut chars: Vec<char> = name.chars().collect();
    if chars.is_empty() || rate == 0.0 {
        return name.to_string();
    }
    let n = ((rate * chars.len() as f64).ceil() as usize).clamp(1, chars.len());
    for i in index::sample(rng, chars.len(), n) {
        let old = chars[i];
        loop {
            let c = (b'a' + rng.random_range(0..26u8)) as char;
            if c != old {
                chars[i] = c;
                break;
            }
        }
    }
    chars.into_iter().collect()
}
