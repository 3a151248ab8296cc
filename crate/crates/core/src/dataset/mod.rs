//! Two-graph multi-modal data model.
//!
//! A [`MMKGPair`] holds a left and a right graph, each with entities,
//! structural triples and one feature matrix per modality, plus the
//! annotated anchor pairs linking them. Ground truth about injected
//! corruption lives in a [`CorruptionLog`] that is only reachable through
//! [`MMKGPair::eval_view`]; training code works on the plain pair.

mod generate;
mod io;
mod noise;

use serde::{Deserialize, Serialize};

pub use generate::{generate_synthetic, GenConfig, ModalityGen};
pub use io::{load_pair, save_pair, Manifest, ManifestModality};
pub use noise::{inject_noise, NoiseConfig, NoiseRatios};

/// Name of the modality encoded through neighbourhood aggregation.
pub const STRUCTURE: &str = "structure";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModalitySpec {
    pub name: String,
    pub dim: usize,
}

impl ModalitySpec {
    pub fn is_structural(&self) -> bool {
        self.name == STRUCTURE
    }

    pub fn feature_file(&self, side: Side) -> String {
        format!("feat_{}_{}.f32", side.as_str(), self.name)
    }
}

/// Dense row-major feature rows for one modality on one side.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    dim: usize,
    data: Vec<f32>,
}

impl FeatureMatrix {
    pub fn new(dim: usize, data: Vec<f32>) -> Self {
        assert!(dim > 0 && data.len() % dim == 0, "feature data not a multiple of dim");
        FeatureMatrix { dim, data }
    }

    pub fn zeros(rows: usize, dim: usize) -> Self {
        FeatureMatrix::new(dim, vec![0.0; rows * dim])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.dim..(r + 1) * self.dim]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f32] {
        &mut self.data[r * self.dim..(r + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub(crate) fn push_row(&mut self, row: &[f32]) -> usize {
        assert_eq!(row.len(), self.dim);
        self.data.extend_from_slice(row);
        self.rows() - 1
    }

    pub(crate) fn truncate_rows(&mut self, rows: usize) {
        self.data.truncate(rows * self.dim);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityRecord {
    pub id: usize,
    pub name: String,
    /// Feature row per modality (indexed like [`MMKGPair::modalities`]);
    /// `None` marks an absent attribute.
    pub attribute_rows: Vec<Option<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub head: usize,
    pub relation: usize,
    pub tail: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    pub entities: Vec<EntityRecord>,
    pub triples: Vec<Triple>,
    /// One matrix per modality.
    pub features: Vec<FeatureMatrix>,
}

impl Graph {
    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    /// Feature row of `entity` for `modality`, or `None` when absent.
    pub fn attribute(&self, entity: usize, modality: usize) -> Option<&[f32]> {
        self.entities[entity].attribute_rows[modality].map(|r| self.features[modality].row(r))
    }

    /// Undirected adjacency lists from the triples, sorted and deduplicated.
    pub fn neighbours(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.len()];
        for t in &self.triples {
            if t.head != t.tail {
                adj[t.head].push(t.tail);
                adj[t.tail].push(t.head);
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        adj
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// An annotated inter-graph correspondence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchorPair {
    pub left: usize,
    pub right: usize,
    pub split: Split,
}

/// One recorded change made by the noise injector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CorruptionEvent {
    /// Anchor's right entity replaced.
    EntityEntity {
        anchor: usize,
        original_right: usize,
        new_right: usize,
    },
    /// Attribute row reassigned to another entity's row.
    EntityAttribute {
        side: Side,
        modality: usize,
        entity: usize,
        original_row: usize,
        new_row: usize,
    },
    /// Attribute replaced by an appended, Gaussian-perturbed copy.
    AttributeFeature {
        side: Side,
        modality: usize,
        entity: usize,
        original_row: usize,
        new_row: usize,
    },
    /// Characters of the entity name replaced.
    AttributeName {
        side: Side,
        entity: usize,
        original: String,
        corrupted: String,
    },
}

/// Evaluation-only record of every injected corruption.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorruptionLog {
    /// Feature row counts per modality before any injection, `[left, right]`.
    pub pristine_rows: Vec<[usize; 2]>,
    pub events: Vec<CorruptionEvent>,
}

/// Per-anchor corruption flags, derived from the log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AnchorMask {
    pub ee: bool,
    pub ea_left: Vec<bool>,
    pub ea_right: Vec<bool>,
    pub aa: Vec<bool>,
    pub aa_name: bool,
}

impl AnchorMask {
    pub fn any(&self) -> bool {
        self.ee
            || self.aa_name
            || self.ea_left.iter().chain(&self.ea_right).chain(&self.aa).any(|&b| b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MMKGPair {
    pub(crate) modalities: Vec<ModalitySpec>,
    pub(crate) left: Graph,
    pub(crate) right: Graph,
    pub(crate) anchors: Vec<AnchorPair>,
    pub(crate) seed: u64,
    pub(crate) log: CorruptionLog,
}

impl MMKGPair {
    /// Builds a pair and checks every structural invariant.
    pub fn new(
        modalities: Vec<ModalitySpec>,
        left: Graph,
        right: Graph,
        anchors: Vec<AnchorPair>,
        seed: u64,
    ) -> crate::Result<Self> {
        let mut pair = MMKGPair {
            modalities,
            left,
            right,
            anchors,
            seed,
            log: CorruptionLog::default(),
        };
        pair.validate()?;
        pair.log.pristine_rows = (0..pair.modalities.len())
            .map(|m| [pair.left.features[m].rows(), pair.right.features[m].rows()])
            .collect();
        Ok(pair)
    }

    pub(crate) fn with_log(mut self, log: CorruptionLog) -> Self {
        self.log = log;
        self
    }

    pub fn modalities(&self) -> &[ModalitySpec] {
        &self.modalities
    }

    pub fn modality_index(&self, name: &str) -> Option<usize> {
        self.modalities.iter().position(|m| m.name == name)
    }

    pub fn left(&self) -> &Graph {
        &self.left
    }

    pub fn right(&self) -> &Graph {
        &self.right
    }

    pub fn graph(&self, side: Side) -> &Graph {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn anchors(&self) -> &[AnchorPair] {
        &self.anchors
    }

    pub fn train_anchors(&self) -> impl Iterator<Item = (usize, &AnchorPair)> {
        self.anchors
            .iter()
            .enumerate()
            .filter(|(_, a)| a.split == Split::Train)
    }

    /// Ground-truth access for evaluation code.
    pub fn eval_view(&self) -> EvalView<'_> {
        EvalView { pair: self }
    }

    fn validate(&self) -> crate::Result<()> {
        use crate::RuleError;
        for (side, g) in [(Side::Left, &self.left), (Side::Right, &self.right)] {
            if g.features.len() != self.modalities.len() {
                return Err(RuleError::DimMismatch(format!(
                    "{} graph has {} feature matrices for {} modalities",
                    side.as_str(),
                    g.features.len(),
                    self.modalities.len()
                )));
            }
            for (m, spec) in self.modalities.iter().enumerate() {
                if g.features[m].dim() != spec.dim {
                    return Err(RuleError::DimMismatch(format!(
                        "{}: manifest dim {} but matrix has {} columns",
                        spec.feature_file(side),
                        spec.dim,
                        g.features[m].dim()
                    )));
                }
            }
            for (i, e) in g.entities.iter().enumerate() {
                if e.id != i {
                    return Err(RuleError::data(
                        format!("entities_{}.tsv", side.as_str()),
                        Some(i + 1),
                        format!("entity id {} out of order (expected {i})", e.id),
                    ));
                }
                if e.attribute_rows.len() != self.modalities.len() {
                    return Err(RuleError::data(
                        format!("attributes_{}.tsv", side.as_str()),
                        None,
                        format!("entity {i} lists {} modalities", e.attribute_rows.len()),
                    ));
                }
                for (m, row) in e.attribute_rows.iter().enumerate() {
                    if let Some(r) = row {
                        if *r >= g.features[m].rows() {
                            return Err(RuleError::data(
                                self.modalities[m].feature_file(side),
                                None,
                                format!("entity {i} points at row {r} of {}", g.features[m].rows()),
                            ));
                        }
                    }
                }
            }
            for (k, t) in g.triples.iter().enumerate() {
                if t.head >= g.len() || t.tail >= g.len() {
                    return Err(RuleError::data(
                        format!("triples_{}.tsv", side.as_str()),
                        Some(k + 1),
                        format!("dangling entity index in triple {} {} {}", t.head, t.relation, t.tail),
                    ));
                }
            }
        }
        let mut used_left = vec![false; self.left.len()];
        for (k, a) in self.anchors.iter().enumerate() {
            if a.left >= self.left.len() || a.right >= self.right.len() {
                return Err(RuleError::data(
                    "anchors.tsv",
                    Some(k + 1),
                    format!(
                        "dangling entity index: {}/{} with graph sizes {}/{}",
                        a.left,
                        a.right,
                        self.left.len(),
                        self.right.len()
                    ),
                ));
            }
            if a.split == Split::Train {
                if used_left[a.left] {
                    return Err(RuleError::data(
                        "anchors.tsv",
                        Some(k + 1),
                        format!("left entity {} appears in two train anchors", a.left),
                    ));
                }
                // E-E noise may point a corrupted anchor at a right entity
                // that another anchor already uses, so one-to-one is only
                // enforced on the left.
                used_left[a.left] = true;
            }
        }
        Ok(())
    }
}

/// Evaluation-only view exposing the corruption log and test anchors.
#[derive(Clone, Copy)]
pub struct EvalView<'a> {
    pair: &'a MMKGPair,
}

impl<'a> EvalView<'a> {
    pub fn log(&self) -> &'a CorruptionLog {
        &self.pair.log
    }

    pub fn test_anchors(&self) -> impl Iterator<Item = (usize, &'a AnchorPair)> {
        self.pair
            .anchors
            .iter()
            .enumerate()
            .filter(|(_, a)| a.split == Split::Test)
    }

    /// Right entity planted as the true counterpart of anchor `k`.
    pub fn planted_right(&self, k: usize) -> usize {
        self.pair
            .log
            .events
            .iter()
            .find_map(|e| match e {
                CorruptionEvent::EntityEntity {
                    anchor,
                    original_right,
                    ..
                } if *anchor == k => Some(*original_right),
                _ => None,
            })
            .unwrap_or(self.pair.anchors[k].right)
    }

    /// Entity-attribute indicator `h`: `Some(false)` once the attribute was
    /// reassigned, `None` when absent.
    pub fn ea_indicator(&self, side: Side, entity: usize, modality: usize) -> Option<bool> {
        self.pair.graph(side).entities[entity].attribute_rows[modality]?;
        let corrupted = self.pair.log.events.iter().any(|e| {
            matches!(e, CorruptionEvent::EntityAttribute { side: s, modality: m, entity: x, .. }
                if *s == side && *m == modality && *x == entity)
        });
        Some(!corrupted)
    }

    pub fn anchor_mask(&self, k: usize) -> AnchorMask {
        let a = &self.pair.anchors[k];
        let n_mod = self.pair.modalities.len();
        let mut mask = AnchorMask {
            ee: false,
            ea_left: vec![false; n_mod],
            ea_right: vec![false; n_mod],
            aa: vec![false; n_mod],
            aa_name: false,
        };
        for e in &self.pair.log.events {
            match e {
                CorruptionEvent::EntityEntity { anchor, .. } if *anchor == k => mask.ee = true,
                CorruptionEvent::EntityAttribute {
                    side,
                    modality,
                    entity,
                    ..
                } => match side {
                    Side::Left if *entity == a.left => mask.ea_left[*modality] = true,
                    Side::Right if *entity == a.right => mask.ea_right[*modality] = true,
                    _ => {}
                },
                CorruptionEvent::AttributeFeature {
                    side,
                    modality,
                    entity,
                    ..
                } => {
                    let hit = match side {
                        Side::Left => *entity == a.left,
                        Side::Right => *entity == a.right,
                    };
                    if hit {
                        mask.aa[*modality] = true;
                    }
                }
                CorruptionEvent::AttributeName { side, entity, .. } => {
                    let hit = match side {
                        Side::Left => *entity == a.left,
                        Side::Right => *entity == a.right,
                    };
                    if hit {
                        mask.aa_name = true;
                    }
                }
                _ => {}
            }
        }
        mask
    }

    /// Undoes every logged corruption, returning the pristine pair.
    pub fn restore_pristine(&self) -> MMKGPair {
        let mut pair = self.pair.clone();
        for e in self.pair.log.events.iter().rev() {
            match e {
                CorruptionEvent::EntityEntity {
                    anchor,
                    original_right,
                    ..
                } => pair.anchors[*anchor].right = *original_right,
                CorruptionEvent::EntityAttribute {
                    side,
                    modality,
                    entity,
                    original_row,
                    ..
                }
                | CorruptionEvent::AttributeFeature {
                    side,
                    modality,
                    entity,
                    original_row,
                    ..
                } => {
                    let g = match side {
                        Side::Left => &mut pair.left,
                        Side::Right => &mut pair.right,
                    };
                    g.entities[*entity].attribute_rows[*modality] = Some(*original_row);
                }
                CorruptionEvent::AttributeName {
                    side,
                    entity,
                    original,
                    ..
                } => {
                    let g = match side {
                        Side::Left => &mut pair.left,
                        Side::Right => &mut pair.right,
                    };
                    g.entities[*entity].name = original.clone();
                }
            }
        }
        for (m, rows) in self.pair.log.pristine_rows.iter().enumerate() {
            pair.left.features[m].truncate_rows(rows[0]);
            pair.right.features[m].truncate_rows(rows[1]);
        }
        pair.log = CorruptionLog {
            pristine_rows: self.pair.log.pristine_rows.clone(),
            events: Vec::new(),
        };
        pair
    }
}
