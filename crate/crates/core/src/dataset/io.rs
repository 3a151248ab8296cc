//! Dataset directory layout.
//!
//! ```text
//! manifest.json            {modalities:[{name,dim,rows_left,rows_right}], n_left, n_right, seed}
//! entities_<side>.tsv      id<TAB>name
//! attributes_<side>.tsv    id<TAB>modality<TAB>row   ("-" marks an absent attribute)
//! triples_<side>.tsv       head<TAB>relation<TAB>tail
//! feat_<side>_<mod>.f32    row-major little-endian f32
//! anchors.tsv              left<TAB>right<TAB>split
//! masks.json               corruption log (evaluation only)
//! ```
//!
//! `attributes_<side>.tsv` is optional on load; without it entity `i` uses
//! row `i` of every modality.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AnchorPair, CorruptionLog, EntityRecord, FeatureMatrix, Graph, MMKGPair, ModalitySpec, Side, Split, Triple};
use crate::{Result, RuleError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestModality {
    pub name: String,
    pub dim: usize,
    pub rows_left: usize,
    pub rows_right: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub modalities: Vec<ManifestModality>,
    pub n_left: usize,
    pub n_right: usize,
    pub seed: u64,
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| RuleError::io(path, e))
}

fn read_text(dir: &Path, file: &str) -> Result<String> {
    let path = dir.join(file);
    fs::read_to_string(&path).map_err(|e| RuleError::data(file, None, format!("cannot read {}: {e}", path.display())))
}

pub fn save_pair(pair: &MMKGPair, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| RuleError::io(dir, e))?;
    let manifest = Manifest {
        modalities: pair
            .modalities
            .iter()
            .enumerate()
            .map(|(m, spec)| ManifestModality {
                name: spec.name.clone(),
                dim: spec.dim,
                rows_left: pair.left.features[m].rows(),
                rows_right: pair.right.features[m].rows(),
            })
            .collect(),
        n_left: pair.left.len(),
        n_right: pair.right.len(),
        seed: pair.seed,
    };
    write(&dir.join("manifest.json"), serde_json::to_string_pretty(&manifest).expect("manifest serializes"))?;

    for (side, g) in [(Side::Left, &pair.left), (Side::Right, &pair.right)] {
        let s = side.as_str();
        let mut entities = String::new();
        let mut attributes = String::new();
        for e in &g.entities {
            entities.push_str(&format!("{}\t{}\n", e.id, e.name));
            for (m, row) in e.attribute_rows.iter().enumerate() {
                let row = row.map(|r| r.to_string()).unwrap_or_else(|| "-".into());
                attributes.push_str(&format!("{}\t{}\t{row}\n", e.id, pair.modalities[m].name));
            }
        }
        write(&dir.join(format!("entities_{s}.tsv")), entities)?;
        write(&dir.join(format!("attributes_{s}.tsv")), attributes)?;
        let triples: String = g
            .triples
            .iter()
            .map(|t| format!("{}\t{}\t{}\n", t.head, t.relation, t.tail))
            .collect();
        write(&dir.join(format!("triples_{s}.tsv")), triples)?;
        for (m, spec) in pair.modalities.iter().enumerate() {
            let bytes: Vec<u8> = g.features[m].as_slice().iter().flat_map(|x| x.to_le_bytes()).collect();
            write(&dir.join(spec.feature_file(side)), bytes)?;
        }
    }

    let anchors: String = pair
        .anchors
        .iter()
        .map(|a| format!("{}\t{}\t{}\n", a.left, a.right, a.split.as_str()))
        .collect();
    write(&dir.join("anchors.tsv"), anchors)?;
    write(&dir.join("masks.json"), serde_json::to_string(&pair.log).expect("log serializes"))?;
    Ok(())
}

fn parse_usize(file: &str, line: usize, field: &str, what: &str) -> Result<usize> {
    field
        .parse()
        .map_err(|_| RuleError::data(file, Some(line), format!("{what} {field:?} is not a non-negative integer")))
}

fn split_fields<'a>(file: &str, line_no: usize, line: &'a str, expect: usize) -> Result<Vec<&'a str>> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != expect {
        return Err(RuleError::data(
            file,
            Some(line_no),
            format!("expected {expect} tab-separated fields, found {}", fields.len()),
        ));
    }
    Ok(fields)
}

fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().map(|(i, l)| (i + 1, l)).filter(|(_, l)| !l.is_empty())
}

fn load_graph(dir: &Path, side: Side, n: usize, manifest: &Manifest) -> Result<Graph> {
    let s = side.as_str();

    let file = format!("entities_{s}.tsv");
    let text = read_text(dir, &file)?;
    let mut entities = Vec::with_capacity(n);
    for (line_no, line) in lines(&text) {
        let f = split_fields(&file, line_no, line, 2)?;
        let id = parse_usize(&file, line_no, f[0], "entity id")?;
        if id != entities.len() {
            return Err(RuleError::data(&file, Some(line_no), format!("entity id {id} out of order")));
        }
        entities.push(EntityRecord {
            id,
            name: f[1].to_string(),
            attribute_rows: Vec::new(),
        });
    }
    if entities.len() != n {
        return Err(RuleError::data(&file, None, format!("manifest declares {n} entities, file has {}", entities.len())));
    }

    let mut features = Vec::with_capacity(manifest.modalities.len());
    for spec in &manifest.modalities {
        let rows = match side {
            Side::Left => spec.rows_left,
            Side::Right => spec.rows_right,
        };
        let file = format!("feat_{s}_{}.f32", spec.name);
        let path = dir.join(&file);
        let bytes = fs::read(&path).map_err(|e| RuleError::data(&file, None, format!("cannot read {}: {e}", path.display())))?;
        let expected = rows * spec.dim * 4;
        if bytes.len() != expected {
            let floats = bytes.len() / 4;
            let found = if rows > 0 && bytes.len() % 4 == 0 && floats % rows == 0 {
                format!("{} columns per row", floats / rows)
            } else {
                format!("{} bytes", bytes.len())
            };
            return Err(RuleError::DimMismatch(format!(
                "{file}: manifest dim {} x {rows} rows, file has {found}",
                spec.dim
            )));
        }
        let data = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        features.push(FeatureMatrix::new(spec.dim, data));
    }

    let file = format!("attributes_{s}.tsv");
    if dir.join(&file).exists() {
        for e in &mut entities {
            e.attribute_rows = vec![None; manifest.modalities.len()];
        }
        let text = read_text(dir, &file)?;
        for (line_no, line) in lines(&text) {
            let f = split_fields(&file, line_no, line, 3)?;
            let id = parse_usize(&file, line_no, f[0], "entity id")?;
            if id >= n {
                return Err(RuleError::data(&file, Some(line_no), format!("dangling entity index {id} (graph has {n})")));
            }
            let m = manifest
                .modalities
                .iter()
                .position(|spec| spec.name == f[1])
                .ok_or_else(|| RuleError::data(&file, Some(line_no), format!("unknown modality {:?}", f[1])))?;
            if f[2] != "-" {
                let row = parse_usize(&file, line_no, f[2], "row")?;
                if row >= features[m].rows() {
                    return Err(RuleError::data(
                        &file,
                        Some(line_no),
                        format!("row {row} beyond the {} rows of modality {}", features[m].rows(), f[1]),
                    ));
                }
                entities[id].attribute_rows[m] = Some(row);
            }
        }
    } else {
        for e in &mut entities {
            e.attribute_rows = features.iter().map(|f| (e.id < f.rows()).then_some(e.id)).collect();
        }
    }

    let file = format!("triples_{s}.tsv");
    let text = read_text(dir, &file)?;
    let mut triples = Vec::new();
    for (line_no, line) in lines(&text) {
        let f = split_fields(&file, line_no, line, 3)?;
        let t = Triple {
            head: parse_usize(&file, line_no, f[0], "head")?,
            relation: parse_usize(&file, line_no, f[1], "relation")?,
            tail: parse_usize(&file, line_no, f[2], "tail")?,
        };
        if t.head >= n || t.tail >= n {
            return Err(RuleError::data(
                &file,
                Some(line_no),
                format!("dangling entity index in {} {} {} (graph has {n})", t.head, t.relation, t.tail),
            ));
        }
        triples.push(t);
    }

    Ok(Graph {
        entities,
        triples,
        features,
    })
}

pub fn load_pair(dir: impl AsRef<Path>) -> Result<MMKGPair> {
    let dir = dir.as_ref();
    let manifest: Manifest = serde_json::from_str(&read_text(dir, "manifest.json")?)
        .map_err(|e| RuleError::data("manifest.json", Some(e.line()), e.to_string()))?;
    let left = load_graph(dir, Side::Left, manifest.n_left, &manifest)?;
    let right = load_graph(dir, Side::Right, manifest.n_right, &manifest)?;

    let file = "anchors.tsv";
    let text = read_text(dir, file)?;
    let mut anchors = Vec::new();
    for (line_no, line) in lines(&text) {
        let f = split_fields(file, line_no, line, 3)?;
        let a = AnchorPair {
            left: parse_usize(file, line_no, f[0], "left")?,
            right: parse_usize(file, line_no, f[1], "right")?,
            split: match f[2] {
                "train" => Split::Train,
                "test" => Split::Test,
                other => return Err(RuleError::data(file, Some(line_no), format!("unknown split {other:?}"))),
            },
        };
        if a.left >= manifest.n_left || a.right >= manifest.n_right {
            return Err(RuleError::data(
                file,
                Some(line_no),
                format!(
                    "dangling entity index {}/{} (graphs have {}/{} entities)",
                    a.left, a.right, manifest.n_left, manifest.n_right
                ),
            ));
        }
        anchors.push(a);
    }

    let modalities = manifest
        .modalities
        .iter()
        .map(|m| ModalitySpec {
            name: m.name.clone(),
            dim: m.dim,
        })
        .collect();
    let pair = MMKGPair::new(modalities, left, right, anchors, manifest.seed)?;
    let log = if dir.join("masks.json").exists() {
        serde_json::from_str::<CorruptionLog>(&read_text(dir, "masks.json")?)
            .map_err(|e| RuleError::data("masks.json", Some(e.line()), e.to_string()))?
    } else {
        pair.log.clone()
    };
    Ok(pair.with_log(log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, inject_noise, GenConfig, NoiseRatios};

    fn sample() -> MMKGPair {
        let p = generate_synthetic(&GenConfig {
            n: 40,
            clusters: 4,
            seed: 3,
            ..GenConfig::default()
        })
        .unwrap();
        inject_noise(&p, &NoiseRatios::uniform(0.3).into(), 1).unwrap()
    }

    #[test]
    fn save_then_load_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let pair = sample();
        save_pair(&pair, dir.path()).unwrap();
        let back = load_pair(dir.path()).unwrap();
        assert_eq!(pair, back);
    }

    #[test]
    fn short_feature_rows_are_a_dim_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let pair = sample();
        save_pair(&pair, dir.path()).unwrap();
        let spec = &pair.modalities()[1];
        let rows = pair.left().features[1].rows();
        let bytes: Vec<u8> = std::iter::repeat_n(0u8, rows * (spec.dim - 1) * 4).collect();
        fs::write(dir.path().join(spec.feature_file(Side::Left)), bytes).unwrap();
        match load_pair(dir.path()) {
            Err(RuleError::DimMismatch(msg)) => assert!(msg.contains(&format!("{} columns per row", spec.dim - 1)), "{msg}"),
            other => panic!("expected dim mismatch, got {other:?}"),
        }
    }

    #[test]
    fn dangling_anchor_is_reported_with_line() {
        let dir = tempfile::tempdir().unwrap();
        save_pair(&sample(), dir.path()).unwrap();
        let path = dir.path().join("anchors.tsv");
        let mut text = fs::read_to_string(&path).unwrap();
        text.push_str("999\t3\ttrain\n");
        fs::write(&path, text).unwrap();
        match load_pair(dir.path()) {
            Err(RuleError::Data { file, line, message }) => {
                assert_eq!(file, "anchors.tsv");
                assert_eq!(line, Some(41));
                assert!(message.contains("dangling"));
            }
            other => panic!("expected data error, got {other:?}"),
        }
    }

    #[test]
    fn missing_file_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        save_pair(&sample(), dir.path()).unwrap();
        fs::remove_file(dir.path().join("triples_right.tsv")).unwrap();
        match load_pair(dir.path()) {
            Err(RuleError::Data { file, .. }) => assert_eq!(file, "triples_right.tsv"),
            other => panic!("expected data error, got {other:?}"),
        }
    }
}
