//! Step-by-step rethinking prompts and parsing of the scored answer.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// Which attribute kind a reasoner call rethinks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RethinkTarget {
    Image,
    Name,
}

impl RethinkTarget {
    /// Image-like modalities are rethought visually, every other
    /// non-structural modality through names. Structure is not rethought.
    pub fn for_modality(name: &str) -> Option<Self> {
        match name {
            crate::dataset::STRUCTURE => None,
            "image" | "visual" | "img" => Some(RethinkTarget::Image),
            _ => Some(RethinkTarget::Name),
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            RethinkTarget::Image => "[IMAGE SIMILARITY]",
            RethinkTarget::Name => "[NAME SIMILARITY]",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShortlistEntry {
    pub id: usize,
    pub name: String,
    pub prior: f64,
}

/// One call to the reasoner: rate `candidate` for `query` in light of the
/// shortlist and its prior similarities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RethinkRequest {
    pub query: usize,
    pub query_name: String,
    pub modality: String,
    pub target: RethinkTarget,
    pub shortlist: Vec<ShortlistEntry>,
    /// Position in `shortlist` of the candidate being rated.
    pub candidate: usize,
    /// Carry names and both rethinking sections.
    pub all_attributes: bool,
}

impl RethinkRequest {
    pub fn candidate_entry(&self) -> &ShortlistEntry {
        &self.shortlist[self.candidate]
    }
}

fn entity(id: usize, name: &str, with_name: bool) -> String {
    if with_name {
        format!("ID:{id} Name:{name}")
    } else {
        format!("ID:{id}")
    }
}

fn output_contract(tag: &str, letter: char) -> String {
    format!(
        "- [Output Format]: {tag} = {letter} out of 10, where {letter} is in range [0,1,2,3,4,5,6,7,8,9,10], \
         which represents the levels from VERY LOW to VERY HIGH. NOTICE: You MUST output strictly in this format: \
         {tag} = {letter} out of 10."
    )
}

pub fn build_prompt(req: &RethinkRequest) -> String {
    let cand = req.candidate_entry();
    let images = req.target == RethinkTarget::Image || req.all_attributes;
    let names = req.target == RethinkTarget::Name || req.all_attributes;
    let q = entity(req.query, &req.query_name, names);
    let c = entity(cand.id, &cand.name, names);
    let mut p = String::new();

    let given = match (images, names) {
        (true, true) => "names, images",
        (true, false) => "images",
        _ => "names",
    };
    let _ = writeln!(p, "Base Prompt:");
    let _ = writeln!(
        p,
        "- Help me align or match entities of different knowledge graphs according to the given {given} and prior retrieval results."
    );
    if images {
        let _ = writeln!(p, "[QUERY IMAGE] {q} <image:left/{}/{}>", req.modality, req.query);
        let _ = writeln!(p, "[CANDIDATE IMAGE] {c} <image:right/{}/{}>", req.modality, cand.id);
    } else {
        let _ = writeln!(p, "[QUERY] {q}");
        let _ = writeln!(p, "[CANDIDATE] {c}");
    }

    let _ = writeln!(p, "\nPrior Results:");
    let focus = match (images, names) {
        (true, true) => "visual and textual similarity of the given images and names, respectively",
        (true, false) => "visual similarity of the given images",
        _ => "textual similarity of the given names",
    };
    let _ = writeln!(p, "- Below are prior retrieval results focusing on {focus}.");
    let format = if names { "ID Name Similarity" } else { "ID Similarity" };
    let _ = writeln!(
        p,
        "- Candidate Entities List which may be aligned with QUERY Entity ({q}) are shown in the following list [Format: {format}]:"
    );
    let last = req.shortlist.len().saturating_sub(1);
    for (i, e) in req.shortlist.iter().enumerate() {
        let end = if i == last { '.' } else { ',' };
        if names {
            let _ = writeln!(p, "  - {} {} {:.2}{end}", e.id, e.name, e.prior);
        } else {
            let _ = writeln!(p, "  - {} {:.2}{end}", e.id, e.prior);
        }
    }

    if images {
        let _ = writeln!(p, "\nRethinking Image Similarity:");
        let _ = writeln!(p, "- The two provided images represent the query ({q}) and the candidate ({c}).");
        let _ = writeln!(
            p,
            "- Please evaluate the probability that the QUERY and the CANDIDATE belong to the same entity STEP BY STEP:"
        );
        let _ = writeln!(p, "- 1. Rethink the visual similarities based on the prior retrieval results and the given images.");
        let _ = writeln!(p, "- 2. Analyze the similarities of detailed visual contents between the provided images.");
        let _ = writeln!(p, "- 3. Consider the underlying connections between the given images.");
        let _ = writeln!(p, "{}", output_contract(RethinkTarget::Image.tag(), 'A'));
    }
    if names {
        let _ = writeln!(p, "\nRethinking Name Similarity:");
        let _ = writeln!(p, "- The two provided names represent the query ({q}) and the candidate ({c}).");
        if images {
            let _ = writeln!(
                p,
                "- Based on the prior retrieval results and the given names, identify the similarities between the query entity and candidate entity."
            );
        } else {
            let _ = writeln!(
                p,
                "- Please evaluate the probability that the QUERY and the CANDIDATE belong to the same entity STEP BY STEP:"
            );
            let _ = writeln!(p, "- 1. Rethink the textual similarities based on the prior retrieval results and the given names.");
            let _ = writeln!(p, "- 2. Analyze the similarities of spelling and wording between the provided names.");
            let _ = writeln!(p, "- 3. Consider the underlying connections between the given names.");
        }
        let letter = if images { 'B' } else { 'A' };
        let _ = writeln!(p, "{}", output_contract(RethinkTarget::Name.tag(), letter));
    }
    p
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MalformedOutput(pub String);

/// Extracts the score from `... = A out of 10`, preferring a statement on a
/// line carrying the target's tag and taking the last one otherwise.
pub fn parse_verdict(text: &str, target: RethinkTarget) -> Result<u8, MalformedOutput> {
    let mut tagged = None;
    let mut any = None;
    for line in text.lines() {
        for (pos, _) in line.match_indices("out of 10") {
            let before = line[..pos].trim_end();
            let digits_start = before.rfind(|c: char| !(c.is_ascii_digit() || c == '-')).map_or(0, |i| i + 1);
            let number = &before[digits_start..];
            if number.is_empty() || !before[..digits_start].trim_end().ends_with('=') {
                continue;
            }
            let value = number.parse::<i64>().ok();
            if line.contains(target.tag()) {
                tagged = Some(value);
            }
            any = Some(value);
        }
    }
    match tagged.or(any) {
        Some(Some(v)) if (0..=10).contains(&v) => Ok(v as u8),
        _ => Err(MalformedOutput(text.to_string())),
    }
}

/// `(o - 5) / 5`, mapping `0..=10` onto `[-1, 1]`.
pub fn normalize_score(o: u8) -> f64 {
    (o as f64 - 5.0) / 5.0
}
