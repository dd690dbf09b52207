//! Database ranking by superimposition score.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::depth::TissueDepthTable;
use super::score::{extend_landmarks, format_percent, superimpose_extended, Alignment, SuperimpositionResult};
use super::skull::SkullAnnotation;
use crate::error::{Error, Result};
use crate::geometry::Mesh;
use crate::model::FaceModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub id: String,
    pub score: f64,
    pub percent: String,
    pub mean_distance: f64,
    pub matched: usize,
    pub unmatched: usize,
}

impl RankedCandidate {
    fn from_result(id: &str, r: &SuperimpositionResult) -> Self {
        Self {
            id: id.to_string(),
            score: r.score,
            percent: r.percent(),
            mean_distance: r.mean_distance(),
            matched: r.matched,
            unmatched: r.unmatched,
        }
    }
}

/// Descending score, then ascending mean distance, then id.
pub fn candidate_order(a: &RankedCandidate, b: &RankedCandidate) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.mean_distance.total_cmp(&b.mean_distance))
        .then_with(|| a.id.cmp(&b.id))
}

/// Scores every candidate (in parallel) and sorts them.
pub fn rank_candidates(
    model: &FaceModel,
    skull: &SkullAnnotation,
    depths: &TissueDepthTable,
    candidates: &[(String, Mesh)],
    alignment: Alignment,
) -> Result<Vec<RankedCandidate>> {
    if candidates.is_empty() {
        return Err(Error::Empty("candidate list"));
    }
    let offenders: Vec<&str> = candidates
        .iter()
        .filter(|(_, m)| m.topology_id != model.topology_id() || m.vertex_count() != model.vertex_count())
        .map(|(id, _)| id.as_str())
        .collect();
    if !offenders.is_empty() {
        return Err(Error::InvalidInput(format!(
            "candidates not on model topology {:?}: {}",
            model.topology_id(),
            offenders.join(", ")
        )));
    }
    let extended = extend_landmarks(skull, depths)?;
    let mut ranked: Vec<RankedCandidate> = candidates
        .par_iter()
        .map(|(id, mesh)| {
            superimpose_extended(mesh, model, &extended, depths, alignment).map(|r| RankedCandidate::from_result(id, &r))
        })
        .collect::<Result<_>>()?;
    ranked.sort_by(candidate_order);
    Ok(ranked)
}

/// Plain-text ranking table.
pub fn format_ranking(ranked: &[RankedCandidate]) -> String {
    let mut out = String::from("rank\tid\tscore\tmatched\tunmatched\tmean_mm\n");
    for (k, c) in ranked.iter().enumerate() {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{:.3}\n",
            k + 1,
            c.id,
            format_percent(c.score),
            c.matched,
            c.unmatched,
            c.mean_distance
        ));
    }
    out
}
