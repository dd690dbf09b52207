//! Skull-face superimposition: extended landmarks from tissue depths,
//! match classification, the score S, candidate ranking and definite-region
//! constraints.

pub mod definite;
pub mod depth;
pub mod rank;
pub mod score;
pub mod skull;

use serde::Serialize;

pub use definite::{definite_region_landmarks, definite_region_vertices, DefiniteConstraint};
pub use depth::{TissueDepth, TissueDepthTable, DEFAULT_ETA, FOREHEAD_ID};
pub use rank::{candidate_order, format_ranking, rank_candidates, RankedCandidate};
pub use score::{
    extend_landmarks, format_percent, superimpose, superimpose_extended, Alignment, LandmarkMatch,
    SuperimpositionResult,
};
pub use skull::{skull_from_face, SkullAnnotation, SkullLandmark};

#[derive(Serialize)]
struct Report<'a> {
    score: f64,
    percent: String,
    matched: usize,
    unmatched: usize,
    landmarks: &'a [LandmarkMatch],
}

/// JSON report with per-landmark rows and the score as ratio and percentage.
pub fn report_json(result: &SuperimpositionResult) -> String {
    serde_json::to_string_pretty(&Report {
        score: result.score,
        percent: result.percent(),
        matched: result.matched,
        unmatched: result.unmatched,
        landmarks: &result.landmarks,
    })
    .expect("report serializes")
}
