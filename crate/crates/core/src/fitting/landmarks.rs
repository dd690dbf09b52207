//! 2D landmark sets and the fixed 66 -> 46 reduction.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::delaunay::{format_landmarks_2d, parse_landmarks_2d};
use crate::geometry::Point2;
use crate::model::FaceModel;
use crate::render::LandmarkDecoder;

/// Landmark ids kept after merging close pairs: every other jaw point, the
/// brows, the nose bridge ends and base, the eyes, and the outer mouth
/// without its interior upper/lower duplicates.
pub const REDUCED_IDS: [u32; 46] = [
    0, 2, 4, 6, 8, 10, 12, 14, 16, // jaw
    17, 18, 19, 20, 21, 22, 23, 24, 25, 26, // brows
    27, 28, 30, 31, 33, 35, // nose
    36, 37, 38, 39, 40, 41, 42, 43, 44, 45, 46, 47, // eyes
    48, 50, 51, 52, 54, 55, 56, 57, 58, // mouth
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LandmarkSource {
    DetectedFile,
    SyntheticRender,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSet {
    pub ids: Vec<u32>,
    pub points: Vec<Point2>,
    pub source: LandmarkSource,
}

impl LandmarkSet {
    pub fn new(pairs: Vec<(u32, Point2)>, source: LandmarkSource) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for (id, p) in &pairs {
            if !seen.insert(*id) {
                return Err(Error::InvalidInput(format!("landmark id {id} appears twice")));
            }
            if !p.x.is_finite() || !p.y.is_finite() {
                return Err(Error::InvalidInput(format!("landmark {id} is not finite")));
            }
        }
        let (ids, points) = pairs.into_iter().unzip();
        Ok(Self { ids, points, source })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, id: u32) -> Option<Point2> {
        self.ids.iter().position(|&i| i == id).map(|k| self.points[k])
    }

    /// Keeps the 46 reduced ids in table order; 46-point input passes through.
    pub fn reduce(&self) -> Result<LandmarkSet> {
        self.select(&REDUCED_IDS)
    }

    /// Points for `ids` in that order, or the list of ids that are missing.
    pub fn select(&self, ids: &[u32]) -> Result<LandmarkSet> {
        let index: HashMap<u32, usize> = self.ids.iter().enumerate().map(|(k, &i)| (i, k)).collect();
        let missing: Vec<u32> = ids.iter().filter(|i| !index.contains_key(i)).copied().collect();
        if !missing.is_empty() {
            return Err(Error::MissingIds { ids: missing });
        }
        Ok(LandmarkSet {
            ids: ids.to_vec(),
            points: ids.iter().map(|i| self.points[index[i]]).collect(),
            source: self.source,
        })
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let set = Self::new(parse_landmarks_2d(text, path)?, LandmarkSource::DetectedFile)
            .map_err(|e| Error::parse(path, 0, e.to_string()))?;
        if set.is_empty() {
            return Err(Error::parse(path, 0, "no landmarks"));
        }
        Ok(set)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?, path)
    }

    pub fn to_text(&self) -> String {
        let pairs: Vec<(u32, Point2)> = self.ids.iter().copied().zip(self.points.iter().copied()).collect();
        format_landmarks_2d(&pairs)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    /// RMS distance to another set over this set's ids.
    pub fn rms_distance(&self, other: &LandmarkSet) -> Result<f64> {
        let o = other.select(&self.ids)?;
        let ss: f64 = self.points.iter().zip(&o.points).map(|(a, b)| (a - b).norm_squared()).sum();
        Ok((ss / self.len().max(1) as f64).sqrt())
    }

    /// RMS distance after moving `other` by the in-plane rotation and
    /// translation that best aligns it to this set. The edge-length loss is
    /// blind to exactly this motion.
    pub fn aligned_rms_distance(&self, other: &LandmarkSet) -> Result<f64> {
        let o = other.select(&self.ids)?;
        let n = self.len().max(1) as f64;
        let ca = self.points.iter().fold(Point2::zeros(), |s, p| s + p) / n;
        let cb = o.points.iter().fold(Point2::zeros(), |s, p| s + p) / n;
        let (mut dot, mut cross) = (0.0, 0.0);
        for (a, b) in self.points.iter().zip(&o.points) {
            let (a, b) = (a - ca, b - cb);
            dot += a.x * b.x + a.y * b.y;
            cross += b.x * a.y - b.y * a.x;
        }
        let (s, c) = cross.atan2(dot).sin_cos();
        let ss: f64 = self
            .points
            .iter()
            .zip(&o.points)
            .map(|(a, b)| {
                let b = b - cb;
                let moved = Point2::new(c * b.x - s * b.y, s * b.x + c * b.y) + ca;
                (a - moved).norm_squared()
            })
            .sum();
        Ok((ss / n).sqrt())
    }
}

/// Model vertices of the given image landmark ids.
pub fn landmark_vertices(model: &FaceModel, ids: &[u32]) -> Result<Vec<usize>> {
    let missing: Vec<u32> = ids
        .iter()
        .filter(|&&i| i as usize >= model.image_landmarks.len())
        .copied()
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingIds { ids: missing });
    }
    Ok(ids.iter().map(|&i| model.image_landmarks[i as usize]).collect())
}

/// Landmarks of a rendered code, ids in `ids` order.
pub fn render_landmarks(decoder: &LandmarkDecoder, ids: &[u32], x: &crate::SemanticCodeVector) -> Result<LandmarkSet> {
    let frame = decoder.forward_pixels(x)?;
    if frame.pixels.len() != ids.len() {
        return Err(Error::LengthMismatch {
            block: "landmark ids",
            expected: frame.pixels.len(),
            got: ids.len(),
        });
    }
    Ok(LandmarkSet {
        ids: ids.to_vec(),
        points: frame.pixels,
        source: LandmarkSource::SyntheticRender,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reduction_table_is_46_unique_ids_below_66() {
        let set: BTreeSet<u32> = REDUCED_IDS.iter().copied().collect();
        assert_eq!(set.len(), 46);
        assert!(REDUCED_IDS.iter().all(|&i| i < 66));
    }

    #[test]
    fn reduce_from_66_and_report_missing() {
        let pairs: Vec<(u32, Point2)> = (0..66).map(|i| (i, Point2::new(i as f64, 2.0 * i as f64))).collect();
        let full = LandmarkSet::new(pairs, LandmarkSource::DetectedFile).unwrap();
        let r = full.reduce().unwrap();
        assert_eq!(r.len(), 46);
        assert_eq!(r.get(58), Some(Point2::new(58.0, 116.0)));
        let partial = full.select(&[0, 1, 2]).unwrap();
        match partial.reduce() {
            Err(Error::MissingIds { ids }) => assert_eq!(ids.len(), 44),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn aligned_rms_removes_rigid_motion() {
        let pairs: Vec<(u32, Point2)> = (0..10).map(|i| (i, Point2::new((i * i) as f64, (3 * i) as f64 - 7.0))).collect();
        let a = LandmarkSet::new(pairs.clone(), LandmarkSource::DetectedFile).unwrap();
        let (s, c) = 0.7f64.sin_cos();
        let moved = pairs
            .iter()
            .map(|&(i, p)| (i, Point2::new(c * p.x - s * p.y + 12.0, s * p.x + c * p.y - 4.0)))
            .collect();
        let b = LandmarkSet::new(moved, LandmarkSource::DetectedFile).unwrap();
        assert!(a.rms_distance(&b).unwrap() > 1.0);
        assert!(a.aligned_rms_distance(&b).unwrap() < 1e-9);
        assert!(b.aligned_rms_distance(&a).unwrap() < 1e-9);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let pairs = vec![(1, Point2::zeros()), (1, Point2::x())];
        assert!(LandmarkSet::new(pairs, LandmarkSource::DetectedFile).is_err());
    }

    #[test]
    fn malformed_line_cites_line_number() {
        let err = LandmarkSet::parse("0 1 2\n1 3\n", Path::new("lm.txt")).unwrap_err();
        assert!(err.to_string().contains("lm.txt:2"), "{err}");
    }
}
