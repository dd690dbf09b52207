//! Binary known/missing masks and the context importance weights.

use std::collections::BTreeSet;
use std::path::Path;

use super::segmentation::Segmentation;
use crate::error::{Error, Result};
use crate::model::FaceModel;
use crate::render::camera::CameraIntrinsics;
use crate::render::decoder::normalize_render_geometry;
use crate::render::io::{read_pgm, write_pgm};
use crate::render::RenderedImage;

/// `known[i]` is true where pixel `i` of the paired image is trusted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskImage {
    pub width: usize,
    pub height: usize,
    pub known: Vec<bool>,
}

impl MaskImage {
    pub fn all_known(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            known: vec![true; width * height],
        }
    }

    pub fn missing_count(&self) -> usize {
        self.known.iter().filter(|k| !**k).count()
    }

    pub fn check_pairs_with(&self, img: &RenderedImage) -> Result<()> {
        if (self.width, self.height) != (img.width, img.height) {
            return Err(Error::InvalidInput(format!(
                "mask is {}x{}, image is {}x{}",
                self.width, self.height, img.width, img.height
            )));
        }
        Ok(())
    }

    /// White = known.
    pub fn write(&self, path: &Path) -> Result<()> {
        let grey: Vec<f64> = self.known.iter().map(|&k| if k { 1.0 } else { 0.0 }).collect();
        write_pgm(path, self.width, self.height, &grey)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let (width, height, grey) = read_pgm(path)?;
        Ok(Self {
            width,
            height,
            known: grey.iter().map(|&g| g >= 0.5).collect(),
        })
    }
}

/// Canonical render of `geometry` and the mask that hides every pixel drawn
/// by a triangle lying wholly inside the removed regions.
pub fn build_mask(
    model: &FaceModel,
    geometry: &[f64],
    removed: &BTreeSet<usize>,
    seg: &Segmentation,
    intrinsics: &CameraIntrinsics,
) -> Result<(RenderedImage, MaskImage)> {
    if seg.labels.len() != model.vertex_count() {
        return Err(Error::InvalidInput(format!(
            "segmentation labels {} vertices, model has {}",
            seg.labels.len(),
            model.vertex_count()
        )));
    }
    let y = normalize_render_geometry(model, geometry, intrinsics)?;
    let tris = &model.mean.triangles;
    let dropped: Vec<bool> = tris.iter().map(|t| t.iter().all(|&v| removed.contains(&seg.labels[v]))).collect();
    let known = y.coverage.iter().map(|c| !c.is_some_and(|t| dropped[t as usize])).collect();
    let mask = MaskImage {
        width: y.width,
        height: y.height,
        known,
    };
    Ok((y, mask))
}

/// Per-pixel weight: the fraction of missing pixels in the clipped
/// `window x window` neighbourhood (centre excluded) for known pixels, zero
/// for missing ones (and for a pixel with no neighbours at all).
pub fn importance_weights(mask: &MaskImage, window: usize) -> Result<Vec<f64>> {
    if window < 3 || window % 2 == 0 {
        return Err(Error::Config(format!("window must be odd and >= 3, got {window}")));
    }
    let (w, h) = (mask.width, mask.height);
    let r = window / 2;
    // summed-area table of missing pixels
    let stride = w + 1;
    let mut sat = vec![0u32; stride * (h + 1)];
    for y in 0..h {
        for x in 0..w {
            sat[(y + 1) * stride + x + 1] =
                u32::from(!mask.known[y * w + x]) + sat[y * stride + x + 1] + sat[(y + 1) * stride + x] - sat[y * stride + x];
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let (y0, y1) = (y.saturating_sub(r), (y + r + 1).min(h));
        for x in 0..w {
            if !mask.known[y * w + x] {
                continue;
            }
            let (x0, x1) = (x.saturating_sub(r), (x + r + 1).min(w));
            let missing = sat[y1 * stride + x1] + sat[y0 * stride + x0] - sat[y0 * stride + x1] - sat[y1 * stride + x0];
            let count = (y1 - y0) * (x1 - x0) - 1;
            if count > 0 {
                out[y * w + x] = f64::from(missing) / count as f64;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inpaint::segmentation::REGION_NAMES;
    use crate::model::synth::{synthesize_model, BasisEnergy};
    use crate::model::code::GEOMETRY_DIM;
    use crate::render::raster::barycentric;
    use crate::geometry::Point2;
    use proptest::prelude::*;

    fn naive_weights(mask: &MaskImage, window: usize) -> Vec<f64> {
        let r = (window / 2) as i64;
        let (w, h) = (mask.width as i64, mask.height as i64);
        let mut out = Vec::new();
        for y in 0..h {
            for x in 0..w {
                if !mask.known[(y * w + x) as usize] {
                    out.push(0.0);
                    continue;
                }
                let (mut n, mut miss) = (0, 0);
                for dy in -r..=r {
                    for dx in -r..=r {
                        let (xx, yy) = (x + dx, y + dy);
                        if (dx, dy) == (0, 0) || xx < 0 || yy < 0 || xx >= w || yy >= h {
                            continue;
                        }
                        n += 1;
                        if !mask.known[(yy * w + xx) as usize] {
                            miss += 1;
                        }
                    }
                }
                out.push(if n == 0 { 0.0 } else { miss as f64 / n as f64 });
            }
        }
        out
    }

    fn random_mask(w: usize, h: usize, bits: &[bool]) -> MaskImage {
        MaskImage {
            width: w,
            height: h,
            known: bits.iter().cycle().take(w * h).copied().collect(),
        }
    }

    #[test]
    fn no_holes_no_weight() {
        let m = MaskImage::all_known(9, 7);
        assert!(importance_weights(&m, 3).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn half_missing_neighbours() {
        let mut m = MaskImage::all_known(5, 5);
        for i in [6, 7, 8, 11] {
            m.known[i] = false;
        }
        let w = importance_weights(&m, 3).unwrap();
        assert_eq!(w[12], 0.5);
        assert_eq!(w[6], 0.0);
    }

    #[test]
    fn bad_windows_rejected() {
        let m = MaskImage::all_known(5, 5);
        for k in [0, 1, 2, 4] {
            assert!(matches!(importance_weights(&m, k), Err(Error::Config(_))));
        }
    }

    proptest! {
        #[test]
        fn weights_match_double_loop(w in 1usize..20, h in 1usize..20, bits in prop::collection::vec(any::<bool>(), 1..64), k in 1usize..5) {
            let mask = random_mask(w, h, &bits);
            let window = 2 * k + 1;
            let fast = importance_weights(&mask, window).unwrap();
            let slow = naive_weights(&mask, window);
            for (a, b) in fast.iter().zip(&slow) {
                prop_assert!((a - b).abs() < 1e-15);
            }
            // zero on holes and on known pixels with a fully known window
            for (i, v) in fast.iter().enumerate() {
                if !mask.known[i] { prop_assert_eq!(*v, 0.0); }
                prop_assert!((0.0..=1.0).contains(v));
            }
        }
    }

    fn setup() -> (FaceModel, Segmentation, CameraIntrinsics) {
        let model = synthesize_model(2, 642, &BasisEnergy::default()).unwrap();
        let seg = Segmentation::synthetic(&model);
        let intr = CameraIntrinsics::canonical(&model);
        (model, seg, intr)
    }

    #[test]
    fn empty_and_full_removal() {
        let (model, seg, intr) = setup();
        let g = vec![0.0; GEOMETRY_DIM];
        let (y, m) = build_mask(&model, &g, &BTreeSet::new(), &seg, &intr).unwrap();
        assert_eq!(m.missing_count(), 0);
        let all: BTreeSet<usize> = (0..REGION_NAMES.len()).collect();
        let (_, m) = build_mask(&model, &g, &all, &seg, &intr).unwrap();
        for (k, c) in m.known.iter().zip(&y.coverage) {
            assert_eq!(*k, c.is_none());
        }
    }

    #[test]
    fn nose_mask_matches_independent_coverage() {
        let (model, seg, intr) = setup();
        let g = vec![0.0; GEOMETRY_DIM];
        let nose = seg.region_index("nose").unwrap();
        let (y, m) = build_mask(&model, &g, &BTreeSet::from([nose]), &seg, &intr).unwrap();
        assert!(m.missing_count() > 0);

        // independent pass: per-pixel nearest fragment over all triangles
        let mesh = model.evaluate_geometry(&g).unwrap();
        let cam = intr.rest_camera();
        let proj: Vec<_> = mesh.vertices.iter().map(|p| cam.project(p).unwrap()).collect();
        let mut best = vec![(f64::INFINITY, usize::MAX); y.pixel_count()];
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let [a, b, c] = tri.map(|v| proj[v]);
            let xs = [a.pixel.x, b.pixel.x, c.pixel.x];
            let ys = [a.pixel.y, b.pixel.y, c.pixel.y];
            let x0 = xs.iter().cloned().fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
            let x1 = (xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max).ceil() as usize).min(y.width - 1);
            let y0 = ys.iter().cloned().fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
            let y1 = (ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max).ceil() as usize).min(y.height - 1);
            for py in y0..=y1 {
                for px in x0..=x1 {
                    let p = Point2::new(px as f64 + 0.5, py as f64 + 0.5);
                    if let Some(w) = barycentric(&a.pixel, &b.pixel, &c.pixel, &p).filter(|w| w.iter().all(|v| *v >= 0.0)) {
                        let d = w[0] * a.depth + w[1] * b.depth + w[2] * c.depth;
                        let i = py * y.width + px;
                        if d < best[i].0 {
                            best[i] = (d, t);
                        }
                    }
                }
            }
        }
        let expected = best
            .iter()
            .filter(|(_, t)| *t != usize::MAX && mesh.triangles[*t].iter().all(|&v| seg.labels[v] == nose))
            .count();
        assert_eq!(m.missing_count(), expected);
    }

    #[test]
    fn mask_round_trips_through_pgm() {
        let dir = tempfile::tempdir().unwrap();
        let mask = random_mask(6, 4, &[true, false, false, true, true]);
        let p = dir.path().join("m.pgm");
        mask.write(&p).unwrap();
        assert_eq!(MaskImage::read(&p).unwrap(), mask);
    }
}
