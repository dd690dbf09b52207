//! Edge-length landmark loss `E_loss = w_m E_m + w_r E_r`.

use serde::{Deserialize, Serialize};

use super::landmarks::LandmarkSet;
use crate::error::{Error, Result};
use crate::geometry::{LandmarkGraph, Point2};
use crate::SemanticCodeVector;

/// Optimizer and loss settings for landmark fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub w_m: f64,
    pub w_r: f64,
    pub max_iters: usize,
    /// Stop when the accepted relative loss decrease falls below this.
    pub tolerance: f64,
    /// Stop when the loss itself falls to or below this.
    pub abs_tolerance: f64,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    /// Step shrink factor while backtracking.
    pub backtrack: f64,
    pub max_backtracks: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            w_m: 1.0,
            w_r: 1e-3,
            max_iters: 500,
            tolerance: 1e-6,
            abs_tolerance: 1e-12,
            armijo: 1e-4,
            backtrack: 0.5,
            max_backtracks: 40,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.w_m > 0.0) || !(self.w_r >= 0.0) || !self.w_m.is_finite() || !self.w_r.is_finite() {
            return Err(Error::Config(format!("need w_m > 0 and w_r >= 0, got {} and {}", self.w_m, self.w_r)));
        }
        if !(self.tolerance >= 0.0) || !(self.abs_tolerance >= 0.0) {
            return Err(Error::Config("tolerances must be non-negative".into()));
        }
        if !(self.armijo > 0.0 && self.armijo < 1.0) || !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::Config("armijo and backtrack must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub e_m: f64,
    pub e_r: f64,
}

impl LossBreakdown {
    pub fn new(e_m: f64, e_r: f64, cfg: &FitConfig) -> Self {
        Self {
            total: cfg.w_m * e_m + cfg.w_r * e_r,
            e_m,
            e_r,
        }
    }
}

/// `sum_e (|e| - |e'|)^2` over the graph's edges, `target` giving `|e|`.
pub fn edge_loss(graph: &LandmarkGraph, target: &[f64], points: &[Point2]) -> f64 {
    graph
        .edges
        .iter()
        .zip(target)
        .map(|(&(i, j), l)| {
            let d = (points[i] - points[j]).norm() - l;
            d * d
        })
        .sum()
}

/// Gradient of [`edge_loss`] with respect to `points`.
pub fn edge_loss_gradient(graph: &LandmarkGraph, target: &[f64], points: &[Point2]) -> Vec<Point2> {
    let mut g = vec![Point2::zeros(); points.len()];
    for (&(i, j), l) in graph.edges.iter().zip(target) {
        let e = points[i] - points[j];
        let len = e.norm();
        if len == 0.0 {
            continue;
        }
        let s = e * (2.0 * (len - l) / len);
        g[i] += s;
        g[j] -= s;
    }
    g
}

/// Weighted edge-length and regularization loss for target landmarks `p`,
/// predicted landmarks `p_prime` and the graph triangulated on `p`.
pub fn geometric_loss(
    p: &LandmarkSet,
    p_prime: &LandmarkSet,
    graph: &LandmarkGraph,
    code: &SemanticCodeVector,
    cfg: &FitConfig,
) -> Result<LossBreakdown> {
    if graph.points.len() != p.len() {
        return Err(Error::LengthMismatch {
            block: "landmark graph",
            expected: p.len(),
            got: graph.points.len(),
        });
    }
    let aligned = p_prime.select(&p.ids)?;
    let target = graph.edge_lengths();
    let e_m = edge_loss(graph, &target, &aligned.points);
    Ok(LossBreakdown::new(e_m, code.regularization(), cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fitting::landmarks::LandmarkSource;
    use crate::geometry::delaunay;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn set(points: Vec<Point2>) -> LandmarkSet {
        LandmarkSet::new(points.into_iter().enumerate().map(|(i, p)| (i as u32, p)).collect(), LandmarkSource::DetectedFile)
            .unwrap()
    }

    #[test]
    fn identical_sets_zero_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<Point2> = (0..46).map(|_| Point2::new(rng.gen_range(0.0..240.0), rng.gen_range(0.0..240.0))).collect();
        let p = set(pts);
        let g = delaunay(&p.points).unwrap();
        let l = geometric_loss(&p, &p, &g, &SemanticCodeVector::zeros(), &FitConfig::default()).unwrap();
        assert_eq!(l.total, 0.0);
    }

    #[test]
    fn single_edge_arithmetic() {
        let graph = LandmarkGraph {
            points: vec![Point2::zeros(), Point2::new(3.0, 0.0)],
            edges: vec![(0, 1)],
            triangles: vec![],
        };
        let p = set(graph.points.clone());
        let q = set(vec![Point2::zeros(), Point2::new(0.0, 5.0)]);
        let cfg = FitConfig {
            w_r: 0.0,
            ..FitConfig::default()
        };
        let l = geometric_loss(&p, &q, &graph, &SemanticCodeVector::zeros(), &cfg).unwrap();
        assert_eq!(l.e_m, 4.0);
        assert_eq!(l.total, 4.0);
    }

    #[test]
    fn missing_ids_listed() {
        let p = set(vec![Point2::zeros(), Point2::x(), Point2::y()]);
        let q = p.select(&[0, 1]).unwrap();
        let g = delaunay(&p.points).unwrap();
        match geometric_loss(&p, &q, &g, &SemanticCodeVector::zeros(), &FitConfig::default()) {
            Err(Error::MissingIds { ids }) => assert_eq!(ids, vec![2]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn total_is_weighted_sum() {
        let mut x = SemanticCodeVector::zeros();
        x.alpha_mut()[0] = 2.0;
        x.theta_mut()[4] = 1.0;
        x.gamma_mut()[0] = 9.0;
        let cfg = FitConfig {
            w_m: 2.0,
            w_r: 0.5,
            ..FitConfig::default()
        };
        let graph = LandmarkGraph {
            points: vec![Point2::zeros(), Point2::new(3.0, 0.0)],
            edges: vec![(0, 1)],
            triangles: vec![],
        };
        let p = set(graph.points.clone());
        let q = set(vec![Point2::zeros(), Point2::new(1.0, 0.0)]);
        let l = geometric_loss(&p, &q, &graph, &x, &cfg).unwrap();
        assert_eq!(l.e_r, 5.0);
        assert!((l.total - (2.0 * 4.0 + 0.5 * 5.0)).abs() < 1e-12);
    }
}
