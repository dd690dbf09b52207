//! Analysis-by-synthesis fitting of the semantic code to landmarks.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::landmarks::{landmark_vertices, LandmarkSet};
use super::loss::{edge_loss, edge_loss_gradient, FitConfig, LossBreakdown};
use super::optimize::{descend, Probe};
use crate::error::{Error, Result};
use crate::geometry::{delaunay, LandmarkGraph, Point2};
use crate::model::code::{CODE_DIM, GEOMETRY_DIM, RENDER_DIM};
use crate::model::FaceModel;
use crate::render::{CameraIntrinsics, LandmarkDecoder};
use crate::SemanticCodeVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub code: SemanticCodeVector,
    pub final_loss: f64,
    pub breakdown: LossBreakdown,
    pub iterations: usize,
    pub converged: bool,
    pub loss_trace: Vec<f64>,
}

/// Shared geometry plus one rendering block per image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiFitResult {
    pub geometry: Vec<f64>,
    pub renderings: Vec<Vec<f64>>,
    pub final_loss: f64,
    pub per_image: Vec<LossBreakdown>,
    pub iterations: usize,
    pub converged: bool,
    pub loss_trace: Vec<f64>,
    /// Independent per-image fits used to initialize the joint stage.
    pub stage1: Vec<FitResult>,
}

impl MultiFitResult {
    pub fn code(&self, image: usize) -> SemanticCodeVector {
        let mut x = SemanticCodeVector::from_geometry(&self.geometry).expect("geometry block length");
        x.set_rendering(&self.renderings[image]).expect("rendering block length");
        x
    }
}

/// Maps landmarks to a semantic code. The shipped implementation fits by
/// gradient descent; a learned regressor can implement the same trait.
pub trait Encoder {
    fn encode(&self, landmarks: &LandmarkSet) -> Result<SemanticCodeVector>;
}

pub struct FittingEncoder<'a> {
    pub model: &'a FaceModel,
    pub intrinsics: CameraIntrinsics,
    pub config: FitConfig,
    pub init: SemanticCodeVector,
}

impl Encoder for FittingEncoder<'_> {
    fn encode(&self, landmarks: &LandmarkSet) -> Result<SemanticCodeVector> {
        Ok(fit_single(self.model, &self.intrinsics, landmarks, &self.config, &self.init)?.code)
    }
}

/// One image's landmark term: graph frozen on the targets.
pub struct LandmarkTerm<'a> {
    pub targets: LandmarkSet,
    pub graph: LandmarkGraph,
    pub edge_targets: Vec<f64>,
    pub decoder: LandmarkDecoder<'a>,
}

impl<'a> LandmarkTerm<'a> {
    pub fn new(model: &'a FaceModel, intrinsics: &CameraIntrinsics, targets: &LandmarkSet) -> Result<Self> {
        let graph = delaunay(&targets.points)?;
        let edge_targets = graph.edge_lengths();
        let decoder = LandmarkDecoder::new(model, *intrinsics, landmark_vertices(model, &targets.ids)?)?;
        Ok(Self {
            targets: targets.clone(),
            graph,
            edge_targets,
            decoder,
        })
    }

    pub fn e_m(&self, x: &SemanticCodeVector) -> Result<f64> {
        let frame = self.decoder.forward_pixels(x)?;
        Ok(edge_loss(&self.graph, &self.edge_targets, &frame.pixels))
    }

    /// `E_m`, its gradient over the code, and the Jacobian of the edge lengths.
    pub fn e_m_gradient(&self, x: &SemanticCodeVector) -> Result<(f64, Vec<f64>, DMatrix<f64>)> {
        let (frame, jac) = self.decoder.jacobian(x, false)?;
        let e = edge_loss(&self.graph, &self.edge_targets, &frame.pixels);
        let gp = edge_loss_gradient(&self.graph, &self.edge_targets, &frame.pixels);
        let mut flat = DVector::zeros(jac.nrows());
        for (i, p) in gp.iter().enumerate() {
            flat[2 * i] = p.x;
            flat[2 * i + 1] = p.y;
        }
        let grad: Vec<f64> = (jac.transpose() * flat).iter().copied().collect();
        let mut edge_jac = DMatrix::zeros(self.graph.edges.len(), CODE_DIM);
        for (r, &(i, j)) in self.graph.edges.iter().enumerate() {
            let d: Point2 = frame.pixels[i] - frame.pixels[j];
            let len = d.norm();
            if len == 0.0 {
                continue;
            }
            let u = d / len;
            let row = (jac.row(2 * i) - jac.row(2 * j)) * u.x + (jac.row(2 * i + 1) - jac.row(2 * j + 1)) * u.y;
            edge_jac.row_mut(r).copy_from(&row);
        }
        Ok((e, grad, edge_jac))
    }
}

fn regularization_gradient(x: &[f64], w_r: f64) -> impl Iterator<Item = f64> + '_ {
    x[..GEOMETRY_DIM].iter().map(move |v| 2.0 * w_r * v)
}

/// Relative Levenberg damping added to the Gauss-Newton matrix.
const DAMPING: f64 = 1e-9;

/// Damped Gauss-Newton direction `-(H + mu I)^-1 g`; `None` if the solve fails.
fn gauss_newton_direction(mut h: DMatrix<f64>, grad: &[f64]) -> Option<Vec<f64>> {
    let n = h.nrows();
    let max = (0..n).map(|i| h[(i, i)]).fold(0.0, f64::max);
    let mu = DAMPING * max + 1e-12;
    for i in 0..n {
        h[(i, i)] += mu;
    }
    let chol = h.cholesky()?;
    let d = chol.solve(&DVector::from_column_slice(grad));
    Some(d.iter().map(|v| -v).collect())
}

/// Diagonal fallback when the Gauss-Newton solve fails.
fn diagonal_direction(h: &DMatrix<f64>, grad: &[f64]) -> Vec<f64> {
    let max = (0..h.nrows()).map(|i| h[(i, i)]).fold(0.0, f64::max);
    let floor = (1e-3 * max).max(1e-12);
    grad.iter().enumerate().map(|(i, g)| -g / h[(i, i)].max(floor)).collect()
}

fn probe(loss: f64, grad: Vec<f64>, h: DMatrix<f64>) -> Probe {
    let direction = gauss_newton_direction(h.clone(), &grad).unwrap_or_else(|| diagonal_direction(&h, &grad));
    Probe { loss, grad, direction }
}

/// Fits one image's landmarks, starting from `init`.
pub fn fit_single(
    model: &FaceModel,
    intrinsics: &CameraIntrinsics,
    landmarks: &LandmarkSet,
    cfg: &FitConfig,
    init: &SemanticCodeVector,
) -> Result<FitResult> {
    cfg.validate()?;
    let term = LandmarkTerm::new(model, intrinsics, landmarks)?;
    let code_of = |v: &[f64]| SemanticCodeVector::from_slice(v).expect("code length");
    let run = descend(
        init.as_slice().to_vec(),
        cfg,
        |v| {
            let x = code_of(v);
            term.e_m(&x).ok().map(|e| cfg.w_m * e + cfg.w_r * x.regularization())
        },
        |v| {
            let x = code_of(v);
            let (e, g, ej) = term.e_m_gradient(&x)?;
            let mut grad: Vec<f64> = g.iter().map(|gi| cfg.w_m * gi).collect();
            for (gi, r) in grad.iter_mut().zip(regularization_gradient(v, cfg.w_r)) {
                *gi += r;
            }
            let mut h = ej.transpose() * &ej * (2.0 * cfg.w_m);
            for i in 0..GEOMETRY_DIM {
                h[(i, i)] += 2.0 * cfg.w_r;
            }
            Ok(probe(cfg.w_m * e + cfg.w_r * x.regularization(), grad, h))
        },
    )?;
    let code = code_of(&run.x);
    let breakdown = LossBreakdown::new(term.e_m(&code)?, code.regularization(), cfg);
    Ok(FitResult {
        code,
        final_loss: breakdown.total,
        breakdown,
        iterations: run.accepted,
        converged: run.converged,
        loss_trace: run.trace,
    })
}

/// Multi-image fit with one shared geometry block.
///
/// Stage 1 fits every image independently from `init`; stage 2 starts from
/// the mean of their geometry blocks and their own rendering blocks and
/// minimizes `sum_j E_loss(G, R_j)` jointly.
pub fn fit_multi(
    model: &FaceModel,
    intrinsics: &CameraIntrinsics,
    sets: &[LandmarkSet],
    cfg: &FitConfig,
    init: &SemanticCodeVector,
) -> Result<MultiFitResult> {
    cfg.validate()?;
    if sets.is_empty() {
        return Err(Error::Empty("landmark set list"));
    }
    let stage1: Vec<FitResult> = sets
        .iter()
        .map(|s| fit_single(model, intrinsics, s, cfg, init))
        .collect::<Result<_>>()?;
    if sets.len() == 1 {
        let r = &stage1[0];
        return Ok(MultiFitResult {
            geometry: r.code.geometry().to_vec(),
            renderings: vec![r.code.rendering().to_vec()],
            final_loss: r.final_loss,
            per_image: vec![r.breakdown],
            iterations: r.iterations,
            converged: r.converged,
            loss_trace: r.loss_trace.clone(),
            stage1,
        });
    }
    let m = sets.len();
    let terms: Vec<LandmarkTerm> = sets
        .iter()
        .map(|s| LandmarkTerm::new(model, intrinsics, s))
        .collect::<Result<_>>()?;
    let dim = GEOMETRY_DIM + m * RENDER_DIM;
    let mut x0 = vec![0.0; dim];
    for r in &stage1 {
        for (a, b) in x0[..GEOMETRY_DIM].iter_mut().zip(r.code.geometry()) {
            *a += b / m as f64;
        }
    }
    for (j, r) in stage1.iter().enumerate() {
        x0[GEOMETRY_DIM + j * RENDER_DIM..GEOMETRY_DIM + (j + 1) * RENDER_DIM].copy_from_slice(r.code.rendering());
    }
    let code_j = |v: &[f64], j: usize| {
        let mut x = SemanticCodeVector::from_geometry(&v[..GEOMETRY_DIM]).expect("geometry");
        x.set_rendering(&v[GEOMETRY_DIM + j * RENDER_DIM..GEOMETRY_DIM + (j + 1) * RENDER_DIM])
            .expect("rendering");
        x
    };
    let reg = |v: &[f64]| v[..GEOMETRY_DIM].iter().map(|a| a * a).sum::<f64>();

    let block = |k: usize, j: usize| if k < GEOMETRY_DIM { k } else { GEOMETRY_DIM + j * RENDER_DIM + k - GEOMETRY_DIM };
    let run = descend(
        x0,
        cfg,
        |v| {
            let mut total = cfg.w_r * reg(v) * m as f64;
            for (j, t) in terms.iter().enumerate() {
                total += cfg.w_m * t.e_m(&code_j(v, j)).ok()?;
            }
            Some(total)
        },
        |v| {
            let mut grad = vec![0.0; dim];
            let mut total = cfg.w_r * reg(v) * m as f64;
            for (gi, r) in grad.iter_mut().zip(regularization_gradient(v, cfg.w_r)) {
                *gi += r * m as f64;
            }
            let mut h = DMatrix::zeros(dim, dim);
            for i in 0..GEOMETRY_DIM {
                h[(i, i)] += 2.0 * cfg.w_r * m as f64;
            }
            for (j, t) in terms.iter().enumerate() {
                let (e, g, ej) = t.e_m_gradient(&code_j(v, j))?;
                total += cfg.w_m * e;
                for (k, gk) in g.iter().enumerate() {
                    grad[block(k, j)] += cfg.w_m * gk;
                }
                let hj = ej.transpose() * &ej * (2.0 * cfg.w_m);
                for a in 0..CODE_DIM {
                    for b in 0..CODE_DIM {
                        h[(block(a, j), block(b, j))] += hj[(a, b)];
                    }
                }
            }
            Ok(probe(total, grad, h))
        },
    )?;
    let per_image: Vec<LossBreakdown> = terms
        .iter()
        .enumerate()
        .map(|(j, t)| {
            let x = code_j(&run.x, j);
            Ok(LossBreakdown::new(t.e_m(&x)?, x.regularization(), cfg))
        })
        .collect::<Result<_>>()?;
    Ok(MultiFitResult {
        geometry: run.x[..GEOMETRY_DIM].to_vec(),
        renderings: (0..m)
            .map(|j| run.x[GEOMETRY_DIM + j * RENDER_DIM..GEOMETRY_DIM + (j + 1) * RENDER_DIM].to_vec())
            .collect(),
        final_loss: per_image.iter().map(|b| b.total).sum(),
        per_image,
        iterations: run.accepted,
        converged: run.converged,
        loss_trace: run.trace,
        stage1,
    })
}
