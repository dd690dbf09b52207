//! The latent search `z = argmin L_c + L_p + L_g`.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, Matrix3xX};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::gan::{Discriminator, Generator};
use super::loss::{
    context_loss, context_loss_gradient, prior_loss, prior_loss_derivative, resolve_constraints, Constraint,
    DefiniteSurface,
};
use super::mask::{importance_weights, MaskImage};
use crate::error::{Error, Result};
use crate::fitting::{descend, FitConfig, Probe};
use crate::geometry::{Mesh, Point3};
use crate::model::code::GEOMETRY_DIM;
use crate::model::FaceModel;
use rayon::prelude::*;
use crate::render::RenderedImage;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InpaintSettings {
    pub lambda_p: f64,
    pub lambda_2: f64,
    /// Side of the importance-weight window.
    pub window: usize,
    pub max_iters: usize,
    /// Stop once an accepted step lowers the loss by less than this fraction.
    pub tolerance: f64,
    /// Length of the steepest-descent part of a step, in latent units.
    pub max_step: f64,
    /// Seed of the uniform starting latent.
    pub seed: u64,
}

impl Default for InpaintSettings {
    fn default() -> Self {
        Self {
            lambda_p: 0.1,
            lambda_2: 10.0,
            window: 7,
            max_iters: 300,
            tolerance: 1e-7,
            max_step: 1.0,
            seed: 0,
        }
    }
}

impl InpaintSettings {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda_p", self.lambda_p), ("lambda_2", self.lambda_2)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if self.window < 3 || self.window % 2 == 0 {
            return Err(Error::Config(format!("window must be odd and >= 3, got {}", self.window)));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::Config(format!("tolerance must be >= 0, got {}", self.tolerance)));
        }
        if !(self.max_step > 0.0 && self.max_step.is_finite()) {
            return Err(Error::Config(format!("max_step must be positive, got {}", self.max_step)));
        }
        Ok(())
    }
}

/// Corrupted image, mask, skull constraints and settings.
#[derive(Debug, Clone)]
pub struct InpaintProblem {
    pub y: RenderedImage,
    pub mask: MaskImage,
    pub constraints: Vec<Constraint>,
    pub definite: Option<DefiniteSurface>,
    pub settings: InpaintSettings,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub total: f64,
    pub context: f64,
    pub prior: f64,
    pub geometry: f64,
}

impl LossTerms {
    fn new(context: f64, prior: f64, geometry: f64) -> Self {
        Self {
            total: context + prior + geometry,
            context,
            prior,
            geometry,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub terms: LossTerms,
}

/// `iter,total,Lc,Lp,Lg` rows.
pub fn trace_csv(trace: &[TraceRow]) -> String {
    let mut out = String::from("iter,total,Lc,Lp,Lg\n");
    for r in trace {
        let t = &r.terms;
        let _ = writeln!(out, "{},{:.10e},{:.10e},{:.10e},{:.10e}", r.iter, t.total, t.context, t.prior, t.geometry);
    }
    out
}

#[derive(Debug, Clone)]
pub struct InpaintSolution {
    pub z0: Vec<f64>,
    pub z: Vec<f64>,
    /// `G(z)`.
    pub image: RenderedImage,
    /// Geometry code read back from the inpainted image.
    pub geometry: Vec<f64>,
    pub mesh: Mesh,
    pub terms: LossTerms,
    /// Loss terms at the start and after every accepted step.
    pub trace: Vec<TraceRow>,
    pub iterations: usize,
    pub converged: bool,
    /// Mean constraint distance (mm) of the final face, unweighted.
    pub mean_residual: f64,
}

/// Loss terms, gradient and the geometry residual system at one latent.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub terms: LossTerms,
    pub gradient: Vec<f64>,
    /// Gradient of the context and prior terms only.
    pub smooth_gradient: Vec<f64>,
    /// Jacobian of the geometry residuals in `z`.
    pub residual_jacobian: DMatrix<f64>,
    pub residuals: DVector<f64>,
    /// Number of three-row point constraints at the top of the residuals;
    /// each later row is one definite-surface distance.
    pub landmark_terms: usize,
}

/// Total loss of one problem for a given generator and discriminator.
pub struct Objective<'a> {
    problem: &'a InpaintProblem,
    generator: &'a dyn Generator,
    discriminator: &'a dyn Discriminator,
    model: &'a FaceModel,
    weights: Vec<f64>,
    targets: Vec<(usize, Point3)>,
    vertices: Vec<usize>,
}

/// Step for the readout fallback Jacobian.
const READOUT_FD_STEP: f64 = 1e-6;

impl<'a> Objective<'a> {
    pub fn new(
        problem: &'a InpaintProblem,
        generator: &'a dyn Generator,
        discriminator: &'a dyn Discriminator,
        model: &'a FaceModel,
    ) -> Result<Self> {
        problem.settings.validate()?;
        problem.mask.check_pairs_with(&problem.y)?;
        let weights = importance_weights(&problem.mask, problem.settings.window)?;
        let targets = resolve_constraints(model, &problem.constraints)?;
        let mut vertices: Vec<usize> = targets.iter().map(|t| t.0).collect();
        if let Some(d) = &problem.definite {
            if let Some(v) = d.vertices.iter().find(|&&v| v >= model.vertex_count()) {
                return Err(Error::InvalidInput(format!("definite vertex {v} is outside the model")));
            }
            vertices.extend(&d.vertices);
        }
        Ok(Self {
            problem,
            generator,
            discriminator,
            model,
            weights,
            targets,
            vertices,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Number of point and definite-surface distance terms.
    pub fn constraint_count(&self) -> usize {
        self.vertices.len()
    }

    /// Unweighted sum of the constraint distances of a geometry code.
    pub fn distance_sum(&self, geometry: &[f64]) -> Result<f64> {
        if self.vertices.is_empty() {
            return Ok(0.0);
        }
        let pts = self.model.evaluate_vertices(geometry, &self.vertices)?;
        let nt = self.targets.len();
        let mut sum: f64 = self.targets.iter().zip(&pts).map(|((_, t), p)| (p - t).norm()).sum();
        if let Some(d) = &self.problem.definite {
            sum += d.residuals(&pts[nt..]).iter().sum::<f64>();
        }
        Ok(sum)
    }

    fn geometry_term(&self, geometry: &[f64]) -> Result<f64> {
        Ok(self.problem.settings.lambda_2 * self.distance_sum(geometry)?)
    }

    /// Loss terms with `G(z)` already drawn as `img`.
    pub fn terms_for_image(&self, z: &[f64], img: &RenderedImage) -> Result<LossTerms> {
        let s = &self.problem.settings;
        let lc = context_loss(img, &self.problem.y, &self.weights)?;
        let lp = prior_loss(self.discriminator.score(img)?, s.lambda_p)?;
        let lg = self.geometry_term(&self.generator.readout(z)?)?;
        Ok(LossTerms::new(lc, lp, lg))
    }

    pub fn terms(&self, z: &[f64]) -> Result<LossTerms> {
        self.terms_for_image(z, &self.generator.generate(z)?)
    }

    fn readout_jacobian(&self, z: &[f64]) -> Result<DMatrix<f64>> {
        if let Some(j) = self.generator.readout_jacobian(z) {
            return Ok(j);
        }
        let mut j = DMatrix::zeros(GEOMETRY_DIM, z.len());
        for k in 0..z.len() {
            let mut p = z.to_vec();
            let mut m = z.to_vec();
            p[k] += READOUT_FD_STEP;
            m[k] -= READOUT_FD_STEP;
            let (gp, gm) = (self.generator.readout(&p)?, self.generator.readout(&m)?);
            for i in 0..GEOMETRY_DIM {
                j[(i, k)] = (gp[i] - gm[i]) / (2.0 * READOUT_FD_STEP);
            }
        }
        Ok(j)
    }

    /// Terms, gradient and geometry residual system at `z`.
    pub fn evaluate(&self, z: &[f64]) -> Result<Evaluation> {
        let s = &self.problem.settings;
        let dz = z.len();
        let img = self.generator.generate(z)?;
        let lc = context_loss(&img, &self.problem.y, &self.weights)?;
        let mut grad_pixels = context_loss_gradient(&img, &self.problem.y, &self.weights)?;
        let (d, d_grad) = self.discriminator.score_gradient(&img)?;
        let lp = prior_loss(d, s.lambda_p)?;
        let dlp = prior_loss_derivative(d, s.lambda_p)?;
        if dlp != 0.0 {
            for (g, h) in grad_pixels.iter_mut().zip(&d_grad) {
                *g += dlp * h;
            }
        }
        let (_, smooth) = self.generator.generate_vjp(z, &grad_pixels)?;
        let mut gradient = smooth.clone();

        let nt = self.targets.len();
        let nd = self.vertices.len() - nt;
        let mut rows = DMatrix::zeros(3 * nt + nd, dz);
        let mut residuals = DVector::zeros(3 * nt + nd);
        let mut lg = 0.0;
        if !self.vertices.is_empty() {
            let geometry = self.generator.readout(z)?;
            let a = self.readout_jacobian(z)?;
            let pts = self.model.evaluate_vertices(&geometry, &self.vertices)?;
            let jac: Vec<Matrix3xX<f64>> = self.model.jacobian_vertices(&geometry, &self.vertices)?;
            let lambda = s.lambda_2;
            let mut push = |row: usize, r: f64, j: DMatrix<f64>| {
                residuals[row] = r;
                rows.row_mut(row).copy_from(&j);
            };
            for (i, ((_, t), p)) in self.targets.iter().zip(&pts).enumerate() {
                let ja = &jac[i] * &a;
                let r = p - t;
                let n = r.norm();
                lg += n;
                if n > 0.0 {
                    let g = ja.tr_mul(&r) * (lambda / n);
                    for (acc, v) in gradient.iter_mut().zip(g.iter()) {
                        *acc += v;
                    }
                }
                for c in 0..3 {
                    push(3 * i + c, r[c], ja.rows(c, 1).into_owned());
                }
            }
            if let Some(def) = &self.problem.definite {
                for k in 0..nd {
                    let i = nt + k;
                    let proj = def.surface.project(&pts[i]);
                    let sd = proj.signed_distance - def.surface.offset();
                    lg += sd.abs();
                    let row = proj.direction.transpose() * (&jac[i] * &a);
                    if sd != 0.0 {
                        let scale = lambda * sd.signum();
                        for (acc, v) in gradient.iter_mut().zip(row.iter()) {
                            *acc += scale * v;
                        }
                    }
                    push(3 * nt + k, sd, DMatrix::from_row_slice(1, dz, row.as_slice()));
                }
            }
            lg *= lambda;
        }
        Ok(Evaluation {
            terms: LossTerms::new(lc, lp, lg),
            gradient,
            smooth_gradient: smooth,
            residual_jacobian: rows,
            residuals,
            landmark_terms: nt,
        })
    }

    /// Search direction at an evaluated point.
    ///
    /// Iteratively reweighted least squares on the distance terms: each
    /// distance `|r_i|` contributes `J_i^T J_i / |r_i|` to a metric, the
    /// context and prior terms contribute `|g_smooth| / max_step` times the
    /// identity, and the direction is `-H^-1 g`. Without geometry this is
    /// steepest descent scaled to `max_step`.
    pub fn direction(&self, ev: &Evaluation) -> Vec<f64> {
        let s = &self.problem.settings;
        let dz = ev.gradient.len();
        let g = DVector::from_column_slice(&ev.gradient);
        let smooth_norm = DVector::from_column_slice(&ev.smooth_gradient).norm();
        let mu = if smooth_norm > 0.0 { smooth_norm / s.max_step } else { 0.0 };
        let mut h = DMatrix::identity(dz, dz) * mu;
        if s.lambda_2 > 0.0 {
            let r = &ev.residuals;
            let j = &ev.residual_jacobian;
            let mut add = |rows: std::ops::Range<usize>| {
                let n = r.rows(rows.start, rows.len()).norm().max(IRLS_FLOOR);
                let block = j.rows(rows.start, rows.len());
                h += block.tr_mul(&block) * (s.lambda_2 / n);
            };
            for i in 0..ev.landmark_terms {
                add(3 * i..3 * i + 3);
            }
            for k in 3 * ev.landmark_terms..r.len() {
                add(k..k + 1);
            }
        }
        if h.iter().all(|v| *v == 0.0) {
            return vec![0.0; dz];
        }
        // tiny ridge keeps the factorization defined when the metric is singular
        let ridge = 1e-12 * (h.diagonal().max() + 1e-300);
        for i in 0..dz {
            h[(i, i)] += ridge;
        }
        match h.cholesky() {
            Some(c) => (-c.solve(&g)).as_slice().to_vec(),
            None => g.iter().map(|v| -v * s.max_step / g.norm().max(f64::MIN_POSITIVE)).collect(),
        }
    }
}

/// Mean constraint distance (mm) below which the geometry constraints count
/// as met. A face cannot sit exactly on an offset of a concave skull, so
/// the known face itself sits slightly above zero.
pub const GEOMETRY_ZERO_MM: f64 = 0.01;

/// Residual norms below this (mm) are clamped when weighting.
const IRLS_FLOOR: f64 = 1e-9;

/// Uniform `[-1, 1]` starting latent.
pub fn initial_latent(dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..dim).map(|_| rng.gen_range(-1.0..=1.0)).collect()
}

/// Searches the latent space from a seeded random start. Only steps that
/// lower the total loss are accepted.
pub fn solve(
    problem: &InpaintProblem,
    generator: &dyn Generator,
    discriminator: &dyn Discriminator,
    model: &FaceModel,
) -> Result<InpaintSolution> {
    let objective = Objective::new(problem, generator, discriminator, model)?;
    let s = &problem.settings;
    let z0 = initial_latent(generator.latent_dim(), s.seed);
    let cfg = FitConfig {
        max_iters: s.max_iters,
        tolerance: s.tolerance,
        abs_tolerance: f64::NEG_INFINITY,
        ..FitConfig::default()
    };
    let mut trace = Vec::new();
    let descent = descend(
        z0.clone(),
        &cfg,
        |z| objective.terms(z).ok().map(|t| t.total),
        |z| {
            let ev = objective.evaluate(z)?;
            trace.push(TraceRow {
                iter: trace.len(),
                terms: ev.terms,
            });
            let direction = objective.direction(&ev);
            Ok(Probe {
                loss: ev.terms.total,
                grad: ev.gradient,
                direction,
            })
        },
    )?;
    let z = descent.x;
    let image = generator.generate(&z)?;
    let terms = objective.terms_for_image(&z, &image)?;
    let geometry = generator.readout(&z)?;
    let mesh = model.evaluate_geometry(&geometry)?;
    let mean_residual = objective.distance_sum(&geometry)? / objective.constraint_count().max(1) as f64;
    Ok(InpaintSolution {
        mean_residual,
        z0,
        z,
        image,
        geometry,
        mesh,
        terms,
        trace,
        iterations: descent.accepted,
        converged: descent.converged,
    })
}
/// One solve per start seed, run in parallel; results keep `seeds` order.
pub fn solve_seeds<G, D>(
    problem: &InpaintProblem,
    generator: &G,
    discriminator: &D,
    model: &FaceModel,
    seeds: &[u64],
) -> Result<Vec<InpaintSolution>>
where
    G: Generator + Sync,
    D: Discriminator + Sync,
{
    seeds
        .par_iter()
        .map(|&seed| {
            let mut p = problem.clone();
            p.settings.seed = seed;
            solve(&p, generator, discriminator, model)
        })
        .collect()
}

