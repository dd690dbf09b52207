//! A fully synthetic re-synthesis scene: model, face population, a known
//! face with the skull built under it, and candidate faces.

use serde::{Deserialize, Serialize};

use super::gan::{reference_gan, LatentPopulation, ReferenceDiscriminator, ReferenceGenerator};
use super::segmentation::Segmentation;
use crate::error::Result;
use crate::geometry::Mesh;
use crate::model::synth::{synthesize_model, BasisEnergy};
use crate::model::FaceModel;
use crate::render::camera::CameraIntrinsics;
use crate::superimpose::{skull_from_face, SkullAnnotation, TissueDepthTable};

/// Seeds and sizes of a [`SyntheticScene`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub model_seed: u64,
    pub vertices: usize,
    pub population_seed: u64,
    pub population_dim: usize,
    pub training_seed: u64,
    pub training_size: usize,
    pub gan_seed: u64,
    pub latent_dim: usize,
    pub truth_seed: u64,
    pub candidate_seed: u64,
    pub candidates: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            model_seed: 7,
            vertices: 642,
            population_seed: 11,
            population_dim: 32,
            training_seed: 12,
            training_size: 64,
            gan_seed: 13,
            latent_dim: 32,
            truth_seed: 14,
            candidate_seed: 15,
            candidates: 49,
        }
    }
}

impl SceneConfig {
    /// Same scene with every seed offset by `seed`.
    pub fn seeded(seed: u64) -> Self {
        let d = Self::default();
        Self {
            model_seed: d.model_seed + seed,
            population_seed: d.population_seed + seed,
            training_seed: d.training_seed + seed,
            gan_seed: d.gan_seed + seed,
            truth_seed: d.truth_seed + seed,
            candidate_seed: d.candidate_seed + seed,
            ..d
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub config: SceneConfig,
    pub model: FaceModel,
    pub intrinsics: CameraIntrinsics,
    pub segmentation: Segmentation,
    pub population: LatentPopulation,
    /// Geometry codes the reference generator is built from.
    pub training: Vec<Vec<f64>>,
    /// Geometry code of the face the skull was built under.
    pub truth: Vec<f64>,
    pub skull: SkullAnnotation,
    pub depths: TissueDepthTable,
    /// Geometry codes of other population members.
    pub candidates: Vec<Vec<f64>>,
}

impl SyntheticScene {
    pub fn build(config: SceneConfig) -> Result<Self> {
        let model = synthesize_model(config.model_seed, config.vertices, &BasisEnergy::default())?;
        let intrinsics = CameraIntrinsics::canonical(&model);
        let segmentation = Segmentation::synthetic(&model);
        let population = LatentPopulation::synthetic(config.population_seed, config.population_dim)?;
        let training = population.samples(config.training_seed, config.training_size);
        let truth = population.samples(config.truth_seed, 1).remove(0);
        let depths = TissueDepthTable::synthetic();
        let skull = skull_from_face(&model.evaluate_geometry(&truth)?, &model, &depths)?;
        let candidates = population.samples(config.candidate_seed, config.candidates);
        Ok(Self {
            config,
            model,
            intrinsics,
            segmentation,
            population,
            training,
            truth,
            skull,
            depths,
            candidates,
        })
    }

    pub fn truth_mesh(&self) -> Result<Mesh> {
        self.model.evaluate_geometry(&self.truth)
    }

    pub fn candidate_mesh(&self, k: usize) -> Result<Mesh> {
        self.model.evaluate_geometry(&self.candidates[k])
    }

    pub fn gan(&self) -> Result<(ReferenceGenerator<'_>, ReferenceDiscriminator)> {
        reference_gan(
            &self.model,
            self.intrinsics,
            &self.training,
            self.config.latent_dim,
            self.config.gan_seed,
        )
    }
}
