//! # craniofit
//!
//! Skull-guided 3D face reconstruction at desk scale.
//!
//! The pipeline has three steps:
//!
//! 1. **Reconstruct**: fit a parametric face model to 2D landmarks through an
//!    analytic, differentiable image-formation model ([`fitting`], [`render`]).
//! 2. **Superimpose**: grow extended landmarks from a skull using tissue
//!    depths and score candidate faces against them ([`superimpose`]).
//! 3. **Re-synthesize**: remove poorly matched face regions and refill them by
//!    optimizing a generator's latent code under context, prior and skull
//!    geometry losses ([`inpaint`]).
//!
//! [`pipeline`] strings the steps together and owns the on-disk formats used by
//! the `craniofit` binary.

pub mod error;
pub mod fitting;
pub mod geometry;
pub mod gradcheck;
pub mod inpaint;
pub mod model;
pub mod pipeline;
pub mod render;
pub mod superimpose;

pub use error::{Error, Result};
pub use geometry::{Mesh, Point2, Point3};
pub use model::{FaceModel, SemanticCodeVector};
