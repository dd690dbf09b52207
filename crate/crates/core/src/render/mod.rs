//! Analytic differentiable image formation: pinhole camera, SH shading,
//! z-buffer rasterization, landmark forward/backward passes and the
//! canonical normalized render.

pub mod camera;
pub mod decoder;
pub mod io;
pub mod raster;
pub mod sh;

pub use camera::{Camera, CameraIntrinsics, Projection};
pub use decoder::{
    image_vjp, normalize_render, normalize_render_geometry, normalize_render_vjp, normalize_render_with_coverage, render, render_mesh, LandmarkDecoder,
    LandmarkFrame,
};
pub use raster::RenderedImage;
pub use sh::{shade, Illumination};
