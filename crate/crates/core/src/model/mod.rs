//! The parametric face model `M(alpha, delta, theta)` and the semantic code vector.

pub mod code;
pub mod face_model;
pub mod io;
pub mod synth;

pub use code::SemanticCodeVector;
pub use face_model::{FaceModel, Joint};
pub use io::{read_model, write_model};
pub use synth::{synthesize_model, BasisEnergy};
