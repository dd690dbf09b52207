//! Render the synthetic scene's known face in its canonical pose and write
//! colour and depth images.
//!
//!     cargo run --example render_face -- /tmp/face

use std::path::PathBuf;

use craniofit::inpaint::{SceneConfig, SyntheticScene};
use craniofit::render::decoder::normalize_render_geometry;
use craniofit::render::io::{depth_to_grey, write_pgm, write_ppm};

fn main() -> craniofit::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "render-out".into()));
    std::fs::create_dir_all(&out)?;
    let scene = SyntheticScene::build(SceneConfig::default())?;
    let img = normalize_render_geometry(&scene.model, &scene.truth, &scene.intrinsics)?;
    write_ppm(&out.join("face.ppm"), img.width, img.height, &img.pixels)?;
    write_pgm(&out.join("depth.pgm"), img.width, img.height, &depth_to_grey(&img.depth))?;
    println!(
        "{}x{} image, {} covered pixels, bbox {:?}",
        img.width,
        img.height,
        img.covered_count(),
        img.coverage_bbox()
    );
    println!("wrote {}", out.display());
    Ok(())
}
