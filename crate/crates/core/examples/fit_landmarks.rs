//! Fit the face model to landmarks rendered from a known face: one view on
//! its own, then three views sharing a single geometry.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use craniofit::fitting::{fit_multi, fit_single, landmark_vertices, render_landmarks, FitConfig, LandmarkSet, REDUCED_IDS};
use craniofit::inpaint::{SceneConfig, SyntheticScene};
use craniofit::render::decoder::canonical_geometry;
use craniofit::render::LandmarkDecoder;
use craniofit::SemanticCodeVector;

fn main() -> craniofit::Result<()> {
    let scene = SyntheticScene::build(SceneConfig::default())?;
    let m = &scene.model;
    let dec = LandmarkDecoder::new(m, scene.intrinsics, landmark_vertices(m, &REDUCED_IDS)?)?;
    let truth = SemanticCodeVector::from_geometry(&scene.truth)?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let views: Vec<LandmarkSet> = (0..3)
        .map(|_| {
            let mut x = truth.clone();
            x.cam_rotation_mut()[1] = rng.gen_range(-0.3..0.3);
            render_landmarks(&dec, &REDUCED_IDS, &x)
        })
        .collect::<craniofit::Result<_>>()?;
    let golden = m.evaluate_geometry(&canonical_geometry(&scene.truth))?;
    let cfg = FitConfig::default();
    let start = SemanticCodeVector::zeros();

    let single = fit_single(m, &scene.intrinsics, &views[0], &cfg, &start)?;
    let refit = render_landmarks(&dec, &REDUCED_IDS, &single.code)?;
    let mesh = m.evaluate_geometry(&canonical_geometry(single.code.geometry()))?;
    println!(
        "single view: rms {:.4} px, {} iterations, max deviation from the known face {:.2} mm",
        views[0].aligned_rms_distance(&refit)?,
        single.iterations,
        mesh.max_deviation(&golden)
    );

    let multi = fit_multi(m, &scene.intrinsics, &views, &cfg, &start)?;
    let mesh = m.evaluate_geometry(&canonical_geometry(&multi.geometry))?;
    println!(
        "three views: {} iterations, max deviation from the known face {:.2} mm",
        multi.iterations,
        mesh.max_deviation(&golden)
    );
    Ok(())
}
