//! Score faces against a skull: the known face, one unrelated candidate,
//! then a ranking of the whole candidate pool.

use craniofit::inpaint::{SceneConfig, SyntheticScene};
use craniofit::superimpose::{format_ranking, rank_candidates, report_json, superimpose, Alignment};

fn main() -> craniofit::Result<()> {
    let scene = SyntheticScene::build(SceneConfig {
        candidates: 9,
        ..SceneConfig::default()
    })?;
    let truth = scene.truth_mesh()?;
    let r = superimpose(&truth, &scene.model, &scene.skull, &scene.depths, Alignment::Identity)?;
    println!("known face: {} ({} matched, {} unmatched)", r.percent(), r.matched, r.unmatched);

    let other = scene.candidate_mesh(0)?;
    let r = superimpose(&other, &scene.model, &scene.skull, &scene.depths, Alignment::Auto)?;
    println!("candidate 0 with automatic alignment:\n{}", report_json(&r));

    let mut pool: Vec<(String, _)> =
        (0..scene.candidates.len()).map(|k| Ok((format!("cand_{k:03}"), scene.candidate_mesh(k)?))).collect::<craniofit::Result<_>>()?;
    pool.push(("truth".into(), truth));
    let ranked = rank_candidates(&scene.model, &scene.skull, &scene.depths, &pool, Alignment::Identity)?;
    print!("{}", format_ranking(&ranked));
    Ok(())
}
