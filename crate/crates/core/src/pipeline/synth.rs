//! Synthetic datasets: a model, a known face with its skull, a depth table,
//! candidate faces, generator training codes and landmark files, plus a
//! config that points the other commands at them.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::SynthOptions;
use crate::error::{Error, Result};
use crate::fitting::{landmark_vertices, render_landmarks, REDUCED_IDS};
use crate::inpaint::{SceneConfig, SyntheticScene};
use crate::model::code::GEOMETRY_DIM;
use crate::model::io::write_model;
use crate::render::LandmarkDecoder;
use crate::superimpose::{superimpose, Alignment, TissueDepth, TissueDepthTable};
use crate::SemanticCodeVector;

/// Added to the dataset seed for the landmark-view cameras.
const VIEW_SEED_OFFSET: u64 = 1000;
/// Added to the dataset seed to pick the perturbed depth entries.
const PERTURB_SEED_OFFSET: u64 = 2000;
/// A perturbed depth moves this many thresholds outward.
const PERTURB_ETAS: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewRecord {
    pub file: String,
    /// Full semantic code the landmarks were rendered from.
    pub code: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbRecord {
    pub file: String,
    pub ids: Vec<u32>,
    /// Unmatched count of the known face under the perturbed table.
    pub unmatched: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub seed: u64,
    pub scene: SceneConfig,
    pub options: SynthOptions,
    pub view_seed: u64,
    pub truth_code: Vec<f64>,
    /// Score of the known face against its own skull.
    pub truth_score: f64,
    pub views: Vec<ViewRecord>,
    pub perturbed: Option<PerturbRecord>,
    pub files: Vec<String>,
}

pub fn codes_to_text(codes: &[Vec<f64>]) -> String {
    let mut out = String::from("# one geometry code per line\n");
    for c in codes {
        let row: Vec<String> = c.iter().map(f64::to_string).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    out
}

pub fn parse_codes(text: &str, path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| Error::parse(path, k + 1, "bad number"))?;
        if row.len() != GEOMETRY_DIM {
            return Err(Error::parse(path, k + 1, format!("expected {GEOMETRY_DIM} values, got {}", row.len())));
        }
        out.push(row);
    }
    Ok(out)
}

pub fn read_codes(path: &Path) -> Result<Vec<Vec<f64>>> {
    parse_codes(&std::fs::read_to_string(path)?, path)
}

/// `perturb` seeded entries pushed `PERTURB_ETAS` thresholds deeper.
pub fn perturbed_depths(depths: &TissueDepthTable, perturb: usize, seed: u64) -> Result<(TissueDepthTable, Vec<u32>)> {
    let ids: Vec<u32> = depths.ids().collect();
    if perturb > ids.len() {
        return Err(Error::Config(format!("cannot perturb {perturb} of {} depth entries", ids.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: Vec<u32> = sample(&mut rng, ids.len(), perturb).into_iter().map(|k| ids[k]).collect();
    chosen.sort_unstable();
    let mut entries = BTreeMap::new();
    for id in ids {
        let mut d = depths.get(id).expect("listed id");
        if chosen.contains(&id) {
            d = TissueDepth {
                depth: d.depth + PERTURB_ETAS * d.eta,
                eta: d.eta,
            };
        }
        entries.insert(id, d);
    }
    Ok((TissueDepthTable::new(entries)?, chosen))
}

fn config_text(opts: &SynthOptions, seed: u64, views: usize) -> String {
    let landmarks: Vec<String> = (0..views).map(|k| format!("landmarks/view_{k}.txt")).collect();
    format!(
        "# written by `craniofit synth`\nseed={seed}\nmodel=model.cfm\nskull=skull.obj\nskull_landmarks=skull_landmarks.txt\n\
         depths=depths.csv\ncandidates=candidates\nsegmentation=segmentation.txt\ntraining=training.txt\nlandmarks={}\n\
         fit.same_person=true\ninpaint.gan_seed={}\nsynth.vertices={}\nsynth.candidates={}\n",
        landmarks.join(","),
        SceneConfig::seeded(seed).gan_seed,
        opts.vertices,
        opts.candidates,
    )
}

/// Writes a dataset into `out` (created if missing). Same seed and options
/// give byte-identical files.
pub fn write_dataset(seed: u64, opts: &SynthOptions, out: &Path) -> Result<SynthManifest> {
    let scene_cfg = SceneConfig {
        vertices: opts.vertices,
        candidates: opts.candidates,
        ..SceneConfig::seeded(seed)
    };
    let scene = SyntheticScene::build(scene_cfg.clone())?;
    let truth_mesh = scene.truth_mesh()?;
    let truth_score = superimpose(&truth_mesh, &scene.model, &scene.skull, &scene.depths, Alignment::Identity)?.score;
    let perturbed = if opts.perturb > 0 {
        let (table, ids) = perturbed_depths(&scene.depths, opts.perturb, seed.wrapping_add(PERTURB_SEED_OFFSET))?;
        let r = superimpose(&truth_mesh, &scene.model, &scene.skull, &table, Alignment::Identity)?;
        Some((table, ids, r.unmatched))
    } else {
        None
    };

    std::fs::create_dir_all(out.join("candidates"))?;
    std::fs::create_dir_all(out.join("landmarks"))?;
    let mut files = Vec::new();
    let mut put = |name: &str| files.push(name.to_string());

    write_model(&scene.model, &out.join("model.cfm"))?;
    put("model.cfm");
    scene.segmentation.write(&out.join("segmentation.txt"))?;
    put("segmentation.txt");
    scene.skull.write(&out.join("skull.obj"), &out.join("skull_landmarks.txt"))?;
    put("skull.obj");
    put("skull_landmarks.txt");
    scene.depths.write(&out.join("depths.csv"))?;
    put("depths.csv");
    std::fs::write(out.join("training.txt"), codes_to_text(&scene.training))?;
    put("training.txt");
    truth_mesh.write_obj(&out.join("truth.obj"))?;
    put("truth.obj");
    for k in 0..scene.candidates.len() {
        let name = format!("candidates/cand_{k:03}.obj");
        scene.candidate_mesh(k)?.write_obj(&out.join(&name))?;
        put(&name);
    }
    if opts.inject_truth {
        truth_mesh.write_obj(&out.join("candidates/truth.obj"))?;
        put("candidates/truth.obj");
    }

    let view_seed = seed.wrapping_add(VIEW_SEED_OFFSET);
    let mut rng = ChaCha8Rng::seed_from_u64(view_seed);
    let dec = LandmarkDecoder::new(&scene.model, scene.intrinsics, landmark_vertices(&scene.model, &REDUCED_IDS)?)?;
    let mut views = Vec::new();
    for k in 0..opts.views {
        let mut x = SemanticCodeVector::from_geometry(&scene.truth)?;
        if k > 0 {
            x.cam_rotation_mut()[0] = rng.gen_range(-0.1..0.1);
            x.cam_rotation_mut()[1] = rng.gen_range(-0.3..0.3);
        }
        let name = format!("landmarks/view_{k}.txt");
        render_landmarks(&dec, &REDUCED_IDS, &x)?.write(&out.join(&name))?;
        put(&name);
        views.push(ViewRecord {
            file: name,
            code: x.as_slice().to_vec(),
        });
    }

    let perturbed = match perturbed {
        Some((table, ids, unmatched)) => {
            table.write(&out.join("depths_perturbed.csv"))?;
            put("depths_perturbed.csv");
            Some(PerturbRecord {
                file: "depths_perturbed.csv".into(),
                ids,
                unmatched,
            })
        }
        None => None,
    };
    std::fs::write(out.join("craniofit.cfg"), config_text(opts, seed, opts.views))?;
    put("craniofit.cfg");
    put("manifest.json");

    let manifest = SynthManifest {
        seed,
        scene: scene_cfg,
        options: opts.clone(),
        view_seed,
        truth_code: scene.truth.clone(),
        truth_score,
        views,
        perturbed,
        files,
    };
    std::fs::write(
        out.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_round_trip_exactly() {
        let codes = vec![(0..GEOMETRY_DIM).map(|i| (i as f64).sin() / 3.0).collect::<Vec<_>>(); 2];
        let back = parse_codes(&codes_to_text(&codes), Path::new("t")).unwrap();
        assert_eq!(back, codes);
        match parse_codes("# x\n1 2 3\n", Path::new("t")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn perturbation_picks_distinct_ids() {
        let d = TissueDepthTable::synthetic();
        let (p, ids) = perturbed_depths(&d, 4, 9).unwrap();
        assert_eq!(ids.len(), 4);
        for id in d.ids() {
            let shift = p.get(id).unwrap().depth - d.get(id).unwrap().depth;
            let expect = if ids.contains(&id) { PERTURB_ETAS * d.get(id).unwrap().eta } else { 0.0 };
            assert!((shift - expect).abs() < 1e-12);
        }
        assert!(perturbed_depths(&d, 99, 1).is_err());
    }
}
