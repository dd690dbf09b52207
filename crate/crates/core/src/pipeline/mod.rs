//! The three-step pipeline as commands: `fit`, `rank`, `resynth`, plus
//! `gradcheck` and `synth`. Every command loads and checks all of its
//! inputs before it writes anything.

pub mod config;
pub mod synth;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use config::{PipelineConfig, SynthOptions};
pub use synth::{codes_to_text, parse_codes, perturbed_depths, read_codes, write_dataset, SynthManifest};

use crate::error::{Error, Result};
use crate::fitting::{fit_multi, fit_single, landmark_vertices, render_landmarks, LandmarkSet, LossBreakdown};
use crate::geometry::Mesh;
use crate::gradcheck::{run_gradcheck, GradcheckOptions, GradcheckReport};
use crate::inpaint::{
    build_mask, reference_gan, select_unmatched_regions, skull_constraints, solve_seeds, trace_csv, write_bundle,
    InpaintProblem, LossTerms, Segmentation, GEOMETRY_ZERO_MM,
};
use crate::model::io::read_model;
use crate::model::FaceModel;
use crate::render::decoder::canonical_geometry;
use crate::render::io::write_ppm;
use crate::render::{CameraIntrinsics, LandmarkDecoder};
use crate::superimpose::{
    format_ranking, rank_candidates, superimpose, Alignment, RankedCandidate, SkullAnnotation, TissueDepthTable,
};
use crate::SemanticCodeVector;

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report serializes")
}

fn write_text(out: &Path, name: &str, text: &str, artifacts: &mut BTreeMap<String, PathBuf>) -> Result<()> {
    let p = out.join(name);
    std::fs::write(&p, text)?;
    artifacts.insert(name.to_string(), p);
    Ok(())
}

fn load_model(cfg: &PipelineConfig) -> Result<FaceModel> {
    read_model(cfg.require("model", &cfg.model)?)
}

fn load_skull(cfg: &PipelineConfig) -> Result<SkullAnnotation> {
    SkullAnnotation::read(
        cfg.require("skull", &cfg.skull)?,
        cfg.require("skull_landmarks", &cfg.skull_landmarks)?,
    )
}

fn load_depths(cfg: &PipelineConfig, model: &FaceModel) -> Result<TissueDepthTable> {
    let mut t = TissueDepthTable::read(cfg.require("depths", &cfg.depths)?)?;
    if let Some(eta) = cfg.eta {
        t = t.with_eta(eta)?;
    }
    t.check_ids(model)?;
    Ok(t)
}

/// Every `.obj` in `dir`, sorted by file name; ids are the file stems.
pub fn load_candidates(dir: &Path) -> Result<Vec<(String, Mesh)>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "obj"));
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Empty("candidate directory"));
    }
    paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p)?;
            let topology = Mesh::obj_topology_hint(&text).unwrap_or("unknown").to_string();
            let id = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            Ok((id, Mesh::parse_obj(&text, p, &topology)?))
        })
        .collect()
}

// ---------------------------------------------------------------- fit

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitImageReport {
    pub file: PathBuf,
    /// RMS landmark distance after the in-plane alignment, in pixels.
    pub rms_px: f64,
    pub breakdown: LossBreakdown,
    pub rendering: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// `single`, `multi` (one shared geometry) or `independent`.
    pub mode: String,
    pub images: Vec<FitImageReport>,
    /// One geometry block per written mesh.
    pub geometry: Vec<Vec<f64>>,
    pub meshes: Vec<PathBuf>,
    pub iterations: usize,
    pub converged: bool,
    pub seconds: f64,
}

/// Fits the landmark files; several files with `same_person` share one
/// geometry block. Meshes are written in the canonical head pose.
pub fn cmd_fit(cfg: &PipelineConfig, out: &Path) -> Result<FitReport> {
    let start = Instant::now();
    if cfg.landmarks.is_empty() {
        return Err(Error::Config("no landmark files given".into()));
    }
    let model = load_model(cfg).map_err(|e| e.in_stage("load"))?;
    let sets = cfg
        .landmarks
        .iter()
        .map(|p| LandmarkSet::read(p))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.in_stage("load"))?;
    for s in &sets {
        landmark_vertices(&model, &s.ids).map_err(|e| e.in_stage("load"))?;
    }
    std::fs::create_dir_all(out)?;

    let intr = CameraIntrinsics::canonical(&model);
    let init = SemanticCodeVector::zeros();
    let rms = |set: &LandmarkSet, x: &SemanticCodeVector| -> Result<f64> {
        let dec = LandmarkDecoder::new(&model, intr, landmark_vertices(&model, &set.ids)?)?;
        set.aligned_rms_distance(&render_landmarks(&dec, &set.ids, x)?)
    };
    let (mode, codes, breakdowns, iterations, converged, geometry) = if sets.len() > 1 && cfg.same_person {
        let r = fit_multi(&model, &intr, &sets, &cfg.fit, &init).map_err(|e| e.in_stage("fit"))?;
        let codes: Vec<SemanticCodeVector> = (0..sets.len()).map(|k| r.code(k)).collect();
        ("multi", codes, r.per_image.clone(), r.iterations, r.converged, vec![r.geometry.clone()])
    } else {
        let fits = sets
            .iter()
            .map(|s| fit_single(&model, &intr, s, &cfg.fit, &init))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| e.in_stage("fit"))?;
        let mode = if fits.len() == 1 { "single" } else { "independent" };
        (
            mode,
            fits.iter().map(|f| f.code.clone()).collect(),
            fits.iter().map(|f| f.breakdown).collect(),
            fits.iter().map(|f| f.iterations).sum(),
            fits.iter().all(|f| f.converged),
            fits.iter().map(|f| f.code.geometry().to_vec()).collect(),
        )
    };
    let mut meshes = Vec::new();
    for (k, g) in geometry.iter().enumerate() {
        let name = if geometry.len() == 1 { "mesh.obj".to_string() } else { format!("mesh_{k}.obj") };
        let p = out.join(name);
        model.evaluate_geometry(&canonical_geometry(g))?.write_obj(&p)?;
        meshes.push(p);
    }
    let images = sets
        .iter()
        .zip(&codes)
        .zip(&breakdowns)
        .zip(&cfg.landmarks)
        .map(|(((s, x), b), file)| {
            Ok(FitImageReport {
                file: file.clone(),
                rms_px: rms(s, x)?,
                breakdown: *b,
                rendering: x.rendering().to_vec(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let report = FitReport {
        mode: mode.into(),
        images,
        geometry,
        meshes,
        iterations,
        converged,
        seconds: start.elapsed().as_secs_f64(),
    };
    std::fs::write(out.join("fit_report.json"), json(&report))?;
    Ok(report)
}

// --------------------------------------------------------------- rank

/// Scores every candidate against the skull; writes `ranking.txt` and
/// `ranking.json`.
pub fn cmd_rank(cfg: &PipelineConfig, out: &Path) -> Result<Vec<RankedCandidate>> {
    let (model, skull, depths, candidates) = (|| -> Result<_> {
        let model = load_model(cfg)?;
        let skull = load_skull(cfg)?;
        let depths = load_depths(cfg, &model)?;
        let candidates = load_candidates(cfg.require("candidates", &cfg.candidates)?)?;
        Ok((model, skull, depths, candidates))
    })()
    .map_err(|e| e.in_stage("load"))?;
    let ranked = rank_candidates(&model, &skull, &depths, &candidates, cfg.alignment).map_err(|e| e.in_stage("rank"))?;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("ranking.txt"), format_ranking(&ranked))?;
    std::fs::write(out.join("ranking.json"), json(&ranked))?;
    Ok(ranked)
}

// ------------------------------------------------------------ resynth

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartSummary {
    pub seed: u64,
    pub total: f64,
    pub mean_residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub seed: u64,
    pub timings: Vec<StageTiming>,
    pub ranking: Vec<RankedCandidate>,
    pub chosen: String,
    pub removed_regions: Vec<String>,
    pub masked_pixels: usize,
    pub initial_score: f64,
    pub initial_percent: String,
    pub initial_unmatched: Vec<u32>,
    pub final_score: f64,
    pub final_percent: String,
    pub final_unmatched: Vec<u32>,
    pub final_loss: LossTerms,
    /// Mean distance (mm) over the geometry constraints.
    pub mean_residual: f64,
    /// `mean_residual` below the geometry-zero tolerance.
    pub geometry_zero: bool,
    pub iterations: usize,
    pub converged: bool,
    pub restarts: Vec<RestartSummary>,
    pub artifacts: BTreeMap<String, PathBuf>,
}

impl PipelineReport {
    /// Human-readable summary.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "candidate       {}", self.chosen);
        let _ = writeln!(s, "removed regions {}", if self.removed_regions.is_empty() { "-".into() } else { self.removed_regions.join(", ") });
        let _ = writeln!(s, "score           {} -> {}", self.initial_percent, self.final_percent);
        let t = self.final_loss;
        // + 0.0 turns -0 into 0
        let (lc, lp, lg) = (t.context + 0.0, t.prior + 0.0, t.geometry + 0.0);
        let _ = writeln!(s, "loss            Lc {lc:.6}  Lp {lp:.6}  Lg {lg:.6}");
        let _ = writeln!(s, "mean residual   {:.6} mm ({} iterations)", self.mean_residual, self.iterations);
        for st in &self.timings {
            let _ = writeln!(s, "  {:<18} {:8.3} s", st.stage, st.seconds);
        }
        s
    }
}

struct Clock {
    last: Instant,
    timings: Vec<StageTiming>,
}

impl Clock {
    fn new() -> Self {
        Self {
            last: Instant::now(),
            timings: Vec::new(),
        }
    }

    fn run<T>(&mut self, stage: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let r = f().map_err(|e| e.in_stage(stage));
        let now = Instant::now();
        self.timings.push(StageTiming {
            stage: stage.into(),
            seconds: (now - self.last).as_secs_f64(),
        });
        self.last = now;
        r
    }
}

/// Rank, select, mask, solve, refit and re-superimpose one candidate.
pub fn cmd_resynth(cfg: &PipelineConfig, out: &Path) -> Result<PipelineReport> {
    let mut clock = Clock::new();
    let (model, skull, depths, candidates, segmentation, training) = clock.run("load", || {
        let model = load_model(cfg)?;
        let skull = load_skull(cfg)?;
        let depths = load_depths(cfg, &model)?;
        let candidates = load_candidates(cfg.require("candidates", &cfg.candidates)?)?;
        let segmentation = match &cfg.segmentation {
            Some(p) => Segmentation::read(p)?,
            None => Segmentation::synthetic(&model),
        };
        if segmentation.labels.len() != model.vertex_count() {
            return Err(Error::InvalidInput(format!(
                "segmentation labels {} vertices, model has {}",
                segmentation.labels.len(),
                model.vertex_count()
            )));
        }
        let training = match &cfg.training {
            Some(p) => read_codes(p)?,
            None => candidates.iter().map(|(_, m)| model.project_mesh(m)).collect::<Result<_>>()?,
        };
        if let Some(id) = &cfg.candidate {
            if !candidates.iter().any(|(c, _)| c == id) {
                return Err(Error::Config(format!("candidate {id:?} is not in the candidate directory")));
            }
        }
        Ok((model, skull, depths, candidates, segmentation, training))
    })?;
    std::fs::create_dir_all(out)?;
    let mut artifacts = BTreeMap::new();
    let intr = CameraIntrinsics::canonical(&model);

    let ranking = clock.run("rank", || rank_candidates(&model, &skull, &depths, &candidates, cfg.alignment))?;
    write_text(out, "ranking.txt", &format_ranking(&ranking), &mut artifacts)?;
    let chosen = cfg.candidate.clone().unwrap_or_else(|| ranking[0].id.clone());
    let mesh = &candidates.iter().find(|(c, _)| *c == chosen).expect("chosen candidate exists").1;

    let (geometry, initial) = clock.run("superimpose", || {
        let g = model.project_mesh(mesh)?;
        let face = model.evaluate_geometry(&g)?;
        Ok((g, superimpose(&face, &model, &skull, &depths, cfg.alignment)?))
    })?;
    let removed = clock.run("select", || select_unmatched_regions(&segmentation, &initial, cfg.policy))?;
    let (y, mask) = clock.run("mask", || build_mask(&model, &geometry, &removed, &segmentation, &intr))?;
    let (constraints, definite) =
        clock.run("constraints", || skull_constraints(&model, &skull, &depths, &initial.alignment.inverse()))?;
    let problem = InpaintProblem {
        y,
        mask,
        constraints,
        definite: Some(definite),
        settings: cfg.inpaint.clone(),
    };
    write_bundle(&out.join("problem"), &problem)?;
    artifacts.insert("problem".into(), out.join("problem"));

    let (g, d) = clock.run("generator", || reference_gan(&model, intr, &training, cfg.latent_dim, cfg.gan_seed))?;
    let seeds: Vec<u64> = (0..cfg.restarts as u64).map(|k| cfg.seed.wrapping_add(k)).collect();
    let solutions = clock.run("solve", || solve_seeds(&problem, &g, &d, &model, &seeds))?;
    let best = solutions
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.terms.total.total_cmp(&b.1.terms.total).then(a.0.cmp(&b.0)))
        .map(|(_, s)| s)
        .expect("at least one restart");

    // back to a model code, as a fresh fit of the inpainted face
    let (final_code, final_mesh) = clock.run("refit", || {
        let code = model.project_mesh(&best.mesh)?;
        let mesh = model.evaluate_geometry(&code)?;
        Ok((code, mesh))
    })?;
    let after = clock.run("superimpose-final", || {
        superimpose(&final_mesh, &model, &skull, &depths, Alignment::Explicit(initial.alignment))
    })?;

    final_mesh.write_obj(&out.join("final_mesh.obj"))?;
    artifacts.insert("final_mesh.obj".into(), out.join("final_mesh.obj"));
    write_text(out, "final_code.txt", &codes_to_text(&[final_code]), &mut artifacts)?;
    write_text(out, "trace.csv", &trace_csv(&best.trace), &mut artifacts)?;
    for (name, img) in [("corrupted.ppm", &problem.y), ("inpainted.ppm", &best.image)] {
        write_ppm(&out.join(name), img.width, img.height, &img.pixels)?;
        artifacts.insert(name.into(), out.join(name));
    }
    problem.mask.write(&out.join("mask.pgm"))?;
    artifacts.insert("mask.pgm".into(), out.join("mask.pgm"));
    artifacts.insert("report.json".into(), out.join("report.json"));

    let geometry_zero = best.mean_residual < GEOMETRY_ZERO_MM;
    let report = PipelineReport {
        seed: cfg.seed,
        timings: clock.timings,
        ranking,
        chosen,
        removed_regions: removed.iter().map(|&r| segmentation.regions[r].name.clone()).collect(),
        masked_pixels: problem.mask.missing_count(),
        initial_score: initial.score,
        initial_percent: initial.percent(),
        initial_unmatched: initial.unmatched_ids(),
        final_score: after.score,
        final_percent: after.percent(),
        final_unmatched: after.unmatched_ids(),
        final_loss: best.terms,
        mean_residual: best.mean_residual,
        geometry_zero,
        iterations: best.iterations,
        converged: best.converged,
        restarts: solutions
            .iter()
            .zip(&seeds)
            .map(|(s, &seed)| RestartSummary {
                seed,
                total: s.terms.total,
                mean_residual: s.mean_residual,
                iterations: s.iterations,
            })
            .collect(),
        artifacts,
    };
    std::fs::write(out.join("report.json"), json(&report))?;
    if geometry_zero && report.final_score < report.initial_score {
        return Err(Error::Contract(format!(
            "geometry constraints met but the score fell from {} to {}",
            report.initial_percent, report.final_percent
        ))
        .in_stage("superimpose-final"));
    }
    Ok(report)
}

// --------------------------------------------------- gradcheck, synth

/// Runs the gradient checks and writes `gradcheck.json`. Failing rows are
/// part of the report, not errors.
pub fn cmd_gradcheck(out: &Path, opts: &GradcheckOptions) -> Result<GradcheckReport> {
    if opts.count == 0 {
        return Err(Error::Config("gradcheck count must be at least 1".into()));
    }
    let report = run_gradcheck(opts).map_err(|e| e.in_stage("gradcheck"))?;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("gradcheck.json"), json(&report))?;
    Ok(report)
}

pub fn cmd_synth(cfg: &PipelineConfig, out: &Path) -> Result<SynthManifest> {
    write_dataset(cfg.seed, &cfg.synth, out).map_err(|e| e.in_stage("synth"))
}
