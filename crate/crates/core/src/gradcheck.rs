//! Central-difference checks of the analytic gradients: the landmark
//! renderer's backward pass, the fitting loss and the inpainting total loss.

use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitting::{landmark_vertices, render_landmarks, LandmarkTerm, REDUCED_IDS};
use crate::geometry::Point2;
use crate::inpaint::{initial_latent, prepare_problem, Generator, InpaintSettings, Objective, RegionPolicy};
use crate::inpaint::{SceneConfig, SyntheticScene};
use crate::model::code::{GEOMETRY_DIM, THETA};
use crate::render::sh::Illumination;
use crate::render::LandmarkDecoder;
use crate::superimpose::Alignment;
use crate::SemanticCodeVector;

/// Largest accepted relative error.
pub const TOLERANCE: f64 = 1e-4;

/// Below this magnitude the relative error turns into an absolute one.
pub const SCALE_FLOOR: f64 = 1.0;

/// Difference steps: code space for the renderer and the fit, latent space
/// for inpainting.
const CODE_STEP: f64 = 1e-5;
const LATENT_STEP: f64 = 1e-6;

/// Candidates the inpainting cases cycle through.
const INPAINT_CANDIDATES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradTarget {
    Renderer,
    Fitting,
    Inpainting,
}

impl GradTarget {
    pub const ALL: [GradTarget; 3] = [GradTarget::Renderer, GradTarget::Fitting, GradTarget::Inpainting];

    pub fn name(self) -> &'static str {
        match self {
            GradTarget::Renderer => "renderer",
            GradTarget::Fitting => "fitting",
            GradTarget::Inpainting => "inpainting",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradRow {
    pub target: GradTarget,
    pub case: usize,
    pub columns: usize,
    pub max_rel_error: f64,
    pub worst_column: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckOptions {
    pub seed: u64,
    /// Random configurations per target.
    pub count: usize,
    pub targets: Vec<GradTarget>,
    /// Test hook: skews this target's analytic gradient so its rows fail.
    pub corrupt: Option<GradTarget>,
}

impl GradcheckOptions {
    pub fn new(seed: u64, count: usize) -> Self {
        Self {
            seed,
            count,
            targets: GradTarget::ALL.to_vec(),
            corrupt: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub seed: u64,
    pub count: usize,
    pub tolerance: f64,
    pub rows: Vec<GradRow>,
    pub seconds: f64,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }

    pub fn max_error(&self, target: GradTarget) -> Option<f64> {
        self.rows
            .iter()
            .filter(|r| r.target == target)
            .map(|r| r.max_rel_error)
            .reduce(f64::max)
    }

    /// One line per target with its worst case.
    pub fn table(&self) -> String {
        let mut out = String::from("target\tcases\tmax_rel_error\tresult\n");
        for t in GradTarget::ALL {
            let rows: Vec<&GradRow> = self.rows.iter().filter(|r| r.target == t).collect();
            if rows.is_empty() {
                continue;
            }
            let worst = rows.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
            let ok = rows.iter().all(|r| r.passed);
            let _ = writeln!(out, "{}\t{}\t{worst:.3e}\t{}", t.name(), rows.len(), if ok { "pass" } else { "FAIL" });
        }
        out
    }
}

/// `|a - fd| / max(|a|, |fd|, SCALE_FLOOR)`.
pub fn relative_error(analytic: f64, fd: f64) -> f64 {
    (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(SCALE_FLOOR)
}

fn skew(g: &mut [f64]) {
    for v in g {
        *v = *v * 1.01 + 0.01;
    }
}

fn compare(target: GradTarget, case: usize, analytic: &[f64], fd: &[f64]) -> GradRow {
    let (worst_column, max_rel_error) = analytic
        .iter()
        .zip(fd)
        .map(|(a, f)| relative_error(*a, *f))
        .enumerate()
        .fold((0, 0.0), |best, (k, e)| if e > best.1 { (k, e) } else { best });
    GradRow {
        target,
        case,
        columns: analytic.len(),
        max_rel_error,
        worst_column,
        passed: max_rel_error < TOLERANCE,
    }
}

fn central<F: FnMut(&[f64]) -> Result<f64>>(x: &[f64], h: f64, mut f: F) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(x.len());
    let mut p = x.to_vec();
    for k in 0..x.len() {
        p[k] = x[k] + h;
        let fp = f(&p)?;
        p[k] = x[k] - h;
        let fm = f(&p)?;
        p[k] = x[k];
        out.push((fp - fm) / (2.0 * h));
    }
    Ok(out)
}

/// Random code with every block populated.
pub fn random_code(rng: &mut impl Rng) -> SemanticCodeVector {
    let mut x = SemanticCodeVector::zeros();
    for v in &mut x.as_mut_slice()[..THETA] {
        *v = rng.gen_range(-1.0..1.0);
    }
    for v in x.theta_mut() {
        *v = rng.gen_range(-0.2..0.2);
    }
    for v in x.cam_rotation_mut() {
        *v = rng.gen_range(-0.2..0.2);
    }
    for v in x.cam_translation_mut() {
        *v = rng.gen_range(-20.0..20.0);
    }
    let base = Illumination::canonical().gamma;
    for (v, b) in x.gamma_mut().iter_mut().zip(base) {
        *v = b + rng.gen_range(-0.3..0.3);
    }
    x
}

fn code(v: &[f64]) -> SemanticCodeVector {
    SemanticCodeVector::from_slice(v).expect("code length")
}

/// Backward pass of a random linear functional of landmark pixels and colours.
fn renderer_case(dec: &LandmarkDecoder, rng: &mut ChaCha8Rng, corrupt: bool) -> Result<(Vec<f64>, Vec<f64>)> {
    let x = random_code(rng);
    let l = dec.vertices().len();
    let gp: Vec<Point2> = (0..l).map(|_| Point2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    let gc: Vec<[f64; 3]> = (0..l).map(|_| [0; 3].map(|_| rng.gen_range(-1.0..1.0))).collect();
    let mut analytic = dec.backward(&x, &gp, Some(&gc))?;
    if corrupt {
        skew(&mut analytic);
    }
    let fd = central(x.as_slice(), CODE_STEP, |v| {
        let f = dec.forward(&code(v))?;
        let pix: f64 = f.pixels.iter().zip(&gp).map(|(p, g)| p.dot(g)).sum();
        let col: f64 = f.colors.iter().zip(&gc).flat_map(|(c, g)| c.iter().zip(g).map(|(a, b)| a * b)).sum();
        Ok(pix + col)
    })?;
    Ok((analytic, fd))
}

/// `w_m E_m + w_r E_r` against landmarks of another random code.
fn fitting_case(
    scene: &SyntheticScene,
    dec: &LandmarkDecoder,
    rng: &mut ChaCha8Rng,
    corrupt: bool,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (w_m, w_r) = (1.0, 1e-3);
    let mut target = random_code(rng);
    target.theta_mut().iter_mut().for_each(|v| *v *= 0.5);
    let targets = render_landmarks(dec, &REDUCED_IDS, &target)?;
    let term = LandmarkTerm::new(&scene.model, &scene.intrinsics, &targets)?;
    let x = random_code(rng);
    let (_, g, _) = term.e_m_gradient(&x)?;
    let mut analytic: Vec<f64> = g.iter().map(|v| w_m * v).collect();
    for (a, v) in analytic.iter_mut().zip(&x.as_slice()[..GEOMETRY_DIM]) {
        *a += 2.0 * w_r * v;
    }
    if corrupt {
        skew(&mut analytic);
    }
    let fd = central(x.as_slice(), CODE_STEP, |v| {
        let c = code(v);
        Ok(w_m * term.e_m(&c)? + w_r * c.regularization())
    })?;
    Ok((analytic, fd))
}

/// Runs every requested target `count` times.
pub fn run_gradcheck(opts: &GradcheckOptions) -> Result<GradcheckReport> {
    if opts.count == 0 {
        return Err(Error::Config("gradcheck count must be at least 1".into()));
    }
    let start = Instant::now();
    let scene = SyntheticScene::build(SceneConfig {
        candidates: INPAINT_CANDIDATES,
        ..SceneConfig::seeded(opts.seed)
    })?;
    let mut rows = Vec::new();
    let wants = |t: GradTarget| opts.targets.contains(&t);
    let corrupt = |t: GradTarget| opts.corrupt == Some(t);

    let all_ids: Vec<u32> = (0..scene.model.image_landmarks.len() as u32).collect();
    let full = LandmarkDecoder::new(&scene.model, scene.intrinsics, landmark_vertices(&scene.model, &all_ids)?)?;
    let reduced = LandmarkDecoder::new(&scene.model, scene.intrinsics, landmark_vertices(&scene.model, &REDUCED_IDS)?)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for case in 0..opts.count {
        if wants(GradTarget::Renderer) {
            let (a, f) = renderer_case(&full, &mut rng, corrupt(GradTarget::Renderer))?;
            rows.push(compare(GradTarget::Renderer, case, &a, &f));
        }
        if wants(GradTarget::Fitting) {
            let (a, f) = fitting_case(&scene, &reduced, &mut rng, corrupt(GradTarget::Fitting))?;
            rows.push(compare(GradTarget::Fitting, case, &a, &f));
        }
    }

    if wants(GradTarget::Inpainting) {
        let (g, d) = scene.gan()?;
        let problems = (0..INPAINT_CANDIDATES.min(opts.count))
            .map(|k| {
                prepare_problem(
                    &scene.model,
                    &scene.segmentation,
                    &scene.skull,
                    &scene.depths,
                    &scene.candidates[k],
                    &scene.intrinsics,
                    Alignment::Identity,
                    RegionPolicy::Any,
                    InpaintSettings::default(),
                )
                .map(|p| p.problem)
            })
            .collect::<Result<Vec<_>>>()?;
        for case in 0..opts.count {
            let problem = &problems[case % problems.len()];
            let obj = Objective::new(problem, &g, &d, &scene.model)?;
            let z = initial_latent(g.latent_dim(), opts.seed.wrapping_mul(1_000_003).wrapping_add(case as u64));
            let mut analytic = obj.evaluate(&z)?.gradient;
            if corrupt(GradTarget::Inpainting) {
                skew(&mut analytic);
            }
            // coverage is held fixed, as in the analytic image derivative
            let coverage = g.generate(&z)?.coverage;
            let fd = central(&z, LATENT_STEP, |v| {
                Ok(obj.terms_for_image(v, &g.generate_with_coverage(v, &coverage)?)?.total)
            })?;
            rows.push(compare(GradTarget::Inpainting, case, &analytic, &fd));
        }
    }
    Ok(GradcheckReport {
        seed: opts.seed,
        count: opts.count,
        tolerance: TOLERANCE,
        rows,
        seconds: start.elapsed().as_secs_f64(),
    })
}
