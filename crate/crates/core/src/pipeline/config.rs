//! Line-based `key=value` pipeline configuration.
//!
//! Paths sit at the top level and are resolved against the config file's
//! directory; settings use section prefixes (`fit.w_m=1.0`,
//! `inpaint.lambda_2=10`). Unknown keys are errors.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitting::FitConfig;
use crate::inpaint::bundle::{parse_key_values, take_value};
use crate::inpaint::{InpaintSettings, RegionPolicy};
use crate::superimpose::Alignment;

/// Options of the synthetic dataset generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthOptions {
    pub vertices: usize,
    pub candidates: usize,
    /// Landmark files rendered from the known face.
    pub views: usize,
    /// Depth entries shifted past their threshold in the perturbed table.
    pub perturb: usize,
    /// Also write the known face into the candidate directory.
    pub inject_truth: bool,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            vertices: 642,
            candidates: 49,
            views: 3,
            perturb: 0,
            inject_truth: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub skull: Option<PathBuf>,
    pub skull_landmarks: Option<PathBuf>,
    pub depths: Option<PathBuf>,
    pub candidates: Option<PathBuf>,
    /// Defaults to the model's synthetic segmentation.
    pub segmentation: Option<PathBuf>,
    /// Generator training codes; defaults to the projected candidates.
    pub training: Option<PathBuf>,
    pub landmarks: Vec<PathBuf>,

    pub fit: FitConfig,
    /// Fit several landmark files with one shared geometry block.
    pub same_person: bool,

    pub alignment: Alignment,
    /// Overrides every match threshold of the depth table.
    pub eta: Option<f64>,
    pub policy: RegionPolicy,

    /// `inpaint.seed` is not a key: the start latent uses `seed`.
    pub inpaint: InpaintSettings,
    pub latent_dim: usize,
    pub gan_seed: u64,
    /// Candidate id to re-synthesize; rank 1 when absent.
    pub candidate: Option<String>,
    /// Parallel solves from seeds `seed, seed + 1, ...`; the lowest loss wins.
    pub restarts: usize,

    pub gradcheck_count: usize,
    pub synth: SynthOptions,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: None,
            model: None,
            skull: None,
            skull_landmarks: None,
            depths: None,
            candidates: None,
            segmentation: None,
            training: None,
            landmarks: Vec::new(),
            fit: FitConfig::default(),
            same_person: false,
            alignment: Alignment::Identity,
            eta: None,
            policy: RegionPolicy::Any,
            inpaint: InpaintSettings::default(),
            latent_dim: 32,
            gan_seed: 13,
            candidate: None,
            restarts: 1,
            gradcheck_count: 10,
            synth: SynthOptions::default(),
        }
    }
}

fn parse_alignment(v: &str) -> Option<Alignment> {
    match v {
        "identity" => Some(Alignment::Identity),
        "auto" => Some(Alignment::Auto),
        _ => None,
    }
}

macro_rules! take_into {
    ($map:expr, $path:expr, $($key:literal => $slot:expr),+ $(,)?) => {
        $(
            if let Some(v) = take_value($map, $key, $path)? {
                $slot = v;
            }
        )+
    };
}

impl PipelineConfig {
    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?, path)
    }

    /// Relative paths are resolved against `path`'s directory.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
        let mut map = parse_key_values(text, path)?;
        if let Some((line, _)) = map.get("inpaint.seed") {
            return Err(Error::parse(path, *line, "inpaint.seed is not a key; set the top-level seed"));
        }
        let mut c = Self::default();
        let resolve = |p: String| -> PathBuf {
            let p = PathBuf::from(p);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        for (key, slot) in [
            ("out", &mut c.out),
            ("model", &mut c.model),
            ("skull", &mut c.skull),
            ("skull_landmarks", &mut c.skull_landmarks),
            ("depths", &mut c.depths),
            ("candidates", &mut c.candidates),
            ("segmentation", &mut c.segmentation),
            ("training", &mut c.training),
        ] {
            if let Some((_, v)) = map.remove(key) {
                *slot = Some(resolve(v));
            }
        }
        if let Some((_, v)) = map.remove("landmarks") {
            c.landmarks = v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| resolve(s.into())).collect();
        }
        take_into!(&mut map, path,
            "seed" => c.seed,
            "fit.w_m" => c.fit.w_m,
            "fit.w_r" => c.fit.w_r,
            "fit.max_iters" => c.fit.max_iters,
            "fit.tolerance" => c.fit.tolerance,
            "fit.abs_tolerance" => c.fit.abs_tolerance,
            "fit.same_person" => c.same_person,
            "superimpose.policy" => c.policy,
            "inpaint.latent_dim" => c.latent_dim,
            "inpaint.gan_seed" => c.gan_seed,
            "inpaint.restarts" => c.restarts,
            "gradcheck.count" => c.gradcheck_count,
            "synth.vertices" => c.synth.vertices,
            "synth.candidates" => c.synth.candidates,
            "synth.views" => c.synth.views,
            "synth.perturb" => c.synth.perturb,
            "synth.inject_truth" => c.synth.inject_truth,
        );
        c.eta = take_value(&mut map, "superimpose.eta", path)?;
        c.candidate = map.remove("inpaint.candidate").map(|(_, v)| v);
        if let Some((line, v)) = map.remove("superimpose.alignment") {
            c.alignment = parse_alignment(&v)
                .ok_or_else(|| Error::parse(path, line, format!("alignment must be identity or auto, got {v:?}")))?;
        }
        c.inpaint = InpaintSettings::take_from(&mut map, "inpaint.", path)?;
        if let Some((key, (line, _))) = map.into_iter().next() {
            return Err(Error::parse(path, line, format!("unknown key {key:?}")));
        }
        c.inpaint.seed = c.seed;
        c.validate()?;
        Ok(c)
    }

    /// Sets the seed everywhere it is used.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.inpaint.seed = seed;
        self
    }

    /// Value checks that need no files.
    pub fn validate(&self) -> Result<()> {
        self.fit.validate()?;
        self.inpaint.validate()?;
        if let Some(eta) = self.eta {
            if !(eta > 0.0 && eta.is_finite()) {
                return Err(Error::Config(format!("superimpose.eta must be positive, got {eta}")));
            }
        }
        if self.restarts == 0 {
            return Err(Error::Config("inpaint.restarts must be at least 1".into()));
        }
        if self.latent_dim == 0 {
            return Err(Error::Config("inpaint.latent_dim must be at least 1".into()));
        }
        Ok(())
    }

    /// Path of `key`, or a config error naming it.
    pub fn require<'a>(&self, key: &str, value: &'a Option<PathBuf>) -> Result<&'a Path> {
        value.as_deref().ok_or_else(|| Error::Config(format!("`{key}` is not set")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_and_paths() {
        let text = "seed=4\nmodel=m.cfm\nlandmarks=a.txt, /abs/b.txt\nfit.w_r=0.5\nfit.same_person=true\n\
                    superimpose.alignment=auto\nsuperimpose.policy=majority\ninpaint.lambda_2=1\ninpaint.candidate=cand_003\n";
        let c = PipelineConfig::parse(text, Path::new("/data/run.cfg")).unwrap();
        assert_eq!(c.seed, 4);
        assert_eq!(c.inpaint.seed, 4);
        assert_eq!(c.model.as_deref(), Some(Path::new("/data/m.cfm")));
        assert_eq!(c.landmarks, [PathBuf::from("/data/a.txt"), PathBuf::from("/abs/b.txt")]);
        assert_eq!(c.fit.w_r, 0.5);
        assert!(c.same_person);
        assert_eq!(c.alignment, Alignment::Auto);
        assert_eq!(c.policy, RegionPolicy::Majority);
        assert_eq!(c.inpaint.lambda_2, 1.0);
        assert_eq!(c.candidate.as_deref(), Some("cand_003"));
    }

    #[test]
    fn errors_cite_lines() {
        let p = Path::new("c.cfg");
        for (text, line) in [
            ("seed=1\nfit.nope=3\n", 2),
            ("seed=1\n\nfit.w_m=abc\n", 3),
            ("superimpose.alignment=sideways\n", 1),
            ("inpaint.seed=3\n", 1),
        ] {
            match PipelineConfig::parse(text, p) {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn bad_values_are_config_errors() {
        let p = Path::new("c.cfg");
        for text in ["inpaint.window=4\n", "fit.w_m=0\n", "inpaint.restarts=0\n", "superimpose.eta=-1\n"] {
            let e = PipelineConfig::parse(text, p).unwrap_err();
            assert_eq!(e.exit_code(), 2, "{text}: {e}");
        }
    }
}
