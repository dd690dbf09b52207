//! Landmark-driven reconstruction: the edge-length loss, single-image
//! analysis-by-synthesis fitting and shared-geometry multi-image fitting.

pub mod fit;
pub mod landmarks;
pub mod loss;
pub mod optimize;

pub use fit::{fit_multi, fit_single, Encoder, FitResult, FittingEncoder, LandmarkTerm, MultiFitResult};
pub use landmarks::{landmark_vertices, render_landmarks, LandmarkSet, LandmarkSource, REDUCED_IDS};
pub use loss::{edge_loss, edge_loss_gradient, geometric_loss, FitConfig, LossBreakdown};
pub use optimize::{descend, Descent, Probe};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::synth::{synthesize_model, BasisEnergy};
    use crate::model::FaceModel;
    use crate::render::{CameraIntrinsics, LandmarkDecoder};
    use crate::SemanticCodeVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::OnceLock;

    fn model() -> &'static FaceModel {
        static M: OnceLock<FaceModel> = OnceLock::new();
        M.get_or_init(|| synthesize_model(7, 642, &BasisEnergy::default()).unwrap())
    }

    fn truth(seed: u64) -> SemanticCodeVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = SemanticCodeVector::zeros();
        for v in x.alpha_mut().iter_mut().take(10) {
            *v = rng.gen_range(-1.0..1.0);
        }
        for v in x.delta_mut().iter_mut().take(5) {
            *v = rng.gen_range(-0.5..0.5);
        }
        x.cam_rotation_mut()[1] = rng.gen_range(-0.1..0.1);
        x.cam_translation_mut()[2] = rng.gen_range(-20.0..20.0);
        x
    }

    fn targets(x: &SemanticCodeVector) -> LandmarkSet {
        let m = model();
        let intr = CameraIntrinsics::canonical(m);
        let dec = LandmarkDecoder::new(m, intr, landmark_vertices(m, &REDUCED_IDS).unwrap()).unwrap();
        render_landmarks(&dec, &REDUCED_IDS, x).unwrap()
    }

    fn refit_rms(r: &FitResult, target: &LandmarkSet) -> f64 {
        target.aligned_rms_distance(&targets(&r.code)).unwrap()
    }

    #[test]
    fn fixed_point_takes_no_step() {
        let m = model();
        let x = truth(1);
        let cfg = FitConfig {
            w_r: 0.0,
            ..FitConfig::default()
        };
        let r = fit_single(m, &CameraIntrinsics::canonical(m), &targets(&x), &cfg, &x).unwrap();
        assert_eq!(r.iterations, 0);
        assert!(r.converged);
        assert!(r.breakdown.e_m <= 1e-12);
    }

    #[test]
    fn round_trip_from_zero() {
        let m = model();
        let x = truth(2);
        let t = targets(&x);
        let r = fit_single(m, &CameraIntrinsics::canonical(m), &t, &FitConfig::default(), &SemanticCodeVector::zeros()).unwrap();
        let rms = refit_rms(&r, &t);
        assert!(r.breakdown.e_m < 1.0, "{:?}", r.breakdown);
        assert!(rms < 1.0, "rms {rms}");
        assert!((r.final_loss - (r.breakdown.e_m + 1e-3 * r.breakdown.e_r)).abs() < 1e-9);
        assert!(r.loss_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn geometry_norm_shrinks_with_regularization() {
        let m = model();
        let t = targets(&truth(3));
        let norms: Vec<f64> = [0.01, 1.0, 100.0]
            .iter()
            .map(|&w_r| {
                let cfg = FitConfig {
                    w_r,
                    ..FitConfig::default()
                };
                let r = fit_single(m, &CameraIntrinsics::canonical(m), &t, &cfg, &SemanticCodeVector::zeros()).unwrap();
                r.code.regularization().sqrt()
            })
            .collect();
        assert!(norms[0] > norms[1] && norms[1] > norms[2], "{norms:?}");
    }

    #[test]
    fn optimizer_gradient_matches_finite_differences() {
        let m = model();
        let t = targets(&truth(4));
        let term = LandmarkTerm::new(m, &CameraIntrinsics::canonical(m), &t).unwrap();
        let mut x = truth(5);
        x.theta_mut()[4] = 0.05;
        let (_, g, _) = term.e_m_gradient(&x).unwrap();
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for k in (0..crate::model::code::CODE_DIM).step_by(7) {
            let mut a = x.clone();
            a.as_mut_slice()[k] += h;
            let mut b = x.clone();
            b.as_mut_slice()[k] -= h;
            let fd = (term.e_m(&a).unwrap() - term.e_m(&b).unwrap()) / (2.0 * h);
            let scale = g[k].abs().max(fd.abs()).max(1e-3);
            worst = worst.max((g[k] - fd).abs() / scale);
        }
        assert!(worst < 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn multi_with_one_image_equals_single() {
        let m = model();
        let t = targets(&truth(6));
        let intr = CameraIntrinsics::canonical(m);
        let cfg = FitConfig::default();
        let s = fit_single(m, &intr, &t, &cfg, &SemanticCodeVector::zeros()).unwrap();
        let mm = fit_multi(m, &intr, &[t], &cfg, &SemanticCodeVector::zeros()).unwrap();
        assert_eq!(mm.code(0), s.code);
        assert_eq!(mm.final_loss, s.final_loss);
    }

    #[test]
    fn identical_images_keep_single_geometry() {
        let m = model();
        let t = targets(&truth(8));
        let intr = CameraIntrinsics::canonical(m);
        let cfg = FitConfig::default();
        let s = fit_single(m, &intr, &t, &cfg, &SemanticCodeVector::zeros()).unwrap();
        let mm = fit_multi(m, &intr, &[t.clone(), t.clone(), t], &cfg, &SemanticCodeVector::zeros()).unwrap();
        let d = mm
            .geometry
            .iter()
            .zip(s.code.geometry())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(d < 1e-3, "max geometry difference {d}");
        assert!(mm.final_loss <= 3.0 * s.final_loss * (1.0 + 1e-9));
    }

    fn canonical_mesh(g: &[f64]) -> crate::Mesh {
        model().evaluate_geometry(&crate::render::decoder::canonical_geometry(g)).unwrap()
    }

    #[test]
    fn shared_geometry_beats_single_images() {
        let m = model();
        let intr = CameraIntrinsics::canonical(m);
        let cfg = FitConfig::default();
        let g_star = truth(10);
        let view = |seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut x = g_star.clone();
            x.cam_rotation_mut()[1] = rng.gen_range(-0.3..0.3);
            x.cam_rotation_mut()[0] = rng.gen_range(-0.1..0.1);
            targets(&x)
        };
        let set_a: Vec<LandmarkSet> = (0..3).map(|k| view(100 + k)).collect();
        let set_b: Vec<LandmarkSet> = (0..3).map(|k| view(200 + k)).collect();
        let zero = SemanticCodeVector::zeros();
        let ma = fit_multi(m, &intr, &set_a, &cfg, &zero).unwrap();
        let mb = fit_multi(m, &intr, &set_b, &cfg, &zero).unwrap();
        let multi = canonical_mesh(&ma.geometry).max_deviation(&canonical_mesh(&mb.geometry));
        let single = canonical_mesh(ma.stage1[0].code.geometry()).max_deviation(&canonical_mesh(mb.stage1[0].code.geometry()));
        assert!(multi < single, "multi {multi} single {single}");
    }

    #[test]
    fn encoder_returns_fit_code() {
        let m = model();
        let t = targets(&truth(9));
        let enc = FittingEncoder {
            model: m,
            intrinsics: CameraIntrinsics::canonical(m),
            config: FitConfig::default(),
            init: SemanticCodeVector::zeros(),
        };
        let r = fit_single(m, &enc.intrinsics, &t, &enc.config, &enc.init).unwrap();
        assert_eq!(enc.encode(&t).unwrap(), r.code);
    }
}
