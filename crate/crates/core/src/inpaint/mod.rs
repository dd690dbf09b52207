//! Skull-guided re-synthesis: region selection, masks, the three losses,
//! generator/discriminator contracts and the latent search.

pub mod bundle;
pub mod gan;
pub mod loss;
pub mod mask;
pub mod scene;
pub mod segmentation;
pub mod solve;

use std::collections::BTreeSet;

pub use bundle::{read_bundle, write_bundle};
pub use gan::{
    reference_gan, Discriminator, Generator, LatentPopulation, ReferenceDiscriminator, ReferenceGenerator,
};
pub use loss::{
    context_loss, context_loss_gradient, geometry_loss, prior_loss, resolve_constraints, Constraint, ConstraintTarget,
    DefiniteSurface,
};
pub use mask::{build_mask, importance_weights, MaskImage};
pub use scene::{SceneConfig, SyntheticScene};
pub use segmentation::{select_unmatched_regions, Region, RegionPolicy, Segmentation};
pub use solve::{
    initial_latent, solve, solve_seeds, trace_csv, GEOMETRY_ZERO_MM, Evaluation, InpaintProblem, InpaintSettings, InpaintSolution, LossTerms, Objective,
    TraceRow,
};

use crate::error::Result;
use crate::geometry::RigidTransform;
use crate::model::FaceModel;
use crate::render::camera::CameraIntrinsics;
use crate::superimpose::{
    definite_region_vertices, extend_landmarks, superimpose, Alignment, SkullAnnotation, SuperimpositionResult,
    TissueDepthTable,
};

/// A candidate's superimposition, the regions chosen for removal and the
/// resulting inpainting problem, all in the candidate's frame.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub superimposition: SuperimpositionResult,
    pub removed: BTreeSet<usize>,
    pub problem: InpaintProblem,
}

/// Extended landmarks and the definite-region surface, moved into the face
/// frame by `to_face`.
pub fn skull_constraints(
    model: &FaceModel,
    skull: &SkullAnnotation,
    depths: &TissueDepthTable,
    to_face: &RigidTransform,
) -> Result<(Vec<Constraint>, DefiniteSurface)> {
    let constraints = extend_landmarks(skull, depths)?
        .into_iter()
        .filter(|(id, _)| model.anthropometric_map.contains_key(id))
        .map(|(id, p)| Constraint {
            target: ConstraintTarget::Landmark(id),
            point: to_face.apply(&p).into(),
        })
        .collect();
    let definite = DefiniteSurface::new(
        &to_face.apply_mesh(&skull.skull),
        depths.forehead_depth()?,
        definite_region_vertices(model),
    )?;
    Ok((constraints, definite))
}

/// Superimposes the candidate, masks its poorly matched regions and turns
/// the extended landmarks and definite regions into constraints.
#[allow(clippy::too_many_arguments)]
pub fn prepare_problem(
    model: &FaceModel,
    segmentation: &Segmentation,
    skull: &SkullAnnotation,
    depths: &TissueDepthTable,
    candidate: &[f64],
    intrinsics: &CameraIntrinsics,
    alignment: Alignment,
    policy: RegionPolicy,
    settings: InpaintSettings,
) -> Result<Prepared> {
    let face = model.evaluate_geometry(candidate)?;
    let superimposition = superimpose(&face, model, skull, depths, alignment)?;
    let removed = select_unmatched_regions(segmentation, &superimposition, policy)?;
    let (y, mask) = build_mask(model, candidate, &removed, segmentation, intrinsics)?;
    let (constraints, definite) = skull_constraints(model, skull, depths, &superimposition.alignment.inverse())?;
    Ok(Prepared {
        superimposition,
        removed,
        problem: InpaintProblem {
            y,
            mask,
            constraints,
            definite: Some(definite),
            settings,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::OnceLock;

    fn scene() -> &'static SyntheticScene {
        static S: OnceLock<SyntheticScene> = OnceLock::new();
        S.get_or_init(|| {
            SyntheticScene::build(SceneConfig {
                candidates: 3,
                ..SceneConfig::default()
            })
            .unwrap()
        })
    }

    fn prepared(candidate: &[f64], settings: InpaintSettings) -> Prepared {
        let s = scene();
        prepare_problem(
            &s.model,
            &s.segmentation,
            &s.skull,
            &s.depths,
            candidate,
            &s.intrinsics,
            Alignment::Identity,
            RegionPolicy::Any,
            settings,
        )
        .unwrap()
    }

    #[test]
    fn ground_truth_needs_no_removal() {
        let s = scene();
        let p = prepared(&s.truth, InpaintSettings::default());
        assert_eq!(p.superimposition.score, 1.0);
        assert!(p.removed.is_empty());
        assert_eq!(p.problem.mask.missing_count(), 0);
    }

    #[test]
    fn total_gradient_matches_fixed_coverage_differences() {
        let s = scene();
        let (g, d) = s.gan().unwrap();
        let p = prepared(&s.candidates[0], InpaintSettings::default());
        assert!(p.problem.mask.missing_count() > 0);
        let obj = Objective::new(&p.problem, &g, &d, &s.model).unwrap();
        let z = initial_latent(32, 5);
        let ev = obj.evaluate(&z).unwrap();
        let coverage = g.generate(&z).unwrap().coverage;
        let f = |z: &[f64]| obj.terms_for_image(z, &g.generate_with_coverage(z, &coverage).unwrap()).unwrap().total;
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for k in 0..z.len() {
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[k] += h;
            zm[k] -= h;
            let fd = (f(&zp) - f(&zm)) / (2.0 * h);
            worst = worst.max((fd - ev.gradient[k]).abs() / ev.gradient[k].abs().max(1.0));
        }
        assert!(worst < 1e-4, "{worst}");
    }

    #[test]
    fn constrained_solve_reaches_the_known_face() {
        let s = scene();
        let (g, d) = s.gan().unwrap();
        let truth = s.truth_mesh().unwrap();
        let mut meshes = Vec::new();
        for k in 0..2 {
            let p = prepared(&s.candidates[k], InpaintSettings::default());
            let sol = solve(&p.problem, &g, &d, &s.model).unwrap();
            assert!(sol.mean_residual < GEOMETRY_ZERO_MM, "{:?} {}", sol.terms, sol.mean_residual);
            assert!(sol.iterations < 200);
            for w in sol.trace.windows(2) {
                assert!(w[1].terms.total < w[0].terms.total);
            }
            let after = superimpose(&sol.mesh, &s.model, &s.skull, &s.depths, Alignment::Identity).unwrap();
            assert_eq!(after.score, 1.0);
            assert!(sol.mesh.max_deviation(&truth) < 0.05, "{}", sol.mesh.max_deviation(&truth));
            meshes.push(sol.mesh);
        }
        assert!(meshes[0].max_deviation(&meshes[1]) < 0.05);
    }

    #[test]
    fn solve_is_deterministic() {
        let s = scene();
        let (g, d) = s.gan().unwrap();
        let settings = InpaintSettings {
            max_iters: 5,
            ..InpaintSettings::default()
        };
        let p = prepared(&s.candidates[1], settings);
        let a = solve(&p.problem, &g, &d, &s.model).unwrap();
        let b = solve(&p.problem, &g, &d, &s.model).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.z, b.z);
    }

    #[test]
    fn unconstrained_empty_mask_never_increases_terms() {
        let s = scene();
        let (g, d) = s.gan().unwrap();
        let z_star = g.encode_geometry(&s.candidates[2]).unwrap();
        let y = g.generate(&z_star).unwrap();
        let face = s.model.evaluate_geometry(&s.candidates[2]).unwrap();
        let constraints: Vec<Constraint> = (1..=18)
            .map(|id| Constraint {
                target: ConstraintTarget::Landmark(id),
                point: face.vertices[s.model.anthropometric_map[&id]].into(),
            })
            .collect();
        let problem = InpaintProblem {
            mask: MaskImage::all_known(y.width, y.height),
            y,
            constraints,
            definite: None,
            settings: InpaintSettings {
                max_iters: 20,
                ..InpaintSettings::default()
            },
        };
        let sol = solve(&problem, &g, &d, &s.model).unwrap();
        let first = sol.trace[0].terms;
        assert!(sol.terms.geometry <= first.geometry && sol.terms.context <= first.context);
        for w in sol.trace.windows(2) {
            assert!(w[1].terms.total <= w[0].terms.total);
        }
    }

    #[test]
    fn trace_csv_header_and_rows() {
        let rows = [TraceRow {
            iter: 0,
            terms: LossTerms {
                total: 1.0,
                context: 0.5,
                prior: -0.5,
                geometry: 1.0,
            },
        }];
        let csv = trace_csv(&rows);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("iter,total,Lc,Lp,Lg"));
        let cols: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(cols, [0.0, 1.0, 0.5, -0.5, 1.0]);
    }
}
