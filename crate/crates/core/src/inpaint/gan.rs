//! Generator and discriminator contracts, and an analytic reference pair.
//!
//! The reference generator renders `M(A z + b)` canonically, where `(A, b)`
//! is the principal affine map of a set of training geometry codes. The
//! reference discriminator reads a whitened latent `w` back from the image
//! with a linear ridge encoder on pooled pixels and scores
//! `sigma(-|w|^2 / d_z)`, squashed strictly inside (0, 1).

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::code::{ALPHA, DELTA, GEOMETRY_DIM, N_EXPRESSION, N_SHAPE};
use crate::model::FaceModel;
use crate::render::camera::CameraIntrinsics;
use crate::render::decoder::{normalize_render_geometry, normalize_render_vjp, normalize_render_with_coverage};
use crate::render::RenderedImage;

/// Image generator over a `latent_dim` latent space.
pub trait Generator {
    fn latent_dim(&self) -> usize;

    /// Deterministic in `z`.
    fn generate(&self, z: &[f64]) -> Result<RenderedImage>;

    /// Image and the gradient of `sum(grad_pixels * G(z))` in `z`.
    fn generate_vjp(&self, z: &[f64], grad_pixels: &[f64]) -> Result<(RenderedImage, Vec<f64>)>;

    /// Geometry code (`GEOMETRY_DIM` entries) the encoder reads from `G(z)`.
    fn readout(&self, z: &[f64]) -> Result<Vec<f64>>;

    /// `d readout / d z`, `GEOMETRY_DIM x latent_dim`. `None` makes the
    /// solver fall back to central differences.
    fn readout_jacobian(&self, _z: &[f64]) -> Option<DMatrix<f64>> {
        None
    }
}

/// Realness score strictly inside (0, 1).
pub trait Discriminator {
    fn score(&self, img: &RenderedImage) -> Result<f64>;

    /// Score and its gradient in the pixels.
    fn score_gradient(&self, img: &RenderedImage) -> Result<(f64, Vec<f64>)>;
}

/// `G(z) = normalize_render(M(A z + b))`.
#[derive(Debug, Clone)]
pub struct ReferenceGenerator<'a> {
    model: &'a FaceModel,
    intrinsics: CameraIntrinsics,
    a: DMatrix<f64>,
    b: DVector<f64>,
}

impl<'a> ReferenceGenerator<'a> {
    pub fn new(model: &'a FaceModel, intrinsics: CameraIntrinsics, a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if a.nrows() != GEOMETRY_DIM || b.len() != GEOMETRY_DIM || a.ncols() == 0 {
            return Err(Error::InvalidInput(format!(
                "affine map must be {GEOMETRY_DIM} x d_z with a {GEOMETRY_DIM}-vector offset, got {}x{} and {}",
                a.nrows(),
                a.ncols(),
                b.len()
            )));
        }
        intrinsics.validate()?;
        Ok(Self { model, intrinsics, a, b })
    }

    pub fn affine(&self) -> (&DMatrix<f64>, &DVector<f64>) {
        (&self.a, &self.b)
    }

    pub fn intrinsics(&self) -> &CameraIntrinsics {
        &self.intrinsics
    }

    fn geometry(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.a.ncols() {
            return Err(Error::LengthMismatch {
                block: "latent",
                expected: self.a.ncols(),
                got: z.len(),
            });
        }
        Ok((&self.a * DVector::from_column_slice(z) + &self.b).as_slice().to_vec())
    }

    /// Whitened latent of a geometry code (least squares on the span of A).
    pub fn encode_geometry(&self, geometry: &[f64]) -> Result<Vec<f64>> {
        let rhs = DVector::from_column_slice(geometry) - &self.b;
        let z = self
            .a
            .clone()
            .svd(true, true)
            .solve(&rhs, 1e-12)
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
        Ok(z.as_slice().to_vec())
    }

    /// `G(z)` drawn with a fixed triangle-per-pixel assignment, the smooth
    /// surrogate whose derivative [`Generator::generate_vjp`] returns.
    pub fn generate_with_coverage(&self, z: &[f64], coverage: &[Option<u32>]) -> Result<RenderedImage> {
        normalize_render_with_coverage(self.model, &self.geometry(z)?, &self.intrinsics, coverage)
    }
}

impl Generator for ReferenceGenerator<'_> {
    fn latent_dim(&self) -> usize {
        self.a.ncols()
    }

    fn generate(&self, z: &[f64]) -> Result<RenderedImage> {
        normalize_render_geometry(self.model, &self.geometry(z)?, &self.intrinsics)
    }

    fn generate_vjp(&self, z: &[f64], grad_pixels: &[f64]) -> Result<(RenderedImage, Vec<f64>)> {
        let (img, g) = normalize_render_vjp(self.model, &self.geometry(z)?, &self.intrinsics, grad_pixels)?;
        let gz = self.a.tr_mul(&DVector::from_vec(g));
        Ok((img, gz.as_slice().to_vec()))
    }

    fn readout(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.geometry(z)
    }

    fn readout_jacobian(&self, _z: &[f64]) -> Option<DMatrix<f64>> {
        Some(self.a.clone())
    }
}

/// Side of the square pixel blocks averaged into encoder features.
pub const POOL: usize = 4;

/// Keeps scores away from exactly 0 and 1.
const SCORE_EPS: f64 = 1e-12;

/// Extra standard-normal latents rendered per latent dimension when
/// training the encoder.
const EXTRA_SAMPLES_PER_DIM: usize = 4;

fn pooled_features(img: &RenderedImage) -> Result<DVector<f64>> {
    if img.width % POOL != 0 || img.height % POOL != 0 {
        return Err(Error::InvalidInput(format!(
            "image {}x{} is not a multiple of the {POOL}-pixel pooling block",
            img.width, img.height
        )));
    }
    let (fw, fh) = (img.width / POOL, img.height / POOL);
    let mut f = DVector::zeros(3 * fw * fh);
    let scale = 1.0 / (POOL * POOL) as f64;
    for y in 0..img.height {
        for x in 0..img.width {
            let cell = (y / POOL) * fw + x / POOL;
            for c in 0..3 {
                f[3 * cell + c] += scale * img.pixels[3 * (y * img.width + x) + c];
            }
        }
    }
    Ok(f)
}

fn logistic(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

/// Scores images by how typical their encoded latent is.
#[derive(Debug, Clone)]
pub struct ReferenceDiscriminator {
    width: usize,
    height: usize,
    encoder: DMatrix<f64>,
    feature_mean: DVector<f64>,
}

impl ReferenceDiscriminator {
    pub fn latent_dim(&self) -> usize {
        self.encoder.nrows()
    }

    /// Whitened latent read from an image.
    pub fn encode(&self, img: &RenderedImage) -> Result<DVector<f64>> {
        if (img.width, img.height) != (self.width, self.height) {
            return Err(Error::InvalidInput(format!(
                "discriminator expects {}x{} images, got {}x{}",
                self.width, self.height, img.width, img.height
            )));
        }
        Ok(&self.encoder * (pooled_features(img)? - &self.feature_mean))
    }

    fn squash(&self, w: &DVector<f64>) -> (f64, f64) {
        let u = -w.norm_squared() / self.latent_dim() as f64;
        let s = logistic(u);
        (SCORE_EPS + (1.0 - 2.0 * SCORE_EPS) * s, (1.0 - 2.0 * SCORE_EPS) * s * (1.0 - s))
    }
}

impl Discriminator for ReferenceDiscriminator {
    fn score(&self, img: &RenderedImage) -> Result<f64> {
        Ok(self.squash(&self.encode(img)?).0)
    }

    fn score_gradient(&self, img: &RenderedImage) -> Result<(f64, Vec<f64>)> {
        let w = self.encode(img)?;
        let (d, dd_du) = self.squash(&w);
        let grad_features = self.encoder.tr_mul(&w) * (-2.0 * dd_du / self.latent_dim() as f64);
        let fw = img.width / POOL;
        let scale = 1.0 / (POOL * POOL) as f64;
        let mut grad = vec![0.0; img.pixels.len()];
        for y in 0..img.height {
            for x in 0..img.width {
                let cell = (y / POOL) * fw + x / POOL;
                for c in 0..3 {
                    grad[3 * (y * img.width + x) + c] = scale * grad_features[3 * cell + c];
                }
            }
        }
        Ok((d, grad))
    }
}

/// Builds the reference pair from training geometry codes.
///
/// The generator spans the top `d_z` principal directions of the codes,
/// scaled to unit variance. The discriminator's encoder is a dual-form ridge
/// regression from pooled pixels to latents, trained on the training codes
/// and on `seed`-drawn standard-normal latents.
pub fn reference_gan<'a>(
    model: &'a FaceModel,
    intrinsics: CameraIntrinsics,
    training: &[Vec<f64>],
    d_z: usize,
    seed: u64,
) -> Result<(ReferenceGenerator<'a>, ReferenceDiscriminator)> {
    let n = training.len();
    if n < 20 {
        return Err(Error::InvalidInput(format!("need at least 20 training codes, got {n}")));
    }
    if d_z == 0 || d_z > GEOMETRY_DIM {
        return Err(Error::InvalidInput(format!("latent dimension must be in 1..={GEOMETRY_DIM}, got {d_z}")));
    }
    if let Some(c) = training.iter().find(|c| c.len() != GEOMETRY_DIM) {
        return Err(Error::LengthMismatch {
            block: "training code",
            expected: GEOMETRY_DIM,
            got: c.len(),
        });
    }
    if training.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("training codes must be finite".into()));
    }
    let x = DMatrix::from_fn(n, GEOMETRY_DIM, |i, j| training[i][j]);
    let b: DVector<f64> = x.row_mean().transpose();
    let centered = DMatrix::from_fn(n, GEOMETRY_DIM, |i, j| x[(i, j)] - b[j]);
    let svd = centered.svd(true, true);
    let (u, v_t) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let s: Vec<f64> = order.iter().map(|&k| svd.singular_values[k]).collect();
    if d_z > s.len() || s[0] <= 0.0 || s[d_z - 1] <= 1e-10 * s[0] {
        return Err(Error::RankDeficient(format!(
            "training codes span fewer than {d_z} directions (n = {n})"
        )));
    }
    let root = ((n - 1) as f64).sqrt();
    let a = DMatrix::from_fn(GEOMETRY_DIM, d_z, |i, k| v_t[(order[k], i)] * s[k] / root);
    let generator = ReferenceGenerator::new(model, intrinsics, a, b)?;

    // latents: whitened training codes, then standard-normal extras
    let mut latents: Vec<Vec<f64>> = (0..n).map(|i| (0..d_z).map(|k| root * u[(i, order[k])]).collect()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..EXTRA_SAMPLES_PER_DIM * d_z {
        latents.push((0..d_z).map(|_| rng.sample(StandardNormal)).collect());
    }
    let features: Vec<DVector<f64>> = latents
        .iter()
        .map(|z| pooled_features(&generator.generate(z)?))
        .collect::<Result<_>>()?;
    let m = latents.len();
    let dim = features[0].len();
    let mut feature_mean = DVector::zeros(dim);
    for f in &features {
        feature_mean += f;
    }
    feature_mean /= m as f64;
    let phi = DMatrix::from_fn(m, dim, |i, j| features[i][j] - feature_mean[j]);
    let mut k = &phi * phi.transpose();
    let ridge = 1e-3 * k.trace() / m as f64;
    for i in 0..m {
        k[(i, i)] += ridge;
    }
    let z = DMatrix::from_fn(m, d_z, |i, j| latents[i][j]);
    let chol = k
        .cholesky()
        .ok_or_else(|| Error::RankDeficient("encoder kernel is not positive definite".into()))?;
    let encoder = z.transpose() * chol.solve(&phi);
    let disc = ReferenceDiscriminator {
        width: intrinsics.width,
        height: intrinsics.height,
        encoder,
        feature_mean,
    };
    Ok((generator, disc))
}

/// Geometry codes confined to a random low-dimensional subspace of the
/// shape and expression blocks, so the population is exactly representable
/// by a generator of that latent dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentPopulation {
    basis: DMatrix<f64>,
}

/// Expression spread relative to shape.
const EXPRESSION_SCALE: f64 = 0.3;

impl LatentPopulation {
    pub fn synthetic(seed: u64, dim: usize) -> Result<Self> {
        if dim == 0 || dim > N_SHAPE {
            return Err(Error::InvalidInput(format!("population dimension must be in 1..={N_SHAPE}, got {dim}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let norm = 1.0 / (dim as f64).sqrt();
        let mut basis = DMatrix::zeros(GEOMETRY_DIM, dim);
        for k in 0..dim {
            for i in ALPHA..ALPHA + N_SHAPE {
                basis[(i, k)] = norm * rng.sample::<f64, _>(StandardNormal);
            }
            for i in DELTA..DELTA + N_EXPRESSION {
                basis[(i, k)] = EXPRESSION_SCALE * norm * rng.sample::<f64, _>(StandardNormal);
            }
        }
        Ok(Self { basis })
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    /// One member with standard-normal coordinates.
    pub fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        let c = DVector::from_fn(self.dim(), |_, _| rng.sample(StandardNormal));
        (&self.basis * c).as_slice().to_vec()
    }

    pub fn samples(&self, seed: u64, n: usize) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| self.sample(&mut rng)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::synth::{synthesize_model, BasisEnergy};
    use std::sync::OnceLock;

    struct Fixture {
        model: FaceModel,
        training: Vec<Vec<f64>>,
        population: LatentPopulation,
    }

    fn fixture() -> &'static Fixture {
        static F: OnceLock<Fixture> = OnceLock::new();
        F.get_or_init(|| {
            let model = synthesize_model(4, 642, &BasisEnergy::default()).unwrap();
            let population = LatentPopulation::synthetic(9, 8).unwrap();
            let training = population.samples(1, 40);
            Fixture {
                model,
                training,
                population,
            }
        })
    }

    fn pair() -> (ReferenceGenerator<'static>, ReferenceDiscriminator) {
        let f = fixture();
        reference_gan(&f.model, CameraIntrinsics::canonical(&f.model), &f.training, 8, 3).unwrap()
    }

    #[test]
    fn zero_latent_renders_training_mean() {
        let f = fixture();
        let (g, _) = pair();
        let mut mean = vec![0.0; GEOMETRY_DIM];
        for c in &f.training {
            for (m, v) in mean.iter_mut().zip(c) {
                *m += v / f.training.len() as f64;
            }
        }
        let expect = normalize_render_geometry(&f.model, &mean, g.intrinsics()).unwrap();
        let got = g.generate(&[0.0; 8]).unwrap();
        let worst = got.pixels.iter().zip(&expect.pixels).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-9, "{worst}");
    }

    #[test]
    fn population_members_are_exactly_representable() {
        let f = fixture();
        let (g, _) = pair();
        let fresh = f.population.samples(77, 3);
        for c in &fresh {
            let z = g.encode_geometry(c).unwrap();
            let back = g.readout(&z).unwrap();
            let err = back.iter().zip(c).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-9, "{err}");
        }
    }

    #[test]
    fn discriminator_prefers_typical_faces() {
        let f = fixture();
        let (g, d) = pair();
        let typical = g.encode_geometry(&f.training[0]).unwrap();
        let mut far = vec![0.0; 8];
        far[0] = 10.0;
        let a = d.score(&g.generate(&typical).unwrap()).unwrap();
        let b = d.score(&g.generate(&far).unwrap()).unwrap();
        assert!(a > b, "{a} vs {b}");
        for s in [a, b] {
            assert!(s > 0.0 && s < 1.0);
        }
    }

    #[test]
    fn discriminator_gradient_matches_differences() {
        let (g, d) = pair();
        let img = g.generate(&[0.5, -0.3, 0.2, 0.0, 1.0, -1.0, 0.4, 0.1]).unwrap();
        let (_, grad) = d.score_gradient(&img).unwrap();
        let h = 1e-6;
        for k in [0usize, 3 * (120 * 240 + 120), 3 * (100 * 240 + 90) + 2, 3 * (239 * 240 + 239) + 1] {
            let mut p = img.clone();
            let mut m = img.clone();
            p.pixels[k] += h;
            m.pixels[k] -= h;
            let fd = (d.score(&p).unwrap() - d.score(&m).unwrap()) / (2.0 * h);
            assert!((fd - grad[k]).abs() <= 1e-6 * grad[k].abs().max(1e-6), "{k}: {fd} vs {}", grad[k]);
        }
    }

    #[test]
    fn rank_deficient_and_small_sets_rejected() {
        let f = fixture();
        let intr = CameraIntrinsics::canonical(&f.model);
        assert!(matches!(
            reference_gan(&f.model, intr, &f.training, 9, 0),
            Err(Error::RankDeficient(_))
        ));
        assert!(reference_gan(&f.model, intr, &f.training[..19], 4, 0).is_err());
        assert!(reference_gan(&f.model, intr, &f.training, 0, 0).is_err());
    }

    #[test]
    fn generator_vjp_matches_fixed_coverage_differences() {
        let (g, _) = pair();
        let z = [0.3, -0.2, 0.5, 0.1, -0.4, 0.0, 0.2, 0.6];
        let base = g.generate(&z).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let weights: Vec<f64> = (0..base.pixels.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (_, gz) = g.generate_vjp(&z, &weights).unwrap();
        let f = |z: &[f64]| -> f64 {
            let img = g.generate_with_coverage(z, &base.coverage).unwrap();
            img.pixels.iter().zip(&weights).map(|(a, b)| a * b).sum()
        };
        let h = 1e-6;
        for k in 0..8 {
            let mut p = z.to_vec();
            let mut m = z.to_vec();
            p[k] += h;
            m[k] -= h;
            let fd = (f(&p) - f(&m)) / (2.0 * h);
            assert!((fd - gz[k]).abs() / gz[k].abs().max(1.0) < 1e-5, "{k}: {fd} vs {}", gz[k]);
        }
    }
}
