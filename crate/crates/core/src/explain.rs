//! Occlusion explainers: classic OSA on class probabilities, representation
//! OSA on feature vectors, and OSA-DAS on augmentation subspaces.
//!
//! All three share the same composition rule: every mask adds its
//! responsibility `r` to the pixels it occludes, and the sum is renormalized.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{AugmentationPolicy, DrawKey};
use crate::backend::{argmax, resolve_saliency, Backend, SaliencyFallback, SaliencyScalar};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::mask::{apply_mask, sample_anchors, sliding_masks, AnchorSampling, Mask, SaliencyWeights};
use crate::rng::external_rng;
use crate::subspace::{
    canonical_cosines, lp_responsibility, uncentered_pca, FeatureVector, SimilarityMode, SubspaceBasis,
};

/// How occlusion masks are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MaskMode {
    /// Every window position at the given stride; the mask count is ignored.
    Sliding { stride: usize },
    /// Anchors drawn uniformly, with overlap filtering.
    Random,
    /// Anchors drawn from the input saliency, with overlap filtering.
    Gradient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplainerConfig {
    /// Number of masks `n_m`.
    pub masks: usize,
    /// Feature vectors per subspace `n_a`, the un-augmented input included.
    pub augmentations: usize,
    /// Canonical angles `n_c`.
    pub angles: usize,
    /// Mask side `l` in pixels.
    pub mask_size: usize,
    pub policy: AugmentationPolicy,
    pub mask_mode: MaskMode,
    pub overlap_iou: f64,
    /// Norm order for representation OSA.
    pub norm_order: f64,
    pub similarity: SimilarityMode,
    pub saliency_scalar: SaliencyScalar,
    pub saliency_fallback: SaliencyFallback,
    pub seed: u64,
    /// Worker threads for mask evaluation; 0 uses the global pool.
    pub workers: usize,
}

impl Default for ExplainerConfig {
    fn default() -> Self {
        Self {
            masks: 64,
            augmentations: 32,
            angles: 4,
            mask_size: 64,
            policy: AugmentationPolicy::trivial(0),
            mask_mode: MaskMode::Gradient,
            overlap_iou: crate::mask::DEFAULT_OVERLAP_IOU,
            norm_order: 2.0,
            similarity: SimilarityMode::Mean,
            saliency_scalar: SaliencyScalar::FeatureNorm,
            saliency_fallback: SaliencyFallback::default(),
            seed: 0,
            workers: 0,
        }
    }
}

impl ExplainerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("masks (n_m)", self.masks),
            ("augmentations (n_a)", self.augmentations),
            ("angles (n_c)", self.angles),
            ("mask size (l)", self.mask_size),
        ];
        for (name, value) in positive {
            if value == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be >= 1")));
            }
        }
        if self.angles > self.augmentations {
            return Err(Error::InvalidConfig(format!(
                "angles (n_c = {}) must not exceed augmentations (n_a = {})",
                self.angles, self.augmentations
            )));
        }
        if let MaskMode::Sliding { stride: 0 } = self.mask_mode {
            return Err(Error::InvalidConfig("sliding stride must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.overlap_iou) {
            return Err(Error::InvalidConfig("overlap IoU must lie in [0, 1]".into()));
        }
        if !(self.norm_order >= 1.0) {
            return Err(Error::InvalidConfig("norm order must be >= 1".into()));
        }
        self.policy.validate()
    }
}

/// Non-negative attribution map over pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    height: usize,
    width: usize,
    grid: Vec<f64>,
    normalized: bool,
}

impl Heatmap {
    pub fn new(height: usize, width: usize, grid: Vec<f64>, normalized: bool) -> Result<Self> {
        if grid.len() != height * width {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{}", height, width),
                found: format!("{} values", grid.len()),
            });
        }
        Ok(Self {
            height,
            width,
            grid,
            normalized,
        })
    }

    /// Normalizes `grid` to sum 1. An all-zero grid is returned as is and
    /// flagged as unnormalized.
    pub fn normalize(height: usize, width: usize, mut grid: Vec<f64>) -> Result<Self> {
        let total: f64 = grid.iter().sum();
        let normalized = total > 0.0 && total.is_finite();
        if normalized {
            for v in &mut grid {
                *v /= total;
            }
        }
        Self::new(height, width, grid, normalized)
    }

    pub fn uniform(height: usize, width: usize) -> Self {
        let n = height * width;
        Self {
            height,
            width,
            grid: vec![1.0 / n as f64; n],
            normalized: true,
        }
    }

    /// i.i.d. uniform values from a seeded stream, normalized.
    pub fn random(height: usize, width: usize, seed: u64) -> Self {
        let mut rng = external_rng(seed, 17);
        let grid = (0..height * width).map(|_| rng.random::<f64>()).collect();
        Self::normalize(height, width, grid).expect("random grid has matching shape")
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn into_grid(self) -> Vec<f64> {
        self.grid
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn sum(&self) -> f64 {
        self.grid.iter().sum()
    }
}

/// Heatmap plus the per-mask evidence behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct Explanation {
    pub heatmap: Heatmap,
    pub masks: Vec<Mask>,
    /// Responsibility of each mask, in mask order.
    pub responsibilities: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Masks for `image` according to the configured mode.
pub fn generate_masks<B: Backend + ?Sized>(
    image: &Image,
    backend: &B,
    config: &ExplainerConfig,
) -> Result<(Vec<Mask>, Vec<String>)> {
    let shape = (image.height(), image.width());
    let mut warnings = Vec::new();
    let weights = match config.mask_mode {
        MaskMode::Sliding { stride } => return Ok((sliding_masks(shape, config.mask_size, stride)?, warnings)),
        MaskMode::Random => SaliencyWeights::uniform(shape.0, shape.1),
        MaskMode::Gradient => {
            if !backend.capabilities().has_saliency
                && config.saliency_fallback == SaliencyFallback::Uniform
            {
                warnings.push("backend has no saliency; anchors drawn from uniform weights".to_string());
            }
            resolve_saliency(backend, image, config.saliency_scalar, config.saliency_fallback)?
        }
    };
    let params = AnchorSampling {
        count: config.masks,
        side: config.mask_size,
        overlap_threshold: config.overlap_iou,
        seed: config.seed,
        max_attempts: None,
    };
    let sample = sample_anchors(&weights, &params)?;
    if sample.shortfall(config.masks) {
        warnings.push(format!(
            "anchor sampling accepted {} of {} masks after {} draws",
            sample.masks.len(),
            config.masks,
            sample.attempts
        ));
    }
    Ok((sample.masks, warnings))
}

/// Evaluates `score` for every mask, on a bounded pool when `workers > 0`.
/// Results come back in mask order whatever the completion order.
fn score_masks<T, F>(masks: &[Mask], workers: usize, score: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &Mask) -> Result<T> + Sync + Send,
{
    let run = || masks.par_iter().enumerate().map(|(i, m)| score(i, m)).collect();
    if workers == 0 {
        run()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Inference(format!("cannot start worker pool: {e}")))?
            .install(run)
    }
}

/// `Σᵢ (1 − Mᵢ)·rᵢ`, accumulated in mask order, then normalized.
fn compose(image: &Image, masks: Vec<Mask>, responsibilities: Vec<f64>, mut warnings: Vec<String>) -> Result<Explanation> {
    let (h, w) = (image.height(), image.width());
    let mut grid = vec![0.0; h * w];
    for (mask, &r) in masks.iter().zip(&responsibilities) {
        for row in mask.rows() {
            for v in &mut grid[row * w + mask.cols().start..row * w + mask.cols().end] {
                *v += r;
            }
        }
    }
    let heatmap = Heatmap::normalize(h, w, grid)?;
    if !heatmap.is_normalized() {
        let msg = "no mask changed the model output; heatmap is all zeros".to_string();
        log::warn!("{msg}");
        warnings.push(msg);
    }
    Ok(Explanation {
        heatmap,
        masks,
        responsibilities,
        warnings,
    })
}

/// Classic OSA: `r = clamp(1 − p(x⊙M)/p(x), 0, 1)` for one class.
///
/// `class_index` defaults to the top class of the unperturbed image.
pub fn osa_classic<B: Backend + ?Sized>(
    image: &Image,
    backend: &B,
    masks: Vec<Mask>,
    class_index: Option<usize>,
    workers: usize,
) -> Result<Explanation> {
    let probs = backend.infer_probabilities(image)?;
    let class = class_index.unwrap_or_else(|| argmax(&probs));
    let reference = *probs.get(class).ok_or_else(|| {
        Error::InvalidConfig(format!("class index {class} out of range for {} classes", probs.len()))
    })?;
    if !(reference > 0.0) {
        return Err(Error::ZeroReferenceProbability(class));
    }
    let rs = score_masks(&masks, workers, |_, m| {
        let p = backend.infer_probabilities(&apply_mask(image, m)?)?[class];
        Ok((1.0 - p / reference).clamp(0.0, 1.0))
    })?;
    compose(image, masks, rs, Vec::new())
}

/// Representation OSA: `r = ‖v − v(x⊙M)‖_p / ‖v‖_p` on raw feature vectors.
pub fn osa_representation<B: Backend + ?Sized>(
    image: &Image,
    backend: &B,
    masks: Vec<Mask>,
    p_order: f64,
    workers: usize,
) -> Result<Explanation> {
    let reference = backend.raw_features(image)?;
    if !reference.iter().any(|v| *v != 0.0) {
        return Err(Error::DegenerateReference);
    }
    let rs = score_masks(&masks, workers, |_, m| {
        let masked = backend.raw_features(&apply_mask(image, m)?)?;
        lp_responsibility(&reference, &masked, p_order)
    })?;
    compose(image, masks, rs, Vec::new())
}

/// Subspace of `base` and `n − 1` augmentations of it.
fn augmentation_subspace<B: Backend + ?Sized>(
    backend: &B,
    base: &Image,
    policy: &AugmentationPolicy,
    n: usize,
    key: impl Fn(u64) -> DrawKey,
) -> Result<SubspaceBasis> {
    let mut features: Vec<FeatureVector> = Vec::with_capacity(n);
    features.push(backend.infer_features(base)?);
    for draw in 1..n as u64 {
        features.push(backend.infer_features(&policy.augment(base, key(draw)))?);
    }
    uncentered_pca(&features, n)
}

/// Per-mask outcome of OSA-DAS.
struct SubspaceScore {
    r: f64,
    clamped_to: Option<usize>,
}

/// OSA-DAS with masks generated from the config.
pub fn osa_das<B: Backend + ?Sized>(image: &Image, backend: &B, config: &ExplainerConfig) -> Result<Explanation> {
    config.validate()?;
    let (masks, warnings) = generate_masks(image, backend, config)?;
    osa_das_with_masks(image, backend, masks, config, warnings)
}

/// OSA-DAS over explicit masks.
///
/// The reference subspace comes from the input plus `n_a − 1` augmentations;
/// each occluded subspace from `x⊙M` plus `n_a − 1` augmentations drawn from
/// that mask's own stream. When either subspace has fewer than `n_c`
/// dimensions, `n_c` is clamped for that mask and a warning is recorded.
pub fn osa_das_with_masks<B: Backend + ?Sized>(
    image: &Image,
    backend: &B,
    masks: Vec<Mask>,
    config: &ExplainerConfig,
    mut warnings: Vec<String>,
) -> Result<Explanation> {
    config.validate()?;
    let policy = AugmentationPolicy {
        seed: config.seed,
        ..config.policy.clone()
    };
    let n_a = config.augmentations;
    let reference = augmentation_subspace(backend, image, &policy, n_a, DrawKey::reference)?;

    let scores = score_masks(&masks, config.workers, |i, m| {
        let occluded = apply_mask(image, m)?;
        let basis = augmentation_subspace(backend, &occluded, &policy, n_a, |d| DrawKey::occluded(i as u64, d))?;
        let available = reference.dim().min(basis.dim());
        let n_c = config.angles.min(available);
        let spectrum = canonical_cosines(&reference, &basis, n_c)?;
        let sim = spectrum.similarity();
        let r = match config.similarity {
            SimilarityMode::Mean => (1.0 - sim / n_c as f64).clamp(0.0, 1.0),
            SimilarityMode::Sum => 1.0 - sim,
        };
        Ok(SubspaceScore {
            r,
            clamped_to: (n_c < config.angles).then_some(n_c),
        })
    })?;

    let clamped: Vec<usize> = scores.iter().filter_map(|s| s.clamped_to).collect();
    if let Some(min) = clamped.iter().min() {
        let msg = format!(
            "n_c clamped from {} (down to {}) on {} of {} masks: subspaces were rank deficient",
            config.angles,
            min,
            clamped.len(),
            scores.len()
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let rs = scores.into_iter().map(|s| s.r).collect();
    compose(image, masks, rs, warnings)
}

/// Element-wise sum of normalized heatmaps, renormalized.
pub fn compose_heatmaps(heatmaps: &[Heatmap]) -> Result<Heatmap> {
    let first = heatmaps
        .first()
        .ok_or_else(|| Error::InvalidConfig("cannot compose an empty list of heatmaps".into()))?;
    let (h, w) = (first.height, first.width);
    let mut grid = vec![0.0; h * w];
    for hm in heatmaps {
        if (hm.height, hm.width) != (h, w) {
            return Err(Error::ShapeMismatch {
                expected: format!("{h}x{w}"),
                found: format!("{}x{}", hm.height, hm.width),
            });
        }
        for (acc, v) in grid.iter_mut().zip(&hm.grid) {
            *acc += v;
        }
    }
    Heatmap::normalize(h, w, grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::OpKind;
    use crate::backend::{LinearBackend, OracleRegionModel, Region};

    fn noise(seed: u64, h: usize, w: usize, c: usize) -> Image {
        let mut rng = external_rng(seed, 4);
        Image::from_fn(h, w, c, |_, _, _| 0.05 + 0.9 * rng.random::<f64>())
    }

    fn oracle() -> OracleRegionModel {
        OracleRegionModel::new(Region::new(8, 8, 8, 8), 3, 8, 3).unwrap()
    }

    #[test]
    fn classic_mask_covering_region() {
        let img = noise(1, 32, 32, 3);
        let m = Mask::centered((12, 12), 8, (32, 32));
        let e = osa_classic(&img, &oracle(), vec![m], None, 0).unwrap();
        // The uniform baseline keeps p above zero, so r = 1 − 0.1/p(x).
        let p = oracle().infer_probabilities(&img).unwrap();
        let top = argmax(&p);
        assert!((e.responsibilities[0] - (1.0 - 0.1 / p[top])).abs() < 1e-12);
        // Uniform over the mask square, zero elsewhere.
        for r in 0..32 {
            for c in 0..32 {
                let v = e.heatmap.grid()[r * 32 + c];
                if m.is_occluded(r, c) {
                    assert!((v - 1.0 / 64.0).abs() < 1e-12);
                } else {
                    assert_eq!(v, 0.0);
                }
            }
        }
    }

    #[test]
    fn classic_disjoint_mask_is_zero_with_warning() {
        let img = noise(2, 32, 32, 3);
        let m = Mask::centered((26, 26), 8, (32, 32));
        let e = osa_classic(&img, &oracle(), vec![m], None, 0).unwrap();
        assert_eq!(e.responsibilities, vec![0.0]);
        assert!(!e.heatmap.is_normalized());
        assert!(e.heatmap.grid().iter().all(|&v| v == 0.0));
        assert_eq!(e.warnings.len(), 1);
    }

    #[test]
    fn classic_needs_probabilities() {
        let b = LinearBackend::seeded((8, 8, 1), 3, 0);
        let err = osa_classic(&noise(3, 8, 8, 1), &b, vec![], None, 0).unwrap_err();
        assert_eq!(err, Error::MissingClassificationHead);
    }

    #[test]
    fn classic_zero_reference_probability() {
        // A head that is all -inf except class 1 cannot be built from finite
        // logits, so check with an out-of-range class instead.
        let b = LinearBackend::seeded((4, 4, 1), 3, 0).with_seeded_head(2, 0);
        assert!(osa_classic(&noise(4, 4, 4, 1), &b, vec![], Some(5), 0).is_err());
    }

    #[test]
    fn representation_matches_hand_computation() {
        let b = LinearBackend::seeded((6, 6, 1), 4, 7);
        let img = noise(5, 6, 6, 1);
        let m = Mask::centered((2, 3), 2, (6, 6));
        let e = osa_representation(&img, &b, vec![m], 2.0, 0).unwrap();
        let w = b.weights();
        let x = nalgebra::DVector::from_column_slice(img.data());
        let xm = nalgebra::DVector::from_column_slice(apply_mask(&img, &m).unwrap().data());
        let expected = ((w * &x) - (w * &xm)).norm() / (w * &x).norm();
        assert!((e.responsibilities[0] - expected.min(1.0)).abs() < 1e-8);
    }

    #[test]
    fn identical_masks_give_uniform_square() {
        let img = noise(6, 32, 32, 3);
        let m = Mask::centered((11, 13), 6, (32, 32));
        let e = osa_representation(&img, &oracle(), vec![m; 3], 2.0, 0).unwrap();
        let n = m.occluded_count() as f64;
        for (i, v) in e.heatmap.grid().iter().enumerate() {
            let expected = if m.is_occluded(i / 32, i % 32) { 1.0 / n } else { 0.0 };
            assert!((v - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn das_single_augmentation_collapses_to_dot_product() {
        let b = LinearBackend::seeded((8, 8, 3), 6, 11);
        let img = noise(7, 8, 8, 3);
        let masks = sliding_masks((8, 8), 3, 2).unwrap();
        let cfg = ExplainerConfig {
            augmentations: 1,
            angles: 1,
            mask_size: 3,
            ..Default::default()
        };
        let e = osa_das_with_masks(&img, &b, masks.clone(), &cfg, vec![]).unwrap();
        let v = b.infer_features(&img).unwrap();
        for (m, r) in masks.iter().zip(&e.responsibilities) {
            let vm = b.infer_features(&apply_mask(&img, m).unwrap()).unwrap();
            let expected = 1.0 - v.dot(&vm).powi(2);
            assert!((r - expected).abs() < 1e-9, "{r} vs {expected}");
        }
    }

    #[test]
    fn das_rank_deficiency_is_clamped() {
        let img = noise(8, 32, 32, 3);
        let cfg = ExplainerConfig {
            augmentations: 3,
            angles: 3,
            mask_size: 8,
            policy: AugmentationPolicy::trivial(0).with_pool(vec![OpKind::Identity]),
            ..Default::default()
        };
        let m = Mask::centered((12, 12), 8, (32, 32));
        let e = osa_das_with_masks(&img, &oracle(), vec![m], &cfg, vec![]).unwrap();
        assert!(e.warnings.iter().any(|w| w.contains("n_c clamped")));
        assert!(e.responsibilities[0] > 0.0);
    }

    #[test]
    fn das_oracle_nullity_without_augmentation() {
        let img = noise(9, 32, 32, 3);
        let cfg = ExplainerConfig {
            augmentations: 4,
            angles: 1,
            mask_size: 6,
            policy: AugmentationPolicy::disabled(),
            ..Default::default()
        };
        let far = Mask::centered((26, 26), 6, (32, 32));
        let e = osa_das_with_masks(&img, &oracle(), vec![far], &cfg, vec![]).unwrap();
        assert!(e.responsibilities[0] < 1e-12);
    }

    #[test]
    fn worker_count_does_not_change_result() {
        let img = noise(10, 32, 32, 3);
        let cfg = ExplainerConfig {
            masks: 12,
            augmentations: 4,
            angles: 2,
            mask_size: 8,
            mask_mode: MaskMode::Random,
            seed: 5,
            ..Default::default()
        };
        let a = osa_das(&img, &oracle(), &cfg).unwrap();
        let b = osa_das(&img, &oracle(), &ExplainerConfig { workers: 3, ..cfg.clone() }).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn config_validation() {
        let ok = ExplainerConfig::default();
        assert!(ok.validate().is_ok());
        for bad in [
            ExplainerConfig { masks: 0, ..ok.clone() },
            ExplainerConfig { augmentations: 0, ..ok.clone() },
            ExplainerConfig { angles: 0, ..ok.clone() },
            ExplainerConfig { mask_size: 0, ..ok.clone() },
            ExplainerConfig { angles: 40, ..ok.clone() },
            ExplainerConfig { overlap_iou: 1.5, ..ok.clone() },
            ExplainerConfig { norm_order: 0.5, ..ok.clone() },
            ExplainerConfig { mask_mode: MaskMode::Sliding { stride: 0 }, ..ok.clone() },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn compose_examples() {
        let h = Heatmap::random(4, 5, 3);
        let once = compose_heatmaps(std::slice::from_ref(&h)).unwrap();
        for (a, b) in once.grid().iter().zip(h.grid()) {
            assert!((a - b).abs() < 1e-15);
        }
        let twice = compose_heatmaps(&[h.clone(), h.clone()]).unwrap();
        for (a, b) in twice.grid().iter().zip(h.grid()) {
            assert!((a - b).abs() < 1e-15);
        }
        let mut g1 = vec![0.0; 4];
        g1[0] = 1.0;
        let mut g2 = vec![0.0; 4];
        g2[3] = 1.0;
        let c = compose_heatmaps(&[
            Heatmap::new(2, 2, g1, true).unwrap(),
            Heatmap::new(2, 2, g2, true).unwrap(),
        ])
        .unwrap();
        assert_eq!(c.grid(), &[0.5, 0.0, 0.0, 0.5]);
        assert!(compose_heatmaps(&[Heatmap::uniform(2, 2), Heatmap::uniform(2, 3)]).is_err());
        assert!(compose_heatmaps(&[]).is_err());
    }
}
