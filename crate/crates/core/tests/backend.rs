mod common;

use common::noise_image;
use osadas_core::backend::*;
use osadas_core::mask::{apply_mask, Mask};
use osadas_core::{Error, Image};

#[test]
fn linear_saliency_matches_central_differences() {
    const H: f64 = 1e-4;
    for seed in 0..5 {
        let b = LinearBackend::seeded((4, 5, 3), 6, seed);
        let img = noise_image(seed, 4, 5, 3);
        let grad = b.saliency_gradient(&img, SaliencyScalar::FeatureNorm).unwrap();
        let scale = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        let norm = |data: Vec<f64>| {
            let f = b.raw_features(&Image::from_vec(4, 5, 3, data).unwrap()).unwrap();
            f.iter().map(|x| x * x).sum::<f64>().sqrt()
        };
        for i in 0..img.data().len() {
            let mut up = img.data().to_vec();
            let mut down = img.data().to_vec();
            up[i] += H;
            down[i] -= H;
            let fd = (norm(up) - norm(down)) / (2.0 * H);
            assert!((fd - grad[i]).abs() <= 1e-5 * scale, "seed {seed} sample {i}: {fd} vs {}", grad[i]);
        }
    }
}

#[test]
fn grid_fallback_recovers_linear_logit_gradient() {
    // Single channel, pitch 1, linear scalar: central differences are exact.
    let b = LinearBackend::seeded((6, 6, 1), 4, 3).with_seeded_head(5, 3);
    let img = noise_image(8, 6, 6, 1);
    let fd = finite_difference_saliency(&b, &img, SaliencyScalar::MaxLogit, 1).unwrap();
    let analytic = b.input_saliency(&img, SaliencyScalar::MaxLogit).unwrap().unwrap();
    for (a, f) in analytic.grid().iter().zip(fd.grid()) {
        assert!((a - f).abs() < 1e-9);
    }
}

#[test]
fn linear_features_of_basis_image_are_a_column() {
    let b = LinearBackend::seeded((2, 2, 1), 3, 4);
    let mut data = vec![0.0; 4];
    data[0] = 1.0;
    let f = b.infer_features(&Image::from_vec(2, 2, 1, data).unwrap()).unwrap();
    let col = b.weights().column(0);
    let n = col.norm();
    for (got, w) in f.as_slice().iter().zip(col.iter()) {
        assert!((got - w / n).abs() < 1e-12);
    }
}

#[test]
fn zero_image_has_degenerate_features() {
    let b = LinearBackend::seeded((3, 3, 1), 2, 0);
    let err = b.infer_features(&Image::zeros(3, 3, 1)).unwrap_err();
    assert!(matches!(err, Error::DegenerateFeature(_)));
    assert!(b.input_saliency(&Image::zeros(3, 3, 1), SaliencyScalar::FeatureNorm).is_err());
}

#[test]
fn oracle_ignores_pixels_outside_region() {
    let region = Region::new(5, 6, 4, 3);
    let model = OracleRegionModel::new(region, 1, 8, 2).unwrap();
    let img = noise_image(1, 16, 16, 1);
    let f0 = model.raw_features(&img).unwrap();
    let p0 = model.infer_probabilities(&img).unwrap();
    for r in 0..16 {
        for c in 0..16 {
            let mut changed = img.clone();
            changed.set(r, c, 0, 1.0 - img.get(r, c, 0));
            let same = model.raw_features(&changed).unwrap() == f0 && model.infer_probabilities(&changed).unwrap() == p0;
            assert_eq!(same, !region.contains(r, c), "pixel ({r},{c})");
        }
    }
}

#[test]
fn oracle_occluded_region_gives_uniform_distribution() {
    let model = OracleRegionModel::new(Region::new(8, 8, 8, 8), 3, 16, 0).unwrap();
    let img = noise_image(2, 32, 32, 3);
    let occluded = apply_mask(&img, &Mask::centered((12, 12), 8, (32, 32))).unwrap();
    let p = model.infer_probabilities(&occluded).unwrap();
    assert!(p.iter().all(|v| (v - 0.1).abs() < 1e-12));
}

#[test]
fn oracle_saliency_stays_in_region() {
    let model = OracleRegionModel::new(Region::new(2, 3, 5, 4), 3, 16, 1).unwrap();
    let img = noise_image(3, 12, 12, 3);
    for scalar in [SaliencyScalar::FeatureNorm, SaliencyScalar::MaxLogit] {
        let w = model.input_saliency(&img, scalar).unwrap().unwrap();
        let inside: f64 = model.region().pixels(12).map(|p| w.grid()[p]).sum();
        assert!((inside - 1.0).abs() < 1e-9);
    }
}

#[test]
fn probabilities_sum_to_one() {
    let b = LinearBackend::seeded((5, 5, 3), 4, 9).with_seeded_head(7, 9);
    for seed in 0..50 {
        let p = b.infer_probabilities(&noise_image(seed, 5, 5, 3)).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        assert!(p.iter().all(|v| *v >= 0.0));
    }
}

#[test]
fn features_only_backend_has_no_probabilities() {
    let b = LinearBackend::seeded((3, 3, 1), 2, 0);
    assert_eq!(b.infer_probabilities(&noise_image(0, 3, 3, 1)).unwrap_err(), Error::MissingClassificationHead);
}

#[test]
fn inference_is_deterministic_and_batch_equivalent() {
    let b = LinearBackend::seeded((4, 4, 3), 5, 1);
    let images: Vec<Image> = (0..4).map(|s| noise_image(s, 4, 4, 3)).collect();
    let batch = b.raw_features_batch(&images).unwrap();
    for (img, f) in images.iter().zip(&batch) {
        let single = b.raw_features(img).unwrap();
        assert_eq!(&single, f);
        assert_eq!(single, b.raw_features(img).unwrap());
    }
}

#[test]
fn registry_names() {
    let b = toy_from_name("oracle:32x32@(96,96)").unwrap().unwrap();
    assert_eq!(b.capabilities().feature_dim, OracleRegionModel::DEFAULT_FEATURE_DIM);
    assert!(b.raw_features(&Image::zeros(224, 224, 3)).is_ok());
    assert!(b.raw_features(&Image::zeros(100, 100, 3)).is_err());
    assert!(toy_from_name("linear:4x4x3;k=3;classes=2").unwrap().is_ok());
    assert!(toy_from_name("oracle:32x32").unwrap().is_err());
    assert!(toy_from_name("model.onnx").is_none());
}

#[test]
fn uniform_fallback_when_saliency_missing() {
    struct Plain;
    impl Backend for Plain {
        fn capabilities(&self) -> BackendCapabilities {
            BackendCapabilities { has_probabilities: false, has_saliency: false, feature_dim: 1 }
        }
        fn raw_features(&self, img: &Image) -> osadas_core::Result<Vec<f64>> {
            Ok(vec![img.data().iter().sum()])
        }
    }
    let img = noise_image(4, 4, 4, 1);
    let w = resolve_saliency(&Plain, &img, SaliencyScalar::FeatureNorm, SaliencyFallback::Uniform).unwrap();
    assert!(w.grid().iter().all(|v| (v - 1.0 / 16.0).abs() < 1e-15));
    let fd = resolve_saliency(&Plain, &img, SaliencyScalar::FeatureNorm, SaliencyFallback::default()).unwrap();
    assert!((fd.grid().iter().sum::<f64>() - 1.0).abs() < 1e-9);
}
