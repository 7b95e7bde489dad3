//! Fixtures shared by the benchmarks.

use osadas_core::backend::{OracleRegionModel, Region};
use osadas_core::rng::external_rng;
use osadas_core::subspace::FeatureVector;
use osadas_core::Image;
use rand::Rng;

pub fn noise_image(seed: u64, side: usize) -> Image {
    let mut rng = external_rng(seed, 500);
    Image::from_fn(side, side, 3, |_, _, _| rng.random::<f64>())
}

pub fn unit_vectors(seed: u64, count: usize, k: usize) -> Vec<FeatureVector> {
    let mut rng = external_rng(seed, 501);
    (0..count)
        .map(|_| FeatureVector::normalized((0..k).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap())
        .collect()
}

/// 32×32 region at (96, 96), sized for 224×224 inputs.
pub fn oracle() -> OracleRegionModel {
    OracleRegionModel::new(Region::new(96, 96, 32, 32), 3, 16, 0).expect("valid oracle")
}
