//! Test helpers shared by the integration suites.
#![allow(dead_code)]

use osadas_core::rng::external_rng;
use osadas_core::subspace::{uncentered_pca, FeatureVector, SubspaceBasis};
use osadas_core::Image;
use rand::Rng;

/// Cyclic Jacobi eigensolver for a small dense symmetric matrix stored
/// row-major. Returns eigenvalues sorted descending with matching
/// eigenvectors as columns of a row-major `n×n` matrix.
pub fn jacobi_eigen(a: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut a = a.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j].powi(2))
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a[y * n + y].total_cmp(&a[x * n + x]));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let mut vectors = vec![0.0; n * n];
    for (c, &src) in order.iter().enumerate() {
        for r in 0..n {
            vectors[r * n + c] = v[r * n + src];
        }
    }
    (values, vectors)
}

/// `Σ vᵢvᵢᵀ`, row-major.
pub fn autocorrelation(vectors: &[Vec<f64>]) -> Vec<f64> {
    let k = vectors[0].len();
    let mut out = vec![0.0; k * k];
    for v in vectors {
        for i in 0..k {
            for j in 0..k {
                out[i * k + j] += v[i] * v[j];
            }
        }
    }
    out
}

pub fn random_unit_vectors(seed: u64, count: usize, k: usize) -> Vec<FeatureVector> {
    let mut rng = external_rng(seed, 100);
    (0..count)
        .map(|_| FeatureVector::normalized((0..k).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap())
        .collect()
}

/// A random `d`-dimensional subspace of `R^k`.
pub fn random_subspace(seed: u64, k: usize, d: usize) -> SubspaceBasis {
    let basis = uncentered_pca(&random_unit_vectors(seed, d, k), d).unwrap();
    assert_eq!(basis.dim(), d);
    basis
}

pub fn noise_image(seed: u64, h: usize, w: usize, c: usize) -> Image {
    let mut rng = external_rng(seed, 200);
    Image::from_fn(h, w, c, |_, _, _| 0.05 + 0.9 * rng.random::<f64>())
}

/// Largest entry of `|VᵀV − I|`.
pub fn orthonormality_error(basis: &SubspaceBasis) -> f64 {
    let v = basis.columns();
    let gram = v.tr_mul(v);
    let mut worst: f64 = 0.0;
    for i in 0..gram.nrows() {
        for j in 0..gram.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[(i, j)] - target).abs());
        }
    }
    worst
}
