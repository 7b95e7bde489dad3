//! Deep-feature subspaces: uncentered PCA, canonical angles and the
//! orthogonal degree used as a per-occlusion responsibility score.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Feature vectors with an ℓ2 norm below this cannot be normalized.
pub const DEGENERATE_NORM: f64 = 1e-12;

/// Eigenvalues below `RANK_TOLERANCE · λ_max` are treated as numerical zero.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Largest ambient dimension for which the `k×k` autocorrelation matrix is
/// formed explicitly. Above it the `m×m` Gram matrix is decomposed instead.
pub const AUTOCORRELATION_MAX_DIM: usize = 1024;

/// A unit-length deep feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    /// Normalizes `raw` to unit ℓ2 length.
    pub fn normalized(mut raw: Vec<f64>) -> Result<Self> {
        let norm = l2_norm(&raw);
        if !(norm >= DEGENERATE_NORM) {
            return Err(Error::DegenerateFeature(DEGENERATE_NORM));
        }
        for v in &mut raw {
            *v /= norm;
        }
        Ok(Self(raw))
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &FeatureVector) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }
}

/// Orthonormal basis of a subspace together with the autocorrelation
/// spectrum it was extracted from.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceBasis {
    columns: DMatrix<f64>,
    eigenvalues: Vec<f64>,
}

impl SubspaceBasis {
    /// `k×d` matrix whose columns are the basis vectors.
    pub fn columns(&self) -> &DMatrix<f64> {
        &self.columns
    }

    /// Non-increasing eigenvalues matching the columns.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn ambient_dim(&self) -> usize {
        self.columns.nrows()
    }

    pub fn dim(&self) -> usize {
        self.columns.ncols()
    }

    /// ℓ2 norm of the component of `v` orthogonal to the subspace.
    pub fn residual_norm(&self, v: &[f64]) -> f64 {
        let v = DVector::from_column_slice(v);
        let coeffs = self.columns.tr_mul(&v);
        (v - &self.columns * coeffs).norm()
    }
}

/// Which symmetric matrix feeds the eigen-solver in [`uncentered_pca_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigenPath {
    /// Autocorrelation for `k ≤ AUTOCORRELATION_MAX_DIM`, Gram otherwise.
    Auto,
    /// `Σ vᵢvᵢᵀ`, a `k×k` matrix.
    Autocorrelation,
    /// `AᵀA`, an `m×m` matrix with the same non-zero spectrum.
    Gram,
}

/// Uncentered PCA of a set of unit feature vectors.
///
/// The basis holds the leading eigenvectors of `Σ vᵢvᵢᵀ`; its dimension is the
/// numerical rank of that matrix capped at `max_dim`.
pub fn uncentered_pca(vectors: &[FeatureVector], max_dim: usize) -> Result<SubspaceBasis> {
    uncentered_pca_with(vectors, max_dim, EigenPath::Auto)
}

pub fn uncentered_pca_with(
    vectors: &[FeatureVector],
    max_dim: usize,
    path: EigenPath,
) -> Result<SubspaceBasis> {
    let first = vectors.first().ok_or(Error::EmptyFeatureSet)?;
    if max_dim == 0 {
        return Err(Error::InvalidConfig("subspace max_dim must be at least 1".into()));
    }
    let k = first.dim();
    if let Some(bad) = vectors.iter().find(|v| v.dim() != k) {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: bad.dim(),
        });
    }
    let m = vectors.len();
    let data = DMatrix::from_fn(k, m, |r, c| vectors[c].as_slice()[r]);

    let use_gram = match path {
        EigenPath::Auto => k > AUTOCORRELATION_MAX_DIM,
        EigenPath::Autocorrelation => false,
        EigenPath::Gram => true,
    };

    let (values, vectors_k) = if use_gram {
        let gram = data.tr_mul(&data);
        let (values, w) = sorted_eigen(gram);
        (values, w)
    } else {
        let auto = &data * data.transpose();
        sorted_eigen(auto)
    };

    let lambda_max = values[0].max(0.0);
    let rank = values
        .iter()
        .take_while(|&&v| v > RANK_TOLERANCE * lambda_max)
        .count()
        .max(1);
    let d = rank.min(max_dim).min(m).min(k);
    let eigenvalues: Vec<f64> = values[..d].iter().map(|v| v.max(0.0)).collect();

    let columns = if use_gram {
        // uᵢ = A wᵢ / √λᵢ, then a QR pass to restore orthonormality lost to
        // roundoff on small eigenvalues.
        let mut u = DMatrix::zeros(k, d);
        for (i, ev) in eigenvalues.iter().enumerate() {
            let scale = ev.sqrt().max(f64::MIN_POSITIVE);
            let col = &data * vectors_k.column(i) / scale;
            u.set_column(i, &col);
        }
        let qr = u.clone().qr();
        let mut q = qr.q();
        // Keep each column's orientation aligned with the unrefined vector.
        for i in 0..d {
            if q.column(i).dot(&u.column(i)) < 0.0 {
                q.column_mut(i).neg_mut();
            }
        }
        q
    } else {
        vectors_k.columns(0, d).into_owned()
    };

    Ok(SubspaceBasis {
        columns,
        eigenvalues,
    })
}

/// Eigen-decomposition of a symmetric matrix with eigenpairs sorted by
/// non-increasing eigenvalue.
fn sorted_eigen(matrix: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(matrix);
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(eig.eigenvectors.nrows(), n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Cosines of the smallest canonical angles between two subspaces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalSpectrum {
    cosines: Vec<f64>,
}

impl CanonicalSpectrum {
    /// Non-increasing cosines in `[0, 1]`.
    pub fn cosines(&self) -> &[f64] {
        &self.cosines
    }

    pub fn len(&self) -> usize {
        self.cosines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cosines.is_empty()
    }

    /// `Σ cos²θᵢ`, the structural similarity.
    pub fn similarity(&self) -> f64 {
        self.cosines.iter().map(|c| c * c).sum()
    }
}

/// The `n_c` largest singular values of `VᵀW`.
pub fn canonical_cosines(v: &SubspaceBasis, w: &SubspaceBasis, n_c: usize) -> Result<CanonicalSpectrum> {
    if v.ambient_dim() != w.ambient_dim() {
        return Err(Error::DimensionMismatch {
            expected: v.ambient_dim(),
            found: w.ambient_dim(),
        });
    }
    let available = v.dim().min(w.dim());
    if n_c == 0 || n_c > available {
        return Err(Error::AnglesExceedDimension {
            requested: n_c,
            available,
        });
    }
    let product = v.columns.tr_mul(&w.columns);
    let mut sigma: Vec<f64> = product.singular_values().iter().copied().collect();
    sigma.sort_by(|a, b| b.total_cmp(a));
    sigma.truncate(n_c);
    for s in &mut sigma {
        *s = s.clamp(0.0, 1.0);
    }
    Ok(CanonicalSpectrum { cosines: sigma })
}

/// How the squared cosines are combined into a similarity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimilarityMode {
    /// `1 − (1/n_c)·Σ cos²θᵢ`, always in `[0, 1]`.
    #[default]
    Mean,
    /// `1 − Σ cos²θᵢ`; negative whenever more than one angle is near zero.
    Sum,
}

/// Orthogonal degree between two subspaces.
pub fn orthogonal_degree(
    v: &SubspaceBasis,
    w: &SubspaceBasis,
    n_c: usize,
    mode: SimilarityMode,
) -> Result<f64> {
    let spectrum = canonical_cosines(v, w, n_c)?;
    let sim = spectrum.similarity();
    Ok(match mode {
        SimilarityMode::Mean => (1.0 - sim / spectrum.len() as f64).clamp(0.0, 1.0),
        SimilarityMode::Sum => 1.0 - sim,
    })
}

/// `‖v − v_masked‖_p / ‖v‖_p`, clamped to `[0, 1]`. `p` may be infinite.
pub fn lp_responsibility(v: &[f64], v_masked: &[f64], p: f64) -> Result<f64> {
    if v.len() != v_masked.len() {
        return Err(Error::DimensionMismatch {
            expected: v.len(),
            found: v_masked.len(),
        });
    }
    if !(p >= 1.0) {
        return Err(Error::InvalidConfig(format!("norm order must be >= 1, got {p}")));
    }
    let reference = lp_norm(v.iter().copied(), p);
    if !(reference > 0.0) {
        return Err(Error::DegenerateReference);
    }
    let diff = lp_norm(v.iter().zip(v_masked).map(|(a, b)| a - b), p);
    Ok((diff / reference).clamp(0.0, 1.0))
}

pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn lp_norm(values: impl Iterator<Item = f64>, p: f64) -> f64 {
    if p.is_infinite() {
        values.fold(0.0, |m, x| m.max(x.abs()))
    } else if p == 1.0 {
        values.map(f64::abs).sum()
    } else if p == 2.0 {
        values.map(|x| x * x).sum::<f64>().sqrt()
    } else {
        values.map(|x| x.abs().powf(p)).sum::<f64>().powf(1.0 / p)
    }
}
