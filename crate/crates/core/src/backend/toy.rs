//! Analytic toy models used as test oracles and for gradient-free demos.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::{argmax, Backend, BackendCapabilities, SaliencyScalar};
use crate::error::{Error, Result};
use crate::image::{format_shape, Image};
use crate::mask::SaliencyWeights;
use crate::rng::external_rng;

/// `f(x) = W·vec(x)` with an optional linear classification head `U·f(x)`.
#[derive(Debug, Clone)]
pub struct LinearBackend {
    shape: (usize, usize, usize),
    weights: DMatrix<f64>,
    head: Option<DMatrix<f64>>,
}

impl LinearBackend {
    /// `weights` is `k × (H·W·C)` acting on the interleaved sample vector.
    pub fn new(shape: (usize, usize, usize), weights: DMatrix<f64>) -> Result<Self> {
        let n = shape.0 * shape.1 * shape.2;
        if weights.ncols() != n || weights.nrows() == 0 {
            return Err(Error::ShapeMismatch {
                expected: format!("k x {n} weights"),
                found: format!("{}x{}", weights.nrows(), weights.ncols()),
            });
        }
        Ok(Self {
            shape,
            weights,
            head: None,
        })
    }

    /// Weights uniform in `[-1, 1]` from a seeded stream.
    pub fn seeded(shape: (usize, usize, usize), k: usize, seed: u64) -> Self {
        let n = shape.0 * shape.1 * shape.2;
        let mut rng = external_rng(seed, 1);
        let weights = DMatrix::from_fn(k, n, |_, _| rng.random_range(-1.0..=1.0));
        Self::new(shape, weights).expect("seeded weights match shape")
    }

    pub fn with_head(mut self, head: DMatrix<f64>) -> Result<Self> {
        if head.ncols() != self.weights.nrows() {
            return Err(Error::ShapeMismatch {
                expected: format!("classes x {} head", self.weights.nrows()),
                found: format!("{}x{}", head.nrows(), head.ncols()),
            });
        }
        self.head = Some(head);
        Ok(self)
    }

    pub fn with_seeded_head(self, classes: usize, seed: u64) -> Self {
        let mut rng = external_rng(seed, 2);
        let head = DMatrix::from_fn(classes, self.weights.nrows(), |_, _| rng.random_range(-1.0..=1.0));
        self.with_head(head).expect("seeded head matches feature dim")
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    fn check(&self, image: &Image) -> Result<DVector<f64>> {
        if image.shape() != self.shape {
            return Err(Error::ShapeMismatch {
                expected: format_shape(self.shape),
                found: format_shape(image.shape()),
            });
        }
        Ok(DVector::from_column_slice(image.data()))
    }

    /// Gradient of the saliency scalar with respect to every input sample.
    ///
    /// For the feature norm `s(x) = ‖Wx‖₂` this is `Wᵀ(Wx)/‖Wx‖₂`.
    pub fn saliency_gradient(&self, image: &Image, scalar: SaliencyScalar) -> Result<Vec<f64>> {
        let x = self.check(image)?;
        let grad = match scalar {
            SaliencyScalar::FeatureNorm => {
                let f = &self.weights * x;
                let norm = f.norm();
                if norm == 0.0 {
                    return Err(Error::DegenerateSaliency);
                }
                self.weights.tr_mul(&f) / norm
            }
            SaliencyScalar::MaxLogit => {
                let head = self.head.as_ref().ok_or(Error::MissingClassificationHead)?;
                let logits = head * (&self.weights * x);
                let c = argmax(logits.as_slice());
                self.weights.tr_mul(&head.row(c).transpose())
            }
        };
        Ok(grad.as_slice().to_vec())
    }
}

impl Backend for LinearBackend {
    fn capabilities(&self) -> BackendCapabilities {
        BackendCapabilities {
            has_probabilities: self.head.is_some(),
            has_saliency: true,
            feature_dim: self.weights.nrows(),
        }
    }

    fn input_shape(&self) -> Option<(usize, usize, usize)> {
        Some(self.shape)
    }

    fn raw_features(&self, image: &Image) -> Result<Vec<f64>> {
        let x = self.check(image)?;
        Ok((&self.weights * x).as_slice().to_vec())
    }

    fn logits(&self, image: &Image) -> Result<Vec<f64>> {
        let head = self.head.as_ref().ok_or(Error::MissingClassificationHead)?;
        let x = self.check(image)?;
        Ok((head * (&self.weights * x)).as_slice().to_vec())
    }

    fn input_saliency(&self, image: &Image, scalar: SaliencyScalar) -> Result<Option<SaliencyWeights>> {
        let grad = self.saliency_gradient(image, scalar)?;
        Ok(Some(aggregate_channels(image, &grad)?))
    }
}

/// Sums `|g|` over channels per pixel and normalizes.
fn aggregate_channels(image: &Image, grad: &[f64]) -> Result<SaliencyWeights> {
    let ch = image.channels();
    let grid = grad.chunks_exact(ch).map(|px| px.iter().map(|g| g.abs()).sum()).collect();
    SaliencyWeights::new(image.height(), image.width(), grid)
}

/// Axis-aligned pixel rectangle with top-left corner `(top, left)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Region {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

impl Region {
    pub fn new(top: usize, left: usize, height: usize, width: usize) -> Self {
        Self {
            top,
            left,
            height,
            width,
        }
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        (self.top..self.top + self.height).contains(&row) && (self.left..self.left + self.width).contains(&col)
    }

    pub fn area(&self) -> usize {
        self.height * self.width
    }

    /// The region grown by `margin` pixels on every side, clipped to the image.
    pub fn dilated(&self, margin: usize, (h, w): (usize, usize)) -> Region {
        let top = self.top.saturating_sub(margin);
        let left = self.left.saturating_sub(margin);
        let bottom = (self.top + self.height + margin).min(h);
        let right = (self.left + self.width + margin).min(w);
        Region::new(top, left, bottom - top, right - left)
    }

    /// Row-major pixel indices in an image of width `w`.
    pub fn pixels(&self, w: usize) -> impl Iterator<Item = usize> + '_ {
        (self.top..self.top + self.height)
            .flat_map(move |r| (self.left..self.left + self.width).map(move |c| r * w + c))
    }
}

/// A model whose outputs depend only on the pixels inside a known region.
///
/// * features: `P·vec(x_R) + b` with seeded `P` and bias `b`, so a fully
///   occluded region still yields a non-degenerate feature vector;
/// * logits: `gain · w_c · mean(x_R)` with seeded class weights `w_c ∈ [0, 1]`,
///   so the top class is fixed and a fully occluded region gives the uniform
///   distribution;
/// * saliency: the analytic gradient of the chosen scalar, zero outside `R`.
#[derive(Debug, Clone)]
pub struct OracleRegionModel {
    region: Region,
    channels: usize,
    projection: DMatrix<f64>,
    bias: DVector<f64>,
    class_weights: Vec<f64>,
    gain: f64,
}

impl OracleRegionModel {
    pub const DEFAULT_FEATURE_DIM: usize = 16;
    pub const DEFAULT_CLASSES: usize = 10;
    pub const DEFAULT_GAIN: f64 = 10.0;

    pub fn new(region: Region, channels: usize, feature_dim: usize, seed: u64) -> Result<Self> {
        if region.area() == 0 || feature_dim == 0 {
            return Err(Error::InvalidConfig("oracle region and feature dim must be non-empty".into()));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidConfig(format!("oracle channels must be 1 or 3, got {channels}")));
        }
        let inputs = region.area() * channels;
        let scale = (3.0 / inputs as f64).sqrt();
        let mut rng = external_rng(seed, 3);
        let projection = DMatrix::from_fn(feature_dim, inputs, |_, _| scale * rng.random_range(-1.0..=1.0));
        let bias = DVector::from_fn(feature_dim, |_, _| rng.random_range(-1.0..=1.0));
        let class_weights = (0..Self::DEFAULT_CLASSES).map(|_| rng.random::<f64>()).collect();
        Ok(Self {
            region,
            channels,
            projection,
            bias,
            class_weights,
            gain: Self::DEFAULT_GAIN,
        })
    }

    pub fn region(&self) -> Region {
        self.region
    }

    /// The class every non-empty region input predicts.
    pub fn top_class(&self) -> usize {
        argmax(&self.class_weights)
    }

    fn region_samples(&self, image: &Image) -> Result<DVector<f64>> {
        let r = &self.region;
        if image.channels() != self.channels || r.top + r.height > image.height() || r.left + r.width > image.width()
        {
            return Err(Error::ShapeMismatch {
                expected: format!(
                    "image containing rows {}..{} and cols {}..{} with {} channels",
                    r.top,
                    r.top + r.height,
                    r.left,
                    r.left + r.width,
                    self.channels
                ),
                found: format_shape(image.shape()),
            });
        }
        let mut out = Vec::with_capacity(r.area() * self.channels);
        for row in r.top..r.top + r.height {
            for col in r.left..r.left + r.width {
                out.extend_from_slice(image.pixel(row, col));
            }
        }
        Ok(DVector::from_vec(out))
    }
}

impl Backend for OracleRegionModel {
    fn capabilities(&self) -> BackendCapabilities {
        BackendCapabilities {
            has_probabilities: true,
            has_saliency: true,
            feature_dim: self.projection.nrows(),
        }
    }

    fn raw_features(&self, image: &Image) -> Result<Vec<f64>> {
        let x = self.region_samples(image)?;
        Ok((&self.projection * x + &self.bias).as_slice().to_vec())
    }

    fn logits(&self, image: &Image) -> Result<Vec<f64>> {
        let x = self.region_samples(image)?;
        let mean = x.mean();
        Ok(self.class_weights.iter().map(|w| self.gain * w * mean).collect())
    }

    fn input_saliency(&self, image: &Image, scalar: SaliencyScalar) -> Result<Option<SaliencyWeights>> {
        let x = self.region_samples(image)?;
        let local = match scalar {
            SaliencyScalar::FeatureNorm => {
                let f = &self.projection * x + &self.bias;
                let norm = f.norm();
                if norm == 0.0 {
                    return Err(Error::DegenerateSaliency);
                }
                self.projection.tr_mul(&f) / norm
            }
            SaliencyScalar::MaxLogit => {
                let w = self.class_weights[self.top_class()];
                DVector::from_element(x.len(), self.gain * w / x.len() as f64)
            }
        };
        let mut grid = vec![0.0; image.pixel_count()];
        for (i, p) in self.region.pixels(image.width()).enumerate() {
            grid[p] = local.rows(i * self.channels, self.channels).iter().map(|g| g.abs()).sum();
        }
        Ok(Some(SaliencyWeights::new(image.height(), image.width(), grid)?))
    }
}

fn parse_usize(s: &str, what: &str) -> Result<usize> {
    s.trim()
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("invalid {what} `{s}` in toy model name")))
}

/// `key=value` options after the first `;`.
fn parse_options<'a>(parts: impl Iterator<Item = &'a str>) -> Result<Vec<(&'a str, &'a str)>> {
    parts
        .map(|p| {
            p.split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| Error::InvalidConfig(format!("expected key=value, found `{p}`")))
        })
        .collect()
}

/// `HxW@(row,col)[;k=..][;seed=..][;channels=..]`
pub(super) fn parse_oracle(spec: &str) -> Result<OracleRegionModel> {
    let mut parts = spec.split(';');
    let head = parts.next().unwrap_or_default();
    let bad = || Error::InvalidConfig(format!("oracle spec must look like HxW@(row,col), got `{head}`"));
    let (size, at) = head.split_once('@').ok_or_else(bad)?;
    let (h, w) = size.split_once('x').ok_or_else(bad)?;
    let at = at.trim().strip_prefix('(').and_then(|s| s.strip_suffix(')')).ok_or_else(bad)?;
    let (row, col) = at.split_once(',').ok_or_else(bad)?;
    let region = Region::new(
        parse_usize(row, "row")?,
        parse_usize(col, "col")?,
        parse_usize(h, "height")?,
        parse_usize(w, "width")?,
    );
    let (mut k, mut seed, mut channels) = (OracleRegionModel::DEFAULT_FEATURE_DIM, 0u64, 3usize);
    for (key, value) in parse_options(parts)? {
        match key {
            "k" => k = parse_usize(value, "k")?,
            "seed" => seed = parse_usize(value, "seed")? as u64,
            "channels" => channels = parse_usize(value, "channels")?,
            other => return Err(Error::InvalidConfig(format!("unknown oracle option `{other}`"))),
        }
    }
    OracleRegionModel::new(region, channels, k, seed)
}

/// `HxWxC;k=..[;seed=..][;classes=..]`
pub(super) fn parse_linear(spec: &str) -> Result<LinearBackend> {
    let mut parts = spec.split(';');
    let head = parts.next().unwrap_or_default();
    let dims: Vec<&str> = head.split('x').collect();
    let [h, w, c] = dims.as_slice() else {
        return Err(Error::InvalidConfig(format!("linear spec must start with HxWxC, got `{head}`")));
    };
    let shape = (parse_usize(h, "height")?, parse_usize(w, "width")?, parse_usize(c, "channels")?);
    let (mut k, mut seed, mut classes) = (None, 0u64, None);
    for (key, value) in parse_options(parts)? {
        match key {
            "k" => k = Some(parse_usize(value, "k")?),
            "seed" => seed = parse_usize(value, "seed")? as u64,
            "classes" => classes = Some(parse_usize(value, "classes")?),
            other => return Err(Error::InvalidConfig(format!("unknown linear option `{other}`"))),
        }
    }
    let k = k.ok_or_else(|| Error::InvalidConfig("linear toy model needs k=<dim>".into()))?;
    let model = LinearBackend::seeded(shape, k, seed);
    Ok(match classes {
        Some(n) => model.with_seeded_head(n, seed),
        None => model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subspace::FeatureVector;

    fn noise(seed: u64, h: usize, w: usize, c: usize) -> Image {
        let mut rng = external_rng(seed, 9);
        Image::from_fn(h, w, c, |_, _, _| rng.random::<f64>())
    }

    #[test]
    fn linear_zero_image_is_degenerate() {
        let b = LinearBackend::seeded((4, 4, 1), 3, 1);
        let err = b.infer_features(&Image::zeros(4, 4, 1)).unwrap_err();
        assert!(matches!(err, Error::DegenerateFeature(_)));
        assert!(err.to_string().contains("degenerate feature"));
        assert!(matches!(
            b.input_saliency(&Image::zeros(4, 4, 1), SaliencyScalar::FeatureNorm),
            Err(Error::DegenerateSaliency)
        ));
    }

    #[test]
    fn linear_basis_image_selects_column() {
        let b = LinearBackend::seeded((3, 3, 1), 4, 2);
        let mut data = vec![0.0; 9];
        data[0] = 1.0;
        let e1 = Image::from_vec(3, 3, 1, data).unwrap();
        let got = b.infer_features(&e1).unwrap();
        let col: Vec<f64> = b.weights().column(0).iter().copied().collect();
        let expected = FeatureVector::normalized(col).unwrap();
        for (g, e) in got.as_slice().iter().zip(expected.as_slice()) {
            assert!((g - e).abs() < 1e-15);
        }
    }

    #[test]
    fn linear_without_head_has_no_probabilities() {
        let b = LinearBackend::seeded((2, 2, 1), 2, 0);
        assert_eq!(b.infer_probabilities(&Image::filled(2, 2, 1, 0.5)), Err(Error::MissingClassificationHead));
        assert!(Error::MissingClassificationHead.to_string().contains("backend lacks classification head"));
    }

    #[test]
    fn linear_shape_checked() {
        let b = LinearBackend::seeded((2, 2, 1), 2, 0);
        assert!(matches!(b.raw_features(&Image::zeros(3, 2, 1)), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn oracle_locality() {
        let m = OracleRegionModel::new(Region::new(5, 6, 4, 3), 3, 8, 1).unwrap();
        let img = noise(1, 16, 16, 3);
        let base_f = m.raw_features(&img).unwrap();
        let base_p = m.infer_probabilities(&img).unwrap();
        for r in 0..16 {
            for c in 0..16 {
                if m.region().contains(r, c) {
                    continue;
                }
                let mut other = img.clone();
                for k in 0..3 {
                    other.set(r, c, k, 1.0 - img.get(r, c, k));
                }
                assert_eq!(m.raw_features(&other).unwrap(), base_f);
                assert_eq!(m.infer_probabilities(&other).unwrap(), base_p);
            }
        }
    }

    #[test]
    fn oracle_blank_region_gives_uniform_probabilities() {
        let m = OracleRegionModel::new(Region::new(2, 2, 4, 4), 3, 8, 5).unwrap();
        let mut img = noise(2, 10, 10, 3);
        for r in 2..6 {
            for c in 2..6 {
                for k in 0..3 {
                    img.set(r, c, k, 0.0);
                }
            }
        }
        for p in m.infer_probabilities(&img).unwrap() {
            assert!((p - 0.1).abs() < 1e-15);
        }
        // Features stay normalizable thanks to the bias.
        assert!(m.infer_features(&img).is_ok());
    }

    #[test]
    fn oracle_saliency_lives_in_region() {
        let m = OracleRegionModel::new(Region::new(3, 4, 5, 6), 3, 8, 2).unwrap();
        let img = noise(3, 16, 16, 3);
        for scalar in [SaliencyScalar::FeatureNorm, SaliencyScalar::MaxLogit] {
            let s = m.input_saliency(&img, scalar).unwrap().unwrap();
            let inside: f64 = m.region().pixels(16).map(|p| s.grid()[p]).sum();
            assert!((inside - 1.0).abs() < 1e-12);
            for r in 0..16 {
                for c in 0..16 {
                    if !m.region().contains(r, c) {
                        assert_eq!(s.grid()[r * 16 + c], 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn oracle_rejects_small_image() {
        let m = OracleRegionModel::new(Region::new(10, 10, 8, 8), 3, 4, 0).unwrap();
        assert!(matches!(m.raw_features(&Image::zeros(12, 20, 3)), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn parse_registry_specs() {
        let m = parse_oracle("32x32@(96,96)").unwrap();
        assert_eq!(m.region(), Region::new(96, 96, 32, 32));
        assert_eq!(m.capabilities().feature_dim, OracleRegionModel::DEFAULT_FEATURE_DIM);
        let m = parse_oracle("8x4@( 1, 2 );k=5;seed=9;channels=1").unwrap();
        assert_eq!(m.region(), Region::new(1, 2, 8, 4));
        assert_eq!(m.capabilities().feature_dim, 5);
        assert!(parse_oracle("8x4@(1,2);bogus=1").is_err());
        assert!(parse_oracle("8x4(1,2)").is_err());
        assert!(parse_linear("4x4;k=2").is_err());
        assert!(parse_linear("4x4x1").is_err());
    }

    #[test]
    fn dilation_clips() {
        let r = Region::new(2, 10, 4, 4).dilated(3, (12, 15));
        assert_eq!(r, Region::new(0, 7, 9, 8));
    }
}
