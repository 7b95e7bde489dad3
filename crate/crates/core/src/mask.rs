//! Square occlusion masks: sliding-window grids and saliency-weighted anchor
//! sampling with overlap rejection.

use rand::distr::{weighted::WeightedIndex, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng::{Domain, StreamKey};

/// Default IoU above which a sampled mask is rejected.
pub const DEFAULT_OVERLAP_IOU: f64 = 0.5;

/// Default sampling budget per requested mask.
pub const ATTEMPTS_PER_MASK: usize = 20;

/// A binary occlusion: the `side×side` square centered at `anchor`, clipped
/// to the image. Pixels inside are occluded (0), the rest kept (1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Mask {
    anchor: (usize, usize),
    side: usize,
    height: usize,
    width: usize,
    rows: (usize, usize),
    cols: (usize, usize),
}

impl Mask {
    pub fn centered(anchor: (usize, usize), side: usize, (height, width): (usize, usize)) -> Self {
        let span = |center: usize, limit: usize| {
            let start = center as isize - (side / 2) as isize;
            let end = start + side as isize;
            (start.clamp(0, limit as isize) as usize, end.clamp(0, limit as isize) as usize)
        };
        Self {
            anchor,
            side,
            height,
            width,
            rows: span(anchor.0, height),
            cols: span(anchor.1, width),
        }
    }

    /// Center pixel `(row, col)`.
    pub fn anchor(&self) -> (usize, usize) {
        self.anchor
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn image_shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    /// Half-open occluded row range.
    pub fn rows(&self) -> std::ops::Range<usize> {
        self.rows.0..self.rows.1
    }

    /// Half-open occluded column range.
    pub fn cols(&self) -> std::ops::Range<usize> {
        self.cols.0..self.cols.1
    }

    pub fn occluded_count(&self) -> usize {
        self.rows().len() * self.cols().len()
    }

    #[inline]
    pub fn is_occluded(&self, row: usize, col: usize) -> bool {
        self.rows().contains(&row) && self.cols().contains(&col)
    }

    /// Row-major `H×W` keep matrix (1 = keep, 0 = occlude).
    pub fn keep_matrix(&self) -> Vec<u8> {
        let mut keep = vec![1u8; self.height * self.width];
        for r in self.rows() {
            keep[r * self.width + self.cols.0..r * self.width + self.cols.1].fill(0);
        }
        keep
    }

    /// Intersection over union of the two occluded squares.
    pub fn iou(&self, other: &Mask) -> f64 {
        let overlap = |a: (usize, usize), b: (usize, usize)| a.1.min(b.1).saturating_sub(a.0.max(b.0));
        let inter = overlap(self.rows, other.rows) * overlap(self.cols, other.cols);
        let union = self.occluded_count() + other.occluded_count() - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }
}

/// Non-negative per-pixel sampling weights that sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyWeights {
    height: usize,
    width: usize,
    grid: Vec<f64>,
}

impl SaliencyWeights {
    /// Normalizes a row-major grid. All-zero grids are rejected.
    pub fn new(height: usize, width: usize, mut grid: Vec<f64>) -> Result<Self> {
        if grid.len() != height * width {
            return Err(Error::ShapeMismatch {
                expected: format!("{} weights", height * width),
                found: format!("{} weights", grid.len()),
            });
        }
        if grid.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidConfig("saliency weights must be finite and non-negative".into()));
        }
        let total: f64 = grid.iter().sum();
        if !(total > 0.0) {
            return Err(Error::DegenerateSaliency);
        }
        for w in &mut grid {
            *w /= total;
        }
        Ok(Self { height, width, grid })
    }

    pub fn uniform(height: usize, width: usize) -> Self {
        Self::new(height, width, vec![1.0; height * width]).expect("uniform weights are valid")
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
}

/// Every `window×window` position at the given stride, enumerated row-major.
pub fn sliding_masks((height, width): (usize, usize), window: usize, stride: usize) -> Result<Vec<Mask>> {
    if window == 0 || stride == 0 {
        return Err(Error::InvalidConfig("mask window and stride must be at least 1".into()));
    }
    if window > height || window > width {
        return Err(Error::WindowTooLarge { window, height, width });
    }
    let tops = |limit: usize| (0..=limit - window).step_by(stride);
    let mut masks = Vec::with_capacity(((height - window) / stride + 1) * ((width - window) / stride + 1));
    for top in tops(height) {
        for left in tops(width) {
            masks.push(Mask::centered((top + window / 2, left + window / 2), window, (height, width)));
        }
    }
    Ok(masks)
}

/// Outcome of [`sample_anchors`].
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSample {
    pub masks: Vec<Mask>,
    /// Number of multinomial draws consumed.
    pub attempts: usize,
}

impl AnchorSample {
    pub fn shortfall(&self, requested: usize) -> bool {
        self.masks.len() < requested
    }
}

/// Parameters of [`sample_anchors`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnchorSampling {
    pub count: usize,
    pub side: usize,
    /// Maximum IoU tolerated between accepted masks; `1.0` disables filtering.
    pub overlap_threshold: f64,
    pub seed: u64,
    /// Draw budget; `None` means `ATTEMPTS_PER_MASK · count`.
    pub max_attempts: Option<usize>,
}

impl AnchorSampling {
    pub fn new(count: usize, side: usize, seed: u64) -> Self {
        Self {
            count,
            side,
            overlap_threshold: DEFAULT_OVERLAP_IOU,
            seed,
            max_attempts: None,
        }
    }
}

/// Draws mask anchors i.i.d. from the multinomial over pixels given by
/// `weights`, rejecting any candidate whose square overlaps an accepted one by
/// more than the IoU threshold. May return fewer masks than requested.
pub fn sample_anchors(weights: &SaliencyWeights, params: &AnchorSampling) -> Result<AnchorSample> {
    if params.count == 0 || params.side == 0 {
        return Err(Error::InvalidConfig("mask count and side must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&params.overlap_threshold) {
        return Err(Error::InvalidConfig(format!(
            "overlap threshold must lie in [0, 1], got {}",
            params.overlap_threshold
        )));
    }
    let dist = WeightedIndex::new(weights.grid()).map_err(|_| Error::DegenerateSaliency)?;
    let budget = params.max_attempts.unwrap_or(ATTEMPTS_PER_MASK * params.count);
    let mut rng = StreamKey::new(params.seed, Domain::Anchors, 0, 0).rng();
    let shape = (weights.height, weights.width);

    let mut masks: Vec<Mask> = Vec::with_capacity(params.count);
    let mut attempts = 0;
    while masks.len() < params.count && attempts < budget {
        attempts += 1;
        let pixel = dist.sample(&mut rng);
        let candidate = Mask::centered((pixel / shape.1, pixel % shape.1), params.side, shape);
        if masks.iter().all(|m| m.iou(&candidate) <= params.overlap_threshold) {
            masks.push(candidate);
        }
    }
    if masks.len() < params.count {
        log::warn!(
            "anchor sampling accepted {} of {} masks after {} draws",
            masks.len(),
            params.count,
            attempts
        );
    }
    Ok(AnchorSample { masks, attempts })
}

/// `x ⊙ M`: occluded pixels become exactly zero in every channel.
pub fn apply_mask(image: &Image, mask: &Mask) -> Result<Image> {
    if (image.height(), image.width()) != mask.image_shape() {
        return Err(Error::ShapeMismatch {
            expected: format!("{}x{}", mask.height, mask.width),
            found: format!("{}x{}", image.height(), image.width()),
        });
    }
    let mut out = image.clone();
    let (w, ch) = (image.width(), image.channels());
    let data = out.data_mut();
    for r in mask.rows() {
        data[(r * w + mask.cols.0) * ch..(r * w + mask.cols.1) * ch].fill(0.0);
    }
    Ok(out)
}

/// `Σᵢ (1 − Mᵢ)`: how many masks occlude each pixel.
pub fn coverage(masks: &[Mask], (height, width): (usize, usize)) -> Vec<f64> {
    let mut acc = vec![0.0; height * width];
    for m in masks {
        for r in m.rows() {
            for v in &mut acc[r * width + m.cols.0..r * width + m.cols.1] {
                *v += 1.0;
            }
        }
    }
    acc
}
