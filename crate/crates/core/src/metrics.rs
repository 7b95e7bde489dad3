//! Explanation quality metrics: deletion and insertion AUC, minimal size
//! (per-step and contour-batched) and the combined overall score.

use serde::{Deserialize, Serialize};

use crate::backend::{argmax, Backend};
use crate::error::{Error, Result};
use crate::explain::Heatmap;
use crate::image::Image;

/// Standard deviation of the blurred baseline canvas, in pixels.
pub const BLUR_SIGMA: f64 = 10.0;

/// Canvas that replaces deleted pixels, or that insertion starts from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Baseline {
    #[default]
    Zero,
    Blur,
}

/// How feature vectors are compared against the tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToleranceNorm {
    /// Largest element-wise difference.
    #[default]
    Linf,
    /// Sum of absolute differences.
    L1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricConfig {
    pub steps: usize,
    pub tolerance: f64,
    pub tolerance_norm: ToleranceNorm,
    pub deletion_baseline: Baseline,
    pub insertion_baseline: Baseline,
    pub contour_levels: usize,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            steps: 32,
            tolerance: 1e-2,
            tolerance_norm: ToleranceNorm::Linf,
            deletion_baseline: Baseline::Zero,
            insertion_baseline: Baseline::Zero,
            contour_levels: 32,
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps < 2 {
            return Err(Error::InvalidConfig("metric steps must be >= 2".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidConfig("tolerance must be > 0".into()));
        }
        if self.contour_levels == 0 {
            return Err(Error::InvalidConfig("contour levels must be >= 1".into()));
        }
        Ok(())
    }
}

/// `(fraction, value)` samples with strictly increasing fractions.
pub type Curve = Vec<(f64, f64)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveMetric {
    pub auc: f64,
    pub curve: Curve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimalSize {
    /// `|S| / |x|` of the first subset whose features match.
    pub ratio: f64,
    /// `(fraction, feature distance)` for every subset tried.
    pub curve: Curve,
}

/// Trapezoidal area under a curve sampled over `[0, 1]`.
pub fn auc(curve: &[(f64, f64)]) -> Result<f64> {
    if curve.len() < 2 {
        return Err(Error::MalformedCurve("need at least two points".into()));
    }
    const EDGE: f64 = 1e-12;
    if curve[0].0.abs() > EDGE || (curve[curve.len() - 1].0 - 1.0).abs() > EDGE {
        return Err(Error::MalformedCurve("fractions must span [0, 1]".into()));
    }
    let mut area = 0.0;
    for pair in curve.windows(2) {
        let ((x0, y0), (x1, y1)) = (pair[0], pair[1]);
        if !(x1 > x0) {
            return Err(Error::MalformedCurve(format!("fractions not strictly increasing at {x0} -> {x1}")));
        }
        area += 0.5 * (x1 - x0) * (y0 + y1);
    }
    Ok(area)
}

/// Pixel indices by descending heatmap value; ties keep row-major order.
pub fn pixel_ranking(heatmap: &Heatmap) -> Vec<usize> {
    let grid = heatmap.grid();
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| grid[b].total_cmp(&grid[a]));
    order
}

fn check_shapes(image: &Image, heatmap: &Heatmap) -> Result<()> {
    if (image.height(), image.width()) != (heatmap.height(), heatmap.width()) {
        return Err(Error::ShapeMismatch {
            expected: format!("{}x{} heatmap", image.height(), image.width()),
            found: format!("{}x{}", heatmap.height(), heatmap.width()),
        });
    }
    Ok(())
}

fn baseline_canvas(image: &Image, baseline: Baseline) -> Image {
    match baseline {
        Baseline::Zero => Image::zeros(image.height(), image.width(), image.channels()),
        Baseline::Blur => image.gaussian_blur(BLUR_SIGMA),
    }
}

/// Pixel count after `step` of `steps` equal increments.
#[inline]
fn step_count(step: usize, steps: usize, total: usize) -> usize {
    ((step as u128 * total as u128 + steps as u128 / 2) / steps as u128) as usize
}

/// Probability of `class` while pixels from `source` are written over
/// `canvas` in ranking order.
fn probability_sweep<B: Backend + ?Sized>(
    backend: &B,
    mut canvas: Image,
    source: &Image,
    ranking: &[usize],
    class: usize,
    steps: usize,
) -> Result<CurveMetric> {
    let n = ranking.len();
    let mut curve = Vec::with_capacity(steps + 1);
    let mut done = 0;
    for step in 0..=steps {
        let target = step_count(step, steps, n);
        for &p in &ranking[done..target] {
            canvas.copy_pixel_from(source, p);
        }
        done = target;
        let p = backend.infer_probabilities(&canvas)?[class];
        curve.push((step as f64 / steps as f64, p));
    }
    Ok(CurveMetric {
        auc: auc(&curve)?,
        curve,
    })
}

/// Tracked class: the top class of the unperturbed image.
pub fn tracked_class<B: Backend + ?Sized>(backend: &B, image: &Image) -> Result<usize> {
    Ok(argmax(&backend.infer_probabilities(image)?))
}

/// Probability of the original top class as the most salient pixels are
/// replaced by the deletion baseline. Lower is better.
pub fn deletion<B: Backend + ?Sized>(
    image: &Image,
    heatmap: &Heatmap,
    backend: &B,
    config: &MetricConfig,
) -> Result<CurveMetric> {
    config.validate()?;
    check_shapes(image, heatmap)?;
    let class = tracked_class(backend, image)?;
    let baseline = baseline_canvas(image, config.deletion_baseline);
    probability_sweep(backend, image.clone(), &baseline, &pixel_ranking(heatmap), class, config.steps)
}

/// Probability of the original top class as the most salient pixels are
/// restored onto the insertion baseline. Higher is better.
pub fn insertion<B: Backend + ?Sized>(
    image: &Image,
    heatmap: &Heatmap,
    backend: &B,
    config: &MetricConfig,
) -> Result<CurveMetric> {
    config.validate()?;
    check_shapes(image, heatmap)?;
    let class = tracked_class(backend, image)?;
    let canvas = baseline_canvas(image, config.insertion_baseline);
    probability_sweep(backend, canvas, image, &pixel_ranking(heatmap), class, config.steps)
}

/// Walks nested pixel subsets (prefixes of the ranking with the given sizes)
/// and stops at the first whose unit feature vector is within tolerance of
/// the full image's.
fn first_matching_subset<B: Backend + ?Sized>(
    image: &Image,
    backend: &B,
    ranking: &[usize],
    sizes: impl Iterator<Item = usize>,
    config: &MetricConfig,
) -> Result<MinimalSize> {
    let n = ranking.len();
    let reference = backend.infer_features(image)?;
    let mut subset = Image::zeros(image.height(), image.width(), image.channels());
    let mut done = 0;
    let mut curve = Vec::new();
    for size in sizes {
        for &p in &ranking[done..size] {
            subset.copy_pixel_from(image, p);
        }
        done = size;
        let fraction = size as f64 / n as f64;
        let distance = match backend.infer_features(&subset) {
            Ok(f) => {
                let diffs = f.as_slice().iter().zip(reference.as_slice()).map(|(a, b)| (a - b).abs());
                match config.tolerance_norm {
                    ToleranceNorm::Linf => diffs.fold(0.0, f64::max),
                    ToleranceNorm::L1 => diffs.sum(),
                }
            }
            // A subset whose features cannot be normalized never matches.
            Err(Error::DegenerateFeature(_)) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        curve.push((fraction, distance));
        if distance <= config.tolerance {
            return Ok(MinimalSize { ratio: fraction, curve });
        }
    }
    Ok(MinimalSize { ratio: 1.0, curve })
}

/// Smallest fraction of top-ranked pixels, scanned in `steps` equal
/// increments, whose features match the full image within tolerance.
pub fn minimal_size_plain<B: Backend + ?Sized>(
    image: &Image,
    heatmap: &Heatmap,
    backend: &B,
    config: &MetricConfig,
) -> Result<MinimalSize> {
    config.validate()?;
    check_shapes(image, heatmap)?;
    let ranking = pixel_ranking(heatmap);
    let n = ranking.len();
    let steps = config.steps;
    first_matching_subset(image, backend, &ranking, (1..=steps).map(|i| step_count(i, steps, n)), config)
}

/// Cumulative subset sizes for contour batching.
///
/// Band `b` of `L` ends at the heatmap value found at rank `⌈b·N/L⌉`; a band
/// holds only pixels strictly above that value so pixels of equal intensity
/// are never split. The last band is the whole image.
pub fn contour_sizes(heatmap: &Heatmap, levels: usize) -> Vec<usize> {
    let mut values: Vec<f64> = heatmap.grid().to_vec();
    values.sort_by(|a, b| b.total_cmp(a));
    let n = values.len();
    let mut sizes: Vec<usize> = Vec::with_capacity(levels);
    for b in 1..levels {
        let rank = (b * n).div_ceil(levels).max(1);
        let threshold = values[rank - 1];
        let size = values.partition_point(|v| *v > threshold);
        if size > 0 && sizes.last() != Some(&size) {
            sizes.push(size);
        }
    }
    if sizes.last() != Some(&n) {
        sizes.push(n);
    }
    sizes
}

/// Minimal size with pixels added one intensity band at a time.
pub fn minimal_size_contour<B: Backend + ?Sized>(
    image: &Image,
    heatmap: &Heatmap,
    backend: &B,
    config: &MetricConfig,
) -> Result<MinimalSize> {
    config.validate()?;
    check_shapes(image, heatmap)?;
    let ranking = pixel_ranking(heatmap);
    let sizes = contour_sizes(heatmap, config.contour_levels);
    first_matching_subset(image, backend, &ranking, sizes.into_iter(), config)
}

/// `(insertion − deletion) / minimal_size`.
pub fn overall(insertion: f64, deletion: f64, minimal_size: f64) -> Result<f64> {
    if !(minimal_size > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "minimal size must be positive, got {minimal_size}"
        )));
    }
    Ok((insertion - deletion) / minimal_size)
}

/// All metrics for one image-heatmap pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub deletion: f64,
    pub insertion: f64,
    pub minimal_size: f64,
    pub minimal_size_contour: f64,
    pub overall: f64,
    pub tracked_class: usize,
    pub deletion_curve: Curve,
    pub insertion_curve: Curve,
    pub minimal_size_curve: Curve,
    pub minimal_size_contour_curve: Curve,
}

impl MetricReport {
    /// Recomputes `overall` from the report's own fields.
    pub fn recomputed_overall(&self) -> Result<f64> {
        overall(self.insertion, self.deletion, self.minimal_size)
    }
}

pub fn evaluate<B: Backend + ?Sized>(
    image: &Image,
    heatmap: &Heatmap,
    backend: &B,
    config: &MetricConfig,
) -> Result<MetricReport> {
    let del = deletion(image, heatmap, backend, config)?;
    let ins = insertion(image, heatmap, backend, config)?;
    let plain = minimal_size_plain(image, heatmap, backend, config)?;
    let contour = minimal_size_contour(image, heatmap, backend, config)?;
    Ok(MetricReport {
        overall: overall(ins.auc, del.auc, plain.ratio)?,
        deletion: del.auc,
        insertion: ins.auc,
        minimal_size: plain.ratio,
        minimal_size_contour: contour.ratio,
        tracked_class: tracked_class(backend, image)?,
        deletion_curve: del.curve,
        insertion_curve: ins.curve,
        minimal_size_curve: plain.curve,
        minimal_size_contour_curve: contour.curve,
    })
}
