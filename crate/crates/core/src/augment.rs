//! Seeded image augmentation in the style of TrivialAugment and RandAugment.
//!
//! Each op maps a magnitude `m ∈ [0, 1]` onto a fixed physical range. Signed
//! ops carry a `negate` flag drawn alongside the magnitude.
//!
//! | op             | physical parameter                        |
//! |----------------|-------------------------------------------|
//! | identity       | none                                      |
//! | rotate         | ±30° · m about the image center           |
//! | translate_x/y  | ±25% of width/height · m                  |
//! | shear_x/y      | ±0.3 · m shear factor about the center    |
//! | brightness     | factor 1 ± 0.9·m, `x·f`                   |
//! | contrast       | factor 1 ± 0.9·m, blend with mean luma    |
//! | saturation     | factor 1 ± 0.9·m, blend with pixel luma   |
//! | sharpness      | factor 1 ± 0.9·m, blend with 3×3 smoothing|
//! | posterize      | keep `8 − round(4·m)` bits                |
//! | solarize       | invert samples above `1 − m`              |
//! | autocontrast   | per-channel min/max stretch               |
//! | equalize       | per-channel 256-bin histogram equalization|
//!
//! Geometric ops resample bilinearly and fill outside the source with zero.
//! Every op clamps its output into `[0, 1]`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng::{Domain, StreamKey};

pub const MAX_ROTATION_DEGREES: f64 = 30.0;
pub const MAX_TRANSLATE_FRACTION: f64 = 0.25;
pub const MAX_SHEAR: f64 = 0.3;
pub const MAX_ENHANCE_DELTA: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    Identity,
    Rotate,
    TranslateX,
    TranslateY,
    ShearX,
    ShearY,
    Brightness,
    Contrast,
    Saturation,
    Sharpness,
    Posterize,
    Solarize,
    AutoContrast,
    Equalize,
}

impl OpKind {
    pub const ALL: [OpKind; 14] = [
        OpKind::Identity,
        OpKind::Rotate,
        OpKind::TranslateX,
        OpKind::TranslateY,
        OpKind::ShearX,
        OpKind::ShearY,
        OpKind::Brightness,
        OpKind::Contrast,
        OpKind::Saturation,
        OpKind::Sharpness,
        OpKind::Posterize,
        OpKind::Solarize,
        OpKind::AutoContrast,
        OpKind::Equalize,
    ];

    /// Whether the op's effect has a direction that `negate` flips.
    pub fn is_signed(self) -> bool {
        matches!(
            self,
            OpKind::Rotate
                | OpKind::TranslateX
                | OpKind::TranslateY
                | OpKind::ShearX
                | OpKind::ShearY
                | OpKind::Brightness
                | OpKind::Contrast
                | OpKind::Saturation
                | OpKind::Sharpness
        )
    }
}

/// One augmentation with its strength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentationOp {
    pub kind: OpKind,
    magnitude: f64,
    pub negate: bool,
}

impl AugmentationOp {
    pub fn new(kind: OpKind, magnitude: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&magnitude) {
            return Err(Error::InvalidConfig(format!(
                "augmentation magnitude must lie in [0, 1], got {magnitude}"
            )));
        }
        Ok(Self {
            kind,
            magnitude,
            negate: false,
        })
    }

    pub fn negated(mut self) -> Self {
        self.negate = !self.negate;
        self
    }

    pub fn magnitude(&self) -> f64 {
        self.magnitude
    }

    fn signed(&self, max: f64) -> f64 {
        let v = self.magnitude * max;
        if self.negate && self.kind.is_signed() {
            -v
        } else {
            v
        }
    }

    /// Blend factor for the enhance-style ops.
    pub fn enhance_factor(&self) -> f64 {
        1.0 + self.signed(MAX_ENHANCE_DELTA)
    }
}

/// Applies one augmentation. Output has the input's shape and values in `[0, 1]`.
pub fn apply_op(image: &Image, op: &AugmentationOp) -> Image {
    let (h, w, _) = image.shape();
    match op.kind {
        OpKind::Identity => image.clone(),
        OpKind::Rotate => {
            let theta = op.signed(MAX_ROTATION_DEGREES).to_radians();
            let (s, c) = theta.sin_cos();
            let (cy, cx) = center(image);
            resample(image, |y, x| {
                let (dy, dx) = (y - cy, x - cx);
                (cy + c * dy - s * dx, cx + s * dy + c * dx)
            })
        }
        OpKind::TranslateX => {
            let t = op.signed(MAX_TRANSLATE_FRACTION) * w as f64;
            resample(image, |y, x| (y, x - t))
        }
        OpKind::TranslateY => {
            let t = op.signed(MAX_TRANSLATE_FRACTION) * h as f64;
            resample(image, |y, x| (y - t, x))
        }
        OpKind::ShearX => {
            let s = op.signed(MAX_SHEAR);
            let (cy, _) = center(image);
            resample(image, |y, x| (y, x - s * (y - cy)))
        }
        OpKind::ShearY => {
            let s = op.signed(MAX_SHEAR);
            let (_, cx) = center(image);
            resample(image, |y, x| (y - s * (x - cx), x))
        }
        OpKind::Brightness => {
            let f = op.enhance_factor();
            image.map(|v| v * f)
        }
        OpKind::Contrast => {
            let f = op.enhance_factor();
            let gray = image.grayscale();
            let mean = gray.iter().sum::<f64>() / gray.len() as f64;
            image.map(|v| mean + f * (v - mean))
        }
        OpKind::Saturation => {
            if image.channels() == 1 {
                return image.clone();
            }
            let f = op.enhance_factor();
            let gray = image.grayscale();
            let mut out = image.clone();
            let c = image.channels();
            for (i, v) in out.data_mut().iter_mut().enumerate() {
                let g = gray[i / c];
                *v = crate::image::clamp_unit(g + f * (*v - g));
            }
            out
        }
        OpKind::Sharpness => {
            let f = op.enhance_factor();
            let smooth = smooth3x3(image);
            let mut out = image.clone();
            for (v, s) in out.data_mut().iter_mut().zip(smooth.data()) {
                *v = crate::image::clamp_unit(s + f * (*v - s));
            }
            out
        }
        OpKind::Posterize => {
            let bits = 8 - (4.0 * op.magnitude).round() as u32;
            let keep: u8 = if bits == 0 { 0 } else { 0xffu8 << (8 - bits) };
            image.map(|v| ((to_level(v) & keep) as f64) / 255.0)
        }
        OpKind::Solarize => {
            let threshold = 1.0 - op.magnitude;
            image.map(|v| if v > threshold { 1.0 - v } else { v })
        }
        OpKind::AutoContrast => per_channel(image, |values| {
            let (lo, hi) = values
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
            if hi > lo {
                for v in values.iter_mut() {
                    *v = (*v - lo) / (hi - lo);
                }
            }
        }),
        OpKind::Equalize => per_channel(image, |values| {
            let mut hist = [0usize; 256];
            for &v in values.iter() {
                hist[to_level(v) as usize] += 1;
            }
            let n = values.len();
            let mut cdf = [0usize; 256];
            let mut acc = 0;
            for (i, count) in hist.iter().enumerate() {
                acc += count;
                cdf[i] = acc;
            }
            let cdf_min = cdf.iter().copied().find(|&c| c > 0).unwrap_or(0);
            if n == cdf_min {
                return;
            }
            for v in values.iter_mut() {
                let level = cdf[to_level(*v) as usize];
                *v = ((level - cdf_min) as f64 / (n - cdf_min) as f64 * 255.0).round() / 255.0;
            }
        }),
    }
}

fn center(image: &Image) -> (f64, f64) {
    ((image.height() as f64 - 1.0) / 2.0, (image.width() as f64 - 1.0) / 2.0)
}

#[inline]
fn to_level(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Inverse-maps every output pixel through `source` and samples bilinearly.
fn resample(image: &Image, source: impl Fn(f64, f64) -> (f64, f64)) -> Image {
    let (h, w, ch) = image.shape();
    let mut out = Image::zeros(h, w, ch);
    let mut px = vec![0.0; ch];
    for r in 0..h {
        for c in 0..w {
            let (sy, sx) = source(r as f64, c as f64);
            bilinear(image, sy, sx, &mut px);
            for (k, v) in px.iter().enumerate() {
                out.set(r, c, k, *v);
            }
        }
    }
    out
}

fn bilinear(image: &Image, y: f64, x: f64, out: &mut [f64]) {
    out.fill(0.0);
    if !y.is_finite() || !x.is_finite() {
        return;
    }
    let (y0, x0) = (y.floor(), x.floor());
    let (fy, fx) = (y - y0, x - x0);
    let (h, w) = (image.height() as isize, image.width() as isize);
    let corners = [
        (y0 as isize, x0 as isize, (1.0 - fy) * (1.0 - fx)),
        (y0 as isize, x0 as isize + 1, (1.0 - fy) * fx),
        (y0 as isize + 1, x0 as isize, fy * (1.0 - fx)),
        (y0 as isize + 1, x0 as isize + 1, fy * fx),
    ];
    for (yy, xx, wt) in corners {
        if wt == 0.0 || yy < 0 || xx < 0 || yy >= h || xx >= w {
            continue;
        }
        for (k, o) in out.iter_mut().enumerate() {
            *o += wt * image.get(yy as usize, xx as usize, k);
        }
    }
}

/// PIL-style smoothing kernel `[[1,1,1],[1,5,1],[1,1,1]] / 13`; border pixels
/// are left unchanged.
fn smooth3x3(image: &Image) -> Image {
    let (h, w, ch) = image.shape();
    let mut out = image.clone();
    if h < 3 || w < 3 {
        return out;
    }
    for r in 1..h - 1 {
        for c in 1..w - 1 {
            for k in 0..ch {
                let mut acc = 4.0 * image.get(r, c, k);
                for dr in 0..3 {
                    for dc in 0..3 {
                        acc += image.get(r + dr - 1, c + dc - 1, k);
                    }
                }
                out.set(r, c, k, acc / 13.0);
            }
        }
    }
    out
}

fn per_channel(image: &Image, mut f: impl FnMut(&mut Vec<f64>)) -> Image {
    let ch = image.channels();
    let mut out = image.clone();
    let mut buf = Vec::with_capacity(image.pixel_count());
    for k in 0..ch {
        buf.clear();
        buf.extend(image.data().iter().skip(k).step_by(ch));
        f(&mut buf);
        for (i, v) in buf.iter().enumerate() {
            out.data_mut()[i * ch + k] = crate::image::clamp_unit(*v);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum PolicyMode {
    /// No augmentation; every draw returns the input.
    Disabled,
    /// One op per image with magnitude uniform in `[0, 1]`.
    Trivial,
    /// `n_ops` sequential ops at a fixed magnitude.
    RandAugment { n_ops: usize, magnitude: f64 },
}

/// Which random stream a draw comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DrawKey {
    pub domain: Domain,
    pub index: u64,
    pub draw: u64,
}

impl DrawKey {
    pub fn reference(draw: u64) -> Self {
        Self {
            domain: Domain::Reference,
            index: 0,
            draw,
        }
    }

    pub fn occluded(mask_index: u64, draw: u64) -> Self {
        Self {
            domain: Domain::Occluded,
            index: mask_index,
            draw,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentationPolicy {
    #[serde(flatten)]
    pub mode: PolicyMode,
    pub seed: u64,
    /// Ops eligible for sampling. Defaults to [`OpKind::ALL`].
    pub pool: Vec<OpKind>,
}

impl AugmentationPolicy {
    pub fn trivial(seed: u64) -> Self {
        Self {
            mode: PolicyMode::Trivial,
            seed,
            pool: OpKind::ALL.to_vec(),
        }
    }

    pub fn randaugment(n_ops: usize, magnitude: f64, seed: u64) -> Result<Self> {
        let policy = Self {
            mode: PolicyMode::RandAugment { n_ops, magnitude },
            seed,
            pool: OpKind::ALL.to_vec(),
        };
        policy.validate()?;
        Ok(policy)
    }

    pub fn disabled() -> Self {
        Self {
            mode: PolicyMode::Disabled,
            seed: 0,
            pool: OpKind::ALL.to_vec(),
        }
    }

    pub fn with_pool(mut self, pool: Vec<OpKind>) -> Self {
        self.pool = pool;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.pool.is_empty() && self.mode != PolicyMode::Disabled {
            return Err(Error::InvalidConfig("augmentation op pool is empty".into()));
        }
        if let PolicyMode::RandAugment { n_ops, magnitude } = self.mode {
            if n_ops == 0 {
                return Err(Error::InvalidConfig("randaugment n_ops must be at least 1".into()));
            }
            if !(0.0..=1.0).contains(&magnitude) {
                return Err(Error::InvalidConfig(format!(
                    "randaugment magnitude must lie in [0, 1], got {magnitude}"
                )));
            }
        }
        Ok(())
    }

    /// The ordered ops for one draw. Deterministic in `(seed, key)`.
    pub fn sample_ops(&self, key: DrawKey) -> Vec<AugmentationOp> {
        let mut rng = StreamKey::new(self.seed, key.domain, key.index, key.draw).rng();
        let (count, fixed) = match self.mode {
            PolicyMode::Disabled => return Vec::new(),
            PolicyMode::Trivial => (1, None),
            PolicyMode::RandAugment { n_ops, magnitude } => (n_ops, Some(magnitude)),
        };
        (0..count)
            .map(|_| {
                let kind = self.pool[rng.random_range(0..self.pool.len())];
                let magnitude = fixed.unwrap_or_else(|| rng.random::<f64>());
                let negate = rng.random::<bool>();
                AugmentationOp {
                    kind,
                    magnitude: magnitude.clamp(0.0, 1.0),
                    negate,
                }
            })
            .collect()
    }

    /// Samples and applies the ops for one draw.
    pub fn augment(&self, image: &Image, key: DrawKey) -> Image {
        let ops = self.sample_ops(key);
        let mut iter = ops.iter();
        let Some(first) = iter.next() else {
            return image.clone();
        };
        iter.fold(apply_op(image, first), |img, op| apply_op(&img, op))
    }
}

impl Default for AugmentationPolicy {
    fn default() -> Self {
        Self::trivial(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::external_rng;

    fn noise_image(seed: u64, h: usize, w: usize) -> Image {
        let mut rng = external_rng(seed, 0);
        Image::from_fn(h, w, 3, |_, _, _| rng.random::<f64>())
    }

    fn op(kind: OpKind, m: f64) -> AugmentationOp {
        AugmentationOp::new(kind, m).unwrap()
    }

    #[test]
    fn identity_is_bit_identical() {
        let img = noise_image(1, 9, 11);
        assert_eq!(apply_op(&img, &op(OpKind::Identity, 0.7)), img);
    }

    #[test]
    fn zero_magnitude_geometry_is_exact() {
        let img = noise_image(2, 12, 10);
        for kind in [OpKind::Rotate, OpKind::TranslateX, OpKind::TranslateY, OpKind::ShearX, OpKind::ShearY] {
            let out = apply_op(&img, &op(kind, 0.0));
            for (a, b) in out.data().iter().zip(img.data()) {
                assert!((a - b).abs() < 1e-6, "{kind:?}");
            }
        }
    }

    #[test]
    fn brightness_closed_form() {
        let img = Image::filled(4, 4, 3, 0.5);
        for (m, negate) in [(0.0, false), (0.3, false), (1.0, false), (0.6, true), (1.0, true)] {
            let mut o = op(OpKind::Brightness, m);
            o.negate = negate;
            let b = if negate { 1.0 - 0.9 * m } else { 1.0 + 0.9 * m };
            let expected = (0.5 * b).clamp(0.0, 1.0);
            for v in apply_op(&img, &o).data() {
                assert!((v - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn translation_fills_with_zero() {
        let img = Image::filled(4, 8, 1, 1.0);
        // 25% of width 8 = 2 pixels.
        let out = apply_op(&img, &op(OpKind::TranslateX, 1.0));
        for r in 0..4 {
            assert_eq!(out.get(r, 0, 0), 0.0);
            assert_eq!(out.get(r, 1, 0), 0.0);
            assert_eq!(out.get(r, 2, 0), 1.0);
        }
    }

    #[test]
    fn posterize_and_solarize() {
        let img = Image::from_vec(1, 2, 1, vec![0.2, 0.9]).unwrap();
        let s = apply_op(&img, &op(OpKind::Solarize, 0.5));
        assert!((s.get(0, 0, 0) - 0.2).abs() < 1e-15);
        assert!((s.get(0, 1, 0) - 0.1).abs() < 1e-12);
        assert_eq!(apply_op(&img, &op(OpKind::Solarize, 0.0)), img);
        let p = apply_op(&img, &op(OpKind::Posterize, 1.0));
        // 4 bits kept: 0.2*255=51 -> 48, 0.9*255=229.5 -> 230 -> 224
        assert!((p.get(0, 0, 0) - 48.0 / 255.0).abs() < 1e-12);
        assert!((p.get(0, 1, 0) - 224.0 / 255.0).abs() < 1e-12);
    }

    #[test]
    fn autocontrast_stretches() {
        let img = Image::from_vec(1, 3, 1, vec![0.25, 0.5, 0.75]).unwrap();
        let out = apply_op(&img, &op(OpKind::AutoContrast, 0.0));
        assert_eq!(out.data(), &[0.0, 0.5, 1.0]);
        let flat = Image::filled(2, 2, 1, 0.3);
        assert_eq!(apply_op(&flat, &op(OpKind::Equalize, 0.0)), flat);
    }

    #[test]
    fn all_ops_keep_shape_and_range() {
        let img = noise_image(3, 13, 7);
        for kind in OpKind::ALL {
            for m in [0.0, 0.5, 1.0] {
                for negate in [false, true] {
                    let mut o = op(kind, m);
                    o.negate = negate;
                    let out = apply_op(&img, &o);
                    assert_eq!(out.shape(), img.shape());
                    assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)), "{kind:?}");
                }
            }
        }
    }

    #[test]
    fn magnitude_out_of_range_rejected() {
        assert!(AugmentationOp::new(OpKind::Rotate, 1.5).is_err());
        assert!(AugmentationOp::new(OpKind::Rotate, -0.1).is_err());
        assert!(AugmentationPolicy::randaugment(0, 0.5, 1).is_err());
        assert!(AugmentationPolicy::randaugment(2, 1.5, 1).is_err());
    }

    #[test]
    fn op_counts_per_policy() {
        let trivial = AugmentationPolicy::trivial(11);
        let ra = AugmentationPolicy::randaugment(2, 0.4, 11).unwrap();
        for draw in 0..50 {
            let t = trivial.sample_ops(DrawKey::reference(draw));
            assert_eq!(t.len(), 1);
            assert!((0.0..=1.0).contains(&t[0].magnitude()));
            let r = ra.sample_ops(DrawKey::occluded(3, draw));
            assert_eq!(r.len(), 2);
            assert!(r.iter().all(|o| o.magnitude() == 0.4));
        }
        assert!(AugmentationPolicy::disabled().sample_ops(DrawKey::reference(0)).is_empty());
    }

    #[test]
    fn sampling_is_deterministic() {
        let p = AugmentationPolicy::randaugment(3, 0.7, 42).unwrap();
        let key = DrawKey::occluded(5, 9);
        assert_eq!(p.sample_ops(key), p.sample_ops(key));
        let img = noise_image(4, 16, 16);
        assert_eq!(p.augment(&img, key), p.augment(&img, key));
    }

    #[test]
    fn identity_pool_and_disabled_policy_pass_through() {
        let img = noise_image(5, 8, 8);
        let p = AugmentationPolicy::trivial(1).with_pool(vec![OpKind::Identity]);
        for d in 0..10 {
            assert_eq!(p.augment(&img, DrawKey::reference(d)), img);
        }
        assert_eq!(AugmentationPolicy::disabled().augment(&img, DrawKey::reference(3)), img);
    }

    #[test]
    fn consecutive_draws_mostly_differ() {
        let img = noise_image(6, 24, 24);
        let p = AugmentationPolicy::trivial(7);
        let differing = (0..100)
            .filter(|&d| p.augment(&img, DrawKey::reference(d)) != p.augment(&img, DrawKey::reference(d + 1)))
            .count();
        assert!(differing >= 90, "only {differing} of 100 draws differ");
    }

    #[test]
    fn enhance_strength_is_monotone() {
        let img = noise_image(8, 16, 16);
        let change = |kind, m| {
            let out = apply_op(&img, &op(kind, m));
            out.data().iter().zip(img.data()).map(|(a, b)| (a - b).abs()).sum::<f64>()
        };
        for kind in [OpKind::Brightness, OpKind::Contrast] {
            let mut last = -1.0;
            for m in [0.1, 0.3, 0.5, 0.7, 0.9] {
                let c = change(kind, m);
                assert!(c > last, "{kind:?} at {m}");
                last = c;
            }
        }
    }
}
