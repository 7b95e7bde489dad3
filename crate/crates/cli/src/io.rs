//! Image loading, preprocessing, model loading and atomic file writes.

use std::io::Write;
use std::path::Path;

use image::imageops::{self, FilterType};
use image::{DynamicImage, GenericImageView};

use osadas_core::backend::toy_from_name;
use osadas_core::{Backend, Image};

use crate::config::{resolve_model_path, ModelConfig, PreprocessConfig};
use crate::error::{CliError, CliResult, Context, FailureKind};

/// Writes `bytes` to a temporary file next to `path`, then renames it into place.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let fail = |e: std::io::Error| CliError::runtime("output", format!("cannot write {}: {e}", path.display()));
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(fail)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(fail)?;
    tmp.write_all(bytes).map_err(fail)?;
    tmp.as_file().sync_all().map_err(fail)?;
    tmp.persist(path).map_err(|e| fail(e.error))?;
    Ok(())
}

pub fn load_backend(model: &ModelConfig) -> CliResult<Box<dyn Backend>> {
    if model.name.is_empty() {
        return Err(CliError::usage("model", "no model given (use --model or [model].name)"));
    }
    if let Some(toy) = toy_from_name(&model.name) {
        return toy.during("model");
    }
    load_onnx(model)
}

#[cfg(feature = "onnx")]
fn load_onnx(model: &ModelConfig) -> CliResult<Box<dyn Backend>> {
    use osadas_core::backend::{ModelSpec, OnnxBackend};

    let shape = model
        .input_shape
        .ok_or_else(|| CliError::usage("model", "ONNX models need an input shape (--input-shape HxWxC)"))?;
    let feature = model
        .feature_output
        .clone()
        .ok_or_else(|| CliError::usage("model", "ONNX models need a feature tensor name (--feature-output)"))?;
    let mut spec = ModelSpec::new(resolve_model_path(&model.name), shape, feature);
    spec.input_name = model.input_name.clone();
    spec.logits_output = model.logits_output.clone();
    if let Some(mean) = &model.mean {
        spec.mean = mean.clone();
    }
    if let Some(std) = &model.std {
        spec.std = std.clone();
    }
    let backend = OnnxBackend::load(spec).map_err(|e| {
        let mut err = CliError::from_core("model", e);
        if err.kind == FailureKind::Usage {
            err.kind = FailureKind::Model;
        }
        err
    })?;
    Ok(Box::new(backend))
}

#[cfg(not(feature = "onnx"))]
fn load_onnx(model: &ModelConfig) -> CliResult<Box<dyn Backend>> {
    Err(CliError::new(
        FailureKind::Model,
        "model",
        format!("`{}` is not a toy model and ONNX support is disabled", model.name),
    ))
}

/// Reads a PNG or JPEG, applies preprocessing and converts to `[0, 1]`
/// samples with the channel count the backend expects (3 by default).
pub fn load_image(path: &Path, preprocess: PreprocessConfig, backend: &dyn Backend) -> CliResult<Image> {
    let decoded = image::open(path)
        .map_err(|e| CliError::usage("image", format!("cannot read {}: {e}", path.display())))?;
    let target = backend.input_shape();
    let prepared = preprocess_image(decoded, preprocess, target.map(|(h, w, _)| (h as u32, w as u32)));
    let channels = target.map_or(3, |(_, _, c)| c);
    to_image(&prepared, channels)
}

fn preprocess_image(img: DynamicImage, cfg: PreprocessConfig, target: Option<(u32, u32)>) -> DynamicImage {
    let (resize, crop) = match (cfg.resize, cfg.crop, target) {
        (None, None, Some((h, w))) if img.dimensions() != (w, h) => {
            let side = h.max(w);
            (Some(((side as f64) * 256.0 / 224.0).round() as u32), Some((h, w)))
        }
        (resize, crop, _) => (resize, crop.map(|c| (c, c))),
    };
    let mut img = img;
    if let Some(short) = resize {
        let (w, h) = img.dimensions();
        let scale = short as f64 / w.min(h) as f64;
        let (nw, nh) = (
            ((w as f64 * scale).round() as u32).max(1),
            ((h as f64 * scale).round() as u32).max(1),
        );
        img = img.resize_exact(nw, nh, FilterType::Triangle);
    }
    if let Some((ch, cw)) = crop {
        let (w, h) = img.dimensions();
        let (cw, ch) = (cw.min(w), ch.min(h));
        img = DynamicImage::ImageRgba8(imageops::crop_imm(&img, (w - cw) / 2, (h - ch) / 2, cw, ch).to_image());
    }
    img
}

fn to_image(img: &DynamicImage, channels: usize) -> CliResult<Image> {
    let (w, h) = img.dimensions();
    let data: Vec<f64> = match channels {
        1 => img.to_luma8().into_raw().into_iter().map(|v| v as f64 / 255.0).collect(),
        3 => img.to_rgb8().into_raw().into_iter().map(|v| v as f64 / 255.0).collect(),
        c => return Err(CliError::usage("image", format!("unsupported channel count {c}"))),
    };
    Image::from_vec(h as usize, w as usize, channels, data).during("image")
}

/// Encodes an image as PNG; used for test corpora and previews.
pub fn encode_png(width: u32, height: u32, rgb: Vec<u8>) -> CliResult<Vec<u8>> {
    let buffer = image::RgbImage::from_raw(width, height, rgb)
        .ok_or_else(|| CliError::runtime("output", "pixel buffer does not match dimensions"))?;
    let mut out = std::io::Cursor::new(Vec::new());
    buffer
        .write_to(&mut out, image::ImageFormat::Png)
        .map_err(|e| CliError::runtime("output", e.to_string()))?;
    Ok(out.into_inner())
}

/// Writes an engine image as an 8-bit RGB PNG.
pub fn save_png(path: &Path, img: &Image) -> CliResult<()> {
    let rgb: Vec<u8> = (0..img.pixel_count())
        .flat_map(|p| {
            let px = img.pixel(p / img.width(), p % img.width());
            let pick = |k: usize| (px[k.min(px.len() - 1)] * 255.0).round() as u8;
            [pick(0), pick(1), pick(2)]
        })
        .collect();
    atomic_write(path, &encode_png(img.width() as u32, img.height() as u32, rgb)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auto_preprocess_resizes_and_crops() {
        let img = DynamicImage::new_rgb8(300, 200);
        let out = preprocess_image(img, PreprocessConfig::default(), Some((224, 224)));
        assert_eq!(out.dimensions(), (224, 224));
    }

    #[test]
    fn matching_images_are_untouched() {
        let img = DynamicImage::new_rgb8(16, 8);
        let out = preprocess_image(img, PreprocessConfig::default(), Some((8, 16)));
        assert_eq!(out.dimensions(), (16, 8));
        let free = preprocess_image(DynamicImage::new_rgb8(5, 7), PreprocessConfig::default(), None);
        assert_eq!(free.dimensions(), (5, 7));
    }

    #[test]
    fn explicit_preprocess() {
        let cfg = PreprocessConfig {
            resize: Some(20),
            crop: Some(10),
        };
        let out = preprocess_image(DynamicImage::new_rgb8(40, 30), cfg, None);
        assert_eq!(out.dimensions(), (10, 10));
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.png");
        let img = Image::from_fn(3, 4, 3, |r, c, k| ((r * 4 + c) * 3 + k) as f64 / 35.0);
        save_png(&path, &img).unwrap();
        let backend = osadas_core::LinearBackend::seeded((3, 4, 3), 2, 0);
        let back = load_image(&path, PreprocessConfig::default(), &backend).unwrap();
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }
}
