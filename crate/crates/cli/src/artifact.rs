//! Heatmap artifacts: a raw little-endian `f32` matrix, a JSON sidecar
//! describing it and a color-mapped PNG preview.
//!
//! For a stem `S` the files are `S.heatmap.f32`, `S.heatmap.json` and
//! `S.preview.png`. The preview blends the grayscale input with the viridis
//! ramp of the heatmap scaled to its maximum; it is never read back.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use osadas_core::{Heatmap, Image};

use crate::error::{CliError, CliResult, Context};
use crate::io::{atomic_write, encode_png};

pub const RAW_SUFFIX: &str = ".heatmap.f32";
pub const SIDECAR_SUFFIX: &str = ".heatmap.json";
pub const PREVIEW_SUFFIX: &str = ".preview.png";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub height: usize,
    pub width: usize,
    pub normalized: bool,
    pub explainer: String,
    pub config_hash: String,
    pub seed: u64,
    /// Always `"f32le"`, row-major.
    pub format: String,
}

/// Paths of one artifact triple.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArtifactPaths {
    pub raw: PathBuf,
    pub sidecar: PathBuf,
    pub preview: PathBuf,
}

impl ArtifactPaths {
    pub fn for_stem(dir: &Path, stem: &str) -> Self {
        Self {
            raw: dir.join(format!("{stem}{RAW_SUFFIX}")),
            sidecar: dir.join(format!("{stem}{SIDECAR_SUFFIX}")),
            preview: dir.join(format!("{stem}{PREVIEW_SUFFIX}")),
        }
    }

    /// Accepts the raw file, the sidecar or the stem itself.
    pub fn from_any(path: &Path) -> Self {
        let text = path.to_string_lossy();
        let stem = [RAW_SUFFIX, SIDECAR_SUFFIX, PREVIEW_SUFFIX]
            .iter()
            .find_map(|s| text.strip_suffix(s))
            .unwrap_or(&text)
            .to_string();
        let stem = PathBuf::from(stem);
        let dir = stem.parent().map(Path::to_path_buf).unwrap_or_default();
        let name = stem.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        Self::for_stem(&dir, &name)
    }
}

/// The heatmap as stored: every value rounded to `f32`.
pub fn quantize(heatmap: &Heatmap) -> Heatmap {
    let grid = heatmap.grid().iter().map(|v| *v as f32 as f64).collect();
    Heatmap::new(heatmap.height(), heatmap.width(), grid, heatmap.is_normalized())
        .expect("quantizing keeps the shape")
}

pub fn raw_bytes(heatmap: &Heatmap) -> Vec<u8> {
    heatmap.grid().iter().flat_map(|v| (*v as f32).to_le_bytes()).collect()
}

pub fn write_artifact(paths: &ArtifactPaths, heatmap: &Heatmap, sidecar: &Sidecar, image: &Image) -> CliResult<()> {
    atomic_write(&paths.raw, &raw_bytes(heatmap))?;
    let json = serde_json::to_vec_pretty(sidecar).map_err(|e| CliError::runtime("output", e.to_string()))?;
    atomic_write(&paths.sidecar, &json)?;
    atomic_write(&paths.preview, &preview_png(heatmap, image)?)
}

pub fn read_artifact(paths: &ArtifactPaths) -> CliResult<(Heatmap, Sidecar)> {
    let bad = |what: &Path, e: String| CliError::usage("heatmap", format!("{}: {e}", what.display()));
    let text = std::fs::read_to_string(&paths.sidecar).map_err(|e| bad(&paths.sidecar, e.to_string()))?;
    let sidecar: Sidecar = serde_json::from_str(&text).map_err(|e| bad(&paths.sidecar, e.to_string()))?;
    if sidecar.format != "f32le" {
        return Err(bad(&paths.sidecar, format!("unsupported format `{}`", sidecar.format)));
    }
    let bytes = std::fs::read(&paths.raw).map_err(|e| bad(&paths.raw, e.to_string()))?;
    let expected = sidecar.height * sidecar.width * 4;
    if bytes.len() != expected {
        return Err(bad(
            &paths.raw,
            format!("{} bytes, sidecar says {}x{} ({} bytes)", bytes.len(), sidecar.height, sidecar.width, expected),
        ));
    }
    let grid = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    let heatmap = Heatmap::new(sidecar.height, sidecar.width, grid, sidecar.normalized).during("heatmap")?;
    Ok((heatmap, sidecar))
}

/// Viridis sampled at nine evenly spaced points; linear in between.
const VIRIDIS: [[f64; 3]; 9] = [
    [68.0, 1.0, 84.0],
    [71.0, 44.0, 122.0],
    [59.0, 81.0, 139.0],
    [44.0, 113.0, 142.0],
    [33.0, 144.0, 141.0],
    [39.0, 173.0, 129.0],
    [92.0, 200.0, 99.0],
    [170.0, 220.0, 50.0],
    [253.0, 231.0, 37.0],
];

pub fn viridis(t: f64) -> [f64; 3] {
    let x = t.clamp(0.0, 1.0) * (VIRIDIS.len() - 1) as f64;
    let i = (x.floor() as usize).min(VIRIDIS.len() - 2);
    let f = x - i as f64;
    let (a, b) = (VIRIDIS[i], VIRIDIS[i + 1]);
    [0, 1, 2].map(|k| a[k] + f * (b[k] - a[k]))
}

fn preview_png(heatmap: &Heatmap, image: &Image) -> CliResult<Vec<u8>> {
    let peak = heatmap.grid().iter().copied().fold(0.0, f64::max);
    let luma = image.grayscale();
    let rgb = heatmap
        .grid()
        .iter()
        .zip(&luma)
        .flat_map(|(v, l)| {
            let t = if peak > 0.0 { v / peak } else { 0.0 };
            viridis(t).map(|c| (0.4 * l * 255.0 + 0.6 * c).round().clamp(0.0, 255.0) as u8)
        })
        .collect();
    encode_png(heatmap.width() as u32, heatmap.height() as u32, rgb)
}
