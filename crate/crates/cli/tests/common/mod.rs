#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use osadas_core::rng::external_rng;
use osadas_core::Image;
use rand::Rng;

pub const ORACLE: &str = "oracle:32x32@(96,96)";

pub fn noise_image(seed: u64, h: usize, w: usize) -> Image {
    let mut rng = external_rng(seed, 300);
    Image::from_fn(h, w, 3, |_, _, _| (rng.random_range(20..236) as f64) / 255.0)
}

pub fn write_noise_png(path: &Path, seed: u64, h: usize, w: usize) -> Image {
    let img = noise_image(seed, h, w);
    osadas_cli::io::save_png(path, &img).unwrap();
    img
}

pub fn osadas(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_osadas"))
        .args(args)
        .env_remove("OSADAS_MODEL_DIR")
        .output()
        .expect("binary runs")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn schema_validator() -> jsonschema::Validator {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("schema/metric_report.schema.json");
    let schema: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    jsonschema::validator_for(&schema).expect("schema compiles")
}

pub fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

pub fn fixture_model() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/tiny_linear.onnx")
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}
