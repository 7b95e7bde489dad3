//! Subcommand implementations.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use osadas_core::explain::{self, generate_masks};
use osadas_core::{Backend, Heatmap, Image};

use crate::args::{base_config, CompareArgs, EvaluateArgs, ExplainArgs};
use crate::artifact::{quantize, read_artifact, write_artifact, ArtifactPaths, Sidecar};
use crate::config::{Method, RunConfig, ECHO_FILE};
use crate::error::{CliError, CliResult, Context};
use crate::io::{atomic_write, load_backend, load_image};
use crate::report::{measure, overall_from_stored, CompareRow, Comparison, MetricChoice};

/// Heatmap of one method on one image, plus any warnings raised.
pub fn run_method(method: Method, image: &Image, backend: &dyn Backend, cfg: &RunConfig) -> CliResult<(Heatmap, Vec<String>)> {
    let e = &cfg.explainer;
    let explanation = match method {
        Method::UniformRandom => return Ok((Heatmap::random(image.height(), image.width(), cfg.seed), Vec::new())),
        Method::OsaDas => explain::osa_das(image, backend, e),
        Method::Osa => generate_masks(image, backend, e).and_then(|(masks, warnings)| {
            let mut x = explain::osa_classic(image, backend, masks, None, e.workers)?;
            x.warnings.splice(0..0, warnings);
            Ok(x)
        }),
        Method::Rosa => generate_masks(image, backend, e).and_then(|(masks, warnings)| {
            let mut x = explain::osa_representation(image, backend, masks, e.norm_order, e.workers)?;
            x.warnings.splice(0..0, warnings);
            Ok(x)
        }),
    }
    .during("explainer")?;
    Ok((explanation.heatmap, explanation.warnings))
}

/// Fails with exit code 3 when `method` needs a capability `backend` lacks.
pub fn check_capabilities(method: Method, backend: &dyn Backend) -> CliResult<()> {
    if method == Method::Osa && !backend.capabilities().has_probabilities {
        return Err(CliError::from_core("model", osadas_core::Error::MissingClassificationHead));
    }
    Ok(())
}

fn validate(cfg: &RunConfig) -> CliResult<()> {
    cfg.explainer.validate().during("config")?;
    cfg.metrics.validate().during("config")
}

fn echo_config(cfg: &RunConfig) -> CliResult<()> {
    atomic_write(&cfg.output.join(ECHO_FILE), cfg.to_toml()?.as_bytes())
}

fn stem_of(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "image".into())
}

pub fn explain(args: &ExplainArgs) -> CliResult<Vec<ArtifactPaths>> {
    let mut cfg = base_config(args.config.as_ref())?;
    args.model.apply(&mut cfg);
    args.explainer.apply(&mut cfg)?;
    if !args.images.is_empty() {
        cfg.inputs = args.images.clone();
    }
    if let Some(out) = &args.output {
        cfg.output = out.clone();
    }
    cfg.sync();
    validate(&cfg)?;
    if cfg.inputs.is_empty() {
        return Err(CliError::usage("input", "no images given"));
    }
    let backend = load_backend(&cfg.model)?;
    check_capabilities(cfg.method, backend.as_ref())?;

    let hash = cfg.hash();
    let mut written = Vec::new();
    for input in &cfg.inputs {
        let image = load_image(input, cfg.preprocess, backend.as_ref())?;
        let (heatmap, warnings) = run_method(cfg.method, &image, backend.as_ref(), &cfg)?;
        for w in &warnings {
            log::warn!("{}: {w}", input.display());
        }
        let heatmap = quantize(&heatmap);
        let paths = ArtifactPaths::for_stem(&cfg.output, &format!("{}.{}", stem_of(input), cfg.method.name()));
        let sidecar = Sidecar {
            height: heatmap.height(),
            width: heatmap.width(),
            normalized: heatmap.is_normalized(),
            explainer: cfg.method.name().into(),
            config_hash: hash.clone(),
            seed: cfg.seed,
            format: "f32le".into(),
        };
        write_artifact(&paths, &heatmap, &sidecar, &image)?;
        log::info!("wrote {}", paths.raw.display());
        written.push(paths);
    }
    echo_config(&cfg)?;
    Ok(written)
}

/// Returns the report JSON; writes it when `--output` is set.
pub fn evaluate(args: &EvaluateArgs) -> CliResult<Vec<u8>> {
    let mut cfg = base_config(args.config.as_ref())?;
    args.model.apply(&mut cfg);
    args.metrics.apply(&mut cfg);

    let report = if let Some(stored) = &args.from_report {
        if args.metric != MetricChoice::Overall && args.metric != MetricChoice::All {
            return Err(CliError::usage("evaluate", "--from-report only recomputes the overall score"));
        }
        let text = std::fs::read_to_string(stored)
            .map_err(|e| CliError::usage("report", format!("cannot read {}: {e}", stored.display())))?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| CliError::usage("report", format!("{}: {e}", stored.display())))?;
        overall_from_stored(&value)?
    } else {
        cfg.metrics.validate().during("config")?;
        let image_path = args
            .image
            .clone()
            .or_else(|| cfg.inputs.first().cloned())
            .ok_or_else(|| CliError::usage("input", "no image given (--image)"))?;
        let heatmap_path =
            args.heatmap.clone().ok_or_else(|| CliError::usage("heatmap", "no heatmap given (--heatmap)"))?;
        let (heatmap, sidecar) = read_artifact(&ArtifactPaths::from_any(&heatmap_path))?;
        let backend = load_backend(&cfg.model)?;
        if !backend.capabilities().has_probabilities
            && matches!(args.metric, MetricChoice::All | MetricChoice::Overall | MetricChoice::Deletion | MetricChoice::Insertion)
        {
            return Err(CliError::from_core("model", osadas_core::Error::MissingClassificationHead));
        }
        let image = load_image(&image_path, cfg.preprocess, backend.as_ref())?;
        let mut report = measure(&image, &heatmap, backend.as_ref(), &cfg.metrics, args.metric)?;
        report.image = Some(image_path);
        report.heatmap = Some(heatmap_path);
        report.explainer = Some(sidecar.explainer);
        report
    };
    let bytes = report.to_json()?;
    if let Some(out) = &args.output {
        atomic_write(out, &bytes)?;
    }
    Ok(bytes)
}

fn corpus_images(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir)
        .map_err(|e| CliError::usage("corpus", format!("cannot read {}: {e}", dir.display())))?;
    let mut images: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
        })
        .collect();
    images.sort();
    if images.is_empty() {
        return Err(CliError::usage("corpus", format!("no PNG or JPEG images in {}", dir.display())));
    }
    Ok(images)
}

pub fn compare(args: &CompareArgs) -> CliResult<Comparison> {
    let mut cfg = base_config(args.config.as_ref())?;
    args.model.apply(&mut cfg);
    args.explainer.apply(&mut cfg)?;
    args.metrics.apply(&mut cfg);
    if let Some(out) = &args.output {
        cfg.output = out.clone();
    }
    cfg.sync();
    validate(&cfg)?;
    let images = corpus_images(&args.corpus)?;
    cfg.inputs = images.clone();
    let mut methods = args.methods.clone();
    methods.sort();
    methods.dedup();
    if methods.is_empty() {
        return Err(CliError::usage("compare", "no methods given"));
    }
    let backend = load_backend(&cfg.model)?;
    for m in &methods {
        check_capabilities(*m, backend.as_ref())?;
    }
    if !backend.capabilities().has_probabilities {
        return Err(CliError::from_core("model", osadas_core::Error::MissingClassificationHead));
    }

    // Mask scoring shares the corpus pool instead of starting its own.
    let mut inner = cfg.clone();
    inner.explainer.workers = 0;
    let jobs: Vec<(Method, &PathBuf)> = methods.iter().flat_map(|m| images.iter().map(move |i| (*m, i))).collect();
    let run = || -> CliResult<Vec<CompareRow>> {
        jobs.par_iter()
            .map(|(method, path)| {
                let image = load_image(path, inner.preprocess, backend.as_ref())?;
                let (heatmap, warnings) = run_method(*method, &image, backend.as_ref(), &inner)?;
                for w in &warnings {
                    log::warn!("{} / {}: {w}", method.name(), path.display());
                }
                let report = measure(&image, &quantize(&heatmap), backend.as_ref(), &inner.metrics, MetricChoice::All)?;
                let m = report.metrics;
                let get = |v: Option<f64>| v.ok_or_else(|| CliError::runtime("compare", "metric missing from report"));
                Ok(CompareRow {
                    method: method.name().into(),
                    image: (*path).clone(),
                    deletion: get(m.deletion)?,
                    insertion: get(m.insertion)?,
                    minimal_size: get(m.minimal_size)?,
                    minimal_size_contour: get(m.minimal_size_contour)?,
                    overall: get(m.overall)?,
                })
            })
            .collect()
    };
    let rows = if cfg.workers == 0 {
        run()?
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| CliError::runtime("compare", e.to_string()))?
            .install(run)?
    };
    let comparison = Comparison::build(rows)?;
    let json = serde_json::to_vec_pretty(&comparison).map_err(|e| CliError::runtime("compare", e.to_string()))?;
    atomic_write(&cfg.output.join("compare.json"), &json)?;
    atomic_write(&cfg.output.join("compare.txt"), comparison.to_text().as_bytes())?;
    echo_config(&cfg)?;
    Ok(comparison)
}
