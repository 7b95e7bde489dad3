//! JSON metric reports and the comparison table.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use osadas_core::metrics::{self, Curve, MetricConfig};
use osadas_core::{Backend, Heatmap, Image};

use crate::error::{CliError, CliResult, Context};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum MetricChoice {
    Deletion,
    Insertion,
    MinimalSize,
    Overall,
    All,
}

impl MetricChoice {
    fn wants(self, metric: MetricChoice) -> bool {
        self == MetricChoice::All || self == metric || (self == MetricChoice::Overall && metric != MetricChoice::All)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricValues {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub deletion: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub insertion: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub minimal_size: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub minimal_size_contour: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub overall: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub image: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub heatmap: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub explainer: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tracked_class: Option<usize>,
    pub metrics: MetricValues,
    /// Per-metric `(fraction, value)` points.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub curves: BTreeMap<String, Curve>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metric_config: Option<MetricConfig>,
}

impl Report {
    pub fn to_json(&self) -> CliResult<Vec<u8>> {
        let mut bytes = serde_json::to_vec_pretty(self).map_err(|e| CliError::runtime("report", e.to_string()))?;
        bytes.push(b'\n');
        Ok(bytes)
    }
}

/// Runs the selected metrics on one image-heatmap pair.
pub fn measure(
    image: &Image,
    heatmap: &Heatmap,
    backend: &dyn Backend,
    config: &MetricConfig,
    choice: MetricChoice,
) -> CliResult<Report> {
    config.validate().during("metrics")?;
    if (image.height(), image.width()) != (heatmap.height(), heatmap.width()) {
        return Err(CliError::usage(
            "heatmap",
            format!(
                "heatmap is {}x{} but the image is {}x{}",
                heatmap.height(),
                heatmap.width(),
                image.height(),
                image.width()
            ),
        ));
    }
    let mut report = Report {
        schema_version: SCHEMA_VERSION,
        metric_config: Some(config.clone()),
        ..Default::default()
    };
    let m = &mut report.metrics;
    if choice.wants(MetricChoice::Deletion) {
        let r = metrics::deletion(image, heatmap, backend, config).during("metrics")?;
        m.deletion = Some(r.auc);
        report.curves.insert("deletion".into(), r.curve);
    }
    if choice.wants(MetricChoice::Insertion) {
        let r = metrics::insertion(image, heatmap, backend, config).during("metrics")?;
        m.insertion = Some(r.auc);
        report.curves.insert("insertion".into(), r.curve);
    }
    if choice.wants(MetricChoice::MinimalSize) {
        let plain = metrics::minimal_size_plain(image, heatmap, backend, config).during("metrics")?;
        let contour = metrics::minimal_size_contour(image, heatmap, backend, config).during("metrics")?;
        m.minimal_size = Some(plain.ratio);
        m.minimal_size_contour = Some(contour.ratio);
        report.curves.insert("minimal_size".into(), plain.curve);
        report.curves.insert("minimal_size_contour".into(), contour.curve);
    }
    if let (Some(ins), Some(del), Some(ms)) = (m.insertion, m.deletion, m.minimal_size) {
        m.overall = Some(metrics::overall(ins, del, ms).during("metrics")?);
    }
    if backend.capabilities().has_probabilities {
        report.tracked_class = Some(metrics::tracked_class(backend, image).during("metrics")?);
    }
    Ok(report)
}

/// Recomputes `overall` from a stored report's three inputs.
pub fn overall_from_stored(stored: &serde_json::Value) -> CliResult<Report> {
    let source = stored.get("metrics").unwrap_or(stored);
    let field = |name: &str| {
        source
            .get(name)
            .and_then(serde_json::Value::as_f64)
            .ok_or_else(|| CliError::usage("report", format!("stored report has no numeric `{name}`")))
    };
    let (ins, del, ms) = (field("insertion")?, field("deletion")?, field("minimal_size")?);
    Ok(Report {
        schema_version: SCHEMA_VERSION,
        metrics: MetricValues {
            deletion: Some(del),
            insertion: Some(ins),
            minimal_size: Some(ms),
            minimal_size_contour: None,
            overall: Some(metrics::overall(ins, del, ms).during("report")?),
        },
        ..Default::default()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub method: String,
    pub image: PathBuf,
    pub deletion: f64,
    pub insertion: f64,
    pub minimal_size: f64,
    pub minimal_size_contour: f64,
    pub overall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareSummary {
    pub method: String,
    pub images: usize,
    pub deletion: f64,
    pub insertion: f64,
    pub minimal_size: f64,
    pub minimal_size_contour: f64,
    /// Mean of the per-image overall scores.
    pub overall_per_image: f64,
    /// Overall score of the mean deletion, insertion and minimal size.
    pub overall_of_means: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub schema_version: u32,
    pub rows: Vec<CompareRow>,
    pub summary: Vec<CompareSummary>,
}

impl Comparison {
    /// Sorts rows by method name then image path and computes per-method means.
    pub fn build(mut rows: Vec<CompareRow>) -> CliResult<Self> {
        rows.sort_by(|a, b| a.method.cmp(&b.method).then_with(|| a.image.cmp(&b.image)));
        let mut summary = Vec::new();
        for chunk in rows.chunk_by(|a, b| a.method == b.method) {
            let n = chunk.len() as f64;
            let mean = |f: fn(&CompareRow) -> f64| chunk.iter().map(f).sum::<f64>() / n;
            let (del, ins, ms) = (mean(|r| r.deletion), mean(|r| r.insertion), mean(|r| r.minimal_size));
            summary.push(CompareSummary {
                method: chunk[0].method.clone(),
                images: chunk.len(),
                deletion: del,
                insertion: ins,
                minimal_size: ms,
                minimal_size_contour: mean(|r| r.minimal_size_contour),
                overall_per_image: mean(|r| r.overall),
                overall_of_means: metrics::overall(ins, del, ms).during("compare")?,
            });
        }
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            rows,
            summary,
        })
    }

    pub fn to_text(&self) -> String {
        let header = ["method", "image", "deletion", "insertion", "min_size", "min_size_contour", "overall"];
        let mut lines: Vec<[String; 7]> = vec![header.map(String::from)];
        let num = |v: f64| format!("{v:.4}");
        for r in &self.rows {
            lines.push([
                r.method.clone(),
                r.image.display().to_string(),
                num(r.deletion),
                num(r.insertion),
                num(r.minimal_size),
                num(r.minimal_size_contour),
                num(r.overall),
            ]);
        }
        let mut out = render_table(&lines);
        out.push('\n');
        let header = [
            "method",
            "images",
            "deletion",
            "insertion",
            "min_size",
            "min_size_contour",
            "overall_per_image",
            "overall_of_means",
        ];
        let mut lines: Vec<[String; 8]> = vec![header.map(String::from)];
        for s in &self.summary {
            lines.push([
                s.method.clone(),
                s.images.to_string(),
                num(s.deletion),
                num(s.insertion),
                num(s.minimal_size),
                num(s.minimal_size_contour),
                num(s.overall_per_image),
                num(s.overall_of_means),
            ]);
        }
        out.push_str(&render_table(&lines));
        out
    }
}

fn render_table<const N: usize>(lines: &[[String; N]]) -> String {
    let widths: Vec<usize> = (0..N).map(|c| lines.iter().map(|l| l[c].len()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for line in lines {
        let cells: Vec<String> = line
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (cell, w))| if i < 2 { format!("{cell:<w$}") } else { format!("{cell:>w$}") })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out
}
