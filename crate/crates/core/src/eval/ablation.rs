use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{evaluate, EvalReport};
use crate::backend::EmbeddingBackend;
use crate::dataset::SampleSet;
use crate::error::Result;
use crate::pipeline::{PipelineConfig, Resources};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedReport {
    pub name: String,
    pub report: EvalReport,
}

/// Evaluates every named configuration on the same sample list.
pub fn run_ablation(
    set: &SampleSet,
    configs: &[(String, PipelineConfig)],
    backend: &dyn EmbeddingBackend,
    resources: &Resources,
) -> Result<Vec<NamedReport>> {
    configs
        .iter()
        .map(|(name, config)| {
            log::info!("ablation: evaluating `{name}`");
            Ok(NamedReport {
                name: name.clone(),
                report: evaluate(set, config, backend, resources)?,
            })
        })
        .collect()
}

const COLUMNS: [&str; 10] = [
    "config",
    "mrr",
    "hit_rate",
    "evaluated",
    "skipped",
    "views_per_image",
    "text_ms_mean",
    "image_ms_mean",
    "image_ms_per_query_est",
    "end_to_end_ms_mean",
];

fn row(r: &NamedReport) -> Vec<String> {
    let a = &r.report.aggregates;
    let mut cells = vec![
        r.name.clone(),
        format!("{:.4}", a.mrr),
        format!("{:.4}", a.hit_rate),
        a.evaluated.to_string(),
        a.skipped.to_string(),
        r.report.config.augmentation.total_views().to_string(),
    ];
    match &r.report.latency {
        Some(l) => cells.extend([
            format!("{:.2}", l.text_embedding_ms.mean),
            format!("{:.2}", l.image_embedding_per_image_ms.mean),
            format!("{:.2}", l.image_embedding_per_query_estimated_ms),
            format!("{:.2}", l.end_to_end_per_query_ms.mean),
        ]),
        None => cells.extend(std::iter::repeat_n("-".to_string(), 4)),
    }
    cells
}

pub fn comparison_tsv(reports: &[NamedReport]) -> String {
    let mut out = COLUMNS.join("\t");
    out.push('\n');
    for r in reports {
        out.push_str(&row(r).join("\t"));
        out.push('\n');
    }
    out
}

/// Column-aligned text version of [`comparison_tsv`].
pub fn comparison_table(reports: &[NamedReport]) -> String {
    let rows: Vec<Vec<String>> = std::iter::once(COLUMNS.iter().map(|c| c.to_string()).collect())
        .chain(reports.iter().map(row))
        .collect();
    let widths: Vec<usize> = (0..COLUMNS.len())
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for r in &rows {
        let line: Vec<String> = r
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (cell, w))| {
                if i == 0 {
                    format!("{cell:<w$}")
                } else {
                    format!("{cell:>w$}")
                }
            })
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
    }
    out
}
