//! Dataset-level evaluation: MRR, hit rate, latency, ablations and
//! hyperparameter search.

mod ablation;
mod latency;
mod metrics;
mod tune;

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::{decode_image, BackendDescriptor, EmbeddingBackend};
use crate::dataset::{Sample, SampleSet};
use crate::error::{Result, VwsdError};
use crate::pipeline::{image_embedding, text_embedding, PipelineConfig, Resources};
use crate::ranker::{rank_candidates, round6};

pub use ablation::{comparison_table, comparison_tsv, run_ablation, NamedReport};
pub use latency::{LatencyReport, Stats};
pub use metrics::{compute_hit_rate, compute_mrr};
pub use tune::{
    tune_hyperparameters, GridSearch, ParamRange, QuasiRandomSearch, SearchSpace, SearchStrategy,
    TrialPoint, TrialRecord, TuneOutcome,
};

/// Abort when more than this fraction of samples fail.
pub const MAX_FAILURE_FRACTION: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub id: String,
    pub gold_rank: usize,
    pub predicted_index: usize,
    /// Cosine scores rounded to six decimals.
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedSample {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub mrr: f64,
    pub hit_rate: f64,
    pub evaluated: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: PipelineConfig,
    pub backend: BackendDescriptor,
    pub aggregates: Aggregates,
    pub latency: Option<LatencyReport>,
    pub per_sample: Vec<SampleRow>,
    pub skipped: Vec<SkippedSample>,
}

impl EvalReport {
    pub fn ranks(&self) -> Vec<usize> {
        self.per_sample.iter().map(|r| r.gold_rank).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }

    pub fn summary_line(&self) -> String {
        format!(
            "MRR {:.4}  Hit Rate {:.4}  ({} evaluated, {} skipped)",
            self.aggregates.mrr,
            self.aggregates.hit_rate,
            self.aggregates.evaluated,
            self.aggregates.skipped
        )
    }
}

struct Timings {
    text_ms: f64,
    image_ms: Vec<f64>,
    total_ms: f64,
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

fn evaluate_sample(
    set: &SampleSet,
    sample: &Sample,
    config: &PipelineConfig,
    backend: &dyn EmbeddingBackend,
    resources: &Resources,
) -> Result<(SampleRow, Timings)> {
    let start = Instant::now();
    let gold = sample
        .gold_index
        .ok_or_else(|| VwsdError::Config(format!("sample `{}` has no gold label", sample.id)))?;

    let t = Instant::now();
    let text = text_embedding(&sample.target_word, &sample.context_phrase, config, backend, resources)?;
    let text_ms = ms(t);

    let mut image_embs = Vec::with_capacity(sample.candidates.len());
    let mut image_ms = Vec::with_capacity(sample.candidates.len());
    for reference in &sample.candidates {
        let raster = decode_image(&set.resolve(reference)).map_err(|e| match e {
            VwsdError::Image { message, .. } => VwsdError::image(reference, message),
            other => other,
        })?;
        let t = Instant::now();
        image_embs.push(image_embedding(&raster, reference, config, backend)?);
        image_ms.push(ms(t));
    }

    let ranking = rank_candidates(&text.embedding, &image_embs, Some(gold))?;
    let row = SampleRow {
        id: sample.id.clone(),
        gold_rank: ranking.gold_rank.expect("gold given"),
        predicted_index: ranking.predicted_index,
        scores: ranking.scores.iter().copied().map(round6).collect(),
    };
    Ok((
        row,
        Timings {
            text_ms,
            image_ms,
            total_ms: ms(start),
        },
    ))
}

/// Runs the configured pipeline over every sample of `set`.
///
/// Samples whose images cannot be decoded or encoded are skipped and listed
/// in the report; more than [`MAX_FAILURE_FRACTION`] of them aborts the run.
pub fn evaluate(
    set: &SampleSet,
    config: &PipelineConfig,
    backend: &dyn EmbeddingBackend,
    resources: &Resources,
) -> Result<EvalReport> {
    config.validate()?;
    resources.check(config)?;
    if set.is_empty() {
        return Err(VwsdError::EmptyInput("sample set"));
    }
    if let Some(s) = set.samples.iter().find(|s| s.gold_index.is_none()) {
        return Err(VwsdError::Config(format!(
            "evaluation needs gold labels; sample `{}` has none",
            s.id
        )));
    }

    let run = |s: &Sample| evaluate_sample(set, s, config, backend, resources);
    let outcomes: Vec<Result<(SampleRow, Timings)>> = if config.workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| VwsdError::Backend(format!("thread pool: {e}")))?;
        pool.install(|| set.samples.par_iter().map(run).collect())
    } else {
        set.samples.iter().map(run).collect()
    };

    let mut per_sample = Vec::with_capacity(set.len());
    let mut skipped = Vec::new();
    let (mut text_ms, mut image_ms, mut total_ms) = (Vec::new(), Vec::new(), Vec::new());
    for (sample, outcome) in set.samples.iter().zip(outcomes) {
        match outcome {
            Ok((row, t)) => {
                per_sample.push(row);
                text_ms.push(t.text_ms);
                image_ms.extend(t.image_ms);
                total_ms.push(t.total_ms);
            }
            Err(e) => {
                log::warn!("skipping sample `{}`: {e}", sample.id);
                skipped.push(SkippedSample {
                    id: sample.id.clone(),
                    reason: e.to_string(),
                });
            }
        }
    }

    if skipped.len() as f64 > MAX_FAILURE_FRACTION * set.len() as f64 {
        return Err(VwsdError::TooManyFailures {
            failed: skipped.len(),
            total: set.len(),
        });
    }

    let ranks: Vec<usize> = per_sample.iter().map(|r| r.gold_rank).collect();
    Ok(EvalReport {
        config: config.clone(),
        backend: backend.descriptor().clone(),
        aggregates: Aggregates {
            mrr: compute_mrr(&ranks)?,
            hit_rate: compute_hit_rate(&ranks)?,
            evaluated: per_sample.len(),
            skipped: skipped.len(),
        },
        latency: config
            .timing
            .then(|| LatencyReport::from_samples(&text_ms, &image_ms, &total_ms)),
        per_sample,
        skipped,
    })
}
