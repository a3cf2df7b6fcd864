use serde::{Deserialize, Serialize};

use crate::dataset::CANDIDATES;

/// Summary of a list of durations in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub median: f64,
    pub p95: f64,
    pub count: usize,
}

impl Stats {
    pub fn from_samples(samples: &[f64]) -> Stats {
        if samples.is_empty() {
            return Stats::default();
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
        };
        // nearest-rank percentile
        let rank = ((0.95 * n as f64).ceil() as usize).clamp(1, n);
        Stats {
            mean: sorted.iter().sum::<f64>() / n as f64,
            median,
            p95: sorted[rank - 1],
            count: n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub text_embedding_ms: Stats,
    pub image_embedding_per_image_ms: Stats,
    /// Candidates per query times the mean per-image latency.
    pub image_embedding_per_query_estimated_ms: f64,
    pub end_to_end_per_query_ms: Stats,
}

impl LatencyReport {
    pub fn from_samples(text: &[f64], per_image: &[f64], end_to_end: &[f64]) -> Self {
        let per_image = Stats::from_samples(per_image);
        LatencyReport {
            text_embedding_ms: Stats::from_samples(text),
            image_embedding_per_query_estimated_ms: CANDIDATES as f64 * per_image.mean,
            image_embedding_per_image_ms: per_image,
            end_to_end_per_query_ms: Stats::from_samples(end_to_end),
        }
    }
}
