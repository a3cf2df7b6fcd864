//! Cosine scoring and ranking of the candidate images.

use serde::{Deserialize, Serialize};

use crate::dataset::CANDIDATES;
use crate::embedding::Embedding;
use crate::error::{Result, VwsdError};

/// `a . b / (|a| |b|)`.
pub fn cosine(a: &Embedding, b: &Embedding) -> Result<f64> {
    let dot = a.dot(b)?;
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(VwsdError::ZeroVector("cosine"));
    }
    Ok(dot / (na * nb))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingResult {
    /// Cosine score of each candidate, in candidate order.
    pub scores: Vec<f64>,
    /// Candidate indices by descending score; ties keep the lower index first.
    pub order: Vec<usize>,
    pub predicted_index: usize,
    /// 1-based rank of the gold candidate.
    pub gold_rank: Option<usize>,
}

/// Ranks exactly [`CANDIDATES`] image embeddings against `text`.
pub fn rank_candidates(
    text: &Embedding,
    images: &[Embedding],
    gold_index: Option<usize>,
) -> Result<RankingResult> {
    if images.len() != CANDIDATES {
        return Err(VwsdError::CandidateCount {
            expected: CANDIDATES,
            actual: images.len(),
        });
    }
    if let Some(g) = gold_index {
        if g >= CANDIDATES {
            return Err(VwsdError::Config(format!("gold index {g} out of range")));
        }
    }
    let scores = images
        .iter()
        .map(|img| cosine(text, img))
        .collect::<Result<Vec<f64>>>()?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // stable sort keeps lower indices first among equal scores
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let gold_rank = gold_index.map(|g| {
        order.iter().position(|&i| i == g).expect("order is a permutation") + 1
    });
    Ok(RankingResult {
        predicted_index: order[0],
        scores,
        order,
        gold_rank,
    })
}

/// Rounds to six decimals for reporting.
pub fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}
