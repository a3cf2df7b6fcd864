use crate::dataset::CANDIDATES;
use crate::error::{Result, VwsdError};

fn check(ranks: &[usize]) -> Result<()> {
    if ranks.is_empty() {
        return Err(VwsdError::EmptyInput("rank list"));
    }
    if let Some(&bad) = ranks.iter().find(|&&r| r == 0 || r > CANDIDATES) {
        return Err(VwsdError::Config(format!(
            "rank {bad} outside 1..={CANDIDATES}"
        )));
    }
    Ok(())
}

/// Mean reciprocal rank of 1-based gold ranks.
pub fn compute_mrr(ranks: &[usize]) -> Result<f64> {
    check(ranks)?;
    Ok(ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / ranks.len() as f64)
}

/// Fraction of ranks equal to 1.
pub fn compute_hit_rate(ranks: &[usize]) -> Result<f64> {
    check(ranks)?;
    Ok(ranks.iter().filter(|&&r| r == 1).count() as f64 / ranks.len() as f64)
}
