//! Search over fusion weights and temperature, maximizing validation MRR on
//! an internal train/validation split.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::evaluate;
use crate::backend::EmbeddingBackend;
use crate::dataset::{split_train_validation, SampleSet};
use crate::error::{Result, VwsdError};
use crate::pipeline::{PipelineConfig, Resources};
use crate::prompts::FusionWeights;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamRange {
    pub lo: f64,
    pub hi: f64,
}

impl ParamRange {
    pub fn new(lo: f64, hi: f64) -> Self {
        ParamRange { lo, hi }
    }

    fn at(&self, u: f64) -> f64 {
        self.lo + u * (self.hi - self.lo)
    }
}

/// Ranges for the tunable parameters; an absent range keeps the base value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub beta_p: Option<ParamRange>,
    pub beta_s: Option<ParamRange>,
    pub tau: Option<ParamRange>,
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        let dims = [("beta_p", self.beta_p), ("beta_s", self.beta_s), ("tau", self.tau)];
        if dims.iter().all(|(_, r)| r.is_none()) {
            return Err(VwsdError::Config("search space is empty".into()));
        }
        for (name, r) in dims {
            if let Some(r) = r {
                if r.lo.partial_cmp(&r.hi).is_none_or(|o| o.is_gt()) || !r.lo.is_finite() || !r.hi.is_finite() {
                    return Err(VwsdError::Config(format!(
                        "empty range for {name}: [{}, {}]",
                        r.lo, r.hi
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialPoint {
    pub beta_p: f64,
    pub beta_s: f64,
    pub tau: f64,
}

impl TrialPoint {
    fn apply(&self, base: &PipelineConfig) -> PipelineConfig {
        let mut c = base.clone();
        c.fusion = FusionWeights {
            beta_p: self.beta_p,
            beta_s: self.beta_s,
        };
        c.tau = self.tau;
        c
    }
}

/// Proposes the next point to evaluate; `None` ends the search early.
pub trait SearchStrategy {
    fn propose(
        &mut self,
        trial: usize,
        space: &SearchSpace,
        base: &PipelineConfig,
    ) -> Option<TrialPoint>;
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut out = 0.0;
    while i > 0 {
        out += (i % base) as f64 * f;
        i /= base;
        f *= inv;
    }
    out
}

/// Randomly shifted Halton sequence (bases 2, 3, 5). Deterministic for a
/// given seed.
#[derive(Debug, Clone)]
pub struct QuasiRandomSearch {
    shift: [f64; 3],
}

impl QuasiRandomSearch {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        QuasiRandomSearch {
            shift: [rng.random(), rng.random(), rng.random()],
        }
    }
}

impl SearchStrategy for QuasiRandomSearch {
    fn propose(&mut self, trial: usize, space: &SearchSpace, base: &PipelineConfig) -> Option<TrialPoint> {
        let u = |dim: usize, b: u64| (radical_inverse(trial as u64 + 1, b) + self.shift[dim]).fract();
        let pick = |r: Option<ParamRange>, dim, b, default| r.map_or(default, |r| r.at(u(dim, b)));
        Some(TrialPoint {
            beta_p: pick(space.beta_p, 0, 2, base.fusion.beta_p),
            beta_s: pick(space.beta_s, 1, 3, base.fusion.beta_s),
            tau: pick(space.tau, 2, 5, base.tau),
        })
    }
}

/// Evaluates a fixed list of points in order.
#[derive(Debug, Clone)]
pub struct GridSearch {
    pub points: Vec<TrialPoint>,
}

impl SearchStrategy for GridSearch {
    fn propose(&mut self, trial: usize, _: &SearchSpace, _: &PipelineConfig) -> Option<TrialPoint> {
        self.points.get(trial).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub point: TrialPoint,
    pub mrr: Option<f64>,
    pub hit_rate: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneOutcome {
    pub best: PipelineConfig,
    pub best_trial: usize,
    pub trials: Vec<TrialRecord>,
    pub train_size: usize,
    pub validation_size: usize,
}

impl TuneOutcome {
    pub fn trials_tsv(&self) -> String {
        let mut out = String::from("trial\tbeta_p\tbeta_s\ttau\tmrr\thit_rate\terror\n");
        for t in &self.trials {
            let opt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.6}"));
            out.push_str(&format!(
                "{}\t{:.6}\t{:.6}\t{:.6}\t{}\t{}\t{}\n",
                t.trial,
                t.point.beta_p,
                t.point.beta_s,
                t.point.tau,
                opt(t.mrr),
                opt(t.hit_rate),
                t.error.as_deref().unwrap_or("-")
            ));
        }
        out
    }
}

pub const VALIDATION_SPLIT_FRACTION: f64 = 0.8;

/// Splits `train` 80/20 with `seed`, evaluates up to `trials` points from
/// `strategy` on the validation part, and returns the configuration with
/// the highest validation MRR (earliest trial wins ties).
#[allow(clippy::too_many_arguments)]
pub fn tune_hyperparameters(
    train: &SampleSet,
    base: &PipelineConfig,
    space: &SearchSpace,
    strategy: &mut dyn SearchStrategy,
    trials: usize,
    seed: u64,
    backend: &dyn EmbeddingBackend,
    resources: &Resources,
) -> Result<TuneOutcome> {
    if trials == 0 {
        return Err(VwsdError::Config("at least one trial is required".into()));
    }
    space.validate()?;
    let (fit, validation) = split_train_validation(train, VALIDATION_SPLIT_FRACTION, seed)?;
    if validation.is_empty() {
        return Err(VwsdError::EmptyInput("validation split"));
    }

    let mut records = Vec::with_capacity(trials);
    let mut best: Option<(usize, f64)> = None;
    for trial in 0..trials {
        let Some(point) = strategy.propose(trial, space, base) else {
            break;
        };
        let config = point.apply(base);
        let record = match evaluate(&validation, &config, backend, resources) {
            Ok(report) => {
                let mrr = report.aggregates.mrr;
                if best.is_none_or(|(_, b)| mrr > b) {
                    best = Some((trial, mrr));
                }
                TrialRecord {
                    trial,
                    point,
                    mrr: Some(mrr),
                    hit_rate: Some(report.aggregates.hit_rate),
                    error: None,
                }
            }
            Err(e @ VwsdError::Config(_)) => TrialRecord {
                trial,
                point,
                mrr: None,
                hit_rate: None,
                error: Some(e.to_string()),
            },
            Err(e) => return Err(e),
        };
        log::info!(
            "trial {trial}: beta_p={:.4} beta_s={:.4} tau={:.4} mrr={:?}",
            point.beta_p,
            point.beta_s,
            point.tau,
            record.mrr
        );
        records.push(record);
    }

    let (best_trial, _) = best.ok_or_else(|| VwsdError::Config("no trial produced a score".into()))?;
    Ok(TuneOutcome {
        best: records[best_trial].point.apply(base),
        best_trial,
        trials: records,
        train_size: fit.len(),
        validation_size: validation.len(),
    })
}
