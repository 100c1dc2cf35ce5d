//! Pair scorers consumed by the evaluators.

use std::collections::HashSet;

use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::model::data::Corpus;
use crate::model::{ModelParams, Task};
use crate::policy::final_score;
use crate::synth::dataset::{PreferenceBatch, QualificationBatch};

pub trait PairScorer: Sync {
    fn score(&self, candidate_id: &str, job_id: &str) -> Result<f64>;
}

/// Scores 1 for labelled positives and 0 otherwise (or the reverse).
#[derive(Debug, Clone, Default)]
pub struct OracleScorer {
    positives: HashSet<(String, String)>,
    inverted: bool,
}

impl OracleScorer {
    pub fn preference<'a>(batches: impl IntoIterator<Item = &'a PreferenceBatch>) -> Self {
        let positives = batches
            .into_iter()
            .map(|b| (b.candidate_id.clone(), b.positive_job_id.clone()))
            .collect();
        Self { positives, inverted: false }
    }

    pub fn qualification<'a>(batches: impl IntoIterator<Item = &'a QualificationBatch>) -> Self {
        let positives = batches
            .into_iter()
            .map(|b| (b.qualified_id.clone(), b.job_id.clone()))
            .collect();
        Self { positives, inverted: false }
    }

    pub fn inverted(&self) -> Self {
        Self { positives: self.positives.clone(), inverted: !self.inverted }
    }
}

impl PairScorer for OracleScorer {
    fn score(&self, candidate_id: &str, job_id: &str) -> Result<f64> {
        let hit = self.positives.contains(&(candidate_id.to_string(), job_id.to_string()));
        Ok(if hit != self.inverted { 1.0 } else { 0.0 })
    }
}

/// Deterministic uniform score in [0, 1) per (seed, candidate, job).
#[derive(Debug, Clone, Copy)]
pub struct RandomScorer {
    seed: u64,
}

impl RandomScorer {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }
}

impl PairScorer for RandomScorer {
    fn score(&self, candidate_id: &str, job_id: &str) -> Result<f64> {
        let d = Sha256::new()
            .chain_update(self.seed.to_le_bytes())
            .chain_update(candidate_id.as_bytes())
            .chain_update([0u8])
            .chain_update(job_id.as_bytes())
            .finalize();
        let bits = u64::from_le_bytes(d[..8].try_into().expect("8 bytes"));
        Ok((bits >> 11) as f64 / (1u64 << 53) as f64)
    }
}

/// Which model output ranks the items.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScoreMode {
    Head(Task),
    Final { lambda_star: f64, epsilon: f64 },
}

pub struct ModelScorer<'a> {
    pub params: &'a ModelParams,
    pub corpus: &'a Corpus,
    pub mode: ScoreMode,
}

impl<'a> ModelScorer<'a> {
    pub fn new(params: &'a ModelParams, corpus: &'a Corpus, mode: ScoreMode) -> Self {
        Self { params, corpus, mode }
    }
}

impl PairScorer for ModelScorer<'_> {
    fn score(&self, candidate_id: &str, job_id: &str) -> Result<f64> {
        let x = self.corpus.features(self.corpus.candidate(candidate_id)?, self.corpus.job(job_id)?);
        match self.mode {
            ScoreMode::Head(task) => self.params.forward_flat(&x, task),
            ScoreMode::Final { lambda_star, epsilon } => {
                Ok(final_score(self.params.score_flat(&x)?, lambda_star, epsilon))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_scorer_is_deterministic_and_bounded() {
        let s = RandomScorer::new(1);
        let a = s.score("u1", "j1").unwrap();
        assert_eq!(a, s.score("u1", "j1").unwrap());
        assert!((0.0..1.0).contains(&a));
        assert_ne!(a, RandomScorer::new(2).score("u1", "j1").unwrap());
        assert_ne!(s.score("u1", "j11").unwrap(), s.score("u11", "j1").unwrap());
    }
}
