use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::usas::FeatureConfig;

use super::rubric::RUBRIC_MAX;

/// Where a candidate's hard negatives may be drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativePool {
    /// One pool per candidate, usable by every split. Hard-negative
    /// annotations carry no split.
    #[default]
    Shared,
    /// The pool is partitioned per candidate (test first, then validation,
    /// remainder to train) and each hard-negative annotation carries its split.
    Disjoint,
}

/// Marginal distributions of the generated population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Distributions {
    pub gpa_mean: f64,
    pub gpa_sd: f64,
    pub gpa_min: f64,
    pub gpa_max: f64,
    /// Undergraduate / Masters / PhD.
    pub level_probs: [f64; 3],
    pub hours: Vec<f64>,
    pub hours_probs: Vec<f64>,
    pub job_hours_probs: Vec<f64>,
    /// Undergraduate / Masters / PhD minimum-level mix for jobs.
    pub job_level_probs: [f64; 3],
    pub job_gpa_thresholds: Vec<f64>,
    pub second_major_prob: f64,
}

impl Default for Distributions {
    fn default() -> Self {
        Self {
            gpa_mean: 3.4,
            gpa_sd: 0.4,
            gpa_min: 2.0,
            gpa_max: 4.0,
            level_probs: [0.5, 0.35, 0.15],
            hours: vec![10.0, 15.0, 20.0, 30.0, 40.0],
            hours_probs: vec![0.20, 0.25, 0.25, 0.18, 0.12],
            job_hours_probs: vec![0.50, 0.25, 0.15, 0.07, 0.03],
            job_level_probs: [0.8, 0.15, 0.05],
            job_gpa_thresholds: vec![2.9, 3.0, 3.1, 3.2, 3.3],
            second_major_prob: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_candidates: usize,
    pub n_jobs: usize,
    pub seed: u64,
    pub negative_count: usize,
    pub positive_threshold: f64,
    pub hard_negative_floor: f64,
    /// Train / validation / test positives per retained candidate.
    pub kcore: [usize; 3],
    pub qual_train_jobs: usize,
    pub qual_test_jobs: usize,
    pub negative_pool: NegativePool,
    /// Uniformly keep this many preference-train batches.
    pub subsample_train_batches: Option<usize>,
    pub override_file: Option<PathBuf>,
    pub features: FeatureConfig,
    pub distributions: Distributions,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_candidates: 5000,
            n_jobs: 100,
            seed: 7,
            negative_count: 49,
            positive_threshold: 14.0,
            hard_negative_floor: 10.0,
            kcore: [3, 1, 1],
            qual_train_jobs: 68,
            qual_test_jobs: 30,
            negative_pool: NegativePool::Shared,
            subsample_train_batches: None,
            override_file: None,
            features: FeatureConfig::default(),
            distributions: Distributions::default(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if self.n_candidates == 0 || self.n_jobs == 0 {
            return err("n_candidates and n_jobs must be >= 1".into());
        }
        if !(0.0 <= self.hard_negative_floor
            && self.hard_negative_floor < self.positive_threshold
            && self.positive_threshold <= RUBRIC_MAX)
        {
            return err(format!(
                "thresholds must satisfy 0 <= floor ({}) < positive ({}) <= {RUBRIC_MAX}",
                self.hard_negative_floor, self.positive_threshold
            ));
        }
        if self.kcore.contains(&0) {
            return err(format!("kcore counts must be positive, got {:?}", self.kcore));
        }
        if self.negative_count == 0 {
            return err("negative_count must be >= 1".into());
        }
        if self.qual_train_jobs + self.qual_test_jobs > self.n_jobs {
            return err(format!(
                "qualification job split {}+{} exceeds {} jobs",
                self.qual_train_jobs, self.qual_test_jobs, self.n_jobs
            ));
        }
        let d = &self.distributions;
        if d.hours.is_empty()
            || d.hours.len() != d.hours_probs.len()
            || d.hours.len() != d.job_hours_probs.len()
        {
            return err("distributions.hours and its probability vectors must align".into());
        }
        if d.job_gpa_thresholds.is_empty() || d.gpa_min.is_nan() || d.gpa_max.is_nan() || d.gpa_min >= d.gpa_max || d.gpa_sd <= 0.0 {
            return err("invalid GPA distribution settings".into());
        }
        self.features.check()
    }
}
