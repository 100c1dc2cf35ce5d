//! Synthetic population, rubric labeling, and split datasets.
//!
//! [`synthesize`] runs the whole pipeline as a pure function of
//! [`SynthConfig`]: generate, score every pair, label, apply expert
//! overrides, k-core split the positives, sample hard-negative batches, and
//! build the job-centric qualification rankings.

pub mod config;
pub mod dataset;
pub mod generate;
pub mod rubric;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{self, Strictness};
use crate::par::{self, Exec};
use crate::usas::{ensure_valid_candidate, ensure_valid_job, CandidateProfile, JobPosting};

pub use config::{Distributions, NegativePool, SynthConfig};
pub use dataset::{
    apply_overrides, assign_qualification_labels, build_preference_dataset,
    build_qualification_dataset, kcore_split, label_pair, split_jobs, JobSplit, LabelOverride,
    PairAnnotation, PerSplit, PrefLabel, PreferenceBatch, QualificationBatch, Split,
};
pub use generate::{generate_candidates, generate_jobs};
pub use rubric::{rubric_score, RubricBreakdown, RUBRIC_MAX};

pub const CANDIDATES_FILE: &str = "candidates.jsonl";
pub const JOBS_FILE: &str = "jobs.jsonl";
pub const ANNOTATIONS_FILE: &str = "annotations.jsonl";
pub const PREF_BATCHES_FILE: &str = "pref_batches.jsonl";
pub const QUAL_BATCHES_FILE: &str = "qual_batches.jsonl";
pub const RUN_REPORT_FILE: &str = "run_report.json";
pub const JOB_SPLIT_FILE: &str = "job_split.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub feature_hash: String,
    pub negative_pool: NegativePool,
    pub n_candidates: usize,
    pub n_jobs: usize,
    pub pairs_scored: usize,
    pub positives: usize,
    pub hard_negatives: usize,
    pub discarded: usize,
    pub overrides_applied: usize,
    pub kcore_retained: usize,
    pub kcore_excluded: usize,
    pub kcore_positives_discarded: usize,
    pub pref_batches: PerSplit,
    pub pref_batches_dropped: usize,
    pub pref_train_batches_before_subsample: usize,
    pub qual_batches: PerSplit,
    pub qual_jobs_excluded: usize,
    pub qual_jobs_unassigned: usize,
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub candidates: Vec<CandidateProfile>,
    pub jobs: Vec<JobPosting>,
    /// Every scored pair, candidate-major.
    pub annotations: Vec<PairAnnotation>,
    pub pref_batches: Vec<PreferenceBatch>,
    pub qual_batches: Vec<QualificationBatch>,
    pub job_split: JobSplit,
    pub report: RunReport,
}

/// Rubric totals and labels for the full candidate × job grid.
pub fn score_all_pairs(
    candidates: &[CandidateProfile],
    jobs: &[JobPosting],
    config: &SynthConfig,
    exec: Exec,
) -> Result<Vec<PairAnnotation>> {
    let rows = par::map(exec, candidates, |c| -> Result<Vec<PairAnnotation>> {
        jobs.iter()
            .map(|j| {
                let score = rubric_score(c, j).total;
                Ok(PairAnnotation {
                    candidate_id: c.id_u.clone(),
                    job_id: j.id_i.clone(),
                    score,
                    pref_label: label_pair(score, config.positive_threshold, config.hard_negative_floor)?,
                    qual_label: None,
                    split: None,
                })
            })
            .collect()
    });
    let mut out = Vec::with_capacity(candidates.len() * jobs.len());
    for row in rows {
        out.extend(row?);
    }
    Ok(out)
}

pub fn read_overrides(path: &Path) -> Result<Vec<LabelOverride>> {
    io::read_jsonl(path, Strictness::Strict, None)
}

pub fn synthesize(config: &SynthConfig) -> Result<SynthOutput> {
    synthesize_with(config, Exec::default())
}

pub fn synthesize_with(config: &SynthConfig, exec: Exec) -> Result<SynthOutput> {
    config.validate()?;
    let overrides = match &config.override_file {
        Some(path) => read_overrides(path)?,
        None => Vec::new(),
    };

    let candidates = generate::generate_candidates_with(config, exec);
    let jobs = generate_jobs(config);
    for c in &candidates {
        ensure_valid_candidate(c)?;
    }
    for j in &jobs {
        ensure_valid_job(j)?;
    }

    let mut annotations = score_all_pairs(&candidates, &jobs, config, exec)?;
    assign_qualification_labels(&mut annotations);
    let overrides_applied = apply_overrides(&mut annotations, &overrides)?;

    let n_jobs = jobs.len();
    let positives: Vec<Vec<usize>> = annotations
        .chunks(n_jobs)
        .map(|row| {
            row.iter()
                .enumerate()
                .filter(|(_, a)| a.pref_label == PrefLabel::Positive)
                .map(|(j, _)| j)
                .collect()
        })
        .collect();
    let kcore = kcore_split(&positives, config.kcore, config.seed);
    for (ci, assignment) in kcore.assignments.iter().enumerate() {
        let Some(assignment) = assignment else { continue };
        let row = &mut annotations[ci * n_jobs..(ci + 1) * n_jobs];
        for split in Split::ALL {
            for &j in assignment.get(split) {
                row[j].split = Some(split);
            }
        }
        if config.negative_pool == NegativePool::Disjoint {
            let pool: Vec<usize> = row
                .iter()
                .enumerate()
                .filter(|(_, a)| a.pref_label == PrefLabel::HardNegative)
                .map(|(j, _)| j)
                .collect();
            for (j, split) in dataset::partition_negatives(&pool, config.negative_count, config.seed, ci) {
                row[j].split = Some(split);
            }
        }
    }

    let (pref_batches, pref_stats) = build_preference_dataset(&annotations, config);
    let before_subsample = pref_stats.emitted.train;
    let pref_batches = match config.subsample_train_batches {
        Some(keep) => dataset::subsample_train_batches(pref_batches, keep, config.seed),
        None => pref_batches,
    };
    let mut pref_counts = PerSplit::default();
    pref_batches.iter().for_each(|b| pref_counts.bump(b.split));

    let job_split = split_jobs(&jobs, config.qual_train_jobs, config.qual_test_jobs, config.seed)?;
    let (qual_batches, qual_stats) = build_qualification_dataset(&annotations, &job_split)?;

    let count = |l: PrefLabel| annotations.iter().filter(|a| a.pref_label == l).count();
    let report = RunReport {
        seed: config.seed,
        feature_hash: config.features.hash(),
        negative_pool: config.negative_pool,
        n_candidates: candidates.len(),
        n_jobs,
        pairs_scored: annotations.len(),
        positives: count(PrefLabel::Positive),
        hard_negatives: count(PrefLabel::HardNegative),
        discarded: count(PrefLabel::Discarded),
        overrides_applied,
        kcore_retained: candidates.len() - kcore.excluded,
        kcore_excluded: kcore.excluded,
        kcore_positives_discarded: kcore.positives_discarded,
        pref_batches: pref_counts,
        pref_batches_dropped: pref_stats.dropped,
        pref_train_batches_before_subsample: before_subsample,
        qual_batches: qual_stats.emitted,
        qual_jobs_excluded: qual_stats.excluded_jobs,
        qual_jobs_unassigned: job_split.unassigned.len(),
    };

    Ok(SynthOutput {
        candidates,
        jobs,
        annotations,
        pref_batches,
        qual_batches,
        job_split,
        report,
    })
}

/// Writes every dataset artifact into `dir`. Discarded pairs are counted in
/// the report but not written to the annotation file.
pub fn write_dataset(dir: &Path, out: &SynthOutput) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    io::write_jsonl(&dir.join(CANDIDATES_FILE), &out.candidates)?;
    io::write_jsonl(&dir.join(JOBS_FILE), &out.jobs)?;
    let kept: Vec<&PairAnnotation> = out
        .annotations
        .iter()
        .filter(|a| a.pref_label != PrefLabel::Discarded)
        .collect();
    io::write_jsonl(&dir.join(ANNOTATIONS_FILE), &kept)?;
    io::write_jsonl(&dir.join(PREF_BATCHES_FILE), &out.pref_batches)?;
    io::write_jsonl(&dir.join(QUAL_BATCHES_FILE), &out.qual_batches)?;
    io::write_json(&dir.join(JOB_SPLIT_FILE), &out.job_split)?;
    io::write_json(&dir.join(RUN_REPORT_FILE), &out.report)
}

/// The artifacts training and evaluation consume.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub candidates: Vec<CandidateProfile>,
    pub jobs: Vec<JobPosting>,
    pub pref_batches: Vec<PreferenceBatch>,
    pub qual_batches: Vec<QualificationBatch>,
    pub report: RunReport,
}

impl Dataset {
    pub fn from_output(out: &SynthOutput) -> Self {
        Self {
            candidates: out.candidates.clone(),
            jobs: out.jobs.clone(),
            pref_batches: out.pref_batches.clone(),
            qual_batches: out.qual_batches.clone(),
            report: out.report.clone(),
        }
    }

    pub fn load(dir: &Path, strictness: Strictness) -> Result<Self> {
        let candidates: Vec<CandidateProfile> = io::read_jsonl(
            &dir.join(CANDIDATES_FILE),
            strictness,
            Some(CandidateProfile::FIELDS),
        )?;
        let jobs: Vec<JobPosting> =
            io::read_jsonl(&dir.join(JOBS_FILE), strictness, Some(JobPosting::FIELDS))?;
        for c in &candidates {
            ensure_valid_candidate(c)?;
        }
        for j in &jobs {
            ensure_valid_job(j)?;
        }
        Ok(Self {
            candidates,
            jobs,
            pref_batches: io::read_jsonl(&dir.join(PREF_BATCHES_FILE), strictness, None)?,
            qual_batches: io::read_jsonl(&dir.join(QUAL_BATCHES_FILE), strictness, None)?,
            report: io::read_json(&dir.join(RUN_REPORT_FILE))?,
        })
    }

    pub fn pref_split(&self, split: Split) -> Vec<&PreferenceBatch> {
        self.pref_batches.iter().filter(|b| b.split == split).collect()
    }

    pub fn qual_split(&self, split: Split) -> Vec<&QualificationBatch> {
        self.qual_batches.iter().filter(|b| b.split == split).collect()
    }
}
