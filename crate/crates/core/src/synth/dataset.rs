//! Labeling and split construction over scored pairs.

use std::collections::{BTreeMap, HashMap};

use rand::seq::{IndexedRandom, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::usas::JobPosting;

use super::config::{NegativePool, SynthConfig};
use super::generate::sub_rng;
use super::rubric::RUBRIC_MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PrefLabel {
    Positive,
    HardNegative,
    Discarded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairAnnotation {
    pub candidate_id: String,
    pub job_id: String,
    pub score: f64,
    pub pref_label: PrefLabel,
    pub qual_label: Option<bool>,
    /// `None` for discarded pairs, positives dropped by k-core filtering, and
    /// hard negatives in a shared pool.
    pub split: Option<Split>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferenceBatch {
    pub batch_id: String,
    pub candidate_id: String,
    pub split: Split,
    pub positive_job_id: String,
    pub negative_job_ids: Vec<String>,
}

impl PreferenceBatch {
    /// `(job_id, label)` for all items, positive first.
    pub fn items(&self) -> impl Iterator<Item = (&str, bool)> {
        std::iter::once((self.positive_job_id.as_str(), true))
            .chain(self.negative_job_ids.iter().map(|j| (j.as_str(), false)))
    }

    pub fn len(&self) -> usize {
        1 + self.negative_job_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualificationBatch {
    pub job_id: String,
    pub split: Split,
    /// Sorted by candidate id.
    pub applicant_ids: Vec<String>,
    pub qualified_id: String,
}

impl QualificationBatch {
    pub fn items(&self) -> impl Iterator<Item = (&str, bool)> {
        self.applicant_ids
            .iter()
            .map(move |c| (c.as_str(), *c == self.qualified_id))
    }
}

/// Label from a rubric total. Totals outside `[0, RUBRIC_MAX]` indicate a
/// pipeline bug.
pub fn label_pair(score: f64, positive_threshold: f64, hard_negative_floor: f64) -> Result<PrefLabel> {
    if !(0.0..=RUBRIC_MAX).contains(&score) {
        return Err(Error::Validation(format!(
            "rubric score {score} outside [0, {RUBRIC_MAX}]"
        )));
    }
    Ok(if score >= positive_threshold {
        PrefLabel::Positive
    } else if score >= hard_negative_floor {
        PrefLabel::HardNegative
    } else {
        PrefLabel::Discarded
    })
}

/// Per-candidate positives placed into train / validation / test.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SplitAssignment {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitAssignment {
    pub fn get(&self, split: Split) -> &[usize] {
        match split {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct KcoreResult {
    /// `None` for excluded candidates.
    pub assignments: Vec<Option<SplitAssignment>>,
    pub excluded: usize,
    pub positives_discarded: usize,
}

/// k-core filtering of per-candidate positive lists.
///
/// Candidates with fewer than `a+b+c` positives are excluded; the rest get a
/// uniformly random `a+b+c` of their positives split `a/b/c`. Surplus
/// positives are discarded.
pub fn kcore_split(positives: &[Vec<usize>], pattern: [usize; 3], seed: u64) -> KcoreResult {
    let need: usize = pattern.iter().sum();
    let mut out = KcoreResult::default();
    for (ci, pos) in positives.iter().enumerate() {
        if pos.len() < need {
            out.excluded += 1;
            out.assignments.push(None);
            continue;
        }
        let mut rng = sub_rng(seed, "kcore", &[ci as u64]);
        let chosen: Vec<usize> = pos.choose_multiple(&mut rng, need).copied().collect();
        out.positives_discarded += pos.len() - need;
        let (train, rest) = chosen.split_at(pattern[0]);
        let (validation, test) = rest.split_at(pattern[1]);
        out.assignments.push(Some(SplitAssignment {
            train: train.to_vec(),
            validation: validation.to_vec(),
            test: test.to_vec(),
        }));
    }
    out
}

/// Partitions a hard-negative pool: `quota` to test, `quota` to validation,
/// the remainder to train. Returns `(job, split)` pairs.
pub fn partition_negatives(pool: &[usize], quota: usize, seed: u64, candidate: usize) -> Vec<(usize, Split)> {
    let mut rng = sub_rng(seed, "negative-pool", &[candidate as u64]);
    let mut order = pool.to_vec();
    order.shuffle(&mut rng);
    order
        .into_iter()
        .enumerate()
        .map(|(k, j)| {
            let split = if k < quota {
                Split::Test
            } else if k < 2 * quota {
                Split::Validation
            } else {
                Split::Train
            };
            (j, split)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PerSplit {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

impl PerSplit {
    pub fn bump(&mut self, split: Split) {
        match split {
            Split::Train => self.train += 1,
            Split::Validation => self.validation += 1,
            Split::Test => self.test += 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PreferenceStats {
    pub emitted: PerSplit,
    pub dropped: usize,
}

/// Annotations grouped per candidate, preserving input order.
fn by_candidate(annotations: &[PairAnnotation]) -> BTreeMap<&str, Vec<&PairAnnotation>> {
    let mut map: BTreeMap<&str, Vec<&PairAnnotation>> = BTreeMap::new();
    for a in annotations {
        map.entry(a.candidate_id.as_str()).or_default().push(a);
    }
    map
}

/// One batch per split-assigned positive with `negative_count` hard negatives
/// sampled without replacement from the candidate's split-local pool.
pub fn build_preference_dataset(
    annotations: &[PairAnnotation],
    config: &SynthConfig,
) -> (Vec<PreferenceBatch>, PreferenceStats) {
    let mut batches = Vec::new();
    let mut stats = PreferenceStats::default();
    for (cid, anns) in by_candidate(annotations) {
        for split in Split::ALL {
            let mut positives: Vec<&str> = anns
                .iter()
                .filter(|a| a.pref_label == PrefLabel::Positive && a.split == Some(split))
                .map(|a| a.job_id.as_str())
                .collect();
            if positives.is_empty() {
                continue;
            }
            positives.sort_unstable();
            let pool: Vec<&str> = anns
                .iter()
                .filter(|a| a.pref_label == PrefLabel::HardNegative)
                .filter(|a| match config.negative_pool {
                    NegativePool::Shared => a.split.is_none(),
                    NegativePool::Disjoint => a.split == Some(split),
                })
                .map(|a| a.job_id.as_str())
                .collect();
            for (k, pos) in positives.iter().enumerate() {
                if pool.len() < config.negative_count {
                    stats.dropped += 1;
                    continue;
                }
                let mut rng = sub_rng(
                    config.seed,
                    &format!("negatives/{cid}/{}/{pos}", split.name()),
                    &[],
                );
                let negative_job_ids = pool
                    .choose_multiple(&mut rng, config.negative_count)
                    .map(|s| s.to_string())
                    .collect();
                batches.push(PreferenceBatch {
                    batch_id: format!("{cid}/{}/{k}", split.name()),
                    candidate_id: cid.to_string(),
                    split,
                    positive_job_id: pos.to_string(),
                    negative_job_ids,
                });
                stats.emitted.bump(split);
            }
        }
    }
    (batches, stats)
}

/// Uniformly keeps `keep` of the train batches; other splits untouched.
pub fn subsample_train_batches(batches: Vec<PreferenceBatch>, keep: usize, seed: u64) -> Vec<PreferenceBatch> {
    let train_idx: Vec<usize> = batches
        .iter()
        .enumerate()
        .filter(|(_, b)| b.split == Split::Train)
        .map(|(i, _)| i)
        .collect();
    if keep >= train_idx.len() {
        return batches;
    }
    let mut rng = sub_rng(seed, "subsample-train", &[]);
    let kept: std::collections::HashSet<usize> =
        train_idx.choose_multiple(&mut rng, keep).copied().collect();
    batches
        .into_iter()
        .enumerate()
        .filter(|(i, b)| b.split != Split::Train || kept.contains(i))
        .map(|(_, b)| b)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct JobSplit {
    pub train: Vec<String>,
    pub test: Vec<String>,
    pub unassigned: Vec<String>,
}

impl JobSplit {
    pub fn split_of(&self, job_id: &str) -> Option<Split> {
        if self.train.iter().any(|j| j == job_id) {
            Some(Split::Train)
        } else if self.test.iter().any(|j| j == job_id) {
            Some(Split::Test)
        } else {
            None
        }
    }
}

/// Disjoint seeded train/test assignment of jobs; leftovers stay unassigned.
pub fn split_jobs(jobs: &[JobPosting], train_count: usize, test_count: usize, seed: u64) -> Result<JobSplit> {
    if train_count + test_count > jobs.len() {
        return Err(Error::Config(format!(
            "job split {train_count}+{test_count} exceeds {} jobs",
            jobs.len()
        )));
    }
    let mut rng = sub_rng(seed, "job-split", &[]);
    let mut ids: Vec<String> = jobs.iter().map(|j| j.id_i.clone()).collect();
    ids.shuffle(&mut rng);
    let mut rest = ids.split_off(train_count);
    let unassigned = rest.split_off(test_count);
    let mut split = JobSplit { train: ids, test: rest, unassigned };
    split.train.sort();
    split.test.sort();
    split.unassigned.sort();
    Ok(split)
}

/// Top applicant by `(score desc, candidate_id asc)`.
fn top_applicant<'a>(applicants: &[&'a PairAnnotation]) -> Option<&'a PairAnnotation> {
    applicants.iter().copied().min_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.candidate_id.cmp(&b.candidate_id))
    })
}

/// Writes rule-derived qualification labels onto positive annotations: the
/// top applicant of every job is qualified, every other applicant is not.
pub fn assign_qualification_labels(annotations: &mut [PairAnnotation]) {
    let mut winners: HashMap<String, String> = HashMap::new();
    {
        let mut per_job: HashMap<&str, Vec<&PairAnnotation>> = HashMap::new();
        for a in annotations.iter().filter(|a| a.pref_label == PrefLabel::Positive) {
            per_job.entry(a.job_id.as_str()).or_default().push(a);
        }
        for (job, apps) in per_job {
            if let Some(top) = top_applicant(&apps) {
                winners.insert(job.to_string(), top.candidate_id.clone());
            }
        }
    }
    for a in annotations.iter_mut() {
        a.qual_label = if a.pref_label == PrefLabel::Positive {
            Some(winners.get(&a.job_id) == Some(&a.candidate_id))
        } else {
            None
        };
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct QualificationStats {
    pub emitted: PerSplit,
    /// Assigned jobs with fewer than two applicants.
    pub excluded_jobs: usize,
}

/// Job-centric applicant rankings.
///
/// Applicants are the positive pairs of each split-assigned job. When the
/// annotations carry qualification labels, exactly one applicant per job must
/// be labeled qualified; otherwise the top applicant is selected by rule.
pub fn build_qualification_dataset(
    annotations: &[PairAnnotation],
    job_split: &JobSplit,
) -> Result<(Vec<QualificationBatch>, QualificationStats)> {
    let mut per_job: BTreeMap<&str, Vec<&PairAnnotation>> = BTreeMap::new();
    for a in annotations.iter().filter(|a| a.pref_label == PrefLabel::Positive) {
        per_job.entry(a.job_id.as_str()).or_default().push(a);
    }
    let mut batches = Vec::new();
    let mut stats = QualificationStats::default();
    let assigned = job_split
        .train
        .iter()
        .map(|j| (j, Split::Train))
        .chain(job_split.test.iter().map(|j| (j, Split::Test)));
    let mut assigned: Vec<(&String, Split)> = assigned.collect();
    assigned.sort();
    for (job, split) in assigned {
        let apps = per_job.get(job.as_str()).map(Vec::as_slice).unwrap_or(&[]);
        if apps.len() < 2 {
            stats.excluded_jobs += 1;
            continue;
        }
        let labeled: Vec<&&PairAnnotation> = apps.iter().filter(|a| a.qual_label.is_some()).collect();
        let qualified_id = if labeled.is_empty() {
            top_applicant(apps).expect("non-empty").candidate_id.clone()
        } else {
            let winners: Vec<&str> = apps
                .iter()
                .filter(|a| a.qual_label == Some(true))
                .map(|a| a.candidate_id.as_str())
                .collect();
            if winners.len() != 1 {
                return Err(Error::Validation(format!(
                    "job `{job}` has {} applicants labeled qualified; exactly one is required",
                    winners.len()
                )));
            }
            winners[0].to_string()
        };
        let mut applicant_ids: Vec<String> = apps.iter().map(|a| a.candidate_id.clone()).collect();
        applicant_ids.sort();
        batches.push(QualificationBatch {
            job_id: job.clone(),
            split,
            applicant_ids,
            qualified_id,
        });
        stats.emitted.bump(split);
    }
    Ok((batches, stats))
}

/// Expert correction of a single pair's labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelOverride {
    pub candidate_id: String,
    pub job_id: String,
    #[serde(default)]
    pub pref_label: Option<PrefLabel>,
    #[serde(default)]
    pub qual_label: Option<bool>,
}

/// Replaces labels of the listed pairs and returns how many were applied.
///
/// Demoting a positive clears its qualification label; promoting a pair to
/// positive gives it `qual_label = false` unless the override sets one.
pub fn apply_overrides(annotations: &mut [PairAnnotation], overrides: &[LabelOverride]) -> Result<usize> {
    let index: HashMap<(&str, &str), usize> = annotations
        .iter()
        .enumerate()
        .map(|(i, a)| ((a.candidate_id.as_str(), a.job_id.as_str()), i))
        .collect();
    let mut targets = Vec::with_capacity(overrides.len());
    for o in overrides {
        match index.get(&(o.candidate_id.as_str(), o.job_id.as_str())) {
            Some(&i) => targets.push(i),
            None => {
                return Err(Error::Validation(format!(
                    "override references unknown pair ({}, {})",
                    o.candidate_id, o.job_id
                )))
            }
        }
    }
    for (o, i) in overrides.iter().zip(targets) {
        let a = &mut annotations[i];
        if let Some(label) = o.pref_label {
            a.pref_label = label;
            a.qual_label = match label {
                PrefLabel::Positive => a.qual_label.or(Some(false)),
                _ => None,
            };
        }
        if let Some(q) = o.qual_label {
            if a.pref_label != PrefLabel::Positive {
                return Err(Error::Validation(format!(
                    "override sets qual_label on non-positive pair ({}, {})",
                    o.candidate_id, o.job_id
                )));
            }
            a.qual_label = Some(q);
        }
    }
    Ok(overrides.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ann(c: &str, j: &str, score: f64, label: PrefLabel) -> PairAnnotation {
        PairAnnotation {
            candidate_id: c.into(),
            job_id: j.into(),
            score,
            pref_label: label,
            qual_label: None,
            split: None,
        }
    }

    #[test]
    fn thresholds() {
        assert_eq!(label_pair(14.0, 14.0, 10.0).unwrap(), PrefLabel::Positive);
        assert_eq!(label_pair(10.0, 14.0, 10.0).unwrap(), PrefLabel::HardNegative);
        assert_eq!(label_pair(13.999, 14.0, 10.0).unwrap(), PrefLabel::HardNegative);
        assert_eq!(label_pair(9.99, 14.0, 10.0).unwrap(), PrefLabel::Discarded);
        assert!(label_pair(20.5, 14.0, 10.0).is_err());
        assert!(label_pair(-0.1, 14.0, 10.0).is_err());
    }

    #[test]
    fn kcore_exact_pattern() {
        let positives = vec![(0..5).collect(), (0..4).collect(), (10..19).collect()];
        let r = kcore_split(&positives, [3, 1, 1], 1);
        let a = r.assignments[0].as_ref().unwrap();
        assert_eq!((a.train.len(), a.validation.len(), a.test.len()), (3, 1, 1));
        let mut all: Vec<usize> = a.train.iter().chain(&a.validation).chain(&a.test).copied().collect();
        all.sort();
        assert_eq!(all, vec![0, 1, 2, 3, 4]);
        assert!(r.assignments[1].is_none());
        assert_eq!(r.excluded, 1);
        let c = r.assignments[2].as_ref().unwrap();
        assert_eq!(c.train.len() + c.validation.len() + c.test.len(), 5);
        assert_eq!(r.positives_discarded, 4);
        assert_eq!(r, kcore_split(&positives, [3, 1, 1], 1));
    }

    #[test]
    fn qualification_picks_top_scorer() {
        let anns = vec![
            ann("u1", "j1", 14.0, PrefLabel::Positive),
            ann("u2", "j1", 16.0, PrefLabel::Positive),
            ann("u3", "j1", 19.0, PrefLabel::Positive),
            ann("u4", "j1", 12.0, PrefLabel::HardNegative),
        ];
        let split = JobSplit { train: vec!["j1".into()], ..Default::default() };
        let (b, s) = build_qualification_dataset(&anns, &split).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].qualified_id, "u3");
        assert_eq!(b[0].applicant_ids, vec!["u1", "u2", "u3"]);
        assert_eq!(s.emitted.train, 1);
    }

    #[test]
    fn qualification_tie_breaks_on_candidate_id() {
        let mut anns = vec![
            ann("u9", "j1", 17.0, PrefLabel::Positive),
            ann("u2", "j1", 17.0, PrefLabel::Positive),
            ann("u1", "j1", 14.0, PrefLabel::Positive),
        ];
        let split = JobSplit { test: vec!["j1".into()], ..Default::default() };
        let (b, _) = build_qualification_dataset(&anns, &split).unwrap();
        assert_eq!(b[0].qualified_id, "u2");
        assign_qualification_labels(&mut anns);
        assert_eq!(anns.iter().filter(|a| a.qual_label == Some(true)).count(), 1);
        assert_eq!(anns[1].qual_label, Some(true));
        let (b2, _) = build_qualification_dataset(&anns, &split).unwrap();
        assert_eq!(b, b2);
    }

    #[test]
    fn single_applicant_job_excluded() {
        let anns = vec![ann("u1", "j1", 15.0, PrefLabel::Positive)];
        let split = JobSplit { train: vec!["j1".into(), "j2".into()], ..Default::default() };
        let (b, s) = build_qualification_dataset(&anns, &split).unwrap();
        assert!(b.is_empty());
        assert_eq!(s.excluded_jobs, 2);
    }

    #[test]
    fn job_split_counts() {
        let cfg = SynthConfig::default();
        let jobs = super::super::generate::generate_jobs(&cfg);
        let s = split_jobs(&jobs, 68, 30, 3).unwrap();
        assert_eq!((s.train.len(), s.test.len(), s.unassigned.len()), (68, 30, 2));
        assert!(s.train.iter().all(|j| !s.test.contains(j)));
        assert_eq!(s, split_jobs(&jobs, 68, 30, 3).unwrap());
        assert!(split_jobs(&jobs, 80, 30, 3).is_err());
    }

    #[test]
    fn overrides() {
        let base = vec![
            ann("u1", "j1", 12.0, PrefLabel::HardNegative),
            ann("u1", "j2", 15.0, PrefLabel::Positive),
        ];
        let mut a = base.clone();
        assert_eq!(apply_overrides(&mut a, &[]).unwrap(), 0);
        assert_eq!(a, base);

        let flip = LabelOverride {
            candidate_id: "u1".into(),
            job_id: "j1".into(),
            pref_label: Some(PrefLabel::Positive),
            qual_label: None,
        };
        assert_eq!(apply_overrides(&mut a, &[flip]).unwrap(), 1);
        let diff = a.iter().zip(&base).filter(|(x, y)| x != y).count();
        assert_eq!(diff, 1);
        assert_eq!(a[0].pref_label, PrefLabel::Positive);
        assert_eq!(a[0].qual_label, Some(false));

        let unknown = LabelOverride {
            candidate_id: "u7".into(),
            job_id: "j1".into(),
            pref_label: None,
            qual_label: Some(true),
        };
        assert!(matches!(apply_overrides(&mut a, &[unknown]), Err(Error::Validation(_))));
    }

    #[test]
    fn disjoint_partition_quota() {
        let pool: Vec<usize> = (0..120).collect();
        let parts = partition_negatives(&pool, 49, 5, 0);
        let count = |s| parts.iter().filter(|(_, x)| *x == s).count();
        assert_eq!((count(Split::Test), count(Split::Validation), count(Split::Train)), (49, 49, 22));
    }
}
