//! Id resolution and on-demand featurization of labelled pairs.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::synth::dataset::{PreferenceBatch, QualificationBatch};
use crate::synth::Dataset;
use crate::usas::{CandidateProfile, FeatureConfig, Featurizer, JobPosting};

use super::loss::Sample;

/// One labelled (candidate, job) pair by index into the corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Example {
    pub candidate: usize,
    pub job: usize,
    pub positive: bool,
}

/// Entity tables plus cached embeddings. Feature vectors are built on demand
/// since the full pair grid does not fit comfortably in memory.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub candidates: Vec<CandidateProfile>,
    pub jobs: Vec<JobPosting>,
    featurizer: Featurizer,
    candidate_index: HashMap<String, usize>,
    job_index: HashMap<String, usize>,
}

impl Corpus {
    pub fn new(config: &FeatureConfig, candidates: Vec<CandidateProfile>, jobs: Vec<JobPosting>) -> Result<Self> {
        let featurizer = Featurizer::new(config, &candidates, &jobs)?;
        let candidate_index = index_ids(candidates.iter().map(|c| c.id_u.as_str()), "candidate")?;
        let job_index = index_ids(jobs.iter().map(|j| j.id_i.as_str()), "job")?;
        Ok(Self { candidates, jobs, featurizer, candidate_index, job_index })
    }

    pub fn from_dataset(config: &FeatureConfig, data: &Dataset) -> Result<Self> {
        Self::new(config, data.candidates.clone(), data.jobs.clone())
    }

    pub fn config(&self) -> &FeatureConfig {
        self.featurizer.config()
    }

    pub fn candidate(&self, id: &str) -> Result<usize> {
        self.candidate_index
            .get(id)
            .copied()
            .ok_or_else(|| Error::Validation(format!("unknown candidate id {id:?}")))
    }

    pub fn job(&self, id: &str) -> Result<usize> {
        self.job_index
            .get(id)
            .copied()
            .ok_or_else(|| Error::Validation(format!("unknown job id {id:?}")))
    }

    pub fn features(&self, candidate: usize, job: usize) -> Vec<f64> {
        self.featurizer
            .pair(candidate, &self.candidates[candidate], job, &self.jobs[job])
            .to_vec()
    }

    pub fn sample(&self, e: &Example) -> Sample {
        Sample::new(self.features(e.candidate, e.job), e.positive)
    }

    pub fn samples(&self, examples: &[Example], exec: Exec) -> Vec<Sample> {
        par::map(exec, examples, |e| self.sample(e))
    }

    /// Items of preference batches, positive first within each batch.
    pub fn pref_examples<'a>(&self, batches: impl IntoIterator<Item = &'a PreferenceBatch>) -> Result<Vec<Example>> {
        let mut out = Vec::new();
        for b in batches {
            let c = self.candidate(&b.candidate_id)?;
            for (job, positive) in b.items() {
                out.push(Example { candidate: c, job: self.job(job)?, positive });
            }
        }
        Ok(out)
    }

    pub fn qual_examples<'a>(&self, batches: impl IntoIterator<Item = &'a QualificationBatch>) -> Result<Vec<Example>> {
        let mut out = Vec::new();
        for b in batches {
            let j = self.job(&b.job_id)?;
            for (cand, positive) in b.items() {
                out.push(Example { candidate: self.candidate(cand)?, job: j, positive });
            }
        }
        Ok(out)
    }
}

fn index_ids<'a>(ids: impl Iterator<Item = &'a str>, what: &str) -> Result<HashMap<String, usize>> {
    let mut map = HashMap::new();
    for (i, id) in ids.enumerate() {
        if map.insert(id.to_string(), i).is_some() {
            return Err(Error::Validation(format!("duplicate {what} id {id:?}")));
        }
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::usas::fixtures::{candidate, job};
    use crate::usas::extract_pair_features;

    #[test]
    fn resolves_ids_and_features() {
        let cfg = FeatureConfig::default();
        let corpus = Corpus::new(&cfg, vec![candidate()], vec![job()]).unwrap();
        assert_eq!(corpus.candidate(&candidate().id_u).unwrap(), 0);
        assert!(corpus.job("nope").is_err());
        let expected = extract_pair_features(&candidate(), &job(), &cfg).unwrap().to_vec();
        assert_eq!(corpus.features(0, 0), expected);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let cfg = FeatureConfig::default();
        assert!(Corpus::new(&cfg, vec![candidate(), candidate()], vec![job()]).is_err());
    }
}
