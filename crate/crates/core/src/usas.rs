//! Four-layer candidate/job schema and the paired feature representation.
//!
//! Both sides of the market are described on the same four layers:
//!
//! | layer | candidate                          | job                                |
//! |-------|------------------------------------|------------------------------------|
//! | base  | id, record index, academic level   | id, industry, minimum level        |
//! | cap   | GPA, majors, publications, years   | GPA / experience thresholds, majors|
//! | con   | weekly hours, summer, modality     | required hours, modality           |
//! | sem   | projects, extracurriculars, interests | job text, required skills       |
//!
//! [`extract_pair_features`] joins one candidate and one job into a
//! [`PairFeatures`] vector whose layer boundaries are fixed by a
//! [`FeatureConfig`], so the scorer can mask whole layers per task.

use std::collections::BTreeSet;
use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AcademicLevel {
    Undergraduate = 0,
    Masters = 1,
    PhD = 2,
}

impl AcademicLevel {
    pub const ALL: [AcademicLevel; 3] = [Self::Undergraduate, Self::Masters, Self::PhD];

    pub fn ordinal(self) -> f64 {
        self as u8 as f64
    }
}

/// Computer-science specialization; doubles as the job industry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Subfield {
    Robotics,
    CV,
    NLP,
    Applications,
    RL,
    Theory,
}

impl Subfield {
    pub const ALL: [Subfield; 6] = [
        Self::Robotics,
        Self::CV,
        Self::NLP,
        Self::Applications,
        Self::RL,
        Self::Theory,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Interest-vocabulary token naming this field.
    pub fn token(self) -> &'static str {
        match self {
            Self::Robotics => "robotics",
            Self::CV => "computer-vision",
            Self::NLP => "nlp",
            Self::Applications => "applications",
            Self::RL => "reinforcement-learning",
            Self::Theory => "theory",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Modality {
    Onsite,
    Remote,
    Hybrid,
}

impl Modality {
    /// Equal modalities are compatible, and Remote pairs with Hybrid.
    pub fn compatible(candidate: Modality, job: Modality) -> bool {
        use Modality::*;
        candidate == job || matches!((candidate, job), (Remote, Hybrid) | (Hybrid, Remote))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateProfile {
    pub id_u: String,
    pub row_u: u64,
    pub lvl_u: AcademicLevel,
    pub gpa: f64,
    pub gpa_ug: f64,
    pub major_master: Subfield,
    #[serde(default)]
    pub major_second: Option<Subfield>,
    pub n_pub: u32,
    /// Years of relevant experience, compared against a job's `tau_exp`.
    pub experience_years: f64,
    /// Weekly bandwidth in hours.
    pub h_u: f64,
    pub c_summer: bool,
    pub m_loc: Modality,
    pub skills: BTreeSet<String>,
    pub interests: BTreeSet<String>,
    pub projects: Vec<String>,
    pub extracurriculars: Vec<String>,
}

impl CandidateProfile {
    pub const FIELDS: &'static [&'static str] = &[
        "id_u",
        "row_u",
        "lvl_u",
        "gpa",
        "gpa_ug",
        "major_master",
        "major_second",
        "n_pub",
        "experience_years",
        "h_u",
        "c_summer",
        "m_loc",
        "skills",
        "interests",
        "projects",
        "extracurriculars",
    ];

    pub const PROJECT_COUNT: usize = 3;
    pub const EXTRACURRICULAR_COUNT: usize = 2;

    /// Tokens feeding the candidate-side semantic embedding.
    pub fn semantic_tokens(&self) -> Vec<String> {
        let mut tokens = Vec::new();
        for text in self.projects.iter().chain(&self.extracurriculars) {
            tokens.extend(tokenize(text));
        }
        tokens.extend(self.interests.iter().cloned());
        tokens
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobPosting {
    pub id_i: String,
    pub ind_i: Subfield,
    pub min_lvl_i: AcademicLevel,
    pub tau_gpa: f64,
    /// Minimum years of experience.
    pub tau_exp: f64,
    pub acceptable_majors: BTreeSet<Subfield>,
    /// Required weekly bandwidth in hours.
    pub h_i: f64,
    pub m_job: Modality,
    pub required_skills: BTreeSet<String>,
    pub jd_text: String,
}

impl JobPosting {
    pub const FIELDS: &'static [&'static str] = &[
        "id_i",
        "ind_i",
        "min_lvl_i",
        "tau_gpa",
        "tau_exp",
        "acceptable_majors",
        "h_i",
        "m_job",
        "required_skills",
        "jd_text",
    ];

    pub fn semantic_tokens(&self) -> Vec<String> {
        let mut tokens = tokenize(&self.jd_text);
        tokens.extend(self.required_skills.iter().cloned());
        tokens
    }
}

/// Lowercased word tokens; `-`, `+` and `#` stay inside tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_alphanumeric() || matches!(c, '-' | '+' | '#')))
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// A single violated field-level invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub field: &'static str,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

fn check_range(out: &mut Vec<Violation>, field: &'static str, v: f64, lo: f64, hi: f64) {
    if !(v.is_finite() && v >= lo && v <= hi) {
        let hi_txt = if hi.is_infinite() { "inf".to_string() } else { format!("{hi:.1}") };
        out.push(Violation {
            field,
            message: format!("{field} out of [{lo},{hi_txt}]: {v}"),
        });
    }
}

pub fn validate_candidate(c: &CandidateProfile) -> std::result::Result<(), Vec<Violation>> {
    let mut v = Vec::new();
    if c.id_u.is_empty() {
        v.push(Violation { field: "id_u", message: "id_u must be non-empty".into() });
    }
    check_range(&mut v, "gpa", c.gpa, 0.0, 4.0);
    check_range(&mut v, "gpa_ug", c.gpa_ug, 0.0, 4.0);
    check_range(&mut v, "experience_years", c.experience_years, 0.0, f64::INFINITY);
    check_range(&mut v, "h_u", c.h_u, 0.0, f64::INFINITY);
    if c.projects.len() != CandidateProfile::PROJECT_COUNT {
        v.push(Violation {
            field: "projects",
            message: format!("projects must have exactly 3 entries, got {}", c.projects.len()),
        });
    }
    if c.extracurriculars.len() != CandidateProfile::EXTRACURRICULAR_COUNT {
        v.push(Violation {
            field: "extracurriculars",
            message: format!(
                "extracurriculars must have exactly 2 entries, got {}",
                c.extracurriculars.len()
            ),
        });
    }
    if v.is_empty() {
        Ok(())
    } else {
        Err(v)
    }
}

pub fn validate_job(j: &JobPosting) -> std::result::Result<(), Vec<Violation>> {
    let mut v = Vec::new();
    if j.id_i.is_empty() {
        v.push(Violation { field: "id_i", message: "id_i must be non-empty".into() });
    }
    check_range(&mut v, "tau_gpa", j.tau_gpa, 0.0, 4.0);
    check_range(&mut v, "tau_exp", j.tau_exp, 0.0, f64::INFINITY);
    check_range(&mut v, "h_i", j.h_i, 0.0, f64::INFINITY);
    if j.acceptable_majors.is_empty() {
        v.push(Violation {
            field: "acceptable_majors",
            message: "acceptable_majors must be non-empty".into(),
        });
    }
    if j.required_skills.is_empty() {
        v.push(Violation {
            field: "required_skills",
            message: "required_skills must be non-empty".into(),
        });
    }
    if v.is_empty() {
        Ok(())
    } else {
        Err(v)
    }
}

fn violations_to_error(kind: &str, id: &str, v: Vec<Violation>) -> Error {
    let list: Vec<String> = v.iter().map(ToString::to_string).collect();
    Error::Validation(format!("{kind} `{id}`: {}", list.join("; ")))
}

pub fn ensure_valid_candidate(c: &CandidateProfile) -> Result<()> {
    validate_candidate(c).map_err(|v| violations_to_error("candidate", &c.id_u, v))
}

pub fn ensure_valid_job(j: &JobPosting) -> Result<()> {
    validate_job(j).map_err(|v| violations_to_error("job", &j.id_i, v))
}

/// Signed feature-hashing embedding of a bag of tokens.
///
/// Each token hashes (under `seed`) to a bucket and a sign; contributions are
/// summed and the result L2-normalized unless it is exactly zero.
pub fn embed_text<S: AsRef<str>>(tokens: &[S], dim: usize, seed: u64) -> Vec<f64> {
    assert!(dim >= 1, "embedding dimension must be positive");
    let mut out = vec![0.0; dim];
    for token in tokens {
        let (bucket, sign) = hash_token(token.as_ref(), dim, seed);
        out[bucket] += sign;
    }
    let norm = out.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        out.iter_mut().for_each(|x| *x /= norm);
    }
    out
}

/// Bucket index and ±1 sign for a token.
pub fn hash_token(token: &str, dim: usize, seed: u64) -> (usize, f64) {
    let digest = Sha256::new()
        .chain_update(seed.to_le_bytes())
        .chain_update(token.as_bytes())
        .finalize();
    let mut word = [0u8; 8];
    word.copy_from_slice(&digest[..8]);
    let bucket = (u64::from_le_bytes(word) % dim as u64) as usize;
    let sign = if digest[8] & 1 == 0 { 1.0 } else { -1.0 };
    (bucket, sign)
}

/// Feature-construction settings. Two datasets are compatible iff their
/// configs produce the same [`FeatureConfig::hash`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub embed_dim: usize,
    pub embed_seed: u64,
    /// When set, any produced feature width other than this is fatal.
    pub expected_dim: Option<usize>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            embed_dim: 64,
            embed_seed: 0x5eed,
            expected_dim: None,
        }
    }
}

const FEATURE_SCHEMA_VERSION: &str = "usas-features/v1";

impl FeatureConfig {
    pub fn layout(&self) -> FeatureLayout {
        FeatureLayout::new(self.embed_dim)
    }

    /// Hex SHA-256 over the schema version and every setting that changes
    /// feature values.
    pub fn hash(&self) -> String {
        let digest = Sha256::new()
            .chain_update(FEATURE_SCHEMA_VERSION.as_bytes())
            .chain_update((self.embed_dim as u64).to_le_bytes())
            .chain_update(self.embed_seed.to_le_bytes())
            .finalize();
        hex_string(&digest)
    }

    pub fn check(&self) -> Result<()> {
        if self.embed_dim == 0 {
            return Err(Error::Config("features.embed_dim must be >= 1".into()));
        }
        let dim = self.layout().dim_total;
        match self.expected_dim {
            Some(expected) if expected != dim => Err(Error::Config(format!(
                "feature dimension mismatch: configuration expects {expected}, schema produces {dim}"
            ))),
            _ => Ok(()),
        }
    }
}

pub(crate) fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// The four feature layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Layer {
    Base,
    Cap,
    Con,
    Sem,
}

/// Positions of each layer inside the concatenated vector `base|cap|con|sem`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureLayout {
    pub base: Range<usize>,
    pub cap: Range<usize>,
    pub con: Range<usize>,
    pub sem: Range<usize>,
    pub dim_total: usize,
}

/// level_u, min_level_i, level gap, industry one-hot.
pub const BASE_DIM: usize = 3 + Subfield::ALL.len();
/// gpa, gpa_ug, gpa margin, experience margin, major accepted, publications.
pub const CAP_DIM: usize = 6;
/// h_u, h_i, hours margin (all in tens of hours/week), modality ok, summer.
pub const CON_DIM: usize = 5;

impl FeatureLayout {
    pub fn new(embed_dim: usize) -> Self {
        let sem_dim = 3 * embed_dim + 2;
        let base = 0..BASE_DIM;
        let cap = base.end..base.end + CAP_DIM;
        let con = cap.end..cap.end + CON_DIM;
        let sem = con.end..con.end + sem_dim;
        let dim_total = sem.end;
        Self { base, cap, con, sem, dim_total }
    }

    pub fn range(&self, layer: Layer) -> Range<usize> {
        match layer {
            Layer::Base => self.base.clone(),
            Layer::Cap => self.cap.clone(),
            Layer::Con => self.con.clone(),
            Layer::Sem => self.sem.clone(),
        }
    }

    /// 1.0 on coordinates of `active` layers, 0.0 elsewhere.
    pub fn mask(&self, active: &[Layer]) -> Vec<f64> {
        let mut m = vec![0.0; self.dim_total];
        for layer in active {
            m[self.range(*layer)].iter_mut().for_each(|x| *x = 1.0);
        }
        m
    }
}

/// Paired candidate/job representation, one vector per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct PairFeatures {
    pub base: Vec<f64>,
    pub cap: Vec<f64>,
    pub con: Vec<f64>,
    pub sem: Vec<f64>,
}

impl PairFeatures {
    pub fn dim_total(&self) -> usize {
        self.base.len() + self.cap.len() + self.con.len() + self.sem.len()
    }

    pub fn layer(&self, layer: Layer) -> &[f64] {
        match layer {
            Layer::Base => &self.base,
            Layer::Cap => &self.cap,
            Layer::Con => &self.con,
            Layer::Sem => &self.sem,
        }
    }

    /// Concatenation in layout order `base|cap|con|sem`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim_total());
        v.extend_from_slice(&self.base);
        v.extend_from_slice(&self.cap);
        v.extend_from_slice(&self.con);
        v.extend_from_slice(&self.sem);
        v
    }

    /// Only the entries of `active` layers, concatenated in layout order.
    pub fn select(&self, active: &[Layer]) -> Vec<f64> {
        [Layer::Base, Layer::Cap, Layer::Con, Layer::Sem]
            .into_iter()
            .filter(|l| active.contains(l))
            .flat_map(|l| self.layer(l).iter().copied())
            .collect()
    }
}

/// |skills ∩ required| / |required|.
pub fn skill_overlap_ratio(c: &CandidateProfile, j: &JobPosting) -> f64 {
    let hits = c.skills.intersection(&j.required_skills).count();
    hits as f64 / j.required_skills.len().max(1) as f64
}

/// |interests ∩ ({industry} ∪ required)| / max(1, |interests|).
pub fn interest_overlap_ratio(c: &CandidateProfile, j: &JobPosting) -> f64 {
    let industry = j.ind_i.token();
    let hits = c
        .interests
        .iter()
        .filter(|t| t.as_str() == industry || j.required_skills.contains(*t))
        .count();
    hits as f64 / c.interests.len().max(1) as f64
}

pub fn major_accepted(c: &CandidateProfile, j: &JobPosting) -> bool {
    j.acceptable_majors.contains(&c.major_master)
        || c.major_second.is_some_and(|m| j.acceptable_majors.contains(&m))
}

/// Features from precomputed side embeddings; shared by the pure entry point
/// and the caching [`Featurizer`].
fn assemble(
    c: &CandidateProfile,
    j: &JobPosting,
    z_u: &[f64],
    z_i: &[f64],
) -> PairFeatures {
    let mut base = Vec::with_capacity(BASE_DIM);
    base.push(c.lvl_u.ordinal());
    base.push(j.min_lvl_i.ordinal());
    base.push(c.lvl_u.ordinal() - j.min_lvl_i.ordinal());
    base.extend(Subfield::ALL.iter().map(|s| if *s == j.ind_i { 1.0 } else { 0.0 }));

    let cap = vec![
        c.gpa,
        c.gpa_ug,
        c.gpa - j.tau_gpa,
        c.experience_years - j.tau_exp,
        if major_accepted(c, j) { 1.0 } else { 0.0 },
        c.n_pub as f64,
    ];

    let con = vec![
        c.h_u / 10.0,
        j.h_i / 10.0,
        (c.h_u - j.h_i) / 10.0,
        if Modality::compatible(c.m_loc, j.m_job) { 1.0 } else { 0.0 },
        if c.c_summer { 1.0 } else { 0.0 },
    ];

    let mut sem = Vec::with_capacity(3 * z_u.len() + 2);
    sem.extend_from_slice(z_u);
    sem.extend_from_slice(z_i);
    sem.extend(z_u.iter().zip(z_i).map(|(a, b)| a * b));
    sem.push(skill_overlap_ratio(c, j));
    sem.push(interest_overlap_ratio(c, j));

    PairFeatures { base, cap, con, sem }
}

pub fn candidate_embedding(c: &CandidateProfile, config: &FeatureConfig) -> Vec<f64> {
    embed_text(&c.semantic_tokens(), config.embed_dim, config.embed_seed)
}

pub fn job_embedding(j: &JobPosting, config: &FeatureConfig) -> Vec<f64> {
    embed_text(&j.semantic_tokens(), config.embed_dim, config.embed_seed)
}

/// Builds the paired four-layer representation of `(candidate, job)`.
pub fn extract_pair_features(
    candidate: &CandidateProfile,
    job: &JobPosting,
    config: &FeatureConfig,
) -> Result<PairFeatures> {
    config.check()?;
    let z_u = candidate_embedding(candidate, config);
    let z_i = job_embedding(job, config);
    let f = assemble(candidate, job, &z_u, &z_i);
    debug_assert_eq!(f.dim_total(), config.layout().dim_total);
    Ok(f)
}

/// Caches side embeddings so repeated pair extraction over a fixed
/// population costs one embedding per entity.
#[derive(Debug, Clone)]
pub struct Featurizer {
    config: FeatureConfig,
    layout: FeatureLayout,
    z_candidates: Vec<Vec<f64>>,
    z_jobs: Vec<Vec<f64>>,
}

impl Featurizer {
    pub fn new(
        config: &FeatureConfig,
        candidates: &[CandidateProfile],
        jobs: &[JobPosting],
    ) -> Result<Self> {
        config.check()?;
        Ok(Self {
            config: config.clone(),
            layout: config.layout(),
            z_candidates: candidates.iter().map(|c| candidate_embedding(c, config)).collect(),
            z_jobs: jobs.iter().map(|j| job_embedding(j, config)).collect(),
        })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.config
    }

    pub fn layout(&self) -> &FeatureLayout {
        &self.layout
    }

    /// `ci`/`ji` index the slices given to [`Featurizer::new`].
    pub fn pair(
        &self,
        ci: usize,
        c: &CandidateProfile,
        ji: usize,
        j: &JobPosting,
    ) -> PairFeatures {
        assemble(c, j, &self.z_candidates[ci], &self.z_jobs[ji])
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn candidate() -> CandidateProfile {
        CandidateProfile {
            id_u: "u0001".into(),
            row_u: 1,
            lvl_u: AcademicLevel::Masters,
            gpa: 3.6,
            gpa_ug: 3.4,
            major_master: Subfield::CV,
            major_second: None,
            n_pub: 2,
            experience_years: 1.5,
            h_u: 20.0,
            c_summer: true,
            m_loc: Modality::Remote,
            skills: ["python", "opencv", "pytorch"].map(String::from).into(),
            interests: ["computer-vision", "robotics"].map(String::from).into(),
            projects: vec![
                "Built an object detection pipeline".into(),
                "Trained a segmentation model".into(),
                "Wrote a robot vision demo".into(),
            ],
            extracurriculars: vec!["Teaching assistant".into(), "Hackathon winner".into()],
        }
    }

    pub fn job() -> JobPosting {
        JobPosting {
            id_i: "j001".into(),
            ind_i: Subfield::CV,
            min_lvl_i: AcademicLevel::Undergraduate,
            tau_gpa: 3.0,
            tau_exp: 1.0,
            acceptable_majors: [Subfield::CV, Subfield::Robotics].into(),
            h_i: 15.0,
            m_job: Modality::Onsite,
            required_skills: ["opencv", "pytorch", "c++", "python"].map(String::from).into(),
            jd_text: "Computer vision engineer for detection models".into(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn gpa_boundary_is_valid_and_above_is_not() {
        let mut c = candidate();
        c.gpa = 4.0;
        assert_eq!(validate_candidate(&c), Ok(()));
        c.gpa = 4.2;
        let v = validate_candidate(&c).unwrap_err();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "gpa");
        assert!(v[0].message.contains("gpa out of [0,4.0]"), "{}", v[0].message);
    }

    #[test]
    fn projects_must_have_three_entries() {
        let mut c = candidate();
        c.projects.pop();
        let v = validate_candidate(&c).unwrap_err();
        assert_eq!(v[0].message, "projects must have exactly 3 entries, got 2");
    }

    #[test]
    fn multiple_violations_reported() {
        let mut c = candidate();
        c.gpa_ug = -0.1;
        c.h_u = f64::NAN;
        c.extracurriculars.clear();
        let fields: Vec<_> = validate_candidate(&c).unwrap_err().iter().map(|v| v.field).collect();
        assert_eq!(fields, vec!["gpa_ug", "h_u", "extracurriculars"]);
    }

    #[test]
    fn job_requires_nonempty_sets() {
        let mut j = job();
        assert!(validate_job(&j).is_ok());
        j.required_skills.clear();
        j.acceptable_majors.clear();
        j.tau_gpa = 4.5;
        assert_eq!(validate_job(&j).unwrap_err().len(), 3);
    }

    #[test]
    fn embed_empty_is_zero() {
        let empty: [&str; 0] = [];
        assert_eq!(embed_text(&empty, 8, 42), vec![0.0; 8]);
    }

    #[test]
    fn embed_is_deterministic_and_order_invariant() {
        let a = embed_text(&["robot", "vision"], 16, 42);
        assert_eq!(a, embed_text(&["robot", "vision"], 16, 42));
        assert_eq!(a, embed_text(&["vision", "robot"], 16, 42));
        // Independent accumulation straight from the per-token hashes.
        let mut raw = [0.0; 16];
        for t in ["vision", "robot"] {
            let (b, s) = hash_token(t, 16, 42);
            raw[b] += s;
        }
        let n = raw.iter().map(|x: &f64| x * x).sum::<f64>().sqrt();
        let expected: Vec<f64> = raw.iter().map(|x| x / n).collect();
        assert_eq!(a, expected);
    }

    #[test]
    fn cancelling_tokens_give_zero_vector() {
        // find two tokens landing in the same bucket with opposite signs
        let dim = 2;
        let (b0, s0) = hash_token("t0", dim, 1);
        let other = (1..200)
            .map(|k| format!("t{k}"))
            .find(|t| hash_token(t, dim, 1) == (b0, -s0))
            .expect("a cancelling token exists");
        assert_eq!(embed_text(&["t0".to_string(), other], dim, 1), vec![0.0; dim]);
    }

    #[test]
    fn feature_indicators_and_margins() {
        let c = candidate();
        let j = job();
        let f = extract_pair_features(&c, &j, &FeatureConfig::default()).unwrap();
        assert_eq!(f.cap[4], 1.0, "major accepted");
        assert_eq!(f.con[3], 0.0, "remote vs onsite incompatible");
        assert!((f.cap[2] - 0.6).abs() < 1e-12, "gpa margin {}", f.cap[2]);
        assert!((f.cap[3] - 0.5).abs() < 1e-12);
        assert_eq!(f.dim_total(), FeatureConfig::default().layout().dim_total);
        let mut j2 = j.clone();
        j2.m_job = Modality::Hybrid;
        let f2 = extract_pair_features(&c, &j2, &FeatureConfig::default()).unwrap();
        assert_eq!(f2.con[3], 1.0, "remote pairs with hybrid");
    }

    #[test]
    fn expected_dim_mismatch_is_config_error() {
        let cfg = FeatureConfig { expected_dim: Some(3), ..Default::default() };
        let err = extract_pair_features(&candidate(), &job(), &cfg).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn layer_masks_partition_the_vector() {
        let layout = FeatureConfig::default().layout();
        let f = extract_pair_features(&candidate(), &job(), &FeatureConfig::default()).unwrap();
        let flat = f.to_vec();
        let mask = layout.mask(&[Layer::Sem, Layer::Con]);
        let selected: Vec<f64> = flat.iter().zip(&mask).filter(|(_, m)| **m == 1.0).map(|(x, _)| *x).collect();
        assert_eq!(selected, f.select(&[Layer::Con, Layer::Sem]));
        assert_eq!(f.select(&[Layer::Cap, Layer::Sem]).len(), CAP_DIM + layout.sem.len());
    }

    #[test]
    fn featurizer_matches_pure_extraction() {
        let c = candidate();
        let j = job();
        let cfg = FeatureConfig::default();
        let fz = Featurizer::new(&cfg, std::slice::from_ref(&c), std::slice::from_ref(&j)).unwrap();
        assert_eq!(fz.pair(0, &c, 0, &j), extract_pair_features(&c, &j, &cfg).unwrap());
    }

    #[test]
    fn hash_tracks_embedding_settings() {
        let a = FeatureConfig::default();
        let b = FeatureConfig { embed_dim: 32, ..Default::default() };
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash(), FeatureConfig::default().hash());
        assert_eq!(a.hash().len(), 64);
    }

    proptest! {
        #[test]
        fn embedding_is_unit_norm_or_zero(tokens in proptest::collection::vec("[a-z]{1,6}", 0..12), dim in 1usize..40, seed in any::<u64>()) {
            let v = embed_text(&tokens, dim, seed);
            prop_assert_eq!(v.len(), dim);
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!(n == 0.0 || (n - 1.0).abs() < 1e-12);
        }

        #[test]
        fn features_are_finite(gpa in 0.0f64..=4.0, tau in 0.0f64..=4.0, h in 0.0f64..80.0) {
            let mut c = candidate();
            c.gpa = gpa;
            c.h_u = h;
            let mut j = job();
            j.tau_gpa = tau;
            let f = extract_pair_features(&c, &j, &FeatureConfig::default()).unwrap();
            prop_assert!(f.to_vec().iter().all(|x| x.is_finite()));
        }
    }
}
