//! Seeded population generator.
//!
//! Every entity is drawn from its own RNG stream keyed by `(seed, kind, index)`
//! so generation order and thread count never change the output.

use std::collections::BTreeSet;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use sha2::{Digest, Sha256};

use crate::par::{self, Exec};
use crate::usas::{AcademicLevel, CandidateProfile, JobPosting, Modality, Subfield};

use super::config::{Distributions, SynthConfig};

/// Independent RNG stream for `(seed, label, parts...)`.
pub fn sub_rng(seed: u64, label: &str, parts: &[u64]) -> ChaCha8Rng {
    let mut h = Sha256::new().chain_update(seed.to_le_bytes()).chain_update(label.as_bytes());
    for p in parts {
        h.update(p.to_le_bytes());
    }
    let digest = h.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

pub const GENERAL_SKILLS: [&str; 8] = [
    "python",
    "git",
    "linux",
    "statistics",
    "pytorch",
    "sql",
    "machine-learning",
    "data-analysis",
];

pub fn field_skills(field: Subfield) -> [&'static str; 8] {
    match field {
        Subfield::Robotics => [
            "ros", "slam", "motion-planning", "control-theory", "kinematics", "c++",
            "sensor-fusion", "embedded-systems",
        ],
        Subfield::CV => [
            "opencv", "image-segmentation", "object-detection", "cnn", "3d-reconstruction",
            "video-analysis", "diffusion-models", "cuda",
        ],
        Subfield::NLP => [
            "transformers", "tokenization", "information-extraction", "llm-finetuning",
            "text-classification", "machine-translation", "huggingface", "speech-recognition",
        ],
        Subfield::Applications => [
            "web-development", "cloud-computing", "docker", "javascript", "mobile-development",
            "distributed-systems", "api-design", "kubernetes",
        ],
        Subfield::RL => [
            "policy-gradient", "q-learning", "gym", "multi-agent-systems", "reward-modeling",
            "simulation", "bandits", "jax",
        ],
        Subfield::Theory => [
            "algorithms", "complexity-theory", "combinatorics", "graph-theory", "optimization",
            "probability", "cryptography", "formal-verification",
        ],
    }
}

/// Career/research interest tokens per field; several double as skills.
pub fn field_interests(field: Subfield) -> [&'static str; 5] {
    match field {
        Subfield::Robotics => ["autonomous-vehicles", "manipulation", "slam", "motion-planning", "drones"],
        Subfield::CV => ["object-detection", "generative-models", "medical-imaging", "3d-reconstruction", "video-analysis"],
        Subfield::NLP => ["llm-finetuning", "machine-translation", "dialogue-systems", "information-extraction", "speech-recognition"],
        Subfield::Applications => ["web-development", "cloud-computing", "product-engineering", "distributed-systems", "startups"],
        Subfield::RL => ["multi-agent-systems", "reward-modeling", "game-ai", "bandits", "simulation"],
        Subfield::Theory => ["algorithms", "cryptography", "complexity-theory", "optimization", "graph-theory"],
    }
}

const GENERAL_INTERESTS: [&str; 4] = ["machine-learning", "data-analysis", "statistics", "research"];

const PROJECT_TEMPLATES: [&str; 4] = [
    "Built a {a} prototype using {b}",
    "Led a course project on {a} with {b}",
    "Implemented {a} tooling and benchmarked it against {b}",
    "Published an open-source {a} library relying on {b}",
];

const EXTRACURRICULARS: [&str; 8] = [
    "Teaching assistant for an introductory {a} course",
    "Organized a student {a} reading group",
    "Volunteer mentor at a {a} hackathon",
    "Research intern working on {a}",
    "Competitive programming team member",
    "Open-source contributor to {a} projects",
    "Student chapter officer for a computing society",
    "Tutor for {a} and {b}",
];

fn fill(template: &str, a: &str, b: &str) -> String {
    template.replace("{a}", a).replace("{b}", b)
}

fn truncated_normal(rng: &mut ChaCha8Rng, mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    let normal = Normal::new(mean, sd).expect("sd validated positive");
    for _ in 0..1000 {
        let x: f64 = normal.sample(rng);
        if (lo..=hi).contains(&x) {
            return (x * 100.0).round() / 100.0;
        }
    }
    mean.clamp(lo, hi)
}

fn weighted<T: Copy>(rng: &mut ChaCha8Rng, values: &[T], probs: &[f64]) -> T {
    let idx = WeightedIndex::new(probs).expect("probabilities validated");
    values[idx.sample(rng)]
}

fn pick_some(rng: &mut ChaCha8Rng, pool: &[&'static str], k: usize) -> Vec<&'static str> {
    pool.choose_multiple(rng, k.min(pool.len())).copied().collect()
}

fn candidate_id(index: usize) -> String {
    format!("u{index:05}")
}

fn job_id(index: usize) -> String {
    format!("j{index:04}")
}

pub fn generate_candidate(index: usize, seed: u64, d: &Distributions) -> CandidateProfile {
    let mut rng = sub_rng(seed, "candidate", &[index as u64]);
    let lvl_u = weighted(&mut rng, &AcademicLevel::ALL, &d.level_probs);
    let gpa = truncated_normal(&mut rng, d.gpa_mean, d.gpa_sd, d.gpa_min, d.gpa_max);
    let gpa_ug = truncated_normal(&mut rng, d.gpa_mean, d.gpa_sd, d.gpa_min, d.gpa_max);
    let major_master = *Subfield::ALL.choose(&mut rng).unwrap();
    let major_second = if rng.random::<f64>() < d.second_major_prob {
        let others: Vec<Subfield> =
            Subfield::ALL.into_iter().filter(|s| *s != major_master).collect();
        Some(*others.choose(&mut rng).unwrap())
    } else {
        None
    };
    let n_pub = match lvl_u {
        AcademicLevel::Undergraduate => rng.random_range(0..=1),
        AcademicLevel::Masters => rng.random_range(0..=3),
        AcademicLevel::PhD => rng.random_range(1..=8),
    };
    let experience_years = (rng.random_range(0..=10) as f64) * 0.5;
    let h_u = weighted(&mut rng, &d.hours, &d.hours_probs);
    let c_summer = rng.random::<f64>() < 0.6;
    let m_loc = weighted(
        &mut rng,
        &[Modality::Onsite, Modality::Remote, Modality::Hybrid],
        &[0.30, 0.30, 0.40],
    );

    let domain = field_skills(major_master);
    let n_domain = rng.random_range(3..=7);
    let mut skills: BTreeSet<String> =
        pick_some(&mut rng, &domain, n_domain).into_iter().map(String::from).collect();
    let n_general = rng.random_range(5..=8);
    skills.extend(pick_some(&mut rng, &GENERAL_SKILLS, n_general).into_iter().map(String::from));
    if let Some(second) = major_second {
        let n_second = rng.random_range(1..=3);
        skills.extend(pick_some(&mut rng, &field_skills(second), n_second).into_iter().map(String::from));
    }

    let mut interests = BTreeSet::from([major_master.token().to_string()]);
    interests.extend(pick_some(&mut rng, &field_interests(major_master), 2).into_iter().map(String::from));
    if rng.random::<f64>() < 0.2 {
        interests.insert(GENERAL_INTERESTS.choose(&mut rng).unwrap().to_string());
    }
    if rng.random::<f64>() < 0.3 {
        let other = *Subfield::ALL.choose(&mut rng).unwrap();
        interests.insert(other.token().to_string());
    }

    let skill_list: Vec<&String> = skills.iter().collect();
    let interest_list: Vec<&String> = interests.iter().collect();
    let projects = (0..CandidateProfile::PROJECT_COUNT)
        .map(|_| {
            let t = PROJECT_TEMPLATES.choose(&mut rng).unwrap();
            let a = interest_list.choose(&mut rng).unwrap();
            let b = skill_list.choose(&mut rng).unwrap();
            fill(t, a, b)
        })
        .collect();
    let extracurriculars = EXTRACURRICULARS
        .choose_multiple(&mut rng, CandidateProfile::EXTRACURRICULAR_COUNT)
        .map(|t| {
            let a = skill_list.choose(&mut rng).unwrap();
            let b = interest_list.choose(&mut rng).unwrap();
            fill(t, a, b)
        })
        .collect();

    CandidateProfile {
        id_u: candidate_id(index),
        row_u: index as u64,
        lvl_u,
        gpa,
        gpa_ug,
        major_master,
        major_second,
        n_pub,
        experience_years,
        h_u,
        c_summer,
        m_loc,
        skills,
        interests,
        projects,
        extracurriculars,
    }
}

pub fn generate_job(index: usize, seed: u64, d: &Distributions) -> JobPosting {
    let mut rng = sub_rng(seed, "job", &[index as u64]);
    let ind_i = *Subfield::ALL.choose(&mut rng).unwrap();
    let min_lvl_i = weighted(&mut rng, &AcademicLevel::ALL, &d.job_level_probs);
    let tau_gpa = *d.job_gpa_thresholds.choose(&mut rng).unwrap();
    let tau_exp = *[0.0, 0.5, 1.0, 2.0].choose(&mut rng).unwrap();

    let mut acceptable_majors = BTreeSet::from([ind_i]);
    let n_extra = weighted(&mut rng, &[0usize, 1, 2, 3], &[0.05, 0.25, 0.40, 0.30]);
    let others: Vec<Subfield> = Subfield::ALL.into_iter().filter(|s| *s != ind_i).collect();
    acceptable_majors.extend(others.choose_multiple(&mut rng, n_extra).copied());

    let h_i = weighted(&mut rng, &d.hours, &d.job_hours_probs);
    let m_job = weighted(
        &mut rng,
        &[Modality::Onsite, Modality::Remote, Modality::Hybrid],
        &[0.30, 0.30, 0.40],
    );

    let n_domain = rng.random_range(1..=2);
    let mut required_skills: BTreeSet<String> =
        pick_some(&mut rng, &field_skills(ind_i), n_domain).into_iter().map(String::from).collect();
    let n_general = 2;
    required_skills.extend(pick_some(&mut rng, &GENERAL_SKILLS, n_general).into_iter().map(String::from));

    let focus = field_interests(ind_i).choose(&mut rng).unwrap().to_string();
    let skills_txt: Vec<&str> = required_skills.iter().map(String::as_str).collect();
    let jd_text = format!(
        "{} team hiring for {} work. Day to day you will use {}.",
        ind_i.token(),
        focus,
        skills_txt.join(", ")
    );

    JobPosting {
        id_i: job_id(index),
        ind_i,
        min_lvl_i,
        tau_gpa,
        tau_exp,
        acceptable_majors,
        h_i,
        m_job,
        required_skills,
        jd_text,
    }
}

pub fn generate_candidates(config: &SynthConfig) -> Vec<CandidateProfile> {
    generate_candidates_with(config, Exec::default())
}

pub fn generate_candidates_with(config: &SynthConfig, exec: Exec) -> Vec<CandidateProfile> {
    par::map_range(exec, config.n_candidates, |i| {
        generate_candidate(i, config.seed, &config.distributions)
    })
}

pub fn generate_jobs(config: &SynthConfig) -> Vec<JobPosting> {
    (0..config.n_jobs)
        .map(|i| generate_job(i, config.seed, &config.distributions))
        .collect()
}

/// Fisher-Yates shuffle of `items` under a dedicated stream.
pub fn shuffled<T: Clone>(items: &[T], rng: &mut ChaCha8Rng) -> Vec<T> {
    let mut v = items.to_vec();
    v.shuffle(rng);
    v
}
