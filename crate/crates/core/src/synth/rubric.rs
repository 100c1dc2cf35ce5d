//! Rule-based compatibility rubric.
//!
//! | component          | points | rule                                              |
//! |--------------------|--------|---------------------------------------------------|
//! | skill_overlap      | 0..6   | 6 · \|skills ∩ required\| / \|required\|          |
//! | interest_alignment | 0..4   | 4 · \|interests ∩ ({industry} ∪ required)\| / max(1, \|interests\|) |
//! | gpa_margin         | 0..3   | 3 · clamp(gpa − tau_gpa, 0, 1)                    |
//! | level_match        | 0 / 2  | level ≥ minimum level                             |
//! | major_match        | 0 / 2  | either major in the acceptable set                |
//! | availability       | 0 / 2  | h_u ≥ h_i                                         |
//! | modality           | 0 / 1  | modalities compatible                             |

use serde::{Deserialize, Serialize};

use crate::usas::{
    interest_overlap_ratio, major_accepted, skill_overlap_ratio, CandidateProfile, JobPosting,
    Modality,
};

pub const RUBRIC_MAX: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RubricBreakdown {
    pub skill_overlap: f64,
    pub interest_alignment: f64,
    pub gpa_margin: f64,
    pub level_match: f64,
    pub major_match: f64,
    pub availability: f64,
    pub modality: f64,
    pub total: f64,
}

impl RubricBreakdown {
    pub fn components(&self) -> [f64; 7] {
        [
            self.skill_overlap,
            self.interest_alignment,
            self.gpa_margin,
            self.level_match,
            self.major_match,
            self.availability,
            self.modality,
        ]
    }

    /// Upper bound of each component, in [`RubricBreakdown::components`] order.
    pub const CEILINGS: [f64; 7] = [6.0, 4.0, 3.0, 2.0, 2.0, 2.0, 1.0];
}

fn indicator(flag: bool, points: f64) -> f64 {
    if flag {
        points
    } else {
        0.0
    }
}

pub fn rubric_score(c: &CandidateProfile, j: &JobPosting) -> RubricBreakdown {
    let skill_overlap = 6.0 * skill_overlap_ratio(c, j);
    let interest_alignment = 4.0 * interest_overlap_ratio(c, j);
    let gpa_margin = 3.0 * (c.gpa - j.tau_gpa).clamp(0.0, 1.0);
    let level_match = indicator(c.lvl_u >= j.min_lvl_i, 2.0);
    let major_match = indicator(major_accepted(c, j), 2.0);
    let availability = indicator(c.h_u >= j.h_i, 2.0);
    let modality = indicator(Modality::compatible(c.m_loc, j.m_job), 1.0);
    let total = skill_overlap
        + interest_alignment
        + gpa_margin
        + level_match
        + major_match
        + availability
        + modality;
    RubricBreakdown {
        skill_overlap,
        interest_alignment,
        gpa_margin,
        level_match,
        major_match,
        availability,
        modality,
        total,
    }
}
