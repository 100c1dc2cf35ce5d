//! Dual-perspective job recommendation.
//!
//! Candidate preference and employer qualification are scored by two heads on
//! a shared encoder, then a ranking policy is aligned under an eligibility
//! constraint `mean(s_qual) >= epsilon` with a projected Lagrange multiplier.
//!
//! Module map:
//! - [`usas`]: four-layer candidate/job schema and the paired feature vector.
//! - [`synth`]: seeded population generator, rubric labeling, split datasets.
//! - [`model`]: shared-encoder scorer, stage-I multi-task training, checkpoints.
//! - [`policy`]: Lagrangian objective, primal/dual steps, aligned ranking.
//! - [`eval`]: sampled top-K metrics and ranking-agreement analysis.

pub mod error;
pub mod eval;
pub mod io;
pub mod model;
pub mod par;
pub mod policy;
pub mod synth;
pub mod usas;

pub use error::{Error, Result};
