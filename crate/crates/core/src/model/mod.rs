//! Shared-encoder scorer with separate preference and qualification heads.
//!
//! ```text
//! a      = W · mask_task(x) + b + T[task]
//! h      = tanh(a)
//! s_task = logistic(w_task · h + c_task)
//! ```
//!
//! `mask_task` zeroes every layer the task does not condition on: preference
//! sees `con` and `sem`, qualification sees `cap` and `sem`. The encoder
//! (`W`, `b`) is shared; the task embedding `T` and the heads form the policy
//! block that stage II updates.
//!
//! Parameters live in one flat vector so optimizers, gradient checks, digests
//! and checkpoints all treat them uniformly.

pub mod checkpoint;
pub mod data;
pub mod gradcheck;
pub mod loss;
pub mod train;

use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::synth::generate::sub_rng;
use crate::usas::{hex_string, FeatureLayout, Layer, PairFeatures};

pub use checkpoint::{AlignmentRecord, Checkpoint};
pub use data::{Corpus, Example};
pub use gradcheck::{gradient_check, max_relative_error, numeric_gradient};
pub use loss::{bce, stage1_loss, Sample, Stage1Loss};
pub use train::{train_stage1, EpochRecord, SelectOn, Stage1Data, TrainConfig, TrainOutcome, TrainState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Task {
    Pref,
    Qual,
}

impl Task {
    pub fn index(self) -> usize {
        match self {
            Task::Pref => 0,
            Task::Qual => 1,
        }
    }

    pub fn active_layers(self) -> [Layer; 2] {
        match self {
            Task::Pref => [Layer::Con, Layer::Sem],
            Task::Qual => [Layer::Cap, Layer::Sem],
        }
    }
}

pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Learnable log-precision task weights; `eta = exp(-w)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TaskWeights {
    pub w_pref: f64,
    pub w_qual: f64,
}

impl TaskWeights {
    pub fn eta(&self) -> (f64, f64) {
        ((-self.w_pref).exp(), (-self.w_qual).exp())
    }
}

/// Disentangled outputs for one pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScorePair {
    pub s_pref: f64,
    pub s_qual: f64,
}

/// Block offsets inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub enc_w: Range<usize>,
    pub enc_b: Range<usize>,
    pub task_emb: Range<usize>,
    pub pref_w: Range<usize>,
    pub pref_b: usize,
    pub qual_w: Range<usize>,
    pub qual_b: usize,
    pub len: usize,
}

impl ParamLayout {
    pub fn new(input_dim: usize, hidden_dim: usize) -> Self {
        let h = hidden_dim;
        let enc_w = 0..h * input_dim;
        let enc_b = enc_w.end..enc_w.end + h;
        let task_emb = enc_b.end..enc_b.end + 2 * h;
        let pref_w = task_emb.end..task_emb.end + h;
        let pref_b = pref_w.end;
        let qual_w = pref_b + 1..pref_b + 1 + h;
        let qual_b = qual_w.end;
        Self {
            input_dim,
            hidden_dim,
            enc_w,
            enc_b,
            task_emb,
            pref_w,
            pref_b,
            qual_w,
            qual_b,
            len: qual_b + 1,
        }
    }

    /// Shared encoder block (`W`, `b`).
    pub fn encoder(&self) -> Range<usize> {
        0..self.enc_b.end
    }

    /// Task embedding and both heads.
    pub fn policy(&self) -> Range<usize> {
        self.task_emb.start..self.len
    }

    pub fn head(&self, task: Task) -> (Range<usize>, usize) {
        match task {
            Task::Pref => (self.pref_w.clone(), self.pref_b),
            Task::Qual => (self.qual_w.clone(), self.qual_b),
        }
    }

    pub fn head_block(&self, task: Task) -> Range<usize> {
        let (w, b) = self.head(task);
        w.start..b + 1
    }

    pub fn task_row(&self, task: Task) -> Range<usize> {
        let start = self.task_emb.start + task.index() * self.hidden_dim;
        start..start + self.hidden_dim
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    features: FeatureLayout,
    layout: ParamLayout,
    pub data: Vec<f64>,
}

/// Intermediate values of one forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub hidden: Vec<f64>,
    pub logit: f64,
    pub score: f64,
}

impl ModelParams {
    pub fn zeros(features: FeatureLayout, hidden_dim: usize) -> Self {
        let layout = ParamLayout::new(features.dim_total, hidden_dim);
        Self {
            data: vec![0.0; layout.len],
            features,
            layout,
        }
    }

    /// Encoder weights uniform in ±1/sqrt(fan_in); everything else zero.
    pub fn init(features: FeatureLayout, hidden_dim: usize, seed: u64) -> Self {
        let mut p = Self::zeros(features, hidden_dim);
        let bound = 1.0 / (p.layout.input_dim as f64).sqrt();
        let mut rng = sub_rng(seed, "init-encoder", &[]);
        for v in &mut p.data[p.layout.encoder()] {
            *v = rng.random_range(-bound..=bound);
        }
        p
    }

    pub fn from_data(features: FeatureLayout, hidden_dim: usize, data: Vec<f64>) -> Result<Self> {
        let layout = ParamLayout::new(features.dim_total, hidden_dim);
        if data.len() != layout.len {
            return Err(Error::Config(format!(
                "parameter vector has {} entries, expected {}",
                data.len(),
                layout.len
            )));
        }
        Ok(Self { features, layout, data })
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn feature_layout(&self) -> &FeatureLayout {
        &self.features
    }

    pub fn input_dim(&self) -> usize {
        self.layout.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.layout.hidden_dim
    }

    pub fn encoder(&self) -> &[f64] {
        &self.data[self.layout.encoder()]
    }

    pub fn policy(&self) -> &[f64] {
        &self.data[self.layout.policy()]
    }

    /// Hex SHA-256 of the encoder parameters' little-endian bytes.
    pub fn encoder_digest(&self) -> String {
        let mut h = Sha256::new();
        for v in self.encoder() {
            h.update(v.to_le_bytes());
        }
        hex_string(&h.finalize())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn active_ranges(&self, task: Task) -> [Range<usize>; 2] {
        task.active_layers().map(|l| self.features.range(l))
    }

    pub fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.layout.input_dim {
            return Err(Error::Config(format!(
                "feature dimension {} does not match model input dimension {}",
                x.len(),
                self.layout.input_dim
            )));
        }
        Ok(())
    }

    /// Encoder pre-activation `W · mask(x) + b` (task embedding excluded).
    pub fn encode(&self, x: &[f64], task: Task) -> Vec<f64> {
        let l = &self.layout;
        let d = l.input_dim;
        let w = &self.data[l.enc_w.clone()];
        let b = &self.data[l.enc_b.clone()];
        let ranges = self.active_ranges(task);
        (0..l.hidden_dim)
            .map(|k| {
                let row = &w[k * d..(k + 1) * d];
                let mut acc = b[k];
                for r in &ranges {
                    acc += row[r.clone()].iter().zip(&x[r.clone()]).map(|(a, b)| a * b).sum::<f64>();
                }
                acc
            })
            .collect()
    }

    /// Forward pass from an encoder pre-activation.
    pub fn head_forward(&self, pre: &[f64], task: Task) -> ForwardTrace {
        let l = &self.layout;
        let t = &self.data[l.task_row(task)];
        let hidden: Vec<f64> = pre.iter().zip(t).map(|(a, e)| (a + e).tanh()).collect();
        let (w, b) = l.head(task);
        let logit = self.data[b]
            + self.data[w].iter().zip(&hidden).map(|(a, h)| a * h).sum::<f64>();
        ForwardTrace {
            score: logistic(logit),
            hidden,
            logit,
        }
    }

    /// Full forward pass on a flat feature vector (layout order).
    pub fn trace(&self, x: &[f64], task: Task) -> ForwardTrace {
        self.head_forward(&self.encode(x, task), task)
    }

    pub fn forward_flat(&self, x: &[f64], task: Task) -> Result<f64> {
        self.check_input(x)?;
        Ok(self.trace(x, task).score)
    }

    pub fn forward(&self, features: &PairFeatures, task: Task) -> Result<f64> {
        self.forward_flat(&features.to_vec(), task)
    }

    pub fn score_pair(&self, features: &PairFeatures) -> Result<ScorePair> {
        let x = features.to_vec();
        self.score_flat(&x)
    }

    pub fn score_flat(&self, x: &[f64]) -> Result<ScorePair> {
        self.check_input(x)?;
        Ok(ScorePair {
            s_pref: self.trace(x, Task::Pref).score,
            s_qual: self.trace(x, Task::Qual).score,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::usas::fixtures::{candidate, job};
    use crate::usas::{extract_pair_features, FeatureConfig};

    fn setup() -> (ModelParams, PairFeatures) {
        let cfg = FeatureConfig::default();
        let f = extract_pair_features(&candidate(), &job(), &cfg).unwrap();
        (ModelParams::init(cfg.layout(), 16, 3), f)
    }

    fn randomize(p: &mut ModelParams, seed: u64) {
        let mut rng = sub_rng(seed, "test", &[]);
        for v in &mut p.data {
            *v = rng.random_range(-0.5..0.5);
        }
    }

    #[test]
    fn zero_params_score_half() {
        let cfg = FeatureConfig::default();
        let p = ModelParams::zeros(cfg.layout(), 8);
        let f = extract_pair_features(&candidate(), &job(), &cfg).unwrap();
        assert_eq!(p.forward(&f, Task::Pref).unwrap(), 0.5);
        assert_eq!(p.score_pair(&f).unwrap(), ScorePair { s_pref: 0.5, s_qual: 0.5 });
    }

    #[test]
    fn init_has_zero_heads_and_bounded_encoder() {
        let (p, f) = setup();
        let bound = 1.0 / (p.input_dim() as f64).sqrt();
        assert!(p.encoder().iter().all(|v| v.abs() <= bound));
        assert!(p.policy().iter().all(|v| *v == 0.0));
        assert_eq!(p.score_pair(&f).unwrap(), ScorePair { s_pref: 0.5, s_qual: 0.5 });
    }

    #[test]
    fn deterministic() {
        let (mut p, f) = setup();
        randomize(&mut p, 1);
        assert_eq!(p.forward(&f, Task::Qual).unwrap(), p.forward(&f, Task::Qual).unwrap());
    }

    #[test]
    fn preference_ignores_capability_layer() {
        let (mut p, f) = setup();
        randomize(&mut p, 2);
        let before = p.forward(&f, Task::Pref).unwrap();
        let before_q = p.forward(&f, Task::Qual).unwrap();
        let mut g = f.clone();
        g.cap[0] += 1.7;
        g.cap[2] -= 0.9;
        g.base[0] += 3.0;
        assert_eq!(p.forward(&g, Task::Pref).unwrap(), before);
        assert_ne!(p.forward(&g, Task::Qual).unwrap(), before_q);
        let mut k = f.clone();
        k.con[0] += 2.0;
        assert_eq!(p.forward(&k, Task::Qual).unwrap(), before_q);
    }

    #[test]
    fn heads_are_separate_encoder_is_shared() {
        let (mut p, f) = setup();
        randomize(&mut p, 3);
        let base = p.score_pair(&f).unwrap();
        let mut q = p.clone();
        for i in q.layout().head_block(Task::Qual) {
            q.data[i] += 0.3;
        }
        let s = q.score_pair(&f).unwrap();
        assert_eq!(s.s_pref, base.s_pref);
        assert_ne!(s.s_qual, base.s_qual);
        let mut e = p.clone();
        let sem = e.feature_layout().sem.clone();
        let d = e.input_dim();
        for k in 0..e.hidden_dim() {
            e.data[k * d + sem.start] += 0.5;
            e.data[k * d + sem.end - 1] += 0.5;
        }
        let s = e.score_pair(&f).unwrap();
        assert_ne!(s.s_pref, base.s_pref);
        assert_ne!(s.s_qual, base.s_qual);
    }

    #[test]
    fn dimension_mismatch_is_fatal() {
        let (p, _) = setup();
        assert!(matches!(p.forward_flat(&[1.0, 2.0], Task::Pref), Err(Error::Config(_))));
    }

    #[test]
    fn digest_covers_encoder_only() {
        let (p, _) = setup();
        let mut q = p.clone();
        let r = q.layout().policy();
        q.data[r.start] = 1.0;
        assert_eq!(p.encoder_digest(), q.encoder_digest());
        q.data[0] += 1e-12;
        assert_ne!(p.encoder_digest(), q.encoder_digest());
    }

    #[test]
    fn logistic_is_stable() {
        assert_eq!(logistic(0.0), 0.5);
        assert!(logistic(-800.0) >= 0.0 && logistic(800.0) <= 1.0);
        assert!((logistic(2.0) + logistic(-2.0) - 1.0).abs() < 1e-15);
    }
}
