//! Stage-1 multi-task training: SGD over interleaved preference and
//! qualification mini-batches with gradient-norm clipping, learnable task
//! weights and model selection on preference validation loss.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::synth::generate::sub_rng;

use super::checkpoint::{decode_f64s, encode_f64s};
use super::data::{Corpus, Example};
use super::loss::{bce, stage1_loss, Sample};
use super::{ModelParams, Task, TaskWeights};

/// Which quantity picks the returned epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectOn {
    /// Preference validation BCE.
    #[default]
    PrefValidation,
    /// Preference validation BCE plus qualification training BCE.
    Combined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub hidden_dim: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub clip_norm: f64,
    /// Stop after this many epochs without improvement; 0 disables.
    pub patience: usize,
    pub seed: u64,
    pub select_on: SelectOn,
    /// Abort when a mini-batch loss exceeds this.
    pub divergence_threshold: f64,
    pub pref_only: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 64,
            learning_rate: 0.05,
            epochs: 8,
            batch_size: 256,
            clip_norm: 5.0,
            patience: 3,
            seed: 11,
            select_on: SelectOn::PrefValidation,
            divergence_threshold: 1e3,
            pref_only: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.hidden_dim == 0 || self.batch_size == 0 || self.epochs == 0 {
            return bad("train.hidden_dim, train.batch_size and train.epochs must be >= 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("train.learning_rate must be positive");
        }
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 || self.divergence_threshold.is_nan() || self.divergence_threshold <= 0.0 {
            return bad("train.clip_norm and train.divergence_threshold must be positive");
        }
        Ok(())
    }

    /// Settings that must not change across a resume.
    fn same_run(&self, other: &TrainConfig) -> bool {
        TrainConfig { epochs: 0, patience: 0, ..self.clone() } == TrainConfig { epochs: 0, patience: 0, ..other.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub pref_train_bce: f64,
    pub qual_train_bce: f64,
    pub pref_val_bce: f64,
    pub eta_pref: f64,
    pub eta_qual: f64,
    pub steps: usize,
}

pub const HISTORY_HEADER: &str = "epoch,loss,pref_train_bce,qual_train_bce,pref_val_bce,eta_pref,eta_qual,steps";

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from(HISTORY_HEADER);
    out.push('\n');
    for r in history {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.epoch, r.loss, r.pref_train_bce, r.qual_train_bce, r.pref_val_bce, r.eta_pref, r.eta_qual, r.steps
        ));
    }
    out
}

/// Everything needed to continue an interrupted run bit-for-bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainState {
    pub config: TrainConfig,
    pub epochs_done: usize,
    pub params: String,
    pub weights: TaskWeights,
    pub best_params: String,
    pub best_weights: TaskWeights,
    pub best_epoch: usize,
    pub best_score: f64,
    pub stale_epochs: usize,
    pub history: Vec<EpochRecord>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the selected epoch.
    pub params: ModelParams,
    pub weights: TaskWeights,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
    pub stopped_early: bool,
    pub state: TrainState,
}

/// Training, validation and qualification examples for stage 1.
#[derive(Debug, Clone, Default)]
pub struct Stage1Data {
    pub pref_train: Vec<Example>,
    pub pref_val: Vec<Example>,
    pub qual_train: Vec<Example>,
}

/// Mean BCE of one head over examples featurized on the fly.
pub fn mean_bce(params: &ModelParams, corpus: &Corpus, examples: &[Example], task: Task, exec: Exec) -> f64 {
    if examples.is_empty() {
        return 0.0;
    }
    let sums = par::map_chunks(exec, examples, 512, |chunk| {
        chunk
            .iter()
            .map(|e| {
                let y = if e.positive { 1.0 } else { 0.0 };
                bce(params.trace(&corpus.features(e.candidate, e.job), task).score, y)
            })
            .sum::<f64>()
    });
    sums.iter().sum::<f64>() / examples.len() as f64
}

fn clip(grad: &mut [f64], grad_w: &mut [f64; 2], max_norm: f64) {
    let norm = grad.iter().chain(grad_w.iter()).map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
        grad_w.iter_mut().for_each(|g| *g *= s);
    }
}

/// Runs (or resumes) stage-1 training. `on_epoch` sees the resumable state
/// after every completed epoch.
pub fn train_stage1(
    corpus: &Corpus,
    data: &Stage1Data,
    config: &TrainConfig,
    exec: Exec,
    resume: Option<TrainState>,
    mut on_epoch: impl FnMut(&TrainState) -> Result<()>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if data.pref_train.is_empty() {
        return Err(Error::Validation("no preference training examples".into()));
    }
    if !config.pref_only && data.qual_train.is_empty() {
        return Err(Error::Validation("no qualification training examples (use pref-only mode)".into()));
    }
    let layout = corpus.config().layout();
    let mut state = match resume {
        Some(s) => {
            if !config.same_run(&s.config) {
                return Err(Error::Config("resume state was produced with different training settings".into()));
            }
            TrainState { config: config.clone(), ..s }
        }
        None => {
            let p = ModelParams::init(layout.clone(), config.hidden_dim, config.seed);
            TrainState {
                config: config.clone(),
                epochs_done: 0,
                params: encode_f64s(&p.data),
                weights: TaskWeights::default(),
                best_params: encode_f64s(&p.data),
                best_weights: TaskWeights::default(),
                best_epoch: 0,
                best_score: f64::INFINITY,
                stale_epochs: 0,
                history: Vec::new(),
            }
        }
    };
    let mut params = ModelParams::from_data(layout.clone(), config.hidden_dim, decode_f64s(&state.params)?)?;
    let mut weights = state.weights;
    let mut stopped_early = config.patience > 0 && state.stale_epochs >= config.patience;

    while state.epochs_done < config.epochs && !stopped_early {
        let epoch = state.epochs_done + 1;
        let mut order: Vec<usize> = (0..data.pref_train.len()).collect();
        order.shuffle(&mut sub_rng(config.seed, "pref-order", &[epoch as u64]));
        let mut qual_cycle = QualCycle::new(data.qual_train.len(), config.seed, epoch);

        let (mut loss_sum, mut pref_sum, mut qual_sum, mut steps) = (0.0, 0.0, 0.0, 0usize);
        for (step, chunk) in order.chunks(config.batch_size).enumerate() {
            let pref: Vec<Sample> = par::map(exec, chunk, |&i| corpus.sample(&data.pref_train[i]));
            let qual: Vec<Sample> = if config.pref_only {
                Vec::new()
            } else {
                let idx = qual_cycle.take(config.batch_size);
                par::map(exec, &idx, |&i| corpus.sample(&data.qual_train[i]))
            };
            let mut out = stage1_loss(&params, &weights, &pref, &qual, exec)?;
            if out.loss > config.divergence_threshold {
                return Err(Error::Numerical(format!(
                    "training diverged at epoch {epoch} step {}: loss {} exceeds {}",
                    step + 1,
                    out.loss,
                    config.divergence_threshold
                )));
            }
            clip(&mut out.grad, &mut out.grad_w, config.clip_norm);
            let lr = config.learning_rate;
            params.data.iter_mut().zip(&out.grad).for_each(|(p, g)| *p -= lr * g);
            weights.w_pref -= lr * out.grad_w[0];
            weights.w_qual -= lr * out.grad_w[1];
            if !params.is_finite() || !weights.w_pref.is_finite() || !weights.w_qual.is_finite() {
                return Err(Error::Numerical(format!("non-finite parameters at epoch {epoch} step {}", step + 1)));
            }
            loss_sum += out.loss;
            pref_sum += out.pref_bce;
            qual_sum += out.qual_bce;
            steps += 1;
        }

        let pref_val_bce = mean_bce(&params, corpus, &data.pref_val, Task::Pref, exec);
        let n = steps as f64;
        let (eta_pref, eta_qual) = weights.eta();
        let record = EpochRecord {
            epoch,
            loss: loss_sum / n,
            pref_train_bce: pref_sum / n,
            qual_train_bce: qual_sum / n,
            pref_val_bce,
            eta_pref,
            eta_qual,
            steps,
        };
        let score = match config.select_on {
            SelectOn::PrefValidation => pref_val_bce,
            SelectOn::Combined => pref_val_bce + record.qual_train_bce,
        };
        if score < state.best_score {
            state.best_score = score;
            state.best_epoch = epoch;
            state.best_params = encode_f64s(&params.data);
            state.best_weights = weights;
            state.stale_epochs = 0;
        } else {
            state.stale_epochs += 1;
        }
        state.history.push(record);
        state.epochs_done = epoch;
        state.params = encode_f64s(&params.data);
        state.weights = weights;
        on_epoch(&state)?;
        stopped_early = config.patience > 0 && state.stale_epochs >= config.patience;
    }

    let best = ModelParams::from_data(layout, config.hidden_dim, decode_f64s(&state.best_params)?)?;
    Ok(TrainOutcome {
        params: best,
        weights: state.best_weights,
        best_epoch: state.best_epoch,
        history: state.history.clone(),
        stopped_early: stopped_early && state.epochs_done < config.epochs,
        state,
    })
}

/// Endless, reshuffled-per-pass walk over the qualification examples.
struct QualCycle {
    n: usize,
    seed: u64,
    epoch: usize,
    pass: u64,
    order: Vec<usize>,
    pos: usize,
}

impl QualCycle {
    fn new(n: usize, seed: u64, epoch: usize) -> Self {
        let mut c = Self { n, seed, epoch, pass: 0, order: Vec::new(), pos: 0 };
        c.reshuffle();
        c
    }

    fn reshuffle(&mut self) {
        self.order = (0..self.n).collect();
        self.order
            .shuffle(&mut sub_rng(self.seed, "qual-order", &[self.epoch as u64, self.pass]));
        self.pass += 1;
        self.pos = 0;
    }

    fn take(&mut self, k: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(k);
        while out.len() < k && self.n > 0 {
            if self.pos == self.n {
                self.reshuffle();
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::dataset::Split;
    use crate::synth::{synthesize, Dataset, SynthConfig};
    use crate::usas::FeatureConfig;

    fn fixture() -> (Corpus, Stage1Data) {
        let cfg = SynthConfig { n_candidates: 400, n_jobs: 100, features: FeatureConfig { embed_dim: 8, ..Default::default() }, ..Default::default() };
        let ds = Dataset::from_output(&synthesize(&cfg).unwrap());
        let corpus = Corpus::from_dataset(&cfg.features, &ds).unwrap();
        let data = Stage1Data {
            pref_train: corpus.pref_examples(ds.pref_split(Split::Train)).unwrap(),
            pref_val: corpus.pref_examples(ds.pref_split(Split::Validation)).unwrap(),
            qual_train: corpus.qual_examples(ds.qual_split(Split::Train)).unwrap(),
        };
        assert!(!data.pref_train.is_empty() && !data.qual_train.is_empty());
        (corpus, data)
    }

    fn quick() -> TrainConfig {
        TrainConfig { hidden_dim: 8, epochs: 3, batch_size: 64, patience: 0, ..Default::default() }
    }

    #[test]
    fn training_reduces_validation_loss() {
        let (corpus, data) = fixture();
        let out = train_stage1(&corpus, &data, &quick(), Exec::default(), None, |_| Ok(())).unwrap();
        let init = ModelParams::init(corpus.config().layout(), 8, quick().seed);
        let before = mean_bce(&init, &corpus, &data.pref_val, Task::Pref, Exec::default());
        let after = mean_bce(&out.params, &corpus, &data.pref_val, Task::Pref, Exec::default());
        assert!(after < before, "{before} -> {after}");
        assert_eq!(out.history.len(), 3);
        assert!(out.history.iter().all(|r| r.loss.is_finite()));
    }

    #[test]
    fn pref_only_leaves_qualification_untouched() {
        let (corpus, data) = fixture();
        let cfg = TrainConfig { pref_only: true, ..quick() };
        let out = train_stage1(&corpus, &data, &cfg, Exec::default(), None, |_| Ok(())).unwrap();
        let l = out.params.layout();
        assert!(out.params.data[l.head_block(Task::Qual)].iter().all(|v| *v == 0.0));
        assert!(out.params.data[l.task_row(Task::Qual)].iter().all(|v| *v == 0.0));
        assert_eq!(out.weights.w_qual, 0.0);
        assert!(out.history.iter().all(|r| r.qual_train_bce == 0.0));
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let (corpus, data) = fixture();
        let full = train_stage1(&corpus, &data, &quick(), Exec::default(), None, |_| Ok(())).unwrap();
        let mut saved = None;
        let short = TrainConfig { epochs: 2, ..quick() };
        train_stage1(&corpus, &data, &short, Exec::default(), None, |s| {
            saved = Some(s.clone());
            Ok(())
        })
        .unwrap();
        let resumed = train_stage1(&corpus, &data, &quick(), Exec::default(), saved, |_| Ok(())).unwrap();
        assert_eq!(resumed.params, full.params);
        assert_eq!(resumed.history, full.history);
        let changed = TrainConfig { learning_rate: 0.01, ..quick() };
        assert!(train_stage1(&corpus, &data, &changed, Exec::default(), Some(full.state), |_| Ok(())).is_err());
    }

    #[test]
    fn divergence_aborts() {
        let (corpus, data) = fixture();
        let cfg = TrainConfig { divergence_threshold: 1e-3, ..quick() };
        let err = train_stage1(&corpus, &data, &cfg, Exec::default(), None, |_| Ok(())).unwrap_err();
        assert!(matches!(err, Error::Numerical(_)));
    }

    #[test]
    fn sequential_matches_parallel() {
        let (corpus, data) = fixture();
        let cfg = TrainConfig { epochs: 1, ..quick() };
        let a = train_stage1(&corpus, &data, &cfg, Exec::Sequential, None, |_| Ok(())).unwrap();
        let b = train_stage1(&corpus, &data, &cfg, Exec::Parallel, None, |_| Ok(())).unwrap();
        assert_eq!(a.params, b.params);
    }
}
