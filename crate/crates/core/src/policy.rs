//! Constraint-aligned ranking policy.
//!
//! ```text
//! L(u, i, lambda) = s_pref + lambda * (s_qual - epsilon)
//! primal: ascent on mean L - 1/2 sum_k mu_k (theta_k - theta_ref_k)^2
//! dual:   lambda <- max(0, lambda - beta * mean(s_qual - epsilon))
//! ```
//!
//! Only the policy block (task embedding and both heads) moves; the shared
//! encoder is frozen, so encoder pre-activations are computed once per pair.
//! `mu` anchors the policy to its stage-1 values: head weights and the task
//! embedding use `proximal`, the two head biases use `proximal_bias`. Under
//! [`PrimalRule::Sgd`] the anchor is applied in implicit form,
//!
//! ```text
//! theta <- (theta + alpha * g + alpha * mu * theta_ref) / (1 + alpha * mu)
//! ```
//!
//! and under [`PrimalRule::Adam`] it is folded into the gradient before the
//! moment updates. Adam is the default: stage-1 qualification logits sit deep
//! in the logistic tail, where plain ascent barely moves. With both anchor
//! weights at 0 and `Sgd` the update is plain ascent on the batch Lagrangian.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::data::{Corpus, Example};
use crate::model::{ModelParams, ScorePair, Task};
use crate::par::{self, Exec};
use crate::synth::dataset::PreferenceBatch;
use crate::synth::generate::sub_rng;
use crate::usas::hex_string;

pub fn lagrangian_value(scores: ScorePair, lambda: f64, epsilon: f64) -> f64 {
    scores.s_pref + lambda * (scores.s_qual - epsilon)
}

/// Inference-time ranking score; same form as [`lagrangian_value`] with the
/// selected multiplier.
pub fn final_score(scores: ScorePair, lambda_star: f64, epsilon: f64) -> f64 {
    scores.s_pref + lambda_star * (scores.s_qual - epsilon)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualState {
    pub lambda: f64,
    pub epsilon: f64,
    pub alpha: f64,
    pub beta: f64,
    pub lambda_history: Vec<f64>,
}

impl DualState {
    pub fn new(lambda: f64, epsilon: f64, alpha: f64, beta: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Config(format!("initial lambda must be finite and >= 0, got {lambda}")));
        }
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::Config(format!("epsilon must lie in [0, 1], got {epsilon}")));
        }
        if !(alpha >= 0.0 && alpha.is_finite()) || !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::Config(format!("step sizes must satisfy alpha >= 0, beta > 0 (alpha {alpha}, beta {beta})")));
        }
        Ok(Self { lambda, epsilon, alpha, beta, lambda_history: Vec::new() })
    }

    /// Projected dual step from the batch mean of `s_qual`.
    pub fn dual_step(&mut self, mean_s_qual: f64) -> f64 {
        self.lambda = (self.lambda - self.beta * (mean_s_qual - self.epsilon)).max(0.0);
        self.lambda_history.push(self.lambda);
        self.lambda
    }

    pub fn dual_step_scores(&mut self, batch: &[ScorePair]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Validation("dual step needs a non-empty batch".into()));
        }
        let mean = batch.iter().map(|s| s.s_qual).sum::<f64>() / batch.len() as f64;
        Ok(self.dual_step(mean))
    }
}

/// Encoder pre-activations `W x + b` for both task masks, one row per pair.
#[derive(Debug, Clone)]
pub struct PreActivations {
    hidden: usize,
    pref: Vec<f64>,
    qual: Vec<f64>,
}

impl PreActivations {
    pub fn compute(params: &ModelParams, corpus: &Corpus, examples: &[Example], exec: Exec) -> Self {
        let rows = par::map(exec, examples, |e| {
            let x = corpus.features(e.candidate, e.job);
            (params.encode(&x, Task::Pref), params.encode(&x, Task::Qual))
        });
        Self::from_rows(params.hidden_dim(), rows)
    }

    pub fn from_features(params: &ModelParams, xs: &[Vec<f64>]) -> Self {
        let rows = xs.iter().map(|x| (params.encode(x, Task::Pref), params.encode(x, Task::Qual))).collect();
        Self::from_rows(params.hidden_dim(), rows)
    }

    fn from_rows(hidden: usize, rows: Vec<(Vec<f64>, Vec<f64>)>) -> Self {
        let mut pref = Vec::with_capacity(rows.len() * hidden);
        let mut qual = Vec::with_capacity(rows.len() * hidden);
        for (p, q) in rows {
            pref.extend(p);
            qual.extend(q);
        }
        Self { hidden, pref, qual }
    }

    pub fn len(&self) -> usize {
        self.pref.len().checked_div(self.hidden).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn row(&self, task: Task, i: usize) -> &[f64] {
        let v = match task {
            Task::Pref => &self.pref,
            Task::Qual => &self.qual,
        };
        &v[i * self.hidden..(i + 1) * self.hidden]
    }

    pub fn scores(&self, params: &ModelParams, i: usize) -> ScorePair {
        ScorePair {
            s_pref: params.head_forward(self.row(Task::Pref, i), Task::Pref).score,
            s_qual: params.head_forward(self.row(Task::Qual, i), Task::Qual).score,
        }
    }

    /// Mean scores over every cached pair.
    pub fn mean_scores(&self, params: &ModelParams, exec: Exec) -> ScorePair {
        let idx: Vec<usize> = (0..self.len()).collect();
        let sums = par::map_chunks(exec, &idx, 1024, |chunk| {
            chunk.iter().fold((0.0, 0.0), |(p, q), &i| {
                let s = self.scores(params, i);
                (p + s.s_pref, q + s.s_qual)
            })
        });
        let (p, q) = sums.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
        let n = self.len().max(1) as f64;
        ScorePair { s_pref: p / n, s_qual: q / n }
    }
}

/// Batch means of the two scores before a primal step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchMeans {
    pub s_pref: f64,
    pub s_qual: f64,
}

/// Gradient of the batch-mean Lagrangian with respect to the policy block
/// (offsets relative to `layout().policy().start`).
pub fn policy_gradient(
    params: &ModelParams,
    cache: &PreActivations,
    rows: &[usize],
    lambda: f64,
    exec: Exec,
) -> (BatchMeans, Vec<f64>) {
    let l = params.layout();
    let off = l.policy().start;
    let n_policy = l.policy().len();
    let parts = par::map_chunks(exec, rows, 64, |chunk| {
        let mut g = vec![0.0; n_policy];
        let (mut sp, mut sq) = (0.0, 0.0);
        for &i in chunk {
            for (task, coef) in [(Task::Pref, 1.0), (Task::Qual, lambda)] {
                let tr = params.head_forward(cache.row(task, i), task);
                match task {
                    Task::Pref => sp += tr.score,
                    Task::Qual => sq += tr.score,
                }
                let dz = coef * tr.score * (1.0 - tr.score);
                if dz == 0.0 {
                    continue;
                }
                let (hw, hb) = l.head(task);
                let trow = l.task_row(task);
                g[hb - off] += dz;
                for k in 0..l.hidden_dim {
                    let h = tr.hidden[k];
                    g[hw.start - off + k] += dz * h;
                    g[trow.start - off + k] += dz * params.data[hw.start + k] * (1.0 - h * h);
                }
            }
        }
        (sp, sq, g)
    });
    let mut grad = vec![0.0; n_policy];
    let (mut sp, mut sq) = (0.0, 0.0);
    for (p, q, g) in parts {
        sp += p;
        sq += q;
        grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    }
    let inv = 1.0 / rows.len().max(1) as f64;
    grad.iter_mut().for_each(|v| *v *= inv);
    (BatchMeans { s_pref: sp * inv, s_qual: sq * inv }, grad)
}

/// Per-coordinate anchor weights over the policy block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proximal {
    pub weights: f64,
    pub bias: f64,
}

impl Proximal {
    pub const NONE: Proximal = Proximal { weights: 0.0, bias: 0.0 };

    fn per_coordinate(&self, params: &ModelParams) -> Vec<f64> {
        let l = params.layout();
        let off = l.policy().start;
        let mut mu = vec![self.weights; l.policy().len()];
        mu[l.pref_b - off] = self.bias;
        mu[l.qual_b - off] = self.bias;
        mu
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimalRule {
    /// Plain ascent with the implicit anchor.
    Sgd,
    /// Adam on the anchored gradient `g - mu * (theta - theta_ref)`.
    #[default]
    Adam,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Update rule plus whatever moment state it carries between steps.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalOptimizer {
    rule: PrimalRule,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl PrimalOptimizer {
    pub fn new(rule: PrimalRule, params: &ModelParams) -> Self {
        let n = params.layout().policy().len();
        Self { rule, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn rule(&self) -> PrimalRule {
        self.rule
    }

    fn apply(&mut self, policy: &mut [f64], grad: &[f64], reference: &[f64], mu: &[f64], alpha: f64) {
        match self.rule {
            PrimalRule::Sgd => {
                for (((p, g), r), m) in policy.iter_mut().zip(grad).zip(reference).zip(mu) {
                    *p = (*p + alpha * g + alpha * m * r) / (1.0 + alpha * m);
                }
            }
            PrimalRule::Adam => {
                self.t += 1;
                let c1 = 1.0 - ADAM_BETA1.powi(self.t);
                let c2 = 1.0 - ADAM_BETA2.powi(self.t);
                for i in 0..policy.len() {
                    let g = grad[i] - mu[i] * (policy[i] - reference[i]);
                    self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * g;
                    self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * g * g;
                    policy[i] += alpha * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + ADAM_EPS);
                }
            }
        }
    }
}

/// One ascent step on the policy block. The encoder is never written.
#[allow(clippy::too_many_arguments)]
pub fn primal_step(
    params: &mut ModelParams,
    reference_policy: &[f64],
    cache: &PreActivations,
    rows: &[usize],
    dual: &DualState,
    proximal: Proximal,
    optimizer: &mut PrimalOptimizer,
    exec: Exec,
) -> Result<BatchMeans> {
    if rows.is_empty() {
        return Err(Error::Validation("primal step needs a non-empty batch".into()));
    }
    let (means, grad) = policy_gradient(params, cache, rows, dual.lambda, exec);
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numerical(format!(
            "non-finite policy gradient (lambda {}, mean s_qual {})",
            dual.lambda, means.s_qual
        )));
    }
    let mu = proximal.per_coordinate(params);
    let range = params.layout().policy();
    optimizer.apply(&mut params.data[range], &grad, reference_policy, &mu, dual.alpha);
    Ok(means)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaSelection {
    /// Multiplier after the last dual step.
    #[default]
    Final,
    /// The multiplier whose step had the smallest |mean s_qual - epsilon|
    /// within the last 10% of steps.
    Trajectory,
}

/// Which preference-train pairs the constraint is averaged over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignPairs {
    /// The labelled positive of each batch.
    #[default]
    Preferred,
    /// Every item, sampled negatives included.
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignConfig {
    pub epsilon: f64,
    pub lambda_init: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Anchor weight for head weights and the task embedding.
    pub proximal: f64,
    /// Anchor weight for the two head biases.
    pub proximal_bias: f64,
    pub rule: PrimalRule,
    pub pairs: AlignPairs,
    pub epochs: usize,
    /// Pairs per primal/dual step.
    pub batch_size: usize,
    pub lambda_ceiling: f64,
    pub selection: LambdaSelection,
    /// Upper bound on preference-train batches used for alignment.
    pub max_batches: Option<usize>,
    pub seed: u64,
}

impl Default for AlignConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            lambda_init: 0.0,
            alpha: 0.02,
            beta: 0.5,
            proximal: 10.0,
            proximal_bias: 0.005,
            rule: PrimalRule::Adam,
            pairs: AlignPairs::Preferred,
            epochs: 80,
            batch_size: 64,
            lambda_ceiling: 100.0,
            selection: LambdaSelection::Final,
            max_batches: None,
            seed: 13,
        }
    }
}

impl AlignConfig {
    pub fn proximal(&self) -> Proximal {
        Proximal { weights: self.proximal, bias: self.proximal_bias }
    }

    pub fn validate(&self) -> Result<()> {
        DualState::new(self.lambda_init, self.epsilon, self.alpha, self.beta)?;
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("align.epochs and align.batch_size must be >= 1".into()));
        }
        if !(self.proximal >= 0.0 && self.proximal_bias >= 0.0) || self.lambda_ceiling.is_nan() || self.lambda_ceiling <= self.lambda_init {
            return Err(Error::Config(
                "align.proximal and align.proximal_bias must be >= 0 and align.lambda_ceiling above lambda_init".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub lambda: f64,
    pub mean_s_qual: f64,
    pub mean_s_pref: f64,
}

pub const TRACE_HEADER: &str = "step,lambda,mean_s_qual,mean_s_pref";

pub fn trace_csv(trace: &[TraceRow]) -> String {
    let mut out = format!("{TRACE_HEADER}\n");
    for r in trace {
        out.push_str(&format!("{},{},{},{}\n", r.step, r.lambda, r.mean_s_qual, r.mean_s_pref));
    }
    out
}

/// A stage-2 policy: full parameters (encoder bit-identical to stage 1) and
/// the selected multiplier.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedPolicy {
    pub params: ModelParams,
    pub lambda_star: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedJob {
    pub job_id: String,
    pub final_score: f64,
    pub s_pref: f64,
    pub s_qual: f64,
}

/// Sorts by score descending, ties by id ascending.
pub fn sort_ranked(items: &mut [RankedJob]) {
    items.sort_by(|a, b| b.final_score.total_cmp(&a.final_score).then_with(|| a.job_id.cmp(&b.job_id)));
}

impl AlignedPolicy {
    pub fn scores(&self, x: &[f64]) -> Result<ScorePair> {
        self.params.score_flat(x)
    }

    pub fn final_score(&self, scores: ScorePair) -> f64 {
        final_score(scores, self.lambda_star, self.epsilon)
    }

    /// Ranks `jobs` (corpus indices) for one candidate.
    pub fn rank_jobs(&self, corpus: &Corpus, candidate: usize, jobs: &[usize]) -> Vec<RankedJob> {
        let mut out: Vec<RankedJob> = jobs
            .iter()
            .map(|&j| {
                let s = self
                    .params
                    .score_flat(&corpus.features(candidate, j))
                    .expect("corpus features match the model layout");
                RankedJob {
                    job_id: corpus.jobs[j].id_i.clone(),
                    final_score: self.final_score(s),
                    s_pref: s.s_pref,
                    s_qual: s.s_qual,
                }
            })
            .collect();
        sort_ranked(&mut out);
        out
    }
}

#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum AlignResult {
    Aligned {
        policy: AlignedPolicy,
        /// Means over every alignment pair under the final parameters.
        terminal: ScorePair,
    },
    Infeasible {
        step: usize,
        lambda: f64,
    },
}

#[derive(Debug, Clone)]
pub struct AlignRun {
    pub epsilon: f64,
    pub trace: Vec<TraceRow>,
    pub result: AlignResult,
}

impl AlignRun {
    pub fn policy(&self) -> Result<&AlignedPolicy> {
        match &self.result {
            AlignResult::Aligned { policy, .. } => Ok(policy),
            AlignResult::Infeasible { step, lambda } => Err(Error::Infeasible {
                epsilon: self.epsilon,
                lambda: *lambda,
                step: *step,
            }),
        }
    }

    /// `lambda* * (terminal mean s_qual - epsilon)`.
    pub fn slackness(&self) -> Option<f64> {
        match &self.result {
            AlignResult::Aligned { policy, terminal } => Some(policy.lambda_star * (terminal.s_qual - self.epsilon)),
            AlignResult::Infeasible { .. } => None,
        }
    }
}

pub fn policy_digest(params: &ModelParams) -> String {
    let mut h = Sha256::new();
    for v in params.policy() {
        h.update(v.to_le_bytes());
    }
    hex_string(&h.finalize())
}

/// Alignment pairs from preference batches, honouring `max_batches` and `pairs`.
pub fn alignment_examples<'a>(
    corpus: &Corpus,
    batches: impl IntoIterator<Item = &'a PreferenceBatch>,
    config: &AlignConfig,
) -> Result<Vec<Example>> {
    let batches = batches.into_iter().take(config.max_batches.unwrap_or(usize::MAX));
    let mut examples = corpus.pref_examples(batches)?;
    if config.pairs == AlignPairs::Preferred {
        examples.retain(|e| e.positive);
    }
    if examples.is_empty() {
        return Err(Error::Validation("no preference batches to align on".into()));
    }
    Ok(examples)
}

/// Saddle-point alignment: alternating primal ascent and projected dual
/// steps over shuffled mini-batches of the cached pairs.
pub fn align_stage2(reference: &ModelParams, cache: &PreActivations, config: &AlignConfig, exec: Exec) -> Result<AlignRun> {
    config.validate()?;
    if cache.is_empty() {
        return Err(Error::Validation("no pairs to align on".into()));
    }
    if cache.hidden != reference.hidden_dim() {
        return Err(Error::Config("pre-activation cache does not match the model".into()));
    }
    let digest = reference.encoder_digest();
    let reference_policy = reference.policy().to_vec();
    let mut params = reference.clone();
    let mut dual = DualState::new(config.lambda_init, config.epsilon, config.alpha, config.beta)?;
    let mut optimizer = PrimalOptimizer::new(config.rule, &params);
    let mut trace = Vec::new();
    let mut step = 0;
    let mut order: Vec<usize> = (0..cache.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut sub_rng(config.seed, "align-order", &[epoch as u64]));
        for rows in order.chunks(config.batch_size) {
            step += 1;
            let means = primal_step(&mut params, &reference_policy, cache, rows, &dual, config.proximal(), &mut optimizer, exec)?;
            let lambda = dual.dual_step(means.s_qual);
            trace.push(TraceRow { step, lambda, mean_s_qual: means.s_qual, mean_s_pref: means.s_pref });
            if lambda > config.lambda_ceiling {
                return Ok(AlignRun {
                    epsilon: config.epsilon,
                    trace,
                    result: AlignResult::Infeasible { step, lambda },
                });
            }
        }
    }
    if params.encoder_digest() != digest {
        return Err(Error::Numerical("encoder parameters changed during alignment".into()));
    }
    let lambda_star = match config.selection {
        LambdaSelection::Final => dual.lambda,
        LambdaSelection::Trajectory => {
            let tail = (trace.len() / 10).max(1);
            trace[trace.len() - tail..]
                .iter()
                .min_by(|a, b| {
                    (a.mean_s_qual - config.epsilon)
                        .abs()
                        .total_cmp(&(b.mean_s_qual - config.epsilon).abs())
                })
                .map(|r| r.lambda)
                .unwrap_or(dual.lambda)
        }
    };
    let terminal = cache.mean_scores(&params, exec);
    Ok(AlignRun {
        epsilon: config.epsilon,
        trace,
        result: AlignResult::Aligned {
            policy: AlignedPolicy { params, lambda_star, epsilon: config.epsilon },
            terminal,
        },
    })
}

/// Scores every `(candidate, job)` pair under `params`.
pub fn score_examples(params: &ModelParams, corpus: &Corpus, examples: &[Example], exec: Exec) -> Vec<ScorePair> {
    par::map(exec, examples, |e| {
        params.score_flat(&corpus.features(e.candidate, e.job)).expect("corpus features match the model layout")
    })
}
