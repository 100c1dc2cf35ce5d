//! Binary cross-entropy, the uncertainty-weighted two-task objective and its
//! exact gradient.
//!
//! ```text
//! L = sum_k [ exp(-w_k) * mean BCE_k + w_k ]     over tasks with >= 1 example
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Exec};

use super::{ModelParams, Task, TaskWeights};

pub const PROB_CLAMP: f64 = 1e-7;

/// Examples per parallel work unit. Fixed so the summation order, and hence
/// the result, is the same for every thread count.
const GRAD_CHUNK: usize = 32;

/// A flat feature vector and a 0/1 label.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: f64,
}

impl Sample {
    pub fn new(x: Vec<f64>, positive: bool) -> Self {
        Self { x, y: if positive { 1.0 } else { 0.0 } }
    }
}

/// Binary cross-entropy with the prediction clamped to `[1e-7, 1 - 1e-7]`.
pub fn bce(p: f64, y: f64) -> f64 {
    let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// `d bce / d logit`; zero where the clamp is active.
fn bce_logit_grad(p: f64, y: f64) -> f64 {
    if !(PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&p) {
        0.0
    } else {
        p - y
    }
}

/// Mean BCE over `samples` and its gradient with respect to every parameter.
pub fn task_loss_grad(params: &ModelParams, samples: &[Sample], task: Task, exec: Exec) -> (f64, Vec<f64>) {
    let n = samples.len();
    let mut grad = vec![0.0; params.data.len()];
    if n == 0 {
        return (0.0, grad);
    }
    let parts = par::map_chunks(exec, samples, GRAD_CHUNK, |chunk| {
        let mut g = vec![0.0; params.data.len()];
        let mut loss = 0.0;
        for s in chunk {
            loss += accumulate_example(params, s, task, 1.0, &mut g);
        }
        (loss, g)
    });
    let mut total = 0.0;
    for (loss, g) in parts {
        total += loss;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    let inv = 1.0 / n as f64;
    grad.iter_mut().for_each(|g| *g *= inv);
    (total * inv, grad)
}

/// Mean BCE only.
pub fn task_loss(params: &ModelParams, samples: &[Sample], task: Task, exec: Exec) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let parts = par::map_chunks(exec, samples, GRAD_CHUNK, |chunk| {
        chunk.iter().map(|s| bce(params.trace(&s.x, task).score, s.y)).sum::<f64>()
    });
    parts.iter().sum::<f64>() / samples.len() as f64
}

/// Adds `scale * d bce / d theta` for one example into `grad`; returns the
/// example's BCE.
fn accumulate_example(params: &ModelParams, s: &Sample, task: Task, scale: f64, grad: &mut [f64]) -> f64 {
    let l = params.layout();
    let tr = params.trace(&s.x, task);
    let dz = bce_logit_grad(tr.score, s.y) * scale;
    let loss = bce(tr.score, s.y);
    if dz == 0.0 {
        return loss;
    }
    let (hw, hb) = l.head(task);
    grad[hb] += dz;
    let d = l.input_dim;
    let ranges = params.active_ranges(task);
    let trow = l.task_row(task);
    for k in 0..l.hidden_dim {
        let h = tr.hidden[k];
        grad[hw.start + k] += dz * h;
        let da = dz * params.data[hw.start + k] * (1.0 - h * h);
        if da == 0.0 {
            continue;
        }
        grad[l.enc_b.start + k] += da;
        grad[trow.start + k] += da;
        let row = l.enc_w.start + k * d;
        for r in &ranges {
            for i in r.clone() {
                grad[row + i] += da * s.x[i];
            }
        }
    }
    loss
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage1Loss {
    pub loss: f64,
    /// Mean BCE per task (0 when a task has no examples).
    pub pref_bce: f64,
    pub qual_bce: f64,
    pub eta_pref: f64,
    pub eta_qual: f64,
    #[serde(skip)]
    pub grad: Vec<f64>,
    /// Gradient with respect to `(w_pref, w_qual)`.
    pub grad_w: [f64; 2],
}

/// Uncertainty-weighted objective over a preference and a qualification
/// mini-batch. A task without examples contributes neither its loss nor its
/// regulariser, so its weight receives no gradient.
pub fn stage1_loss(
    params: &ModelParams,
    weights: &TaskWeights,
    pref: &[Sample],
    qual: &[Sample],
    exec: Exec,
) -> Result<Stage1Loss> {
    for s in pref.iter().chain(qual) {
        params.check_input(&s.x)?;
    }
    if pref.is_empty() && qual.is_empty() {
        return Err(Error::Validation("stage-1 loss needs at least one example".into()));
    }
    let (eta_pref, eta_qual) = weights.eta();
    let mut grad = vec![0.0; params.data.len()];
    let mut grad_w = [0.0; 2];
    let mut loss = 0.0;
    let mut bces = [0.0; 2];
    for (k, (task, samples, eta, w)) in [
        (Task::Pref, pref, eta_pref, weights.w_pref),
        (Task::Qual, qual, eta_qual, weights.w_qual),
    ]
    .into_iter()
    .enumerate()
    {
        if samples.is_empty() {
            continue;
        }
        let (b, g) = task_loss_grad(params, samples, task, exec);
        bces[k] = b;
        loss += eta * b + w;
        grad_w[k] = 1.0 - eta * b;
        for (a, gi) in grad.iter_mut().zip(&g) {
            *a += eta * gi;
        }
    }
    if !loss.is_finite() {
        return Err(Error::Numerical(format!("stage-1 loss is not finite: {loss}")));
    }
    Ok(Stage1Loss {
        loss,
        pref_bce: bces[0],
        qual_bce: bces[1],
        eta_pref,
        eta_qual,
        grad,
        grad_w,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::generate::sub_rng;
    use crate::usas::FeatureConfig;
    use rand::Rng;

    fn small() -> (ModelParams, Vec<Sample>) {
        let cfg = FeatureConfig { embed_dim: 3, ..Default::default() };
        let mut p = ModelParams::init(cfg.layout(), 5, 1);
        let mut rng = sub_rng(9, "loss-test", &[]);
        for v in &mut p.data {
            *v = rng.random_range(-0.6..0.6);
        }
        let d = p.input_dim();
        let samples = (0..70)
            .map(|i| Sample::new((0..d).map(|_| rng.random_range(-1.0..1.0)).collect(), i % 4 == 0))
            .collect();
        (p, samples)
    }

    #[test]
    fn bce_values() {
        assert!((bce(0.5, 1.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((bce(0.9, 0.0) - 10f64.ln()).abs() < 1e-12);
        // clamped: finite at exact 0 and 1
        assert!((bce(0.0, 1.0) - (-(1e-7f64).ln())).abs() < 1e-9);
        assert!(bce(1.0, 0.0).is_finite());
        assert!(bce(1.0, 1.0) < 1e-6);
    }

    #[test]
    fn weighted_sum_matches_hand_computation() {
        let (p, s) = small();
        let w = TaskWeights { w_pref: 0.3, w_qual: -0.7 };
        let out = stage1_loss(&p, &w, &s[..40], &s[40..], Exec::Sequential).unwrap();
        let mean = |xs: &[Sample], t| xs.iter().map(|e| bce(p.trace(&e.x, t).score, e.y)).sum::<f64>() / xs.len() as f64;
        let bp = mean(&s[..40], Task::Pref);
        let bq = mean(&s[40..], Task::Qual);
        let expected = (-0.3f64).exp() * bp + 0.3 + 0.7f64.exp() * bq - 0.7;
        assert!((out.loss - expected).abs() < 1e-12);
        assert!((out.grad_w[0] - (1.0 - (-0.3f64).exp() * bp)).abs() < 1e-12);
    }

    #[test]
    fn absent_task_leaves_its_block_untouched() {
        let (p, s) = small();
        let out = stage1_loss(&p, &TaskWeights::default(), &s, &[], Exec::Sequential).unwrap();
        assert_eq!(out.grad_w[1], 0.0);
        assert_eq!(out.qual_bce, 0.0);
        let l = p.layout();
        assert!(out.grad[l.head_block(Task::Qual)].iter().all(|g| *g == 0.0));
        assert!(out.grad[l.task_row(Task::Qual)].iter().all(|g| *g == 0.0));
        assert!(out.grad[l.head_block(Task::Pref)].iter().any(|g| *g != 0.0));
    }

    #[test]
    fn masked_columns_get_no_gradient() {
        let (p, s) = small();
        let (_, g) = task_loss_grad(&p, &s, Task::Pref, Exec::Sequential);
        let fl = p.feature_layout().clone();
        let d = p.input_dim();
        for k in 0..p.hidden_dim() {
            for i in fl.base.clone().chain(fl.cap.clone()) {
                assert_eq!(g[k * d + i], 0.0);
            }
        }
    }

    #[test]
    fn sequential_and_parallel_agree_bitwise() {
        let (p, s) = small();
        let w = TaskWeights { w_pref: 0.1, w_qual: 0.2 };
        let a = stage1_loss(&p, &w, &s, &s, Exec::Sequential).unwrap();
        let b = stage1_loss(&p, &w, &s, &s, Exec::Parallel).unwrap();
        assert_eq!(a.loss.to_bits(), b.loss.to_bits());
        assert!(a.grad.iter().zip(&b.grad).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn empty_input_and_bad_dims_rejected() {
        let (p, _) = small();
        assert!(stage1_loss(&p, &TaskWeights::default(), &[], &[], Exec::Sequential).is_err());
        let bad = [Sample::new(vec![0.0; 3], true)];
        assert!(matches!(
            stage1_loss(&p, &TaskWeights::default(), &bad, &[], Exec::Sequential),
            Err(Error::Config(_))
        ));
    }
}
