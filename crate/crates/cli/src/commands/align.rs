use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use dualrank::eval::{ModelScorer, ScoreMode};
use dualrank::io::{write_json, write_text};
use dualrank::model::checkpoint::Stage;
use dualrank::model::{AlignmentRecord, Checkpoint, Corpus, ModelParams};
use dualrank::policy::{
    align_stage2, alignment_examples, policy_digest, trace_csv, AlignConfig, AlignResult, AlignRun, AlignedPolicy,
    PreActivations,
};
use dualrank::synth::{Dataset, Split};
use dualrank::{Error, Result};
use serde::Serialize;

use super::eval::{test_metrics, TaskSel};
use super::Ctx;
use crate::config::SweepMode;
use crate::layout::{create_dir, epsilon_label, CHECKPOINT_FILE, SWEEP_FILE, SWEEP_RANK1_FILE, TRACE_FILE};

#[derive(Debug, Clone, Default)]
pub struct AlignArgs {
    pub checkpoint: Option<PathBuf>,
    pub name: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct SweepArgs {
    pub checkpoint: Option<PathBuf>,
    pub epsilons: Option<Vec<f64>>,
}

#[derive(Debug, Serialize)]
struct AlignReport {
    status: &'static str,
    epsilon: f64,
    lambda_star: Option<f64>,
    last_lambda: f64,
    steps: usize,
    pairs: usize,
    terminal_mean_s_qual: Option<f64>,
    terminal_mean_s_pref: Option<f64>,
    slackness: Option<f64>,
    encoder_digest: String,
    reference: String,
}

/// Everything alignment needs from disk, loaded once.
struct Prepared {
    ckpt: Checkpoint,
    params: ModelParams,
    ds: Dataset,
    corpus: Corpus,
    cache: PreActivations,
    source: PathBuf,
}

fn prepare(ctx: &Ctx, checkpoint: Option<&Path>) -> Result<Prepared> {
    let source = checkpoint.map(Path::to_path_buf).unwrap_or_else(|| ctx.layout.stage1_checkpoint());
    let (ckpt, params) = ctx.load_checkpoint(&source)?;
    if ckpt.stage != Stage::Stage1 {
        return Err(Error::Validation(format!("{} is already aligned; align starts from a stage-1 checkpoint", source.display())));
    }
    let (ds, corpus) = ctx.load_dataset()?;
    let examples = alignment_examples(&corpus, ds.pref_split(Split::Train), &ctx.cfg.align)?;
    let cache = PreActivations::compute(&params, &corpus, &examples, ctx.exec);
    Ok(Prepared { ckpt, params, ds, corpus, cache, source })
}

/// Runs one alignment and writes its trace, report and (if feasible) checkpoint into `dir`.
fn align_into(ctx: &Ctx, prep: &Prepared, config: &AlignConfig, dir: &Path) -> Result<AlignRun> {
    let run = align_stage2(&prep.params, &prep.cache, config, ctx.exec)?;
    write_text(&dir.join(TRACE_FILE), &trace_csv(&run.trace))?;
    let (status, lambda_star, terminal) = match &run.result {
        AlignResult::Aligned { policy, terminal } => ("aligned", Some(policy.lambda_star), Some(*terminal)),
        AlignResult::Infeasible { .. } => ("infeasible", None, None),
    };
    write_json(
        &dir.join("align_report.json"),
        &AlignReport {
            status,
            epsilon: config.epsilon,
            lambda_star,
            last_lambda: run.trace.last().map_or(config.lambda_init, |r| r.lambda),
            steps: run.trace.len(),
            pairs: prep.cache.len(),
            terminal_mean_s_qual: terminal.map(|t| t.s_qual),
            terminal_mean_s_pref: terminal.map(|t| t.s_pref),
            slackness: run.slackness(),
            encoder_digest: prep.params.encoder_digest(),
            reference: prep.source.strip_prefix(ctx.layout.root()).unwrap_or(&prep.source).display().to_string(),
        },
    )?;
    if let Ok(policy) = run.policy() {
        let record = AlignmentRecord {
            lambda_star: policy.lambda_star,
            epsilon: policy.epsilon,
            config: config.clone(),
            steps: run.trace.len(),
            reference_policy_digest: policy_digest(&prep.params),
        };
        Checkpoint::aligned(&policy.params, &prep.ckpt.features, prep.ckpt.task_weights, prep.ckpt.pref_only, record)?
            .save(&dir.join(CHECKPOINT_FILE))?;
    }
    Ok(run)
}

fn describe(run: &AlignRun) -> String {
    match &run.result {
        AlignResult::Aligned { policy, terminal } => format!(
            "epsilon {}: lambda* {:.4}, mean s_qual {:.5}, slackness {:+.2e} after {} steps",
            run.epsilon,
            policy.lambda_star,
            terminal.s_qual,
            run.slackness().unwrap_or(f64::NAN),
            run.trace.len()
        ),
        AlignResult::Infeasible { step, lambda } => {
            format!("epsilon {}: infeasible, lambda {lambda:.3} passed the ceiling at step {step}", run.epsilon)
        }
    }
}

/// Aligns the stage-1 model; returns the output directory.
pub fn run(ctx: &Ctx, args: &AlignArgs) -> Result<PathBuf> {
    let prep = prepare(ctx, args.checkpoint.as_deref())?;
    let config = &ctx.cfg.align;
    let name = args.name.clone().unwrap_or_else(|| epsilon_label(config.epsilon));
    let dir = ctx.layout.aligned(&name);
    ctx.output_dir(&dir)?;
    let run = align_into(ctx, &prep, config, &dir)?;
    println!("{}", describe(&run));
    run.policy()?;
    println!("aligned checkpoint written to {}", dir.join(CHECKPOINT_FILE).display());
    Ok(dir)
}

/// Mean stage-1 and aligned qualification score of each test candidate's
/// top-ranked job, ranking the batch's jobs by the aligned final score.
fn rank1_s_qual(prep: &Prepared, policy: &AlignedPolicy) -> Result<(f64, f64)> {
    let batches = prep.ds.pref_split(Split::Test);
    if batches.is_empty() {
        return Err(Error::Validation("no test preference batches".into()));
    }
    let (mut reference, mut aligned) = (0.0, 0.0);
    for b in &batches {
        let cand = prep.corpus.candidate(&b.candidate_id)?;
        let jobs = b.items().map(|(j, _)| prep.corpus.job(j)).collect::<Result<Vec<_>>>()?;
        let top = policy.rank_jobs(&prep.corpus, cand, &jobs).into_iter().next().expect("batch has jobs");
        let x = prep.corpus.features(cand, prep.corpus.job(&top.job_id)?);
        reference += prep.params.score_flat(&x)?.s_qual;
        aligned += top.s_qual;
    }
    let n = batches.len() as f64;
    Ok((reference / n, aligned / n))
}

/// Aligns (or, in rescore mode, only re-solves the multiplier) for each
/// epsilon and records test metrics under the final score.
pub fn sweep(ctx: &Ctx, args: &SweepArgs) -> Result<()> {
    let epsilons = args.epsilons.clone().unwrap_or_else(|| ctx.cfg.eval.sweep_epsilons.clone());
    if epsilons.is_empty() || epsilons.iter().any(|e| !(0.0..=1.0).contains(e)) {
        return Err(Error::Validation("sweep epsilons must be a non-empty list in [0, 1]".into()));
    }
    let prep = prepare(ctx, args.checkpoint.as_deref())?;
    let mode = ctx.cfg.mode.sweep;
    let dir = ctx.layout.sweep();
    ctx.output_dir(&dir)?;
    let mut metrics = String::from("epsilon,lambda_star,task,K,metric,value,status\n");
    let mut rank1 = String::from("epsilon,lambda_star,rank1_s_qual_reference,rank1_s_qual_aligned,status\n");
    for &epsilon in &epsilons {
        let mut config = AlignConfig { epsilon, ..ctx.cfg.align.clone() };
        if mode == SweepMode::Rescore {
            config.alpha = 0.0;
        }
        let sub = dir.join(epsilon_label(epsilon));
        create_dir(&sub)?;
        let run = align_into(ctx, &prep, &config, &sub)?;
        println!("{}", describe(&run));
        let Ok(policy) = run.policy() else {
            let _ = writeln!(metrics, "{epsilon},,,,,,infeasible");
            let _ = writeln!(rank1, "{epsilon},,,,infeasible");
            continue;
        };
        let scorer = ModelScorer::new(
            &policy.params,
            &prep.corpus,
            ScoreMode::Final { lambda_star: policy.lambda_star, epsilon },
        );
        for row in test_metrics(ctx, &prep.ds, &scorer, &scorer, TaskSel::Both)? {
            let _ = writeln!(
                metrics,
                "{epsilon},{},{},{},{},{},aligned",
                policy.lambda_star,
                row.task.name(),
                row.k,
                row.metric.name(),
                row.value
            );
        }
        let (reference, aligned) = rank1_s_qual(&prep, policy)?;
        let _ = writeln!(rank1, "{epsilon},{},{reference},{aligned},aligned", policy.lambda_star);
    }
    write_text(&dir.join(SWEEP_FILE), &metrics)?;
    write_text(&dir.join(SWEEP_RANK1_FILE), &rank1)?;
    print!("{rank1}");
    Ok(())
}
