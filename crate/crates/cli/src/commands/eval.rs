use std::collections::BTreeSet;
use std::path::PathBuf;

use clap::ValueEnum;
use dualrank::eval::{
    agreement_csv, agreement_curves, evaluate_preference, evaluate_qualification, metrics_csv, render_table, MetricRow,
    ModelScorer, OracleScorer, PairScorer, RandomScorer, ScoreMode,
};
use dualrank::io::write_text;
use dualrank::model::checkpoint::Stage;
use dualrank::model::{Checkpoint, Corpus, ModelParams, Task};
use dualrank::synth::{Dataset, Split};
use dualrank::{Error, Result};

use super::Ctx;
use crate::layout::{parent_name, AGREEMENT_FILE, METRICS_FILE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Mode {
    /// A single task head (the qualification head, or the preference head for a pref-only model).
    #[default]
    Head,
    /// Aligned final score; needs an aligned checkpoint.
    Final,
    /// Ground-truth labels, an upper bound.
    Oracle,
    /// Seeded uniform scores, a lower bound.
    Random,
}

impl Mode {
    fn name(self) -> &'static str {
        match self {
            Mode::Head => "head",
            Mode::Final => "final",
            Mode::Oracle => "oracle",
            Mode::Random => "random",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum TaskSel {
    #[default]
    Both,
    Preference,
    Qualification,
}

impl TaskSel {
    fn preference(self) -> bool {
        self != TaskSel::Qualification
    }

    fn qualification(self) -> bool {
        self != TaskSel::Preference
    }
}

#[derive(Debug, Clone, Default)]
pub struct EvalArgs {
    pub checkpoint: Option<PathBuf>,
    pub task: TaskSel,
    pub mode: Mode,
    pub name: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct CompareArgs {
    pub a: PathBuf,
    pub b: PathBuf,
    pub ks: Option<Vec<usize>>,
    pub name: Option<String>,
}

/// Scorer used when a checkpoint stands in for "the model's ranking".
pub fn default_mode(ckpt: &Checkpoint) -> ScoreMode {
    match &ckpt.alignment {
        Some(a) => ScoreMode::Final { lambda_star: a.lambda_star, epsilon: a.epsilon },
        None => ScoreMode::Head(Task::Pref),
    }
}

/// The head that ranks applicants. A pref-only model has no trained
/// qualification head, so its preference head stands in.
pub fn qual_head(ckpt: &Checkpoint) -> Task {
    if ckpt.pref_only {
        Task::Pref
    } else {
        Task::Qual
    }
}

/// Test-split metrics for the selected tasks, with bootstrap intervals.
pub fn test_metrics(
    ctx: &Ctx,
    ds: &Dataset,
    pref: &dyn PairScorer,
    qual: &dyn PairScorer,
    task: TaskSel,
) -> Result<Vec<MetricRow>> {
    let e = &ctx.cfg.eval;
    let mut rows = Vec::new();
    if task.preference() {
        let report = evaluate_preference(pref, &ds.pref_split(Split::Test), &e.ks, ctx.exec)?;
        rows.extend(report.summary(e.bootstrap_resamples, e.seed));
    }
    if task.qualification() {
        let report = evaluate_qualification(qual, &ds.qual_split(Split::Test), &e.ks, ctx.exec)?;
        rows.extend(report.summary(e.bootstrap_resamples, e.seed));
    }
    Ok(rows)
}

fn model_scorers<'a>(
    ckpt: &Checkpoint,
    params: &'a ModelParams,
    corpus: &'a Corpus,
    mode: Mode,
) -> Result<(ModelScorer<'a>, ModelScorer<'a>)> {
    match mode {
        Mode::Head => Ok((
            ModelScorer::new(params, corpus, ScoreMode::Head(Task::Pref)),
            ModelScorer::new(params, corpus, ScoreMode::Head(qual_head(ckpt))),
        )),
        Mode::Final => {
            if ckpt.stage != Stage::Aligned {
                return Err(Error::Validation("--mode final needs an aligned checkpoint".into()));
            }
            let m = default_mode(ckpt);
            Ok((ModelScorer::new(params, corpus, m), ModelScorer::new(params, corpus, m)))
        }
        Mode::Oracle | Mode::Random => unreachable!("not a model mode"),
    }
}

pub fn run(ctx: &Ctx, args: &EvalArgs) -> Result<()> {
    let (ds, corpus) = ctx.load_dataset()?;
    let (label, rows) = match args.mode {
        Mode::Head | Mode::Final => {
            let path = args.checkpoint.clone().unwrap_or_else(|| ctx.layout.stage1_checkpoint());
            let (ckpt, params) = ctx.load_checkpoint(&path)?;
            let (pref, qual) = model_scorers(&ckpt, &params, &corpus, args.mode)?;
            let label = format!("{}-{}", parent_name(&path), args.mode.name());
            (label, test_metrics(ctx, &ds, &pref, &qual, args.task)?)
        }
        Mode::Oracle => {
            let pref = OracleScorer::preference(ds.pref_split(Split::Test));
            let qual = OracleScorer::qualification(ds.qual_split(Split::Test));
            ("oracle".to_string(), test_metrics(ctx, &ds, &pref, &qual, args.task)?)
        }
        Mode::Random => {
            let s = RandomScorer::new(ctx.cfg.eval.seed);
            ("random".to_string(), test_metrics(ctx, &ds, &s, &s, args.task)?)
        }
    };
    let name = args.name.clone().unwrap_or(label);
    let table = render_table(&[(name.clone(), rows.clone())]);
    let dir = ctx.layout.eval(&name);
    ctx.output_dir(&dir)?;
    write_text(&dir.join(METRICS_FILE), &metrics_csv(&rows))?;
    write_text(&dir.join("table.txt"), &table)?;
    print!("{table}");
    Ok(())
}

pub fn compare(ctx: &Ctx, args: &CompareArgs) -> Result<()> {
    let ks = args.ks.clone().unwrap_or_else(|| ctx.cfg.eval.agreement_ks.clone());
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::Validation("--ks must be a non-empty list of K >= 1".into()));
    }
    let (ds, corpus) = ctx.load_dataset()?;
    let (ca, pa) = ctx.load_checkpoint(&args.a)?;
    let (cb, pb) = ctx.load_checkpoint(&args.b)?;
    let sa = ModelScorer::new(&pa, &corpus, default_mode(&ca));
    let sb = ModelScorer::new(&pb, &corpus, default_mode(&cb));
    let users: Vec<String> = ds
        .pref_split(Split::Test)
        .iter()
        .map(|b| b.candidate_id.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let jobs: Vec<String> = ds.jobs.iter().map(|j| j.id_i.clone()).collect();
    let report = agreement_curves(&sa, &sb, &users, &jobs, &ks, ctx.exec)?;
    let name = args
        .name
        .clone()
        .unwrap_or_else(|| format!("{}-vs-{}", parent_name(&args.a), parent_name(&args.b)));
    let dir = ctx.layout.compare(&name);
    ctx.output_dir(&dir)?;
    write_text(&dir.join(AGREEMENT_FILE), &agreement_csv(&report))?;
    println!("{name}: {} users, {} jobs", report.users, jobs.len());
    println!("{:>4} {:>9} {:>9} {:>9}", "K", "jaccard", "a1-in-b", "b1-in-a");
    for (i, k) in report.ks.iter().enumerate() {
        println!(
            "{k:>4} {:>9.4} {:>9.4} {:>9.4}",
            report.jaccard_mean[i], report.contain_a_in_b[i], report.contain_b_in_a[i]
        );
    }
    Ok(())
}
