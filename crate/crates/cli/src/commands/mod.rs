pub mod align;
pub mod eval;
pub mod synth;
pub mod train;

use std::cell::OnceCell;
use std::path::Path;

use dualrank::io::Strictness;
use dualrank::model::{Checkpoint, Corpus, ModelParams};
use dualrank::par::Exec;
use dualrank::synth::Dataset;
use dualrank::{Error, Result};

use crate::config::RunConfig;
use crate::layout::{create_dir, Layout, OutputLock};

pub struct Ctx {
    pub cfg: RunConfig,
    pub layout: Layout,
    pub exec: Exec,
    lock: OnceCell<OutputLock>,
}

impl Ctx {
    pub fn new(cfg: RunConfig, exec: Exec) -> Self {
        let layout = Layout::new(cfg.output_dir());
        Self { cfg, layout, exec, lock: OnceCell::new() }
    }

    fn strictness(&self) -> Strictness {
        if self.cfg.mode.lenient {
            Strictness::Lenient
        } else {
            Strictness::Strict
        }
    }

    /// Takes the output-directory lock (once per process). Call after all
    /// inputs have been validated and before the first write.
    pub fn begin_writes(&self) -> Result<()> {
        if self.lock.get().is_none() {
            let lock = OutputLock::acquire(self.layout.root())?;
            let _ = self.lock.set(lock);
        }
        Ok(())
    }

    /// Creates `dir` (after taking the lock) and records the resolved config in it.
    pub fn output_dir(&self, dir: &Path) -> Result<()> {
        self.begin_writes()?;
        create_dir(dir)?;
        dualrank::io::write_text(&dir.join("config.toml"), &self.cfg.to_toml()?)
    }

    pub fn load_dataset(&self) -> Result<(Dataset, Corpus)> {
        let dir = self.layout.data();
        if !dir.is_dir() {
            return Err(Error::Validation(format!(
                "no dataset at {} (run `dualrank synth` first)",
                dir.display()
            )));
        }
        let ds = Dataset::load(&dir, self.strictness())?;
        let expected = self.cfg.synth.features.hash();
        if ds.report.feature_hash != expected {
            return Err(Error::Config(format!(
                "dataset feature hash {} does not match the configured features ({expected})",
                ds.report.feature_hash
            )));
        }
        let corpus = Corpus::from_dataset(&self.cfg.synth.features, &ds)?;
        Ok((ds, corpus))
    }

    pub fn load_checkpoint(&self, path: &Path) -> Result<(Checkpoint, ModelParams)> {
        if !path.is_file() {
            return Err(Error::Validation(format!("no checkpoint at {}", path.display())));
        }
        let ckpt = Checkpoint::load(path)?;
        ckpt.ensure_features(&self.cfg.synth.features)?;
        let params = ckpt.params()?;
        Ok((ckpt, params))
    }
}

/// Runs the whole pipeline into one output directory.
pub fn pipeline(ctx: &Ctx) -> Result<()> {
    ctx.begin_writes()?;
    synth::run(ctx)?;
    train::run(ctx, &train::TrainArgs::default())?;
    train::run(ctx, &train::TrainArgs { pref_only: true, ..Default::default() })?;
    let stage1 = ctx.layout.stage1_checkpoint();
    let pref_only = ctx.layout.stage1(true).join(crate::layout::CHECKPOINT_FILE);
    let aligned_dir = align::run(ctx, &align::AlignArgs::default())?;
    let aligned = aligned_dir.join(crate::layout::CHECKPOINT_FILE);
    for (checkpoint, mode) in [
        (Some(stage1.clone()), eval::Mode::Head),
        (Some(pref_only.clone()), eval::Mode::Head),
        (Some(aligned.clone()), eval::Mode::Final),
        (Some(aligned.clone()), eval::Mode::Head),
        (None, eval::Mode::Oracle),
    ] {
        eval::run(ctx, &eval::EvalArgs { checkpoint, mode, ..Default::default() })?;
    }
    align::sweep(ctx, &align::SweepArgs::default())?;
    eval::compare(ctx, &eval::CompareArgs { a: stage1.clone(), b: pref_only, ..Default::default() })?;
    eval::compare(ctx, &eval::CompareArgs { a: stage1, b: aligned, ..Default::default() })?;
    Ok(())
}
