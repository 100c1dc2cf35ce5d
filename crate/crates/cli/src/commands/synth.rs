use dualrank::synth::{synthesize_with, write_dataset, RunReport};
use dualrank::Result;

use super::Ctx;

pub fn run(ctx: &Ctx) -> Result<()> {
    let out = synthesize_with(&ctx.cfg.synth, ctx.exec)?;
    let dir = ctx.layout.data();
    ctx.output_dir(&dir)?;
    write_dataset(&dir, &out)?;
    print!("{}", counts_table(&out.report));
    println!("dataset written to {}", dir.display());
    Ok(())
}

pub fn counts_table(r: &RunReport) -> String {
    let rows = [
        ("candidates", r.n_candidates.to_string()),
        ("jobs", r.n_jobs.to_string()),
        ("pairs scored", r.pairs_scored.to_string()),
        ("positive / hard negative / discarded", format!("{} / {} / {}", r.positives, r.hard_negatives, r.discarded)),
        ("candidates retained after k-core", r.kcore_retained.to_string()),
        (
            "preference batches train / validation / test",
            format!("{} / {} / {}", r.pref_batches.train, r.pref_batches.validation, r.pref_batches.test),
        ),
        ("qualification jobs train / test", format!("{} / {}", r.qual_batches.train, r.qual_batches.test)),
    ];
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    rows.iter().map(|(k, v)| format!("{k:<width$}  {v}\n")).collect()
}
