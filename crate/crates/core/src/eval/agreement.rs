//! Top-K agreement between two preference rankers.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Exec};

use super::{PairScorer, RankedList};

/// `exp(s - max) / sum exp(s - max)`.
pub fn softmax_normalize(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

fn same_universe(a: &RankedList, b: &RankedList) -> Result<()> {
    let ua: BTreeSet<&str> = a.items.iter().map(|(i, _)| i.as_str()).collect();
    let ub: BTreeSet<&str> = b.items.iter().map(|(i, _)| i.as_str()).collect();
    if ua != ub {
        return Err(Error::Validation(format!(
            "rankings for {:?} and {:?} cover different items",
            a.query_id, b.query_id
        )));
    }
    Ok(())
}

pub fn topk_jaccard(a: &RankedList, b: &RankedList, k: usize) -> Result<f64> {
    same_universe(a, b)?;
    if k == 0 {
        return Err(Error::Validation("k must be >= 1".into()));
    }
    let sa = a.top_k_set(k);
    let sb = b.top_k_set(k);
    let union = sa.union(&sb).count();
    if union == 0 {
        return Ok(1.0);
    }
    Ok(sa.intersection(&sb).count() as f64 / union as f64)
}

/// Whether `source`'s rank-1 item is in `target`'s top-k.
pub fn top1_containment(source: &RankedList, target: &RankedList, k: usize) -> Result<bool> {
    same_universe(source, target)?;
    if k == 0 {
        return Err(Error::Validation("k must be >= 1".into()));
    }
    Ok(match source.items.first() {
        Some((top, _)) => target.top_k(k).any(|id| id == top),
        None => false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub ks: Vec<usize>,
    pub jaccard_mean: Vec<f64>,
    pub contain_a_in_b: Vec<f64>,
    pub contain_b_in_a: Vec<f64>,
    pub users: usize,
}

/// Softmax-normalized ranking of every job for one user.
pub fn user_ranking<S: PairScorer + ?Sized>(scorer: &S, user: &str, jobs: &[String]) -> Result<RankedList> {
    let raw = jobs.iter().map(|j| scorer.score(user, j)).collect::<Result<Vec<_>>>()?;
    let probs = softmax_normalize(&raw);
    RankedList::from_scores(user, jobs.iter().cloned().zip(probs).collect(), BTreeSet::new())
}

pub fn agreement_curves<A: PairScorer + ?Sized, B: PairScorer + ?Sized>(
    a: &A,
    b: &B,
    users: &[String],
    jobs: &[String],
    ks: &[usize],
    exec: Exec,
) -> Result<AgreementReport> {
    if users.is_empty() || jobs.is_empty() || ks.is_empty() {
        return Err(Error::Validation("agreement needs users, jobs and ks".into()));
    }
    let per_user = par::map(exec, users, |u| -> Result<Vec<(f64, bool, bool)>> {
        let ra = user_ranking(a, u, jobs)?;
        let rb = user_ranking(b, u, jobs)?;
        ks.iter()
            .map(|&k| Ok((topk_jaccard(&ra, &rb, k)?, top1_containment(&ra, &rb, k)?, top1_containment(&rb, &ra, k)?)))
            .collect()
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let n = users.len() as f64;
    let mut report = AgreementReport {
        ks: ks.to_vec(),
        jaccard_mean: vec![0.0; ks.len()],
        contain_a_in_b: vec![0.0; ks.len()],
        contain_b_in_a: vec![0.0; ks.len()],
        users: users.len(),
    };
    for row in &per_user {
        for (i, (j, ab, ba)) in row.iter().enumerate() {
            report.jaccard_mean[i] += j;
            report.contain_a_in_b[i] += f64::from(u8::from(*ab));
            report.contain_b_in_a[i] += f64::from(u8::from(*ba));
        }
    }
    for v in [&mut report.jaccard_mean, &mut report.contain_a_in_b, &mut report.contain_b_in_a] {
        v.iter_mut().for_each(|x| *x /= n);
    }
    Ok(report)
}

pub const AGREEMENT_HEADER: &str = "k,jaccard_mean,contain_a_in_b,contain_b_in_a";

pub fn agreement_csv(report: &AgreementReport) -> String {
    let mut out = format!("{AGREEMENT_HEADER}\n");
    for i in 0..report.ks.len() {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            report.ks[i], report.jaccard_mean[i], report.contain_a_in_b[i], report.contain_b_in_a[i]
        );
    }
    out
}
