//! Sampled top-K retrieval metrics, evaluators for both tasks, bootstrap
//! intervals and ranking-agreement analysis.
//!
//! NDCG uses binary gains and the `1 / log2(position + 1)` discount with
//! 1-indexed positions.

pub mod agreement;
pub mod scorer;

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::synth::dataset::{PreferenceBatch, QualificationBatch};
use crate::synth::generate::sub_rng;

pub use agreement::{agreement_curves, agreement_csv, softmax_normalize, top1_containment, topk_jaccard, AgreementReport};
pub use scorer::{ModelScorer, OracleScorer, PairScorer, RandomScorer, ScoreMode};

pub const DEFAULT_KS: [usize; 3] = [1, 3, 5];
pub const BOOTSTRAP_RESAMPLES: usize = 1000;

/// Items ordered by score descending, ties by id ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub query_id: String,
    pub items: Vec<(String, f64)>,
    pub positives: BTreeSet<String>,
}

impl RankedList {
    pub fn from_scores(query_id: impl Into<String>, mut scored: Vec<(String, f64)>, positives: BTreeSet<String>) -> Result<Self> {
        let query_id = query_id.into();
        if let Some((id, s)) = scored.iter().find(|(_, s)| !s.is_finite()) {
            return Err(Error::Numerical(format!("non-finite score {s} for item {id:?} of query {query_id:?}")));
        }
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        if scored.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Validation(format!("duplicate item ids in ranking for {query_id:?}")));
        }
        Ok(Self { query_id, items: scored, positives })
    }

    pub fn top_k(&self, k: usize) -> impl Iterator<Item = &str> {
        self.items.iter().take(k).map(|(id, _)| id.as_str())
    }

    pub fn top_k_set(&self, k: usize) -> BTreeSet<&str> {
        self.top_k(k).collect()
    }

    /// 1-indexed rank of `id`.
    pub fn rank_of(&self, id: &str) -> Option<usize> {
        self.items.iter().position(|(i, _)| i == id).map(|p| p + 1)
    }

    fn check(&self, k: usize) -> Result<()> {
        if k == 0 {
            return Err(Error::Validation("k must be >= 1".into()));
        }
        if self.positives.is_empty() {
            return Err(Error::Validation(format!("ranking for {:?} has no positive item", self.query_id)));
        }
        Ok(())
    }
}

pub fn recall_at_k(list: &RankedList, k: usize) -> Result<f64> {
    list.check(k)?;
    let hits = list.top_k(k).filter(|id| list.positives.contains(*id)).count();
    Ok(hits as f64 / list.positives.len() as f64)
}

pub fn ndcg_at_k(list: &RankedList, k: usize) -> Result<f64> {
    list.check(k)?;
    let discount = |pos: usize| 1.0 / ((pos + 1) as f64).log2();
    // Folding from +0.0: an empty f64 sum is -0.0.
    let dcg: f64 = list
        .top_k(k)
        .enumerate()
        .filter(|(_, id)| list.positives.contains(*id))
        .map(|(i, _)| discount(i + 1))
        .fold(0.0, |a, b| a + b);
    let ideal: f64 = (1..=k.min(list.positives.len())).map(discount).sum();
    Ok(dcg / ideal)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalTask {
    Preference,
    Qualification,
}

impl EvalTask {
    pub fn name(self) -> &'static str {
        match self {
            EvalTask::Preference => "preference",
            EvalTask::Qualification => "qualification",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Recall,
    Ndcg,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Recall => "recall",
            Metric::Ndcg => "ndcg",
        }
    }
}

/// Per-batch metric values, kept for resampling.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub task: EvalTask,
    pub ks: Vec<usize>,
    /// Sorted ascending.
    pub batch_ids: Vec<String>,
    /// `recall[k_index][batch_index]`.
    pub recall: Vec<Vec<f64>>,
    pub ndcg: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub task: EvalTask,
    pub k: usize,
    pub metric: Metric,
    pub value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl MetricReport {
    pub fn batch_count(&self) -> usize {
        self.batch_ids.len()
    }

    fn values(&self, metric: Metric, k: usize) -> Option<&[f64]> {
        let i = self.ks.iter().position(|&x| x == k)?;
        Some(match metric {
            Metric::Recall => &self.recall[i],
            Metric::Ndcg => &self.ndcg[i],
        })
    }

    pub fn mean(&self, metric: Metric, k: usize) -> Option<f64> {
        self.values(metric, k).map(|v| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// Mean and percentile-bootstrap 95% interval for every (metric, k).
    /// Batches are resampled jointly across metrics.
    pub fn summary(&self, resamples: usize, seed: u64) -> Vec<MetricRow> {
        let n = self.batch_count();
        let series: Vec<(Metric, usize, &[f64])> = [Metric::Recall, Metric::Ndcg]
            .into_iter()
            .flat_map(|m| self.ks.iter().map(move |&k| (m, k)))
            .map(|(m, k)| (m, k, self.values(m, k).expect("k in report")))
            .collect();
        let mut boot: Vec<Vec<f64>> = vec![Vec::with_capacity(resamples); series.len()];
        let mut rng = sub_rng(seed, "bootstrap", &[]);
        let mut idx = vec![0usize; n];
        for _ in 0..resamples {
            idx.iter_mut().for_each(|i| *i = rng.random_range(0..n));
            for (s, (_, _, v)) in series.iter().enumerate() {
                boot[s].push(idx.iter().map(|&i| v[i]).sum::<f64>() / n as f64);
            }
        }
        series
            .iter()
            .zip(boot)
            .map(|((metric, k, v), mut b)| {
                b.sort_by(f64::total_cmp);
                let (lo, hi) = percentile_interval(&b);
                MetricRow {
                    task: self.task,
                    k: *k,
                    metric: *metric,
                    value: v.iter().sum::<f64>() / n as f64,
                    ci_low: lo,
                    ci_high: hi,
                }
            })
            .collect()
    }
}

fn percentile_interval(sorted: &[f64]) -> (f64, f64) {
    if sorted.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let r = sorted.len();
    let lo = ((0.025 * r as f64).floor() as usize).min(r - 1);
    let hi = (((0.975 * r as f64).ceil() as usize).max(1) - 1).min(r - 1);
    (sorted[lo], sorted[hi])
}

fn evaluate_lists(task: EvalTask, lists: Vec<(String, RankedList)>, ks: &[usize]) -> Result<MetricReport> {
    if lists.is_empty() {
        return Err(Error::Validation(format!("no {} batches to evaluate", task.name())));
    }
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::Validation("ks must be non-empty and >= 1".into()));
    }
    let mut lists = lists;
    lists.sort_by(|a, b| a.0.cmp(&b.0));
    let mut recall = vec![Vec::with_capacity(lists.len()); ks.len()];
    let mut ndcg = vec![Vec::with_capacity(lists.len()); ks.len()];
    for (_, list) in &lists {
        for (i, &k) in ks.iter().enumerate() {
            recall[i].push(recall_at_k(list, k)?);
            ndcg[i].push(ndcg_at_k(list, k)?);
        }
    }
    Ok(MetricReport {
        task,
        ks: ks.to_vec(),
        batch_ids: lists.into_iter().map(|(id, _)| id).collect(),
        recall,
        ndcg,
    })
}

fn check_unique<'a>(ids: impl Iterator<Item = &'a str>, what: &str) -> Result<()> {
    let mut seen = BTreeSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(Error::Validation(format!("{what} repeats item {id:?}")));
        }
    }
    Ok(())
}

/// Ranks each batch's jobs for its candidate.
pub fn evaluate_preference<S: PairScorer + ?Sized>(
    scorer: &S,
    batches: &[&PreferenceBatch],
    ks: &[usize],
    exec: Exec,
) -> Result<MetricReport> {
    let lists = par::map(exec, batches, |b| -> Result<(String, RankedList)> {
        if b.negative_job_ids.is_empty() {
            return Err(Error::Validation(format!("preference batch {} has no negatives", b.batch_id)));
        }
        check_unique(b.items().map(|(j, _)| j), &format!("preference batch {}", b.batch_id))?;
        let scored = b
            .items()
            .map(|(j, _)| Ok((j.to_string(), scorer.score(&b.candidate_id, j)?)))
            .collect::<Result<Vec<_>>>()?;
        let positives = BTreeSet::from([b.positive_job_id.clone()]);
        Ok((b.batch_id.clone(), RankedList::from_scores(&b.candidate_id, scored, positives)?))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    evaluate_lists(EvalTask::Preference, lists, ks)
}

/// Ranks each job's applicants.
pub fn evaluate_qualification<S: PairScorer + ?Sized>(
    scorer: &S,
    batches: &[&QualificationBatch],
    ks: &[usize],
    exec: Exec,
) -> Result<MetricReport> {
    let lists = par::map(exec, batches, |b| -> Result<(String, RankedList)> {
        if b.applicant_ids.len() < 2 || !b.applicant_ids.contains(&b.qualified_id) {
            return Err(Error::Validation(format!(
                "qualification batch for {} must have >= 2 applicants and exactly one qualified among them",
                b.job_id
            )));
        }
        check_unique(b.applicant_ids.iter().map(String::as_str), &format!("qualification batch {}", b.job_id))?;
        let scored = b
            .applicant_ids
            .iter()
            .map(|c| Ok((c.clone(), scorer.score(c, &b.job_id)?)))
            .collect::<Result<Vec<_>>>()?;
        let positives = BTreeSet::from([b.qualified_id.clone()]);
        Ok((b.job_id.clone(), RankedList::from_scores(&b.job_id, scored, positives)?))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    evaluate_lists(EvalTask::Qualification, lists, ks)
}

pub const METRICS_HEADER: &str = "task,K,metric,value,ci_low,ci_high";

pub fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut out = format!("{METRICS_HEADER}\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{},{}", r.task.name(), r.k, r.metric.name(), r.value, r.ci_low, r.ci_high);
    }
    out
}

/// Fixed-width table, one line per (label, task) with recall columns then
/// NDCG columns.
pub fn render_table(rows: &[(String, Vec<MetricRow>)]) -> String {
    let mut ks: Vec<usize> = rows.iter().flat_map(|(_, r)| r.iter().map(|m| m.k)).collect();
    ks.sort_unstable();
    ks.dedup();
    let mut out = String::from("NDCG discount: 1/log2(rank+1); intervals: 95% percentile bootstrap over batches\n");
    let _ = write!(out, "{:<28}{:<15}", "model", "task");
    for metric in ["R", "N"] {
        for k in &ks {
            let _ = write!(out, "{:>9}", format!("{metric}@{k}"));
        }
    }
    out.push('\n');
    for (label, metrics) in rows {
        let mut tasks: Vec<EvalTask> = metrics.iter().map(|m| m.task).collect();
        tasks.dedup();
        for task in tasks {
            let _ = write!(out, "{:<28}{:<15}", label, task.name());
            for metric in [Metric::Recall, Metric::Ndcg] {
                for k in &ks {
                    match metrics.iter().find(|m| m.task == task && m.metric == metric && m.k == *k) {
                        Some(m) => {
                            let _ = write!(out, "{:>9.4}", m.value);
                        }
                        None => {
                            let _ = write!(out, "{:>9}", "-");
                        }
                    }
                }
            }
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::dataset::Split;
    use proptest::prelude::*;

    fn list(order: &[&str], positives: &[&str]) -> RankedList {
        let n = order.len();
        let scored = order.iter().enumerate().map(|(i, id)| (id.to_string(), (n - i) as f64)).collect();
        RankedList::from_scores("q", scored, positives.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    fn items(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("i{i:02}")).collect()
    }

    #[test]
    fn recall_examples() {
        let ids = items(10);
        let ids: Vec<&str> = ids.iter().map(String::as_str).collect();
        assert_eq!(recall_at_k(&list(&ids, &["i00"]), 1).unwrap(), 1.0);
        assert_eq!(recall_at_k(&list(&ids, &["i05"]), 5).unwrap(), 0.0);
        assert_eq!(recall_at_k(&list(&ids, &["i03"]), 5).unwrap(), 1.0);
        assert_eq!(recall_at_k(&list(&ids[..3], &["i02"]), 10).unwrap(), 1.0);
    }

    #[test]
    fn ndcg_examples() {
        let ids = items(10);
        let ids: Vec<&str> = ids.iter().map(String::as_str).collect();
        for k in 1..=10 {
            assert_eq!(ndcg_at_k(&list(&ids, &["i00"]), k).unwrap(), 1.0);
        }
        assert_eq!(ndcg_at_k(&list(&ids, &["i02"]), 5).unwrap(), 0.5);
        assert_eq!(ndcg_at_k(&list(&ids, &["i05"]), 5).unwrap(), 0.0);
        assert!(ndcg_at_k(&list(&ids, &["i05"]), 5).unwrap().is_sign_positive());
    }

    #[test]
    fn protocol_violations() {
        let l = list(&["a", "b"], &[]);
        assert!(recall_at_k(&l, 1).is_err());
        assert!(ndcg_at_k(&l, 1).is_err());
        assert!(recall_at_k(&list(&["a", "b"], &["a"]), 0).is_err());
        let dup = vec![("a".to_string(), 1.0), ("a".to_string(), 0.5)];
        assert!(RankedList::from_scores("q", dup, BTreeSet::new()).is_err());
    }

    #[test]
    fn ties_break_by_id() {
        let scored = vec![("j3".into(), 0.5), ("j1".into(), 0.5), ("j2".into(), 0.9)];
        let l = RankedList::from_scores("q", scored, BTreeSet::from(["j1".to_string()])).unwrap();
        let ids: Vec<_> = l.top_k(3).collect();
        assert_eq!(ids, ["j2", "j1", "j3"]);
    }

    // Brute-force oracle: enumerate positions directly from the score vector.
    fn oracle(scores: &[f64], positive: &[bool], k: usize) -> (f64, f64) {
        let n = scores.len();
        let rank = |i: usize| {
            1 + (0..n)
                .filter(|&j| scores[j] > scores[i] || (scores[j] == scores[i] && j < i))
                .count()
        };
        let pos: Vec<usize> = (0..n).filter(|&i| positive[i]).collect();
        let hits = pos.iter().filter(|&&i| rank(i) <= k).count();
        let mut dcg = 0.0;
        for &i in &pos {
            let r = rank(i);
            if r <= k {
                dcg += 1.0 / (1.0 + r as f64).ln() * std::f64::consts::LN_2;
            }
        }
        let mut idcg = 0.0;
        for r in 1..=pos.len().min(k) {
            idcg += 1.0 / (1.0 + r as f64).ln() * std::f64::consts::LN_2;
        }
        (hits as f64 / pos.len() as f64, dcg / idcg)
    }

    fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<bool>, usize)> {
        (2usize..=10).prop_flat_map(|n| {
            (
                prop::collection::vec(prop_oneof![(0u8..4).prop_map(|v| v as f64), -1.0..1.0f64], n),
                prop::collection::vec(any::<bool>(), n),
                1usize..=12,
            )
                .prop_filter("needs a positive", |(_, p, _)| p.iter().any(|x| *x))
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn metrics_match_brute_force((scores, positive, k) in instance()) {
            let ids = items(scores.len());
            let scored = ids.iter().cloned().zip(scores.iter().copied()).collect();
            let pos = ids.iter().zip(&positive).filter(|(_, p)| **p).map(|(i, _)| i.clone()).collect();
            let l = RankedList::from_scores("q", scored, pos).unwrap();
            let (r, n) = oracle(&scores, &positive, k);
            prop_assert!((recall_at_k(&l, k).unwrap() - r).abs() < 1e-9);
            let nd = ndcg_at_k(&l, k).unwrap();
            prop_assert!((nd - n).abs() < 1e-9);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&nd));
        }
    }

    #[test]
    fn ndcg_is_one_iff_positives_on_top() {
        let ids = items(6);
        let ids: Vec<&str> = ids.iter().map(String::as_str).collect();
        assert_eq!(ndcg_at_k(&list(&ids, &["i00", "i01"]), 4).unwrap(), 1.0);
        assert!(ndcg_at_k(&list(&ids, &["i00", "i02"]), 4).unwrap() < 1.0);
    }

    fn pref_batches(n: usize) -> Vec<PreferenceBatch> {
        (0..n)
            .map(|b| PreferenceBatch {
                batch_id: format!("u{b:05}/test/0"),
                candidate_id: format!("u{b:05}"),
                split: Split::Test,
                positive_job_id: "j0000".into(),
                negative_job_ids: (1..50).map(|j| format!("j{j:04}")).collect(),
            })
            .collect()
    }

    #[test]
    fn oracle_random_and_anti_oracle() {
        let batches = pref_batches(400);
        let refs: Vec<&PreferenceBatch> = batches.iter().collect();
        let oracle = OracleScorer::preference(refs.iter().copied());
        let r = evaluate_preference(&oracle, &refs, &DEFAULT_KS, Exec::default()).unwrap();
        for k in DEFAULT_KS {
            assert_eq!(r.mean(Metric::Recall, k), Some(1.0));
            assert_eq!(r.mean(Metric::Ndcg, k), Some(1.0));
        }
        let anti = evaluate_preference(&oracle.inverted(), &refs, &DEFAULT_KS, Exec::default()).unwrap();
        assert_eq!(anti.mean(Metric::Recall, 5), Some(0.0));
        let rand = evaluate_preference(&RandomScorer::new(3), &refs, &[1], Exec::default()).unwrap();
        let row = &rand.summary(BOOTSTRAP_RESAMPLES, 1)[0];
        assert!(row.ci_low <= 0.02 + 0.02 && row.ci_high >= 0.02 - 0.01, "{row:?}");
        assert!((row.value - 0.02).abs() < 0.02);
    }

    #[test]
    fn two_applicant_random_recall_is_half() {
        let batches: Vec<QualificationBatch> = (0..4000)
            .map(|b| QualificationBatch {
                job_id: format!("j{b:04}"),
                split: Split::Test,
                applicant_ids: vec!["u00000".into(), "u00001".into()],
                qualified_id: "u00000".into(),
            })
            .collect();
        let refs: Vec<&QualificationBatch> = batches.iter().collect();
        let r = evaluate_qualification(&RandomScorer::new(5), &refs, &[1, 5], Exec::default()).unwrap();
        assert!((r.mean(Metric::Recall, 1).unwrap() - 0.5).abs() < 0.03);
        assert_eq!(r.mean(Metric::Recall, 5), Some(1.0));
        let oracle = OracleScorer::qualification(refs.iter().copied());
        let o = evaluate_qualification(&oracle, &refs, &[1, 3], Exec::default()).unwrap();
        assert_eq!(o.mean(Metric::Ndcg, 1), Some(1.0));
    }

    #[test]
    fn malformed_qualification_batch_rejected() {
        let b = QualificationBatch {
            job_id: "j0".into(),
            split: Split::Test,
            applicant_ids: vec!["u1".into(), "u2".into()],
            qualified_id: "u9".into(),
        };
        assert!(evaluate_qualification(&RandomScorer::new(0), &[&b], &[1], Exec::default()).is_err());
    }

    #[test]
    fn summary_and_csv() {
        let batches = pref_batches(30);
        let refs: Vec<&PreferenceBatch> = batches.iter().collect();
        let r = evaluate_preference(&RandomScorer::new(1), &refs, &DEFAULT_KS, Exec::default()).unwrap();
        let rows = r.summary(200, 9);
        assert_eq!(rows.len(), 6);
        for row in &rows {
            assert!(row.ci_low <= row.value + 1e-12 && row.value <= row.ci_high + 1e-12);
        }
        assert_eq!(rows, r.summary(200, 9));
        let csv = metrics_csv(&rows);
        assert!(csv.starts_with("task,K,metric,value,ci_low,ci_high\npreference,1,recall,"));
        assert_eq!(csv.lines().count(), 7);
        let table = render_table(&[("random".into(), rows)]);
        assert!(table.contains("R@1") && table.contains("N@5"));
    }

    #[test]
    fn parallel_matches_sequential() {
        let batches = pref_batches(100);
        let refs: Vec<&PreferenceBatch> = batches.iter().collect();
        let s = RandomScorer::new(4);
        let a = evaluate_preference(&s, &refs, &DEFAULT_KS, Exec::Sequential).unwrap();
        let b = evaluate_preference(&s, &refs, &DEFAULT_KS, Exec::Parallel).unwrap();
        assert_eq!(a, b);
    }
}
