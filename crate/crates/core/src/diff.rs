//! Three-way token diff F1.
//!
//! A token of the original report counts as removed by a variant when it is
//! left out of a longest common subsequence between the two. Among all longest
//! alignments the one matching the leftmost original tokens wins, and for each
//! of those the leftmost variant token. Tokens the variant inserts are ignored.
//!
//! Against a ground-truth variant: TP = removed by both, FP = removed only by
//! the method, FN = removed only by the ground truth.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::ReportRecord;
use crate::report::Report;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffScore {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl DiffScore {
    /// Derives the ratios; an empty denominator scores 1.0.
    pub fn from_counts(tp: u64, fp: u64, fn_: u64) -> Self {
        let ratio = |num: u64, den: u64| if den == 0 { 1.0 } else { num as f64 / den as f64 };
        DiffScore {
            tp,
            fp,
            fn_,
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, tp + fn_),
            f1: ratio(2 * tp, 2 * tp + fp + fn_),
        }
    }
}

/// Lowercased token texts of a report, the unit all three sides are compared in.
pub fn normalized_tokens(text: &str) -> Vec<String> {
    Report::new("", text)
        .tokens()
        .map(|t| t.text.to_lowercase())
        .collect()
}

/// Matched `(original, variant)` index pairs of the leftmost longest common subsequence.
pub fn lcs_alignment<T: PartialEq>(original: &[T], variant: &[T]) -> Vec<(usize, usize)> {
    let (n, m) = (original.len(), variant.len());
    // suffix[i][j] = LCS length of original[i..], variant[j..]
    let w = m + 1;
    let mut suffix = vec![0u32; (n + 1) * w];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            suffix[i * w + j] = if original[i] == variant[j] {
                suffix[(i + 1) * w + j + 1] + 1
            } else {
                suffix[(i + 1) * w + j].max(suffix[i * w + j + 1])
            };
        }
    }

    let mut pairs = Vec::with_capacity(suffix[0] as usize);
    let (mut i, mut j) = (0, 0);
    while i < n && j < m {
        let need = suffix[i * w + j];
        if need == 0 {
            break;
        }
        // smallest original index that can start an optimal continuation,
        // paired with the smallest variant index that keeps it optimal
        let next = (i..n).find_map(|a| {
            (j..m)
                .find(|&b| original[a] == variant[b] && suffix[(a + 1) * w + b + 1] + 1 == need)
                .map(|b| (a, b))
        });
        let (a, b) = next.expect("an optimal match exists while lcs > 0");
        pairs.push((a, b));
        i = a + 1;
        j = b + 1;
    }
    pairs
}

/// Indices of original tokens not matched by the variant.
pub fn removed_set<T: PartialEq>(original: &[T], variant: &[T]) -> BTreeSet<usize> {
    let matched: BTreeSet<usize> = lcs_alignment(original, variant)
        .into_iter()
        .map(|(a, _)| a)
        .collect();
    (0..original.len()).filter(|i| !matched.contains(i)).collect()
}

pub fn score<T: PartialEq>(original: &[T], modified: &[T], ground_truth: &[T]) -> DiffScore {
    let m = removed_set(original, modified);
    let g = removed_set(original, ground_truth);
    let tp = m.intersection(&g).count() as u64;
    let fp = m.difference(&g).count() as u64;
    let fn_ = g.difference(&m).count() as u64;
    DiffScore::from_counts(tp, fp, fn_)
}

/// Scores three report texts after shared tokenization and lowercasing.
pub fn score_texts(original: &str, modified: &str, ground_truth: &str) -> DiffScore {
    score(
        &normalized_tokens(original),
        &normalized_tokens(modified),
        &normalized_tokens(ground_truth),
    )
}

#[derive(Debug, Error)]
pub enum DiffError {
    #[error("ids not present in all three corpora: {0:?}")]
    IdMismatch(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerReportScore {
    pub id: String,
    #[serde(flatten)]
    pub score: DiffScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusScore {
    /// Ratios over summed TP/FP/FN.
    pub micro: DiffScore,
    /// Unweighted mean of per-report F1.
    pub macro_f1: f64,
    pub reports: usize,
    pub per_report: Vec<PerReportScore>,
    pub note: String,
}

pub const INSERTION_NOTE: &str =
    "tokens inserted by the modified or ground-truth report are not counted";

/// Scores aligned corpora keyed by id. Every id must appear in all three.
pub fn score_corpus(
    original: &[ReportRecord],
    modified: &[ReportRecord],
    ground_truth: &[ReportRecord],
) -> Result<CorpusScore, DiffError> {
    let by_id = |recs: &[ReportRecord]| -> BTreeMap<String, String> {
        recs.iter().map(|r| (r.id.clone(), r.text.clone())).collect()
    };
    let (mo, gt) = (by_id(modified), by_id(ground_truth));
    let orig_ids: BTreeSet<&String> = original.iter().map(|r| &r.id).collect();
    let mut bad: BTreeSet<String> = BTreeSet::new();
    for r in original {
        if !mo.contains_key(&r.id) || !gt.contains_key(&r.id) {
            bad.insert(r.id.clone());
        }
    }
    for id in mo.keys().chain(gt.keys()) {
        if !orig_ids.contains(id) {
            bad.insert(id.clone());
        }
    }
    if !bad.is_empty() {
        return Err(DiffError::IdMismatch(bad.into_iter().collect()));
    }

    use rayon::prelude::*;
    let per_report: Vec<PerReportScore> = original
        .par_iter()
        .map(|r| PerReportScore {
            id: r.id.clone(),
            score: score_texts(&r.text, &mo[&r.id], &gt[&r.id]),
        })
        .collect();
    let (tp, fp, fn_) = per_report.iter().fold((0, 0, 0), |acc, p| {
        (acc.0 + p.score.tp, acc.1 + p.score.fp, acc.2 + p.score.fn_)
    });
    let macro_f1 = if per_report.is_empty() {
        1.0
    } else {
        per_report.iter().map(|p| p.score.f1).sum::<f64>() / per_report.len() as f64
    };
    Ok(CorpusScore {
        micro: DiffScore::from_counts(tp, fp, fn_),
        macro_f1,
        reports: per_report.len(),
        per_report,
        note: INSERTION_NOTE.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn identity_removes_nothing() {
        assert!(removed_set(&toks("a b c"), &toks("a b c")).is_empty());
    }

    #[test]
    fn single_deletion() {
        assert_eq!(removed_set(&toks("a b c"), &toks("a c")), BTreeSet::from([1]));
    }

    #[test]
    fn leftmost_tie_break() {
        assert_eq!(removed_set(&toks("a b a"), &toks("a")), BTreeSet::from([1, 2]));
    }

    #[test]
    fn partial_overlap_scores_half() {
        let s = score(&toks("a b c d"), &toks("a c"), &toks("a d"));
        assert_eq!((s.tp, s.fp, s.fn_), (1, 1, 1));
        assert_eq!(s.f1, 0.5);
    }

    #[test]
    fn nothing_removed_anywhere_is_perfect() {
        let s = score(&toks("a b"), &toks("a b"), &toks("a b"));
        assert_eq!(s.f1, 1.0);
        assert_eq!(s.precision, 1.0);
        assert_eq!(s.recall, 1.0);
    }

    #[test]
    fn insertions_ignored() {
        let s = score(&toks("a b c"), &toks("x a c y"), &toks("a c"));
        assert_eq!((s.tp, s.fp, s.fn_), (1, 0, 0));
    }

    #[test]
    fn case_is_normalized() {
        let s = score_texts("Heart is STABLE.", "heart is.", "Heart is.");
        assert_eq!(s.f1, 1.0);
        assert_eq!(s.tp, 1);
    }

    #[test]
    fn corpus_macro_and_micro() {
        let o = [ReportRecord::new("1", "a b"), ReportRecord::new("2", "c d")];
        let m = [ReportRecord::new("1", "a"), ReportRecord::new("2", "c")];
        let g = [ReportRecord::new("1", "a"), ReportRecord::new("2", "d")];
        let s = score_corpus(&o, &m, &g).unwrap();
        assert_eq!(s.macro_f1, 0.5);
        assert_eq!((s.micro.tp, s.micro.fp, s.micro.fn_), (1, 1, 1));
    }

    #[test]
    fn corpus_id_mismatch() {
        let o = [ReportRecord::new("1", "a")];
        let m = [ReportRecord::new("2", "a")];
        let g = [ReportRecord::new("1", "a")];
        match score_corpus(&o, &m, &g) {
            Err(DiffError::IdMismatch(ids)) => assert_eq!(ids, ["1", "2"]),
            other => panic!("{other:?}"),
        }
    }
}
