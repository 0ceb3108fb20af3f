//! Keyword frequency tables, before/after comparisons, and the
//! patient-grouped train/test split.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::ReportRecord;
use crate::detect::Detector;
use crate::lexicon::HEADS;
use crate::report::{Report, TokenKind};

/// Row order of before/after tables.
pub const BEFORE_AFTER_ORDER: [&str; 18] = [
    "change",
    "unchanged",
    "prior",
    "stable",
    "interval",
    "previous",
    "again",
    "increased",
    "improve",
    "remain",
    "worse",
    "persistent",
    "removal",
    "decreased",
    "similar",
    "earlier",
    "recurrence",
    "redemonstrate",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CountMode {
    /// Keyword hits as the detector sees them, after the `change` qualifier rule.
    #[default]
    Detector,
    /// Every surface variant, qualifier rule ignored.
    Raw,
}

/// Instance count per head for one report, indexed like [`HEADS`].
pub fn report_counts(report: &Report, detector: &Detector, mode: CountMode) -> [u64; 18] {
    let mut counts = [0u64; 18];
    let index = |head: &str| HEADS.iter().position(|h| *h == head);
    for sentence in &report.sentences {
        match mode {
            CountMode::Detector => {
                for (_, head) in detector.keyword_hits(sentence) {
                    if let Some(i) = index(head) {
                        counts[i] += 1;
                    }
                }
            }
            CountMode::Raw => {
                for tok in sentence.tokens.iter().filter(|t| t.kind == TokenKind::Word) {
                    if let Some(i) = detector.lexicon().head_of(&tok.text).and_then(|e| index(&e.head)) {
                        counts[i] += 1;
                    }
                }
            }
        }
    }
    counts
}

/// Mergeable keyword counts over a corpus.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct KeywordTable {
    pub reports_read: u64,
    pub instances: [u64; 18],
    pub reports_with: [u64; 18],
    /// Reports with at least one hit of any keyword.
    pub reports_with_any: u64,
}

impl KeywordTable {
    pub fn add(&mut self, counts: &[u64; 18]) {
        self.reports_read += 1;
        for i in 0..18 {
            self.instances[i] += counts[i];
            self.reports_with[i] += u64::from(counts[i] > 0);
        }
        self.reports_with_any += u64::from(counts.iter().any(|&c| c > 0));
    }

    pub fn merge(mut self, other: &KeywordTable) -> KeywordTable {
        self.reports_read += other.reports_read;
        for i in 0..18 {
            self.instances[i] += other.instances[i];
            self.reports_with[i] += other.reports_with[i];
        }
        self.reports_with_any += other.reports_with_any;
        self
    }

    pub fn total_instances(&self) -> u64 {
        self.instances.iter().sum()
    }

    pub fn instances_of(&self, head: &str) -> u64 {
        HEADS.iter().position(|h| *h == head).map_or(0, |i| self.instances[i])
    }

    /// Rows with relative report frequency: a Total row, then heads by
    /// descending report count. `denominator` defaults to the reports read.
    pub fn rows(&self, denominator: Option<u64>) -> Vec<KeywordRow> {
        let den = denominator.unwrap_or(self.reports_read);
        let mut rows: Vec<KeywordRow> = HEADS
            .iter()
            .enumerate()
            .map(|(i, h)| KeywordRow {
                keyword: h.to_string(),
                instance_count: self.instances[i],
                report_count: self.reports_with[i],
                relative: relative(self.reports_with[i], den),
            })
            .collect();
        rows.sort_by(|a, b| b.report_count.cmp(&a.report_count));
        rows.insert(
            0,
            KeywordRow {
                keyword: "Total".to_string(),
                instance_count: self.total_instances(),
                report_count: self.reports_with_any,
                relative: relative(self.reports_with_any, den),
            },
        );
        rows
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordRow {
    pub keyword: String,
    pub instance_count: u64,
    pub report_count: u64,
    /// `report_count / denominator`, rounded half-up to 3 decimals; null for a zero denominator.
    pub relative: Option<f64>,
}

/// `num / den` rounded half-up to 3 decimals, in exact integer arithmetic.
pub fn relative(num: u64, den: u64) -> Option<f64> {
    if den == 0 {
        return None;
    }
    let (num, den) = (num as u128, den as u128);
    let thousandths = (2 * 1000 * num + den) / (2 * den);
    Some(thousandths as f64 / 1000.0)
}

pub fn keyword_counts(records: &[ReportRecord], detector: &Detector, mode: CountMode) -> KeywordTable {
    records
        .par_iter()
        .fold(KeywordTable::default, |mut t, r| {
            t.add(&report_counts(&r.to_report(), detector, mode));
            t
        })
        .reduce(KeywordTable::default, |a, b| a.merge(&b))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeforeAfterRow {
    pub keyword: String,
    pub before: u64,
    pub after: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeforeAfter {
    pub mode: CountMode,
    pub total_before: u64,
    pub total_after: u64,
    /// `1 - after/before`; null when nothing was counted before.
    pub reduction: Option<f64>,
    pub rows: Vec<BeforeAfterRow>,
}

pub fn before_after(
    before: &[ReportRecord],
    after: &[ReportRecord],
    detector: &Detector,
    mode: CountMode,
) -> BeforeAfter {
    let (a, b) = rayon::join(
        || keyword_counts(before, detector, mode),
        || keyword_counts(after, detector, mode),
    );
    let (total_before, total_after) = (a.total_instances(), b.total_instances());
    BeforeAfter {
        mode,
        total_before,
        total_after,
        reduction: (total_before > 0).then(|| 1.0 - total_after as f64 / total_before as f64),
        rows: BEFORE_AFTER_ORDER
            .iter()
            .map(|h| BeforeAfterRow {
                keyword: h.to_string(),
                before: a.instances_of(h),
                after: b.instances_of(h),
            })
            .collect(),
    }
}

fn capitalized(s: &str) -> String {
    let mut c = s.chars();
    c.next()
        .map(|f| f.to_uppercase().chain(c).collect())
        .unwrap_or_default()
}

pub fn format_keyword_rows(rows: &[KeywordRow]) -> String {
    let mut out = format!("{:<15} {:>10} {:>10} {:>8}\n", "Keyword", "Instances", "Reports", "Relative");
    for r in rows {
        let rel = r.relative.map_or("-".to_string(), |x| format!("{x:.3}"));
        let _ = writeln!(
            out,
            "{:<15} {:>10} {:>10} {:>8}",
            capitalized(&r.keyword),
            r.instance_count,
            r.report_count,
            rel
        );
    }
    out
}

pub fn format_before_after(t: &BeforeAfter) -> String {
    let mut out = format!("{:<15} {:>10} {:>10}\n", "Keyword", "Before", "After");
    let _ = writeln!(out, "{:<15} {:>10} {:>10}", "Total", t.total_before, t.total_after);
    for r in &t.rows {
        let _ = writeln!(out, "{:<15} {:>10} {:>10}", capitalized(&r.keyword), r.before, r.after);
    }
    match t.reduction {
        Some(x) => {
            let _ = writeln!(out, "reduction: {x:.4}");
        }
        None => out.push_str("reduction: n/a\n"),
    }
    out
}

#[derive(Debug, Error)]
pub enum SplitError {
    #[error("train fraction must lie strictly between 0 and 1, got {0}")]
    InvalidFraction(f64),
}

/// Shuffled train/test split keeping each patient's records on one side.
///
/// Records without a patient id form their own group. Groups are shuffled
/// with `seed`, then each joins train while it still fits under
/// `round(train_fraction * n)`, otherwise test.
pub fn split(
    records: &[ReportRecord],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<ReportRecord>, Vec<ReportRecord>), SplitError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(SplitError::InvalidFraction(train_fraction));
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut by_patient: HashMap<&str, usize> = HashMap::new();
    for (i, r) in records.iter().enumerate() {
        match r.patient_id.as_deref() {
            Some(p) => {
                let g = *by_patient.entry(p).or_insert_with(|| {
                    groups.push(Vec::new());
                    groups.len() - 1
                });
                groups[g].push(i);
            }
            None => groups.push(vec![i]),
        }
    }
    groups.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let target = (train_fraction * records.len() as f64).round() as usize;
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for g in groups {
        let side = if train.len() + g.len() <= target { &mut train } else { &mut test };
        side.extend(g.into_iter().map(|i| records[i].clone()));
    }
    Ok((train, test))
}

/// Patient ids present on both sides.
pub fn shared_patients(train: &[ReportRecord], test: &[ReportRecord]) -> Vec<String> {
    let a: BTreeSet<&str> = train.iter().filter_map(|r| r.patient_id.as_deref()).collect();
    let b: BTreeSet<&str> = test.iter().filter_map(|r| r.patient_id.as_deref()).collect();
    a.intersection(&b).map(|s| s.to_string()).collect()
}

/// Split summary for reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub train: usize,
    pub test: usize,
    pub shared_patients: Vec<String>,
    pub seed: u64,
    pub train_fraction: f64,
}

/// Per-head counts keyed by name, handy for JSON output.
pub fn instances_by_head(t: &KeywordTable) -> BTreeMap<String, u64> {
    HEADS
        .iter()
        .enumerate()
        .map(|(i, h)| (h.to_string(), t.instances[i]))
        .collect()
}
