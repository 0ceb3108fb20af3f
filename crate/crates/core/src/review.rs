//! Annotator review sessions: an append-only JSONL decision log over detected
//! spans, and export of the decided corpus as ground truth.
//!
//! The first line of a log is a header; every later line is one decision.
//! Replaying the log in order gives the current state (latest wins).

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::ReportRecord;
use crate::detect::Detector;
use crate::report::LabeledReport;
use crate::scrub::render;

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Decision {
    #[default]
    Pending,
    Accept,
    Reject,
    Replaced { replacement: String },
}

#[derive(Debug, Error)]
pub enum ReviewError {
    #[error("session log {path} is corrupt at line {line}: {message}\nhint: {hint}")]
    CorruptSession {
        path: String,
        line: usize,
        message: String,
        hint: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum LogLine {
    Session {
        corpus_path: String,
        annotator: String,
        created: u64,
    },
    Decision {
        report_id: String,
        span: String,
        #[serde(flatten)]
        decision: Decision,
        at: u64,
    },
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// A review session backed by its log file.
#[derive(Debug)]
pub struct ReviewSession {
    path: PathBuf,
    pub corpus_path: String,
    pub annotator: String,
    pub created: u64,
    pub updated: u64,
    decisions: HashMap<(String, String), Decision>,
    file: File,
}

impl ReviewSession {
    /// Opens the log at `path`, creating it with a header if it does not exist.
    pub fn open(path: &Path, corpus_path: &str, annotator: &str) -> Result<Self, ReviewError> {
        let io_err = |source| ReviewError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut session = ReviewSession {
            path: path.to_path_buf(),
            corpus_path: corpus_path.to_string(),
            annotator: annotator.to_string(),
            created: now(),
            updated: now(),
            decisions: HashMap::new(),
            file: OpenOptions::new().create(true).append(true).open(path).map_err(io_err)?,
        };
        let empty = session.file.metadata().map_err(io_err)?.len() == 0;
        if empty {
            let header = LogLine::Session {
                corpus_path: corpus_path.to_string(),
                annotator: annotator.to_string(),
                created: session.created,
            };
            session.append(&header)?;
        } else {
            session.replay()?;
        }
        Ok(session)
    }

    fn replay(&mut self) -> Result<(), ReviewError> {
        let path = self.path.display().to_string();
        let file = File::open(&self.path).map_err(|source| ReviewError::Io {
            path: path.clone(),
            source,
        })?;
        let corrupt = |line: usize, message: String| ReviewError::CorruptSession {
            path: path.clone(),
            line,
            message,
            hint: format!(
                "line {line} cannot be parsed; if the previous run crashed mid-write, \
                 remove that line (everything before it is intact) or start a new session file"
            ),
        };
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| corrupt(n + 1, e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: LogLine =
                serde_json::from_str(&line).map_err(|e| corrupt(n + 1, e.to_string()))?;
            match (n, parsed) {
                (0, LogLine::Session { corpus_path, annotator, created }) => {
                    self.corpus_path = corpus_path;
                    self.annotator = annotator;
                    self.created = created;
                    self.updated = created;
                }
                (0, _) => return Err(corrupt(1, "missing session header".into())),
                (_, LogLine::Session { .. }) => {
                    return Err(corrupt(n + 1, "unexpected second header".into()))
                }
                (_, LogLine::Decision { report_id, span, decision, at }) => {
                    self.decisions.insert((report_id, span), decision);
                    self.updated = at;
                }
            }
        }
        Ok(())
    }

    fn append(&mut self, line: &LogLine) -> Result<(), ReviewError> {
        let io_err = |source| ReviewError::Io {
            path: self.path.display().to_string(),
            source,
        };
        let mut buf = serde_json::to_vec(line).expect("log lines serialize");
        buf.push(b'\n');
        self.file.write_all(&buf).map_err(io_err)?;
        self.file.sync_data().map_err(io_err)
    }

    /// Durably records a decision; returns once it is on disk.
    pub fn record(&mut self, report_id: &str, span: &str, decision: Decision) -> Result<(), ReviewError> {
        let at = now();
        self.append(&LogLine::Decision {
            report_id: report_id.to_string(),
            span: span.to_string(),
            decision: decision.clone(),
            at,
        })?;
        self.decisions
            .insert((report_id.to_string(), span.to_string()), decision);
        self.updated = at;
        Ok(())
    }

    pub fn decision(&self, report_id: &str, span: &str) -> Decision {
        self.decisions
            .get(&(report_id.to_string(), span.to_string()))
            .cloned()
            .unwrap_or_default()
    }

    pub fn decisions(&self) -> &HashMap<(String, String), Decision> {
        &self.decisions
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

/// Decision counts over the spans of an export.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ExportSummary {
    pub reports: usize,
    pub spans: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub replaced: usize,
    pub pending: usize,
}

/// Applies `decide` to every span of one labeled report.
pub fn apply_decisions(
    labeled: &LabeledReport,
    decide: impl Fn(&str) -> Decision,
    summary: &mut ExportSummary,
) -> String {
    let mut kept_spans = Vec::new();
    let mut replacements = BTreeMap::new();
    for span in &labeled.spans {
        summary.spans += 1;
        match decide(&span.key()) {
            Decision::Accept => {
                summary.accepted += 1;
                kept_spans.push(span.clone());
            }
            Decision::Replaced { replacement } => {
                summary.replaced += 1;
                if !replacement.trim().is_empty() {
                    replacements.insert((span.sentence_index, span.token_start), replacement);
                }
                kept_spans.push(span.clone());
            }
            Decision::Reject => summary.rejected += 1,
            Decision::Pending => summary.pending += 1,
        }
    }
    let decided = LabeledReport::from_spans(labeled.report.clone(), kept_spans);
    render(&decided, &replacements).report.text
}

/// Ground-truth corpus: accepted spans removed, replaced spans substituted,
/// rejected and pending spans kept.
pub fn export_ground_truth(
    records: &[ReportRecord],
    detector: &Detector,
    session: &ReviewSession,
) -> (Vec<ReportRecord>, ExportSummary) {
    let mut summary = ExportSummary::default();
    let out = records
        .iter()
        .map(|rec| {
            summary.reports += 1;
            let labeled = detector.detect(&rec.to_report());
            let text = apply_decisions(&labeled, |key| session.decision(&rec.id, key), &mut summary);
            ReportRecord {
                id: rec.id.clone(),
                text,
                patient_id: rec.patient_id.clone(),
            }
        })
        .collect();
    (out, summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::collapse_whitespace;
    use crate::scrub::scrub;

    fn corpus() -> Vec<ReportRecord> {
        vec![
            ReportRecord::new("r1", "Heart size is stable.  No interval change."),
            ReportRecord::new("r2", "Lungs are clear."),
        ]
    }

    fn session(dir: &tempfile::TempDir) -> ReviewSession {
        ReviewSession::open(&dir.path().join("s.jsonl"), "c.jsonl", "tester").unwrap()
    }

    fn spans(id: &str) -> Vec<String> {
        let rec = corpus().into_iter().find(|r| r.id == id).unwrap();
        Detector::bundled()
            .detect(&rec.to_report())
            .spans
            .iter()
            .map(|s| s.key())
            .collect()
    }

    #[test]
    fn empty_session_exports_input() {
        let dir = tempfile::tempdir().unwrap();
        let (out, summary) = export_ground_truth(&corpus(), &Detector::bundled(), &session(&dir));
        for (a, b) in out.iter().zip(corpus()) {
            assert_eq!(a.text, collapse_whitespace(&b.text));
        }
        assert_eq!(summary.pending, 2);
    }

    #[test]
    fn all_accept_equals_scrub() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = session(&dir);
        for key in spans("r1") {
            s.record("r1", &key, Decision::Accept).unwrap();
        }
        let (out, summary) = export_ground_truth(&corpus(), &Detector::bundled(), &s);
        let expected = scrub(&Detector::bundled().detect(&corpus()[0].to_report())).text;
        assert_eq!(out[0].text, expected);
        assert_eq!(summary.pending, 0);
        assert_eq!(summary.accepted, 2);
    }

    #[test]
    fn replacement_substitutes() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = session(&dir);
        let keys = spans("r1");
        s.record("r1", &keys[0], Decision::Replaced { replacement: "is abnormal".into() })
            .unwrap();
        s.record("r1", &keys[1], Decision::Reject).unwrap();
        let (out, _) = export_ground_truth(&corpus(), &Detector::bundled(), &s);
        assert_eq!(out[0].text, "Heart size is abnormal. No interval change.");
    }

    #[test]
    fn decisions_survive_reopen_latest_wins() {
        let dir = tempfile::tempdir().unwrap();
        {
            let mut s = session(&dir);
            s.record("r1", "0:3:4", Decision::Reject).unwrap();
            s.record("r1", "0:3:4", Decision::Accept).unwrap();
        }
        let s = session(&dir);
        assert_eq!(s.decision("r1", "0:3:4"), Decision::Accept);
        assert_eq!(s.decision("r1", "9:9:9"), Decision::Pending);
        assert_eq!(s.annotator, "tester");
    }

    #[test]
    fn corrupt_log_refused_with_hint() {
        let dir = tempfile::tempdir().unwrap();
        drop(session(&dir));
        let path = dir.path().join("s.jsonl");
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"type\":\"decision\",\"rep").unwrap();
        match ReviewSession::open(&path, "c", "t") {
            Err(ReviewError::CorruptSession { line, hint, .. }) => {
                assert_eq!(line, 2);
                assert!(hint.contains("remove that line"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn decision_json_shape() {
        let d: Decision = serde_json::from_str(r#"{"decision":"REPLACED","replacement":"x"}"#).unwrap();
        assert_eq!(d, Decision::Replaced { replacement: "x".into() });
        assert_eq!(serde_json::to_string(&Decision::Accept).unwrap(), r#"{"decision":"ACCEPT"}"#);
    }
}
