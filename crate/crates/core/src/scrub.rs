//! Turning KEEP/REMOVE labels into cleaned report text.
//!
//! Sentences without REMOVE tokens pass through untouched (modulo whitespace).
//! Sentences that lost tokens are tidied: empty brackets and doubled
//! punctuation collapse, husk sentences with only stop-words are dropped, the
//! first letter is capitalized, and a terminator the sentence had is kept.
//! No grammar repair is attempted, so verbless fragments can remain.

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::ReportRecord;
use crate::detect::Detector;
use crate::report::{collapse_whitespace, tokenize, Label, LabeledReport, Report, TokenKind};

/// Words that do not keep a modified sentence alive on their own.
pub const STOP_WORDS: &[&str] = &[
    // articles
    "a", "an", "the",
    // prepositions
    "of", "in", "on", "at", "to", "from", "with", "by", "for", "since", "as", "into", "than",
    "about", "over", "under",
    // forms of "to be"
    "is", "are", "was", "were", "be", "been", "being", "am",
    // negation, expletives, connectives
    "no", "not", "there", "it", "this", "and", "but", "or", "however",
];

fn is_stop_word(w: &str) -> bool {
    STOP_WORDS.contains(&w.to_lowercase().as_str())
}

#[derive(Debug, Clone)]
struct Piece {
    text: String,
    kind: TokenKind,
    space_before: bool,
}

impl Piece {
    fn is(&self, s: &str) -> bool {
        self.kind == TokenKind::Punct && self.text == s
    }
    fn separator_rank(&self) -> Option<u8> {
        if self.kind != TokenKind::Punct {
            return None;
        }
        match self.text.as_str() {
            "," => Some(1),
            ":" => Some(2),
            ";" => Some(3),
            _ => None,
        }
    }
    fn is_terminator(&self) -> bool {
        self.kind == TokenKind::Punct && matches!(self.text.as_str(), "." | "!" | "?")
    }
}

/// Result of scrubbing one report.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scrubbed {
    pub report: Report,
    pub tokens_removed: usize,
    pub sentences_dropped: usize,
}

/// Drops REMOVE tokens and tidies the affected sentences.
pub fn scrub(labeled: &LabeledReport) -> Report {
    render(labeled, &BTreeMap::new()).report
}

/// Like [`scrub`], but spans keyed by `(sentence_index, token_start)` in
/// `replacements` have their tokens replaced by the given text instead of
/// simply dropped.
pub fn render(labeled: &LabeledReport, replacements: &BTreeMap<(usize, usize), String>) -> Scrubbed {
    let report = &labeled.report;
    let offsets = report.sentence_offsets();
    let mut kept_sentences = Vec::new();
    let mut tokens_removed = 0;
    let mut sentences_dropped = 0;

    for (si, sentence) in report.sentences.iter().enumerate() {
        let labels = &labeled.labels[offsets[si]..offsets[si] + sentence.tokens.len()];
        let removed = labels.iter().filter(|l| **l == Label::Remove).count();
        tokens_removed += removed;
        if removed == 0 {
            kept_sentences.push(collapse_whitespace(&sentence.text));
            continue;
        }

        let mut pieces = Vec::with_capacity(sentence.tokens.len());
        for (i, (tok, label)) in sentence.tokens.iter().zip(labels).enumerate() {
            if let Some(replacement) = replacements.get(&(si, i)) {
                let mut first = true;
                let rtoks = tokenize(replacement);
                for (k, rt) in rtoks.iter().enumerate() {
                    let space = if first {
                        sentence.space_before(i)
                    } else {
                        rtoks[k - 1].char_end < rt.char_start
                    };
                    first = false;
                    pieces.push(Piece {
                        text: rt.text.clone(),
                        kind: rt.kind,
                        space_before: space,
                    });
                }
            }
            if *label == Label::Keep {
                pieces.push(Piece {
                    text: tok.text.clone(),
                    kind: tok.kind,
                    space_before: sentence.space_before(i),
                });
            }
        }
        let had_terminator = sentence.tokens.last().filter(|t| t.is_terminator());

        match tidy(pieces, had_terminator.map(|t| t.text.as_str())) {
            Some(text) => kept_sentences.push(text),
            None => sentences_dropped += 1,
        }
    }

    Scrubbed {
        report: Report::new(report.id.clone(), kept_sentences.join(" ")),
        tokens_removed,
        sentences_dropped,
    }
}

fn tidy(mut pieces: Vec<Piece>, terminator: Option<&str>) -> Option<String> {
    // empty bracket pairs
    loop {
        let pos = pieces.windows(2).position(|w| {
            (w[0].is("(") && w[1].is(")")) || (w[0].is("[") && w[1].is("]"))
        });
        match pos {
            Some(p) => {
                pieces.drain(p..p + 2);
            }
            None => break,
        }
    }

    // collapse punctuation runs that contain a separator
    let mut out: Vec<Piece> = Vec::with_capacity(pieces.len());
    let mut i = 0;
    while i < pieces.len() {
        let is_mark = |p: &Piece| p.separator_rank().is_some() || p.is_terminator();
        if !is_mark(&pieces[i]) {
            out.push(pieces[i].clone());
            i += 1;
            continue;
        }
        let mut j = i;
        while j < pieces.len() && is_mark(&pieces[j]) {
            j += 1;
        }
        let run = &pieces[i..j];
        if run.iter().all(|p| p.separator_rank().is_none()) {
            out.extend_from_slice(run);
        } else if run.iter().any(Piece::is_terminator) {
            out.extend(run.iter().filter(|p| p.is_terminator()).cloned());
        } else {
            let strongest = run
                .iter()
                .max_by_key(|p| p.separator_rank())
                .cloned()
                .expect("run is non-empty");
            out.push(strongest);
        }
        if let Some(first) = out.last_mut() {
            if is_mark(first) && j - i > 1 {
                first.space_before = false;
            }
        }
        i = j;
    }

    // no leading or trailing separators
    while out.first().is_some_and(|p| p.separator_rank().is_some() || p.is_terminator()) {
        out.remove(0);
    }
    while out.last().is_some_and(|p| p.separator_rank().is_some()) {
        out.pop();
    }

    let alive = out.iter().any(|p| match p.kind {
        TokenKind::Number => true,
        TokenKind::Word => !is_stop_word(&p.text),
        _ => false,
    });
    if !alive {
        return None;
    }

    if let Some(t) = terminator {
        if !out.last().is_some_and(Piece::is_terminator) {
            out.push(Piece {
                text: t.to_string(),
                kind: TokenKind::Punct,
                space_before: false,
            });
        }
    }

    let mut text = String::new();
    for p in &out {
        if p.space_before && !text.is_empty() {
            text.push(' ');
        }
        text.push_str(&p.text);
    }
    Some(capitalize_first(&text))
}

fn capitalize_first(text: &str) -> String {
    match text.char_indices().find(|(_, c)| c.is_alphabetic()) {
        Some((i, c)) if c.is_lowercase() => {
            let mut s = String::with_capacity(text.len());
            s.push_str(&text[..i]);
            s.extend(c.to_uppercase());
            s.push_str(&text[i + c.len_utf8()..]);
            s
        }
        _ => text.to_string(),
    }
}

/// Totals for one corpus pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScrubStats {
    pub reports_in: usize,
    pub reports_out: usize,
    pub tokens_removed: usize,
    pub sentences_dropped: usize,
    pub lines_skipped: usize,
}

const BATCH: usize = 4096;

/// Detects and scrubs every record of a JSONL stream, writing output in input order.
///
/// Malformed lines are logged and skipped; `lines_skipped` counts them.
pub fn scrub_corpus<R: BufRead, W: Write>(
    input: R,
    detector: &Detector,
    mut output: W,
) -> io::Result<ScrubStats> {
    let mut stats = ScrubStats::default();
    let mut batch: Vec<(usize, String)> = Vec::with_capacity(BATCH);
    let mut lines = input.lines().enumerate();
    loop {
        batch.clear();
        for (n, line) in lines.by_ref() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            batch.push((n + 1, line));
            if batch.len() == BATCH {
                break;
            }
        }
        if batch.is_empty() {
            break;
        }
        let results: Vec<Result<(String, Scrubbed), (usize, String)>> = batch
            .par_iter()
            .map(|(n, line)| {
                let rec: ReportRecord =
                    serde_json::from_str(line).map_err(|e| (*n, e.to_string()))?;
                let scrubbed = render(&detector.detect_owned(rec.to_report()), &BTreeMap::new());
                let out = ReportRecord {
                    id: rec.id,
                    text: scrubbed.report.text.clone(),
                    patient_id: rec.patient_id,
                };
                let json = serde_json::to_string(&out).map_err(|e| (*n, e.to_string()))?;
                Ok((json, scrubbed))
            })
            .collect();
        for r in results {
            match r {
                Ok((json, scrubbed)) => {
                    stats.reports_in += 1;
                    stats.reports_out += 1;
                    stats.tokens_removed += scrubbed.tokens_removed;
                    stats.sentences_dropped += scrubbed.sentences_dropped;
                    output.write_all(json.as_bytes())?;
                    output.write_all(b"\n")?;
                }
                Err((n, msg)) => {
                    log::warn!("line {n}: skipped: {msg}");
                    stats.lines_skipped += 1;
                }
            }
        }
    }
    output.flush()?;
    Ok(stats)
}
