//! Rule-based prior-reference detection.
//!
//! [`Detector`] labels every token KEEP or REMOVE and groups REMOVE tokens into
//! spans, each attributed to one lexicon keyword. Sentence flags are derived
//! from the same labels, so a sentence is flagged exactly when it contains a
//! REMOVE token.

pub mod rules;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexicon::{Lexicon, PhrasePattern, WordSets};
use crate::report::{LabeledReport, Report, Sentence, Span, TokenKind};
use rules::{ExpansionRule, RuleRegistry, Stage};

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("lexicon invalid: {0}")]
    LexiconInvalid(String),
}

/// A span under construction. Token indices are sentence-local, half-open.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Draft {
    pub start: usize,
    pub end: usize,
    /// Token index of the keyword hit that seeded this draft.
    pub hit: usize,
    pub keyword: String,
    pub rules: Vec<&'static str>,
    /// Set when the span covers a phrase or predicate rather than a lone modifier.
    pub clausal: bool,
    /// Set when the span took a comparison phrase.
    pub comparative: bool,
    /// Set when the span starts at an auxiliary verb.
    pub aux_lead: bool,
}

impl Draft {
    pub fn new(hit: usize, keyword: String) -> Self {
        Draft {
            start: hit,
            end: hit + 1,
            hit,
            keyword,
            rules: Vec::new(),
            clausal: false,
            comparative: false,
            aux_lead: false,
        }
    }

    pub fn mark(&mut self, rule: &'static str) {
        if !self.rules.contains(&rule) {
            self.rules.push(rule);
        }
    }

    fn absorb(&mut self, other: Draft) {
        self.end = self.end.max(other.end);
        for r in other.rules {
            self.mark(r);
        }
        self.clausal |= other.clausal;
        self.comparative |= other.comparative;
        self.aux_lead |= other.aux_lead;
    }
}

/// Read-only view of one sentence for the rules.
pub struct SentenceView<'a> {
    pub sentence: &'a Sentence,
    pub lexicon: &'a Lexicon,
    lower: Vec<String>,
}

impl<'a> SentenceView<'a> {
    pub fn new(sentence: &'a Sentence, lexicon: &'a Lexicon) -> Self {
        let lower = sentence
            .tokens
            .iter()
            .map(|t| t.text.to_lowercase())
            .collect();
        SentenceView {
            sentence,
            lexicon,
            lower,
        }
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    /// Lowercased token text.
    pub fn word(&self, i: usize) -> &str {
        &self.lower[i]
    }

    pub fn kind(&self, i: usize) -> TokenKind {
        self.sentence.tokens[i].kind
    }

    pub(crate) fn words(&self) -> &WordSets {
        &self.lexicon.word_sets
    }

    /// Clause separators and sentence terminators.
    pub fn is_clause_break(&self, i: usize) -> bool {
        self.kind(i) == TokenKind::Punct
            && matches!(self.word(i), "," | ";" | ":" | "." | "!" | "?")
    }

    /// First token of the clause containing `i`.
    pub fn clause_start(&self, i: usize) -> usize {
        (0..i)
            .rev()
            .find(|&j| self.is_clause_break(j))
            .map(|j| j + 1)
            .unwrap_or(0)
    }

    /// Index of the break that closes the clause containing `i` (or `len`).
    pub fn clause_end(&self, i: usize) -> usize {
        (i..self.len())
            .find(|&j| self.is_clause_break(j))
            .unwrap_or(self.len())
    }

    /// End of a phrase starting after `i`: the next clause break or conjunction.
    pub fn phrase_end(&self, i: usize) -> usize {
        let conj = &self.words().conjunctions;
        (i + 1..self.len())
            .find(|&j| self.is_clause_break(j) || conj.contains(self.word(j)))
            .unwrap_or(self.len())
    }
}

/// Detection engine: a lexicon plus its resolved rule pipeline.
#[derive(Clone)]
pub struct Detector {
    lexicon: Arc<Lexicon>,
    pipeline: Vec<(PhrasePattern, Arc<dyn ExpansionRule>)>,
}

impl std::fmt::Debug for Detector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Detector")
            .field(
                "pipeline",
                &self.pipeline.iter().map(|(p, _)| &p.rule_id).collect::<Vec<_>>(),
            )
            .finish()
    }
}

impl Detector {
    pub fn new(lexicon: Lexicon) -> Result<Self, DetectError> {
        Self::with_registry(lexicon, &RuleRegistry::builtin())
    }

    pub fn with_registry(lexicon: Lexicon, registry: &RuleRegistry) -> Result<Self, DetectError> {
        let mut pipeline = Vec::new();
        for p in lexicon.patterns.iter().filter(|p| p.enabled) {
            let rule = registry.get(&p.rule_id).ok_or_else(|| {
                DetectError::LexiconInvalid(format!("unknown rule `{}`", p.rule_id))
            })?;
            for t in &p.triggers {
                if !lexicon.is_head(t) {
                    return Err(DetectError::LexiconInvalid(format!(
                        "pattern `{}` triggers on unknown head `{t}`",
                        p.rule_id
                    )));
                }
            }
            pipeline.push((p.clone(), rule));
        }
        Ok(Detector {
            lexicon: Arc::new(lexicon),
            pipeline,
        })
    }

    pub fn bundled() -> Self {
        Self::new(Lexicon::bundled()).expect("bundled lexicon is valid")
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    /// Keyword hits of one sentence as `(token index, head)`, after the
    /// `change` qualifier rule.
    pub fn keyword_hits<'s>(&'s self, sentence: &Sentence) -> Vec<(usize, &'s str)> {
        let lex = &*self.lexicon;
        let mut hits = Vec::new();
        for (i, tok) in sentence.tokens.iter().enumerate() {
            if tok.kind != TokenKind::Word {
                continue;
            }
            let Some(entry) = lex.head_of(&tok.text) else {
                continue;
            };
            if !entry.always_prior && self.qualified(sentence, i) {
                continue;
            }
            hits.push((i, entry.head.as_str()));
        }
        hits
    }

    fn qualified(&self, sentence: &Sentence, i: usize) -> bool {
        sentence.tokens[..i]
            .iter()
            .rev()
            .filter(|t| t.kind == TokenKind::Word)
            .take(self.lexicon.change_window)
            .any(|t| self.lexicon.is_change_qualifier(&t.text))
    }

    /// Spans of one sentence, sorted and non-overlapping.
    pub fn sentence_spans(&self, sentence: &Sentence) -> Vec<Span> {
        let hits = self.keyword_hits(sentence);
        if hits.is_empty() {
            return Vec::new();
        }
        let view = SentenceView::new(sentence, &self.lexicon);
        let mut drafts: Vec<Draft> = hits
            .into_iter()
            .map(|(i, head)| Draft::new(i, head.to_string()))
            .collect();

        for (pattern, rule) in self.pipeline.iter().filter(|(_, r)| r.stage() == Stage::Keyword) {
            rule.apply(&view, pattern, &mut drafts);
        }
        drafts = merge(drafts);
        for (pattern, rule) in self.pipeline.iter().filter(|(_, r)| r.stage() == Stage::Merged) {
            rule.apply(&view, pattern, &mut drafts);
        }
        drafts = merge(drafts);

        drafts
            .into_iter()
            .map(|d| Span {
                sentence_index: sentence.index,
                token_start: d.start,
                token_end: d.end,
                keyword: d.keyword,
                rule_id: if d.rules.is_empty() {
                    "keyword".to_string()
                } else {
                    d.rules.join("+")
                },
            })
            .collect()
    }

    pub fn detect(&self, report: &Report) -> LabeledReport {
        let spans = report
            .sentences
            .iter()
            .flat_map(|s| self.sentence_spans(s))
            .collect();
        LabeledReport::from_spans(report.clone(), spans)
    }

    /// Consuming variant of [`Detector::detect`] that avoids cloning the report.
    pub fn detect_owned(&self, report: Report) -> LabeledReport {
        let spans = report
            .sentences
            .iter()
            .flat_map(|s| self.sentence_spans(s))
            .collect();
        LabeledReport::from_spans(report, spans)
    }
}

/// Merges overlapping or touching drafts; the earliest draft names the keyword.
fn merge(mut drafts: Vec<Draft>) -> Vec<Draft> {
    drafts.sort_by_key(|d| (d.start, d.hit));
    let mut out: Vec<Draft> = Vec::with_capacity(drafts.len());
    for d in drafts {
        match out.last_mut() {
            Some(last) if d.start <= last.end => last.absorb(d),
            _ => out.push(d),
        }
    }
    out
}

/// Labels a report with a one-off detector over `lexicon`.
pub fn detect(report: &Report, lexicon: &Lexicon) -> Result<LabeledReport, DetectError> {
    Ok(Detector::new(lexicon.clone())?.detect(report))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SentenceFlag {
    pub sentence_index: usize,
    pub flagged: bool,
    pub score: f64,
}

/// Sentence-level prior-reference scorer. Scores lie in `[0, 1]`.
pub trait SentenceFlagger: Send + Sync {
    fn name(&self) -> &'static str;
    fn scores(&self, report: &Report) -> Vec<f64>;

    fn flag(&self, report: &Report, threshold: f64) -> Vec<SentenceFlag> {
        self.scores(report)
            .into_iter()
            .enumerate()
            .map(|(sentence_index, score)| SentenceFlag {
                sentence_index,
                flagged: score >= threshold,
                score,
            })
            .collect()
    }
}

/// Scores 1.0 for sentences containing at least one REMOVE token.
pub struct LexiconFlagger {
    detector: Detector,
}

impl LexiconFlagger {
    pub fn new(detector: Detector) -> Self {
        LexiconFlagger { detector }
    }
}

impl SentenceFlagger for LexiconFlagger {
    fn name(&self) -> &'static str {
        "lexicon"
    }

    fn scores(&self, report: &Report) -> Vec<f64> {
        report
            .sentences
            .iter()
            .map(|s| {
                if self.detector.sentence_spans(s).is_empty() {
                    0.0
                } else {
                    1.0
                }
            })
            .collect()
    }
}

pub const DEFAULT_FLAG_THRESHOLD: f64 = 0.5;

pub fn flag_sentences(
    report: &Report,
    lexicon: &Lexicon,
    threshold: f64,
) -> Result<Vec<SentenceFlag>, DetectError> {
    let flagger = LexiconFlagger::new(Detector::new(lexicon.clone())?);
    Ok(flagger.flag(report, threshold))
}

/// Line-delimited detection output record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub id: String,
    pub labels: Vec<Vec<u8>>,
    pub spans: Vec<SpanRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanRecord {
    pub sentence: usize,
    pub start: usize,
    pub end: usize,
    pub keyword: String,
    pub rule_id: String,
}

impl From<&LabeledReport> for DetectionRecord {
    fn from(lr: &LabeledReport) -> Self {
        DetectionRecord {
            id: lr.report.id.clone(),
            labels: lr.label_rows(),
            spans: lr
                .spans
                .iter()
                .map(|s| SpanRecord {
                    sentence: s.sentence_index,
                    start: s.token_start,
                    end: s.token_end,
                    keyword: s.keyword.clone(),
                    rule_id: s.rule_id.clone(),
                })
                .collect(),
        }
    }
}
