//! Span expansion rules.
//!
//! Each rule is a named strategy over the draft spans of one sentence. The
//! lexicon's `patterns` list picks which rules run and in what order; rules
//! are looked up by name in a [`RuleRegistry`], so alternative rules can be
//! registered without touching the engine.

use std::collections::BTreeMap;
use std::sync::Arc;

use super::{Draft, SentenceView};
use crate::lexicon::PhrasePattern;
use crate::report::TokenKind;

/// When a rule runs relative to the merge of overlapping drafts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// One draft per keyword hit, before merging.
    Keyword,
    /// After overlapping and adjacent drafts have been merged.
    Merged,
}

pub trait ExpansionRule: Send + Sync {
    fn id(&self) -> &'static str;
    fn stage(&self) -> Stage;
    fn apply(&self, view: &SentenceView<'_>, pattern: &PhrasePattern, drafts: &mut Vec<Draft>);
}

/// Rules by name.
#[derive(Clone, Default)]
pub struct RuleRegistry {
    rules: BTreeMap<String, Arc<dyn ExpansionRule>>,
}

impl RuleRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Registry holding every built-in rule.
    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register(Arc::new(ChangeClause));
        r.register(Arc::new(ComparativePhrase));
        r.register(Arc::new(PredicateLead));
        r.register(Arc::new(DegreeWith));
        r.register(Arc::new(RelativeClause));
        r.register(Arc::new(BareKeyword));
        r.register(Arc::new(Conjunction));
        r.register(Arc::new(ComparativeDegree));
        r
    }

    pub fn register(&mut self, rule: Arc<dyn ExpansionRule>) {
        self.rules.insert(rule.id().to_string(), rule);
    }

    pub fn get(&self, id: &str) -> Option<Arc<dyn ExpansionRule>> {
        self.rules.get(id).cloned()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.rules.keys().map(String::as_str)
    }
}

/// An unqualified `change` takes its whole clause, plus the comma that opens it.
pub struct ChangeClause;

impl ExpansionRule for ChangeClause {
    fn id(&self) -> &'static str {
        "change_clause"
    }
    fn stage(&self) -> Stage {
        Stage::Keyword
    }
    fn apply(&self, view: &SentenceView<'_>, pattern: &PhrasePattern, drafts: &mut Vec<Draft>) {
        for d in drafts.iter_mut().filter(|d| pattern.fires_for(&d.keyword)) {
            let mut start = view.clause_start(d.hit);
            if start > 0 && view.word(start - 1) == "," {
                start -= 1;
            }
            d.start = d.start.min(start);
            d.end = d.end.max(view.clause_end(d.hit));
            d.clausal = true;
            d.mark(self.id());
        }
    }
}

/// Keyword inside a comparison phrase ("since previous", "compared to the prior
/// study"), or a keyword directly followed by one ("unchanged from ___"). The
/// span runs from the phrase head to the end of the phrase.
pub struct ComparativePhrase;

impl ExpansionRule for ComparativePhrase {
    fn id(&self) -> &'static str {
        "comparative_phrase"
    }
    fn stage(&self) -> Stage {
        Stage::Keyword
    }
    fn apply(&self, view: &SentenceView<'_>, pattern: &PhrasePattern, drafts: &mut Vec<Draft>) {
        let words = view.words();
        let window = view.lexicon.phrase_window;
        for d in drafts.iter_mut().filter(|d| pattern.fires_for(&d.keyword)) {
            let mut applied = false;

            let floor = view.clause_start(d.hit).max(d.hit.saturating_sub(window));
            if let Some(head) = (floor..d.hit)
                .rev()
                .find(|&j| words.phrase_heads.contains(view.word(j)))
            {
                let mut start = head;
                if start > 0 && words.phrase_head_leads.contains(view.word(start - 1)) {
                    start -= 1;
                }
                d.start = d.start.min(start);
                d.end = d.end.max(view.phrase_end(d.hit));
                applied = true;
            }

            let next = d.end;
            if next < view.len()
                && (words.phrase_heads.contains(view.word(next))
                    || words.keyword_followers.contains(view.word(next)))
            {
                d.end = d.end.max(view.phrase_end(next));
                applied = true;
            }

            if applied {
                d.comparative = true;
                d.clausal = true;
                d.mark(self.id());
            }
        }
    }
}

/// Predicate keywords take their degree adverbs and auxiliaries
/// ("are unchanged", "have slightly worsened").
pub struct PredicateLead;

impl ExpansionRule for PredicateLead {
    fn id(&self) -> &'static str {
        "predicate_lead"
    }
    fn stage(&self) -> Stage {
        Stage::Keyword
    }
    fn apply(&self, view: &SentenceView<'_>, pattern: &PhrasePattern, drafts: &mut Vec<Draft>) {
        let words = view.words();
        for d in drafts.iter_mut().filter(|d| pattern.fires_for(&d.keyword)) {
            // attributive use ("is increased opacity"): the verb belongs to the noun
            if d.end < view.len() && view.kind(d.end) == TokenKind::Word {
                let next = view.word(d.end);
                let function_word = crate::scrub::STOP_WORDS.contains(&next)
                    || words.phrase_heads.contains(next)
                    || words.keyword_followers.contains(next)
                    || words.conjunctions.contains(next)
                    || words.relative_pronouns.contains(next);
                if !function_word && view.lexicon.head_of(next).is_none() {
                    continue;
                }
            }
            let floor = view.clause_start(d.hit);
            let mut i = d.start;
            let mut aux = false;
            while i > floor {
                let w = view.word(i - 1);
                if words.auxiliaries.contains(w) {
                    aux = true;
                } else if !words.degree_adverbs.contains(w) {
                    break;
                }
                i -= 1;
            }
            if i < d.start {
                d.start = i;
                d.aux_lead |= aux;
                d.clausal = true;
                d.mark(self.id());
            }
        }
    }
}

/// Comparative-degree keywords take a preceding "with" ("with increased").
pub struct DegreeWith;

impl ExpansionRule for DegreeWith {
    fn id(&self) -> &'static str {
        "degree_with"
    }
    fn stage(&self) -> Stage {
        Stage::Keyword
    }
    fn apply(&self, view: &SentenceView<'_>, pattern: &PhrasePattern, drafts: &mut Vec<Draft>) {
        let words = view.words();
        for d in drafts.iter_mut().filter(|d| pattern.fires_for(&d.keyword)) {
            let mut i = d.start;
            while i > 0 && words.degree_adverbs.contains(view.word(i - 1)) {
                i -= 1;
            }
            if i > 0 && words.degree_prepositions.contains(view.word(i - 1)) {
                d.start = i - 1;
                d.clausal = true;
                d.mark(self.id());
            }
        }
    }
}

/// A comparison phrase inside a relative clause takes the whole clause
/// (", which is slightly larger as compared to the prior study").
pub struct RelativeClause;

impl ExpansionRule for RelativeClause {
    fn id(&self) -> &'static str {
        "relative_clause"
    }
    fn stage(&self) -> Stage {
        Stage::Keyword
    }
    fn apply(&self, view: &SentenceView<'_>, pattern: &PhrasePattern, drafts: &mut Vec<Draft>) {
        let words = view.words();
        let window = view.lexicon.phrase_window;
        for d in drafts
            .iter_mut()
            .filter(|d| d.comparative && pattern.fires_for(&d.keyword))
        {
            let floor = view.clause_start(d.start).max(d.start.saturating_sub(window));
            if let Some(r) = (floor..d.start)
                .rev()
                .find(|&j| words.relative_pronouns.contains(view.word(j)))
            {
                d.start = if r > 0 && view.word(r - 1) == "," {
                    r - 1
                } else {
                    r
                };
                d.mark(self.id());
            }
        }
    }
}

/// Fallback: the keyword alone, plus a preceding comma when the keyword closes
/// its clause (", unchanged").
pub struct BareKeyword;

impl ExpansionRule for BareKeyword {
    fn id(&self) -> &'static str {
        "bare_keyword"
    }
    fn stage(&self) -> Stage {
        Stage::Keyword
    }
    fn apply(&self, view: &SentenceView<'_>, pattern: &PhrasePattern, drafts: &mut Vec<Draft>) {
        for d in drafts
            .iter_mut()
            .filter(|d| d.rules.is_empty() && pattern.fires_for(&d.keyword))
        {
            let closes_clause = d.end == view.len() || view.is_clause_break(d.end);
            if closes_clause && d.start > 0 && view.word(d.start - 1) == "," {
                d.start -= 1;
            }
            d.mark(self.id());
        }
    }
}

/// A coordinating conjunction before a clausal span joins it ("but decreased
/// since previous"); when the span removed a whole predicate, a following
/// conjunction joins instead.
pub struct Conjunction;

impl ExpansionRule for Conjunction {
    fn id(&self) -> &'static str {
        "conjunction"
    }
    fn stage(&self) -> Stage {
        Stage::Merged
    }
    fn apply(&self, view: &SentenceView<'_>, pattern: &PhrasePattern, drafts: &mut Vec<Draft>) {
        let words = view.words();
        let mut claimed: Vec<(usize, usize)> = drafts.iter().map(|d| (d.start, d.end)).collect();
        for (k, d) in drafts.iter_mut().enumerate() {
            if !d.clausal || !pattern.fires_for(&d.keyword) {
                continue;
            }
            let free = |i: usize, claimed: &[(usize, usize)]| {
                claimed
                    .iter()
                    .enumerate()
                    .all(|(o, &(s, e))| o == k || i < s || i >= e)
            };
            if d.start > 0
                && words.conjunctions.contains(view.word(d.start - 1))
                && free(d.start - 1, &claimed)
            {
                d.start -= 1;
                d.mark(self.id());
            } else if d.aux_lead
                && d.end < view.len()
                && words.conjunctions.contains(view.word(d.end))
                && free(d.end, &claimed)
            {
                d.end += 1;
                d.mark(self.id());
            }
            claimed[k] = (d.start, d.end);
        }
    }
}

/// In a sentence that already refers to a prior, a comparative marker and its
/// degree adverbs ("slightly more confluent") are removed too.
pub struct ComparativeDegree;

impl ExpansionRule for ComparativeDegree {
    fn id(&self) -> &'static str {
        "comparative_degree"
    }
    fn stage(&self) -> Stage {
        Stage::Merged
    }
    fn apply(&self, view: &SentenceView<'_>, pattern: &PhrasePattern, drafts: &mut Vec<Draft>) {
        if drafts.is_empty() {
            return;
        }
        let words = view.words();
        let covered = |i: usize, drafts: &[Draft]| drafts.iter().any(|d| d.start <= i && i < d.end);
        let mut added = Vec::new();
        for i in 0..view.len() {
            if !words.comparative_markers.contains(view.word(i))
                || covered(i, drafts)
                || i + 1 >= view.len()
                || view.kind(i + 1) != TokenKind::Word
            {
                continue;
            }
            let mut start = i;
            while start > 0
                && words.degree_adverbs.contains(view.word(start - 1))
                && !covered(start - 1, drafts)
            {
                start -= 1;
            }
            // nearest span, preferring the one before
            let anchor = drafts
                .iter()
                .filter(|d| d.end <= start)
                .max_by_key(|d| d.end)
                .or_else(|| drafts.iter().min_by_key(|d| d.start))
                .expect("drafts is non-empty");
            if !pattern.fires_for(&anchor.keyword) {
                continue;
            }
            let mut draft = Draft::new(i, anchor.keyword.clone());
            draft.start = start;
            draft.mark(self.id());
            added.push(draft);
        }
        drafts.extend(added);
    }
}
