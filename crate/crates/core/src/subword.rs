//! Wordpiece-style subword segmentation with label propagation.
//!
//! Every unit inherits the label of the token it came from, so a model trained
//! on units sees REMOVE on all pieces of a removed word, not only the first.

use std::collections::HashSet;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::report::{Label, LabeledReport, TokenKind};

pub const CONTINUATION_MARKER: &str = "##";

/// Subword vocabulary: word-initial units and continuation units.
#[derive(Debug, Clone, Default)]
pub struct SubwordVocab {
    initial: HashSet<String>,
    continuation: HashSet<String>,
    max_len: usize,
}

impl SubwordVocab {
    /// Parses one unit per line; continuation units carry the `##` prefix.
    pub fn parse(text: &str) -> Self {
        let mut vocab = SubwordVocab::default();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            vocab.insert(line);
        }
        vocab
    }

    pub fn load(path: &Path) -> io::Result<Self> {
        Ok(Self::parse(&fs::read_to_string(path)?))
    }

    pub fn insert(&mut self, unit: &str) {
        let (set, body) = match unit.strip_prefix(CONTINUATION_MARKER) {
            Some(body) if !body.is_empty() => (&mut self.continuation, body),
            _ => (&mut self.initial, unit),
        };
        let body = body.to_lowercase();
        self.max_len = self.max_len.max(body.chars().count());
        set.insert(body);
    }

    fn contains(&self, unit: &str, continuation: bool) -> bool {
        if continuation {
            self.continuation.contains(unit)
        } else {
            self.initial.contains(unit)
        }
    }

    /// Greedy longest-match-first split of one word. Returns `(piece, continuation)`
    /// pairs whose concatenation is `word`. Unknown characters become single-char units.
    pub fn split_word<'a>(&self, word: &'a str) -> Vec<(&'a str, bool)> {
        let bounds: Vec<usize> = word
            .char_indices()
            .map(|(i, _)| i)
            .chain(std::iter::once(word.len()))
            .collect();
        let mut out = Vec::new();
        let mut at = 0;
        while at + 1 < bounds.len() {
            let continuation = at > 0;
            let longest = (bounds.len() - 1).min(at + self.max_len.max(1));
            let mut end = at + 1;
            for cand in (at + 1..=longest).rev() {
                let piece = word[bounds[at]..bounds[cand]].to_lowercase();
                if self.contains(&piece, continuation) {
                    end = cand;
                    break;
                }
            }
            out.push((&word[bounds[at]..bounds[end]], continuation));
            at = end;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubwordUnit {
    pub text: String,
    pub continuation: bool,
    pub parent_token_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubwordSequence {
    pub units: Vec<SubwordUnit>,
    pub labels: Vec<Label>,
}

/// Splits every WORD token into subword units; other tokens stay whole.
pub fn subword_split(labeled: &LabeledReport, vocab: &SubwordVocab) -> SubwordSequence {
    let mut units = Vec::new();
    let mut labels = Vec::new();
    for (idx, (token, label)) in labeled.report.tokens().zip(&labeled.labels).enumerate() {
        if token.kind == TokenKind::Word {
            for (piece, continuation) in vocab.split_word(&token.text) {
                units.push(SubwordUnit {
                    text: piece.to_string(),
                    continuation,
                    parent_token_index: idx,
                });
                labels.push(*label);
            }
        } else {
            units.push(SubwordUnit {
                text: token.text.clone(),
                continuation: false,
                parent_token_index: idx,
            });
            labels.push(*label);
        }
    }
    SubwordSequence { units, labels }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::Report;

    fn labeled(text: &str, label: Label) -> LabeledReport {
        let report = Report::new("t", text);
        let n = report.token_count();
        LabeledReport {
            report,
            labels: vec![label; n],
            spans: Vec::new(),
        }
    }

    #[test]
    fn removed_word_propagates_to_all_pieces() {
        let vocab = SubwordVocab::parse("un\n##changed\n");
        let seq = subword_split(&labeled("unchanged", Label::Remove), &vocab);
        let got: Vec<_> = seq
            .units
            .iter()
            .map(|u| (u.text.as_str(), u.continuation))
            .collect();
        assert_eq!(got, [("un", false), ("changed", true)]);
        assert_eq!(seq.labels, [Label::Remove, Label::Remove]);
    }

    #[test]
    fn whole_word_hit() {
        let vocab = SubwordVocab::parse("clear\n");
        let seq = subword_split(&labeled("clear", Label::Keep), &vocab);
        assert_eq!(seq.units.len(), 1);
        assert_eq!(seq.labels, [Label::Keep]);
    }

    #[test]
    fn greedy_longest_match() {
        // cardio + ##megaly; "card" is a shorter initial unit that must lose
        let vocab = SubwordVocab::parse("card\ncardio\n##megaly\n##meg\n");
        assert_eq!(
            vocab.split_word("cardiomegaly"),
            [("cardio", false), ("megaly", true)]
        );
        let seq = subword_split(&labeled("cardiomegaly", Label::Keep), &vocab);
        assert_eq!(seq.labels, [Label::Keep, Label::Keep]);
    }

    #[test]
    fn char_fallback_is_total() {
        let vocab = SubwordVocab::default();
        let pieces = vocab.split_word("abc");
        assert_eq!(pieces, [("a", false), ("b", true), ("c", true)]);
    }

    #[test]
    fn case_preserved_in_units() {
        let vocab = SubwordVocab::parse("un\n##changed\n");
        let pieces = vocab.split_word("Unchanged");
        assert_eq!(pieces, [("Un", false), ("changed", true)]);
    }
}
