//! Reports, sentences, tokens, and labels.
//!
//! Segmentation is rule-based and deterministic: sentences split on `.`, `!`,
//! `?` (followed by whitespace or end of text) and on blank lines, with a small
//! abbreviation list protected from splitting. Token offsets are byte offsets
//! into the owning sentence's text.

use serde::{Deserialize, Serialize};

/// Abbreviations whose final period never ends a sentence.
pub const ABBREVIATIONS: &[&str] = &[
    "dr.", "mr.", "mrs.", "ms.", "vs.", "a.m.", "p.m.", "e.g.", "i.e.", "approx.", "cf.",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum TokenKind {
    Word,
    Number,
    Punct,
    /// De-identification placeholder (`___`, any run of three or more underscores).
    Blank,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub char_start: usize,
    pub char_end: usize,
    pub kind: TokenKind,
}

impl Token {
    pub fn is_content(&self) -> bool {
        matches!(self.kind, TokenKind::Word | TokenKind::Number)
    }

    pub fn is_terminator(&self) -> bool {
        self.kind == TokenKind::Punct && matches!(self.text.as_str(), "." | "!" | "?")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub index: usize,
    pub text: String,
    pub tokens: Vec<Token>,
}

impl Sentence {
    pub fn new(index: usize, text: impl Into<String>) -> Self {
        let text = text.into();
        let tokens = tokenize(&text);
        Sentence { index, text, tokens }
    }

    /// True when whitespace preceded token `i` in the original sentence text.
    pub fn space_before(&self, i: usize) -> bool {
        if i == 0 {
            return false;
        }
        self.tokens[i - 1].char_end < self.tokens[i].char_start
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub id: String,
    pub text: String,
    pub sentences: Vec<Sentence>,
}

impl Report {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        let sentences = segment_sentences(&text);
        Report {
            id: id.into(),
            text,
            sentences,
        }
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(|s| s.tokens.len()).sum()
    }

    /// All tokens in reading order.
    pub fn tokens(&self) -> impl Iterator<Item = &Token> {
        self.sentences.iter().flat_map(|s| s.tokens.iter())
    }

    /// Global index of the first token of each sentence.
    pub fn sentence_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.sentences.len());
        let mut acc = 0;
        for s in &self.sentences {
            offsets.push(acc);
            acc += s.tokens.len();
        }
        offsets
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Label {
    Keep,
    Remove,
}

impl Label {
    pub fn as_bit(self) -> u8 {
        match self {
            Label::Keep => 0,
            Label::Remove => 1,
        }
    }
}

/// A contiguous run of REMOVE tokens attributed to one lexicon keyword.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Span {
    pub sentence_index: usize,
    pub token_start: usize,
    pub token_end: usize,
    pub keyword: String,
    pub rule_id: String,
}

impl Span {
    /// Stable key used by the review session: `sentence:start:end`.
    pub fn key(&self) -> String {
        format!(
            "{}:{}:{}",
            self.sentence_index, self.token_start, self.token_end
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledReport {
    pub report: Report,
    /// One label per token, in reading order across all sentences.
    pub labels: Vec<Label>,
    pub spans: Vec<Span>,
}

impl LabeledReport {
    /// All-KEEP labelling with no spans.
    pub fn unlabeled(report: Report) -> Self {
        let labels = vec![Label::Keep; report.token_count()];
        LabeledReport {
            report,
            labels,
            spans: Vec::new(),
        }
    }

    /// Builds the label vector from spans; tokens outside every span are KEEP.
    pub fn from_spans(report: Report, spans: Vec<Span>) -> Self {
        let offsets = report.sentence_offsets();
        let mut labels = vec![Label::Keep; report.token_count()];
        for span in &spans {
            let base = offsets[span.sentence_index];
            for l in &mut labels[base + span.token_start..base + span.token_end] {
                *l = Label::Remove;
            }
        }
        LabeledReport {
            report,
            labels,
            spans,
        }
    }

    /// Labels of one sentence.
    pub fn sentence_labels(&self, sentence_index: usize) -> &[Label] {
        let offsets = self.report.sentence_offsets();
        let start = offsets[sentence_index];
        let len = self.report.sentences[sentence_index].tokens.len();
        &self.labels[start..start + len]
    }

    /// Checks label count and span coverage.
    pub fn validate(&self) -> Result<(), String> {
        if self.labels.len() != self.report.token_count() {
            return Err(format!(
                "{} labels for {} tokens",
                self.labels.len(),
                self.report.token_count()
            ));
        }
        let offsets = self.report.sentence_offsets();
        let mut cover = vec![0u32; self.labels.len()];
        for span in &self.spans {
            let sentence = self
                .report
                .sentences
                .get(span.sentence_index)
                .ok_or_else(|| format!("span sentence {} out of range", span.sentence_index))?;
            if span.token_end <= span.token_start || span.token_end > sentence.tokens.len() {
                return Err(format!("bad span range {}", span.key()));
            }
            let base = offsets[span.sentence_index];
            for c in &mut cover[base + span.token_start..base + span.token_end] {
                *c += 1;
            }
        }
        for (i, (label, c)) in self.labels.iter().zip(&cover).enumerate() {
            match (label, c) {
                (Label::Remove, 1) | (Label::Keep, 0) => {}
                _ => return Err(format!("token {i} labelled {label:?} covered {c} times")),
            }
        }
        Ok(())
    }

    /// Per-sentence 0/1 label rows, as written to detection output.
    pub fn label_rows(&self) -> Vec<Vec<u8>> {
        (0..self.report.sentences.len())
            .map(|i| self.sentence_labels(i).iter().map(|l| l.as_bit()).collect())
            .collect()
    }
}

fn is_protected_period(text: &str, sentence_start: usize, period_pos: usize) -> bool {
    let word_start = text[sentence_start..period_pos]
        .rfind(char::is_whitespace)
        .map(|p| sentence_start + p + 1)
        .unwrap_or(sentence_start);
    let word = text[word_start..=period_pos]
        .trim_start_matches(['(', '[', '"', '\''])
        .to_lowercase();
    ABBREVIATIONS.contains(&word.as_str())
}

/// Splits raw report text into sentences.
pub fn segment_sentences(text: &str) -> Vec<Sentence> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut pieces: Vec<(usize, usize)> = Vec::new();
    let mut start = 0;
    let mut i = 0;
    let byte_at = |j: usize| chars.get(j).map(|c| c.0).unwrap_or(text.len());

    while i < chars.len() {
        let (pos, c) = chars[i];
        if c == '\n' {
            let mut j = i + 1;
            while j < chars.len() && matches!(chars[j].1, ' ' | '\t' | '\r') {
                j += 1;
            }
            if j < chars.len() && chars[j].1 == '\n' {
                pieces.push((start, pos));
                start = byte_at(j + 1);
                i = j + 1;
                continue;
            }
        }
        if matches!(c, '.' | '!' | '?') {
            let mut j = i + 1;
            while j < chars.len() && matches!(chars[j].1, '.' | '!' | '?') {
                j += 1;
            }
            while j < chars.len() && matches!(chars[j].1, ')' | ']' | '"' | '\'') {
                j += 1;
            }
            let at_boundary = j == chars.len() || chars[j].1.is_whitespace();
            let single_period = c == '.' && j == i + 1;
            if at_boundary && !(single_period && is_protected_period(text, start, pos)) {
                let end = byte_at(j);
                pieces.push((start, end));
                start = end;
                i = j;
                continue;
            }
        }
        i += 1;
    }
    pieces.push((start, text.len()));

    pieces
        .into_iter()
        .map(|(s, e)| text[s..e].trim())
        .filter(|s| !s.is_empty())
        .enumerate()
        .map(|(index, s)| Sentence::new(index, s))
        .collect()
}

fn is_joiner(prev: char, c: char, next: char) -> bool {
    match c {
        '-' | '\'' | '\u{2019}' | '/' => prev.is_alphanumeric() && next.is_alphanumeric(),
        '.' | ',' | ':' => prev.is_ascii_digit() && next.is_ascii_digit(),
        _ => false,
    }
}

fn abbreviation_at(rest: &str) -> Option<usize> {
    let lower = rest.to_lowercase();
    ABBREVIATIONS.iter().find_map(|a| {
        if lower.starts_with(a)
            && lower[a.len()..]
                .chars()
                .next()
                .is_none_or(|n| !n.is_alphanumeric())
            && rest.is_char_boundary(a.len())
        {
            Some(a.len())
        } else {
            None
        }
    })
}

/// Splits one sentence into tokens.
pub fn tokenize(sentence_text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut push = |start: usize, end: usize, kind: TokenKind| {
        tokens.push(Token {
            text: sentence_text[start..end].to_string(),
            char_start: start,
            char_end: end,
            kind,
        });
    };

    let chars: Vec<(usize, char)> = sentence_text.char_indices().collect();
    let byte_at = |j: usize| chars.get(j).map(|c| c.0).unwrap_or(sentence_text.len());
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c == '_' {
            let mut j = i;
            while j < chars.len() && chars[j].1 == '_' {
                j += 1;
            }
            let kind = if j - i >= 3 {
                TokenKind::Blank
            } else {
                TokenKind::Punct
            };
            push(pos, byte_at(j), kind);
            i = j;
            continue;
        }
        if c.is_alphanumeric() {
            if let Some(len) = abbreviation_at(&sentence_text[pos..]) {
                let end = pos + len;
                push(pos, end, TokenKind::Word);
                while i < chars.len() && chars[i].0 < end {
                    i += 1;
                }
                continue;
            }
            let mut j = i + 1;
            while j < chars.len() {
                let cj = chars[j].1;
                if cj.is_alphanumeric() {
                    j += 1;
                } else if j + 1 < chars.len() && is_joiner(chars[j - 1].1, cj, chars[j + 1].1) {
                    j += 2;
                } else {
                    break;
                }
            }
            let text = &sentence_text[pos..byte_at(j)];
            let kind = if c.is_ascii_digit()
                && text
                    .chars()
                    .filter(|ch| ch.is_alphanumeric())
                    .all(|ch| ch.is_ascii_digit())
            {
                TokenKind::Number
            } else {
                TokenKind::Word
            };
            push(pos, byte_at(j), kind);
            i = j;
            continue;
        }
        push(pos, byte_at(i + 1), TokenKind::Punct);
        i += 1;
    }
    tokens
}

/// Collapses runs of whitespace to single spaces and trims.
pub fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(tokens: &[Token]) -> Vec<&str> {
        tokens.iter().map(|t| t.text.as_str()).collect()
    }

    #[test]
    fn two_terminated_clauses() {
        let s = segment_sentences("No pneumothorax. No effusion.");
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].text, "No pneumothorax.");
        assert_eq!(s[1].index, 1);
    }

    #[test]
    fn empty_text_has_no_sentences() {
        assert!(segment_sentences("").is_empty());
        assert!(segment_sentences("   \n\n  ").is_empty());
    }

    #[test]
    fn blank_placeholder_ends_sentence() {
        let s = segment_sentences("Comparison made to prior study from ___.");
        assert_eq!(s.len(), 1);
        let kinds: Vec<_> = s[0].tokens.iter().map(|t| t.kind).collect();
        assert_eq!(kinds[kinds.len() - 2], TokenKind::Blank);
        assert_eq!(*kinds.last().unwrap(), TokenKind::Punct);
    }

    #[test]
    fn abbreviations_and_decimals_do_not_split() {
        let s = segment_sentences("Seen by Dr. Smith at 8 a.m. today. Nodule measures 2.5 cm.");
        assert_eq!(s.len(), 2, "{s:?}");
        assert_eq!(s[1].text, "Nodule measures 2.5 cm.");
        let t = tokenize("e.g. a 2.5 cm nodule");
        assert_eq!(texts(&t), ["e.g.", "a", "2.5", "cm", "nodule"]);
        assert_eq!(t[2].kind, TokenKind::Number);
    }

    #[test]
    fn blank_line_splits_unterminated_text() {
        let s = segment_sentences("FINDINGS\n\nHeart size normal");
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].text, "FINDINGS");
    }

    #[test]
    fn whitespace_split_with_punct() {
        let t = tokenize("heart size is stable.");
        assert_eq!(texts(&t), ["heart", "size", "is", "stable", "."]);
        assert_eq!(t[4].kind, TokenKind::Punct);
    }

    #[test]
    fn intra_word_hyphen_kept() {
        let t = tokenize("right-sided effusion");
        assert_eq!(texts(&t), ["right-sided", "effusion"]);
    }

    #[test]
    fn blank_is_one_token() {
        let t = tokenize("from ___.");
        assert_eq!(texts(&t), ["from", "___", "."]);
        let kinds: Vec<_> = t.iter().map(|t| t.kind).collect();
        assert_eq!(kinds, [TokenKind::Word, TokenKind::Blank, TokenKind::Punct]);
        let t = tokenize("on _____,");
        assert_eq!(texts(&t), ["on", "_____", ","]);
    }

    #[test]
    fn offsets_index_sentence_text() {
        let text = "Lines (unchanged), tubes; patient's 10:30 film.";
        for t in tokenize(text) {
            assert_eq!(&text[t.char_start..t.char_end], t.text);
        }
    }

    #[test]
    fn closing_paren_stays_with_sentence() {
        let s = segment_sentences("Small effusion (left.) Heart normal.");
        assert_eq!(s[0].text, "Small effusion (left.)");
    }

    #[test]
    fn label_validation_catches_uncovered_remove() {
        let report = Report::new("r", "Heart is stable.");
        let mut lr = LabeledReport::unlabeled(report);
        assert!(lr.validate().is_ok());
        lr.labels[3] = Label::Remove;
        assert!(lr.validate().is_err());
    }
}
