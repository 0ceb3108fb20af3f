//! The prior-reference lexicon: keyword heads, surface variants, `change`
//! qualifiers, rule word lists, and the ordered expansion-rule patterns.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The eighteen keyword heads, in frequency-table order.
pub const HEADS: [&str; 18] = [
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
    "similar",
    "earlier",
    "decreased",
    "recurrence",
    "redemonstrate",
];

const BUNDLED: &str = include_str!("../data/lexicon.toml");

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("lexicon invalid: {0}")]
    Invalid(String),
    #[error("lexicon parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("reading lexicon: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadEntry {
    pub head: String,
    pub variants: Vec<String>,
    pub always_prior: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhrasePattern {
    pub rule_id: String,
    /// Heads this rule fires for; empty means all heads.
    #[serde(default)]
    pub triggers: Vec<String>,
    #[serde(default = "enabled_default")]
    pub enabled: bool,
}

fn enabled_default() -> bool {
    true
}

impl PhrasePattern {
    pub fn fires_for(&self, head: &str) -> bool {
        self.triggers.is_empty() || self.triggers.iter().any(|t| t == head)
    }
}

/// Closed word classes consulted by the expansion rules.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct WordLists {
    pub phrase_heads: Vec<String>,
    pub phrase_head_leads: Vec<String>,
    pub keyword_followers: Vec<String>,
    pub relative_pronouns: Vec<String>,
    pub auxiliaries: Vec<String>,
    pub degree_adverbs: Vec<String>,
    pub conjunctions: Vec<String>,
    pub degree_prepositions: Vec<String>,
    pub comparative_markers: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct LexiconFile {
    #[serde(default = "default_change_window")]
    change_window: usize,
    #[serde(default = "default_phrase_window")]
    phrase_window: usize,
    change_qualifiers: Vec<String>,
    #[serde(default)]
    words: WordLists,
    heads: Vec<HeadEntry>,
    #[serde(default)]
    patterns: Vec<PhrasePattern>,
}

fn default_change_window() -> usize {
    2
}

fn default_phrase_window() -> usize {
    4
}

#[derive(Debug, Clone, Default)]
pub(crate) struct WordSets {
    pub phrase_heads: HashSet<String>,
    pub phrase_head_leads: HashSet<String>,
    pub keyword_followers: HashSet<String>,
    pub relative_pronouns: HashSet<String>,
    pub auxiliaries: HashSet<String>,
    pub degree_adverbs: HashSet<String>,
    pub conjunctions: HashSet<String>,
    pub degree_prepositions: HashSet<String>,
    pub comparative_markers: HashSet<String>,
}

fn set(words: &[String]) -> HashSet<String> {
    words.iter().map(|w| w.to_lowercase()).collect()
}

impl From<&WordLists> for WordSets {
    fn from(w: &WordLists) -> Self {
        WordSets {
            phrase_heads: set(&w.phrase_heads),
            phrase_head_leads: set(&w.phrase_head_leads),
            keyword_followers: set(&w.keyword_followers),
            relative_pronouns: set(&w.relative_pronouns),
            auxiliaries: set(&w.auxiliaries),
            degree_adverbs: set(&w.degree_adverbs),
            conjunctions: set(&w.conjunctions),
            degree_prepositions: set(&w.degree_prepositions),
            comparative_markers: set(&w.comparative_markers),
        }
    }
}

/// Validated, immutable lexicon.
#[derive(Debug, Clone)]
pub struct Lexicon {
    pub heads: Vec<HeadEntry>,
    pub change_qualifiers: Vec<String>,
    pub change_window: usize,
    pub phrase_window: usize,
    pub words: WordLists,
    pub patterns: Vec<PhrasePattern>,
    variant_index: HashMap<String, usize>,
    qualifier_set: HashSet<String>,
    pub(crate) word_sets: WordSets,
}

impl Lexicon {
    /// The default lexicon shipped with the crate.
    pub fn bundled() -> Self {
        Self::from_toml(BUNDLED).expect("bundled lexicon is valid")
    }

    pub fn bundled_source() -> &'static str {
        BUNDLED
    }

    pub fn load(path: &Path) -> Result<Self, LexiconError> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn from_toml(text: &str) -> Result<Self, LexiconError> {
        let file: LexiconFile = toml::from_str(text)?;
        Self::build(file)
    }

    fn build(file: LexiconFile) -> Result<Self, LexiconError> {
        let invalid = |m: String| Err(LexiconError::Invalid(m));
        if file.heads.len() != HEADS.len() {
            return invalid(format!("expected 18 heads, found {}", file.heads.len()));
        }
        let names: HashSet<&str> = file.heads.iter().map(|h| h.head.as_str()).collect();
        for h in HEADS {
            if !names.contains(h) {
                return invalid(format!("missing head `{h}`"));
            }
        }
        let mut variant_index = HashMap::new();
        for (i, entry) in file.heads.iter().enumerate() {
            let expect_prior = entry.head != "change";
            if entry.always_prior != expect_prior {
                return invalid(format!(
                    "head `{}` must have always_prior = {expect_prior}",
                    entry.head
                ));
            }
            if entry.variants.is_empty() {
                return invalid(format!("head `{}` has no variants", entry.head));
            }
            for v in &entry.variants {
                let v = v.to_lowercase();
                if let Some(prev) = variant_index.insert(v.clone(), i) {
                    if prev != i {
                        return invalid(format!("variant `{v}` listed under two heads"));
                    }
                }
            }
        }
        for p in &file.patterns {
            for t in &p.triggers {
                if !names.contains(t.as_str()) {
                    return invalid(format!(
                        "pattern `{}` triggers on unknown head `{t}`",
                        p.rule_id
                    ));
                }
            }
        }
        let qualifier_set = set(&file.change_qualifiers);
        let word_sets = WordSets::from(&file.words);
        Ok(Lexicon {
            heads: file.heads,
            change_qualifiers: file.change_qualifiers,
            change_window: file.change_window,
            phrase_window: file.phrase_window,
            words: file.words,
            patterns: file.patterns,
            variant_index,
            qualifier_set,
            word_sets,
        })
    }

    /// Head entry whose variants include `word` (case-insensitive).
    pub fn head_of(&self, word: &str) -> Option<&HeadEntry> {
        let idx = if word.chars().any(|c| c.is_uppercase()) {
            self.variant_index.get(&word.to_lowercase())
        } else {
            self.variant_index.get(word)
        }?;
        Some(&self.heads[*idx])
    }

    pub fn is_change_qualifier(&self, word: &str) -> bool {
        self.qualifier_set.contains(&word.to_lowercase())
    }

    pub fn is_head(&self, name: &str) -> bool {
        self.heads.iter().any(|h| h.head == name)
    }

    /// Every variant of every head, lowercase.
    pub fn all_variants(&self) -> impl Iterator<Item = &str> {
        self.variant_index.keys().map(String::as_str)
    }
}
