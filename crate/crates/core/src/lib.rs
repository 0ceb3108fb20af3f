//! Detection and removal of references to prior studies in free-text
//! radiology reports, plus the evaluation machinery around it: three-way diff
//! F1, keyword statistics, exact dot-product retrieval, and semantic metrics.

pub mod corpus;
pub mod detect;
pub mod diff;
pub mod lexicon;
pub mod metrics;
pub mod review;
pub mod rewrite;
pub mod report;
pub mod retrieval;
pub mod scrub;
pub mod stats;
pub mod subword;

pub use detect::{detect, flag_sentences, Detector, SentenceFlag};
pub use lexicon::Lexicon;
pub use report::{Label, LabeledReport, Report, Sentence, Span, Token, TokenKind};
pub use scrub::{scrub, scrub_corpus, ScrubStats};
