//! Filter-then-rewrite pathway: flagged sentences are sent, in chunks, to a
//! completion endpoint with a few-shot prompt; everything else passes
//! through untouched.

mod cost;
mod prompt;
mod transport;

pub use cost::{estimate_cost, CostEstimate, CostInputs};
pub use prompt::{build_prompt, chunk, extract_target, EDITED_LABEL, ORIGINAL_LABEL};
pub use transport::{
    transport_by_name, CompletionPort, CompletionRequest, HttpTransport, MockTransport,
    TransportError, TRANSPORTS,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detect::SentenceFlag;
use crate::report::{segment_sentences, Report};

#[derive(Debug, Error)]
pub enum RewriteError {
    #[error("no sentences to rewrite")]
    EmptyInput,
    #[error("invalid rewrite config: {0}")]
    InvalidConfig(String),
    #[error("{flags} flags for {sentences} sentences")]
    FlagMismatch { flags: usize, sentences: usize },
    #[error(transparent)]
    Transport(#[from] TransportError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextExample {
    pub original: String,
    pub edited: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewriteConfig {
    pub temperature: f64,
    /// Sentences per prompt.
    pub chunk_sentences: usize,
    pub context_examples: Vec<ContextExample>,
    pub endpoint_url: String,
    pub model_name: String,
    pub max_retries: u32,
    /// Currency units per 1000 tokens.
    pub per_1k_token_cost: f64,
    /// Completion token budget as a multiple of the chunk's token count.
    pub completion_token_factor: f64,
    /// Name of the environment variable holding the endpoint API key.
    pub api_key_env: Option<String>,
    pub max_in_flight: usize,
    pub timeout_secs: u64,
}

impl Default for RewriteConfig {
    fn default() -> Self {
        RewriteConfig {
            temperature: 0.3,
            chunk_sentences: 1,
            context_examples: default_context_examples(),
            endpoint_url: "http://127.0.0.1:8080/v1/completions".to_string(),
            model_name: "text-davinci".to_string(),
            max_retries: 2,
            per_1k_token_cost: 0.02,
            completion_token_factor: 2.0,
            api_key_env: None,
            max_in_flight: 4,
            timeout_secs: 60,
        }
    }
}

impl RewriteConfig {
    pub fn validate(&self) -> Result<(), RewriteError> {
        if self.chunk_sentences == 0 {
            return Err(RewriteError::InvalidConfig("chunk_sentences must be >= 1".into()));
        }
        if !(self.temperature >= 0.0) {
            return Err(RewriteError::InvalidConfig("temperature must be >= 0".into()));
        }
        if self.max_in_flight == 0 {
            return Err(RewriteError::InvalidConfig("max_in_flight must be >= 1".into()));
        }
        Ok(())
    }
}

/// Context pairs reconstructed from published before/after examples.
pub fn default_context_examples() -> Vec<ContextExample> {
    [
        ("No interval change from yesterday.", ""),
        (
            "There are large bilateral pleural effusions but decreased since previous.",
            "There are large bilateral pleural effusions.",
        ),
        (
            "Again seen are heterogeneous opacities at the right base, with a small right-sided pleural effusion.",
            "Seen are heterogeneous opacities at the right base, with a small right-sided pleural effusion.",
        ),
        (
            "Right lung opacities have slightly worsened since previous exam and are slightly more confluent, suspicious for an infectious process or aspiration.",
            "Right lung opacities are confluent, suspicious for an infectious process or aspiration.",
        ),
        ("Heart size is stable.", "Heart size is abnormal."),
    ]
    .into_iter()
    .map(|(o, e)| ContextExample {
        original: o.to_string(),
        edited: e.to_string(),
    })
    .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RewriteSource {
    External,
    Mock,
    UnflaggedPassthrough,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewriteResult {
    pub report_id: String,
    pub sentence_index: usize,
    pub original: String,
    pub rewritten: String,
    pub source: RewriteSource,
    /// Set when every attempt failed; `rewritten` then equals `original`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Rewrites flagged sentences through `transport`; unflagged ones pass through.
pub fn rewrite_report(
    report: &Report,
    flags: &[SentenceFlag],
    config: &RewriteConfig,
    transport: &dyn CompletionPort,
) -> Result<Vec<RewriteResult>, RewriteError> {
    config.validate()?;
    if flags.len() != report.sentences.len() {
        return Err(RewriteError::FlagMismatch {
            flags: flags.len(),
            sentences: report.sentences.len(),
        });
    }

    let mut results: Vec<RewriteResult> = report
        .sentences
        .iter()
        .map(|s| RewriteResult {
            report_id: report.id.clone(),
            sentence_index: s.index,
            original: s.text.clone(),
            rewritten: s.text.clone(),
            source: RewriteSource::UnflaggedPassthrough,
            error: None,
        })
        .collect();

    let flagged: Vec<usize> = flags
        .iter()
        .filter(|f| f.flagged)
        .map(|f| f.sentence_index)
        .collect();
    if flagged.is_empty() {
        return Ok(results);
    }

    let chunks = chunk(&flagged, config.chunk_sentences);
    let run = |idx: &&[usize]| -> (Vec<usize>, Result<String, TransportError>) {
        let texts: Vec<String> = idx
            .iter()
            .map(|&i| report.sentences[i].text.clone())
            .collect();
        let tokens: usize = idx.iter().map(|&i| report.sentences[i].tokens.len()).sum();
        let request = CompletionRequest {
            prompt: build_prompt(&texts, config).expect("chunk is non-empty"),
            temperature: config.temperature,
            model: config.model_name.clone(),
            max_tokens: ((tokens as f64) * config.completion_token_factor).ceil() as u32,
        };
        let mut last = None;
        for attempt in 0..=config.max_retries {
            match transport.complete(&request) {
                Ok(text) => return (idx.to_vec(), Ok(text.trim().to_string())),
                Err(e) => {
                    log::debug!("report {} attempt {attempt} failed: {e}", report.id);
                    last = Some(e);
                }
            }
        }
        (idx.to_vec(), Err(last.expect("at least one attempt")))
    };

    let outcomes: Vec<_> = if config.max_in_flight == 1 || chunks.len() == 1 {
        chunks.iter().map(run).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.max_in_flight)
            .build()
            .map_err(|e| RewriteError::InvalidConfig(e.to_string()))?;
        pool.install(|| chunks.par_iter().map(run).collect())
    };

    let source = transport.source();
    for (indices, outcome) in outcomes {
        match outcome {
            Ok(text) => {
                for (i, piece) in indices.iter().zip(distribute(&text, indices.len())) {
                    results[*i].rewritten = piece;
                    results[*i].source = source;
                }
            }
            Err(e) => {
                log::warn!("report {}: keeping original after retries: {e}", report.id);
                for &i in &indices {
                    results[i].source = source;
                    results[i].error = Some(e.to_string());
                }
            }
        }
    }
    Ok(results)
}

/// Splits one completion over `n` chunk sentences: one piece each when the
/// completion has exactly `n` sentences, otherwise all of it on the first.
fn distribute(text: &str, n: usize) -> Vec<String> {
    if n == 1 {
        return vec![text.to_string()];
    }
    let sentences = segment_sentences(text);
    if sentences.len() == n {
        sentences.into_iter().map(|s| s.text).collect()
    } else {
        let mut out = vec![String::new(); n];
        out[0] = text.to_string();
        out
    }
}

/// Report text from per-sentence results, skipping empty rewrites.
pub fn assemble(results: &[RewriteResult]) -> String {
    results
        .iter()
        .map(|r| r.rewritten.trim())
        .filter(|t| !t.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}
