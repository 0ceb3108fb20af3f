use serde::{Deserialize, Serialize};

use super::{RewriteConfig, EDITED_LABEL, ORIGINAL_LABEL};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostInputs {
    pub total_sentences: u64,
    pub flagged_sentences: u64,
    pub avg_tokens_per_sentence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub unfiltered_cost: f64,
    pub filtered_cost: f64,
}

impl CostEstimate {
    pub fn ratio(&self) -> Option<f64> {
        (self.filtered_cost > 0.0).then(|| self.unfiltered_cost / self.filtered_cost)
    }
}

fn word_count(s: &str) -> usize {
    s.split_whitespace().count()
}

/// Tokens per sentence sent and received. Context pairs are paid once per
/// chunk, so they are spread over the chunk's sentences.
fn tokens_per_sentence(inputs: &CostInputs, config: &RewriteConfig) -> f64 {
    let labels = word_count(ORIGINAL_LABEL) + word_count(EDITED_LABEL);
    let context: usize = config
        .context_examples
        .iter()
        .map(|e| labels + word_count(&e.original) + word_count(&e.edited))
        .sum::<usize>()
        + labels;
    let prompt = context as f64 / config.chunk_sentences.max(1) as f64 + inputs.avg_tokens_per_sentence;
    let completion = config.completion_token_factor * inputs.avg_tokens_per_sentence;
    prompt + completion
}

/// Cost of rewriting every sentence versus only the flagged ones.
pub fn estimate_cost(inputs: &CostInputs, config: &RewriteConfig) -> CostEstimate {
    let per_sentence = tokens_per_sentence(inputs, config) * config.per_1k_token_cost / 1000.0;
    CostEstimate {
        unfiltered_cost: inputs.total_sentences as f64 * per_sentence,
        filtered_cost: inputs.flagged_sentences as f64 * per_sentence,
    }
}
