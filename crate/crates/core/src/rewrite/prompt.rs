use super::{RewriteConfig, RewriteError};

pub const ORIGINAL_LABEL: &str = "Original medical report:";
pub const EDITED_LABEL: &str = "Edited medical report to remove references to prior medical reports:";

/// Partitions `items` into consecutive chunks of at most `n`.
pub fn chunk<T>(items: &[T], n: usize) -> Vec<&[T]> {
    items.chunks(n.max(1)).collect()
}

/// Few-shot prompt: every context pair, then the target sentences under the
/// original label with the edited label left open.
pub fn build_prompt<S: AsRef<str>>(
    sentences: &[S],
    config: &RewriteConfig,
) -> Result<String, RewriteError> {
    if sentences.is_empty() {
        return Err(RewriteError::EmptyInput);
    }
    let mut prompt = String::new();
    for ex in &config.context_examples {
        prompt.push_str(ORIGINAL_LABEL);
        prompt.push(' ');
        prompt.push_str(ex.original.trim());
        prompt.push('\n');
        prompt.push_str(EDITED_LABEL);
        if !ex.edited.trim().is_empty() {
            prompt.push(' ');
            prompt.push_str(ex.edited.trim());
        }
        prompt.push_str("\n\n");
    }
    let target: Vec<&str> = sentences.iter().map(|s| s.as_ref().trim()).collect();
    prompt.push_str(ORIGINAL_LABEL);
    prompt.push(' ');
    prompt.push_str(&target.join(" "));
    prompt.push('\n');
    prompt.push_str(EDITED_LABEL);
    Ok(prompt)
}

/// The target text of a prompt built by [`build_prompt`].
pub fn extract_target(prompt: &str) -> Option<&str> {
    let start = prompt.rfind(ORIGINAL_LABEL)? + ORIGINAL_LABEL.len();
    let end = prompt.rfind(EDITED_LABEL)?;
    (end >= start).then(|| prompt[start..end].trim())
}
