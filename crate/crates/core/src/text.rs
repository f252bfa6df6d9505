//! Tokenization shared by narrator detection, context truncation and metrics.

/// Whitespace-delimited token count.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Metric tokenization: lowercase, split on whitespace, strip leading and
/// trailing punctuation from each token, drop tokens left empty.
pub fn metric_tokens(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|t| {
            t.trim_matches(|c: char| !c.is_alphanumeric())
                .to_lowercase()
        })
        .filter(|t| !t.is_empty())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens_strip_punctuation() {
        assert_eq!(
            metric_tokens("The cat, sat!  \"Don't\" --"),
            vec!["the", "cat", "sat", "don't"]
        );
        assert_eq!(word_count("  a  b\tc\n"), 3);
        assert!(metric_tokens("").is_empty());
    }
}
