//! Shared text analyzer for the full-text index and the hashing embedder.
//!
//! Lowercases, then splits on every non-alphanumeric character. Quote marks
//! fall out as separators, so they never reach the index. The query
//! classifier uses its own tokenizer that keeps quote marks as a signal.

/// Lowercased alphanumeric runs of `text`, in order of appearance.
pub fn analyze(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_and_lowercases() {
        assert_eq!(analyze("The Cat, sat!"), vec!["the", "cat", "sat"]);
        assert_eq!(analyze("\"Hello\" said-he"), vec!["hello", "said", "he"]);
        assert!(analyze("").is_empty());
        assert!(analyze(" ,,\"\" ").is_empty());
    }

    #[test]
    fn keeps_digits_and_unicode_letters() {
        assert_eq!(analyze("Télé 24h"), vec!["télé", "24h"]);
    }
}
