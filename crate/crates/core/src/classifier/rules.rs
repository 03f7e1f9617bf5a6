use serde::{Deserialize, Serialize};

use crate::dataset::QueryKind;
use crate::text::analyze;

pub const DEFAULT_REPORTING_VERBS: &[&str] =
    &["said", "says", "asked", "replied", "remarked", "according to"];

/// Hard-coded speech/quote detector: a pair of double quotes, or any
/// reporting verb (matched on whole tokens; multi-word entries match as a
/// token sequence).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleDetector {
    verbs: Vec<Vec<String>>,
}

impl Default for RuleDetector {
    fn default() -> Self {
        Self::new(DEFAULT_REPORTING_VERBS.iter().copied())
    }
}

impl RuleDetector {
    pub fn new<'a>(verbs: impl IntoIterator<Item = &'a str>) -> Self {
        Self {
            verbs: verbs
                .into_iter()
                .map(analyze)
                .filter(|v| !v.is_empty())
                .collect(),
        }
    }

    pub fn detect(&self, text: &str) -> QueryKind {
        let quotes = text
            .chars()
            .filter(|&c| matches!(c, '"' | '\u{201C}' | '\u{201D}'))
            .count();
        if quotes >= 2 {
            return QueryKind::SpeechQuote;
        }
        let tokens = analyze(text);
        let hit = self
            .verbs
            .iter()
            .any(|verb| tokens.windows(verb.len()).any(|w| w == verb.as_slice()));
        if hit {
            QueryKind::SpeechQuote
        } else {
            QueryKind::Visual
        }
    }
}

pub fn rule_based_detect(text: &str) -> QueryKind {
    RuleDetector::default().detect(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(
            rule_based_detect("\"We shall fight\", said Churchill"),
            QueryKind::SpeechQuote
        );
        assert_eq!(rule_based_detect("a man rides a horse"), QueryKind::Visual);
        assert_eq!(
            rule_based_detect("she says the vote passed"),
            QueryKind::SpeechQuote
        );
    }

    #[test]
    fn multiword_and_partial_words() {
        assert_eq!(
            rule_based_detect("according to the mayor the bridge is closed"),
            QueryKind::SpeechQuote
        );
        assert_eq!(rule_based_detect("a saidi dancer"), QueryKind::Visual);
        assert_eq!(rule_based_detect("a single \" mark"), QueryKind::Visual);
        let custom = RuleDetector::new(["shouts"]);
        assert_eq!(custom.detect("he shouts at the dog"), QueryKind::SpeechQuote);
        assert_eq!(custom.detect("he said nothing"), QueryKind::Visual);
    }
}
