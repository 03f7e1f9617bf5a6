/// Token emitted for every double quotation mark.
pub const QUOTE_MARK: &str = "QUOTE_MARK";

fn is_quote(c: char) -> bool {
    matches!(c, '"' | '\u{201C}' | '\u{201D}' | '\u{201E}')
}

/// Lowercased alphanumeric runs, with each double quotation mark (straight or
/// curly) kept as a [`QUOTE_MARK`] token in position.
pub fn tokenize_query(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut word = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() {
            word.extend(c.to_lowercase());
            continue;
        }
        if !word.is_empty() {
            tokens.push(std::mem::take(&mut word));
        }
        if is_quote(c) {
            tokens.push(QUOTE_MARK.to_owned());
        }
    }
    if !word.is_empty() {
        tokens.push(word);
    }
    tokens
}
