//! Language-neutral tokenization shared by similarity ranking, prompt length
//! checks and the mock encoder.

/// Splits one line: whitespace-delimited words, or overlapping character
/// bigrams for unsegmented lines (no whitespace, some non-ASCII characters).
pub fn line_tokens(line: &str) -> Vec<String> {
    let trimmed = line.trim();
    if trimmed.is_empty() {
        return Vec::new();
    }
    let unsegmented = !trimmed.chars().any(char::is_whitespace) && !trimmed.is_ascii();
    if !unsegmented {
        return trimmed.split_whitespace().map(str::to_string).collect();
    }
    let chars: Vec<char> = trimmed.chars().collect();
    if chars.len() == 1 {
        return vec![chars[0].to_string()];
    }
    chars.windows(2).map(|w| w.iter().collect()).collect()
}

/// Tokens of a multi-line text, line by line, in order.
pub fn tokens(text: &str) -> Vec<String> {
    text.lines().flat_map(line_tokens).collect()
}

/// Lowercased tokens with surrounding ASCII punctuation removed; empty
/// tokens dropped. Used for similarity ranking.
pub fn normalized_tokens(text: &str) -> Vec<String> {
    tokens(text)
        .into_iter()
        .map(|t| t.trim_matches(|c: char| c.is_ascii_punctuation()).to_lowercase())
        .filter(|t| !t.is_empty())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn words_for_spaced_text() {
        assert_eq!(tokens("apple banana\ncar"), vec!["apple", "banana", "car"]);
    }

    #[test]
    fn single_ascii_word_stays_a_word() {
        assert_eq!(tokens("banana"), vec!["banana"]);
    }

    #[test]
    fn bigrams_for_unsegmented_cjk() {
        assert_eq!(tokens("今天下雨"), vec!["今天", "天下", "下雨"]);
        assert_eq!(tokens("雨"), vec!["雨"]);
    }

    #[test]
    fn normalization_lowercases_and_strips_punctuation() {
        assert_eq!(normalized_tokens("Apple, BANANA! --"), vec!["apple", "banana"]);
    }
}
