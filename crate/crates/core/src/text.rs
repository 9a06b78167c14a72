//! Tokenization shared by annotation, retrieval and summarization.

/// Lowercased runs of alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

const STOPWORDS: &[&str] = &[
    "a", "about", "after", "again", "all", "am", "an", "and", "any", "are", "as", "at", "be",
    "been", "but", "by", "can", "could", "did", "do", "does", "for", "from", "had", "has", "have",
    "he", "her", "him", "his", "how", "i", "if", "in", "into", "is", "it", "its", "just", "me",
    "my", "no", "not", "of", "on", "or", "our", "she", "so", "that", "the", "their", "them",
    "then", "there", "they", "this", "to", "too", "up", "us", "was", "we", "were", "what", "when",
    "which", "who", "will", "with", "would", "you", "your",
];

pub fn is_stopword(token: &str) -> bool {
    STOPWORDS.binary_search(&token).is_ok()
}

/// Tokens that carry content: not a stopword and at least three characters.
pub fn content_tokens(text: &str) -> Vec<String> {
    let mut out: Vec<String> = tokenize(text)
        .into_iter()
        .filter(|t| t.chars().count() >= 3 && !is_stopword(t))
        .collect();
    out.sort();
    out.dedup();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stopwords_are_sorted() {
        assert!(STOPWORDS.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn splits_on_non_alphanumerics() {
        assert_eq!(tokenize("I'm SO happy, today!"), vec!["i", "m", "so", "happy", "today"]);
        assert!(tokenize("  ...  ").is_empty());
        assert_eq!(tokenize("Café über"), vec!["café", "über"]);
    }

    #[test]
    fn content_tokens_drop_function_words() {
        assert_eq!(content_tokens("My sister Clara got married in Lisbon"), vec![
            "clara", "got", "lisbon", "married", "sister"
        ]);
    }
}
