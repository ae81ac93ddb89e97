//! Text normalization shared by the stub backend, memory relevance and cache
//! keys.

use std::collections::BTreeSet;

const STOP_WORDS: &[&str] = &[
    "a", "about", "after", "all", "also", "am", "an", "and", "any", "are", "as", "at", "be", "been", "but", "by",
    "can", "could", "did", "do", "does", "for", "from", "get", "give", "had", "has", "have", "help", "how", "i", "if",
    "in", "into", "is", "it", "its", "just", "let", "like", "list", "me", "my", "need", "of", "on", "or", "our",
    "please", "show", "so", "some", "tell", "than", "that", "the", "their", "them", "then", "there", "these", "they",
    "this", "to", "up", "us", "was", "we", "were", "what", "when", "where", "which", "who", "will", "with", "would",
    "you", "your", "find", "want", "know", "okay", "ok", "thanks", "thank", "hi", "hello", "yes", "no", "not", "today",
    "now", "very",
];

/// Lowercases, maps every non-alphanumeric char to a space and collapses runs
/// of whitespace.
pub fn normalize(text: &str) -> String {
    let mapped: String = text
        .chars()
        .map(|c| {
            if c.is_alphanumeric() {
                c.to_ascii_lowercase()
            } else {
                ' '
            }
        })
        .collect();
    mapped.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn is_stop_word(token: &str) -> bool {
    STOP_WORDS.contains(&token)
}

/// Light stemming: drop a plural `s` from longer tokens.
fn stem(token: &str) -> String {
    if token.len() > 3 && token.ends_with('s') && !token.ends_with("ss") {
        token[..token.len() - 1].to_string()
    } else {
        token.to_string()
    }
}

/// Stemmed, stop-word-free token set.
pub fn content_tokens(text: &str) -> BTreeSet<String> {
    normalize(text)
        .split(' ')
        .filter(|t| !t.is_empty() && !is_stop_word(t))
        .map(stem)
        .collect()
}

/// Positions where `phrase` occurs in `haystack` on word boundaries; both
/// must already be normalized. A trailing plural `s` on the haystack side is
/// accepted.
pub fn find_phrase(haystack: &str, phrase: &str) -> Option<usize> {
    if phrase.is_empty() {
        return None;
    }
    let hay = format!(" {haystack} ");
    let needle = format!(" {phrase}");
    let mut from = 0;
    while let Some(pos) = hay[from..].find(&needle) {
        let at = from + pos;
        let after = &hay[at + needle.len()..];
        if after.starts_with(' ') || after.starts_with("s ") {
            return Some(at);
        }
        from = at + 1;
    }
    None
}
