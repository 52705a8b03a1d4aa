//! Tokenization shared by the NLU and the example-based chatbot.

/// A lowercase token with its character span in the source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

/// Lowercases and splits on every non-alphanumeric character.
///
/// Spans are character offsets (not bytes) into `input`, end exclusive.
pub fn tokenize(input: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut start = 0;
    let mut count = 0;
    for (idx, ch) in input.chars().enumerate() {
        count = idx + 1;
        if ch.is_alphanumeric() {
            if current.is_empty() {
                start = idx;
            }
            current.extend(ch.to_lowercase());
        } else if !current.is_empty() {
            tokens.push(Token {
                text: std::mem::take(&mut current),
                start,
                end: idx,
            });
        }
    }
    if !current.is_empty() {
        tokens.push(Token {
            text: current,
            start,
            end: count,
        });
    }
    tokens
}

/// Token texts only.
pub fn words(input: &str) -> Vec<String> {
    tokenize(input).into_iter().map(|t| t.text).collect()
}

/// Extracts the substring covering character offsets `start..end`.
pub fn char_slice(input: &str, start: usize, end: usize) -> String {
    input.chars().skip(start).take(end.saturating_sub(start)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_and_lowercases() {
        let toks = tokenize("Recommend a restaurant in Pittsburgh!");
        let texts: Vec<_> = toks.iter().map(|t| t.text.as_str()).collect();
        assert_eq!(texts, ["recommend", "a", "restaurant", "in", "pittsburgh"]);
        assert_eq!((toks[4].start, toks[4].end), (26, 36));
    }

    #[test]
    fn spans_are_char_offsets() {
        let s = "café Zürich";
        let toks = tokenize(s);
        assert_eq!(toks[1].text, "zürich");
        assert_eq!(char_slice(s, toks[1].start, toks[1].end), "Zürich");
    }

    #[test]
    fn empty_and_punctuation_only() {
        assert!(tokenize("").is_empty());
        assert!(tokenize(" ,.;- ").is_empty());
    }
}
