//! Whitespace-and-punctuation word tokenizer.

/// One word token with its character (not byte) offsets into the source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordToken {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

pub(crate) fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '…' | '“' | '”' | '‘' | '’' | '«' | '»' | '—' | '–' | '¡' | '¿' | '•'
        )
}

/// Splits on whitespace, then peels leading and trailing punctuation off each
/// chunk one character at a time. Punctuation inside a chunk ("don't", "2.5mg")
/// stays attached.
pub fn word_tokenize(text: &str) -> Vec<String> {
    word_tokenize_with_offsets(text)
        .into_iter()
        .map(|t| t.text)
        .collect()
}

pub fn word_tokenize_with_offsets(text: &str) -> Vec<WordToken> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_whitespace() {
            i += 1;
            continue;
        }
        let chunk_start = i;
        while i < chars.len() && !chars[i].is_whitespace() {
            i += 1;
        }
        split_chunk(&chars, chunk_start, i, &mut out);
    }
    out
}

fn split_chunk(chars: &[char], mut lo: usize, mut hi: usize, out: &mut Vec<WordToken>) {
    let single = |at: usize| WordToken {
        text: chars[at].to_string(),
        start: at,
        end: at + 1,
    };
    while lo < hi && is_punctuation(chars[lo]) {
        out.push(single(lo));
        lo += 1;
    }
    let mut trailing = Vec::new();
    while hi > lo && is_punctuation(chars[hi - 1]) {
        hi -= 1;
        trailing.push(single(hi));
    }
    if lo < hi {
        out.push(WordToken {
            text: chars[lo..hi].iter().collect(),
            start: lo,
            end: hi,
        });
    }
    out.extend(trailing.into_iter().rev());
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_trailing_period() {
        assert_eq!(
            word_tokenize("sick to my stomach."),
            vec!["sick", "to", "my", "stomach", "."]
        );
    }

    #[test]
    fn empty_and_whitespace() {
        assert!(word_tokenize("").is_empty());
        assert!(word_tokenize("  \t\n").is_empty());
    }

    #[test]
    fn plain_phrase() {
        assert_eq!(word_tokenize("3 days of hell"), vec!["3", "days", "of", "hell"]);
    }

    #[test]
    fn inner_punctuation_kept() {
        assert_eq!(
            word_tokenize("(don't) take 2.5mg!!"),
            vec!["(", "don't", ")", "take", "2.5mg", "!", "!"]
        );
        assert_eq!(word_tokenize("..."), vec![".", ".", "."]);
    }

    #[test]
    fn offsets_are_char_based() {
        let toks = word_tokenize_with_offsets("café, zombified");
        assert_eq!(toks[0], WordToken { text: "café".into(), start: 0, end: 4 });
        assert_eq!(toks[1].start, 4);
        assert_eq!(toks[2], WordToken { text: "zombified".into(), start: 6, end: 15 });
    }
}
