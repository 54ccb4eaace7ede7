//! WordPiece vocabulary, subword tokenization and BIO label alignment.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tokenize::{is_punctuation, word_tokenize};
use crate::error::{Error, Result};
use crate::labels::BioTag;

pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const UNK: &str = "[UNK]";
pub const PAD: &str = "[PAD]";
pub const MASK: &str = "[MASK]";

pub const DEFAULT_MAX_SEQ_LEN: usize = 128;
const MAX_CHARS_PER_WORD: usize = 100;

/// Subword vocabulary in the standard one-token-per-line layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    cls: u32,
    sep: u32,
    unk: u32,
    pad: u32,
}

impl Vocab {
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate() {
            if index.insert(tok.clone(), i as u32).is_some() {
                return Err(Error::invalid(format!("duplicate vocabulary entry `{tok}`")));
            }
        }
        let lookup = |t: &str| {
            index
                .get(t)
                .copied()
                .ok_or_else(|| Error::invalid(format!("vocabulary lacks special token {t}")))
        };
        Ok(Vocab {
            cls: lookup(CLS)?,
            sep: lookup(SEP)?,
            unk: lookup(UNK)?,
            pad: lookup(PAD)?,
            tokens,
            index,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_tokens(text.lines().map(|l| l.trim_end_matches('\r')))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = self.tokens.join("\n");
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Specials, every printable ASCII character as a word-initial and a
    /// continuation piece, then `words`. Any ASCII text tokenizes without
    /// falling back to `[UNK]`.
    pub fn char_level<S: AsRef<str>>(words: &[S]) -> Self {
        let mut tokens: Vec<String> = [PAD, UNK, CLS, SEP, MASK].iter().map(|s| s.to_string()).collect();
        for c in (b'!'..=b'~').map(char::from) {
            tokens.push(c.to_string());
        }
        for c in (b'!'..=b'~').map(char::from) {
            tokens.push(format!("##{c}"));
        }
        let mut seen: std::collections::HashSet<String> = tokens.iter().cloned().collect();
        for w in words {
            let w = w.as_ref().to_string();
            if seen.insert(w.clone()) {
                tokens.push(w);
            }
        }
        Self::from_tokens(tokens).expect("char-level vocabulary is well formed")
    }

    /// Character-level base plus the `max_words` most frequent words of the
    /// corpus (ties alphabetical).
    pub fn build_from_corpus<S: AsRef<str>>(texts: &[S], cased: bool, max_words: usize) -> Self {
        let mut freq: BTreeMap<String, usize> = BTreeMap::new();
        for t in texts {
            let t = if cased { t.as_ref().to_string() } else { t.as_ref().to_lowercase() };
            for w in word_tokenize(&t) {
                for piece in punctuation_pieces(&w) {
                    *freq.entry(piece).or_insert(0) += 1;
                }
            }
        }
        let mut ranked: Vec<(String, usize)> = freq.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let words: Vec<String> = ranked.into_iter().take(max_words).map(|(w, _)| w).collect();
        Self::char_level(&words)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn cls_id(&self) -> u32 {
        self.cls
    }

    pub fn sep_id(&self) -> u32 {
        self.sep
    }

    pub fn unk_id(&self) -> u32 {
        self.unk
    }

    pub fn pad_id(&self) -> u32 {
        self.pad
    }

    /// Greedy longest-match-first segmentation of one punctuation-free piece.
    fn wordpiece(&self, piece: &str, out: &mut Vec<u32>) {
        let chars: Vec<char> = piece.chars().collect();
        if chars.len() > MAX_CHARS_PER_WORD {
            out.push(self.unk);
            return;
        }
        let mut ids = Vec::new();
        let mut start = 0;
        while start < chars.len() {
            let mut end = chars.len();
            let mut found = None;
            while start < end {
                let body: String = chars[start..end].iter().collect();
                let candidate = if start > 0 { format!("##{body}") } else { body };
                if let Some(id) = self.id(&candidate) {
                    found = Some(id);
                    break;
                }
                end -= 1;
            }
            match found {
                Some(id) => {
                    ids.push(id);
                    start = end;
                }
                None => {
                    out.push(self.unk);
                    return;
                }
            }
        }
        out.extend(ids);
    }
}

/// Splits a word at every punctuation character, the way BERT's basic
/// tokenizer does, so "don't" becomes "don", "'", "t".
fn punctuation_pieces(word: &str) -> Vec<String> {
    let mut pieces = Vec::new();
    let mut current = String::new();
    for c in word.chars() {
        if is_punctuation(c) {
            if !current.is_empty() {
                pieces.push(std::mem::take(&mut current));
            }
            pieces.push(c.to_string());
        } else {
            current.push(c);
        }
    }
    if !current.is_empty() {
        pieces.push(current);
    }
    pieces
}

/// Word tokens framed as `[CLS] ... [SEP]` subtokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedText {
    pub words: Vec<String>,
    pub subtokens: Vec<u32>,
    /// `(first_index, length)` into `subtokens` per word; `None` when the word
    /// was cut entirely by truncation.
    pub word_to_subtoken: Vec<Option<(usize, usize)>>,
    pub attention_mask: Vec<u8>,
    pub truncated: bool,
}

impl TokenizedText {
    pub fn len(&self) -> usize {
        self.subtokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subtokens.is_empty()
    }
}

pub fn subword_tokenize(text: &str, vocab: &Vocab, cased: bool, max_seq_len: usize) -> Result<TokenizedText> {
    let words = word_tokenize(text);
    tokenize_words(&words, vocab, cased, max_seq_len)
}

/// Tokenizes pre-split words. Used for NER where word boundaries come from
/// the annotation and must line up with the BIO tags.
pub fn tokenize_words<S: AsRef<str>>(
    words: &[S],
    vocab: &Vocab,
    cased: bool,
    max_seq_len: usize,
) -> Result<TokenizedText> {
    if max_seq_len < 2 {
        return Err(Error::invalid("max_seq_len must leave room for [CLS] and [SEP]"));
    }
    let budget = max_seq_len - 2;
    let mut subtokens = vec![vocab.cls_id()];
    let mut word_to_subtoken = Vec::with_capacity(words.len());
    let mut truncated = false;
    let mut scratch = Vec::new();
    for word in words {
        let word = word.as_ref();
        let normalized = if cased { word.to_string() } else { word.to_lowercase() };
        scratch.clear();
        for piece in punctuation_pieces(&normalized) {
            vocab.wordpiece(&piece, &mut scratch);
        }
        if scratch.is_empty() {
            scratch.push(vocab.unk_id());
        }
        let room = budget + 1 - subtokens.len();
        if room == 0 {
            truncated = true;
            word_to_subtoken.push(None);
            continue;
        }
        let take = scratch.len().min(room);
        if take < scratch.len() {
            truncated = true;
        }
        word_to_subtoken.push(Some((subtokens.len(), take)));
        subtokens.extend_from_slice(&scratch[..take]);
    }
    subtokens.push(vocab.sep_id());
    Ok(TokenizedText {
        words: words.iter().map(|w| w.as_ref().to_string()).collect(),
        attention_mask: vec![1; subtokens.len()],
        subtokens,
        word_to_subtoken,
        truncated,
    })
}

/// Places each word's tag on its first subtoken. `None` marks positions the
/// loss must ignore: specials and continuation pieces.
pub fn align_bio_to_subtokens(t: &TokenizedText, tags: &[BioTag]) -> Result<Vec<Option<BioTag>>> {
    if tags.len() != t.words.len() {
        return Err(Error::invalid(format!(
            "{} tags for {} words",
            tags.len(),
            t.words.len()
        )));
    }
    let mut aligned = vec![None; t.subtokens.len()];
    for (span, &tag) in t.word_to_subtoken.iter().zip(tags) {
        if let Some((first, _)) = *span {
            aligned[first] = Some(tag);
        }
    }
    Ok(aligned)
}

/// Reads each word's tag off its first subtoken. Words lost to truncation,
/// or whose first subtoken is out of range, get `O`.
pub fn project_subtoken_predictions_to_words(t: &TokenizedText, subtoken_tags: &[BioTag]) -> Vec<BioTag> {
    t.word_to_subtoken
        .iter()
        .map(|span| match span {
            Some((first, _)) => subtoken_tags.get(*first).copied().unwrap_or(BioTag::O),
            None => BioTag::O,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vocab() -> Vocab {
        Vocab::from_tokens([PAD, UNK, CLS, SEP, "si", "##ck", "sick", "zomb", "##ified", "to", "my", "s", "##tom", "##ach", "'", "t", "don"])
            .unwrap()
    }

    #[test]
    fn missing_special_is_error() {
        assert!(Vocab::from_tokens(["[CLS]", "[SEP]"]).is_err());
        assert!(Vocab::from_tokens([PAD, UNK, CLS, SEP, "a", "a"]).is_err());
    }

    #[test]
    fn framing_tokens() {
        let v = vocab();
        let t = subword_tokenize("sick to my stomach", &v, false, 128).unwrap();
        assert_eq!(t.subtokens[0], v.cls_id());
        assert_eq!(*t.subtokens.last().unwrap(), v.sep_id());
        assert!(!t.truncated);
        assert_eq!(t.word_to_subtoken[3], Some((4, 3)));
    }

    #[test]
    fn unknown_characters_fall_back() {
        let v = vocab();
        let t = subword_tokenize("xyz", &v, false, 16).unwrap();
        assert_eq!(t.subtokens, vec![v.cls_id(), v.unk_id(), v.sep_id()]);
    }

    #[test]
    fn inner_punctuation_split_into_pieces() {
        let v = vocab();
        let t = subword_tokenize("don't", &v, false, 16).unwrap();
        assert_eq!(t.words, vec!["don't"]);
        assert_eq!(t.word_to_subtoken, vec![Some((1, 3))]);
    }

    #[test]
    fn long_review_truncated_to_limit() {
        let v = Vocab::char_level(&["word"]);
        let text = vec!["word"; 500].join(" ");
        let t = subword_tokenize(&text, &v, true, 128).unwrap();
        assert_eq!(t.subtokens.len(), 128);
        assert!(t.truncated);
        assert_eq!(t.word_to_subtoken.len(), 500);
        assert_eq!(t.word_to_subtoken[125], Some((126, 1)));
        assert_eq!(t.word_to_subtoken[126], None);
    }

    #[test]
    fn partially_cut_word_keeps_prefix() {
        let v = Vocab::char_level::<&str>(&[]);
        let t = subword_tokenize("ab cdef", &v, true, 6).unwrap();
        assert_eq!(t.subtokens.len(), 6);
        assert_eq!(t.word_to_subtoken, vec![Some((1, 2)), Some((3, 2))]);
        assert!(t.truncated);
    }

    #[test]
    fn uncased_ignores_letter_case() {
        let v = vocab();
        let a = subword_tokenize("Zombified", &v, false, 128).unwrap();
        let b = subword_tokenize("zombified", &v, false, 128).unwrap();
        assert_eq!(a.subtokens, b.subtokens);
        assert_ne!(a.subtokens[1], v.unk_id());
        let cased = subword_tokenize("Zombified", &v, true, 128).unwrap();
        assert_eq!(cased.subtokens[1], v.unk_id());
    }

    #[test]
    fn align_single_word() {
        let v = Vocab::from_tokens([PAD, UNK, CLS, SEP, "si", "##ck"]).unwrap();
        let t = subword_tokenize("sick", &v, true, 128).unwrap();
        assert_eq!(t.subtokens.len(), 4);
        let aligned = align_bio_to_subtokens(&t, &[BioTag::B]).unwrap();
        assert_eq!(aligned, vec![None, Some(BioTag::B), None, None]);
    }

    #[test]
    fn align_all_outside() {
        let v = vocab();
        let t = subword_tokenize("sick to my stomach", &v, false, 128).unwrap();
        let aligned = align_bio_to_subtokens(&t, &[BioTag::O; 4]).unwrap();
        let firsts: Vec<_> = t.word_to_subtoken.iter().map(|s| s.unwrap().0).collect();
        for (i, tag) in aligned.iter().enumerate() {
            assert_eq!(tag.is_some(), firsts.contains(&i));
            if let Some(tag) = tag {
                assert_eq!(*tag, BioTag::O);
            }
        }
    }

    #[test]
    fn align_length_mismatch() {
        let v = vocab();
        let t = subword_tokenize("sick to", &v, false, 128).unwrap();
        assert!(align_bio_to_subtokens(&t, &[BioTag::O]).is_err());
    }

    #[test]
    fn projection_edge_cases() {
        let v = vocab();
        let empty = subword_tokenize("", &v, false, 128).unwrap();
        assert!(project_subtoken_predictions_to_words(&empty, &[BioTag::O, BioTag::O]).is_empty());
        let one = subword_tokenize("sick", &v, false, 128).unwrap();
        let preds = [BioTag::O, BioTag::I, BioTag::O];
        assert_eq!(project_subtoken_predictions_to_words(&one, &preds), vec![BioTag::I]);
    }

    #[test]
    fn vocab_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        let v = vocab();
        v.save(&path).unwrap();
        assert_eq!(Vocab::load(&path).unwrap(), v);
    }

    fn tagged_sentence() -> impl Strategy<Value = (Vec<String>, Vec<BioTag>)> {
        prop::collection::vec(("[a-z]{1,7}", 0usize..3), 0..20).prop_map(|pairs| {
            let mut prev = BioTag::O;
            let mut words = Vec::new();
            let mut tags = Vec::new();
            for (w, k) in pairs {
                let mut tag = BioTag::ALL[k];
                if tag == BioTag::I && prev == BioTag::O {
                    tag = BioTag::B;
                }
                prev = tag;
                words.push(w);
                tags.push(tag);
            }
            (words, tags)
        })
    }

    use crate::labels::Label;

    proptest! {
        #[test]
        fn align_project_round_trip((words, tags) in tagged_sentence()) {
            let v = Vocab::char_level(&["ab", "cd", "sick"]);
            let t = tokenize_words(&words, &v, true, 512).unwrap();
            prop_assert!(!t.truncated);
            let aligned = align_bio_to_subtokens(&t, &tags).unwrap();
            let perfect: Vec<BioTag> = aligned.iter().map(|a| a.unwrap_or(BioTag::O)).collect();
            prop_assert_eq!(project_subtoken_predictions_to_words(&t, &perfect), tags);
        }

        #[test]
        fn tokenization_is_deterministic(text in "[a-zA-Z ,.!']{0,60}", cased in any::<bool>()) {
            let v = Vocab::char_level(&["the", "pain"]);
            let a = subword_tokenize(&text, &v, cased, 128).unwrap();
            let b = subword_tokenize(&text, &v, cased, 128).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert!(a.subtokens.len() <= 128);
            let mut next = 1;
            for span in a.word_to_subtoken.iter().flatten() {
                prop_assert_eq!(span.0, next);
                next = span.0 + span.1;
            }
            prop_assert_eq!(next, a.subtokens.len() - 1);
        }
    }
}
