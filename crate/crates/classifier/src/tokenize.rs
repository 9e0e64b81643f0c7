use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;

const PAD_TOKEN: &str = "<pad>";
const UNK_TOKEN: &str = "<unk>";

/// Token to id mapping. Ids 0 and 1 are reserved for padding and unknown
/// tokens; the rest are contiguous.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    token_to_id: BTreeMap<String, u32>,
    id_to_token: Vec<String>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::from_tokens(std::iter::empty::<String>())
    }
}

impl Vocabulary {
    /// Builds a vocabulary from an ordered list of tokens. Duplicates and the
    /// reserved tokens are skipped; ids follow the given order starting at 2.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Vocabulary {
            token_to_id: BTreeMap::new(),
            id_to_token: Vec::new(),
        };
        vocab.push(PAD_TOKEN.to_string());
        vocab.push(UNK_TOKEN.to_string());
        for token in tokens {
            vocab.push(token.into());
        }
        vocab
    }

    /// Collects every token that appears at least `min_count` times in
    /// `texts`, sorted lexicographically so the result does not depend on the
    /// order of the input.
    pub fn build<'a, I>(texts: I, min_count: usize) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for text in texts {
            for token in tokens(text) {
                *counts.entry(token).or_default() += 1;
            }
        }
        Self::from_tokens(
            counts
                .into_iter()
                .filter(|(_, n)| *n >= min_count.max(1))
                .map(|(t, _)| t),
        )
    }

    fn push(&mut self, token: String) {
        if self.token_to_id.contains_key(&token) {
            return;
        }
        let id = self.id_to_token.len() as u32;
        self.token_to_id.insert(token.clone(), id);
        self.id_to_token.push(token);
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        // The reserved entries are always present.
        false
    }

    pub fn id(&self, token: &str) -> u32 {
        self.token_to_id.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.id_to_token.get(id as usize).map(String::as_str)
    }

    /// Tokens in id order, reserved entries included.
    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }
}

/// Splits text into lowercase tokens: runs of alphanumeric characters (and
/// `_`) form words, every other non-whitespace character is its own token.
pub fn tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() || ch == '_' {
            word.extend(ch.to_lowercase());
            continue;
        }
        if !word.is_empty() {
            out.push(std::mem::take(&mut word));
        }
        if !ch.is_whitespace() {
            out.extend(std::iter::once(ch.to_lowercase().collect::<String>()));
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
    out
}

/// Maps `text` to exactly `max_len` ids: known tokens to their id, unknown
/// ones to [`UNK_ID`], truncated or right-padded with [`PAD_ID`].
pub fn tokenize(text: &str, vocab: &Vocabulary, max_len: usize) -> Vec<u32> {
    let mut ids: Vec<u32> = tokens(text)
        .iter()
        .take(max_len)
        .map(|t| vocab.id(t))
        .collect();
    ids.resize(max_len, PAD_ID);
    ids
}

#[cfg(test)]
mod tests {
    use super::*;

    fn heap_vocab() -> Vocabulary {
        Vocabulary::from_tokens(["what", "is", "a", "heap", "?"])
    }

    #[test]
    fn splits_punctuation_and_lowercases() {
        assert_eq!(
            tokens("What is a Heap?"),
            vec!["what", "is", "a", "heap", "?"]
        );
        assert_eq!(tokens("top-k"), vec!["top", "-", "k"]);
        assert_eq!(tokens("  \t "), Vec::<String>::new());
    }

    #[test]
    fn direct_lookup_plus_padding() {
        let vocab = heap_vocab();
        let ids = tokenize("What is a heap?", &vocab, 8);
        let expected: Vec<u32> = ["what", "is", "a", "heap", "?"]
            .iter()
            .map(|t| vocab.id(t))
            .chain([PAD_ID; 3])
            .collect();
        assert_eq!(ids, expected);
        assert!(ids[..5].iter().all(|&id| id >= 2));
    }

    #[test]
    fn unknown_tokens_map_to_unk() {
        let ids = tokenize("zzzunseen token", &heap_vocab(), 4);
        assert_eq!(ids[0], UNK_ID);
        assert_eq!(ids[1], UNK_ID);
        assert_eq!(ids[2], PAD_ID);
    }

    #[test]
    fn deterministic_and_truncating() {
        let vocab = heap_vocab();
        let a = tokenize("what is a heap ? what is a heap ?", &vocab, 6);
        let b = tokenize("what is a heap ? what is a heap ?", &vocab, 6);
        assert_eq!(a, b);
        assert_eq!(a.len(), 6);
        assert!(a.iter().all(|&id| id != PAD_ID));
    }

    #[test]
    fn empty_text_is_all_padding() {
        assert_eq!(tokenize("", &heap_vocab(), 3), vec![PAD_ID; 3]);
    }

    #[test]
    fn build_is_order_independent_and_respects_min_count() {
        let a = Vocabulary::build(["b a a", "c a b"], 2);
        let b = Vocabulary::build(["c a b", "b a a"], 2);
        assert_eq!(a, b);
        assert_eq!(a.tokens(), &["<pad>", "<unk>", "a", "b"]);
        assert_eq!(a.id("c"), UNK_ID);
    }
}
