//! Word-level vocabulary and tokenizer for the local transformer backend.

use crate::elongation::special;
use crate::elongation::TokenSequence;
use crate::encoder::Tokenize;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

pub const SPECIAL_TOKENS: [&str; 5] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"];

/// Lowercase word tokenization: maximal alphanumeric runs plus individual
/// punctuation characters.
pub fn word_tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() {
            current.extend(c.to_lowercase());
        } else {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
            if !c.is_whitespace() {
                tokens.push(c.to_string());
            }
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Fixed vocabulary mapping words to ids. Ids `0..5` are the special
/// tokens; words follow in frequency order (count desc, then word asc), so
/// building from the same corpus always yields the same table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WordVocab {
    words: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, u32>,
}

impl WordVocab {
    /// Build from an iterator of texts, keeping at most `max_words`
    /// non-special entries.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>, max_words: usize) -> Self {
        let mut counts: HashMap<String, u64> = HashMap::new();
        for text in texts {
            for token in word_tokenize(text) {
                *counts.entry(token).or_insert(0) += 1;
            }
        }
        let mut ranked: Vec<(String, u64)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(max_words);

        let mut words: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        words.extend(ranked.into_iter().map(|(w, _)| w));
        Self::from_words(words)
    }

    /// Rebuild from a stored word list (index 0..5 must be the specials).
    pub fn from_words(words: Vec<String>) -> Self {
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32))
            .collect();
        WordVocab { words, index }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn n_words(&self) -> usize {
        self.words.len() - SPECIAL_TOKENS.len()
    }

    pub fn id(&self, word: &str) -> Option<u32> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: u32) -> Option<&str> {
        self.words.get(id as usize).map(String::as_str)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Restore the index after deserialization.
    pub fn rebuild_index(&mut self) {
        self.index = self
            .words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32))
            .collect();
    }

    /// Tokenize into `[CLS] words... [SEP]`, truncating content to fit
    /// `max_len`. Unknown words map to `[UNK]`.
    pub fn encode_text(&self, text: &str, source_id: &str, max_len: usize) -> TokenSequence {
        let budget = max_len.saturating_sub(2).max(1);
        let mut ids = vec![special::CLS];
        let mut mask = vec![true];
        for word in word_tokenize(text).into_iter().take(budget) {
            ids.push(self.id(&word).unwrap_or(special::UNK));
            mask.push(false);
        }
        ids.push(special::SEP);
        mask.push(true);
        TokenSequence {
            token_ids: ids,
            special_mask: mask,
            source_id: source_id.to_string(),
        }
    }
}

impl Tokenize for WordVocab {
    fn tokenize(&self, text: &str, source_id: &str, max_len: usize) -> TokenSequence {
        self.encode_text(text, source_id, max_len)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn word_tokenize_splits_punctuation() {
        assert_eq!(word_tokenize("What is NLP?"), vec!["what", "is", "nlp", "?"]);
        assert_eq!(word_tokenize("a  b"), vec!["a", "b"]);
    }

    #[test]
    fn vocab_is_deterministic_and_orders_by_frequency() {
        let texts = ["b b b a a c", "a b"];
        let v1 = WordVocab::build(texts.iter().copied(), 100);
        let v2 = WordVocab::build(texts.iter().copied(), 100);
        assert_eq!(v1.words(), v2.words());
        // b(4) before a(3) before c(1), after the 5 specials.
        assert_eq!(v1.word(5), Some("b"));
        assert_eq!(v1.word(6), Some("a"));
        assert_eq!(v1.word(7), Some("c"));
    }

    #[test]
    fn encode_text_brackets_and_truncates() {
        let v = WordVocab::build(["alpha beta gamma"].into_iter(), 10);
        let seq = v.encode_text("alpha beta gamma delta", "d0", 5);
        assert_eq!(seq.len(), 5);
        assert_eq!(seq.token_ids[0], special::CLS);
        assert_eq!(*seq.token_ids.last().unwrap(), special::SEP);
        assert_eq!(seq.n_content(), 3);
        seq.validate().unwrap();
        // Unknown word maps to UNK when in budget.
        let seq = v.encode_text("delta", "d1", 8);
        assert_eq!(seq.token_ids[1], special::UNK);
    }
}
