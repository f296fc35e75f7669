//! Length-normalized tf-idf. Because term frequencies are normalized by
//! document length, elongating a document leaves its tf-idf vector exactly
//! unchanged — the statistical reference point the neural encoders are
//! measured against.

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use std::collections::{BTreeMap, HashMap};

/// Sparse term-weight vector keyed by term id. Never stores explicit zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVector<F: Scalar> {
    weights: BTreeMap<u32, F>,
}

impl<F: Scalar> SparseVector<F> {
    pub fn new() -> Self {
        SparseVector {
            weights: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, term: u32, weight: F) {
        if weight != F::zero() {
            self.weights.insert(term, weight);
        }
    }

    pub fn get(&self, term: u32) -> Option<F> {
        self.weights.get(&term).copied()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, F)> + '_ {
        self.weights.iter().map(|(&t, &w)| (t, w))
    }

    /// Largest absolute componentwise difference against another vector.
    pub fn max_abs_diff(&self, other: &Self) -> F {
        let mut max = F::zero();
        for (&t, &w) in &self.weights {
            let d = (w - other.get(t).unwrap_or_else(F::zero)).abs();
            if d > max {
                max = d;
            }
        }
        for (&t, &w) in &other.weights {
            if !self.weights.contains_key(&t) {
                let d = w.abs();
                if d > max {
                    max = d;
                }
            }
        }
        max
    }
}

impl<F: Scalar> Default for SparseVector<F> {
    fn default() -> Self {
        Self::new()
    }
}

/// Document-frequency table over a fixed tokenization (lowercased
/// alphanumeric runs; whitespace and punctuation are separators).
#[derive(Debug, Clone)]
pub struct CorpusStats {
    term_ids: HashMap<String, u32>,
    doc_freq: Vec<u32>,
    n_docs: u32,
}

impl CorpusStats {
    /// Build document frequencies from a corpus. Term ids are assigned in
    /// first-appearance order over the scan, which is deterministic.
    pub fn build<'a>(docs: impl IntoIterator<Item = &'a Document>) -> Self {
        let mut term_ids: HashMap<String, u32> = HashMap::new();
        let mut doc_freq: Vec<u32> = Vec::new();
        let mut n_docs = 0u32;
        let mut seen_in_doc: Vec<u32> = Vec::new();
        for doc in docs {
            n_docs += 1;
            seen_in_doc.clear();
            for term in tokenize(&doc.text) {
                let next_id = term_ids.len() as u32;
                let id = *term_ids.entry(term).or_insert(next_id);
                if id as usize == doc_freq.len() {
                    doc_freq.push(0);
                }
                if !seen_in_doc.contains(&id) {
                    seen_in_doc.push(id);
                    doc_freq[id as usize] += 1;
                }
            }
        }
        CorpusStats {
            term_ids,
            doc_freq,
            n_docs,
        }
    }

    pub fn n_docs(&self) -> u32 {
        self.n_docs
    }

    pub fn term_id(&self, term: &str) -> Option<u32> {
        self.term_ids.get(term).copied()
    }

    pub fn doc_freq(&self, term: &str) -> u32 {
        self.term_id(term)
            .map(|id| self.doc_freq[id as usize])
            .unwrap_or(0)
    }
}

/// The shared tf-idf tokenization: lowercased maximal alphanumeric runs.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut terms = Vec::new();
    let mut current = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() {
            current.extend(c.to_lowercase());
        } else if !current.is_empty() {
            terms.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        terms.push(current);
    }
    terms
}

/// Embed a document against corpus statistics:
/// `weight(t) = (count(t) / total_tokens) * ln(N / df(t))`.
/// Terms absent from the corpus (df = 0) are skipped, and zero weights are
/// never stored.
pub fn tfidf_embed<F: Scalar>(doc: &Document, stats: &CorpusStats) -> Result<SparseVector<F>> {
    let terms = tokenize(&doc.text);
    if terms.is_empty() {
        return Err(Error::EmptyInput(format!(
            "document {} is empty after tokenization",
            doc.id
        )));
    }
    let mut counts: BTreeMap<u32, u64> = BTreeMap::new();
    let mut total = 0u64;
    for term in &terms {
        total += 1;
        if let Some(id) = stats.term_id(term) {
            if stats.doc_freq[id as usize] > 0 {
                *counts.entry(id).or_insert(0) += 1;
            }
        }
    }
    let n = stats.n_docs() as f64;
    let total_f = F::from_f64_lossy(total as f64);
    let mut vec = SparseVector::new();
    for (id, count) in counts {
        let tf = F::from_f64_lossy(count as f64) / total_f;
        let idf = F::from_f64_lossy((n / stats.doc_freq[id as usize] as f64).ln());
        vec.insert(id, tf * idf);
    }
    Ok(vec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elongation::elongate_text;

    fn doc(id: &str, text: &str) -> Document {
        Document::new(id, text).unwrap()
    }

    #[test]
    fn hand_computed_two_doc_corpus() {
        let d1 = doc("d1", "a b");
        let d2 = doc("d2", "a c");
        let stats = CorpusStats::build([&d1, &d2]);
        let v: SparseVector<f64> = tfidf_embed(&d1, &stats).unwrap();
        // a: tf 0.5 * ln(2/2) = 0 (not stored); b: 0.5 * ln(2/1).
        assert_eq!(v.len(), 1);
        let b_id = stats.term_id("b").unwrap();
        let expected = 0.5 * (2.0f64).ln();
        assert!((v.get(b_id).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.3466).abs() < 1e-4);
        assert_eq!(v.get(stats.term_id("a").unwrap()), None);
    }

    #[test]
    fn elongation_invariance_is_exact() {
        let d1 = doc("d1", "a b");
        let d2 = doc("d2", "a c");
        let stats = CorpusStats::build([&d1, &d2]);
        let original: SparseVector<f64> = tfidf_embed(&d1, &stats).unwrap();
        let attacked = doc("d1x", &elongate_text(&d1.text, 3).unwrap());
        let elongated: SparseVector<f64> = tfidf_embed(&attacked, &stats).unwrap();
        assert_eq!(original, elongated);
    }

    #[test]
    fn single_doc_corpus_yields_empty_vector() {
        let d = doc("only", "a b c");
        let stats = CorpusStats::build([&d]);
        let v: SparseVector<f64> = tfidf_embed(&d, &stats).unwrap();
        assert!(v.is_empty());
    }

    #[test]
    fn punctuation_only_text_is_empty_after_tokenization() {
        let d = doc("p", "?!?");
        let stats = CorpusStats::build([&doc("x", "a")]);
        assert!(matches!(
            tfidf_embed::<f64>(&d, &stats),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn tokenize_lowercases_and_splits_punctuation() {
        assert_eq!(tokenize("What is NLP?"), vec!["what", "is", "nlp"]);
        assert_eq!(tokenize("co-operate, NOW"), vec!["co", "operate", "now"]);
    }

    #[test]
    fn works_in_f32_too() {
        let d1 = doc("d1", "a b");
        let d2 = doc("d2", "a c");
        let stats = CorpusStats::build([&d1, &d2]);
        let v: SparseVector<f32> = tfidf_embed(&d1, &stats).unwrap();
        assert_eq!(v.len(), 1);
    }
}
