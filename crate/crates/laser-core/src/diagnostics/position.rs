//! Positional-invariance probe: shuffle word order, compare the similarity
//! distributions via Jensen-Shannon divergence.

use super::PositionalInvarianceReport;
use crate::corpus::Document;
use crate::encoder::{cosine, Pooling, TextEncoder};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::util::stable_seed;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const HISTOGRAM_EPS: f64 = 1e-10;

/// Deterministically permute the whitespace-delimited words of a text.
/// The permutation is a pure function of `(seed, text)` and preserves the
/// word multiset.
pub fn shuffle_words(text: &str, seed: u64) -> String {
    let mut words: Vec<&str> = text.split_whitespace().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(stable_seed(seed, &[b"shuffle", text.as_bytes()]));
    words.shuffle(&mut rng);
    words.join(" ")
}

fn histogram<F: Scalar>(samples: &[F], bins: usize) -> Vec<f64> {
    let mut counts = vec![0u64; bins];
    for &s in samples {
        let x = s.to_f64_lossy().clamp(-1.0, 1.0);
        let idx = (((x + 1.0) / 2.0) * bins as f64) as usize;
        counts[idx.min(bins - 1)] += 1;
    }
    let n = samples.len() as f64;
    let norm = 1.0 + bins as f64 * HISTOGRAM_EPS;
    counts
        .iter()
        .map(|&c| (c as f64 / n + HISTOGRAM_EPS) / norm)
        .collect()
}

/// Jensen-Shannon divergence between two sample sets of cosine values.
/// Both are histogrammed on `[-1, 1]` with `bins` equal-width bins,
/// epsilon-smoothed, renormalized; base-2 logs put the result in `[0, 1]`.
pub fn js_divergence<F: Scalar>(samples_p: &[F], samples_q: &[F], bins: usize) -> Result<F> {
    if samples_p.is_empty() || samples_q.is_empty() {
        return Err(Error::EmptyInput("js divergence of an empty sample set".into()));
    }
    if bins == 0 {
        return Err(Error::InvalidArgument("bins must be positive".into()));
    }
    let p = histogram(samples_p, bins);
    let q = histogram(samples_q, bins);
    let mut js = 0.0f64;
    for (pi, qi) in p.iter().zip(&q) {
        let mi = 0.5 * (pi + qi);
        if *pi > 0.0 {
            js += 0.5 * pi * (pi / mi).log2();
        }
        if *qi > 0.0 {
            js += 0.5 * qi * (qi / mi).log2();
        }
    }
    Ok(F::from_f64_lossy(js.clamp(0.0, 1.0)))
}

/// Distribution 1: cosine of the original pairs. Distribution 2: cosine of
/// `(shuffle_words(s1), s2)`. Reports the JS divergence between them.
pub fn positional_invariance<F: Scalar>(
    pairs: &[(Document, Document)],
    encoder: &dyn TextEncoder<F>,
    seed: u64,
    bins: usize,
) -> Result<PositionalInvarianceReport> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("no pairs".into()));
    }
    let left: Vec<&str> = pairs.iter().map(|(a, _)| a.text.as_str()).collect();
    let right: Vec<&str> = pairs.iter().map(|(_, b)| b.text.as_str()).collect();
    let shuffled: Vec<String> = pairs
        .iter()
        .map(|(a, _)| shuffle_words(&a.text, seed))
        .collect();
    let shuffled_refs: Vec<&str> = shuffled.iter().map(String::as_str).collect();

    let e_left = encoder.encode(&left, Pooling::Mean)?;
    let e_right = encoder.encode(&right, Pooling::Mean)?;
    let e_shuffled = encoder.encode(&shuffled_refs, Pooling::Mean)?;

    let mut original = Vec::with_capacity(pairs.len());
    let mut permuted = Vec::with_capacity(pairs.len());
    for i in 0..pairs.len() {
        original.push(cosine(&e_left.row(i), &e_right.row(i))?);
        permuted.push(cosine(&e_shuffled.row(i), &e_right.row(i))?);
    }
    let js: F = js_divergence(&original, &permuted, bins)?;
    Ok(PositionalInvarianceReport {
        js_original_vs_shuffled: js.to_f64_lossy(),
        histogram_bins: bins,
        seed,
        n_pairs: pairs.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::stub::ConstantEncoder;
    use ndarray::array;

    #[test]
    fn shuffle_single_word_is_identity() {
        assert_eq!(shuffle_words("hello", 1), "hello");
    }

    #[test]
    fn shuffle_preserves_multiset_and_is_deterministic() {
        let text = "a b c d e f g";
        let out1 = shuffle_words(text, 3);
        let out2 = shuffle_words(text, 3);
        assert_eq!(out1, out2);
        let mut sorted_in: Vec<&str> = text.split_whitespace().collect();
        let mut sorted_out: Vec<&str> = out1.split_whitespace().collect();
        sorted_in.sort_unstable();
        sorted_out.sort_unstable();
        assert_eq!(sorted_in, sorted_out);
        // Different seeds eventually produce a different order.
        let other = (0..20).map(|s| shuffle_words(text, s)).any(|o| o != out1);
        assert!(other);
    }

    #[test]
    fn identical_sample_lists_have_zero_divergence() {
        let samples = vec![0.1f64, -0.5, 0.9, 0.9];
        let js: f64 = js_divergence(&samples, &samples.clone(), 100).unwrap();
        assert_eq!(js, 0.0);
    }

    #[test]
    fn disjoint_bins_reach_maximal_divergence() {
        let p = vec![-0.9f64; 50];
        let q = vec![0.9f64; 50];
        let js: f64 = js_divergence(&p, &q, 10).unwrap();
        assert!((js - 1.0).abs() < 1e-6, "js = {js}");
    }

    #[test]
    fn hand_computed_half_half_vs_point_mass() {
        // P spreads (0.5, 0.5) over two bins, Q = (1, 0):
        // JS = 0.5*KL(P||M) + 0.5*KL(Q||M) with M = (0.75, 0.25).
        let p = vec![-0.5f64, 0.5];
        let q = vec![-0.5f64, -0.5];
        let js: f64 = js_divergence(&p, &q, 2).unwrap();
        assert!((js - 0.31128).abs() < 1e-4, "js = {js}");
    }

    #[test]
    fn constant_encoder_yields_zero_positional_divergence() {
        let enc = ConstantEncoder::new(array![1.0f64, 2.0]);
        let pairs = vec![
            (
                Document::new("a", "one two three").unwrap(),
                Document::new("b", "four five").unwrap(),
            ),
            (
                Document::new("c", "six seven eight").unwrap(),
                Document::new("d", "nine ten").unwrap(),
            ),
        ];
        let report = positional_invariance(&pairs, &enc, 7, 100).unwrap();
        assert_eq!(report.js_original_vs_shuffled, 0.0);
        assert_eq!(report.n_pairs, 2);
    }
}
