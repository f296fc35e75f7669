//! Similarity-based diagnostics: shift under attack, intra-document
//! similarity, and anisotropy estimates.

use super::{IntraSimRecord, IntraSimReport, IsotropyReport, SimilarityShiftRecord, SimilarityShiftReport};
use crate::corpus::Document;
use crate::elongation::elongate_text;
use crate::encoder::{cosine, Pooling, TextEncoder};
use crate::error::{Error, Result, ResultExt};
use crate::scalar::Scalar;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Cosine similarity of each pair before and after attacking BOTH members
/// with `elongate_text(.., m)`.
pub fn similarity_shift<F: Scalar>(
    pairs: &[(Document, Document)],
    encoder: &dyn TextEncoder<F>,
    m: usize,
    pooling: Pooling,
) -> Result<SimilarityShiftReport> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("no pairs for similarity shift".into()));
    }
    let left: Vec<&str> = pairs.iter().map(|(a, _)| a.text.as_str()).collect();
    let right: Vec<&str> = pairs.iter().map(|(_, b)| b.text.as_str()).collect();
    let left_attacked: Vec<String> = pairs
        .iter()
        .map(|(a, _)| elongate_text(&a.text, m))
        .collect::<Result<_>>()?;
    let right_attacked: Vec<String> = pairs
        .iter()
        .map(|(_, b)| elongate_text(&b.text, m))
        .collect::<Result<_>>()?;

    let e_left = encoder.encode(&left, pooling).with_context(|| "original left side".into())?;
    let e_right = encoder
        .encode(&right, pooling)
        .with_context(|| "original right side".into())?;
    let refs: Vec<&str> = left_attacked.iter().map(String::as_str).collect();
    let e_left_attacked = encoder
        .encode(&refs, pooling)
        .with_context(|| "attacked left side".into())?;
    let refs: Vec<&str> = right_attacked.iter().map(String::as_str).collect();
    let e_right_attacked = encoder
        .encode(&refs, pooling)
        .with_context(|| "attacked right side".into())?;

    let mut records = Vec::with_capacity(pairs.len());
    let mut sum_original = 0.0f64;
    let mut sum_attacked = 0.0f64;
    for (i, (a, b)) in pairs.iter().enumerate() {
        let pair_id = format!("{}|{}", a.id, b.id);
        let cos_original = cosine(&e_left.row(i), &e_right.row(i))
            .with_context(|| format!("pair {pair_id}"))?
            .to_f64_lossy();
        let cos_attacked = cosine(&e_left_attacked.row(i), &e_right_attacked.row(i))
            .with_context(|| format!("pair {pair_id} (attacked)"))?
            .to_f64_lossy();
        sum_original += cos_original;
        sum_attacked += cos_attacked;
        records.push(SimilarityShiftRecord {
            pair_id,
            cos_original,
            cos_attacked,
            m,
        });
    }
    let n = records.len() as f64;
    Ok(SimilarityShiftReport {
        m,
        pooling,
        mean_original: sum_original / n,
        mean_attacked: sum_attacked / n,
        mean_delta: (sum_attacked - sum_original) / n,
        records,
    })
}

/// Mean cosine between each content-token embedding and the mean-pooled
/// document embedding.
pub fn intra_document_similarity<F: Scalar>(
    doc: &Document,
    encoder: &dyn TextEncoder<F>,
) -> Result<F> {
    let out = encoder.encode_tokens(&doc.text, false, false)?;
    let content = out.content_positions();
    if content.is_empty() {
        return Err(Error::EmptyInput(format!(
            "document {} has no content tokens",
            doc.id
        )));
    }
    let doc_embedding = &out.pooled_mean;
    let mut total = F::zero();
    for &pos in &content {
        total += cosine(&out.token_embeddings.row(pos), &doc_embedding.view())
            .with_context(|| format!("document {}", doc.id))?;
    }
    Ok(total / F::from_usize_lossy(content.len()))
}

/// Which embeddings the anisotropy estimate samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnisotropyLevel {
    /// Content-token embeddings across the corpus.
    Token,
    /// Mean-pooled document embeddings.
    Document,
}

/// Mean cosine over `n_samples` uniformly drawn unordered pairs of
/// distinct embeddings. Deterministic given the seed.
pub fn anisotropy_estimate<F: Scalar>(
    docs: &[Document],
    encoder: &dyn TextEncoder<F>,
    level: AnisotropyLevel,
    n_samples: usize,
    seed: u64,
) -> Result<F> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be positive".into()));
    }
    let embeddings: Vec<ndarray::Array1<F>> = match level {
        AnisotropyLevel::Document => {
            let texts: Vec<&str> = docs.iter().map(|d| d.text.as_str()).collect();
            if texts.is_empty() {
                return Err(Error::EmptyInput("no documents".into()));
            }
            let pooled = encoder.encode(&texts, Pooling::Mean)?;
            pooled.rows().into_iter().map(|r| r.to_owned()).collect()
        }
        AnisotropyLevel::Token => {
            let mut rows = Vec::new();
            for doc in docs {
                let out = encoder.encode_tokens(&doc.text, false, false)?;
                for pos in out.content_positions() {
                    rows.push(out.token_embeddings.row(pos).to_owned());
                }
            }
            rows
        }
    };
    if embeddings.len() < 2 {
        return Err(Error::EmptyInput(format!(
            "anisotropy needs >= 2 embeddings, have {}",
            embeddings.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = embeddings.len();
    let mut total = F::zero();
    for _ in 0..n_samples {
        let i = rng.gen_range(0..n);
        let mut j = rng.gen_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        total += cosine(&embeddings[i].view(), &embeddings[j].view())?;
    }
    Ok(total / F::from_usize_lossy(n_samples))
}

/// Document-level anisotropy on the originals and on their elongated
/// versions, same seed and sample count for both.
pub fn isotropy_report<F: Scalar>(
    docs: &[Document],
    encoder: &dyn TextEncoder<F>,
    m: usize,
    n_samples: usize,
    seed: u64,
) -> Result<IsotropyReport> {
    let attacked = attack_docs(docs, m)?;
    let original =
        anisotropy_estimate(docs, encoder, AnisotropyLevel::Document, n_samples, seed)?;
    let after =
        anisotropy_estimate(&attacked, encoder, AnisotropyLevel::Document, n_samples, seed)?;
    Ok(IsotropyReport {
        m,
        n_samples,
        seed,
        anisotropy_original: original.to_f64_lossy(),
        anisotropy_attacked: after.to_f64_lossy(),
    })
}

/// Per-document intra-similarity on originals and attacked versions, each
/// adjusted by its condition's token-level anisotropy estimate.
pub fn intra_similarity_report<F: Scalar>(
    docs: &[Document],
    encoder: &dyn TextEncoder<F>,
    m: usize,
    n_samples: usize,
    seed: u64,
) -> Result<IntraSimReport> {
    if docs.is_empty() {
        return Err(Error::EmptyInput("no documents".into()));
    }
    let attacked = attack_docs(docs, m)?;
    let aniso_original =
        anisotropy_estimate(docs, encoder, AnisotropyLevel::Token, n_samples, seed)?.to_f64_lossy();
    let aniso_attacked =
        anisotropy_estimate(&attacked, encoder, AnisotropyLevel::Token, n_samples, seed)?
            .to_f64_lossy();

    let mut records = Vec::with_capacity(docs.len() * 2);
    let mut sum_original = 0.0f64;
    let mut sum_attacked = 0.0f64;
    for (doc, attacked_doc) in docs.iter().zip(&attacked) {
        let intra = intra_document_similarity(doc, encoder)?.to_f64_lossy();
        records.push(IntraSimRecord {
            doc_id: doc.id.clone(),
            intra_sim: intra,
            anisotropy: aniso_original,
            adjusted: intra - aniso_original,
            attacked: false,
        });
        sum_original += intra - aniso_original;

        let intra = intra_document_similarity(attacked_doc, encoder)?.to_f64_lossy();
        records.push(IntraSimRecord {
            doc_id: doc.id.clone(),
            intra_sim: intra,
            anisotropy: aniso_attacked,
            adjusted: intra - aniso_attacked,
            attacked: true,
        });
        sum_attacked += intra - aniso_attacked;
    }
    let n = docs.len() as f64;
    Ok(IntraSimReport {
        m,
        n_samples,
        seed,
        mean_adjusted_original: sum_original / n,
        mean_adjusted_attacked: sum_attacked / n,
        records,
    })
}

fn attack_docs(docs: &[Document], m: usize) -> Result<Vec<Document>> {
    docs.iter()
        .map(|d| {
            Ok(Document {
                id: d.id.clone(),
                title: d.title.clone(),
                text: elongate_text(&d.text, m)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::stub::{ConstantEncoder, TokenTableEncoder};
    use ndarray::array;

    fn doc(id: &str, text: &str) -> Document {
        Document::new(id, text).unwrap()
    }

    #[test]
    fn shift_with_constant_encoder_is_all_ones() {
        let enc = ConstantEncoder::new(array![0.5f64, 0.5]);
        let pairs = vec![
            (doc("a", "one"), doc("b", "two")),
            (doc("c", "three"), doc("d", "four")),
        ];
        let report = similarity_shift(&pairs, &enc, 100, Pooling::Mean).unwrap();
        assert!((report.mean_original - 1.0).abs() < 1e-12);
        assert!((report.mean_attacked - 1.0).abs() < 1e-12);
        assert!(report.mean_delta.abs() < 1e-12);
        assert!(report.summary_consistent(1e-12));
    }

    #[test]
    fn self_pair_similarity_is_attack_invariant() {
        let enc = TokenTableEncoder::new(
            [
                ("x".to_string(), array![1.0f64, 2.0]),
                ("y".to_string(), array![0.5f64, -1.0]),
            ],
            None,
        )
        .unwrap();
        let pairs = vec![(doc("s", "x y"), doc("s2", "x y"))];
        let report = similarity_shift(&pairs, &enc, 7, Pooling::Mean).unwrap();
        assert!((report.records[0].cos_original - 1.0).abs() < 1e-12);
        assert!((report.records[0].cos_attacked - 1.0).abs() < 1e-12);
    }

    #[test]
    fn intra_similarity_hand_case() {
        // Tokens (1,0) and (0,1): document embedding (0.5, 0.5), both
        // cosines 1/sqrt(2).
        let enc = TokenTableEncoder::new(
            [
                ("a".to_string(), array![1.0f64, 0.0]),
                ("b".to_string(), array![0.0f64, 1.0]),
            ],
            None,
        )
        .unwrap();
        let value: f64 = intra_document_similarity(&doc("d", "a b"), &enc).unwrap();
        assert!((value - 0.70711).abs() < 1e-5);
    }

    #[test]
    fn intra_similarity_identical_tokens_is_one() {
        let enc = ConstantEncoder::new(array![0.3f64, 0.4]);
        let value: f64 = intra_document_similarity(&doc("d", "w w w"), &enc).unwrap();
        assert!((value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn anisotropy_identical_embeddings_is_one() {
        let enc = ConstantEncoder::new(array![1.0f64, 1.0]);
        let docs = vec![doc("a", "p q"), doc("b", "r s")];
        let est: f64 =
            anisotropy_estimate(&docs, &enc, AnisotropyLevel::Token, 100, 3).unwrap();
        assert!((est - 1.0).abs() < 1e-12);
        let est: f64 =
            anisotropy_estimate(&docs, &enc, AnisotropyLevel::Document, 100, 3).unwrap();
        assert!((est - 1.0).abs() < 1e-12);
    }

    #[test]
    fn anisotropy_orthonormal_basis_is_zero() {
        let enc = TokenTableEncoder::new(
            [
                ("a".to_string(), array![1.0f64, 0.0, 0.0]),
                ("b".to_string(), array![0.0f64, 1.0, 0.0]),
                ("c".to_string(), array![0.0f64, 0.0, 1.0]),
            ],
            None,
        )
        .unwrap();
        let docs = vec![doc("d", "a b c")];
        let est: f64 = anisotropy_estimate(&docs, &enc, AnisotropyLevel::Token, 500, 9).unwrap();
        assert!(est.abs() < 1e-12);
    }

    #[test]
    fn anisotropy_is_deterministic_and_needs_two() {
        let enc = ConstantEncoder::new(array![1.0f64, 0.0]);
        let docs = vec![doc("a", "p q r")];
        let x: f64 = anisotropy_estimate(&docs, &enc, AnisotropyLevel::Token, 50, 7).unwrap();
        let y: f64 = anisotropy_estimate(&docs, &enc, AnisotropyLevel::Token, 50, 7).unwrap();
        assert_eq!(x, y);
        let single = vec![doc("a", "p")];
        assert!(
            anisotropy_estimate::<f64>(&single, &enc, AnisotropyLevel::Token, 50, 7).is_err()
        );
    }

    #[test]
    fn isotropy_report_with_constant_encoder() {
        let enc = ConstantEncoder::new(array![2.0f64, 1.0]);
        let docs = vec![doc("a", "p"), doc("b", "q")];
        let report = isotropy_report(&docs, &enc, 100, 50, 11).unwrap();
        assert!((report.anisotropy_original - 1.0).abs() < 1e-12);
        assert!((report.anisotropy_attacked - 1.0).abs() < 1e-12);
    }

    #[test]
    fn intra_report_adjustment_is_exact_bookkeeping() {
        let enc = TokenTableEncoder::new(
            [
                ("a".to_string(), array![1.0f64, 0.1]),
                ("b".to_string(), array![0.2f64, 1.0]),
            ],
            None,
        )
        .unwrap();
        let docs = vec![doc("d1", "a b"), doc("d2", "b a")];
        let report = intra_similarity_report(&docs, &enc, 3, 200, 5).unwrap();
        assert_eq!(report.records.len(), 4);
        for r in &report.records {
            assert_eq!(r.adjusted, r.intra_sim - r.anisotropy);
        }
    }
}
