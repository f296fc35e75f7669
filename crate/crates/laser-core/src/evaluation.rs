//! Scoring trained encoders: exhaustive dense retrieval with nDCG@k and
//! STS Spearman correlation.

use crate::corpus::{Document, QRels, StsPair};
use crate::encoder::{cosine, Pooling, TextEncoder};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::util::sha256_hex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;

/// Ranked retrieval output: query id -> (document id, score) descending.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RetrievalRun {
    pub per_query: BTreeMap<String, Vec<(String, f64)>>,
}

impl RetrievalRun {
    /// Scores non-increasing, document ids unique per query.
    pub fn validate(&self) -> Result<()> {
        for (qid, ranking) in &self.per_query {
            let mut seen = std::collections::HashSet::new();
            for window in ranking.windows(2) {
                if window[0].1 < window[1].1 {
                    return Err(Error::InvalidArgument(format!(
                        "query {qid}: scores increase within the ranking"
                    )));
                }
            }
            for (did, _) in ranking {
                if !seen.insert(did) {
                    return Err(Error::InvalidArgument(format!(
                        "query {qid}: duplicate document {did}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One metric over one dataset with one encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metric: String,
    /// Per-query metric values (retrieval) — empty for STS.
    pub per_query: Vec<(String, f64)>,
    /// (predicted cosine, gold score) pairs — STS only.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pairs: Vec<(f64, f64)>,
    pub aggregate: f64,
    pub dataset_fingerprint: String,
    pub encoder_fingerprint: String,
    pub n_excluded_queries: usize,
}

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,aggregate,dataset_fingerprint,encoder_fingerprint\n");
        out.push_str(&format!(
            "{},{},{},{}\n",
            self.metric, self.aggregate, self.dataset_fingerprint, self.encoder_fingerprint
        ));
        out
    }
}

/// `DCG = sum_{i<=k} (2^grade - 1) / log2(i + 1)` over 1-based ranks,
/// normalized by the ideal ordering. Zero when no relevant document is
/// graded.
pub fn ndcg_at_k(ranked_ids: &[&str], grades: &BTreeMap<String, u32>, k: usize) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let gain = |g: u32| (2.0f64.powi(g as i32)) - 1.0;
    let discount = |rank_zero_based: usize| 1.0 / ((rank_zero_based as f64 + 2.0).log2());
    let dcg: f64 = ranked_ids
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, id)| grades.get(*id).map_or(0.0, |&g| gain(g) * discount(i)))
        .sum();
    let mut ideal: Vec<u32> = grades.values().copied().collect();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = ideal
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &g)| gain(g) * discount(i))
        .sum();
    if idcg == 0.0 {
        0.0
    } else {
        dcg / idcg
    }
}

/// Average-tied ranks, 1-based.
fn ranks<F: Scalar>(xs: &[F]) -> Vec<f64> {
    let n = xs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).expect("finite values"));
    let mut out = vec![0.0f64; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        // Positions i..=j share the same value: average their ranks.
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            out[idx] = avg;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation: Pearson correlation of average-tied ranks.
/// Constant inputs are an error (the correlation is undefined).
pub fn spearman<F: Scalar>(xs: &[F], ys: &[F]) -> Result<F> {
    if xs.len() != ys.len() {
        return Err(Error::InvalidArgument(format!(
            "length mismatch: {} vs {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(Error::InvalidArgument(
            "spearman needs at least two observations".into(),
        ));
    }
    let rx = ranks(xs);
    let ry = ranks(ys);
    let n = xs.len() as f64;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n;
    let mx = mean(&rx);
    let my = mean(&ry);
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        let dx = a - mx;
        let dy = b - my;
        cov += dx * dy;
        var_x += dx * dx;
        var_y += dy * dy;
    }
    if var_x == 0.0 || var_y == 0.0 {
        return Err(Error::Undefined(
            "spearman undefined for constant input (zero rank variance)".into(),
        ));
    }
    Ok(F::from_f64_lossy(cov / (var_x * var_y).sqrt()))
}

fn fingerprint_collection(corpus: &[Document], queries: &[Document], qrels: &QRels) -> String {
    let mut hasher = Sha256::new();
    for doc in corpus {
        hasher.update(doc.id.as_bytes());
        hasher.update([0]);
        if let Some(title) = &doc.title {
            hasher.update(title.as_bytes());
        }
        hasher.update([0]);
        hasher.update(doc.text.as_bytes());
        hasher.update([1]);
    }
    for q in queries {
        hasher.update(q.id.as_bytes());
        hasher.update([0]);
        hasher.update(q.text.as_bytes());
        hasher.update([1]);
    }
    for (qid, grades) in &qrels.judgments {
        hasher.update(qid.as_bytes());
        for (did, grade) in grades {
            hasher.update(did.as_bytes());
            hasher.update(grade.to_le_bytes());
        }
    }
    let digest = hasher.finalize();
    sha256_hex(&digest)
}

/// Embed corpus and queries, run exhaustive cosine search, rank top-k with
/// ties broken by ascending document id, and report mean nDCG@k over the
/// queries present in the qrels.
pub fn retrieval_eval<F: Scalar>(
    encoder: &dyn TextEncoder<F>,
    corpus: &[Document],
    queries: &[Document],
    qrels: &QRels,
    k: usize,
    pooling: Pooling,
    use_titles: bool,
) -> Result<(EvalReport, RetrievalRun)> {
    if corpus.is_empty() {
        return Err(Error::EmptyInput("empty corpus".into()));
    }
    if qrels.n_queries() == 0 {
        return Err(Error::EmptyInput("empty qrels".into()));
    }
    let scored_queries: Vec<&Document> = queries
        .iter()
        .filter(|q| qrels.grades(&q.id).is_some())
        .collect();
    let n_excluded = queries.len() - scored_queries.len();
    if n_excluded > 0 {
        log::info!("{n_excluded} queries have no relevance judgments and are excluded");
    }
    if scored_queries.is_empty() {
        return Err(Error::EmptyInput("no queries with relevance judgments".into()));
    }

    let doc_texts: Vec<String> = corpus.iter().map(|d| d.embedding_text(use_titles)).collect();
    let doc_refs: Vec<&str> = doc_texts.iter().map(String::as_str).collect();
    let doc_embeddings = encoder.encode(&doc_refs, pooling)?;
    let query_texts: Vec<&str> = scored_queries.iter().map(|q| q.text.as_str()).collect();
    let query_embeddings = encoder.encode(&query_texts, pooling)?;

    let mut run = RetrievalRun::default();
    let mut per_query = Vec::with_capacity(scored_queries.len());
    let mut total = 0.0f64;
    for (qi, query) in scored_queries.iter().enumerate() {
        let qe = query_embeddings.row(qi);
        let mut scored: Vec<(&str, f64)> = Vec::with_capacity(corpus.len());
        for (di, doc) in corpus.iter().enumerate() {
            let score = cosine(&qe, &doc_embeddings.row(di))?.to_f64_lossy();
            scored.push((doc.id.as_str(), score));
        }
        scored.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .expect("cosine is finite")
                .then_with(|| a.0.cmp(b.0))
        });
        scored.truncate(k);
        let ranked_ids: Vec<&str> = scored.iter().map(|(id, _)| *id).collect();
        let grades = qrels.grades(&query.id).expect("filtered above");
        let value = ndcg_at_k(&ranked_ids, grades, k);
        total += value;
        per_query.push((query.id.clone(), value));
        run.per_query.insert(
            query.id.clone(),
            scored.iter().map(|(id, s)| (id.to_string(), *s)).collect(),
        );
    }

    let report = EvalReport {
        metric: format!("ndcg@{k}"),
        aggregate: total / per_query.len() as f64,
        per_query,
        pairs: Vec::new(),
        dataset_fingerprint: fingerprint_collection(corpus, queries, qrels),
        encoder_fingerprint: encoder.info().fingerprint,
        n_excluded_queries: n_excluded,
    };
    Ok((report, run))
}

/// Spearman correlation (x100) between predicted cosine similarities and
/// gold scores.
pub fn sts_eval<F: Scalar>(
    encoder: &dyn TextEncoder<F>,
    pairs: &[StsPair],
    pooling: Pooling,
) -> Result<EvalReport> {
    if pairs.len() < 2 {
        return Err(Error::EmptyInput("sts evaluation needs >= 2 pairs".into()));
    }
    let left: Vec<&str> = pairs.iter().map(|p| p.sentence1.as_str()).collect();
    let right: Vec<&str> = pairs.iter().map(|p| p.sentence2.as_str()).collect();
    let e_left = encoder.encode(&left, pooling)?;
    let e_right = encoder.encode(&right, pooling)?;
    let mut predicted = Vec::with_capacity(pairs.len());
    for i in 0..pairs.len() {
        predicted.push(cosine(&e_left.row(i), &e_right.row(i))?.to_f64_lossy());
    }
    let gold: Vec<f64> = pairs.iter().map(|p| p.score).collect();
    let rho: f64 = spearman(&predicted, &gold).map_err(|e| match e {
        Error::Undefined(msg) => Error::Undefined(format!(
            "{msg}; the encoder predicted one constant similarity for every pair"
        )),
        other => other,
    })?;

    let mut hasher = Sha256::new();
    for p in pairs {
        hasher.update(p.sentence1.as_bytes());
        hasher.update([0]);
        hasher.update(p.sentence2.as_bytes());
        hasher.update([0]);
        hasher.update(p.score.to_le_bytes());
    }
    Ok(EvalReport {
        metric: "spearman_x100".into(),
        per_query: Vec::new(),
        pairs: predicted.into_iter().zip(gold).collect(),
        aggregate: rho * 100.0,
        dataset_fingerprint: sha256_hex(&hasher.finalize()),
        encoder_fingerprint: encoder.info().fingerprint,
        n_excluded_queries: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::stub::MappedEncoder;
    use ndarray::{array, Array1};

    fn grades(entries: &[(&str, u32)]) -> BTreeMap<String, u32> {
        entries.iter().map(|(d, g)| (d.to_string(), *g)).collect()
    }

    #[test]
    fn ndcg_hand_case() {
        // Only relevant doc at rank 2: DCG = 1/log2(3), IDCG = 1.
        let g = grades(&[("d1", 1)]);
        let value = ndcg_at_k(&["dX", "d1"], &g, 10);
        assert!((value - 0.63093).abs() < 1e-5);
    }

    #[test]
    fn ndcg_perfect_and_zero() {
        let g = grades(&[("d1", 1)]);
        assert_eq!(ndcg_at_k(&["d1", "dX"], &g, 10), 1.0);
        assert_eq!(ndcg_at_k(&["dX", "dY"], &g, 10), 0.0);
        assert_eq!(ndcg_at_k(&["dX"], &BTreeMap::new(), 10), 0.0);
    }

    #[test]
    fn ndcg_graded_ordering_matters() {
        let g = grades(&[("best", 2), ("ok", 1)]);
        let right = ndcg_at_k(&["best", "ok"], &g, 10);
        let wrong = ndcg_at_k(&["ok", "best"], &g, 10);
        assert!(right > wrong);
        assert_eq!(right, 1.0);
    }

    #[test]
    fn spearman_hand_cases() {
        let v = [1.0f64, 2.0, 3.0];
        assert_eq!(spearman(&v, &v).unwrap(), 1.0);
        let rev = [3.0f64, 2.0, 1.0];
        assert_eq!(spearman(&v, &rev).unwrap(), -1.0);
        let swapped = [1.0f64, 3.0, 2.0];
        assert_eq!(spearman(&v, &swapped).unwrap(), 0.5);
    }

    #[test]
    fn spearman_handles_ties_and_rejects_constants() {
        let x = [1.0f64, 1.0, 2.0, 3.0];
        let y = [1.0f64, 1.5, 2.0, 2.5];
        let rho = spearman(&x, &y).unwrap();
        assert!(rho > 0.9);
        let constant = [2.0f64, 2.0, 2.0];
        assert!(matches!(
            spearman(&constant, &[1.0, 2.0, 3.0]),
            Err(Error::Undefined(_))
        ));
    }

    fn basis(dim: usize, i: usize) -> Array1<f64> {
        let mut v = Array1::zeros(dim);
        v[i] = 1.0;
        v
    }

    #[test]
    fn identity_retrieval_scores_perfect_ndcg() {
        // Each doc is a distinct basis vector; each query equals its
        // relevant doc's vector.
        let docs: Vec<Document> = (0..4)
            .map(|i| Document::new(format!("d{i}"), format!("doc text {i}")).unwrap())
            .collect();
        let queries: Vec<Document> = (0..4)
            .map(|i| Document::new(format!("q{i}"), format!("query text {i}")).unwrap())
            .collect();
        let mut entries = Vec::new();
        for i in 0..4 {
            entries.push((format!("doc text {i}"), basis(4, i)));
            entries.push((format!("query text {i}"), basis(4, i)));
        }
        let enc = MappedEncoder::new(entries).unwrap();
        let mut qrels = QRels::default();
        for i in 0..4 {
            qrels.insert(format!("q{i}"), format!("d{i}"), 1);
        }
        let (report, run) =
            retrieval_eval(&enc, &docs, &queries, &qrels, 10, Pooling::Mean, false).unwrap();
        assert_eq!(report.aggregate, 1.0);
        run.validate().unwrap();
        for (_, values) in &report.per_query {
            assert_eq!(*values, 1.0);
        }
    }

    #[test]
    fn ties_break_by_ascending_doc_id() {
        // Two docs collide on the same vector: d_a must rank before d_b.
        let docs = vec![
            Document::new("d_b", "same").unwrap(),
            Document::new("d_a", "same2").unwrap(),
        ];
        let queries = vec![Document::new("q", "query").unwrap()];
        let enc = MappedEncoder::new([
            ("same".to_string(), array![1.0f64, 0.0]),
            ("same2".to_string(), array![1.0f64, 0.0]),
            ("query".to_string(), array![1.0f64, 0.0]),
        ])
        .unwrap();
        let mut qrels = QRels::default();
        qrels.insert("q", "d_a", 1);
        let (report, run) =
            retrieval_eval(&enc, &docs, &queries, &qrels, 10, Pooling::Mean, false).unwrap();
        assert_eq!(run.per_query["q"][0].0, "d_a");
        assert_eq!(report.aggregate, 1.0);
    }

    #[test]
    fn queries_without_judgments_are_excluded() {
        let docs = vec![Document::new("d", "text").unwrap()];
        let queries = vec![
            Document::new("q1", "covered").unwrap(),
            Document::new("q2", "uncovered").unwrap(),
        ];
        let enc = MappedEncoder::new([
            ("text".to_string(), array![1.0f64]),
            ("covered".to_string(), array![1.0f64]),
            ("uncovered".to_string(), array![1.0f64]),
        ])
        .unwrap();
        let mut qrels = QRels::default();
        qrels.insert("q1", "d", 1);
        let (report, _) =
            retrieval_eval(&enc, &docs, &queries, &qrels, 10, Pooling::Mean, false).unwrap();
        assert_eq!(report.n_excluded_queries, 1);
        assert_eq!(report.per_query.len(), 1);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let enc = MappedEncoder::new([("x".to_string(), array![1.0f64])]).unwrap();
        let mut qrels = QRels::default();
        qrels.insert("q", "d", 1);
        assert!(retrieval_eval(&enc, &[], &[], &qrels, 10, Pooling::Mean, false).is_err());
    }

    #[test]
    fn sts_eval_perfect_and_reversed() {
        let pairs = vec![
            StsPair {
                sentence1: "p0".into(),
                sentence2: "q0".into(),
                score: 0.0,
            },
            StsPair {
                sentence1: "p1".into(),
                sentence2: "q1".into(),
                score: 2.5,
            },
            StsPair {
                sentence1: "p2".into(),
                sentence2: "q2".into(),
                score: 5.0,
            },
        ];
        // Similar pairs share direction; gold order matches cosine order.
        let enc = MappedEncoder::new([
            ("p0".to_string(), array![1.0f64, 0.0]),
            ("q0".to_string(), array![-1.0f64, 0.2]),
            ("p1".to_string(), array![1.0f64, 0.0]),
            ("q1".to_string(), array![1.0f64, 1.0]),
            ("p2".to_string(), array![1.0f64, 0.0]),
            ("q2".to_string(), array![1.0f64, 0.01]),
        ])
        .unwrap();
        let report = sts_eval(&enc, &pairs, Pooling::Mean).unwrap();
        assert_eq!(report.aggregate, 100.0);
        assert_eq!(report.pairs.len(), 3);
    }
}
