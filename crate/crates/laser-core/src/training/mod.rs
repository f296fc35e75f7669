//! Contrastive training: pair construction (self-reference,
//! intra-reference, dropout baseline, externally supplied pairs), the
//! infoNCE objective, and the fine-tuning loop.

mod loss;
mod optimizer;
mod trainer;

pub use loss::{info_nce_loss, info_nce_loss_grad, SimilarityKind};
pub use optimizer::{Adam, AdamConfig};
pub use trainer::{train, StepRecord, TrainLog};

use crate::corpus::{select_anchor, AnchorStrategy, Document};
use crate::elongation::{elongate_tokens, sample_m, ElongationMode, ElongationPlan, TokenSequence};
use crate::encoder::{Pooling, Tokenize};
use crate::error::{Error, Result};
use crate::util::stable_seed;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Where a training pair came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    SelfRef,
    IntraRef,
    Baseline,
    /// Caller-supplied (anchor, positive) text pairs, e.g. duplicate
    /// question pairs.
    External,
}

/// Which pair builder to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairMode {
    SelfRef,
    IntraRef,
    Baseline,
}

impl std::str::FromStr for PairMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "self-ref" => Ok(PairMode::SelfRef),
            "intra-ref" => Ok(PairMode::IntraRef),
            "baseline" => Ok(PairMode::Baseline),
            other => Err(Error::InvalidArgument(format!(
                "unknown pair mode {other:?} (expected self-ref|intra-ref|baseline)"
            ))),
        }
    }
}

/// One (anchor, positive) training example.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairExample {
    pub anchor: TokenSequence,
    pub positive: TokenSequence,
    pub provenance: Provenance,
    pub m_used: usize,
}

/// Hyperparameters of a fine-tuning run. Defaults follow the standard
/// recipe: temperature 0.05, learning rate 3e-5, one epoch, batch 64, max
/// sequence length 256, mean pooling, first-sentence anchors, random
/// elongation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub temperature: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub max_len: usize,
    pub pooling: Pooling,
    pub anchor_strategy: AnchorStrategy,
    pub elongation: ElongationMode,
    pub similarity: SimilarityKind,
    pub warmup_frac: f64,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            temperature: 0.05,
            learning_rate: 3e-5,
            epochs: 1,
            batch_size: 64,
            max_len: 256,
            pooling: Pooling::Mean,
            anchor_strategy: AnchorStrategy::First,
            elongation: ElongationMode::Random,
            similarity: SimilarityKind::Cosine,
            warmup_frac: 0.1,
            seed: 42,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.temperature <= 0.0 {
            return Err(Error::InvalidArgument("temperature must be > 0".into()));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::InvalidArgument("learning rate must be > 0".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::InvalidArgument(
                "batch_size must be >= 2 for in-batch negatives".into(),
            ));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be >= 1".into()));
        }
        if self.max_len < 3 {
            return Err(Error::InvalidArgument("max_len must be >= 3".into()));
        }
        if !(0.0..=1.0).contains(&self.warmup_frac) {
            return Err(Error::InvalidArgument("warmup_frac outside [0, 1]".into()));
        }
        ElongationPlan::new(self.elongation, self.max_len, self.seed)?;
        Ok(())
    }

    /// The elongation policy this config induces.
    pub fn elongation_plan(&self) -> ElongationPlan {
        ElongationPlan {
            mode: self.elongation,
            max_len: self.max_len,
            seed: self.seed,
        }
    }
}

/// Bookkeeping from a pair-building pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildStats {
    pub pairs: usize,
    pub skipped: usize,
    /// Single-sentence documents that fell back from intra-ref to self-ref.
    pub intra_fallbacks: usize,
}

fn elongation_factor(
    doc_id: &str,
    n_content: usize,
    n_special: usize,
    cfg: &TrainingConfig,
) -> Result<usize> {
    match cfg.elongation {
        ElongationMode::Fixed { m } => Ok(m),
        ElongationMode::Random => {
            let mut rng =
                ChaCha8Rng::seed_from_u64(stable_seed(cfg.seed, &[b"m", doc_id.as_bytes()]));
            sample_m(n_content, n_special, cfg.max_len, &mut rng)
        }
    }
}

/// Build the training pair for one document, or `None` when the document
/// has no tokenizable content. Pure in `(doc, cfg)`, so documents can be
/// processed in parallel and in any order.
pub fn pair_for_doc(
    doc: &Document,
    mode: PairMode,
    cfg: &TrainingConfig,
    tok: &dyn Tokenize,
) -> Result<Option<(PairExample, bool)>> {
    let selection = select_anchor(doc, cfg.anchor_strategy, cfg.seed);
    let anchor_seq = tok.tokenize(&selection.anchor_text, &doc.id, cfg.max_len);
    if anchor_seq.n_content() == 0 {
        return Ok(None);
    }

    let pair = match mode {
        PairMode::Baseline => (
            PairExample {
                anchor: anchor_seq.clone(),
                positive: anchor_seq,
                provenance: Provenance::Baseline,
                m_used: 1,
            },
            false,
        ),
        PairMode::SelfRef => {
            let m = elongation_factor(&doc.id, anchor_seq.n_content(), anchor_seq.n_special(), cfg)?;
            let positive = elongate_tokens(&anchor_seq, m, cfg.max_len)?;
            (
                PairExample {
                    anchor: anchor_seq,
                    positive,
                    provenance: Provenance::SelfRef,
                    m_used: m,
                },
                false,
            )
        }
        PairMode::IntraRef => {
            let m = elongation_factor(&doc.id, anchor_seq.n_content(), anchor_seq.n_special(), cfg)?;
            if selection.remainder_text.is_empty() {
                // Single-sentence document: self-reference fallback.
                let positive = elongate_tokens(&anchor_seq, m, cfg.max_len)?;
                (
                    PairExample {
                        anchor: anchor_seq,
                        positive,
                        provenance: Provenance::SelfRef,
                        m_used: m,
                    },
                    true,
                )
            } else {
                let positive = tok.tokenize(&selection.remainder_text, &doc.id, cfg.max_len);
                if positive.n_content() == 0 {
                    return Ok(None);
                }
                let augmented_anchor = elongate_tokens(&anchor_seq, m, cfg.max_len)?;
                (
                    PairExample {
                        anchor: augmented_anchor,
                        positive,
                        provenance: Provenance::IntraRef,
                        m_used: m,
                    },
                    false,
                )
            }
        }
    };
    Ok(Some(pair))
}

/// Build pairs for a whole corpus, skipping documents without tokenizable
/// content (counted in the stats).
pub fn build_pairs(
    docs: &[Document],
    mode: PairMode,
    cfg: &TrainingConfig,
    tok: &dyn Tokenize,
) -> Result<(Vec<PairExample>, BuildStats)> {
    let mut pairs = Vec::with_capacity(docs.len());
    let mut stats = BuildStats::default();
    for doc in docs {
        match pair_for_doc(doc, mode, cfg, tok)? {
            Some((pair, fallback)) => {
                stats.pairs += 1;
                stats.intra_fallbacks += usize::from(fallback);
                pairs.push(pair);
            }
            None => stats.skipped += 1,
        }
    }
    if stats.skipped > 0 {
        log::warn!("skipped {} documents without tokenizable content", stats.skipped);
    }
    if stats.intra_fallbacks > 0 {
        log::info!(
            "{} single-sentence documents fell back to self-reference",
            stats.intra_fallbacks
        );
    }
    Ok((pairs, stats))
}

/// Build pairs from caller-supplied (anchor, positive) texts.
pub fn build_pairs_from_texts(
    texts: &[(String, String)],
    cfg: &TrainingConfig,
    tok: &dyn Tokenize,
) -> Result<(Vec<PairExample>, BuildStats)> {
    let mut pairs = Vec::with_capacity(texts.len());
    let mut stats = BuildStats::default();
    for (i, (anchor_text, positive_text)) in texts.iter().enumerate() {
        let anchor = tok.tokenize(anchor_text, &format!("pair-{i}-a"), cfg.max_len);
        let positive = tok.tokenize(positive_text, &format!("pair-{i}-p"), cfg.max_len);
        if anchor.n_content() == 0 || positive.n_content() == 0 {
            stats.skipped += 1;
            continue;
        }
        stats.pairs += 1;
        pairs.push(PairExample {
            anchor,
            positive,
            provenance: Provenance::External,
            m_used: 1,
        });
    }
    Ok((pairs, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::vocab::WordVocab;

    fn vocab() -> WordVocab {
        WordVocab::build(
            ["one two three four five six seven eight nine ten more words here"].into_iter(),
            200,
        )
    }

    fn cfg(elongation: ElongationMode) -> TrainingConfig {
        TrainingConfig {
            max_len: 32,
            elongation,
            ..TrainingConfig::default()
        }
    }

    #[test]
    fn defaults_match_standard_recipe() {
        let cfg = TrainingConfig::default();
        assert_eq!(cfg.temperature, 0.05);
        assert_eq!(cfg.learning_rate, 3e-5);
        assert_eq!(cfg.epochs, 1);
        assert_eq!(cfg.batch_size, 64);
        assert_eq!(cfg.max_len, 256);
        assert_eq!(cfg.pooling, Pooling::Mean);
        cfg.validate().unwrap();
    }

    #[test]
    fn self_ref_positive_replicates_anchor_tokens() {
        let vocab = vocab();
        let cfg = cfg(ElongationMode::Fixed { m: 2 });
        let doc = Document::new("d0", "one two three").unwrap();
        let (pair, _) = pair_for_doc(&doc, PairMode::SelfRef, &cfg, &vocab)
            .unwrap()
            .unwrap();
        assert_eq!(pair.provenance, Provenance::SelfRef);
        assert_eq!(pair.m_used, 2);
        let anchor_content = pair.anchor.content_ids();
        let mut expected = anchor_content.clone();
        expected.extend(anchor_content);
        assert_eq!(pair.positive.content_ids(), expected);
    }

    #[test]
    fn self_ref_with_m1_degenerates_to_baseline() {
        let vocab = vocab();
        let cfg = cfg(ElongationMode::Fixed { m: 1 });
        let docs = vec![
            Document::new("a", "one two three. four five six.").unwrap(),
            Document::new("b", "seven eight").unwrap(),
        ];
        let (self_pairs, _) = build_pairs(&docs, PairMode::SelfRef, &cfg, &vocab).unwrap();
        let (base_pairs, _) = build_pairs(&docs, PairMode::Baseline, &cfg, &vocab).unwrap();
        assert_eq!(self_pairs.len(), base_pairs.len());
        for (s, b) in self_pairs.iter().zip(&base_pairs) {
            assert_eq!(s.anchor, b.anchor);
            assert_eq!(s.positive, b.positive);
            assert_eq!(b.anchor, b.positive);
        }
    }

    #[test]
    fn intra_ref_uses_remainder_and_falls_back() {
        let vocab = vocab();
        let cfg = cfg(ElongationMode::Fixed { m: 2 });
        let multi = Document::new("m", "One two. Three four. Five six.").unwrap();
        let (pair, fallback) = pair_for_doc(&multi, PairMode::IntraRef, &cfg, &vocab)
            .unwrap()
            .unwrap();
        assert!(!fallback);
        assert_eq!(pair.provenance, Provenance::IntraRef);
        // Anchor is the elongated first sentence; positive is the rest.
        let first = vocab.tokenize("One two.", "m", cfg.max_len);
        let mut doubled = first.content_ids();
        doubled.extend(first.content_ids());
        assert_eq!(pair.anchor.content_ids(), doubled);
        let rest = vocab.tokenize("Three four. Five six.", "m", cfg.max_len);
        assert_eq!(pair.positive.content_ids(), rest.content_ids());

        let single = Document::new("s", "Only one here.").unwrap();
        let (pair, fallback) = pair_for_doc(&single, PairMode::IntraRef, &cfg, &vocab)
            .unwrap()
            .unwrap();
        assert!(fallback);
        assert_eq!(pair.provenance, Provenance::SelfRef);
    }

    #[test]
    fn intra_ref_with_m1_is_plain_anchor_vs_remainder() {
        let vocab = vocab();
        let cfg = cfg(ElongationMode::Fixed { m: 1 });
        let doc = Document::new("m", "One two. Three four.").unwrap();
        let (pair, _) = pair_for_doc(&doc, PairMode::IntraRef, &cfg, &vocab)
            .unwrap()
            .unwrap();
        let anchor = vocab.tokenize("One two.", "m", cfg.max_len);
        assert_eq!(pair.anchor.content_ids(), anchor.content_ids());
    }

    #[test]
    fn skipped_documents_are_counted() {
        let vocab = vocab();
        let cfg = cfg(ElongationMode::Random);
        let docs = vec![
            Document::new("ok", "one two").unwrap(),
            Document::new("empty", "???").unwrap(), // punctuation-only tokens are content
        ];
        let (pairs, stats) = build_pairs(&docs, PairMode::SelfRef, &cfg, &vocab).unwrap();
        // "???" still tokenizes to content (punct tokens), so nothing skips.
        assert_eq!(pairs.len(), 2);
        assert_eq!(stats.skipped, 0);
        assert_eq!(stats.pairs, 2);
    }

    #[test]
    fn builders_are_deterministic() {
        let vocab = vocab();
        let cfg = cfg(ElongationMode::Random);
        let docs: Vec<Document> = (0..20)
            .map(|i| Document::new(format!("d{i}"), format!("one two three four five {i}")).unwrap())
            .collect();
        let (a, _) = build_pairs(&docs, PairMode::SelfRef, &cfg, &vocab).unwrap();
        let (b, _) = build_pairs(&docs, PairMode::SelfRef, &cfg, &vocab).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn external_pairs_carry_their_provenance() {
        let vocab = vocab();
        let cfg = cfg(ElongationMode::Random);
        let texts = vec![("one two".to_string(), "three four".to_string())];
        let (pairs, stats) = build_pairs_from_texts(&texts, &cfg, &vocab).unwrap();
        assert_eq!(stats.pairs, 1);
        assert_eq!(pairs[0].provenance, Provenance::External);
        assert_eq!(pairs[0].m_used, 1);
    }
}
