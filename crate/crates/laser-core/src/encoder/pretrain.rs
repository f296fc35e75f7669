//! Masked-token pretraining. Produces the "vanilla" (never contrastively
//! trained) checkpoints that the diagnostics compare against, with the
//! classic 80/10/10 corruption scheme and an output head tied to the token
//! embeddings.

use crate::corpus::Document;
use crate::elongation::special;
use crate::encoder::transformer::TransformerEncoder;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::training::{Adam, AdamConfig};
use crate::util::stable_seed;
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlmConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub mask_prob: f64,
    pub warmup_frac: f64,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for MlmConfig {
    fn default() -> Self {
        MlmConfig {
            steps: 500,
            batch_size: 32,
            learning_rate: 1e-3,
            mask_prob: 0.15,
            warmup_frac: 0.1,
            max_len: 64,
            seed: 13,
        }
    }
}

impl MlmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument(
                "steps and batch_size must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.mask_prob) || self.mask_prob == 0.0 {
            return Err(Error::InvalidArgument("mask_prob outside (0, 1]".into()));
        }
        Ok(())
    }
}

/// Train the encoder on masked-token prediction; returns the per-step loss
/// curve. Deterministic given the config.
pub fn pretrain_mlm<F: Scalar>(
    encoder: &mut TransformerEncoder<F>,
    docs: &[Document],
    cfg: &MlmConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if docs.is_empty() {
        return Err(Error::EmptyInput("no documents for pretraining".into()));
    }
    let vocab_size = encoder.config().vocab_size as u32;
    if vocab_size <= special::FIRST_WORD_ID {
        return Err(Error::InvalidArgument(
            "vocabulary has no content words".into(),
        ));
    }
    let max_len = cfg.max_len.min(encoder.config().max_len);
    let mut adam = Adam::new(
        encoder.config(),
        AdamConfig::new(cfg.learning_rate, cfg.warmup_frac, cfg.steps),
    );

    let mut losses = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let mut rng =
            ChaCha8Rng::seed_from_u64(stable_seed(cfg.seed, &[b"mlm", &step.to_le_bytes()]));
        let mut grads = encoder.zero_grads();
        let mut total_loss = 0.0f64;
        let mut total_masked = 0usize;

        // Decide the whole batch and its corruptions first so the loss can
        // be normalized by the total masked-token count.
        let mut batch = Vec::with_capacity(cfg.batch_size);
        for _ in 0..cfg.batch_size {
            let doc = &docs[rng.gen_range(0..docs.len())];
            let seq = encoder.vocab().encode_text(&doc.text, &doc.id, max_len);
            if seq.n_content() == 0 {
                continue;
            }
            let mut corrupted = seq.token_ids.clone();
            let mut targets: Vec<(usize, u32)> = Vec::new();
            for (pos, (&id, &is_special)) in
                seq.token_ids.iter().zip(&seq.special_mask).enumerate()
            {
                if is_special || rng.gen::<f64>() >= cfg.mask_prob {
                    continue;
                }
                targets.push((pos, id));
                let roll = rng.gen::<f64>();
                corrupted[pos] = if roll < 0.8 {
                    special::MASK
                } else if roll < 0.9 {
                    rng.gen_range(special::FIRST_WORD_ID..vocab_size)
                } else {
                    id
                };
            }
            if targets.is_empty() {
                // Guarantee signal from every sequence.
                let content: Vec<usize> = seq
                    .special_mask
                    .iter()
                    .enumerate()
                    .filter(|(_, &s)| !s)
                    .map(|(i, _)| i)
                    .collect();
                let pos = content[rng.gen_range(0..content.len())];
                targets.push((pos, seq.token_ids[pos]));
                corrupted[pos] = special::MASK;
            }
            total_masked += targets.len();
            batch.push((corrupted, targets));
        }
        if batch.is_empty() || total_masked == 0 {
            continue;
        }

        let inv_masked = 1.0 / total_masked as f64;
        for (idx, (corrupted, targets)) in batch.iter().enumerate() {
            let mut dropout_rng = ChaCha8Rng::seed_from_u64(stable_seed(
                cfg.seed,
                &[b"mlm-dropout", &step.to_le_bytes(), &idx.to_le_bytes()],
            ));
            let cache = encoder.forward_cached(corrupted, false, Some(&mut dropout_rng))?;
            let mut d_hidden = Array2::<F>::zeros(cache.hidden.raw_dim());
            for &(pos, target) in targets {
                let h = cache.hidden.row(pos).to_owned();
                // logits = tok_emb . h + mlm_bias (tied output head)
                let mut logits: Array1<F> = encoder.params().tok_emb.dot(&h);
                logits += &encoder.params().mlm_bias;
                let max = logits.iter().copied().fold(F::neg_infinity(), F::max);
                let mut denom = F::zero();
                for v in logits.iter() {
                    denom += (*v - max).exp();
                }
                let log_denom = denom.ln() + max;
                let loss = (log_denom - logits[target as usize]).to_f64_lossy();
                total_loss += loss * inv_masked;

                // d_logits = (softmax - onehot) / total_masked
                let scale = F::from_f64_lossy(inv_masked);
                let mut d_logits = logits.mapv(|v| (v - log_denom).exp() * scale);
                d_logits[target as usize] -= scale;
                // Tied head: gradient flows into the bias, the embedding
                // table, and the hidden state.
                grads.mlm_bias += &d_logits;
                let dh = encoder.params().tok_emb.t().dot(&d_logits);
                for (j, &dl) in d_logits.iter().enumerate() {
                    if dl != F::zero() {
                        let mut row = grads.tok_emb.row_mut(j);
                        row.scaled_add(dl, &h);
                    }
                }
                let mut row = d_hidden.row_mut(pos);
                row += &dh;
            }
            encoder.backward(&cache, d_hidden, &mut grads);
        }
        adam.step(encoder.params_mut(), &grads);
        losses.push(total_loss);
    }
    Ok(losses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::transformer::TransformerConfig;
    use crate::encoder::vocab::WordVocab;

    #[test]
    fn mlm_loss_decreases_on_a_tiny_structured_corpus() {
        let docs: Vec<Document> = (0..40)
            .map(|i| {
                let (a, b) = match i % 4 {
                    0 => ("red", "apple"),
                    1 => ("green", "leaf"),
                    2 => ("blue", "sky"),
                    _ => ("yellow", "sun"),
                };
                Document::new(format!("d{i}"), format!("the {a} {b} is here")).unwrap()
            })
            .collect();
        let vocab = WordVocab::build(docs.iter().map(|d| d.text.as_str()), 100);
        let cfg = TransformerConfig {
            hidden_dim: 16,
            n_layers: 1,
            n_heads: 2,
            ffn_dim: 32,
            max_len: 16,
            vocab_size: vocab.len(),
            dropout: 0.1,
            ln_eps: 1e-12,
        };
        let mut enc: TransformerEncoder<f64> = TransformerEncoder::new(cfg, vocab, 3).unwrap();
        let mlm = MlmConfig {
            steps: 120,
            batch_size: 16,
            learning_rate: 2e-3,
            max_len: 16,
            ..MlmConfig::default()
        };
        let losses = pretrain_mlm(&mut enc, &docs, &mlm).unwrap();
        let head: f64 = losses[..10].iter().sum::<f64>() / 10.0;
        let tail: f64 = losses[losses.len() - 10..].iter().sum::<f64>() / 10.0;
        assert!(
            tail < head * 0.7,
            "expected mlm loss to drop: head {head:.3} tail {tail:.3}"
        );
    }

    #[test]
    fn pretraining_is_deterministic() {
        let docs = vec![
            Document::new("a", "one two three four").unwrap(),
            Document::new("b", "five six seven eight").unwrap(),
        ];
        let vocab = WordVocab::build(docs.iter().map(|d| d.text.as_str()), 50);
        let cfg = TransformerConfig {
            hidden_dim: 8,
            n_layers: 1,
            n_heads: 1,
            ffn_dim: 16,
            max_len: 12,
            vocab_size: vocab.len(),
            dropout: 0.1,
            ln_eps: 1e-12,
        };
        let base: TransformerEncoder<f64> = TransformerEncoder::new(cfg, vocab, 9).unwrap();
        let mlm = MlmConfig {
            steps: 10,
            batch_size: 4,
            ..MlmConfig::default()
        };
        let mut enc_a = base.clone();
        let mut enc_b = base;
        let la = pretrain_mlm(&mut enc_a, &docs, &mlm).unwrap();
        let lb = pretrain_mlm(&mut enc_b, &docs, &mlm).unwrap();
        assert_eq!(
            la.iter().map(|l| l.to_bits()).collect::<Vec<_>>(),
            lb.iter().map(|l| l.to_bits()).collect::<Vec<_>>()
        );
        assert_eq!(enc_a.fingerprint(), enc_b.fingerprint());
    }
}
