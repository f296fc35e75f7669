//! The fine-tuning loop: mini-batch infoNCE over pooled embeddings.

use super::loss::info_nce_loss_grad;
use super::optimizer::{Adam, AdamConfig};
use super::{PairExample, TrainingConfig};
use crate::encoder::transformer::TransformerEncoder;
use crate::encoder::Pooling;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::util::stable_seed;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
}

/// Loss curve and bookkeeping of one training run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub steps: Vec<StepRecord>,
    pub n_pairs: usize,
    pub epochs: usize,
    /// Filled in by callers that persist the final model.
    pub checkpoint: Option<String>,
    /// Filled in by callers that write a run manifest.
    pub manifest: Option<String>,
}

impl TrainLog {
    pub fn final_loss(&self) -> Option<f64> {
        self.steps.last().map(|s| s.loss)
    }
}

/// Fine-tune the encoder in place. Batch order is a pure function of
/// `cfg.seed`, dropout noise of `(cfg.seed, step)`, so a re-run with the
/// same config reproduces the loss sequence bit for bit.
pub fn train<F: Scalar>(
    encoder: &mut TransformerEncoder<F>,
    pairs: &[PairExample],
    cfg: &TrainingConfig,
) -> Result<TrainLog> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::EmptyInput("no training pairs".into()));
    }
    if cfg.max_len > encoder.config().max_len {
        return Err(Error::InvalidArgument(format!(
            "training max_len {} exceeds encoder max_len {}",
            cfg.max_len,
            encoder.config().max_len
        )));
    }

    // Count the usable batches up front so the schedule is exact.
    let batches_per_epoch = count_batches(pairs.len(), cfg.batch_size);
    let total_steps = batches_per_epoch * cfg.epochs;
    if total_steps == 0 {
        return Err(Error::InvalidArgument(
            "batch size leaves no batch with >= 2 pairs".into(),
        ));
    }

    let mut adam = Adam::new(
        encoder.config(),
        AdamConfig::new(cfg.learning_rate, cfg.warmup_frac, total_steps),
    );
    let tau = F::from_f64_lossy(cfg.temperature);
    let mut log = TrainLog {
        n_pairs: pairs.len(),
        epochs: cfg.epochs,
        ..TrainLog::default()
    };

    let mut step = 0usize;
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        let mut order_rng =
            ChaCha8Rng::seed_from_u64(stable_seed(cfg.seed, &[b"order", &epoch.to_le_bytes()]));
        order.shuffle(&mut order_rng);

        for chunk in order.chunks(cfg.batch_size) {
            if chunk.len() < 2 {
                log::info!("dropping final batch of size {}", chunk.len());
                continue;
            }
            step += 1;
            let mut dropout_rng = ChaCha8Rng::seed_from_u64(stable_seed(
                cfg.seed,
                &[b"dropout", &step.to_le_bytes()],
            ));

            let batch: Vec<&PairExample> = chunk.iter().map(|&i| &pairs[i]).collect();
            let (anchor_caches, anchors) =
                embed_side(encoder, &batch, Side::Anchor, cfg.pooling, &mut dropout_rng)?;
            let (positive_caches, positives) =
                embed_side(encoder, &batch, Side::Positive, cfg.pooling, &mut dropout_rng)?;

            let (loss, d_anchors, d_positives) =
                info_nce_loss_grad(&anchors, &positives, tau, cfg.similarity)?;
            let loss_f64 = loss.to_f64_lossy();
            if !loss_f64.is_finite() {
                // Parameters have not been touched this step, so the
                // encoder still holds the last good weights.
                return Err(Error::NonFiniteLoss { step });
            }

            let mut grads = encoder.zero_grads();
            for (i, cache) in anchor_caches.iter().enumerate() {
                let d_hidden = pooling_backward(cfg.pooling, &d_anchors, i, cache.hidden.nrows());
                encoder.backward(cache, d_hidden, &mut grads);
            }
            for (i, cache) in positive_caches.iter().enumerate() {
                let d_hidden = pooling_backward(cfg.pooling, &d_positives, i, cache.hidden.nrows());
                encoder.backward(cache, d_hidden, &mut grads);
            }
            let lr = adam.step(encoder.params_mut(), &grads);
            log.steps.push(StepRecord {
                step,
                loss: loss_f64,
                lr,
            });
        }
    }
    Ok(log)
}

fn count_batches(n_pairs: usize, batch_size: usize) -> usize {
    let full = n_pairs / batch_size;
    let rem = n_pairs % batch_size;
    full + usize::from(rem >= 2)
}

enum Side {
    Anchor,
    Positive,
}

fn embed_side<F: Scalar>(
    encoder: &TransformerEncoder<F>,
    batch: &[&PairExample],
    side: Side,
    pooling: Pooling,
    dropout_rng: &mut ChaCha8Rng,
) -> Result<(
    Vec<crate::encoder::transformer::ForwardCache<F>>,
    Array2<F>,
)> {
    let mut caches = Vec::with_capacity(batch.len());
    let mut pooled = Array2::<F>::zeros((batch.len(), encoder.config().hidden_dim));
    for (i, pair) in batch.iter().enumerate() {
        let seq = match side {
            Side::Anchor => &pair.anchor,
            Side::Positive => &pair.positive,
        };
        let cache = encoder.forward_cached(&seq.token_ids, false, Some(dropout_rng))?;
        let row = match pooling {
            Pooling::Cls => cache.hidden.row(0).to_owned(),
            Pooling::Mean => {
                let t = F::from_usize_lossy(cache.hidden.nrows());
                cache.hidden.sum_axis(ndarray::Axis(0)) / t
            }
        };
        pooled.row_mut(i).assign(&row);
        caches.push(cache);
    }
    Ok((caches, pooled))
}

fn pooling_backward<F: Scalar>(
    pooling: Pooling,
    d_pooled: &Array2<F>,
    row: usize,
    t_len: usize,
) -> Array2<F> {
    let d = d_pooled.ncols();
    let mut d_hidden = Array2::<F>::zeros((t_len, d));
    match pooling {
        Pooling::Cls => {
            d_hidden.row_mut(0).assign(&d_pooled.row(row));
        }
        Pooling::Mean => {
            let scale = F::one() / F::from_usize_lossy(t_len);
            let grad_row = d_pooled.row(row).mapv(|v| v * scale);
            for mut r in d_hidden.rows_mut() {
                r.assign(&grad_row);
            }
        }
    }
    d_hidden
}
