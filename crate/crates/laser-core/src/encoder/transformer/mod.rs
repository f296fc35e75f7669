//! A small BERT-style encoder: learned token + positional embeddings,
//! post-LN self-attention blocks, GELU feed-forward, trained from scratch
//! in this crate. Exposes per-head attention maps and a position-free mode
//! that skips the positional embeddings at the input layer.

mod backward;
mod forward;
mod params;

pub use forward::ForwardCache;
pub use params::{LayerParams, LnParams, Params, TensorData, TensorOp, TransformerConfig};

use crate::elongation::TokenSequence;
use crate::encoder::vocab::WordVocab;
use crate::encoder::{
    pool, Capabilities, EncoderInfo, EncoderKind, EncoderOutput, Pooling, TextEncoder, Tokenize,
};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::util::sha256_hex;
use ndarray::{s, Array2, Array4};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const WEIGHTS_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct WeightsFile {
    format_version: u32,
    tensors: std::collections::BTreeMap<String, TensorData>,
}

/// Local trainable text encoder.
#[derive(Clone)]
pub struct TransformerEncoder<F: Scalar> {
    cfg: TransformerConfig,
    vocab: WordVocab,
    params: Params<F>,
}

impl<F: Scalar> TransformerEncoder<F> {
    /// Fresh randomly-initialized encoder over a fixed vocabulary.
    pub fn new(cfg: TransformerConfig, vocab: WordVocab, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if cfg.vocab_size != vocab.len() {
            return Err(Error::InvalidArgument(format!(
                "config vocab_size {} does not match vocabulary size {}",
                cfg.vocab_size,
                vocab.len()
            )));
        }
        let params = Params::init(&cfg, seed);
        Ok(TransformerEncoder { cfg, vocab, params })
    }

    pub fn from_parts(cfg: TransformerConfig, vocab: WordVocab, params: Params<F>) -> Result<Self> {
        cfg.validate()?;
        if cfg.vocab_size != vocab.len() {
            return Err(Error::InvalidArgument(
                "config vocab_size does not match vocabulary".into(),
            ));
        }
        Ok(TransformerEncoder { cfg, vocab, params })
    }

    pub fn config(&self) -> &TransformerConfig {
        &self.cfg
    }

    pub fn vocab(&self) -> &WordVocab {
        &self.vocab
    }

    pub fn params(&self) -> &Params<F> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params<F> {
        &mut self.params
    }

    pub fn tokenize(&self, text: &str, source_id: &str) -> TokenSequence {
        self.vocab.encode_text(text, source_id, self.cfg.max_len)
    }

    /// Forward pass keeping intermediates; `dropout_rng` enables training
    /// noise. Used by the training loops in this crate.
    pub fn forward_cached(
        &self,
        ids: &[u32],
        position_free: bool,
        dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<ForwardCache<F>> {
        self.check_ids(ids)?;
        Ok(forward::forward(
            &self.cfg,
            &self.params,
            ids,
            position_free,
            dropout_rng,
        ))
    }

    /// Accumulate gradients of a loss with gradient `d_hidden` at the final
    /// hidden states into `grads`.
    pub fn backward(&self, cache: &ForwardCache<F>, d_hidden: Array2<F>, grads: &mut Params<F>) {
        backward::backward(&self.cfg, &self.params, cache, d_hidden, grads);
    }

    pub fn zero_grads(&self) -> Params<F> {
        Params::zeros(&self.cfg)
    }

    fn check_ids(&self, ids: &[u32]) -> Result<()> {
        if ids.is_empty() {
            return Err(Error::EmptyInput("empty token sequence".into()));
        }
        if ids.len() > self.cfg.max_len {
            return Err(Error::InvalidArgument(format!(
                "sequence length {} exceeds encoder max_len {}",
                ids.len(),
                self.cfg.max_len
            )));
        }
        if let Some(&bad) = ids.iter().find(|&&id| id as usize >= self.cfg.vocab_size) {
            return Err(Error::InvalidArgument(format!(
                "token id {bad} outside vocabulary of size {}",
                self.cfg.vocab_size
            )));
        }
        Ok(())
    }

    fn run_sequence(
        &self,
        seq: &TokenSequence,
        want_attention: bool,
        position_free: bool,
    ) -> Result<EncoderOutput<F>> {
        if seq.n_content() == 0 {
            return Err(Error::EmptyInput(format!(
                "text {:?} tokenizes to zero content tokens",
                seq.source_id
            )));
        }
        let cache = self.forward_cached(&seq.token_ids, position_free, None)?;
        let t_len = seq.len();
        let attention = want_attention.then(|| {
            let mut attn =
                Array4::<F>::zeros((self.cfg.n_layers, self.cfg.n_heads, t_len, t_len));
            for (l, layer) in cache.layers.iter().enumerate() {
                attn.slice_mut(s![l, .., .., ..]).assign(&layer.probs);
            }
            attn
        });
        let mask = vec![true; t_len];
        let pooled_mean = pool(&cache.hidden.view(), &mask, Pooling::Mean)?;
        let pooled_cls = cache.hidden.row(0).to_owned();
        Ok(EncoderOutput {
            token_ids: seq.token_ids.clone(),
            special_mask: seq.special_mask.clone(),
            token_embeddings: cache.hidden,
            attention,
            pooled_mean,
            pooled_cls,
            head_dim: self.cfg.head_dim(),
        })
    }

    /// Content hash over config, vocabulary, and weights; identifies the
    /// checkpoint in run manifests.
    pub fn fingerprint(&self) -> String {
        let mut bytes = serde_json::to_vec(&self.cfg).expect("config serializes");
        bytes.extend(serde_json::to_vec(self.vocab.words()).expect("vocab serializes"));
        let weights = WeightsFile {
            format_version: WEIGHTS_FORMAT_VERSION,
            tensors: self.params.to_tensor_map(),
        };
        bytes.extend(serde_json::to_vec(&weights).expect("weights serialize"));
        sha256_hex(&bytes)
    }

    /// Write `config.json`, `vocab.json`, and `weights.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, bytes: Vec<u8>| -> Result<()> {
            let path = dir.join(name);
            std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
        };
        write(
            "config.json",
            serde_json::to_vec_pretty(&self.cfg).expect("config serializes"),
        )?;
        write(
            "vocab.json",
            serde_json::to_vec_pretty(self.vocab.words()).expect("vocab serializes"),
        )?;
        let weights = WeightsFile {
            format_version: WEIGHTS_FORMAT_VERSION,
            tensors: self.params.to_tensor_map(),
        };
        write(
            "weights.json",
            serde_json::to_vec(&weights).expect("weights serialize"),
        )?;
        Ok(())
    }

    /// Load a checkpoint directory written by [`TransformerEncoder::save`].
    pub fn load(dir: &Path) -> Result<Self> {
        let read = |name: &str| -> Result<Vec<u8>> {
            let path = dir.join(name);
            std::fs::read(&path).map_err(|e| Error::io(&path, e))
        };
        let cfg: TransformerConfig = serde_json::from_slice(&read("config.json")?)
            .map_err(|e| Error::Protocol(format!("bad config.json: {e}")))?;
        let words: Vec<String> = serde_json::from_slice(&read("vocab.json")?)
            .map_err(|e| Error::Protocol(format!("bad vocab.json: {e}")))?;
        let weights: WeightsFile = serde_json::from_slice(&read("weights.json")?)
            .map_err(|e| Error::Protocol(format!("bad weights.json: {e}")))?;
        if weights.format_version != WEIGHTS_FORMAT_VERSION {
            return Err(Error::Protocol(format!(
                "weights format version {} unsupported (expected {WEIGHTS_FORMAT_VERSION})",
                weights.format_version
            )));
        }
        let vocab = WordVocab::from_words(words);
        let params = Params::from_tensor_map(&cfg, &weights.tensors)?;
        Self::from_parts(cfg, vocab, params)
    }
}

impl<F: Scalar> TextEncoder<F> for TransformerEncoder<F> {
    fn info(&self) -> EncoderInfo {
        EncoderInfo {
            kind: EncoderKind::Local,
            capabilities: Capabilities {
                token_embeddings: true,
                attention: true,
                trainable: true,
                position_free: true,
            },
            max_len: self.cfg.max_len,
            hidden_dim: self.cfg.hidden_dim,
            fingerprint: self.fingerprint(),
        }
    }

    fn encode(&self, texts: &[&str], pooling: Pooling) -> Result<Array2<F>> {
        if texts.is_empty() {
            return Err(Error::EmptyInput("no texts to encode".into()));
        }
        let rows: Result<Vec<_>> = texts
            .par_iter()
            .enumerate()
            .map(|(i, text)| {
                let seq = self.tokenize(text, &i.to_string());
                let out = self
                    .run_sequence(&seq, false, false)
                    .map_err(|e| e.context(format!("text at index {i}")))?;
                Ok(out.pooled(pooling).clone())
            })
            .collect();
        let rows = rows?;
        let mut matrix = Array2::<F>::zeros((rows.len(), self.cfg.hidden_dim));
        for (r, row) in rows.iter().enumerate() {
            matrix.row_mut(r).assign(row);
        }
        Ok(matrix)
    }

    fn encode_tokens(
        &self,
        text: &str,
        want_attention: bool,
        position_free: bool,
    ) -> Result<EncoderOutput<F>> {
        let seq = self.tokenize(text, "input");
        self.run_sequence(&seq, want_attention, position_free)
    }

    fn encode_sequence(
        &self,
        seq: &TokenSequence,
        want_attention: bool,
        position_free: bool,
    ) -> Result<EncoderOutput<F>> {
        seq.validate()?;
        self.run_sequence(seq, want_attention, position_free)
    }

    fn tokenizer(&self) -> Option<&dyn Tokenize> {
        Some(&self.vocab)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::vocab::WordVocab;
    use ndarray::Array1;
    use rand::SeedableRng;

    fn tiny() -> TransformerEncoder<f64> {
        let vocab = WordVocab::build(
            ["alpha beta gamma delta epsilon zeta eta theta a b"].into_iter(),
            100,
        );
        let cfg = TransformerConfig {
            hidden_dim: 8,
            n_layers: 2,
            n_heads: 2,
            ffn_dim: 16,
            max_len: 16,
            vocab_size: vocab.len(),
            dropout: 0.1,
            ln_eps: 1e-12,
        };
        TransformerEncoder::new(cfg, vocab, 42).unwrap()
    }

    #[test]
    fn encode_is_deterministic_and_batch_equivalent() {
        let enc = tiny();
        let texts = ["alpha beta", "gamma delta epsilon", "zeta"];
        let batch = enc.encode(&texts, Pooling::Mean).unwrap();
        let again = enc.encode(&texts, Pooling::Mean).unwrap();
        assert_eq!(batch, again);
        for (i, text) in texts.iter().enumerate() {
            let single = enc.encode(&[text], Pooling::Mean).unwrap();
            for c in 0..batch.ncols() {
                assert!((batch[[i, c]] - single[[0, c]]).abs() < 1e-5);
            }
        }
        // Identical inputs produce identical rows.
        let twin = enc.encode(&["alpha beta", "alpha beta"], Pooling::Mean).unwrap();
        assert_eq!(twin.row(0), twin.row(1));
    }

    #[test]
    fn attention_rows_are_probability_vectors() {
        let enc = tiny();
        let out = enc.encode_tokens("alpha beta gamma delta", true, false).unwrap();
        let attn = out.attention.unwrap();
        for l in 0..attn.shape()[0] {
            for h in 0..attn.shape()[1] {
                for q in 0..attn.shape()[2] {
                    let sum: f64 = attn.slice(s![l, h, q, ..]).sum();
                    assert!((sum - 1.0).abs() < 1e-5, "row sum {sum}");
                }
            }
        }
    }

    #[test]
    fn position_free_makes_repeated_tokens_identical() {
        let enc = tiny();
        let free = enc.encode_tokens("a b a b", false, true).unwrap();
        // Positions 1 and 3 hold the two copies of "a".
        let row1 = free.token_embeddings.row(1);
        let row3 = free.token_embeddings.row(3);
        for (x, y) in row1.iter().zip(row3) {
            assert!((x - y).abs() < 1e-6);
        }
        let positional = enc.encode_tokens("a b a b", false, false).unwrap();
        let row1 = positional.token_embeddings.row(1).to_owned();
        let row3 = positional.token_embeddings.row(3).to_owned();
        let diff: f64 = row1
            .iter()
            .zip(&row3)
            .map(|(x, y)| (x - y).abs())
            .sum();
        assert!(diff > 1e-6, "positional embeddings should separate copies");
    }

    #[test]
    fn pooled_fields_match_pool_recomputation() {
        let enc = tiny();
        let out = enc.encode_tokens("alpha beta gamma", false, false).unwrap();
        let mask = vec![true; out.token_embeddings.nrows()];
        let mean = pool(&out.token_embeddings.view(), &mask, Pooling::Mean).unwrap();
        let cls = pool(&out.token_embeddings.view(), &mask, Pooling::Cls).unwrap();
        for (a, b) in out.pooled_mean.iter().zip(&mean) {
            assert!((a - b).abs() < 1e-6);
        }
        assert_eq!(out.pooled_cls, cls);
    }

    #[test]
    fn whitespace_only_text_is_a_per_item_error() {
        let enc = tiny();
        let err = enc.encode(&["alpha", "   "], Pooling::Mean).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("index 1"), "error should name the item: {msg}");
    }

    #[test]
    fn save_load_round_trip_preserves_outputs_and_fingerprint() {
        let enc = tiny();
        let dir = tempfile::tempdir().unwrap();
        enc.save(dir.path()).unwrap();
        let loaded = TransformerEncoder::<f64>::load(dir.path()).unwrap();
        assert_eq!(enc.fingerprint(), loaded.fingerprint());
        let a = enc.encode(&["alpha beta gamma"], Pooling::Mean).unwrap();
        let b = loaded.encode(&["alpha beta gamma"], Pooling::Mean).unwrap();
        assert_eq!(a, b);
    }

    /// Central-difference oracle for the full backward pass: perturb a
    /// sample of scalar parameters and compare the numeric directional
    /// derivative against the analytic gradient.
    #[test]
    fn analytic_gradients_match_finite_differences() {
        let mut enc = tiny();
        let seq = enc.tokenize("alpha beta gamma a", "fd");
        let ids = seq.token_ids.clone();
        let t_len = ids.len();
        let d = enc.config().hidden_dim;

        // Fixed random projection makes the scalar loss sensitive to every
        // hidden coordinate: L = sum(hidden .* w).
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let w = Array2::from_shape_fn((t_len, d), |_| {
            rand::Rng::gen_range(&mut rng, -1.0..1.0)
        });

        let loss = |enc: &TransformerEncoder<f64>| -> f64 {
            let cache = enc.forward_cached(&ids, false, None).unwrap();
            (&cache.hidden * &w).sum()
        };

        let cache = enc.forward_cached(&ids, false, None).unwrap();
        let mut grads = enc.zero_grads();
        enc.backward(&cache, w.clone(), &mut grads);

        let eps = 1e-5;
        let mut checked = 0usize;
        // Representative scalar picks across every tensor kind.
        let picks: Vec<(&str, usize, usize)> = vec![
            ("tok_emb", ids[1] as usize, 3),
            ("pos_emb", 2, 1),
            ("ln_emb.gamma", 0, 4),
            ("ln_emb.beta", 0, 2),
            ("layer0.wq", 1, 5),
            ("layer0.bk", 0, 3),
            ("layer0.wv", 4, 2),
            ("layer0.wo", 3, 3),
            ("layer0.ln_attn.gamma", 0, 1),
            ("layer0.w_up", 2, 9),
            ("layer0.b_up", 0, 11),
            ("layer0.w_down", 7, 2),
            ("layer0.ln_ffn.beta", 0, 6),
            ("layer1.wk", 6, 6),
            ("layer1.wo", 0, 7),
            ("layer1.w_down", 12, 4),
        ];
        for (name, i, j) in picks {
            let analytic = read_param(&grads, name, i, j);
            let base = read_param(enc.params(), name, i, j);
            write_param(enc.params_mut(), name, i, j, base + eps);
            let up = loss(&enc);
            write_param(enc.params_mut(), name, i, j, base - eps);
            let down = loss(&enc);
            write_param(enc.params_mut(), name, i, j, base);
            let numeric = (up - down) / (2.0 * eps);
            let denom = analytic.abs().max(numeric.abs()).max(1e-8);
            assert!(
                ((analytic - numeric) / denom).abs() < 1e-6,
                "{name}[{i},{j}]: analytic {analytic} vs numeric {numeric}"
            );
            checked += 1;
        }
        assert_eq!(checked, 16);
    }

    fn tensor_mut<'a>(
        params: &'a mut Params<f64>,
        name: &str,
    ) -> (Option<&'a mut Array2<f64>>, Option<&'a mut Array1<f64>>) {
        match name {
            "tok_emb" => (Some(&mut params.tok_emb), None),
            "pos_emb" => (Some(&mut params.pos_emb), None),
            "ln_emb.gamma" => (None, Some(&mut params.ln_emb.gamma)),
            "ln_emb.beta" => (None, Some(&mut params.ln_emb.beta)),
            _ => {
                let (layer, field) = name.split_once('.').unwrap();
                let idx: usize = layer.strip_prefix("layer").unwrap().parse().unwrap();
                let l = &mut params.layers[idx];
                match field {
                    "wq" => (Some(&mut l.wq), None),
                    "wk" => (Some(&mut l.wk), None),
                    "wv" => (Some(&mut l.wv), None),
                    "wo" => (Some(&mut l.wo), None),
                    "bq" => (None, Some(&mut l.bq)),
                    "bk" => (None, Some(&mut l.bk)),
                    "bv" => (None, Some(&mut l.bv)),
                    "bo" => (None, Some(&mut l.bo)),
                    "w_up" => (Some(&mut l.w_up), None),
                    "b_up" => (None, Some(&mut l.b_up)),
                    "w_down" => (Some(&mut l.w_down), None),
                    "b_down" => (None, Some(&mut l.b_down)),
                    "ln_attn.gamma" => (None, Some(&mut l.ln_attn.gamma)),
                    "ln_attn.beta" => (None, Some(&mut l.ln_attn.beta)),
                    "ln_ffn.gamma" => (None, Some(&mut l.ln_ffn.gamma)),
                    "ln_ffn.beta" => (None, Some(&mut l.ln_ffn.beta)),
                    other => panic!("unknown field {other}"),
                }
            }
        }
    }

    fn read_param(params: &Params<f64>, name: &str, i: usize, j: usize) -> f64 {
        let mut p = params.clone();
        match tensor_mut(&mut p, name) {
            (Some(m), None) => m[[i, j]],
            (None, Some(v)) => v[j],
            _ => unreachable!(),
        }
    }

    fn write_param(params: &mut Params<f64>, name: &str, i: usize, j: usize, value: f64) {
        match tensor_mut(params, name) {
            (Some(m), None) => m[[i, j]] = value,
            (None, Some(v)) => v[j] = value,
            _ => unreachable!(),
        }
    }
}
