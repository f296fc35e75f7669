//! Deterministic stub encoders for tests and oracles.

use crate::encoder::vocab::word_tokenize;
use crate::encoder::{
    pool, Capabilities, EncoderInfo, EncoderKind, EncoderOutput, Pooling, TextEncoder,
};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::util::sha256_hex;
use ndarray::{Array1, Array2};
use std::collections::HashMap;

/// Returns the same vector for every text and every token.
#[derive(Debug, Clone)]
pub struct ConstantEncoder<F: Scalar> {
    vector: Array1<F>,
}

impl<F: Scalar> ConstantEncoder<F> {
    pub fn new(vector: Array1<F>) -> Self {
        ConstantEncoder { vector }
    }
}

impl<F: Scalar> TextEncoder<F> for ConstantEncoder<F> {
    fn info(&self) -> EncoderInfo {
        EncoderInfo {
            kind: EncoderKind::Local,
            capabilities: Capabilities {
                token_embeddings: true,
                attention: false,
                trainable: false,
                position_free: true,
            },
            max_len: usize::MAX,
            hidden_dim: self.vector.len(),
            fingerprint: "stub-constant".into(),
        }
    }

    fn encode(&self, texts: &[&str], _pooling: Pooling) -> Result<Array2<F>> {
        if texts.is_empty() {
            return Err(Error::EmptyInput("no texts to encode".into()));
        }
        let mut out = Array2::<F>::zeros((texts.len(), self.vector.len()));
        for mut row in out.rows_mut() {
            row.assign(&self.vector);
        }
        Ok(out)
    }

    fn encode_tokens(
        &self,
        text: &str,
        _want_attention: bool,
        _position_free: bool,
    ) -> Result<EncoderOutput<F>> {
        let words = word_tokenize(text);
        if words.is_empty() {
            return Err(Error::EmptyInput("text has no tokens".into()));
        }
        let n = words.len();
        let mut embeddings = Array2::<F>::zeros((n, self.vector.len()));
        for mut row in embeddings.rows_mut() {
            row.assign(&self.vector);
        }
        Ok(EncoderOutput {
            token_ids: (0..n as u32).collect(),
            special_mask: vec![false; n],
            pooled_mean: self.vector.clone(),
            pooled_cls: self.vector.clone(),
            token_embeddings: embeddings,
            attention: None,
            head_dim: 1,
        })
    }
}

/// Maps exact texts to fixed vectors; unknown texts are an error. Useful
/// for constructing retrieval oracles where each document owns a basis
/// vector.
#[derive(Debug, Clone)]
pub struct MappedEncoder<F: Scalar> {
    map: HashMap<String, Array1<F>>,
    dim: usize,
}

impl<F: Scalar> MappedEncoder<F> {
    pub fn new(entries: impl IntoIterator<Item = (String, Array1<F>)>) -> Result<Self> {
        let map: HashMap<String, Array1<F>> = entries.into_iter().collect();
        let dim = map
            .values()
            .next()
            .map(|v| v.len())
            .ok_or_else(|| Error::EmptyInput("mapped encoder needs entries".into()))?;
        if map.values().any(|v| v.len() != dim) {
            return Err(Error::InvalidArgument(
                "mapped encoder vectors must share one dimension".into(),
            ));
        }
        Ok(MappedEncoder { map, dim })
    }
}

impl<F: Scalar> TextEncoder<F> for MappedEncoder<F> {
    fn info(&self) -> EncoderInfo {
        let mut keys: Vec<&str> = self.map.keys().map(String::as_str).collect();
        keys.sort_unstable();
        EncoderInfo {
            kind: EncoderKind::Local,
            capabilities: Capabilities::default(),
            max_len: usize::MAX,
            hidden_dim: self.dim,
            fingerprint: format!("stub-mapped-{}", sha256_hex(keys.join("\n").as_bytes())),
        }
    }

    fn encode(&self, texts: &[&str], _pooling: Pooling) -> Result<Array2<F>> {
        let mut out = Array2::<F>::zeros((texts.len(), self.dim));
        for (i, text) in texts.iter().enumerate() {
            let v = self.map.get(*text).ok_or_else(|| {
                Error::InvalidArgument(format!("mapped encoder has no entry for {text:?}"))
            })?;
            out.row_mut(i).assign(v);
        }
        Ok(out)
    }

    fn encode_tokens(
        &self,
        _text: &str,
        _want_attention: bool,
        _position_free: bool,
    ) -> Result<EncoderOutput<F>> {
        Err(Error::UnsupportedCapability {
            capability: "token embeddings",
        })
    }
}

/// Per-word embedding table with mean/cls pooling; words not in the table
/// fall back to an optional default vector.
#[derive(Debug, Clone)]
pub struct TokenTableEncoder<F: Scalar> {
    table: HashMap<String, Array1<F>>,
    default: Option<Array1<F>>,
    dim: usize,
}

impl<F: Scalar> TokenTableEncoder<F> {
    pub fn new(
        entries: impl IntoIterator<Item = (String, Array1<F>)>,
        default: Option<Array1<F>>,
    ) -> Result<Self> {
        let table: HashMap<String, Array1<F>> = entries.into_iter().collect();
        let dim = table
            .values()
            .map(|v| v.len())
            .chain(default.iter().map(|v| v.len()))
            .next()
            .ok_or_else(|| Error::EmptyInput("token table needs entries".into()))?;
        Ok(TokenTableEncoder {
            table,
            default,
            dim,
        })
    }

    fn word_vector(&self, word: &str) -> Result<Array1<F>> {
        if let Some(v) = self.table.get(word) {
            return Ok(v.clone());
        }
        self.default
            .clone()
            .ok_or_else(|| Error::InvalidArgument(format!("no embedding for word {word:?}")))
    }
}

impl<F: Scalar> TextEncoder<F> for TokenTableEncoder<F> {
    fn info(&self) -> EncoderInfo {
        EncoderInfo {
            kind: EncoderKind::Local,
            capabilities: Capabilities {
                token_embeddings: true,
                attention: false,
                trainable: false,
                position_free: true,
            },
            max_len: usize::MAX,
            hidden_dim: self.dim,
            fingerprint: "stub-token-table".into(),
        }
    }

    fn encode(&self, texts: &[&str], pooling: Pooling) -> Result<Array2<F>> {
        let mut out = Array2::<F>::zeros((texts.len(), self.dim));
        for (i, text) in texts.iter().enumerate() {
            let tokens = self.encode_tokens(text, false, false)?;
            out.row_mut(i).assign(tokens.pooled(pooling));
        }
        Ok(out)
    }

    fn encode_tokens(
        &self,
        text: &str,
        _want_attention: bool,
        _position_free: bool,
    ) -> Result<EncoderOutput<F>> {
        let words = word_tokenize(text);
        if words.is_empty() {
            return Err(Error::EmptyInput("text has no tokens".into()));
        }
        let mut embeddings = Array2::<F>::zeros((words.len(), self.dim));
        for (i, word) in words.iter().enumerate() {
            embeddings.row_mut(i).assign(&self.word_vector(word)?);
        }
        let mask = vec![true; words.len()];
        let pooled_mean = pool(&embeddings.view(), &mask, Pooling::Mean)?;
        let pooled_cls = embeddings.row(0).to_owned();
        Ok(EncoderOutput {
            token_ids: (0..words.len() as u32).collect(),
            special_mask: vec![false; words.len()],
            token_embeddings: embeddings,
            attention: None,
            pooled_mean,
            pooled_cls,
            head_dim: 1,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn constant_encoder_rows_are_identical() {
        let enc = ConstantEncoder::new(array![1.0f64, 2.0]);
        let out = enc.encode(&["a", "b c"], Pooling::Mean).unwrap();
        assert_eq!(out.row(0), out.row(1));
    }

    #[test]
    fn mapped_encoder_errors_on_unknown_text() {
        let enc = MappedEncoder::new([("known".to_string(), array![1.0f64])]).unwrap();
        assert!(enc.encode(&["unknown"], Pooling::Mean).is_err());
    }

    #[test]
    fn token_table_mean_pools_word_vectors() {
        let enc = TokenTableEncoder::new(
            [
                ("a".to_string(), array![1.0f64, 0.0]),
                ("b".to_string(), array![0.0f64, 1.0]),
            ],
            None,
        )
        .unwrap();
        let out = enc.encode_tokens("a b", false, false).unwrap();
        assert_eq!(out.pooled_mean, array![0.5, 0.5]);
        assert_eq!(out.pooled_cls, array![1.0, 0.0]);
    }
}
