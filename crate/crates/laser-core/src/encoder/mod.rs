//! Uniform contract over text encoders: local trainable backends that
//! expose token embeddings and attention, and a remote embedding endpoint
//! that exposes pooled vectors only.

pub mod pretrain;
pub mod remote;
pub mod stub;
pub mod transformer;
pub mod vocab;

use crate::elongation::TokenSequence;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use ndarray::{Array1, Array2, Array4, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

/// Pooling strategy for reducing token embeddings to one vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    Mean,
    Cls,
}

impl std::str::FromStr for Pooling {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Pooling::Mean),
            "cls" => Ok(Pooling::Cls),
            other => Err(Error::InvalidArgument(format!(
                "unknown pooling {other:?} (expected mean|cls)"
            ))),
        }
    }
}

impl std::fmt::Display for Pooling {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Pooling::Mean => write!(f, "mean"),
            Pooling::Cls => write!(f, "cls"),
        }
    }
}

/// What an encoder backend can do.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    pub token_embeddings: bool,
    pub attention: bool,
    pub trainable: bool,
    pub position_free: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    Local,
    Remote,
}

/// Backend description attached to every run manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderInfo {
    pub kind: EncoderKind,
    pub capabilities: Capabilities,
    pub max_len: usize,
    /// 0 when not yet known (remote endpoints report it after first use).
    pub hidden_dim: usize,
    pub fingerprint: String,
}

/// Per-token output of an encoder run on a single text.
#[derive(Debug, Clone)]
pub struct EncoderOutput<F: Scalar> {
    pub token_ids: Vec<u32>,
    pub special_mask: Vec<bool>,
    /// `[n_tokens, hidden_dim]`.
    pub token_embeddings: Array2<F>,
    /// `[n_layers, n_heads, query, key]`, present iff requested and supported.
    pub attention: Option<Array4<F>>,
    pub pooled_mean: Array1<F>,
    pub pooled_cls: Array1<F>,
    /// Per-head key/query dimension of the attention that produced this.
    pub head_dim: usize,
}

impl<F: Scalar> EncoderOutput<F> {
    pub fn pooled(&self, pooling: Pooling) -> &Array1<F> {
        match pooling {
            Pooling::Mean => &self.pooled_mean,
            Pooling::Cls => &self.pooled_cls,
        }
    }

    /// Indices of content (non-special) tokens.
    pub fn content_positions(&self) -> Vec<usize> {
        self.special_mask
            .iter()
            .enumerate()
            .filter(|(_, &s)| !s)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Tokenization surface exposed by local backends.
pub trait Tokenize: Send + Sync {
    fn tokenize(&self, text: &str, source_id: &str, max_len: usize) -> TokenSequence;
}

/// The encoder contract `g(.)`. Implementations are deterministic in
/// inference mode: identical inputs produce identical outputs.
pub trait TextEncoder<F: Scalar>: Send + Sync {
    fn info(&self) -> EncoderInfo;

    /// Pooled embeddings, one row per input text, aligned with `texts`.
    fn encode(&self, texts: &[&str], pooling: Pooling) -> Result<Array2<F>>;

    /// Full per-token output for one text. `position_free` zeroes the
    /// positional-embedding contribution at the input layer.
    fn encode_tokens(
        &self,
        text: &str,
        want_attention: bool,
        position_free: bool,
    ) -> Result<EncoderOutput<F>>;

    /// Run an already-tokenized sequence. Backends without a local
    /// tokenizer cannot do this.
    fn encode_sequence(
        &self,
        _seq: &TokenSequence,
        _want_attention: bool,
        _position_free: bool,
    ) -> Result<EncoderOutput<F>> {
        Err(Error::UnsupportedCapability {
            capability: "token-level encoding",
        })
    }

    /// The backend tokenizer, when one exists locally.
    fn tokenizer(&self) -> Option<&dyn Tokenize> {
        None
    }
}

/// Reduce token embeddings to one vector. `mask[i] = true` keeps row `i`
/// (non-padding); mean averages the kept rows, cls returns row 0.
pub fn pool<F: Scalar>(
    token_embeddings: &ArrayView2<F>,
    mask: &[bool],
    strategy: Pooling,
) -> Result<Array1<F>> {
    if token_embeddings.nrows() != mask.len() {
        return Err(Error::InvalidArgument(format!(
            "mask length {} does not match {} rows",
            mask.len(),
            token_embeddings.nrows()
        )));
    }
    if token_embeddings.nrows() == 0 {
        return Err(Error::EmptyInput("no token embeddings to pool".into()));
    }
    match strategy {
        Pooling::Cls => Ok(token_embeddings.row(0).to_owned()),
        Pooling::Mean => {
            let mut sum = Array1::<F>::zeros(token_embeddings.ncols());
            let mut n = 0usize;
            for (row, &keep) in token_embeddings.rows().into_iter().zip(mask) {
                if keep {
                    sum = sum + &row;
                    n += 1;
                }
            }
            if n == 0 {
                return Err(Error::EmptyInput(
                    "mean pooling over fully masked sequence".into(),
                ));
            }
            Ok(sum / F::from_usize_lossy(n))
        }
    }
}

/// Cosine similarity clamped to `[-1, 1]`. Zero vectors are an error.
pub fn cosine<F: Scalar>(u: &ArrayView1<F>, v: &ArrayView1<F>) -> Result<F> {
    if u.len() != v.len() {
        return Err(Error::InvalidArgument(format!(
            "cosine of vectors with lengths {} and {}",
            u.len(),
            v.len()
        )));
    }
    let nu = u.dot(u).sqrt();
    let nv = v.dot(v).sqrt();
    if nu == F::zero() || nv == F::zero() {
        return Err(Error::InvalidArgument(
            "cosine similarity of a zero vector".into(),
        ));
    }
    let c = u.dot(v) / (nu * nv);
    Ok(c.min(F::one()).max(-F::one()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn cosine_basics() {
        let u = array![1.0f64, 0.0];
        let v = array![0.0f64, 1.0];
        let w = array![1.0f64, 1.0];
        assert_eq!(cosine(&u.view(), &u.view()).unwrap(), 1.0);
        assert_eq!(cosine(&u.view(), &v.view()).unwrap(), 0.0);
        let c = cosine(&w.view(), &u.view()).unwrap();
        assert!((c - 0.70711).abs() < 1e-5);
    }

    #[test]
    fn cosine_zero_vector_errors() {
        let z = array![0.0f64, 0.0];
        let u = array![1.0f64, 0.0];
        assert!(cosine(&z.view(), &u.view()).is_err());
    }

    #[test]
    fn cosine_self_similarity_never_exceeds_one() {
        let u = array![0.123f32, 4.567, 8.910, 0.001];
        let c = cosine(&u.view(), &u.view()).unwrap();
        assert!((0.999_999..=1.0).contains(&c));
    }

    #[test]
    fn pool_mean_and_mask() {
        let rows = array![[1.0f64, 0.0], [3.0, 0.0]];
        let mean = pool(&rows.view(), &[true, true], Pooling::Mean).unwrap();
        assert_eq!(mean, array![2.0, 0.0]);

        let rows = array![[1.0f64, 0.0], [9.0, 9.0]];
        let mean = pool(&rows.view(), &[true, false], Pooling::Mean).unwrap();
        assert_eq!(mean, array![1.0, 0.0]);
    }

    #[test]
    fn pool_cls_is_first_row() {
        let rows = array![[5.0f64, 6.0], [7.0, 8.0]];
        let cls = pool(&rows.view(), &[true, true], Pooling::Cls).unwrap();
        assert_eq!(cls, array![5.0, 6.0]);
    }

    #[test]
    fn pool_all_masked_mean_errors() {
        let rows = array![[1.0f64, 0.0]];
        assert!(pool(&rows.view(), &[false], Pooling::Mean).is_err());
    }
}
