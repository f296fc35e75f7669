//! Length-attack analysis and length-agnostic self-reference training for
//! contrastive text encoders.
//!
//! What lives here:
//!
//! - [`elongation`] — the copy-and-concatenate attack operator at text and
//!   token level, the budgeted `m`-sampling rule, and a length-normalized
//!   tf-idf vectorizer that is exactly invariant under the attack.
//! - [`corpus`] — line corpora, JSONL retrieval collections with TSV qrels,
//!   STS pair files, sentence segmentation, anchor selection, and seeded
//!   synthetic fixture generators.
//! - [`encoder`] — a uniform contract over text encoders: a small trainable
//!   transformer with attention extraction and a position-free mode, stub
//!   encoders for tests, and a remote embedding-endpoint client.
//! - [`diagnostics`] — similarity shift under attack, intra-document
//!   similarity, anisotropy/isotropy estimates, closed-form and empirical
//!   attention gains, and positional-invariance JS divergence.
//! - [`training`] — self-reference / intra-reference / dropout-baseline
//!   pair construction and an infoNCE fine-tuning loop.
//! - [`evaluation`] — exhaustive dense retrieval scored with nDCG@k and
//!   STS Spearman correlation.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below pin the default precision used by the CLI.

pub mod corpus;
pub mod diagnostics;
pub mod elongation;
pub mod encoder;
pub mod error;
pub mod evaluation;
pub mod manifest;
pub mod scalar;
pub mod training;
pub mod util;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Default scalar type for CLI runs and fixtures.
pub type DefaultScalar = f64;

/// Transformer encoder at default precision.
pub type TransformerEncoderF64 = encoder::transformer::TransformerEncoder<f64>;
/// Single-precision transformer encoder.
pub type TransformerEncoderF32 = encoder::transformer::TransformerEncoder<f32>;
