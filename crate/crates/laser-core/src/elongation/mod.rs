//! The elongation operator: copy a text `m` times and concatenate, at the
//! text level and at the token level, plus the rule for sampling `m` under
//! a token budget.

pub mod tfidf;

use crate::error::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Special-token ids shared by every local tokenizer in this crate.
pub mod special {
    pub const PAD: u32 = 0;
    pub const UNK: u32 = 1;
    pub const CLS: u32 = 2;
    pub const SEP: u32 = 3;
    pub const MASK: u32 = 4;
    /// First id available for vocabulary words.
    pub const FIRST_WORD_ID: u32 = 5;
}

/// How the elongation factor `m` is chosen when building training pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ElongationMode {
    /// Always elongate by the same factor.
    Fixed { m: usize },
    /// Draw `m` uniformly from `[1, m_max]` where `m_max` is the largest
    /// factor that fits the token budget.
    Random,
}

impl std::str::FromStr for ElongationMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "random" {
            return Ok(ElongationMode::Random);
        }
        if let Some(k) = s.strip_prefix("fixed:") {
            let m: usize = k.parse().map_err(|_| {
                Error::InvalidArgument(format!("bad fixed elongation factor {k:?}"))
            })?;
            if m == 0 {
                return Err(Error::InvalidArgument(
                    "fixed elongation factor must be >= 1".into(),
                ));
            }
            return Ok(ElongationMode::Fixed { m });
        }
        Err(Error::InvalidArgument(format!(
            "unknown elongation mode {s:?} (expected random|fixed:K)"
        )))
    }
}

impl std::fmt::Display for ElongationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ElongationMode::Fixed { m } => write!(f, "fixed:{m}"),
            ElongationMode::Random => write!(f, "random"),
        }
    }
}

/// The full elongation policy for a run: mode, token budget (including
/// special tokens), and the seed that makes sampling reproducible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElongationPlan {
    #[serde(flatten)]
    pub mode: ElongationMode,
    pub max_len: usize,
    pub seed: u64,
}

impl ElongationPlan {
    pub fn new(mode: ElongationMode, max_len: usize, seed: u64) -> Result<Self> {
        if let ElongationMode::Fixed { m } = mode {
            if m == 0 {
                return Err(Error::InvalidArgument(
                    "fixed elongation factor must be >= 1".into(),
                ));
            }
        }
        if max_len < 3 {
            return Err(Error::InvalidArgument(format!(
                "max_len {max_len} leaves no room for begin marker, one token, end marker"
            )));
        }
        Ok(ElongationPlan {
            mode,
            max_len,
            seed,
        })
    }
}

/// A tokenized text: ids plus a parallel mask flagging special tokens.
/// Exactly one begin marker sits at position 0; at most one end marker sits
/// at the final position; no special token appears anywhere else.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub token_ids: Vec<u32>,
    pub special_mask: Vec<bool>,
    pub source_id: String,
}

impl TokenSequence {
    pub fn new(token_ids: Vec<u32>, special_mask: Vec<bool>, source_id: String) -> Result<Self> {
        let seq = TokenSequence {
            token_ids,
            special_mask,
            source_id,
        };
        seq.validate()?;
        Ok(seq)
    }

    pub fn validate(&self) -> Result<()> {
        if self.token_ids.len() != self.special_mask.len() {
            return Err(Error::InvalidArgument(format!(
                "token_ids ({}) and special_mask ({}) lengths differ",
                self.token_ids.len(),
                self.special_mask.len()
            )));
        }
        if self.token_ids.is_empty() || !self.special_mask[0] {
            return Err(Error::InvalidArgument(
                "sequence must start with a begin marker".into(),
            ));
        }
        let last = self.token_ids.len() - 1;
        for (i, &special) in self.special_mask.iter().enumerate().skip(1) {
            if special && i != last {
                return Err(Error::InvalidArgument(format!(
                    "special token at interior position {i}"
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    /// Whether the sequence carries an end marker.
    pub fn has_end_marker(&self) -> bool {
        self.len() > 1 && self.special_mask[self.len() - 1]
    }

    pub fn n_special(&self) -> usize {
        self.special_mask.iter().filter(|&&s| s).count()
    }

    pub fn n_content(&self) -> usize {
        self.len() - self.n_special()
    }

    /// Ids of the non-special tokens, in order.
    pub fn content_ids(&self) -> Vec<u32> {
        self.token_ids
            .iter()
            .zip(&self.special_mask)
            .filter(|(_, &s)| !s)
            .map(|(&id, _)| id)
            .collect()
    }
}

/// Copy `text` `m` times, space-joined. `m = 1` returns the input
/// unchanged; `m = 0` is an invalid argument.
pub fn elongate_text(text: &str, m: usize) -> Result<String> {
    if m == 0 {
        return Err(Error::InvalidArgument("elongation factor m = 0".into()));
    }
    if text.is_empty() {
        return Err(Error::EmptyInput("cannot elongate empty text".into()));
    }
    if m == 1 {
        return Ok(text.to_string());
    }
    let mut out = String::with_capacity(text.len() * m + m - 1);
    for i in 0..m {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(text);
    }
    Ok(out)
}

/// Replicate the non-special tokens of a sequence block-wise `m` times,
/// keeping the single begin marker at position 0 and the single end marker
/// (when present) at the end. If the result exceeds `max_len`, non-special
/// tokens are truncated from the right so the earliest full copies survive.
pub fn elongate_tokens(seq: &TokenSequence, m: usize, max_len: usize) -> Result<TokenSequence> {
    if m == 0 {
        return Err(Error::InvalidArgument("elongation factor m = 0".into()));
    }
    seq.validate()?;
    let n_special = seq.n_special();
    if max_len < n_special + 1 {
        return Err(Error::InvalidArgument(format!(
            "max_len {max_len} cannot hold {n_special} special tokens plus content"
        )));
    }
    let content = seq.content_ids();
    let budget = max_len - n_special;
    let total = content.len().saturating_mul(m);
    let keep = total.min(budget);

    let mut ids = Vec::with_capacity(keep + n_special);
    let mut mask = Vec::with_capacity(keep + n_special);
    ids.push(seq.token_ids[0]);
    mask.push(true);
    ids.extend(content.iter().cycle().take(keep));
    mask.extend(std::iter::repeat(false).take(keep));
    if seq.has_end_marker() {
        ids.push(*seq.token_ids.last().expect("non-empty"));
        mask.push(true);
    }
    TokenSequence::new(ids, mask, seq.source_id.clone())
}

/// Draw the elongation factor for a sequence with `n_content_tokens`
/// content tokens and `n_special_tokens` markers under a `max_len` budget:
/// uniform over `[1, m_max]` with
/// `m_max = max(1, floor((max_len - n_special) / n_content))`.
pub fn sample_m(
    n_content_tokens: usize,
    n_special_tokens: usize,
    max_len: usize,
    rng: &mut impl Rng,
) -> Result<usize> {
    if n_content_tokens == 0 {
        return Err(Error::InvalidArgument(
            "cannot sample m for a sequence with no content tokens".into(),
        ));
    }
    let m_max = max_m(n_content_tokens, n_special_tokens, max_len);
    Ok(rng.gen_range(1..=m_max))
}

/// Largest elongation factor that fits the budget (1 when nothing fits).
pub fn max_m(n_content_tokens: usize, n_special_tokens: usize, max_len: usize) -> usize {
    (max_len.saturating_sub(n_special_tokens) / n_content_tokens).max(1)
}

#[cfg(test)]
mod tests {
    use super::special::*;
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn seq(content: &[u32], with_sep: bool) -> TokenSequence {
        let mut ids = vec![CLS];
        let mut mask = vec![true];
        ids.extend_from_slice(content);
        mask.extend(std::iter::repeat(false).take(content.len()));
        if with_sep {
            ids.push(SEP);
            mask.push(true);
        }
        TokenSequence::new(ids, mask, "t".into()).unwrap()
    }

    #[test]
    fn elongate_text_identity_and_double() {
        assert_eq!(elongate_text("what is NLP?", 1).unwrap(), "what is NLP?");
        assert_eq!(
            elongate_text("what is NLP?", 2).unwrap(),
            "what is NLP? what is NLP?"
        );
    }

    #[test]
    fn elongate_text_hundred_copies() {
        let out = elongate_text("what is NLP?", 100).unwrap();
        assert_eq!(out.matches("what is NLP?").count(), 100);
        assert_eq!(out.len(), "what is NLP?".len() * 100 + 99);
    }

    #[test]
    fn elongate_text_m_zero_is_invalid() {
        assert!(matches!(
            elongate_text("x", 0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn elongate_tokens_doubles_content_keeping_markers() {
        let s = seq(&[10, 11], true);
        let out = elongate_tokens(&s, 2, 256).unwrap();
        assert_eq!(out.token_ids, vec![CLS, 10, 11, 10, 11, SEP]);
        assert_eq!(out.special_mask, vec![true, false, false, false, false, true]);
    }

    #[test]
    fn elongate_tokens_identity() {
        let s = seq(&[10], true);
        assert_eq!(elongate_tokens(&s, 1, 256).unwrap(), s);
    }

    #[test]
    fn elongate_tokens_truncates_to_budget() {
        // 200 content tokens, m = 2 exceeds 256: exactly 254 content survive.
        let content: Vec<u32> = (0..200).map(|i| FIRST_WORD_ID + i).collect();
        let s = seq(&content, true);
        let out = elongate_tokens(&s, 2, 256).unwrap();
        assert_eq!(out.len(), 256);
        assert_eq!(out.n_content(), 254);
        // Right truncation: first full copy intact.
        assert_eq!(&out.token_ids[1..201], &content[..]);
        assert_eq!(out.token_ids[201..255], content[..54]);
        assert!(out.has_end_marker());
    }

    #[test]
    fn sample_m_matches_budget_rule() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        // 10 content tokens, one special marker: m in [1, 25].
        let mut seen = std::collections::HashSet::new();
        for _ in 0..2000 {
            let m = sample_m(10, 1, 256, &mut rng).unwrap();
            assert!((1..=25).contains(&m));
            seen.insert(m);
        }
        assert_eq!(seen.len(), 25, "all factors should appear");
        // 50 content tokens: m in [1, 5].
        for _ in 0..200 {
            let m = sample_m(50, 2, 256, &mut rng).unwrap();
            assert!((1..=5).contains(&m));
        }
        // No budget: clamp to 1.
        for _ in 0..10 {
            assert_eq!(sample_m(300, 2, 256, &mut rng).unwrap(), 1);
        }
    }

    #[test]
    fn sampled_m_never_overflows_budget() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..60usize {
            for _ in 0..50 {
                let m = sample_m(n, 2, 128, &mut rng).unwrap();
                if n + 2 <= 128 {
                    assert!(m * n + 2 <= 128, "n={n} m={m}");
                }
            }
        }
    }

    #[test]
    fn interior_special_token_rejected() {
        let err = TokenSequence::new(vec![CLS, SEP, 9], vec![true, true, false], "x".into());
        assert!(err.is_err());
    }
}
