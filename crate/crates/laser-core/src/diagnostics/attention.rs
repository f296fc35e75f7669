//! Attention gains under elongation: the closed-form softmax algebra and
//! its empirical counterpart measured on a position-free encoder run.

use crate::corpus::Document;
use crate::elongation::elongate_tokens;
use crate::encoder::TextEncoder;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Attention mass bookkeeping for one (document, layer, head, m) probe.
///
/// `l_d`, `l_r`, `l_c` are the probe token's attention masses toward the
/// dominant token, a regular token, and the non-elongated special tokens;
/// `sum_l_n` is the probe row total. `g_d`/`g_r` are the measured gains
/// `attn_after - attn_before`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionGainRecord {
    pub l_d: f64,
    pub l_r: f64,
    pub l_c: f64,
    pub sum_l_n: f64,
    pub m: usize,
    pub attn_d_before: f64,
    pub attn_d_after: f64,
    pub attn_r_before: f64,
    pub attn_r_after: f64,
    pub g_d: f64,
    pub g_r: f64,
    /// |measured attention after attack - closed-form prediction|, filled
    /// by the empirical path.
    pub closed_form_residual: Option<f64>,
    pub doc_id: Option<String>,
    pub layer: Option<usize>,
    pub head: Option<usize>,
    pub dominant_token_id: Option<u32>,
    pub regular_token_id: Option<u32>,
}

fn check_positive<F: Scalar>(name: &str, v: F) -> Result<()> {
    if !(v.is_finite() && v > F::zero()) {
        return Err(Error::InvalidArgument(format!(
            "{name} must be positive and finite, got {v}"
        )));
    }
    Ok(())
}

/// Evaluate the closed-form attention shift: with every non-special token
/// copied `m` times, the probe's attention toward a token with mass `l`
/// goes from `l / sum_l_n` to `l / (sum_l_n - ((m-1)/m) * l_c)`.
pub fn attention_gain_closed_form<F: Scalar>(
    l_d: F,
    l_r: F,
    l_c: F,
    sum_l_n: F,
    m: usize,
) -> Result<AttentionGainRecord> {
    check_positive("l_d", l_d)?;
    check_positive("l_r", l_r)?;
    check_positive("l_c", l_c)?;
    check_positive("sum_l_n", sum_l_n)?;
    if m == 0 {
        return Err(Error::InvalidArgument("elongation factor m = 0".into()));
    }
    // Tolerate float round-off from attention rows that sum to ~1.
    let slack = F::from_f64_lossy(1e-9) * sum_l_n;
    if sum_l_n + slack < l_d + l_r + l_c {
        return Err(Error::InvalidArgument(format!(
            "sum_l_n {sum_l_n} smaller than l_d + l_r + l_c"
        )));
    }
    let m_f = F::from_usize_lossy(m);
    let shrink = (m_f - F::one()) / m_f * l_c;
    let denom = sum_l_n - shrink;
    if denom <= F::zero() {
        return Err(Error::InvalidArgument(
            "non-positive denominator in attention shift".into(),
        ));
    }
    let attn_d_before = l_d / sum_l_n;
    let attn_d_after = l_d / denom;
    let attn_r_before = l_r / sum_l_n;
    let attn_r_after = l_r / denom;
    Ok(AttentionGainRecord {
        l_d: l_d.to_f64_lossy(),
        l_r: l_r.to_f64_lossy(),
        l_c: l_c.to_f64_lossy(),
        sum_l_n: sum_l_n.to_f64_lossy(),
        m,
        attn_d_before: attn_d_before.to_f64_lossy(),
        attn_d_after: attn_d_after.to_f64_lossy(),
        attn_r_before: attn_r_before.to_f64_lossy(),
        attn_r_after: attn_r_after.to_f64_lossy(),
        g_d: (attn_d_after - attn_d_before).to_f64_lossy(),
        g_r: (attn_r_after - attn_r_before).to_f64_lossy(),
        closed_form_residual: None,
        doc_id: None,
        layer: None,
        head: None,
        dominant_token_id: None,
        regular_token_id: None,
    })
}

/// Total attention mass received by each distinct content token id
/// (columns summed over all probe rows and all copies).
fn received_mass_by_id<F: Scalar>(
    attn: &ArrayView2<'_, F>,
    token_ids: &[u32],
    special_mask: &[bool],
) -> BTreeMap<u32, f64> {
    let mut mass: BTreeMap<u32, f64> = BTreeMap::new();
    for (col, (&id, &special)) in token_ids.iter().zip(special_mask).enumerate() {
        if special {
            continue;
        }
        let col_sum: f64 = attn.column(col).iter().map(|v| v.to_f64_lossy()).sum();
        *mass.entry(id).or_insert(0.0) += col_sum;
    }
    mass
}

/// Probe-row (begin marker) attention mass toward every copy of `id`.
fn probe_mass_for_id<F: Scalar>(
    attn: &ArrayView2<'_, F>,
    token_ids: &[u32],
    special_mask: &[bool],
    id: u32,
) -> f64 {
    token_ids
        .iter()
        .zip(special_mask)
        .enumerate()
        .filter(|(_, (&tid, &special))| !special && tid == id)
        .map(|(col, _)| attn[[0, col]].to_f64_lossy())
        .sum()
}

fn probe_mass_specials<F: Scalar>(attn: &ArrayView2<'_, F>, special_mask: &[bool]) -> f64 {
    special_mask
        .iter()
        .enumerate()
        .filter(|(_, &s)| s)
        .map(|(col, _)| attn[[0, col]].to_f64_lossy())
        .sum()
}

/// Measure the attention shift empirically in position-free mode.
///
/// The dominant token is the content token receiving maximal total
/// attention mass in the chosen layer/head on the original run; the
/// regular token is the one receiving minimal mass. The probe is the begin
/// marker (row 0). The closed-form residual is computed from the
/// elongated run's per-copy masses, so it is a direct check of the
/// equal-attention-across-copies premise.
pub fn attention_gain_empirical<F: Scalar>(
    encoder: &dyn TextEncoder<F>,
    doc: &Document,
    m: usize,
    layer: usize,
    head: usize,
) -> Result<AttentionGainRecord> {
    let info = encoder.info();
    if !info.capabilities.attention {
        return Err(Error::UnsupportedCapability {
            capability: "attention maps",
        });
    }
    if !info.capabilities.position_free {
        return Err(Error::UnsupportedCapability {
            capability: "position-free mode",
        });
    }
    if m == 0 {
        return Err(Error::InvalidArgument("elongation factor m = 0".into()));
    }
    let tokenizer = encoder.tokenizer().ok_or(Error::UnsupportedCapability {
        capability: "local tokenizer",
    })?;
    let seq = tokenizer.tokenize(&doc.text, &doc.id, info.max_len);
    if seq.n_content() < 3 {
        return Err(Error::InvalidArgument(format!(
            "document {} has {} content tokens; the probe needs at least 3",
            doc.id,
            seq.n_content()
        )));
    }
    if seq.n_content() * m + seq.n_special() > info.max_len {
        return Err(Error::InvalidArgument(format!(
            "elongating {} content tokens {m} times exceeds the encoder budget {}; \
             the exact check needs full copies",
            seq.n_content(),
            info.max_len
        )));
    }

    let original = encoder.encode_sequence(&seq, true, true)?;
    let attn = original.attention.as_ref().ok_or(Error::UnsupportedCapability {
        capability: "attention maps",
    })?;
    let shape = attn.shape();
    if layer >= shape[0] || head >= shape[1] {
        return Err(Error::InvalidArgument(format!(
            "layer {layer} / head {head} outside model with {} layers and {} heads",
            shape[0], shape[1]
        )));
    }
    let attn_orig = attn.slice(ndarray::s![layer, head, .., ..]);

    let mass = received_mass_by_id(&attn_orig, &seq.token_ids, &seq.special_mask);
    if mass.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "document {} needs at least two distinct content tokens",
            doc.id
        )));
    }
    let (&dominant_id, _) = mass
        .iter()
        .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite mass").then(b.0.cmp(a.0)))
        .expect("non-empty");
    let (&regular_id, _) = mass
        .iter()
        .min_by(|a, b| a.1.partial_cmp(b.1).expect("finite mass").then(b.0.cmp(a.0)))
        .expect("non-empty");

    let l_d = probe_mass_for_id(&attn_orig, &seq.token_ids, &seq.special_mask, dominant_id);
    let l_r = probe_mass_for_id(&attn_orig, &seq.token_ids, &seq.special_mask, regular_id);
    let l_c = probe_mass_specials(&attn_orig, &seq.special_mask);
    let sum_l_n: f64 = attn_orig.row(0).iter().map(|v| v.to_f64_lossy()).sum();

    // Elongated run at the same layer/head.
    let elongated = elongate_tokens(&seq, m, info.max_len)?;
    let out = encoder.encode_sequence(&elongated, true, true)?;
    let attn_e = out.attention.as_ref().expect("attention requested");
    let attn_after = attn_e.slice(ndarray::s![layer, head, .., ..]);

    let after_d = probe_mass_for_id(
        &attn_after,
        &elongated.token_ids,
        &elongated.special_mask,
        dominant_id,
    );
    let after_r = probe_mass_for_id(
        &attn_after,
        &elongated.token_ids,
        &elongated.special_mask,
        regular_id,
    );

    // Closed-form prediction from the elongated run's own measurements:
    // one copy's probe mass per distinct token, specials once. When every
    // copy of a token receives identical attention (the position-free
    // premise), this reproduces the summed empirical mass exactly.
    let copies_orig: BTreeMap<u32, usize> = {
        let mut counts = BTreeMap::new();
        for (&id, &special) in seq.token_ids.iter().zip(&seq.special_mask) {
            if !special {
                *counts.entry(id).or_insert(0) += 1;
            }
        }
        counts
    };
    let first_copy_mass = |id: u32| -> f64 {
        elongated
            .token_ids
            .iter()
            .zip(&elongated.special_mask)
            .enumerate()
            .find(|(_, (&tid, &special))| !special && tid == id)
            .map(|(col, _)| attn_after[[0, col]].to_f64_lossy())
            .unwrap_or(0.0)
    };
    let spec_mass = probe_mass_specials(&attn_after, &elongated.special_mask);
    let mut sum_one_copy = spec_mass;
    for (&id, &count) in &copies_orig {
        sum_one_copy += count as f64 * first_copy_mass(id);
    }
    let predicted_after = {
        let m_f = m as f64;
        let denom = sum_one_copy - (m_f - 1.0) / m_f * spec_mass;
        copies_orig[&dominant_id] as f64 * first_copy_mass(dominant_id) / denom
    };
    let residual = (after_d - predicted_after).abs();

    Ok(AttentionGainRecord {
        l_d,
        l_r,
        l_c,
        sum_l_n,
        m,
        attn_d_before: l_d,
        attn_d_after: after_d,
        attn_r_before: l_r,
        attn_r_after: after_r,
        g_d: after_d - l_d,
        g_r: after_r - l_r,
        closed_form_residual: Some(residual),
        doc_id: Some(doc.id.clone()),
        layer: Some(layer),
        head: Some(head),
        dominant_token_id: Some(dominant_id),
        regular_token_id: Some(regular_id),
    })
}

/// Run the empirical probe over every layer/head of the encoder.
pub fn attention_gain_sweep<F: Scalar>(
    encoder: &dyn TextEncoder<F>,
    doc: &Document,
    m: usize,
) -> Result<Vec<AttentionGainRecord>> {
    let probe = encoder.encode_tokens(&doc.text, true, true)?;
    let attn = probe.attention.ok_or(Error::UnsupportedCapability {
        capability: "attention maps",
    })?;
    let (n_layers, n_heads) = (attn.shape()[0], attn.shape()[1]);
    let mut records = Vec::with_capacity(n_layers * n_heads);
    for layer in 0..n_layers {
        for head in 0..n_heads {
            records.push(attention_gain_empirical(encoder, doc, m, layer, head)?);
        }
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_instance_matches_independent_arithmetic() {
        let r = attention_gain_closed_form(4.0f64, 2.0, 1.0, 8.0, 2).unwrap();
        assert!((r.attn_d_before - 0.5).abs() < 1e-12);
        assert!((r.attn_d_after - 0.533_333_333_333).abs() < 1e-9);
        assert!((r.g_d - 1.0 / 30.0).abs() < 1e-9);
        assert!((r.g_r - 1.0 / 60.0).abs() < 1e-9);
        assert!(r.g_d > r.g_r);
        assert!((r.g_d - (r.attn_d_after - r.attn_d_before)).abs() < 1e-9);
    }

    #[test]
    fn m_one_has_zero_gains() {
        let r = attention_gain_closed_form(3.0f64, 1.5, 0.5, 6.0, 1).unwrap();
        assert_eq!(r.g_d, 0.0);
        assert_eq!(r.g_r, 0.0);
    }

    #[test]
    fn symmetric_masses_have_equal_gains() {
        for m in [2usize, 5, 100] {
            let r = attention_gain_closed_form(2.5f64, 2.5, 1.0, 9.0, m).unwrap();
            assert!((r.g_d - r.g_r).abs() < 1e-15);
        }
    }

    #[test]
    fn preconditions_are_enforced() {
        assert!(attention_gain_closed_form(0.0f64, 1.0, 1.0, 4.0, 2).is_err());
        assert!(attention_gain_closed_form(1.0f64, 1.0, 1.0, 2.0, 2).is_err());
        assert!(attention_gain_closed_form(1.0f64, 1.0, 1.0, 4.0, 0).is_err());
    }

    #[test]
    fn works_in_f32() {
        let r = attention_gain_closed_form(4.0f32, 2.0, 1.0, 8.0, 2).unwrap();
        assert!((r.g_d - 1.0 / 30.0).abs() < 1e-6);
    }
}
