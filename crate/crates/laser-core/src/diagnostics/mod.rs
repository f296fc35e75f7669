//! The measurement battery around the length attack: similarity shift,
//! intra-document similarity with anisotropy adjustment, isotropy by
//! length, attention gains (closed form and measured), and
//! positional-invariance divergence.

mod attention;
mod position;
mod similarity;

pub use attention::{
    attention_gain_closed_form, attention_gain_empirical, attention_gain_sweep,
    AttentionGainRecord,
};
pub use position::{js_divergence, positional_invariance, shuffle_words};
pub use similarity::{
    anisotropy_estimate, intra_document_similarity, intra_similarity_report, isotropy_report,
    similarity_shift, AnisotropyLevel,
};

use crate::encoder::Pooling;
use serde::{Deserialize, Serialize};

/// One sentence pair before and after the attack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityShiftRecord {
    pub pair_id: String,
    pub cos_original: f64,
    pub cos_attacked: f64,
    pub m: usize,
}

/// Cosine-similarity distribution shift under elongation of both pair
/// members.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityShiftReport {
    pub m: usize,
    pub pooling: Pooling,
    pub mean_original: f64,
    pub mean_attacked: f64,
    pub mean_delta: f64,
    pub records: Vec<SimilarityShiftRecord>,
}

impl SimilarityShiftReport {
    /// The summary must always be recomputable from the records.
    pub fn summary_consistent(&self, tol: f64) -> bool {
        let n = self.records.len() as f64;
        if self.records.is_empty() {
            return true;
        }
        let mo = self.records.iter().map(|r| r.cos_original).sum::<f64>() / n;
        let ma = self.records.iter().map(|r| r.cos_attacked).sum::<f64>() / n;
        (mo - self.mean_original).abs() <= tol
            && (ma - self.mean_attacked).abs() <= tol
            && ((ma - mo) - self.mean_delta).abs() <= tol
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("pair_id,cos_original,cos_attacked,m\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.pair_id, r.cos_original, r.cos_attacked, r.m
            ));
        }
        out
    }
}

/// Intra-document similarity of one document under one condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntraSimRecord {
    pub doc_id: String,
    pub intra_sim: f64,
    /// Token-level anisotropy estimate of this record's condition.
    pub anisotropy: f64,
    /// `intra_sim - anisotropy`, exactly.
    pub adjusted: f64,
    pub attacked: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntraSimReport {
    pub m: usize,
    pub n_samples: usize,
    pub seed: u64,
    pub mean_adjusted_original: f64,
    pub mean_adjusted_attacked: f64,
    pub records: Vec<IntraSimRecord>,
}

impl IntraSimReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("doc_id,intra_sim,anisotropy,adjusted,attacked\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.doc_id, r.intra_sim, r.anisotropy, r.adjusted, r.attacked
            ));
        }
        out
    }
}

/// Document-level anisotropy before and after the attack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsotropyReport {
    pub m: usize,
    pub n_samples: usize,
    pub seed: u64,
    pub anisotropy_original: f64,
    pub anisotropy_attacked: f64,
}

impl IsotropyReport {
    pub fn to_csv(&self) -> String {
        format!(
            "m,n_samples,seed,anisotropy_original,anisotropy_attacked\n{},{},{},{},{}\n",
            self.m, self.n_samples, self.seed, self.anisotropy_original, self.anisotropy_attacked
        )
    }
}

/// Collection of attention-gain measurements (one per layer/head/doc).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionGainReport {
    pub m: usize,
    pub records: Vec<AttentionGainRecord>,
}

impl AttentionGainReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "doc_id,layer,head,m,l_d,l_r,l_c,sum_l_n,attn_d_before,attn_d_after,\
             attn_r_before,attn_r_after,g_d,g_r,closed_form_residual\n",
        );
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                r.doc_id.as_deref().unwrap_or(""),
                r.layer.map(|v| v.to_string()).unwrap_or_default(),
                r.head.map(|v| v.to_string()).unwrap_or_default(),
                r.m,
                r.l_d,
                r.l_r,
                r.l_c,
                r.sum_l_n,
                r.attn_d_before,
                r.attn_d_after,
                r.attn_r_before,
                r.attn_r_after,
                r.g_d,
                r.g_r,
                r.closed_form_residual
                    .map(|v| v.to_string())
                    .unwrap_or_default(),
            ));
        }
        out
    }
}

/// Jensen-Shannon divergence between original-pair and shuffled-pair
/// similarity distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionalInvarianceReport {
    pub js_original_vs_shuffled: f64,
    pub histogram_bins: usize,
    pub seed: u64,
    pub n_pairs: usize,
}

impl PositionalInvarianceReport {
    pub fn to_csv(&self) -> String {
        format!(
            "js_original_vs_shuffled,histogram_bins,seed,n_pairs\n{},{},{},{}\n",
            self.js_original_vs_shuffled, self.histogram_bins, self.seed, self.n_pairs
        )
    }
}
