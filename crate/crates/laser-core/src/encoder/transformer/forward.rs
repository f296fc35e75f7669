//! Forward pass of the local transformer (post-LayerNorm encoder blocks),
//! caching every intermediate the backward pass needs.

use super::params::{LnParams, Params, TransformerConfig};
use crate::scalar::Scalar;
use ndarray::{s, Array1, Array2, Array3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub struct LnCache<F: Scalar> {
    pub xhat: Array2<F>,
    pub inv_std: Array1<F>,
}

pub struct LayerCache<F: Scalar> {
    pub x_in: Array2<F>,
    pub q: Array2<F>,
    pub k: Array2<F>,
    pub v: Array2<F>,
    /// Softmax output, pre-dropout: `[heads, query, key]`.
    pub probs: Array3<F>,
    pub attn_drop: Option<Array3<F>>,
    /// Head-concatenated attention context (built from dropped probs).
    pub ctx: Array2<F>,
    pub res1_drop: Option<Array2<F>>,
    pub ln1: LnCache<F>,
    /// Attention-block output, the FFN input.
    pub y1: Array2<F>,
    /// FFN pre-activation.
    pub u: Array2<F>,
    /// FFN activation output.
    pub g: Array2<F>,
    pub res2_drop: Option<Array2<F>>,
    pub ln2: LnCache<F>,
}

pub struct ForwardCache<F: Scalar> {
    pub ids: Vec<u32>,
    pub position_free: bool,
    pub emb_ln: LnCache<F>,
    pub emb_drop: Option<Array2<F>>,
    pub layers: Vec<LayerCache<F>>,
    /// Final hidden states `[n_tokens, hidden_dim]`.
    pub hidden: Array2<F>,
}

pub(super) fn linear<F: Scalar>(x: &Array2<F>, w: &Array2<F>, b: &Array1<F>) -> Array2<F> {
    x.dot(w) + b
}

/// Row-wise LayerNorm with population variance.
pub(super) fn layer_norm<F: Scalar>(
    x: &Array2<F>,
    ln: &LnParams<F>,
    eps: F,
) -> (Array2<F>, LnCache<F>) {
    let (rows, cols) = x.dim();
    let dim = F::from_usize_lossy(cols);
    let mut xhat = Array2::<F>::zeros((rows, cols));
    let mut inv_std = Array1::<F>::zeros(rows);
    for r in 0..rows {
        let row = x.row(r);
        let mean = row.sum() / dim;
        let mut var = F::zero();
        for &value in row {
            let d = value - mean;
            var += d * d;
        }
        var /= dim;
        let istd = F::one() / (var + eps).sqrt();
        inv_std[r] = istd;
        for c in 0..cols {
            xhat[[r, c]] = (x[[r, c]] - mean) * istd;
        }
    }
    let y = &xhat * &ln.gamma + &ln.beta;
    (y, LnCache { xhat, inv_std })
}

/// In-place numerically-stable softmax over the last axis.
pub(super) fn softmax_rows<F: Scalar>(scores: &mut Array2<F>) {
    for mut row in scores.rows_mut() {
        let max = row.iter().copied().fold(F::neg_infinity(), F::max);
        let mut sum = F::zero();
        for value in row.iter_mut() {
            *value = (*value - max).exp();
            sum += *value;
        }
        for value in row.iter_mut() {
            *value /= sum;
        }
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

pub(super) fn gelu<F: Scalar>(u: F) -> F {
    let c = F::from_f64_lossy(GELU_C);
    let a = F::from_f64_lossy(GELU_A);
    let half = F::from_f64_lossy(0.5);
    let w = c * (u + a * u * u * u);
    half * u * (F::one() + w.tanh())
}

pub(super) fn gelu_prime<F: Scalar>(u: F) -> F {
    let c = F::from_f64_lossy(GELU_C);
    let a = F::from_f64_lossy(GELU_A);
    let half = F::from_f64_lossy(0.5);
    let three = F::from_f64_lossy(3.0);
    let w = c * (u + a * u * u * u);
    let t = w.tanh();
    let sech2 = F::one() - t * t;
    half * (F::one() + t) + half * u * sech2 * c * (F::one() + three * a * u * u)
}

fn dropout_mask2<F: Scalar>(rng: &mut ChaCha8Rng, p: f64, shape: (usize, usize)) -> Array2<F> {
    let scale = F::from_f64_lossy(1.0 / (1.0 - p));
    Array2::from_shape_fn(shape, |_| {
        if rng.gen::<f64>() < p {
            F::zero()
        } else {
            scale
        }
    })
}

fn dropout_mask3<F: Scalar>(
    rng: &mut ChaCha8Rng,
    p: f64,
    shape: (usize, usize, usize),
) -> Array3<F> {
    let scale = F::from_f64_lossy(1.0 / (1.0 - p));
    Array3::from_shape_fn(shape, |_| {
        if rng.gen::<f64>() < p {
            F::zero()
        } else {
            scale
        }
    })
}

/// Run the encoder over one token-id sequence. `dropout` carries the
/// training RNG; inference passes `None` and is fully deterministic.
pub(super) fn forward<F: Scalar>(
    cfg: &TransformerConfig,
    params: &Params<F>,
    ids: &[u32],
    position_free: bool,
    mut dropout: Option<&mut ChaCha8Rng>,
) -> ForwardCache<F> {
    let t_len = ids.len();
    let d = cfg.hidden_dim;
    let n_heads = cfg.n_heads;
    let dk = cfg.head_dim();
    let scale = F::one() / F::from_usize_lossy(dk).sqrt();
    let eps = F::from_f64_lossy(cfg.ln_eps);
    let p = cfg.dropout;

    debug_assert!(t_len >= 1 && t_len <= cfg.max_len, "sequence length {t_len}");

    // Embedding: token (+ positional unless position-free) -> LN -> dropout.
    let mut x = Array2::<F>::zeros((t_len, d));
    for (r, &id) in ids.iter().enumerate() {
        let tok = params.tok_emb.row(id as usize);
        if position_free {
            x.row_mut(r).assign(&tok);
        } else {
            let pos = params.pos_emb.row(r);
            x.row_mut(r).assign(&(&tok + &pos));
        }
    }
    let (mut x, emb_ln) = layer_norm(&x, &params.ln_emb, eps);
    let emb_drop = dropout.as_deref_mut().map(|rng| {
        let mask = dropout_mask2::<F>(rng, p, (t_len, d));
        x = &x * &mask;
        mask
    });

    let mut layer_caches = Vec::with_capacity(cfg.n_layers);
    for layer in &params.layers {
        let x_in = x.clone();
        let q = linear(&x_in, &layer.wq, &layer.bq);
        let k = linear(&x_in, &layer.wk, &layer.bk);
        let v = linear(&x_in, &layer.wv, &layer.bv);

        let mut probs = Array3::<F>::zeros((n_heads, t_len, t_len));
        for h in 0..n_heads {
            let cols = s![.., h * dk..(h + 1) * dk];
            let qh = q.slice(cols);
            let kh = k.slice(cols);
            let mut scores = qh.dot(&kh.t()) * scale;
            softmax_rows(&mut scores);
            probs.slice_mut(s![h, .., ..]).assign(&scores);
        }
        let attn_drop = dropout
            .as_deref_mut()
            .map(|rng| dropout_mask3::<F>(rng, p, (n_heads, t_len, t_len)));

        let mut ctx = Array2::<F>::zeros((t_len, d));
        for h in 0..n_heads {
            let vh = v.slice(s![.., h * dk..(h + 1) * dk]);
            let ph = probs.slice(s![h, .., ..]);
            let ph = match &attn_drop {
                Some(mask) => ph.to_owned() * &mask.slice(s![h, .., ..]),
                None => ph.to_owned(),
            };
            let ctx_h = ph.dot(&vh);
            ctx.slice_mut(s![.., h * dk..(h + 1) * dk]).assign(&ctx_h);
        }

        let mut proj = linear(&ctx, &layer.wo, &layer.bo);
        let res1_drop = dropout.as_deref_mut().map(|rng| {
            let mask = dropout_mask2::<F>(rng, p, (t_len, d));
            proj = &proj * &mask;
            mask
        });
        let s1 = &x_in + &proj;
        let (y1, ln1) = layer_norm(&s1, &layer.ln_attn, eps);

        let u = linear(&y1, &layer.w_up, &layer.b_up);
        let g = u.mapv(gelu);
        let mut f = linear(&g, &layer.w_down, &layer.b_down);
        let res2_drop = dropout.as_deref_mut().map(|rng| {
            let mask = dropout_mask2::<F>(rng, p, (t_len, d));
            f = &f * &mask;
            mask
        });
        let s2 = &y1 + &f;
        let (y2, ln2) = layer_norm(&s2, &layer.ln_ffn, eps);

        layer_caches.push(LayerCache {
            x_in,
            q,
            k,
            v,
            probs,
            attn_drop,
            ctx,
            res1_drop,
            ln1,
            y1,
            u,
            g,
            res2_drop,
            ln2,
        });
        x = y2;
    }

    ForwardCache {
        ids: ids.to_vec(),
        position_free,
        emb_ln,
        emb_drop,
        layers: layer_caches,
        hidden: x,
    }
}
