//! Reverse-mode gradients for the transformer forward pass. Gradients
//! accumulate into a `Params`-shaped tree, so one tree can collect a whole
//! mini-batch before the optimizer step.

use super::forward::{gelu_prime, ForwardCache, LnCache};
use super::params::{LnParams, Params, TransformerConfig};
use crate::scalar::Scalar;
use ndarray::{s, Array1, Array2};

/// LayerNorm backward. Returns the gradient w.r.t. the pre-normalization
/// input and accumulates the gain/bias gradients.
fn layer_norm_backward<F: Scalar>(
    dy: &Array2<F>,
    cache: &LnCache<F>,
    ln: &LnParams<F>,
    dgamma: &mut Array1<F>,
    dbeta: &mut Array1<F>,
) -> Array2<F> {
    let (rows, cols) = dy.dim();
    let dim = F::from_usize_lossy(cols);
    *dgamma += &(dy * &cache.xhat).sum_axis(ndarray::Axis(0));
    *dbeta += &dy.sum_axis(ndarray::Axis(0));

    let dxhat = dy * &ln.gamma;
    let mut dx = Array2::<F>::zeros((rows, cols));
    for r in 0..rows {
        let dxhat_r = dxhat.row(r);
        let xhat_r = cache.xhat.row(r);
        let m1 = dxhat_r.sum() / dim;
        let mut m2 = F::zero();
        for (dv, xv) in dxhat_r.iter().zip(xhat_r) {
            m2 += *dv * *xv;
        }
        m2 /= dim;
        let istd = cache.inv_std[r];
        for c in 0..cols {
            dx[[r, c]] = (dxhat_r[c] - m1 - xhat_r[c] * m2) * istd;
        }
    }
    dx
}

/// Softmax backward over the last axis: `dS = P .* (dP - rowsum(dP .* P))`.
fn softmax_backward<F: Scalar>(dp: &Array2<F>, probs: &Array2<F>) -> Array2<F> {
    let mut ds = Array2::<F>::zeros(dp.raw_dim());
    for ((mut ds_row, dp_row), p_row) in ds
        .rows_mut()
        .into_iter()
        .zip(dp.rows())
        .zip(probs.rows())
    {
        let mut inner = F::zero();
        for (dv, pv) in dp_row.iter().zip(p_row) {
            inner += *dv * *pv;
        }
        for (d, (dv, pv)) in ds_row.iter_mut().zip(dp_row.iter().zip(p_row)) {
            *d = *pv * (*dv - inner);
        }
    }
    ds
}

/// Backpropagate `d_hidden` (gradient of the loss w.r.t. the final hidden
/// states) through a cached forward run.
pub(super) fn backward<F: Scalar>(
    cfg: &TransformerConfig,
    params: &Params<F>,
    cache: &ForwardCache<F>,
    d_hidden: Array2<F>,
    grads: &mut Params<F>,
) {
    let n_heads = cfg.n_heads;
    let dk = cfg.head_dim();
    let scale = F::one() / F::from_usize_lossy(dk).sqrt();
    let axis0 = ndarray::Axis(0);

    let mut d = d_hidden;
    for (layer_idx, (layer, lc)) in params
        .layers
        .iter()
        .zip(&cache.layers)
        .enumerate()
        .rev()
        .map(|(i, pair)| (i, pair))
    {
        let gl = &mut grads.layers[layer_idx];

        // y2 = LN2(y1 + f_dropped)
        let ds2 = layer_norm_backward(&d, &lc.ln2, &layer.ln_ffn, &mut gl.ln_ffn.gamma, &mut gl.ln_ffn.beta);
        let mut dy1 = ds2.clone();
        let df = match &lc.res2_drop {
            Some(mask) => &ds2 * mask,
            None => ds2,
        };

        // f = gelu(u) . w_down + b_down
        gl.w_down += &lc.g.t().dot(&df);
        gl.b_down += &df.sum_axis(axis0);
        let dg = df.dot(&layer.w_down.t());
        let du = dg * lc.u.mapv(gelu_prime);

        // u = y1 . w_up + b_up
        gl.w_up += &lc.y1.t().dot(&du);
        gl.b_up += &du.sum_axis(axis0);
        dy1 += &du.dot(&layer.w_up.t());

        // y1 = LN1(x_in + proj_dropped)
        let ds1 = layer_norm_backward(&dy1, &lc.ln1, &layer.ln_attn, &mut gl.ln_attn.gamma, &mut gl.ln_attn.beta);
        let mut dx = ds1.clone();
        let dproj = match &lc.res1_drop {
            Some(mask) => &ds1 * mask,
            None => ds1,
        };

        // proj = ctx . wo + bo
        gl.wo += &lc.ctx.t().dot(&dproj);
        gl.bo += &dproj.sum_axis(axis0);
        let dctx = dproj.dot(&layer.wo.t());

        // Attention heads.
        let t_len = lc.x_in.nrows();
        let mut dq = Array2::<F>::zeros((t_len, cfg.hidden_dim));
        let mut dk_mat = Array2::<F>::zeros((t_len, cfg.hidden_dim));
        let mut dv = Array2::<F>::zeros((t_len, cfg.hidden_dim));
        for h in 0..n_heads {
            let cols = s![.., h * dk..(h + 1) * dk];
            let hslice = s![h, .., ..];
            let dctx_h = dctx.slice(cols);
            let vh = lc.v.slice(cols);
            let probs_h = lc.probs.slice(hslice).to_owned();
            let dropped_probs = match &lc.attn_drop {
                Some(mask) => &probs_h * &mask.slice(hslice),
                None => probs_h.clone(),
            };

            dv.slice_mut(cols).assign(&dropped_probs.t().dot(&dctx_h));
            let dpd = dctx_h.dot(&vh.t());
            let dp = match &lc.attn_drop {
                Some(mask) => dpd * &mask.slice(hslice),
                None => dpd,
            };
            let ds = softmax_backward(&dp, &probs_h) * scale;
            let qh = lc.q.slice(cols);
            let kh = lc.k.slice(cols);
            dq.slice_mut(cols).assign(&ds.dot(&kh));
            dk_mat.slice_mut(cols).assign(&ds.t().dot(&qh));
        }

        // q/k/v = x_in . w + b
        gl.wq += &lc.x_in.t().dot(&dq);
        gl.bq += &dq.sum_axis(axis0);
        dx += &dq.dot(&layer.wq.t());
        gl.wk += &lc.x_in.t().dot(&dk_mat);
        gl.bk += &dk_mat.sum_axis(axis0);
        dx += &dk_mat.dot(&layer.wk.t());
        gl.wv += &lc.x_in.t().dot(&dv);
        gl.bv += &dv.sum_axis(axis0);
        dx += &dv.dot(&layer.wv.t());

        d = dx;
    }

    // Embedding: dropout, LN, then scatter into token/position rows.
    if let Some(mask) = &cache.emb_drop {
        d = d * mask;
    }
    let dsum = layer_norm_backward(
        &d,
        &cache.emb_ln,
        &params.ln_emb,
        &mut grads.ln_emb.gamma,
        &mut grads.ln_emb.beta,
    );
    for (r, &id) in cache.ids.iter().enumerate() {
        let row = dsum.row(r);
        let mut tok = grads.tok_emb.row_mut(id as usize);
        tok += &row;
        if !cache.position_free {
            let mut pos = grads.pos_emb.row_mut(r);
            pos += &row;
        }
    }
}
