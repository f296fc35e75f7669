//! Weight containers for the local transformer backend.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use ndarray::{Array, Array1, Array2, Dimension};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Architecture of the local encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformerConfig {
    pub hidden_dim: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub ffn_dim: usize,
    pub max_len: usize,
    pub vocab_size: usize,
    pub dropout: f64,
    pub ln_eps: f64,
}

impl TransformerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 || self.n_heads == 0 || self.hidden_dim % self.n_heads != 0 {
            return Err(Error::InvalidArgument(format!(
                "hidden_dim {} must be a positive multiple of n_heads {}",
                self.hidden_dim, self.n_heads
            )));
        }
        if self.n_layers == 0 || self.ffn_dim == 0 || self.max_len < 3 || self.vocab_size == 0 {
            return Err(Error::InvalidArgument(
                "layers, ffn_dim, vocab_size must be positive and max_len >= 3".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidArgument(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_dim / self.n_heads
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LnParams<F: Scalar> {
    pub gamma: Array1<F>,
    pub beta: Array1<F>,
}

impl<F: Scalar> LnParams<F> {
    fn ones(dim: usize) -> Self {
        LnParams {
            gamma: Array1::ones(dim),
            beta: Array1::zeros(dim),
        }
    }

    fn zeros(dim: usize) -> Self {
        LnParams {
            gamma: Array1::zeros(dim),
            beta: Array1::zeros(dim),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<F: Scalar> {
    pub wq: Array2<F>,
    pub bq: Array1<F>,
    pub wk: Array2<F>,
    pub bk: Array1<F>,
    pub wv: Array2<F>,
    pub bv: Array1<F>,
    pub wo: Array2<F>,
    pub bo: Array1<F>,
    pub ln_attn: LnParams<F>,
    pub w_up: Array2<F>,
    pub b_up: Array1<F>,
    pub w_down: Array2<F>,
    pub b_down: Array1<F>,
    pub ln_ffn: LnParams<F>,
}

/// All weights of the encoder, including the tied MLM output bias used
/// during masked-token pretraining.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<F: Scalar> {
    pub tok_emb: Array2<F>,
    pub pos_emb: Array2<F>,
    pub ln_emb: LnParams<F>,
    pub layers: Vec<LayerParams<F>>,
    pub mlm_bias: Array1<F>,
}

/// Element-wise operation applied across four parallel parameter trees
/// (parameters, gradients, and two optimizer-state trees).
pub trait TensorOp<F: Scalar> {
    fn apply<D: Dimension>(
        &mut self,
        param: &mut Array<F, D>,
        grad: &Array<F, D>,
        state_m: &mut Array<F, D>,
        state_v: &mut Array<F, D>,
    );
}

enum TensorView<'a, F: Scalar> {
    D1(&'a Array1<F>),
    D2(&'a Array2<F>),
}

impl<F: Scalar> Params<F> {
    /// Random initialization: weights and embeddings N(0, 0.02), LayerNorm
    /// gains at one, biases at zero.
    pub fn init(cfg: &TransformerConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0f64, 0.02).expect("valid stddev");
        let mut randn2 = |r: usize, c: usize| {
            Array2::from_shape_fn((r, c), |_| F::from_f64_lossy(normal.sample(&mut rng)))
        };
        let d = cfg.hidden_dim;
        let layers = (0..cfg.n_layers)
            .map(|_| LayerParams {
                wq: randn2(d, d),
                bq: Array1::zeros(d),
                wk: randn2(d, d),
                bk: Array1::zeros(d),
                wv: randn2(d, d),
                bv: Array1::zeros(d),
                wo: randn2(d, d),
                bo: Array1::zeros(d),
                ln_attn: LnParams::ones(d),
                w_up: randn2(d, cfg.ffn_dim),
                b_up: Array1::zeros(cfg.ffn_dim),
                w_down: randn2(cfg.ffn_dim, d),
                b_down: Array1::zeros(d),
                ln_ffn: LnParams::ones(d),
            })
            .collect();
        Params {
            tok_emb: randn2(cfg.vocab_size, d),
            pos_emb: randn2(cfg.max_len, d),
            ln_emb: LnParams::ones(d),
            layers,
            mlm_bias: Array1::zeros(cfg.vocab_size),
        }
    }

    /// Zero-filled tree with the same shapes (gradient / optimizer state).
    pub fn zeros(cfg: &TransformerConfig) -> Self {
        let d = cfg.hidden_dim;
        let layers = (0..cfg.n_layers)
            .map(|_| LayerParams {
                wq: Array2::zeros((d, d)),
                bq: Array1::zeros(d),
                wk: Array2::zeros((d, d)),
                bk: Array1::zeros(d),
                wv: Array2::zeros((d, d)),
                bv: Array1::zeros(d),
                wo: Array2::zeros((d, d)),
                bo: Array1::zeros(d),
                ln_attn: LnParams::zeros(d),
                w_up: Array2::zeros((d, cfg.ffn_dim)),
                b_up: Array1::zeros(cfg.ffn_dim),
                w_down: Array2::zeros((cfg.ffn_dim, d)),
                b_down: Array1::zeros(d),
                ln_ffn: LnParams::zeros(d),
            })
            .collect();
        Params {
            tok_emb: Array2::zeros((cfg.vocab_size, d)),
            pos_emb: Array2::zeros((cfg.max_len, d)),
            ln_emb: LnParams::zeros(d),
            layers,
            mlm_bias: Array1::zeros(cfg.vocab_size),
        }
    }

    /// Apply `op` to every tensor of four parallel trees. The trees must
    /// share one architecture.
    pub fn for_each_with(
        &mut self,
        grads: &Self,
        m: &mut Self,
        v: &mut Self,
        op: &mut impl TensorOp<F>,
    ) {
        op.apply(&mut self.tok_emb, &grads.tok_emb, &mut m.tok_emb, &mut v.tok_emb);
        op.apply(&mut self.pos_emb, &grads.pos_emb, &mut m.pos_emb, &mut v.pos_emb);
        op.apply(
            &mut self.ln_emb.gamma,
            &grads.ln_emb.gamma,
            &mut m.ln_emb.gamma,
            &mut v.ln_emb.gamma,
        );
        op.apply(
            &mut self.ln_emb.beta,
            &grads.ln_emb.beta,
            &mut m.ln_emb.beta,
            &mut v.ln_emb.beta,
        );
        op.apply(&mut self.mlm_bias, &grads.mlm_bias, &mut m.mlm_bias, &mut v.mlm_bias);
        for (((pl, gl), ml), vl) in self
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(m.layers.iter_mut())
            .zip(v.layers.iter_mut())
        {
            op.apply(&mut pl.wq, &gl.wq, &mut ml.wq, &mut vl.wq);
            op.apply(&mut pl.bq, &gl.bq, &mut ml.bq, &mut vl.bq);
            op.apply(&mut pl.wk, &gl.wk, &mut ml.wk, &mut vl.wk);
            op.apply(&mut pl.bk, &gl.bk, &mut ml.bk, &mut vl.bk);
            op.apply(&mut pl.wv, &gl.wv, &mut ml.wv, &mut vl.wv);
            op.apply(&mut pl.bv, &gl.bv, &mut ml.bv, &mut vl.bv);
            op.apply(&mut pl.wo, &gl.wo, &mut ml.wo, &mut vl.wo);
            op.apply(&mut pl.bo, &gl.bo, &mut ml.bo, &mut vl.bo);
            op.apply(
                &mut pl.ln_attn.gamma,
                &gl.ln_attn.gamma,
                &mut ml.ln_attn.gamma,
                &mut vl.ln_attn.gamma,
            );
            op.apply(
                &mut pl.ln_attn.beta,
                &gl.ln_attn.beta,
                &mut ml.ln_attn.beta,
                &mut vl.ln_attn.beta,
            );
            op.apply(&mut pl.w_up, &gl.w_up, &mut ml.w_up, &mut vl.w_up);
            op.apply(&mut pl.b_up, &gl.b_up, &mut ml.b_up, &mut vl.b_up);
            op.apply(&mut pl.w_down, &gl.w_down, &mut ml.w_down, &mut vl.w_down);
            op.apply(&mut pl.b_down, &gl.b_down, &mut ml.b_down, &mut vl.b_down);
            op.apply(
                &mut pl.ln_ffn.gamma,
                &gl.ln_ffn.gamma,
                &mut ml.ln_ffn.gamma,
                &mut vl.ln_ffn.gamma,
            );
            op.apply(
                &mut pl.ln_ffn.beta,
                &gl.ln_ffn.beta,
                &mut ml.ln_ffn.beta,
                &mut vl.ln_ffn.beta,
            );
        }
    }

    fn visit(&self, f: &mut impl FnMut(String, TensorView<'_, F>)) {
        f("tok_emb".into(), TensorView::D2(&self.tok_emb));
        f("pos_emb".into(), TensorView::D2(&self.pos_emb));
        f("ln_emb.gamma".into(), TensorView::D1(&self.ln_emb.gamma));
        f("ln_emb.beta".into(), TensorView::D1(&self.ln_emb.beta));
        f("mlm_bias".into(), TensorView::D1(&self.mlm_bias));
        for (l, layer) in self.layers.iter().enumerate() {
            let mut g = |name: &str, view: TensorView<'_, F>| f(format!("layer{l}.{name}"), view);
            g("wq", TensorView::D2(&layer.wq));
            g("bq", TensorView::D1(&layer.bq));
            g("wk", TensorView::D2(&layer.wk));
            g("bk", TensorView::D1(&layer.bk));
            g("wv", TensorView::D2(&layer.wv));
            g("bv", TensorView::D1(&layer.bv));
            g("wo", TensorView::D2(&layer.wo));
            g("bo", TensorView::D1(&layer.bo));
            g("ln_attn.gamma", TensorView::D1(&layer.ln_attn.gamma));
            g("ln_attn.beta", TensorView::D1(&layer.ln_attn.beta));
            g("w_up", TensorView::D2(&layer.w_up));
            g("b_up", TensorView::D1(&layer.b_up));
            g("w_down", TensorView::D2(&layer.w_down));
            g("b_down", TensorView::D1(&layer.b_down));
            g("ln_ffn.gamma", TensorView::D1(&layer.ln_ffn.gamma));
            g("ln_ffn.beta", TensorView::D1(&layer.ln_ffn.beta));
        }
    }

    /// Export as named f64 tensors (the on-disk weight format).
    pub fn to_tensor_map(&self) -> BTreeMap<String, TensorData> {
        let mut map = BTreeMap::new();
        self.visit(&mut |name, view| {
            let (shape, data) = match view {
                TensorView::D1(a) => (
                    vec![a.len()],
                    a.iter().map(|x| x.to_f64_lossy()).collect::<Vec<_>>(),
                ),
                TensorView::D2(a) => (
                    vec![a.nrows(), a.ncols()],
                    a.iter().map(|x| x.to_f64_lossy()).collect::<Vec<_>>(),
                ),
            };
            map.insert(name, TensorData { shape, data });
        });
        map
    }

    /// Rebuild from named tensors, checking shapes against the config.
    pub fn from_tensor_map(
        cfg: &TransformerConfig,
        map: &BTreeMap<String, TensorData>,
    ) -> Result<Self> {
        let mut params = Params::zeros(cfg);
        let mut missing = Vec::new();
        // Collect (name, expected shape) first so the error message can
        // name every problem at once.
        let mut names = Vec::new();
        params.visit(&mut |name, view| {
            let shape = match view {
                TensorView::D1(a) => vec![a.len()],
                TensorView::D2(a) => vec![a.nrows(), a.ncols()],
            };
            names.push((name, shape));
        });
        for (name, shape) in &names {
            match map.get(name) {
                None => missing.push(name.clone()),
                Some(t) if &t.shape != shape => {
                    return Err(Error::Protocol(format!(
                        "tensor {name} has shape {:?}, expected {shape:?}",
                        t.shape
                    )));
                }
                Some(_) => {}
            }
        }
        if !missing.is_empty() {
            return Err(Error::Protocol(format!(
                "weight file is missing tensors: {missing:?}"
            )));
        }
        params.assign_from_map(map);
        Ok(params)
    }

    fn assign_from_map(&mut self, map: &BTreeMap<String, TensorData>) {
        fn fill1<F: Scalar>(dst: &mut Array1<F>, src: &TensorData) {
            for (d, s) in dst.iter_mut().zip(&src.data) {
                *d = F::from_f64_lossy(*s);
            }
        }
        fn fill2<F: Scalar>(dst: &mut Array2<F>, src: &TensorData) {
            for (d, s) in dst.iter_mut().zip(&src.data) {
                *d = F::from_f64_lossy(*s);
            }
        }
        fill2(&mut self.tok_emb, &map["tok_emb"]);
        fill2(&mut self.pos_emb, &map["pos_emb"]);
        fill1(&mut self.ln_emb.gamma, &map["ln_emb.gamma"]);
        fill1(&mut self.ln_emb.beta, &map["ln_emb.beta"]);
        fill1(&mut self.mlm_bias, &map["mlm_bias"]);
        for (l, layer) in self.layers.iter_mut().enumerate() {
            fill2(&mut layer.wq, &map[&format!("layer{l}.wq")]);
            fill1(&mut layer.bq, &map[&format!("layer{l}.bq")]);
            fill2(&mut layer.wk, &map[&format!("layer{l}.wk")]);
            fill1(&mut layer.bk, &map[&format!("layer{l}.bk")]);
            fill2(&mut layer.wv, &map[&format!("layer{l}.wv")]);
            fill1(&mut layer.bv, &map[&format!("layer{l}.bv")]);
            fill2(&mut layer.wo, &map[&format!("layer{l}.wo")]);
            fill1(&mut layer.bo, &map[&format!("layer{l}.bo")]);
            fill1(&mut layer.ln_attn.gamma, &map[&format!("layer{l}.ln_attn.gamma")]);
            fill1(&mut layer.ln_attn.beta, &map[&format!("layer{l}.ln_attn.beta")]);
            fill2(&mut layer.w_up, &map[&format!("layer{l}.w_up")]);
            fill1(&mut layer.b_up, &map[&format!("layer{l}.b_up")]);
            fill2(&mut layer.w_down, &map[&format!("layer{l}.w_down")]);
            fill1(&mut layer.b_down, &map[&format!("layer{l}.b_down")]);
            fill1(&mut layer.ln_ffn.gamma, &map[&format!("layer{l}.ln_ffn.gamma")]);
            fill1(&mut layer.ln_ffn.beta, &map[&format!("layer{l}.ln_ffn.beta")]);
        }
    }
}

/// One named tensor in the on-disk weight file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorData {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg() -> TransformerConfig {
        TransformerConfig {
            hidden_dim: 8,
            n_layers: 2,
            n_heads: 2,
            ffn_dim: 16,
            max_len: 12,
            vocab_size: 20,
            dropout: 0.1,
            ln_eps: 1e-12,
        }
    }

    #[test]
    fn tensor_map_round_trip_is_exact() {
        let cfg = tiny_cfg();
        let params: Params<f64> = Params::init(&cfg, 7);
        let map = params.to_tensor_map();
        let restored = Params::from_tensor_map(&cfg, &map).unwrap();
        assert_eq!(params, restored);
    }

    #[test]
    fn shape_mismatch_is_a_protocol_error() {
        let cfg = tiny_cfg();
        let params: Params<f64> = Params::init(&cfg, 7);
        let mut map = params.to_tensor_map();
        map.get_mut("tok_emb").unwrap().shape = vec![1, 2];
        assert!(matches!(
            Params::<f64>::from_tensor_map(&cfg, &map),
            Err(Error::Protocol(_))
        ));
    }

    #[test]
    fn config_validation_catches_bad_head_split() {
        let mut cfg = tiny_cfg();
        cfg.n_heads = 3;
        assert!(cfg.validate().is_err());
    }
}
