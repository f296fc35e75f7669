//! infoNCE contrastive loss with in-batch negatives.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

/// Similarity used inside the softmax. Cosine matches the evaluation
/// metric; dot product is kept as a configuration axis because the two are
/// known to induce different length preferences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityKind {
    #[default]
    Cosine,
    Dot,
}

impl std::str::FromStr for SimilarityKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(SimilarityKind::Cosine),
            "dot" => Ok(SimilarityKind::Dot),
            other => Err(Error::InvalidArgument(format!(
                "unknown similarity {other:?} (expected cosine|dot)"
            ))),
        }
    }
}

fn normalize_rows<F: Scalar>(x: &Array2<F>, what: &str) -> Result<(Array2<F>, Array1<F>)> {
    let mut norms = Array1::<F>::zeros(x.nrows());
    let mut unit = x.clone();
    for (r, mut row) in unit.rows_mut().into_iter().enumerate() {
        let norm = row.dot(&row).sqrt();
        if norm == F::zero() {
            return Err(Error::InvalidArgument(format!(
                "{what} row {r} is a zero vector"
            )));
        }
        norms[r] = norm;
        row.mapv_inplace(|v| v / norm);
    }
    Ok((unit, norms))
}

fn validate_inputs<F: Scalar>(anchors: &Array2<F>, positives: &Array2<F>, tau: F) -> Result<()> {
    if anchors.nrows() == 0 {
        return Err(Error::EmptyInput("infoNCE over zero rows".into()));
    }
    if anchors.dim() != positives.dim() {
        return Err(Error::InvalidArgument(format!(
            "anchor shape {:?} does not match positive shape {:?}",
            anchors.dim(),
            positives.dim()
        )));
    }
    if tau <= F::zero() {
        return Err(Error::InvalidArgument("temperature must be positive".into()));
    }
    if anchors.iter().chain(positives.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "non-finite embedding fed to infoNCE".into(),
        ));
    }
    Ok(())
}

/// `-(1/B) * sum_i log( exp(sim(a_i, p_i)/tau) / sum_j exp(sim(a_i, p_j)/tau) )`.
pub fn info_nce_loss<F: Scalar>(
    anchors: &Array2<F>,
    positives: &Array2<F>,
    tau: F,
    sim: SimilarityKind,
) -> Result<F> {
    info_nce_loss_grad(anchors, positives, tau, sim).map(|(loss, _, _)| loss)
}

/// Loss plus gradients with respect to both embedding matrices.
pub fn info_nce_loss_grad<F: Scalar>(
    anchors: &Array2<F>,
    positives: &Array2<F>,
    tau: F,
    sim: SimilarityKind,
) -> Result<(F, Array2<F>, Array2<F>)> {
    validate_inputs(anchors, positives, tau)?;
    let b = anchors.nrows();
    let b_f = F::from_usize_lossy(b);

    let (a_unit, a_norms, p_unit, p_norms) = match sim {
        SimilarityKind::Cosine => {
            let (au, an) = normalize_rows(anchors, "anchor")?;
            let (pu, pn) = normalize_rows(positives, "positive")?;
            (au, Some(an), pu, Some(pn))
        }
        SimilarityKind::Dot => (anchors.clone(), None, positives.clone(), None),
    };

    let scores = a_unit.dot(&p_unit.t()); // [B, B]
    let z = scores.mapv(|v| v / tau);

    // Row-wise log-sum-exp with an ln_1p branch when the diagonal is the
    // maximum, which keeps near-zero losses accurate to full precision.
    let mut loss = F::zero();
    let mut softmax = Array2::<F>::zeros((b, b));
    for i in 0..b {
        let row = z.row(i);
        let max = row.iter().copied().fold(F::neg_infinity(), F::max);
        let mut denom = F::zero();
        for (j, &v) in row.iter().enumerate() {
            let e = (v - max).exp();
            softmax[[i, j]] = e;
            denom += e;
        }
        for j in 0..b {
            softmax[[i, j]] /= denom;
        }
        let row_loss = if z[[i, i]] == max {
            let mut off_diag = F::zero();
            for (j, &v) in row.iter().enumerate() {
                if j != i {
                    off_diag += (v - max).exp();
                }
            }
            off_diag.ln_1p()
        } else {
            max - z[[i, i]] + denom.ln()
        };
        loss += row_loss;
    }
    loss /= b_f;

    // dL/dz = (softmax - I) / B; chain through the tau scaling.
    let scale = F::one() / (b_f * tau);
    let mut g = softmax;
    for i in 0..b {
        g[[i, i]] -= F::one();
    }
    g.mapv_inplace(|v| v * scale);

    let (d_anchors, d_positives) = match sim {
        SimilarityKind::Dot => (g.dot(&p_unit), g.t().dot(&a_unit)),
        SimilarityKind::Cosine => {
            // d/da of a/|a| projects out the radial component.
            let da_unit = g.dot(&p_unit);
            let dp_unit = g.t().dot(&a_unit);
            let a_norms = a_norms.expect("cosine path");
            let p_norms = p_norms.expect("cosine path");
            let mut da = Array2::<F>::zeros(anchors.raw_dim());
            let mut dp = Array2::<F>::zeros(positives.raw_dim());
            for i in 0..b {
                let au = a_unit.row(i);
                let gi = da_unit.row(i);
                let radial = gi.dot(&au);
                let mut out = da.row_mut(i);
                for (o, (g_c, u_c)) in out.iter_mut().zip(gi.iter().zip(au)) {
                    *o = (*g_c - radial * *u_c) / a_norms[i];
                }
                let pu = p_unit.row(i);
                let gj = dp_unit.row(i);
                let radial = gj.dot(&pu);
                let mut out = dp.row_mut(i);
                for (o, (g_c, u_c)) in out.iter_mut().zip(gj.iter().zip(pu)) {
                    *o = (*g_c - radial * *u_c) / p_norms[i];
                }
            }
            (da, dp)
        }
    };

    Ok((loss, d_anchors, d_positives))
}
