use std::str::FromStr;

use ndarray::Array2;

use super::{MlpGrads, MlpParams, NnError, LOG_VAR_MAX, LOG_VAR_MIN};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Mean squared error, averaged over output dimensions and the batch.
    Mse,
    /// Gaussian NLL on a `[means | log-variances]` output; constant term omitted.
    HeteroscedasticNll,
    /// Reconstruction + pose + KL objective over the three perception networks.
    /// Evaluated by [`crate::perception::cmvae_loss_and_grads`].
    CmvaeComposite,
}

impl FromStr for LossKind {
    type Err = NnError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mse" => Ok(LossKind::Mse),
            "heteroscedastic_nll" => Ok(LossKind::HeteroscedasticNll),
            "cmvae_composite" => Ok(LossKind::CmvaeComposite),
            other => Err(NnError::UnknownLoss(other.to_string())),
        }
    }
}

/// Inputs and targets, one example per row.
#[derive(Debug, Clone)]
pub struct Batch {
    pub inputs: Array2<f64>,
    pub targets: Array2<f64>,
}

/// Batch-mean loss and its gradient with respect to every parameter.
pub fn loss_and_grads(
    params: &MlpParams,
    batch: &Batch,
    loss: LossKind,
) -> Result<(f64, MlpGrads), NnError> {
    let b = batch.inputs.nrows();
    if b == 0 {
        return Err(NnError::EmptyBatch);
    }
    if batch.targets.nrows() != b {
        return Err(NnError::DimensionMismatch {
            what: "target rows",
            expected: b,
            got: batch.targets.nrows(),
        });
    }
    if batch.targets.iter().any(|v| !v.is_finite()) {
        return Err(NnError::NonFiniteInput);
    }
    let cache = params.forward_cached(batch.inputs.view())?;
    let out = cache.output();
    let (value, d_out) = match loss {
        LossKind::Mse => mse_with_grad(out, &batch.targets)?,
        LossKind::HeteroscedasticNll => heteroscedastic_with_grad(out, &batch.targets)?,
        LossKind::CmvaeComposite => return Err(NnError::UnsupportedLoss("cmvae_composite")),
    };
    let (grads, _) = params.backward(&cache, d_out)?;
    Ok((value, grads))
}

pub(crate) fn mse_with_grad(
    out: &Array2<f64>,
    targets: &Array2<f64>,
) -> Result<(f64, Array2<f64>), NnError> {
    if out.dim() != targets.dim() {
        return Err(NnError::DimensionMismatch {
            what: "mse target width",
            expected: out.ncols(),
            got: targets.ncols(),
        });
    }
    let scale = 1.0 / (out.len() as f64);
    let diff = out - targets;
    let value = diff.iter().map(|d| d * d).sum::<f64>() * scale;
    Ok((value, diff * (2.0 * scale)))
}

/// Per-row loss `(1/k) sum_d [ s_d/2 + (y_d - mu_d)^2 / (2 exp(s_d)) ]`, `s` clamped.
pub(crate) fn heteroscedastic_with_grad(
    out: &Array2<f64>,
    targets: &Array2<f64>,
) -> Result<(f64, Array2<f64>), NnError> {
    let k = targets.ncols();
    if out.ncols() != 2 * k {
        return Err(NnError::DimensionMismatch {
            what: "heteroscedastic output width",
            expected: 2 * k,
            got: out.ncols(),
        });
    }
    let b = out.nrows() as f64;
    let norm = 1.0 / (k as f64 * b);
    let mut d_out = Array2::zeros(out.dim());
    let mut total = 0.0;
    for ((o, t), mut d) in out
        .rows()
        .into_iter()
        .zip(targets.rows())
        .zip(d_out.rows_mut())
    {
        for j in 0..k {
            let mu = o[j];
            let raw = o[k + j];
            let s = raw.clamp(LOG_VAR_MIN, LOG_VAR_MAX);
            let inv_var = (-s).exp();
            let e = t[j] - mu;
            total += 0.5 * s + 0.5 * e * e * inv_var;
            d[j] = -e * inv_var * norm;
            d[k + j] = if raw > LOG_VAR_MIN && raw < LOG_VAR_MAX {
                (0.5 - 0.5 * e * e * inv_var) * norm
            } else {
                0.0
            };
        }
    }
    Ok((total * norm, d_out))
}

/// Elementwise helper shared with the perception loss.
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;
    use ndarray::array;

    #[test]
    fn parses_known_tags_and_rejects_others() {
        assert_eq!("mse".parse::<LossKind>().unwrap(), LossKind::Mse);
        assert_eq!(
            "cmvae_composite".parse::<LossKind>().unwrap(),
            LossKind::CmvaeComposite
        );
        assert_eq!(
            "hinge".parse::<LossKind>(),
            Err(NnError::UnknownLoss("hinge".into()))
        );
    }

    #[test]
    fn linear_mse_by_hand() {
        // y = w x with w = 2, (x = 1, t = 0): loss 4, dL/dw = 2 (w x - t) x = 4
        let net = MlpParams::from_parts(
            vec![array![[2.0]]],
            vec![array![0.0]],
            vec![Activation::Identity],
        )
        .unwrap();
        let batch = Batch {
            inputs: array![[1.0]],
            targets: array![[0.0]],
        };
        let (loss, g) = loss_and_grads(&net, &batch, LossKind::Mse).unwrap();
        assert_eq!(loss, 4.0);
        assert_eq!(g.weights[0][[0, 0]], 4.0);
        assert_eq!(g.biases[0][0], 4.0);
    }

    #[test]
    fn mse_at_target_is_flat() {
        let net = MlpParams::from_parts(
            vec![array![[1.0, 0.0], [0.0, 1.0]]],
            vec![array![0.0, 0.0]],
            vec![Activation::Identity],
        )
        .unwrap();
        let batch = Batch {
            inputs: array![[0.5, -1.5], [2.0, 3.0]],
            targets: array![[0.5, -1.5], [2.0, 3.0]],
        };
        let (loss, g) = loss_and_grads(&net, &batch, LossKind::Mse).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.to_flat().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn composite_is_not_an_mlp_loss() {
        let net = MlpParams::zeros(&[1, 1], &[Activation::Identity]).unwrap();
        let batch = Batch {
            inputs: array![[1.0]],
            targets: array![[0.0]],
        };
        assert!(matches!(
            loss_and_grads(&net, &batch, LossKind::CmvaeComposite),
            Err(NnError::UnsupportedLoss(_))
        ));
    }

    #[test]
    fn empty_batch_rejected() {
        let net = MlpParams::zeros(&[1, 1], &[Activation::Identity]).unwrap();
        let batch = Batch {
            inputs: Array2::zeros((0, 1)),
            targets: Array2::zeros((0, 1)),
        };
        assert_eq!(
            loss_and_grads(&net, &batch, LossKind::Mse).unwrap_err(),
            NnError::EmptyBatch
        );
    }

    #[test]
    fn heteroscedastic_values() {
        // mu = y, s = 0 -> 0; y = 1, mu = 0, s = 0 -> 0.5; y = mu, s = 1 -> 0.5
        let t = array![[1.0]];
        let (v, _) = heteroscedastic_with_grad(&array![[1.0, 0.0]], &t).unwrap();
        assert_eq!(v, 0.0);
        let (v, _) = heteroscedastic_with_grad(&array![[0.0, 0.0]], &t).unwrap();
        assert_eq!(v, 0.5);
        let (v, _) = heteroscedastic_with_grad(&array![[1.0, 1.0]], &t).unwrap();
        assert_eq!(v, 0.5);
    }

    #[test]
    fn clamped_log_variance_has_no_gradient() {
        let (_, d) = heteroscedastic_with_grad(&array![[0.0, 25.0]], &array![[1.0]]).unwrap();
        assert_eq!(d[[0, 1]], 0.0);
    }
}
