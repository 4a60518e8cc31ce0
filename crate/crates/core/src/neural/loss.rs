//! Huber reconstruction loss and the Gaussian KL regulariser.

use super::{LatentSample, Tensor3};
use crate::{Error, Result};

#[inline]
pub(crate) fn huber_term(r: f64, delta: f64) -> f64 {
    let a = r.abs();
    if a <= delta {
        0.5 * r * r
    } else {
        delta * (a - 0.5 * delta)
    }
}

#[inline]
pub(crate) fn huber_slope(r: f64, delta: f64) -> f64 {
    r.clamp(-delta, delta)
}

fn same_shape(a: &Tensor3, b: &Tensor3) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "prediction {:?} vs target {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// Mean elementwise Huber loss.
pub fn huber_loss(y_hat: &Tensor3, y: &Tensor3, delta: f64) -> Result<f64> {
    same_shape(y_hat, y)?;
    let sum: f64 = y_hat
        .data()
        .iter()
        .zip(y.data())
        .map(|(p, t)| huber_term(p - t, delta))
        .sum();
    Ok(sum / y.data().len() as f64)
}

/// Mean Huber loss and its gradient with respect to `y_hat`.
pub fn huber_grad(y_hat: &Tensor3, y: &Tensor3, delta: f64) -> Result<(f64, Tensor3)> {
    let loss = huber_loss(y_hat, y, delta)?;
    let scale = 1.0 / y.data().len() as f64;
    let g = y_hat
        .data()
        .iter()
        .zip(y.data())
        .map(|(p, t)| scale * huber_slope(p - t, delta))
        .collect();
    let (b, t, c) = y.shape();
    Ok((loss, Tensor3::new(b, t, c, g)?))
}

/// Σ over one sample's latent elements of −½(1 + lv − μ² − e^lv).
pub(crate) fn kl_sum(mean: &[f64], log_var: &[f64]) -> f64 {
    mean.iter()
        .zip(log_var)
        .map(|(m, lv)| -0.5 * (1.0 + lv - m * m - lv.exp()))
        .sum()
}

/// Batch mean of the per-sample KL divergence to N(0, 1).
pub fn kl_loss(latent: &LatentSample) -> f64 {
    let b = latent.mean.batch();
    (0..b)
        .map(|i| kl_sum(latent.mean.sample(i), latent.log_variance.sample(i)))
        .sum::<f64>()
        / b as f64
}

/// Gradients of [`kl_loss`] with respect to the mean and log-variance.
pub fn kl_grad(latent: &LatentSample) -> Result<(Tensor3, Tensor3)> {
    let (b, t, c) = latent.mean.shape();
    let inv = 1.0 / b as f64;
    let dm = latent.mean.data().iter().map(|m| inv * m).collect();
    let dl = latent
        .log_variance
        .data()
        .iter()
        .map(|lv| inv * 0.5 * (lv.exp() - 1.0))
        .collect();
    Ok((Tensor3::new(b, t, c, dm)?, Tensor3::new(b, t, c, dl)?))
}
