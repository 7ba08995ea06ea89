use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::mask::{boundary_band, BinaryMask};
use crate::GroupId;

use super::model::ProbMap;

/// Smoothing constant of the soft-Dice term.
pub const DICE_EPS: f64 = 1.0;

/// Per-pixel loss weights: zero on the boundary band of `mask_obs` for
/// samples of `biased_group`, one everywhere else.
pub fn asym_weights(mask_obs: &BinaryMask, group: GroupId, biased_group: GroupId, width: usize) -> Vec<f64> {
    if group != biased_group {
        return vec![1.0; mask_obs.len()];
    }
    boundary_band(mask_obs, width)
        .as_slice()
        .iter()
        .map(|&b| if b == 1 { 0.0 } else { 1.0 })
        .collect()
}

fn check_weights(weights: Option<&[f64]>, n: usize) -> Result<f64> {
    match weights {
        None => Ok(n as f64),
        Some(w) => {
            if w.len() != n {
                return Err(Error::ShapeMismatch((n, 1), (w.len(), 1)));
            }
            if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::Config("loss weights must be finite and non-negative".into()));
            }
            let total: f64 = w.iter().sum();
            if total > 0.0 {
                Ok(total)
            } else {
                Err(Error::AllMaskedOut)
            }
        }
    }
}

/// Weighted segmentation loss of one image.
///
/// Cross-entropy is normalized by `sum W`. The soft-Dice term uses the
/// weights rescaled to mean one, so multiplying every weight by a constant
/// changes neither term.
pub fn seg_loss(prob: &ProbMap, target: &BinaryMask, weights: Option<&[f64]>, dice_weight: f64) -> Result<f64> {
    if prob.dims() != target.dims() {
        return Err(Error::ShapeMismatch(prob.dims(), target.dims()));
    }
    let n = target.len();
    let total = check_weights(weights, n)?;
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);
    let mut ce = 0.0;
    let (mut inter, mut sum_p, mut sum_t) = (0.0, 0.0, 0.0);
    for (i, (&p, &t)) in prob.as_slice().iter().zip(target.as_slice()).enumerate() {
        let q = if t == 1 { p } else { 1.0 - p };
        ce -= w(i) * libm::log(q.max(1e-300));
        let wn = w(i) * n as f64 / total;
        let t = t as f64;
        inter += wn * p * t;
        sum_p += wn * p;
        sum_t += wn * t;
    }
    let dice = 1.0 - (2.0 * inter + DICE_EPS) / (sum_p + sum_t + DICE_EPS);
    Ok(ce / total + dice_weight * dice)
}

#[inline]
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + libm::log1p(libm::exp(-z))
    } else {
        libm::log1p(libm::exp(z))
    }
}

/// Loss of one image from its logits, and `d loss / d logit` per pixel.
pub(crate) fn seg_loss_logits(
    logits: &[f64],
    probs: &[f64],
    target: &[u8],
    weights: Option<&[f64]>,
    dice_weight: f64,
) -> Result<(f64, Vec<f64>)> {
    let n = target.len();
    let total = check_weights(weights, n)?;
    let scale = n as f64 / total;
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);

    let mut ce = 0.0;
    let (mut inter, mut sum_p, mut sum_t) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let t = target[i] as f64;
        ce += w(i) * (softplus(logits[i]) - t * logits[i]);
        let wn = w(i) * scale;
        inter += wn * probs[i] * t;
        sum_p += wn * probs[i];
        sum_t += wn * t;
    }
    let a = 2.0 * inter + DICE_EPS;
    let b = sum_p + sum_t + DICE_EPS;
    let loss = ce / total + dice_weight * (1.0 - a / b);

    let mut dz = vec![0.0; n];
    for i in 0..n {
        let t = target[i] as f64;
        let p = probs[i];
        let d_ce = w(i) * (p - t) / total;
        let d_dice_dp = w(i) * scale * (a - 2.0 * t * b) / (b * b);
        dz[i] = d_ce + dice_weight * d_dice_dp * p * (1.0 - p);
    }
    Ok((loss, dz))
}
