use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::mask::BinaryMask;
use crate::GroupId;

use super::loss::seg_loss_logits;
use super::model::{forward_cached, ForwardCache, LearnerModel};
use super::penalty::{penalty, PenaltyImage};
use super::PenaltyKind;

/// One training image.
#[derive(Debug, Clone, Copy)]
pub struct BatchItem<'a> {
    pub image: &'a GrayImage,
    pub target: &'a BinaryMask,
    /// Group the sample belongs to; penalties compare these.
    pub group: GroupId,
    /// Group used for feature modulation.
    pub condition: GroupId,
    /// Per-pixel loss weights; `None` weighs every pixel by one.
    pub weights: Option<&'a [f64]>,
}

/// Loss terms for one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    pub dice_weight: f64,
    pub penalty: PenaltyKind,
    /// Penalty weight for this step (after any ramp).
    pub lambda: f64,
    pub penalty_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossAndGrad {
    /// `mean_i seg_loss_i + lambda * penalty`.
    pub loss: f64,
    pub seg_loss: f64,
    pub penalty: f64,
    pub single_group: bool,
    /// Segmentation loss of each batch item.
    pub per_sample: Vec<f64>,
    /// Gradient in the model's flat parameter layout.
    pub grad: Vec<f64>,
}

/// Total batch loss and its exact gradient with respect to every parameter.
pub fn loss_and_grad(model: &LearnerModel, batch: &[BatchItem<'_>], objective: &Objective) -> Result<LossAndGrad> {
    if batch.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    let caches: Vec<ForwardCache> = batch
        .iter()
        .map(|item| {
            if item.image.dims() != item.target.dims() {
                return Err(Error::ShapeMismatch(item.image.dims(), item.target.dims()));
            }
            let ci = model.group_index(item.condition)?;
            Ok(forward_cached(model, item.image, ci))
        })
        .collect::<Result<_>>()?;

    let inv_n = 1.0 / batch.len() as f64;
    let mut per_sample = Vec::with_capacity(batch.len());
    let mut d_logits = Vec::with_capacity(batch.len());
    for (item, cache) in batch.iter().zip(&caches) {
        let (l, mut dz) = seg_loss_logits(
            &cache.logits,
            &cache.probs,
            item.target.as_slice(),
            item.weights,
            objective.dice_weight,
        )?;
        for v in &mut dz {
            *v *= inv_n;
        }
        per_sample.push(l);
        d_logits.push(dz);
    }
    let seg = per_sample.iter().sum::<f64>() * inv_n;

    let mut pen_value = 0.0;
    let mut single_group = false;
    let mut d_hidden: Vec<Vec<f64>> = Vec::new();
    if objective.penalty != PenaltyKind::None {
        let inputs: Vec<PenaltyImage<'_>> = batch
            .iter()
            .zip(&caches)
            .map(|(item, c)| PenaltyImage {
                group: item.group,
                probs: &c.probs,
                logits: &c.logits,
                labels: item.target.as_slice(),
                hidden: &c.hidden,
            })
            .collect();
        let p = penalty(objective.penalty, &inputs, model.hidden_dim(), objective.penalty_seed);
        pen_value = p.value;
        single_group = p.single_group;
        if objective.lambda != 0.0 {
            for (dz, dp) in d_logits.iter_mut().zip(&p.d_logits) {
                for (a, b) in dz.iter_mut().zip(dp) {
                    *a += objective.lambda * b;
                }
            }
            d_hidden = p.d_hidden;
            for dh in &mut d_hidden {
                for v in dh.iter_mut() {
                    *v *= objective.lambda;
                }
            }
        }
    }

    let mut grad = vec![0.0; model.params().len()];
    for (i, cache) in caches.iter().enumerate() {
        backward(model, cache, &d_logits[i], d_hidden.get(i).map(|v| v.as_slice()), &mut grad);
    }
    Ok(LossAndGrad {
        loss: seg + objective.lambda * pen_value,
        seg_loss: seg,
        penalty: pen_value,
        single_group,
        per_sample,
        grad,
    })
}

/// Accumulates the parameter gradient of one image given `d loss / d logit`
/// and, optionally, a direct `d loss / d hidden`.
fn backward(model: &LearnerModel, cache: &ForwardCache, dz: &[f64], dh_extra: Option<&[f64]>, grad: &mut [f64]) {
    let (hd, f) = (model.hidden_dim(), model.feat_dim());
    let w2 = model.w2();
    let film = model.film_offset(cache.condition);
    let gamma = &model.params()[film..film + hd];
    let beta = &model.params()[film + hd..film + 2 * hd];

    // first-layer weight gradient accumulated transposed (feat x hidden)
    let mut dw1t = vec![0.0; f * hd];
    let mut db1 = vec![0.0; hd];
    let mut dw2 = vec![0.0; hd];
    let mut db2 = 0.0;
    let mut dgamma = vec![0.0; hd];
    let mut dbeta = vec![0.0; hd];
    let mut da = vec![0.0; hd];

    for (i, &d) in dz.iter().enumerate() {
        let h = &cache.hidden[i * hd..(i + 1) * hd];
        let extra = dh_extra.map(|e| &e[i * hd..(i + 1) * hd]);
        if d == 0.0 && extra.is_none() {
            continue;
        }
        db2 += d;
        let mut any = false;
        for k in 0..hd {
            dw2[k] += d * (gamma[k] * h[k] + beta[k]);
            let dhp = d * w2[k];
            dgamma[k] += dhp * h[k];
            dbeta[k] += dhp;
            let mut dh = dhp * gamma[k];
            if let Some(e) = extra {
                dh += e[k];
            }
            da[k] = if h[k] > 0.0 { dh } else { 0.0 };
            any |= da[k] != 0.0;
        }
        if !any {
            continue;
        }
        for k in 0..hd {
            db1[k] += da[k];
        }
        let phi = &cache.feats[i * f..(i + 1) * f];
        for (j, &x) in phi.iter().enumerate() {
            let row = &mut dw1t[j * hd..(j + 1) * hd];
            for (g, &a) in row.iter_mut().zip(&da) {
                *g += a * x;
            }
        }
    }

    for k in 0..hd {
        for j in 0..f {
            grad[k * f + j] += dw1t[j * hd + k];
        }
    }
    let b1o = model.b1_offset();
    let w2o = model.w2_offset();
    for k in 0..hd {
        grad[b1o + k] += db1[k];
        grad[w2o + k] += dw2[k];
        grad[film + k] += dgamma[k];
        grad[film + hd + k] += dbeta[k];
    }
    grad[model.b2_offset()] += db2;
}
