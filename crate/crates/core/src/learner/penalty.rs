use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;

use crate::kernel::mmd2;
use crate::{rng, GroupId};

use super::PenaltyKind;

/// Logits kept per group and class by the logit-level MMD penalty.
pub const MMD_LOGIT_SUBSAMPLE: usize = 256;

/// One image's contribution to a batch penalty.
#[derive(Debug, Clone, Copy)]
pub struct PenaltyImage<'a> {
    pub group: GroupId,
    pub probs: &'a [f64],
    pub logits: &'a [f64],
    pub labels: &'a [u8],
    /// Pre-modulation activations, row-major `pixels x hidden_dim`.
    pub hidden: &'a [f64],
}

#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyValue {
    pub value: f64,
    /// The batch held fewer than two groups, so the penalty is zero.
    pub single_group: bool,
    /// `d value / d logit`, per image and pixel.
    pub d_logits: Vec<Vec<f64>>,
    /// `d value / d hidden`, per image; empty for penalties that ignore features.
    pub d_hidden: Vec<Vec<f64>>,
}

/// Evaluates a fairness penalty over a batch, with gradients.
///
/// Groups are the two smallest ids present; `seed` drives the logit
/// subsampling of [`PenaltyKind::MmdLogit`].
pub fn penalty(kind: PenaltyKind, images: &[PenaltyImage<'_>], hidden_dim: usize, seed: u64) -> PenaltyValue {
    let mut out = PenaltyValue {
        value: 0.0,
        single_group: false,
        d_logits: images.iter().map(|im| vec![0.0; im.logits.len()]).collect(),
        d_hidden: Vec::new(),
    };
    if kind == PenaltyKind::None {
        return out;
    }
    let mut groups: Vec<GroupId> = images.iter().map(|im| im.group).collect();
    groups.sort_unstable();
    groups.dedup();
    if groups.len() < 2 {
        out.single_group = true;
        return out;
    }
    let side = |g: GroupId| -> Option<usize> {
        if g == groups[0] {
            Some(0)
        } else if g == groups[1] {
            Some(1)
        } else {
            None
        }
    };
    match kind {
        PenaltyKind::None => {}
        PenaltyKind::Dp => {
            out.value = mean_gap(images, &side, |_| true, &mut out.d_logits);
        }
        PenaltyKind::Eo => {
            out.value = eo(images, &side, &mut out.d_logits);
        }
        PenaltyKind::DpEo => {
            out.value = mean_gap(images, &side, |_| true, &mut out.d_logits) + eo(images, &side, &mut out.d_logits);
        }
        PenaltyKind::MmdLogit => {
            out.value = mmd_logit(images, &side, seed, &mut out.d_logits);
        }
        PenaltyKind::Coral => {
            out.d_hidden = images.iter().map(|im| vec![0.0; im.hidden.len()]).collect();
            out.value = coral(images, &side, hidden_dim, &mut out.d_hidden);
        }
        PenaltyKind::MmdFeature => {
            out.d_hidden = images.iter().map(|im| vec![0.0; im.hidden.len()]).collect();
            out.value = mmd_feature(images, &side, hidden_dim, &mut out.d_hidden);
        }
    }
    out
}

fn eo(images: &[PenaltyImage<'_>], side: &dyn Fn(GroupId) -> Option<usize>, d: &mut [Vec<f64>]) -> f64 {
    mean_gap(images, side, |t| t == 1, d) + mean_gap(images, side, |t| t == 0, d)
}

/// `|mean p(g0) - mean p(g1)|` over pixels whose label passes `select`.
/// Zero when either group has no such pixel.
fn mean_gap(
    images: &[PenaltyImage<'_>],
    side: &dyn Fn(GroupId) -> Option<usize>,
    select: impl Fn(u8) -> bool,
    d: &mut [Vec<f64>],
) -> f64 {
    let mut sum = [0.0; 2];
    let mut count = [0usize; 2];
    for im in images {
        if let Some(s) = side(im.group) {
            for (&p, &t) in im.probs.iter().zip(im.labels) {
                if select(t) {
                    sum[s] += p;
                    count[s] += 1;
                }
            }
        }
    }
    if count[0] == 0 || count[1] == 0 {
        return 0.0;
    }
    let gap = sum[0] / count[0] as f64 - sum[1] / count[1] as f64;
    let sign = if gap > 0.0 {
        1.0
    } else if gap < 0.0 {
        -1.0
    } else {
        0.0
    };
    let coef = [sign / count[0] as f64, -sign / count[1] as f64];
    for (im, dz) in images.iter().zip(d.iter_mut()) {
        if let Some(s) = side(im.group) {
            for ((&p, &t), g) in im.probs.iter().zip(im.labels).zip(dz.iter_mut()) {
                if select(t) {
                    *g += coef[s] * p * (1.0 - p);
                }
            }
        }
    }
    libm::fabs(gap)
}

fn mmd_logit(
    images: &[PenaltyImage<'_>],
    side: &dyn Fn(GroupId) -> Option<usize>,
    seed: u64,
    d: &mut [Vec<f64>],
) -> f64 {
    // (class, side) -> list of (image, pixel)
    let mut total = 0.0;
    let mut grads: Vec<(usize, usize, f64)> = Vec::new();
    let mut classes = 0usize;
    for class in 0..2u8 {
        let mut members: [Vec<(usize, usize)>; 2] = [Vec::new(), Vec::new()];
        for (ii, im) in images.iter().enumerate() {
            if let Some(s) = side(im.group) {
                for (pi, &t) in im.labels.iter().enumerate() {
                    if t == class {
                        members[s].push((ii, pi));
                    }
                }
            }
        }
        if members[0].is_empty() || members[1].is_empty() {
            continue;
        }
        for (s, m) in members.iter_mut().enumerate() {
            if m.len() > MMD_LOGIT_SUBSAMPLE {
                let mut r = rng::substream(seed, 2 * class as u64 + s as u64);
                let mut keep = index::sample(&mut r, m.len(), MMD_LOGIT_SUBSAMPLE).into_vec();
                keep.sort_unstable();
                *m = keep.into_iter().map(|k| m[k]).collect();
            }
        }
        let vals: [Vec<[f64; 1]>; 2] = [
            members[0].iter().map(|&(i, p)| [images[i].logits[p]]).collect(),
            members[1].iter().map(|&(i, p)| [images[i].logits[p]]).collect(),
        ];
        let x: Vec<&[f64]> = vals[0].iter().map(|v| v.as_slice()).collect();
        let y: Vec<&[f64]> = vals[1].iter().map(|v| v.as_slice()).collect();
        let r = mmd2(&x, &y, true);
        total += r.value;
        classes += 1;
        for (&(i, p), g) in members[0].iter().zip(&r.grad_x) {
            grads.push((i, p, *g));
        }
        for (&(i, p), g) in members[1].iter().zip(&r.grad_y) {
            grads.push((i, p, *g));
        }
    }
    if classes == 0 {
        return 0.0;
    }
    let inv = 1.0 / classes as f64;
    for (i, p, g) in grads {
        d[i][p] += g * inv;
    }
    total * inv
}

fn coral(
    images: &[PenaltyImage<'_>],
    side: &dyn Fn(GroupId) -> Option<usize>,
    dim: usize,
    d: &mut [Vec<f64>],
) -> f64 {
    let mut n = [0usize; 2];
    let mut mean = [vec![0.0; dim], vec![0.0; dim]];
    for im in images {
        if let Some(s) = side(im.group) {
            for row in im.hidden.chunks_exact(dim) {
                n[s] += 1;
                for (m, v) in mean[s].iter_mut().zip(row) {
                    *m += v;
                }
            }
        }
    }
    if n[0] < 2 || n[1] < 2 {
        return 0.0;
    }
    for s in 0..2 {
        for m in &mut mean[s] {
            *m /= n[s] as f64;
        }
    }
    let mut cov = [vec![0.0; dim * dim], vec![0.0; dim * dim]];
    let mut centered = vec![0.0; dim];
    for im in images {
        if let Some(s) = side(im.group) {
            for row in im.hidden.chunks_exact(dim) {
                for t in 0..dim {
                    centered[t] = row[t] - mean[s][t];
                }
                let c = &mut cov[s];
                for a in 0..dim {
                    let ca = centered[a];
                    for b in 0..dim {
                        c[a * dim + b] += ca * centered[b];
                    }
                }
            }
        }
    }
    for s in 0..2 {
        let inv = 1.0 / (n[s] - 1) as f64;
        for v in &mut cov[s] {
            *v *= inv;
        }
    }
    let norm = 4.0 * (dim * dim) as f64;
    let diff: Vec<f64> = cov[0].iter().zip(&cov[1]).map(|(a, b)| a - b).collect();
    let value = diff.iter().map(|v| v * v).sum::<f64>() / norm;
    // d value / d Cov_0 = 2 diff / norm; d Cov / d h_i = 2 (h_i - mu) / (n - 1)
    for (im, dh) in images.iter().zip(d.iter_mut()) {
        if let Some(s) = side(im.group) {
            let sign = if s == 0 { 1.0 } else { -1.0 };
            let coef = sign * 2.0 / norm * 2.0 / (n[s] - 1) as f64;
            for (row, g) in im.hidden.chunks_exact(dim).zip(dh.chunks_exact_mut(dim)) {
                for t in 0..dim {
                    centered[t] = row[t] - mean[s][t];
                }
                for a in 0..dim {
                    let mut acc = 0.0;
                    for b in 0..dim {
                        acc += diff[a * dim + b] * centered[b];
                    }
                    g[a] += coef * acc;
                }
            }
        }
    }
    value
}

fn mmd_feature(
    images: &[PenaltyImage<'_>],
    side: &dyn Fn(GroupId) -> Option<usize>,
    dim: usize,
    d: &mut [Vec<f64>],
) -> f64 {
    let feats: Vec<Vec<f64>> = images.iter().map(|im| super::model::mean_rows(im.hidden, dim)).collect();
    let mut idx: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, im) in images.iter().enumerate() {
        if let Some(s) = side(im.group) {
            idx[s].push(i);
        }
    }
    let x: Vec<&[f64]> = idx[0].iter().map(|&i| feats[i].as_slice()).collect();
    let y: Vec<&[f64]> = idx[1].iter().map(|&i| feats[i].as_slice()).collect();
    let r = mmd2(&x, &y, true);
    for (s, grad) in [(0, &r.grad_x), (1, &r.grad_y)] {
        for (k, &i) in idx[s].iter().enumerate() {
            let g = &grad[k * dim..(k + 1) * dim];
            let n = images[i].hidden.len() / dim;
            for row in d[i].chunks_exact_mut(dim) {
                for t in 0..dim {
                    row[t] += g[t] / n as f64;
                }
            }
        }
    }
    r.value
}
