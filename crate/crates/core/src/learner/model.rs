use alloc::vec;
use alloc::vec::Vec;

use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::mask::BinaryMask;
use crate::rng::SeededRng;
use crate::GroupId;

/// Number of features per pixel for patch half-width `p`: the patch, two
/// coordinates and the image context.
pub const fn feat_dim(patch_radius: usize) -> usize {
    (2 * patch_radius + 1) * (2 * patch_radius + 1) + 3
}

/// Lower-quartile intensity of the image, a proxy for its background level.
pub fn image_context(image: &GrayImage) -> f64 {
    let mut v = image.as_slice().to_vec();
    let k = v.len() / 4;
    let (_, q, _) = v.select_nth_unstable_by(k, |a, b| a.total_cmp(b));
    *q
}

/// Writes the feature vector of pixel `(x, y)` into `out`: the edge-clamped
/// `(2p+1)^2` intensity patch in row-major order minus `context`, then
/// `x / (W-1)`, `y / (H-1)` and `context` itself.
///
/// Centering the patch makes boundary cues independent of the global
/// intensity level, which is then available only through the last feature.
pub fn pixel_features(image: &GrayImage, patch_radius: usize, context: f64, x: usize, y: usize, out: &mut [f64]) {
    let (w, h) = image.dims();
    let r = patch_radius as isize;
    let mut k = 0;
    for dy in -r..=r {
        let yy = (y as isize + dy).clamp(0, h as isize - 1) as usize;
        for dx in -r..=r {
            let xx = (x as isize + dx).clamp(0, w as isize - 1) as usize;
            out[k] = image.get(xx, yy) - context;
            k += 1;
        }
    }
    out[k] = if w > 1 { x as f64 / (w - 1) as f64 } else { 0.0 };
    out[k + 1] = if h > 1 { y as f64 / (h - 1) as f64 } else { 0.0 };
    out[k + 2] = context;
}

/// Feature matrix of a whole image, row-major `pixels x feat_dim`.
pub fn image_features(image: &GrayImage, patch_radius: usize) -> Vec<f64> {
    let f = feat_dim(patch_radius);
    let (w, h) = image.dims();
    let mut out = vec![0.0; w * h * f];
    let context = image_context(image);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            pixel_features(image, patch_radius, context, x, y, &mut out[i * f..(i + 1) * f]);
        }
    }
    out
}

/// Per-pixel foreground probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMap {
    width: usize,
    height: usize,
    p_fg: Vec<f64>,
}

impl ProbMap {
    pub fn from_vec(width: usize, height: usize, p_fg: Vec<f64>) -> Result<Self> {
        if p_fg.len() != width * height {
            return Err(Error::ShapeMismatch((width, height), (p_fg.len(), 1)));
        }
        if p_fg.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Config("probabilities must lie in [0, 1]".into()));
        }
        Ok(Self { width, height, p_fg })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.p_fg
    }

    /// Foreground wherever `p_fg > 0.5`.
    pub fn threshold(&self) -> BinaryMask {
        let data = self.p_fg.iter().map(|&p| u8::from(p > 0.5)).collect();
        BinaryMask::from_vec(self.width, self.height, data).expect("binary by construction")
    }
}

/// One hidden layer pixel classifier with per-group feature modulation.
///
/// Parameters live in one flat vector laid out as `W1` (row-major
/// `hidden x feat`), `b1`, `w2`, `b2`, then `gamma_g`, `beta_g` for each group
/// in ascending id order.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerModel {
    hidden_dim: usize,
    patch_radius: usize,
    groups: Vec<GroupId>,
    params: Vec<f64>,
}

impl LearnerModel {
    /// Model with all weights zero and identity modulation.
    pub fn zeros(hidden_dim: usize, patch_radius: usize, groups: &[GroupId]) -> Self {
        let mut groups = groups.to_vec();
        groups.sort_unstable();
        groups.dedup();
        let f = feat_dim(patch_radius);
        let n = hidden_dim * f + 2 * hidden_dim + 1 + 2 * hidden_dim * groups.len();
        let mut model = Self {
            hidden_dim,
            patch_radius,
            groups,
            params: vec![0.0; n],
        };
        for gi in 0..model.groups.len() {
            let off = model.film_offset(gi);
            model.params[off..off + hidden_dim].fill(1.0);
        }
        model
    }

    /// He-initialized first layer, small readout, identity modulation.
    pub fn init(hidden_dim: usize, patch_radius: usize, groups: &[GroupId], rng: &mut SeededRng) -> Self {
        let mut model = Self::zeros(hidden_dim, patch_radius, groups);
        let f = model.feat_dim();
        let w1_std = libm::sqrt(2.0 / f as f64);
        let w2_std = libm::sqrt(1.0 / hidden_dim as f64);
        let n1 = Normal::new(0.0, w1_std).expect("finite std");
        for v in &mut model.params[..hidden_dim * f] {
            *v = n1.sample(rng);
        }
        let n2 = Normal::new(0.0, w2_std).expect("finite std");
        let off = model.w2_offset();
        for v in &mut model.params[off..off + hidden_dim] {
            *v = n2.sample(rng);
        }
        model
    }

    /// Rebuilds a model from a flat parameter vector (checkpoint loading).
    pub fn from_params(
        hidden_dim: usize,
        patch_radius: usize,
        groups: &[GroupId],
        params: Vec<f64>,
    ) -> Result<Self> {
        let mut model = Self::zeros(hidden_dim, patch_radius, groups);
        if model.groups.len() != groups.len() {
            return Err(Error::Config("duplicate group ids in model".into()));
        }
        if params.len() != model.params.len() {
            return Err(Error::Config(alloc::format!(
                "model needs {} parameters, got {}",
                model.params.len(),
                params.len()
            )));
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("model parameters must be finite".into()));
        }
        model.params = params;
        Ok(model)
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn patch_radius(&self) -> usize {
        self.patch_radius
    }

    pub fn feat_dim(&self) -> usize {
        feat_dim(self.patch_radius)
    }

    pub fn groups(&self) -> &[GroupId] {
        &self.groups
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn group_index(&self, group: GroupId) -> Result<usize> {
        self.groups
            .binary_search(&group)
            .map_err(|_| Error::UnknownGroup(group))
    }

    pub(crate) fn b1_offset(&self) -> usize {
        self.hidden_dim * self.feat_dim()
    }

    pub(crate) fn w2_offset(&self) -> usize {
        self.b1_offset() + self.hidden_dim
    }

    pub(crate) fn b2_offset(&self) -> usize {
        self.w2_offset() + self.hidden_dim
    }

    /// Offset of `gamma` for the group at `index`; `beta` follows it.
    pub(crate) fn film_offset(&self, index: usize) -> usize {
        self.b2_offset() + 1 + 2 * self.hidden_dim * index
    }

    /// Range of all modulation parameters in the flat vector.
    pub fn film_range(&self) -> core::ops::Range<usize> {
        self.b2_offset() + 1..self.params.len()
    }

    pub fn w1(&self) -> &[f64] {
        &self.params[..self.b1_offset()]
    }

    pub fn b1(&self) -> &[f64] {
        &self.params[self.b1_offset()..self.w2_offset()]
    }

    pub fn w2(&self) -> &[f64] {
        &self.params[self.w2_offset()..self.b2_offset()]
    }

    pub fn b2(&self) -> f64 {
        self.params[self.b2_offset()]
    }

    pub fn gamma(&self, group: GroupId) -> Result<&[f64]> {
        let off = self.film_offset(self.group_index(group)?);
        Ok(&self.params[off..off + self.hidden_dim])
    }

    pub fn beta(&self, group: GroupId) -> Result<&[f64]> {
        let off = self.film_offset(self.group_index(group)?) + self.hidden_dim;
        Ok(&self.params[off..off + self.hidden_dim])
    }

    pub fn gamma_mut(&mut self, group: GroupId) -> Result<&mut [f64]> {
        let off = self.film_offset(self.group_index(group)?);
        let h = self.hidden_dim;
        Ok(&mut self.params[off..off + h])
    }

    pub fn beta_mut(&mut self, group: GroupId) -> Result<&mut [f64]> {
        let off = self.film_offset(self.group_index(group)?) + self.hidden_dim;
        let h = self.hidden_dim;
        Ok(&mut self.params[off..off + h])
    }

    /// `W1` transposed to `feat x hidden` so the inner loop runs over hidden units.
    pub(crate) fn w1_transposed(&self) -> Vec<f64> {
        let (h, f) = (self.hidden_dim, self.feat_dim());
        let w1 = self.w1();
        let mut t = vec![0.0; h * f];
        for k in 0..h {
            for j in 0..f {
                t[j * h + k] = w1[k * f + j];
            }
        }
        t
    }
}

/// Everything the backward pass needs from a forward pass over one image.
#[derive(Debug, Clone)]
pub(crate) struct ForwardCache {
    pub feats: Vec<f64>,
    pub hidden: Vec<f64>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    pub condition: usize,
}

#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

pub(crate) fn forward_cached(model: &LearnerModel, image: &GrayImage, condition: usize) -> ForwardCache {
    let feats = image_features(image, model.patch_radius);
    let (hd, f) = (model.hidden_dim, model.feat_dim());
    let n = image.as_slice().len();
    let w1t = model.w1_transposed();
    let b1 = model.b1();
    let w2 = model.w2();
    let b2 = model.b2();
    let off = model.film_offset(condition);
    let gamma = &model.params[off..off + hd];
    let beta = &model.params[off + hd..off + 2 * hd];

    let mut hidden = vec![0.0; n * hd];
    let mut logits = vec![0.0; n];
    let mut probs = vec![0.0; n];
    for i in 0..n {
        let phi = &feats[i * f..(i + 1) * f];
        let h = &mut hidden[i * hd..(i + 1) * hd];
        h.copy_from_slice(b1);
        for (j, &x) in phi.iter().enumerate() {
            let row = &w1t[j * hd..(j + 1) * hd];
            for (a, &w) in h.iter_mut().zip(row) {
                *a += w * x;
            }
        }
        let mut z = b2;
        for k in 0..hd {
            if h[k] < 0.0 {
                h[k] = 0.0;
            }
            z += w2[k] * (gamma[k] * h[k] + beta[k]);
        }
        logits[i] = z;
        probs[i] = sigmoid(z);
    }
    ForwardCache {
        feats,
        hidden,
        logits,
        probs,
        condition,
    }
}

/// Forward pass. Modulation uses `condition` when given, otherwise `group`.
///
/// Returns the probability map and the pre-modulation hidden activations,
/// row-major `pixels x hidden_dim`.
pub fn forward(
    model: &LearnerModel,
    image: &GrayImage,
    group: GroupId,
    condition: Option<GroupId>,
) -> Result<(ProbMap, Vec<f64>)> {
    let ci = model.group_index(condition.unwrap_or(group))?;
    let cache = forward_cached(model, image, ci);
    let (w, h) = image.dims();
    let map = ProbMap {
        width: w,
        height: h,
        p_fg: cache.probs,
    };
    Ok((map, cache.hidden))
}

/// Inference with modulation forced to `force_group`.
pub fn predict(model: &LearnerModel, image: &GrayImage, force_group: GroupId) -> Result<ProbMap> {
    forward(model, image, force_group, None).map(|(p, _)| p)
}

/// Global average pool of the pre-modulation hidden activations.
pub fn gap_features(model: &LearnerModel, image: &GrayImage) -> Vec<f64> {
    let cache = forward_cached(model, image, 0);
    mean_rows(&cache.hidden, model.hidden_dim)
}

pub(crate) fn mean_rows(data: &[f64], dim: usize) -> Vec<f64> {
    let n = data.len() / dim;
    let mut out = vec![0.0; dim];
    for row in data.chunks_exact(dim) {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    for o in &mut out {
        *o /= n as f64;
    }
    out
}
