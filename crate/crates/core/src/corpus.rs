//! Samples, corpora and the seeded synthetic corpus generator.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::mask::BinaryMask;
use crate::{rng, GroupId};

/// One image with its observed label, optional clean label and group.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    id: String,
    group: GroupId,
    image: GrayImage,
    mask_obs: BinaryMask,
    mask_clean: Option<BinaryMask>,
    corrupted: bool,
}

impl Sample {
    pub fn new(
        id: impl Into<String>,
        group: GroupId,
        image: GrayImage,
        mask_obs: BinaryMask,
        mask_clean: Option<BinaryMask>,
        corrupted: bool,
    ) -> Result<Self> {
        let id = id.into();
        let dims = image.dims();
        for m in core::iter::once(&mask_obs).chain(mask_clean.as_ref()) {
            if m.dims() != dims {
                return Err(Error::DimensionMismatch {
                    id,
                    expected: dims,
                    found: m.dims(),
                });
            }
        }
        if corrupted && mask_clean.is_none() {
            return Err(Error::MissingCleanMask(id));
        }
        Ok(Self {
            id,
            group,
            image,
            mask_obs,
            mask_clean,
            corrupted,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn group(&self) -> GroupId {
        self.group
    }

    pub fn image(&self) -> &GrayImage {
        &self.image
    }

    pub fn mask_obs(&self) -> &BinaryMask {
        &self.mask_obs
    }

    /// Retained clean label. Only evaluation against the clean reference
    /// should read this; audit and training operate on [`LabeledSample`]s.
    pub fn mask_clean(&self) -> Option<&BinaryMask> {
        self.mask_clean.as_ref()
    }

    pub fn corrupted(&self) -> bool {
        self.corrupted
    }

    /// Replaces the observed mask with `corrupted_mask`, keeping the old one as clean.
    pub(crate) fn corrupt(&mut self, corrupted_mask: BinaryMask) {
        let previous = core::mem::replace(&mut self.mask_obs, corrupted_mask);
        self.mask_clean = Some(previous);
        self.corrupted = true;
    }

    pub fn labeled(&self) -> LabeledSample<'_> {
        LabeledSample {
            id: &self.id,
            group: self.group,
            image: &self.image,
            mask: &self.mask_obs,
        }
    }
}

/// What training and auditing are allowed to see: image, observed label, group.
#[derive(Debug, Clone, Copy)]
pub struct LabeledSample<'a> {
    pub id: &'a str,
    pub group: GroupId,
    pub image: &'a GrayImage,
    pub mask: &'a BinaryMask,
}

/// Ordered samples partitioned into a nominally clean and a biased group.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    samples: Vec<Sample>,
    clean_group: GroupId,
    biased_group: GroupId,
}

impl Corpus {
    pub fn new(samples: Vec<Sample>, clean_group: GroupId) -> Result<Self> {
        let mut ids = BTreeSet::new();
        for s in &samples {
            if !ids.insert(s.id.as_str()) {
                return Err(Error::Config(format!("duplicate sample id `{}`", s.id)));
            }
        }
        let groups: BTreeSet<GroupId> = samples.iter().map(|s| s.group).collect();
        if groups.len() != 2 || !groups.contains(&clean_group) {
            return Err(Error::Config(format!(
                "corpus needs exactly two non-empty groups including clean group {clean_group}, found {groups:?}"
            )));
        }
        let biased_group = *groups.iter().find(|&&g| g != clean_group).unwrap();
        Ok(Self {
            samples,
            clean_group,
            biased_group,
        })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub(crate) fn samples_mut(&mut self) -> &mut [Sample] {
        &mut self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn clean_group(&self) -> GroupId {
        self.clean_group
    }

    pub fn biased_group(&self) -> GroupId {
        self.biased_group
    }

    /// Both group ids in ascending order.
    pub fn groups(&self) -> [GroupId; 2] {
        let (a, b) = (self.clean_group, self.biased_group);
        if a < b {
            [a, b]
        } else {
            [b, a]
        }
    }

    pub fn group_size(&self, group: GroupId) -> usize {
        self.samples.iter().filter(|s| s.group == group).count()
    }

    pub fn labeled(&self) -> Vec<LabeledSample<'_>> {
        self.samples.iter().map(Sample::labeled).collect()
    }

    pub fn get(&self, id: &str) -> Option<&Sample> {
        self.samples.iter().find(|s| s.id == id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ShapeFamily {
    Ellipse,
    PolygonBlob,
}

/// Parameters of the synthetic corpus generator.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct GenConfig {
    pub n_samples: usize,
    pub width: usize,
    pub height: usize,
    pub shape: ShapeFamily,
    /// Foreground minus background intensity.
    pub contrast: f64,
    pub noise_sigma: f64,
    /// Intensity offset added to every pixel of biased-group images.
    pub group_cue_shift: f64,
    /// Fraction of samples in the biased group.
    pub group_balance: f64,
    pub clean_group: GroupId,
    pub biased_group: GroupId,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            n_samples: 200,
            width: 64,
            height: 64,
            shape: ShapeFamily::Ellipse,
            contrast: 0.5,
            noise_sigma: 0.1,
            group_cue_shift: 0.1,
            group_balance: 0.5,
            clean_group: GroupId(0),
            biased_group: GroupId(1),
            seed: 0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.n_samples < 2 {
            return fail(format!("n_samples must be >= 2, got {}", self.n_samples));
        }
        if self.width < 16 || self.height < 16 {
            return fail(format!(
                "canvas must be at least 16x16, got {}x{}",
                self.width, self.height
            ));
        }
        if !(self.group_balance > 0.0 && self.group_balance < 1.0) {
            return fail(format!(
                "group_balance must lie in (0, 1), got {}",
                self.group_balance
            ));
        }
        let biased = self.biased_count();
        if biased == 0 || biased == self.n_samples {
            return fail(format!(
                "group_balance {} leaves a group empty for {} samples",
                self.group_balance, self.n_samples
            ));
        }
        if !(self.noise_sigma >= 0.0) {
            return fail(format!("noise_sigma must be >= 0, got {}", self.noise_sigma));
        }
        if !(0.0..=1.0).contains(&self.contrast) {
            return fail(format!("contrast must lie in [0, 1], got {}", self.contrast));
        }
        if !(0.0..=1.0).contains(&self.group_cue_shift) {
            return fail(format!(
                "group_cue_shift must lie in [0, 1], got {}",
                self.group_cue_shift
            ));
        }
        if self.clean_group == self.biased_group {
            return fail("clean_group and biased_group must differ".into());
        }
        Ok(())
    }

    pub fn biased_count(&self) -> usize {
        libm::round(self.group_balance * self.n_samples as f64) as usize
    }
}

const SUPERSAMPLE: usize = 4;
const MAX_SHAPE_ATTEMPTS: usize = 200;

/// Star-shaped region around a center; `radius_at(theta)` gives its extent.
#[derive(Debug, Clone)]
enum Shape {
    Ellipse {
        cx: f64,
        cy: f64,
        a: f64,
        b: f64,
        rot: f64,
    },
    Blob {
        cx: f64,
        cy: f64,
        r0: f64,
        harmonics: [(f64, f64); 3],
    },
}

impl Shape {
    fn sample<R: Rng + ?Sized>(family: ShapeFamily, w: usize, h: usize, rng: &mut R) -> Self {
        let side = w.min(h) as f64;
        let (lo, hi) = (0.14 * side, 0.30 * side);
        let margin = hi + 6.0;
        let cx = rng.random_range(margin.min(w as f64 / 2.0)..=(w as f64 - margin).max(w as f64 / 2.0));
        let cy = rng.random_range(margin.min(h as f64 / 2.0)..=(h as f64 - margin).max(h as f64 / 2.0));
        match family {
            ShapeFamily::Ellipse => Shape::Ellipse {
                cx,
                cy,
                a: rng.random_range(lo..hi),
                b: rng.random_range(lo..hi),
                rot: rng.random_range(0.0..PI),
            },
            ShapeFamily::PolygonBlob => {
                let r0 = rng.random_range(lo..hi / 1.15);
                let mut harmonics = [(0.0, 0.0); 3];
                for hm in &mut harmonics {
                    *hm = (rng.random_range(0.0..0.05), rng.random_range(0.0..2.0 * PI));
                }
                Shape::Blob {
                    cx,
                    cy,
                    r0,
                    harmonics,
                }
            }
        }
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Shape::Ellipse { cx, cy, a, b, rot } => {
                let (u, v) = (x - cx, y - cy);
                let (c, s) = (libm::cos(rot), libm::sin(rot));
                let p = (u * c + v * s) / a;
                let q = (-u * s + v * c) / b;
                p * p + q * q < 1.0
            }
            Shape::Blob {
                cx,
                cy,
                r0,
                ref harmonics,
            } => {
                let (u, v) = (x - cx, y - cy);
                let theta = libm::atan2(v, u);
                let wobble: f64 = harmonics
                    .iter()
                    .enumerate()
                    .map(|(k, &(amp, phase))| amp * libm::cos((k + 2) as f64 * theta + phase))
                    .sum();
                libm::sqrt(u * u + v * v) < r0 * (1.0 + wobble)
            }
        }
    }

    /// Mask from pixel centers plus fractional coverage from supersampling.
    fn rasterize(&self, w: usize, h: usize) -> (BinaryMask, Vec<f64>) {
        let mask = BinaryMask::from_fn(w, h, |x, y| self.contains(x as f64, y as f64));
        let n = SUPERSAMPLE as f64;
        let mut coverage = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                let mut hits = 0usize;
                for sy in 0..SUPERSAMPLE {
                    for sx in 0..SUPERSAMPLE {
                        let px = x as f64 - 0.5 + (sx as f64 + 0.5) / n;
                        let py = y as f64 - 0.5 + (sy as f64 + 0.5) / n;
                        hits += self.contains(px, py) as usize;
                    }
                }
                coverage[y * w + x] = hits as f64 / (n * n);
            }
        }
        (mask, coverage)
    }
}

/// True when the foreground forms one 4-connected component.
pub fn is_connected(mask: &BinaryMask) -> bool {
    let (w, h) = mask.dims();
    let Some(start) = mask.as_slice().iter().position(|&v| v == 1) else {
        return false;
    };
    let mut seen = vec![false; w * h];
    let mut stack = vec![start];
    seen[start] = true;
    let mut reached = 0usize;
    while let Some(i) = stack.pop() {
        reached += 1;
        let (x, y) = (i % w, i / w);
        let mut push = |j: usize| {
            if mask.as_slice()[j] == 1 && !seen[j] {
                seen[j] = true;
                stack.push(j);
            }
        };
        if x > 0 {
            push(i - 1);
        }
        if x + 1 < w {
            push(i + 1);
        }
        if y > 0 {
            push(i - w);
        }
        if y + 1 < h {
            push(i + w);
        }
    }
    reached == mask.count()
}

/// Generates a reproducible corpus. Identical configs give identical corpora.
pub fn generate(config: &GenConfig) -> Result<Corpus> {
    config.validate()?;
    let (w, h) = (config.width, config.height);
    let n = config.n_samples;

    let mut groups = vec![config.clean_group; n];
    for g in groups.iter_mut().take(config.biased_count()) {
        *g = config.biased_group;
    }
    groups.shuffle(&mut rng::substream(config.seed, u64::MAX));

    let background = 0.5 - config.contrast / 2.0;
    let mut samples = Vec::with_capacity(n);
    for (i, &group) in groups.iter().enumerate() {
        let mut rng = rng::substream(config.seed, i as u64);
        let (mask, coverage) = (0..MAX_SHAPE_ATTEMPTS)
            .find_map(|_| {
                let shape = Shape::sample(config.shape, w, h, &mut rng);
                let (mask, coverage) = shape.rasterize(w, h);
                let frac = mask.count() as f64 / (w * h) as f64;
                ((0.05..=0.60).contains(&frac) && is_connected(&mask)).then_some((mask, coverage))
            })
            .ok_or_else(|| {
                Error::Config(format!(
                    "could not place an object covering 5-60% of a {w}x{h} canvas"
                ))
            })?;
        let shift = if group == config.biased_group {
            config.group_cue_shift
        } else {
            0.0
        };
        let data = coverage
            .iter()
            .map(|&c| {
                let noise: f64 = rng.sample(StandardNormal);
                let v = background + config.contrast * c + config.noise_sigma * noise + shift;
                libm::round(v.clamp(0.0, 1.0) * 255.0) / 255.0
            })
            .collect();
        let image = GrayImage::from_vec(w, h, data)?;
        samples.push(Sample::new(
            format!("s{i:04}"),
            group,
            image,
            mask.clone(),
            Some(mask),
            false,
        )?);
    }
    Corpus::new(samples, config.clean_group)
}
