//! Skin-tone grouping by Individual Typology Angle.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::RangeInclusive;

use rand::Rng;

use crate::error::{Error, Result};
use crate::mask::BinaryMask;
use crate::rng;

/// CIE L*a*b* color.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LabColor {
    pub l: f64,
    pub a: f64,
    pub b: f64,
}

impl LabColor {
    fn dist2(&self, o: &LabColor) -> f64 {
        let (dl, da, db) = (self.l - o.l, self.a - o.a, self.b - o.b);
        dl * dl + da * da + db * db
    }
}

// D65 reference white
const WHITE: [f64; 3] = [0.95047, 1.0, 1.08883];

fn srgb_to_linear(c: u8) -> f64 {
    let v = f64::from(c) / 255.0;
    if v <= 0.04045 {
        v / 12.92
    } else {
        libm::pow((v + 0.055) / 1.055, 2.4)
    }
}

fn lab_f(t: f64) -> f64 {
    const D: f64 = 6.0 / 29.0;
    if t > D * D * D {
        libm::cbrt(t)
    } else {
        t / (3.0 * D * D) + 4.0 / 29.0
    }
}

/// 8-bit sRGB to L*a*b* under D65.
pub fn rgb_to_lab(rgb: [u8; 3]) -> LabColor {
    let [r, g, b] = rgb.map(srgb_to_linear);
    let x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
    let y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
    let z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;
    let (fx, fy, fz) = (lab_f(x / WHITE[0]), lab_f(y / WHITE[1]), lab_f(z / WHITE[2]));
    LabColor {
        l: 116.0 * fy - 16.0,
        a: 500.0 * (fx - fy),
        b: 200.0 * (fy - fz),
    }
}

/// ITA in degrees, `atan2(L* - 50, b*)`. Negative b* lands beyond +-90.
pub fn ita(c: LabColor) -> Result<f64> {
    if c.b == 0.0 && c.l == 50.0 {
        return Err(Error::UndefinedIta);
    }
    Ok(libm::atan2(c.l - 50.0, c.b).to_degrees())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ToneGroup {
    #[cfg_attr(feature = "serde", serde(rename = "ST1"))]
    St1VeryLight,
    #[cfg_attr(feature = "serde", serde(rename = "ST2"))]
    St2Light,
    #[cfg_attr(feature = "serde", serde(rename = "ST3"))]
    St3Intermediate,
    #[cfg_attr(feature = "serde", serde(rename = "ST4"))]
    St4Tan,
    #[cfg_attr(feature = "serde", serde(rename = "out_of_range"))]
    OutOfRange,
}

impl ToneGroup {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::St1VeryLight => "ST1",
            Self::St2Light => "ST2",
            Self::St3Intermediate => "ST3",
            Self::St4Tan => "ST4",
            Self::OutOfRange => "out_of_range",
        }
    }
}

/// Bins: (55, 90] ST1, (41, 55] ST2, (28, 41] ST3, (10, 28] ST4, else out of range.
pub fn classify(ita_deg: f64) -> ToneGroup {
    match ita_deg {
        x if x > 90.0 => ToneGroup::OutOfRange,
        x if x > 55.0 => ToneGroup::St1VeryLight,
        x if x > 41.0 => ToneGroup::St2Light,
        x if x > 28.0 => ToneGroup::St3Intermediate,
        x if x > 10.0 => ToneGroup::St4Tan,
        _ => ToneGroup::OutOfRange,
    }
}

pub const DEFAULT_K_RANGE: RangeInclusive<usize> = 2..=6;
const KMEANS_ITERS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DominantColor {
    pub color: LabColor,
    /// Number of clusters chosen by the elbow rule.
    pub k: usize,
    /// Within-cluster sum of squares for each k tried, ascending k.
    pub inertia: Vec<f64>,
}

struct Clustering {
    centers: Vec<LabColor>,
    sizes: Vec<usize>,
    inertia: f64,
}

fn nearest(p: &LabColor, centers: &[LabColor]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centers.iter().enumerate() {
        let d = p.dist2(c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Lloyd iterations from farthest-point seeds. `pixels` must be sorted.
fn kmeans(pixels: &[LabColor], k: usize, seed: u64) -> Clustering {
    let first = rng::substream(seed, k as u64).random_range(0..pixels.len());
    let mut centers = vec![pixels[first]];
    let mut d2: Vec<f64> = pixels.iter().map(|p| p.dist2(&centers[0])).collect();
    while centers.len() < k {
        let far = (0..pixels.len()).fold(0, |best, i| if d2[i] > d2[best] { i } else { best });
        centers.push(pixels[far]);
        for (d, p) in d2.iter_mut().zip(pixels) {
            *d = d.min(p.dist2(&pixels[far]));
        }
    }
    let mut assign = vec![usize::MAX; pixels.len()];
    for _ in 0..KMEANS_ITERS {
        let mut changed = false;
        for (a, p) in assign.iter_mut().zip(pixels) {
            let (c, _) = nearest(p, &centers);
            if *a != c {
                *a = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![[0.0f64; 3]; k];
        let mut counts = vec![0usize; k];
        for (&a, p) in assign.iter().zip(pixels) {
            sums[a][0] += p.l;
            sums[a][1] += p.a;
            sums[a][2] += p.b;
            counts[a] += 1;
        }
        for ((c, s), &n) in centers.iter_mut().zip(&sums).zip(&counts) {
            // an emptied cluster keeps its previous center
            if n > 0 {
                let n = n as f64;
                *c = LabColor {
                    l: s[0] / n,
                    a: s[1] / n,
                    b: s[2] / n,
                };
            }
        }
    }
    let mut sizes = vec![0usize; k];
    let mut inertia = 0.0;
    for p in pixels {
        let (c, d) = nearest(p, &centers);
        sizes[c] += 1;
        inertia += d;
    }
    Clustering {
        centers,
        sizes,
        inertia,
    }
}

/// Centroid of the largest k-means cluster, with k picked by the largest
/// second difference of inertia. Ranges with fewer than three values use the
/// smallest k.
pub fn dominant_color(pixels: &[LabColor], k_range: RangeInclusive<usize>, seed: u64) -> Result<DominantColor> {
    let (k_min, k_max) = (*k_range.start(), *k_range.end());
    if k_min == 0 || k_min > k_max {
        return Err(Error::Config("k range must be non-empty and start at 1 or more".into()));
    }
    if pixels.len() < k_max {
        return Err(Error::TooFewPixels {
            needed: k_max,
            got: pixels.len(),
        });
    }
    if pixels.iter().any(|p| !(p.l.is_finite() && p.a.is_finite() && p.b.is_finite())) {
        return Err(Error::Config("colors must be finite".into()));
    }
    let mut sorted = pixels.to_vec();
    sorted.sort_by(|x, y| x.l.total_cmp(&y.l).then(x.a.total_cmp(&y.a)).then(x.b.total_cmp(&y.b)));

    let runs: Vec<Clustering> = k_range.clone().map(|k| kmeans(&sorted, k, seed)).collect();
    let inertia: Vec<f64> = runs.iter().map(|r| r.inertia).collect();
    let mut pick = 0;
    let mut best = f64::NEG_INFINITY;
    for i in 1..inertia.len().saturating_sub(1) {
        let d2 = inertia[i - 1] - 2.0 * inertia[i] + inertia[i + 1];
        if d2 > best {
            best = d2;
            pick = i;
        }
    }
    let run = &runs[pick];
    let largest = (0..run.sizes.len()).fold(0, |b, i| if run.sizes[i] > run.sizes[b] { i } else { b });
    Ok(DominantColor {
        color: run.centers[largest],
        k: k_min + pick,
        inertia,
    })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ToneAssignment {
    pub dominant: DominantColor,
    pub ita: f64,
    pub group: ToneGroup,
}

/// Groups one RGB image (row-major) by the dominant color of its non-lesion pixels.
pub fn assign_tone(
    rgb: &[[u8; 3]],
    lesion: &BinaryMask,
    k_range: RangeInclusive<usize>,
    seed: u64,
) -> Result<ToneAssignment> {
    let (w, h) = lesion.dims();
    if rgb.len() != w * h {
        return Err(Error::ShapeMismatch((rgb.len(), 1), (w * h, 1)));
    }
    let skin: Vec<LabColor> = rgb
        .iter()
        .enumerate()
        .filter(|(i, _)| !lesion.get(i % w, i / w))
        .map(|(_, &px)| rgb_to_lab(px))
        .collect();
    let dominant = dominant_color(&skin, k_range, seed)?;
    let angle = ita(dominant.color)?;
    Ok(ToneAssignment {
        group: classify(angle),
        ita: angle,
        dominant,
    })
}
