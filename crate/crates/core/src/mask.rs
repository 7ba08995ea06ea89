//! Binary masks and the morphology used to simulate and localize label bias.
//!
//! Structuring elements are discrete Euclidean disks. Pixels outside the
//! frame count as background for both erosion and dilation, so erosion clears
//! a band along the frame and dilation never grows past it.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;

use crate::error::{Error, Result};

/// Row-major binary label field, `0` = background, `1` = foreground.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl BinaryMask {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; width * height],
        }
    }

    pub fn ones(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![1; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::InvalidMask(alloc::format!(
                "expected {} values for {width}x{height}, got {}",
                width * height,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|&&v| v > 1) {
            return Err(Error::InvalidMask(alloc::format!("value {v} is not 0 or 1")));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y) as u8);
            }
        }
        Self {
            width,
            height,
            data,
        }
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x] != 0
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.data[y * self.width + x] = value as u8;
    }

    /// Number of foreground pixels.
    pub fn count(&self) -> usize {
        self.data.iter().map(|&v| v as usize).sum()
    }

    pub fn is_degenerate(&self) -> bool {
        let fg = self.count();
        fg == 0 || fg == self.data.len()
    }

    pub fn complement(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| 1 - v).collect(),
        }
    }

    /// Pixels set in `self` but not in `other`.
    pub fn difference(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dims(), other.dims());
        Self {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a & (1 - b))
                .collect(),
        }
    }

    pub fn intersection_count(&self, other: &Self) -> usize {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a & b) as usize)
            .sum()
    }

    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.dims() == other.dims() && self.data.iter().zip(&other.data).all(|(&a, &b)| a <= b)
    }
}

/// Discrete Euclidean disk `{(dx, dy) : dx^2 + dy^2 <= r^2}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructuringElement {
    radius: usize,
    offsets: Vec<(isize, isize)>,
}

impl StructuringElement {
    pub fn disk(radius: usize) -> Self {
        let r = radius as isize;
        let mut offsets = Vec::new();
        for dy in -r..=r {
            for dx in -r..=r {
                if dx * dx + dy * dy <= r * r {
                    offsets.push((dx, dy));
                }
            }
        }
        Self { radius, offsets }
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn offsets(&self) -> &[(isize, isize)] {
        &self.offsets
    }

    /// Largest `dx` with `dx^2 + dy^2 <= r^2` for each row `dy = -r..=r`.
    fn row_half_widths(&self) -> Vec<usize> {
        let r = self.radius as isize;
        (-r..=r)
            .map(|dy| {
                let mut hw = 0isize;
                while (hw + 1) * (hw + 1) + dy * dy <= r * r {
                    hw += 1;
                }
                hw as usize
            })
            .collect()
    }
}

/// Per-row inclusive prefix counts: `p[y * (w + 1) + x]` = FG pixels in row `y`, columns `< x`.
fn row_prefix_counts(mask: &BinaryMask) -> Vec<u32> {
    let (w, h) = mask.dims();
    let mut prefix = vec![0u32; (w + 1) * h];
    for y in 0..h {
        let row = &mask.data[y * w..(y + 1) * w];
        let out = &mut prefix[y * (w + 1)..(y + 1) * (w + 1)];
        for x in 0..w {
            out[x + 1] = out[x] + row[x] as u32;
        }
    }
    prefix
}

/// Morphological erosion by a disk of radius `radius`; shrinks foreground.
pub fn erode(mask: &BinaryMask, radius: usize) -> BinaryMask {
    if radius == 0 {
        return mask.clone();
    }
    let (w, h) = mask.dims();
    let se = StructuringElement::disk(radius);
    let spans = se.row_half_widths();
    let prefix = row_prefix_counts(mask);
    let r = radius as isize;
    BinaryMask::from_fn(w, h, |x, y| {
        if !mask.get(x, y) {
            return false;
        }
        spans.iter().enumerate().all(|(i, &hw)| {
            let yy = y as isize + i as isize - r;
            if yy < 0 || yy >= h as isize || x < hw || x + hw >= w {
                return false;
            }
            let row = &prefix[yy as usize * (w + 1)..];
            (row[x + hw + 1] - row[x - hw]) as usize == 2 * hw + 1
        })
    })
}

/// Morphological dilation by a disk of radius `radius`; grows foreground.
pub fn dilate(mask: &BinaryMask, radius: usize) -> BinaryMask {
    if radius == 0 {
        return mask.clone();
    }
    let (w, h) = mask.dims();
    let se = StructuringElement::disk(radius);
    let spans = se.row_half_widths();
    let prefix = row_prefix_counts(mask);
    let r = radius as isize;
    BinaryMask::from_fn(w, h, |x, y| {
        if mask.get(x, y) {
            return true;
        }
        spans.iter().enumerate().any(|(i, &hw)| {
            let yy = y as isize + i as isize - r;
            if yy < 0 || yy >= h as isize {
                return false;
            }
            let lo = x.saturating_sub(hw);
            let hi = (x + hw).min(w - 1);
            let row = &prefix[yy as usize * (w + 1)..];
            row[hi + 1] > row[lo]
        })
    })
}

/// Morphological opening, `dilate(erode(mask))`.
pub fn open(mask: &BinaryMask, radius: usize) -> BinaryMask {
    dilate(&erode(mask, radius), radius)
}

/// Morphological gradient band `dilate(mask, w) \ erode(mask, w)`.
pub fn boundary_band(mask: &BinaryMask, width: usize) -> BinaryMask {
    dilate(mask, width).difference(&erode(mask, width))
}

/// Signed Euclidean distance between pixel centers, positive inside foreground.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl DistanceField {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }
}

const FAR: f64 = 1e20;

/// 1-D lower envelope of parabolas (Felzenszwalb & Huttenlocher).
fn edt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let qf = q as f64;
        let mut s;
        loop {
            let pf = v[k] as f64;
            s = ((f[q] + qf * qf) - (f[v[k]] + pf * pf)) / (2.0 * qf - 2.0 * pf);
            // z[0] is -inf, so k never underflows
            if s <= z[k] {
                k -= 1;
            } else {
                break;
            }
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for q in 0..n {
        let qf = q as f64;
        while z[k + 1] < qf {
            k += 1;
        }
        let d = qf - v[k] as f64;
        out[q] = d * d + f[v[k]];
    }
}

/// Squared distance from every pixel to the nearest pixel where `site` is true.
fn squared_distance_to(width: usize, height: usize, site: impl Fn(usize) -> bool) -> Vec<f64> {
    let mut grid: Vec<f64> = (0..width * height)
        .map(|i| if site(i) { 0.0 } else { FAR })
        .collect();
    let n = width.max(height);
    let mut f = vec![0.0; n];
    let mut out = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];
    for x in 0..width {
        for y in 0..height {
            f[y] = grid[y * width + x];
        }
        edt_1d(&f[..height], &mut out[..height], &mut v, &mut z);
        for y in 0..height {
            grid[y * width + x] = out[y];
        }
    }
    for y in 0..height {
        let row = &mut grid[y * width..(y + 1) * width];
        f[..width].copy_from_slice(row);
        edt_1d(&f[..width], &mut out[..width], &mut v, &mut z);
        row.copy_from_slice(&out[..width]);
    }
    grid
}

/// Signed distance field: `+d(p, BG)` on foreground, `-d(p, FG)` on background.
pub fn signed_distance(mask: &BinaryMask) -> Result<DistanceField> {
    if mask.is_degenerate() {
        return Err(Error::DegenerateMask);
    }
    let (w, h) = mask.dims();
    let to_bg = squared_distance_to(w, h, |i| mask.data[i] == 0);
    let to_fg = squared_distance_to(w, h, |i| mask.data[i] == 1);
    let values = mask
        .data
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            if m == 1 {
                libm::sqrt(to_bg[i])
            } else {
                -libm::sqrt(to_fg[i])
            }
        })
        .collect();
    Ok(DistanceField {
        width: w,
        height: h,
        values,
    })
}

/// One sinusoidal component of a harmonic boundary displacement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Harmonic {
    /// Angular frequency, radians per pixel.
    pub omega: f64,
    /// Orientation of the wave vector.
    pub alpha: f64,
    /// Phase offset.
    pub psi: f64,
}

impl Harmonic {
    /// Wavelengths between 16 and 64 pixels, uniform orientation and phase.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            omega: rng.random_range(2.0 * PI / 64.0..2.0 * PI / 16.0),
            alpha: rng.random_range(0.0..PI),
            psi: rng.random_range(0.0..2.0 * PI),
        }
    }
}

/// Displacement `d(p) = rho / H * sum_h sin(omega_h (x cos a_h + y sin a_h) + psi_h)`.
pub fn harmonic_displacement(harmonics: &[Harmonic], rho: f64, x: f64, y: f64) -> f64 {
    let sum: f64 = harmonics
        .iter()
        .map(|h| {
            libm::sin(h.omega * (x * libm::cos(h.alpha) + y * libm::sin(h.alpha)) + h.psi)
        })
        .sum();
    rho / harmonics.len() as f64 * sum
}

/// Harmonic boundary deformation: thresholds the signed distance field
/// against a random sinusoidal displacement of amplitude at most `rho`.
pub fn harmonic_deform<R: Rng + ?Sized>(
    mask: &BinaryMask,
    rho: f64,
    harmonics: usize,
    rng: &mut R,
) -> Result<BinaryMask> {
    if !(rho >= 0.0) || harmonics == 0 {
        return Err(Error::Config(alloc::format!(
            "harmonic deformation needs rho >= 0 and H >= 1 (got {rho}, {harmonics})"
        )));
    }
    let phi = signed_distance(mask)?;
    let params: Vec<Harmonic> = (0..harmonics).map(|_| Harmonic::sample(rng)).collect();
    Ok(deform_with(&phi, rho, &params))
}

/// Deterministic core of [`harmonic_deform`] for fixed harmonic parameters.
pub fn deform_with(phi: &DistanceField, rho: f64, harmonics: &[Harmonic]) -> BinaryMask {
    BinaryMask::from_fn(phi.width, phi.height, |x, y| {
        phi.get(x, y) > harmonic_displacement(harmonics, rho, x as f64, y as f64)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block_3x3_in_5x5() -> BinaryMask {
        BinaryMask::from_fn(5, 5, |x, y| (1..4).contains(&x) && (1..4).contains(&y))
    }

    #[test]
    fn disk_offsets() {
        assert_eq!(StructuringElement::disk(0).offsets(), &[(0, 0)]);
        assert_eq!(StructuringElement::disk(1).offsets().len(), 5);
        assert_eq!(StructuringElement::disk(2).offsets().len(), 13);
        let se = StructuringElement::disk(3);
        for &(dx, dy) in se.offsets() {
            assert!(se.offsets().contains(&(-dx, -dy)));
        }
    }

    #[test]
    fn erode_block_to_center() {
        let e = erode(&block_3x3_in_5x5(), 1);
        assert_eq!(e.count(), 1);
        assert!(e.get(2, 2));
    }

    #[test]
    fn dilate_point_to_plus() {
        let m = BinaryMask::from_fn(5, 5, |x, y| x == 2 && y == 2);
        let d = dilate(&m, 1);
        assert_eq!(d.count(), 5);
        for (x, y) in [(2, 2), (1, 2), (3, 2), (2, 1), (2, 3)] {
            assert!(d.get(x, y));
        }
    }

    #[test]
    fn band_of_block() {
        // 21-pixel dilation (plus-shaped SE) minus the 1-pixel erosion
        let b = boundary_band(&block_3x3_in_5x5(), 1);
        assert_eq!(dilate(&block_3x3_in_5x5(), 1).count(), 21);
        assert_eq!(b.count(), 20);
        assert!(!b.get(2, 2));
        assert_eq!(boundary_band(&BinaryMask::zeros(7, 7), 2).count(), 0);
    }

    #[test]
    fn all_ones_band_is_frame_ring() {
        let b = boundary_band(&BinaryMask::ones(6, 5), 1);
        let ring = BinaryMask::from_fn(6, 5, |x, y| x == 0 || y == 0 || x == 5 || y == 4);
        assert_eq!(b, ring);
    }

    #[test]
    fn radius_zero_is_identity() {
        let m = block_3x3_in_5x5();
        assert_eq!(erode(&m, 0), m);
        assert_eq!(dilate(&m, 0), m);
    }

    #[test]
    fn signed_distance_single_pixel() {
        let m = BinaryMask::from_fn(3, 3, |x, y| x == 1 && y == 1);
        let phi = signed_distance(&m).unwrap();
        assert_eq!(phi.get(1, 1), 1.0);
        assert_eq!(phi.get(0, 0), -libm::sqrt(2.0));
        assert_eq!(phi.get(1, 0), -1.0);
    }

    #[test]
    fn signed_distance_checkerboard() {
        let m = BinaryMask::from_vec(2, 2, alloc::vec![1, 0, 0, 1]).unwrap();
        let phi = signed_distance(&m).unwrap();
        assert_eq!(phi.values(), &[1.0, -1.0, -1.0, 1.0]);
    }

    #[test]
    fn signed_distance_rejects_degenerate() {
        assert_eq!(
            signed_distance(&BinaryMask::zeros(4, 4)),
            Err(Error::DegenerateMask)
        );
        assert_eq!(
            signed_distance(&BinaryMask::ones(4, 4)),
            Err(Error::DegenerateMask)
        );
    }

    #[test]
    fn from_vec_validates() {
        assert!(BinaryMask::from_vec(2, 2, alloc::vec![0, 1, 2, 0]).is_err());
        assert!(BinaryMask::from_vec(2, 2, alloc::vec![0, 1, 1]).is_err());
    }

    #[test]
    fn harmonic_zero_rho_is_identity() {
        let m = BinaryMask::from_fn(16, 16, |x, y| {
            let (dx, dy) = (x as f64 - 7.5, y as f64 - 7.5);
            dx * dx + dy * dy < 25.0
        });
        let mut rng = crate::rng::seeded(3);
        assert_eq!(harmonic_deform(&m, 0.0, 3, &mut rng).unwrap(), m);
    }
}
