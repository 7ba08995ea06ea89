//! Tests that separate group-dependent label bias from uniform noise.

use crate::audit::JointDistribution;
use crate::error::{Error, Result};

/// Error-type counts for the clean (row 0) and biased (row 1) group.
/// Columns: omissions, commissions, correct pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ErrorContingency {
    pub rows: [[u64; 3]; 2],
}

impl ErrorContingency {
    pub fn from_joint(clean: &JointDistribution, biased: &JointDistribution) -> Self {
        let row = |j: &JointDistribution| {
            let om = j.counts[0][1];
            let co = j.counts[1][0];
            [om, co, j.total - om - co]
        };
        Self {
            rows: [row(clean), row(biased)],
        }
    }

    pub fn total(&self, row: usize) -> u64 {
        self.rows[row].iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ChiSquare {
    pub chi2: f64,
    pub df: u32,
    pub p_value: f64,
}

/// Pearson chi-square test of independence on the 2x3 table. With two
/// degrees of freedom the survival function is `exp(-chi2 / 2)`.
pub fn chi_square(table: &ErrorContingency) -> Result<ChiSquare> {
    let row_tot = [table.total(0) as f64, table.total(1) as f64];
    let n = row_tot[0] + row_tot[1];
    let mut chi2 = 0.0;
    for c in 0..3 {
        let col = (table.rows[0][c] + table.rows[1][c]) as f64;
        for r in 0..2 {
            let e = row_tot[r] * col / n;
            if !(e > 0.0) {
                return Err(Error::ExpectedZero);
            }
            let d = table.rows[r][c] as f64 - e;
            chi2 += d * d / e;
        }
    }
    Ok(ChiSquare {
        chi2,
        df: 2,
        p_value: libm::exp(-chi2 / 2.0),
    })
}

/// `ln((rate_b + eps) / (rate_c + eps))`.
pub fn log_relative_risk(rate_b: f64, rate_c: f64, eps: f64) -> f64 {
    libm::log((rate_b + eps) / (rate_c + eps))
}

/// Smoothing `1 / (2 min(N_c, N_b))`, half a pixel at rate scale.
pub fn rr_smoothing(pixels_c: u64, pixels_b: u64) -> f64 {
    1.0 / (2.0 * pixels_c.min(pixels_b) as f64)
}

/// `1 - 2 |n_b / (n_b + n_c) - N_b / (N_b + N_c)|`, undefined without errors.
pub fn symmetry_component(n_c: u64, n_b: u64, pixels_c: u64, pixels_b: u64) -> Option<f64> {
    let errors = n_b + n_c;
    if errors == 0 {
        return None;
    }
    let err_share = n_b as f64 / errors as f64;
    let pix_share = pixels_b as f64 / (pixels_b + pixels_c) as f64;
    Some(1.0 - 2.0 * libm::fabs(err_share - pix_share))
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Symmetry {
    pub s_om: Option<f64>,
    pub s_co: Option<f64>,
    pub s: f64,
}

pub fn symmetry_score(table: &ErrorContingency) -> Result<Symmetry> {
    let (pc, pb) = (table.total(0), table.total(1));
    let s_om = symmetry_component(table.rows[0][0], table.rows[1][0], pc, pb);
    let s_co = symmetry_component(table.rows[0][1], table.rows[1][1], pc, pb);
    let s = match (s_om, s_co) {
        (Some(a), Some(b)) => a.min(b),
        (Some(a), None) | (None, Some(a)) => a,
        (None, None) => return Err(Error::NoErrors),
    };
    Ok(Symmetry { s_om, s_co, s })
}

/// Summary statistics for one audit. Undefined quantities are `None`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BiasIndicators {
    pub chi2: Option<f64>,
    pub df: u32,
    pub p_value: Option<f64>,
    #[cfg_attr(feature = "serde", serde(rename = "significant_at_0.05"))]
    pub significant: bool,
    pub rr_om: f64,
    pub rr_co: f64,
    pub s_om: Option<f64>,
    pub s_co: Option<f64>,
    pub s: Option<f64>,
}

impl BiasIndicators {
    pub fn compute(table: &ErrorContingency) -> Self {
        let chi = chi_square(table).ok();
        let (pc, pb) = (table.total(0), table.total(1));
        let eps = rr_smoothing(pc, pb);
        let rate = |r: usize, c: usize| {
            let t = table.total(r);
            if t == 0 {
                0.0
            } else {
                table.rows[r][c] as f64 / t as f64
            }
        };
        let sym = symmetry_score(table).ok();
        Self {
            chi2: chi.map(|c| c.chi2),
            df: 2,
            p_value: chi.map(|c| c.p_value),
            significant: chi.is_some_and(|c| c.p_value < 0.05),
            rr_om: log_relative_risk(rate(1, 0), rate(0, 0), eps),
            rr_co: log_relative_risk(rate(1, 1), rate(0, 1), eps),
            s_om: sym.and_then(|s| s.s_om),
            s_co: sym.and_then(|s| s.s_co),
            s: sym.map(|s| s.s),
        }
    }
}
