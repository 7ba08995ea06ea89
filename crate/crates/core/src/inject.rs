//! Sample-level, group-conditional label corruption.

use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::mask::{dilate, erode, harmonic_deform, BinaryMask};
use crate::{rng, GroupId};

/// Harmonics used by the HBD operator.
pub const HBD_HARMONICS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum BiasOperator {
    Erosion,
    Dilation,
    Hbd,
}

impl BiasOperator {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Erosion => "erosion",
            Self::Dilation => "dilation",
            Self::Hbd => "hbd",
        }
    }

    /// Applies the operator with radius `r_d`; HBD uses amplitude `rho = r_d`.
    pub fn apply(self, mask: &BinaryMask, r_d: usize, seed: u64) -> Result<BinaryMask> {
        match self {
            Self::Erosion => Ok(erode(mask, r_d)),
            Self::Dilation => Ok(dilate(mask, r_d)),
            Self::Hbd => harmonic_deform(mask, r_d as f64, HBD_HARMONICS, &mut rng::seeded(seed)),
        }
    }
}

impl core::str::FromStr for BiasOperator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "erosion" => Ok(Self::Erosion),
            "dilation" => Ok(Self::Dilation),
            "hbd" => Ok(Self::Hbd),
            other => Err(Error::Config(alloc::format!("unknown bias operator `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct BiasSpec {
    pub target_group: GroupId,
    pub beta: f64,
    pub operator: BiasOperator,
    pub r_d: usize,
    pub seed: u64,
}

impl Default for BiasSpec {
    fn default() -> Self {
        Self {
            target_group: GroupId(1),
            beta: 0.5,
            operator: BiasOperator::Erosion,
            r_d: 3,
            seed: 0,
        }
    }
}

impl BiasSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::Config(alloc::format!(
                "beta must lie in [0, 1], got {}",
                self.beta
            )));
        }
        Ok(())
    }
}

/// A selected sample the operator could not be applied to.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SkippedSample {
    pub id: String,
    pub reason: String,
}

/// Exactly what an injection changed.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct InjectionRecord {
    pub target_group: GroupId,
    pub operator: BiasOperator,
    pub r_d: usize,
    pub beta: f64,
    pub seed: u64,
    /// Corrupted sample ids, in corpus order.
    pub corrupted: Vec<String>,
    pub skipped: Vec<SkippedSample>,
}

/// Corrupts exactly `round(beta * |target group|)` samples of the target group,
/// chosen uniformly without replacement by a seeded shuffle.
pub fn inject(corpus: &Corpus, spec: &BiasSpec) -> Result<(Corpus, InjectionRecord)> {
    spec.validate()?;
    let members: Vec<usize> = corpus
        .samples()
        .iter()
        .enumerate()
        .filter(|(_, s)| s.group() == spec.target_group)
        .map(|(i, _)| i)
        .collect();
    if members.is_empty() {
        return Err(Error::Config(alloc::format!(
            "target group {} is not present",
            spec.target_group
        )));
    }
    if members.iter().any(|&i| corpus.samples()[i].corrupted()) {
        return Err(Error::AlreadyBiased(spec.target_group));
    }

    let k = libm::round(spec.beta * members.len() as f64) as usize;
    let mut order = members.clone();
    order.shuffle(&mut rng::seeded(spec.seed));
    let mut selected: Vec<usize> = order.into_iter().take(k).collect();
    selected.sort_unstable();

    let mut out = corpus.clone();
    let mut record = InjectionRecord {
        target_group: spec.target_group,
        operator: spec.operator,
        r_d: spec.r_d,
        beta: spec.beta,
        seed: spec.seed,
        corrupted: Vec::with_capacity(k),
        skipped: Vec::new(),
    };
    for idx in selected {
        let sample = &mut out.samples_mut()[idx];
        let op_seed = rng::mix(spec.seed, idx as u64);
        match spec.operator.apply(sample.mask_obs(), spec.r_d, op_seed) {
            Ok(mask) => {
                record.corrupted.push(sample.id().into());
                sample.corrupt(mask);
            }
            Err(e) => record.skipped.push(SkippedSample {
                id: sample.id().into(),
                reason: alloc::format!("{e}"),
            }),
        }
    }
    Ok((out, record))
}
