//! Synthetic testbed for group-conditional annotation bias in binary
//! segmentation.
//!
//! The crate generates paired image/mask corpora, corrupts the masks of one
//! group, trains a small group-conditioned pixel classifier, audits label
//! errors with out-of-fold confident learning, and measures how the bias
//! shows up in error statistics, feature separability and segmentation
//! scores. Everything here is `no_std` with `alloc`; file formats and the
//! command line live in the companion `segbias` crate.

#![no_std]

extern crate alloc;

pub mod audit;
pub mod bias;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod image;
pub mod inject;
pub mod kernel;
pub mod learner;
pub mod mask;
pub mod rng;
pub mod separability;
pub mod tone;

pub use error::{Error, Result};

/// Identifier of a demographic group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(transparent))]
pub struct GroupId(pub u32);

impl core::fmt::Display for GroupId {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{}", self.0)
    }
}
