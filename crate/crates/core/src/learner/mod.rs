//! Group-conditioned pixel segmenter trained with hand-derived gradients.
//!
//! Each pixel is described by its intensity patch and normalized position.
//! A hidden ReLU layer is modulated per group (`h' = gamma_g * h + beta_g`)
//! before a logistic readout.

mod grad;
mod loss;
mod model;
mod penalty;
mod train;

pub use grad::{loss_and_grad, BatchItem, LossAndGrad, Objective};
pub use loss::{asym_weights, seg_loss, DICE_EPS};
pub use model::{
    feat_dim, forward, gap_features, image_features, pixel_features, predict, LearnerModel, ProbMap,
};
pub use penalty::{penalty, PenaltyImage, PenaltyValue, MMD_LOGIT_SUBSAMPLE};
pub use train::{
    auto_condition_train, lambda_at, train, Adam, Discovery, HistoryRow, Phase, TrainOutput,
    LOW_CONFIDENCE_GAP, TIE_TOLERANCE,
};

use crate::error::{Error, Result};
use crate::GroupId;

/// How annotation bias is countered during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Mitigation {
    #[default]
    None,
    /// Trainable per-group modulation, inference forced to the clean group.
    Conditioned,
    /// Boundary band of biased-group samples excluded from the loss.
    AsymMask,
    /// Both of the above.
    Combined,
    /// Combined, with the clean group discovered after a warm-up.
    Auto,
}

impl Mitigation {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Conditioned => "conditioned",
            Self::AsymMask => "asym_mask",
            Self::Combined => "combined",
            Self::Auto => "auto",
        }
    }

    pub fn trains_film(self) -> bool {
        matches!(self, Self::Conditioned | Self::Combined | Self::Auto)
    }

    pub fn masks_boundary(self) -> bool {
        matches!(self, Self::AsymMask | Self::Combined)
    }
}

impl core::str::FromStr for Mitigation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "none" => Self::None,
            "conditioned" => Self::Conditioned,
            "asym_mask" => Self::AsymMask,
            "combined" => Self::Combined,
            "auto" => Self::Auto,
            other => return Err(Error::Config(alloc::format!("unknown mitigation `{other}`"))),
        })
    }
}

/// Fairness regularizer added to the segmentation loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum PenaltyKind {
    #[default]
    #[cfg_attr(feature = "serde", serde(rename = "none"))]
    None,
    /// Gap in mean foreground probability between groups.
    #[cfg_attr(feature = "serde", serde(rename = "dp"))]
    Dp,
    /// Gaps in soft true- and false-positive rates.
    #[cfg_attr(feature = "serde", serde(rename = "eo"))]
    Eo,
    #[cfg_attr(feature = "serde", serde(rename = "dp+eo"))]
    DpEo,
    /// MMD between per-class pixel logits.
    #[cfg_attr(feature = "serde", serde(rename = "mmd_logit"))]
    MmdLogit,
    /// Distance between per-group covariances of hidden activations.
    #[cfg_attr(feature = "serde", serde(rename = "coral"))]
    Coral,
    /// MMD between pooled image features.
    #[cfg_attr(feature = "serde", serde(rename = "mmd_feature"))]
    MmdFeature,
}

impl PenaltyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Dp => "dp",
            Self::Eo => "eo",
            Self::DpEo => "dp+eo",
            Self::MmdLogit => "mmd_logit",
            Self::Coral => "coral",
            Self::MmdFeature => "mmd_feature",
        }
    }
}

impl core::str::FromStr for PenaltyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "none" => Self::None,
            "dp" => Self::Dp,
            "eo" => Self::Eo,
            "dp+eo" => Self::DpEo,
            "mmd_logit" => Self::MmdLogit,
            "coral" => Self::Coral,
            "mmd_feature" => Self::MmdFeature,
            other => return Err(Error::Config(alloc::format!("unknown penalty `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TrainConfig {
    pub epochs: usize,
    pub warmup_epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub boundary_width: usize,
    pub mitigation: Mitigation,
    pub penalty: PenaltyKind,
    /// Final penalty weight, reached linearly over the first half of training.
    pub lambda: f64,
    pub dice_weight: f64,
    pub hidden_dim: usize,
    pub patch_radius: usize,
    /// Group whose annotations are known to be biased. Required by the
    /// conditioned, asym_mask and combined modes.
    pub biased_group: Option<GroupId>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            warmup_epochs: 5,
            learning_rate: 0.03,
            batch_size: 8,
            boundary_width: 2,
            mitigation: Mitigation::None,
            penalty: PenaltyKind::None,
            lambda: 0.1,
            dice_weight: 1.0,
            hidden_dim: 16,
            patch_radius: 4,
            biased_group: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(msg.into()));
        if self.epochs == 0 {
            return fail("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1");
        }
        if self.hidden_dim == 0 {
            return fail("hidden_dim must be at least 1");
        }
        if self.boundary_width == 0 {
            return fail("boundary_width must be at least 1");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return fail("learning_rate must be positive");
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return fail("lambda must be non-negative");
        }
        if !(self.dice_weight.is_finite() && self.dice_weight >= 0.0) {
            return fail("dice_weight must be non-negative");
        }
        if self.mitigation == Mitigation::Auto
            && (self.warmup_epochs == 0 || self.warmup_epochs >= self.epochs)
        {
            return fail("auto mitigation needs 1 <= warmup_epochs < epochs");
        }
        if matches!(
            self.mitigation,
            Mitigation::Conditioned | Mitigation::AsymMask | Mitigation::Combined
        ) && self.biased_group.is_none()
        {
            return fail("this mitigation needs biased_group");
        }
        Ok(())
    }
}
