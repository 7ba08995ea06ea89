//! Overlap metrics and per-group segmentation gaps.

use alloc::vec::Vec;

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::learner::{predict, LearnerModel};
use crate::mask::BinaryMask;
use crate::GroupId;

fn overlap(a: &BinaryMask, b: &BinaryMask) -> Result<(usize, usize, usize)> {
    if a.dims() != b.dims() {
        return Err(Error::ShapeMismatch(a.dims(), b.dims()));
    }
    Ok((a.intersection_count(b), a.count(), b.count()))
}

/// `2 |a ∩ b| / (|a| + |b|)`; two empty masks score 1.
pub fn dice(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    let (i, na, nb) = overlap(a, b)?;
    Ok(if na + nb == 0 {
        1.0
    } else {
        2.0 * i as f64 / (na + nb) as f64
    })
}

/// `|a ∩ b| / |a ∪ b|`; two empty masks score 1.
pub fn iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    let (i, na, nb) = overlap(a, b)?;
    let union = na + nb - i;
    Ok(if union == 0 { 1.0 } else { i as f64 / union as f64 })
}

/// Which masks predictions are scored against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Reference {
    Observed,
    /// Pre-corruption masks for corrupted samples, observed masks otherwise.
    Clean,
}

impl Reference {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Observed => "observed",
            Self::Clean => "clean",
        }
    }
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, libm::sqrt(var))
}

/// Dice and IoU in percent for one group.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GroupScores {
    pub group: GroupId,
    pub n: usize,
    pub dice_mean: f64,
    pub dice_std: f64,
    pub iou_mean: f64,
    pub iou_std: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalReport {
    pub reference: Reference,
    pub clean_group: GroupId,
    pub biased_group: GroupId,
    pub clean: GroupScores,
    pub biased: GroupScores,
    /// `mean(clean) - mean(biased)`, in points.
    pub delta_dice: f64,
    pub delta_iou: f64,
    /// Single-run reports carry 1 and per-sample spreads; aggregates carry
    /// the number of runs and spreads across runs.
    pub n_seeds: usize,
}

impl EvalReport {
    fn from_groups(reference: Reference, clean: GroupScores, biased: GroupScores, n_seeds: usize) -> Self {
        Self {
            reference,
            clean_group: clean.group,
            biased_group: biased.group,
            delta_dice: clean.dice_mean - biased.dice_mean,
            delta_iou: clean.iou_mean - biased.iou_mean,
            clean,
            biased,
            n_seeds,
        }
    }
}

fn reference_mask(corpus: &Corpus, i: usize, reference: Reference) -> Result<&BinaryMask> {
    let s = &corpus.samples()[i];
    match reference {
        Reference::Observed => Ok(s.mask_obs()),
        Reference::Clean if s.corrupted() => s
            .mask_clean()
            .ok_or_else(|| Error::MissingCleanMask(s.id().into())),
        Reference::Clean => Ok(s.mask_obs()),
    }
}

/// Scores predicted masks (one per sample, corpus order).
pub fn evaluate_masks(predictions: &[BinaryMask], corpus: &Corpus, reference: Reference) -> Result<EvalReport> {
    if predictions.len() != corpus.len() {
        return Err(Error::ShapeMismatch((predictions.len(), 1), (corpus.len(), 1)));
    }
    let groups = [corpus.clean_group(), corpus.biased_group()];
    let mut d: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    let mut j: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    for (i, pred) in predictions.iter().enumerate() {
        let truth = reference_mask(corpus, i, reference)?;
        let gi = usize::from(corpus.samples()[i].group() != groups[0]);
        d[gi].push(100.0 * dice(pred, truth)?);
        j[gi].push(100.0 * iou(pred, truth)?);
    }
    let scores = |gi: usize| {
        let (dm, ds) = mean_std(&d[gi]);
        let (im, is) = mean_std(&j[gi]);
        GroupScores {
            group: groups[gi],
            n: d[gi].len(),
            dice_mean: dm,
            dice_std: ds,
            iou_mean: im,
            iou_std: is,
        }
    };
    Ok(EvalReport::from_groups(reference, scores(0), scores(1), 1))
}

/// Thresholds model predictions at 0.5 and scores them. Modulation uses
/// `force_group` when given, each sample's own group otherwise.
pub fn evaluate_model(
    model: &LearnerModel,
    corpus: &Corpus,
    reference: Reference,
    force_group: Option<GroupId>,
) -> Result<EvalReport> {
    let preds = predict_masks(model, corpus, force_group)?;
    evaluate_masks(&preds, corpus, reference)
}

pub fn predict_masks(model: &LearnerModel, corpus: &Corpus, force_group: Option<GroupId>) -> Result<Vec<BinaryMask>> {
    corpus
        .samples()
        .iter()
        .map(|s| Ok(predict(model, s.image(), force_group.unwrap_or(s.group()))?.threshold()))
        .collect()
}

/// Combines single-run reports: means of per-run means, spreads across runs.
pub fn aggregate(reports: &[EvalReport]) -> Result<EvalReport> {
    let first = reports
        .first()
        .ok_or_else(|| Error::Config("nothing to aggregate".into()))?;
    if reports
        .iter()
        .any(|r| r.reference != first.reference || r.clean_group != first.clean_group)
    {
        return Err(Error::Config("reports disagree on reference or groups".into()));
    }
    let combine = |pick: fn(&EvalReport) -> &GroupScores| {
        let dm: Vec<f64> = reports.iter().map(|r| pick(r).dice_mean).collect();
        let im: Vec<f64> = reports.iter().map(|r| pick(r).iou_mean).collect();
        let (dice_mean, dice_std) = mean_std(&dm);
        let (iou_mean, iou_std) = mean_std(&im);
        GroupScores {
            group: pick(first).group,
            n: pick(first).n,
            dice_mean,
            dice_std,
            iou_mean,
            iou_std,
        }
    };
    Ok(EvalReport::from_groups(
        first.reference,
        combine(|r| &r.clean),
        combine(|r| &r.biased),
        reports.len(),
    ))
}
