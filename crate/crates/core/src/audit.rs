//! Confident-learning label audit for binary segmentation.
//!
//! Out-of-fold probabilities come from unconditioned models trained on the
//! other folds. Per-class thresholds are the mean self-confidence of each
//! observed class over the whole corpus, and each pixel's confident label is
//! compared with its observed label to fill a 2x2 joint distribution.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::corpus::LabeledSample;
use crate::error::{Error, Result};
use crate::learner::{self, LearnerModel, Mitigation, PenaltyKind, ProbMap, TrainConfig};
use crate::mask::BinaryMask;
use crate::{rng, GroupId};

pub const DEFAULT_FOLDS: usize = 5;

/// Assignment of samples to cross-validation folds.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    /// Fold index of each sample, in corpus order.
    pub assignment: Vec<usize>,
}

impl FoldPlan {
    /// Shuffles each group separately, then deals the concatenated order
    /// round-robin, so folds keep the group ratio and differ in size by at most one.
    pub fn stratified(groups: &[GroupId], k: usize, seed: u64) -> Result<Self> {
        if k < 2 {
            return Err(Error::Config(alloc::format!("need at least 2 folds, got {k}")));
        }
        if groups.len() < k {
            return Err(Error::Config(alloc::format!(
                "{} samples cannot fill {k} folds",
                groups.len()
            )));
        }
        let mut ids: Vec<GroupId> = groups.to_vec();
        ids.sort_unstable();
        ids.dedup();
        let mut order = Vec::with_capacity(groups.len());
        let mut r = rng::seeded(seed);
        for g in ids {
            let mut members: Vec<usize> = (0..groups.len()).filter(|&i| groups[i] == g).collect();
            members.shuffle(&mut r);
            order.extend(members);
        }
        let mut assignment = vec![0; groups.len()];
        for (pos, &i) in order.iter().enumerate() {
            assignment[i] = pos % k;
        }
        Ok(Self { k, seed, assignment })
    }

    pub fn held_out(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] == fold).collect()
    }

    pub fn training(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] != fold).collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignment {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Configuration of the audit model: the given one with modulation,
/// boundary masking and penalties switched off.
pub fn audit_train_config(base: &TrainConfig, fold: usize) -> TrainConfig {
    TrainConfig {
        mitigation: Mitigation::None,
        penalty: PenaltyKind::None,
        biased_group: None,
        seed: rng::mix(base.seed, fold as u64),
        ..base.clone()
    }
}

/// Trains on every fold but `fold` and predicts the held-out samples.
///
/// Returns `(sample index, probabilities)` pairs in corpus order.
pub fn train_fold(
    samples: &[LabeledSample<'_>],
    plan: &FoldPlan,
    fold: usize,
    config: &TrainConfig,
) -> Result<Vec<(usize, ProbMap)>> {
    let train_idx = plan.training(fold);
    let mut all_groups: Vec<GroupId> = samples.iter().map(|s| s.group).collect();
    all_groups.sort_unstable();
    all_groups.dedup();
    let train_set: Vec<LabeledSample<'_>> = train_idx.iter().map(|&i| samples[i]).collect();
    let mut seen: Vec<GroupId> = train_set.iter().map(|s| s.group).collect();
    seen.sort_unstable();
    seen.dedup();
    if seen != all_groups {
        return Err(Error::FoldDegenerate {
            fold,
            reason: "training split misses a group".into(),
        });
    }
    let fg: usize = train_set.iter().map(|s| s.mask.count()).sum();
    let total: usize = train_set.iter().map(|s| s.mask.len()).sum();
    if fg == 0 || fg == total {
        return Err(Error::FoldDegenerate {
            fold,
            reason: "training split misses a class".into(),
        });
    }
    let out = learner::train(&train_set, &audit_train_config(config, fold))?;
    plan.held_out(fold)
        .into_iter()
        .map(|i| {
            let s = &samples[i];
            Ok((i, unconditioned_probs(&out.model, s)?))
        })
        .collect()
}

fn unconditioned_probs(model: &LearnerModel, s: &LabeledSample<'_>) -> Result<ProbMap> {
    // modulation is frozen at identity, so any group gives the same output
    learner::predict(model, s.image, s.group)
}

/// Out-of-fold probabilities for every sample.
pub fn crossval_probs(samples: &[LabeledSample<'_>], plan: &FoldPlan, config: &TrainConfig) -> Result<Vec<ProbMap>> {
    let mut slots: Vec<Option<ProbMap>> = vec![None; samples.len()];
    for fold in 0..plan.k {
        for (i, p) in train_fold(samples, plan, fold, config)? {
            slots[i] = Some(p);
        }
    }
    Ok(slots.into_iter().map(|p| p.expect("every sample is held out once")).collect())
}

/// Per-class confidence thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Thresholds {
    pub t_bg: f64,
    pub t_fg: f64,
}

/// `t_j` = mean `P(j)` over all pixels observed as class `j`, across the corpus.
pub fn class_thresholds(probs: &[ProbMap], observed: &[&BinaryMask]) -> Result<Thresholds> {
    if probs.len() != observed.len() {
        return Err(Error::ShapeMismatch((probs.len(), 1), (observed.len(), 1)));
    }
    let mut sum = [0.0; 2];
    let mut count = [0u64; 2];
    for (p, m) in probs.iter().zip(observed) {
        if p.dims() != m.dims() {
            return Err(Error::ShapeMismatch(p.dims(), m.dims()));
        }
        for (&q, &y) in p.as_slice().iter().zip(m.as_slice()) {
            if y == 1 {
                sum[1] += q;
                count[1] += 1;
            } else {
                sum[0] += 1.0 - q;
                count[0] += 1;
            }
        }
    }
    for class in 0..2 {
        if count[class] == 0 {
            return Err(Error::EmptyClass(class as u8));
        }
    }
    let t = Thresholds {
        t_bg: sum[0] / count[0] as f64,
        t_fg: sum[1] / count[1] as f64,
    };
    if !(t.t_bg > 0.0 && t.t_fg > 0.0) {
        return Err(Error::Config("a class threshold is zero".into()));
    }
    Ok(t)
}

/// Confident label of one pixel; ties go to background.
#[inline]
pub fn confident_label(p_fg: f64, t: &Thresholds) -> bool {
    let r_bg = (1.0 - p_fg) / t.t_bg;
    let r_fg = p_fg / t.t_fg;
    if r_bg.max(r_fg) >= 1.0 {
        r_fg > r_bg
    } else {
        p_fg > 1.0 - p_fg
    }
}

pub fn confident_labels(probs: &ProbMap, t: &Thresholds) -> BinaryMask {
    let data = probs
        .as_slice()
        .iter()
        .map(|&p| u8::from(confident_label(p, t)))
        .collect();
    BinaryMask::from_vec(probs.width(), probs.height(), data).expect("binary by construction")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Scope {
    Global,
    Group(GroupId),
}

/// Joint counts of (observed, confident) labels.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct JointDistribution {
    pub scope: Scope,
    /// `counts[observed][confident]`.
    pub counts: [[u64; 2]; 2],
    pub total: u64,
    pub q: [[f64; 2]; 2],
}

impl JointDistribution {
    pub fn from_counts(scope: Scope, counts: [[u64; 2]; 2]) -> Self {
        let total = counts.iter().flatten().sum::<u64>();
        let mut q = [[0.0; 2]; 2];
        if total > 0 {
            for a in 0..2 {
                for b in 0..2 {
                    q[a][b] = counts[a][b] as f64 / total as f64;
                }
            }
        }
        Self {
            scope,
            counts,
            total,
            q,
        }
    }
}

/// Counts `(observed, confident)` pairs of one mask pair.
pub fn count_pairs(observed: &BinaryMask, confident: &BinaryMask) -> Result<[[u64; 2]; 2]> {
    if observed.dims() != confident.dims() {
        return Err(Error::ShapeMismatch(observed.dims(), confident.dims()));
    }
    let mut c = [[0u64; 2]; 2];
    for (&o, &p) in observed.as_slice().iter().zip(confident.as_slice()) {
        c[o as usize][p as usize] += 1;
    }
    Ok(c)
}

/// Global and per-group joint distributions, groups in ascending id order.
pub fn joint_distribution(
    observed: &[&BinaryMask],
    confident: &[BinaryMask],
    groups: &[GroupId],
) -> Result<(JointDistribution, Vec<JointDistribution>)> {
    if observed.len() != confident.len() || observed.len() != groups.len() {
        return Err(Error::ShapeMismatch((observed.len(), 1), (confident.len(), 1)));
    }
    let mut ids: Vec<GroupId> = groups.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let mut global = [[0u64; 2]; 2];
    let mut per = vec![[[0u64; 2]; 2]; ids.len()];
    for ((o, c), g) in observed.iter().zip(confident).zip(groups) {
        let counts = count_pairs(o, c)?;
        let gi = ids.binary_search(g).expect("collected above");
        for a in 0..2 {
            for b in 0..2 {
                global[a][b] += counts[a][b];
                per[gi][a][b] += counts[a][b];
            }
        }
    }
    Ok((
        JointDistribution::from_counts(Scope::Global, global),
        ids.iter()
            .zip(per)
            .map(|(&g, c)| JointDistribution::from_counts(Scope::Group(g), c))
            .collect(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ErrorRates {
    /// Observed background, confidently foreground.
    pub omission: f64,
    /// Observed foreground, confidently background.
    pub commission: f64,
    pub error: f64,
}

pub fn error_rates(q: &JointDistribution) -> ErrorRates {
    let omission = q.q[0][1];
    let commission = q.q[1][0];
    ErrorRates {
        omission,
        commission,
        error: omission + commission,
    }
}

/// Everything an audit produces.
#[derive(Debug, Clone, PartialEq)]
pub struct Audit {
    pub plan: FoldPlan,
    pub thresholds: Thresholds,
    pub probs: Vec<ProbMap>,
    pub confident: Vec<BinaryMask>,
    pub global: JointDistribution,
    pub per_group: Vec<JointDistribution>,
}

impl Audit {
    pub fn group(&self, g: GroupId) -> Option<&JointDistribution> {
        self.per_group.iter().find(|j| j.scope == Scope::Group(g))
    }

    /// Pixels where the confident label disagrees with the observed one.
    pub fn error_masks(&self, observed: &[&BinaryMask]) -> Vec<BinaryMask> {
        observed
            .iter()
            .zip(&self.confident)
            .map(|(o, c)| {
                let data = o.as_slice().iter().zip(c.as_slice()).map(|(a, b)| a ^ b).collect();
                BinaryMask::from_vec(o.width(), o.height(), data).expect("binary")
            })
            .collect()
    }
}

/// Completes an audit from out-of-fold probabilities.
pub fn audit_from_probs(samples: &[LabeledSample<'_>], plan: FoldPlan, probs: Vec<ProbMap>) -> Result<Audit> {
    let observed: Vec<&BinaryMask> = samples.iter().map(|s| s.mask).collect();
    let groups: Vec<GroupId> = samples.iter().map(|s| s.group).collect();
    let thresholds = class_thresholds(&probs, &observed)?;
    let confident: Vec<BinaryMask> = probs.iter().map(|p| confident_labels(p, &thresholds)).collect();
    let (global, per_group) = joint_distribution(&observed, &confident, &groups)?;
    Ok(Audit {
        plan,
        thresholds,
        probs,
        confident,
        global,
        per_group,
    })
}

/// Full audit: stratified folds, out-of-fold training, thresholds, joint counts.
pub fn audit(samples: &[LabeledSample<'_>], k: usize, config: &TrainConfig) -> Result<Audit> {
    let groups: Vec<GroupId> = samples.iter().map(|s| s.group).collect();
    let plan = FoldPlan::stratified(&groups, k, config.seed)?;
    let probs = crossval_probs(samples, &plan, config)?;
    audit_from_probs(samples, plan, probs)
}
