use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::corpus::LabeledSample;
use crate::error::{Error, Result};
use crate::{rng, GroupId};

use super::grad::{loss_and_grad, BatchItem, Objective};
use super::loss::asym_weights;
use super::model::LearnerModel;
use super::{Mitigation, TrainConfig};

/// Mean warm-up losses closer than this are a tie; the lower group id wins.
pub const TIE_TOLERANCE: f64 = 1e-9;
/// Discoveries decided by less than this gap are flagged low-confidence.
pub const LOW_CONFIDENCE_GAP: f64 = 1e-3;

const INIT_STREAM: u64 = u64::MAX - 1;

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(n_params: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - libm::pow(self.beta1, self.t as f64);
        let c2 = 1.0 - libm::pow(self.beta2, self.t as f64);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= self.lr * mh / (libm::sqrt(vh) + self.eps);
        }
    }
}

/// Penalty weight at optimizer step `step` of `total`: linear from zero to
/// `lambda` over the first half of training, constant afterwards.
pub fn lambda_at(step: usize, total: usize, lambda: f64) -> f64 {
    let half = total as f64 / 2.0;
    if half <= 0.0 {
        return lambda;
    }
    lambda * (step as f64 / half).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Phase {
    Warmup,
    Main,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Warmup => "warmup",
            Self::Main => "main",
        }
    }
}

/// Mean per-sample training loss of one group in one epoch (1-based).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HistoryRow {
    pub epoch: usize,
    pub group: GroupId,
    pub mean_loss: f64,
    pub phase: Phase,
}

/// Outcome of clean-group discovery after warm-up.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Discovery {
    pub clean_group: GroupId,
    pub biased_group: GroupId,
    /// Mean warm-up loss per group, ascending id.
    pub mean_losses: Vec<(GroupId, f64)>,
    pub low_confidence: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutput {
    pub model: LearnerModel,
    pub history: Vec<HistoryRow>,
    pub discovery: Option<Discovery>,
    /// Group inference should be conditioned on, when modulation was trained.
    pub inference_group: Option<GroupId>,
    /// Optimizer steps whose batch held a single group (penalty skipped).
    pub single_group_steps: usize,
}

struct Trainer<'s, 'a> {
    samples: &'s [LabeledSample<'a>],
    config: &'s TrainConfig,
    groups: Vec<GroupId>,
    model: LearnerModel,
    adam: Adam,
    step: usize,
    total_steps: usize,
    history: Vec<HistoryRow>,
    single_group_steps: usize,
}

impl<'s, 'a> Trainer<'s, 'a> {
    fn new(samples: &'s [LabeledSample<'a>], config: &'s TrainConfig) -> Result<Self> {
        config.validate()?;
        if samples.is_empty() {
            return Err(Error::Config("training needs at least one sample".into()));
        }
        let dims = samples[0].image.dims();
        for s in samples {
            if s.image.dims() != dims || s.mask.dims() != dims {
                return Err(Error::DimensionMismatch {
                    id: s.id.into(),
                    expected: dims,
                    found: if s.image.dims() != dims { s.image.dims() } else { s.mask.dims() },
                });
            }
        }
        let mut groups: Vec<GroupId> = samples.iter().map(|s| s.group).collect();
        groups.sort_unstable();
        groups.dedup();
        if let Some(g) = config.biased_group {
            if groups.binary_search(&g).is_err() {
                return Err(Error::UnknownGroup(g));
            }
        }
        let model = LearnerModel::init(
            config.hidden_dim,
            config.patch_radius,
            &groups,
            &mut rng::substream(config.seed, INIT_STREAM),
        );
        let steps_per_epoch = samples.len().div_ceil(config.batch_size);
        Ok(Self {
            samples,
            config,
            adam: Adam::new(model.params().len(), config.learning_rate),
            groups,
            model,
            step: 0,
            total_steps: steps_per_epoch * config.epochs,
            history: Vec::new(),
            single_group_steps: 0,
        })
    }

    fn weights_for(&self, biased: Option<GroupId>) -> Vec<Option<Vec<f64>>> {
        self.samples
            .iter()
            .map(|s| match biased {
                Some(b) if s.group == b => Some(asym_weights(s.mask, s.group, b, self.config.boundary_width)),
                _ => None,
            })
            .collect()
    }

    /// Runs one epoch and returns per-group (sum, count) of sample losses.
    fn epoch(&mut self, epoch: usize, weights: &[Option<Vec<f64>>], train_film: bool) -> Result<Vec<(f64, usize)>> {
        let mut order: Vec<usize> = (0..self.samples.len()).collect();
        order.shuffle(&mut rng::substream(self.config.seed, epoch as u64));
        let mut acc = vec![(0.0, 0usize); self.groups.len()];
        let film = self.model.film_range();
        for chunk in order.chunks(self.config.batch_size) {
            let batch: Vec<BatchItem<'_>> = chunk
                .iter()
                .map(|&i| {
                    let s = &self.samples[i];
                    BatchItem {
                        image: s.image,
                        target: s.mask,
                        group: s.group,
                        condition: s.group,
                        weights: weights[i].as_deref(),
                    }
                })
                .collect();
            let objective = Objective {
                dice_weight: self.config.dice_weight,
                penalty: self.config.penalty,
                lambda: lambda_at(self.step, self.total_steps, self.config.lambda),
                penalty_seed: rng::mix(self.config.seed, self.step as u64),
            };
            let mut lg = loss_and_grad(&self.model, &batch, &objective)?;
            if lg.single_group && self.config.penalty != super::PenaltyKind::None {
                self.single_group_steps += 1;
            }
            if !train_film {
                lg.grad[film.clone()].fill(0.0);
            }
            self.adam.step(self.model.params_mut(), &lg.grad);
            self.step += 1;
            for (&i, &l) in chunk.iter().zip(&lg.per_sample) {
                let gi = self.groups.binary_search(&self.samples[i].group).expect("known group");
                acc[gi].0 += l;
                acc[gi].1 += 1;
            }
        }
        Ok(acc)
    }

    fn record(&mut self, epoch: usize, acc: &[(f64, usize)], phase: Phase) {
        for (g, &(sum, n)) in self.groups.iter().zip(acc) {
            if n > 0 {
                self.history.push(HistoryRow {
                    epoch: epoch + 1,
                    group: *g,
                    mean_loss: sum / n as f64,
                    phase,
                });
            }
        }
    }

    fn finish(self, discovery: Option<Discovery>, inference_group: Option<GroupId>) -> TrainOutput {
        TrainOutput {
            model: self.model,
            history: self.history,
            discovery,
            inference_group,
            single_group_steps: self.single_group_steps,
        }
    }
}

fn other_group(groups: &[GroupId], g: GroupId) -> Result<GroupId> {
    if groups.len() != 2 {
        return Err(Error::Config(alloc::format!(
            "expected exactly two groups, found {}",
            groups.len()
        )));
    }
    Ok(if groups[0] == g { groups[1] } else { groups[0] })
}

/// Mini-batch Adam training. `Mitigation::Auto` is delegated to
/// [`auto_condition_train`].
pub fn train(samples: &[LabeledSample<'_>], config: &TrainConfig) -> Result<TrainOutput> {
    if config.mitigation == Mitigation::Auto {
        return auto_condition_train(samples, config);
    }
    let mut t = Trainer::new(samples, config)?;
    let biased = config.biased_group.filter(|_| config.mitigation.masks_boundary());
    let weights = t.weights_for(biased);
    let train_film = config.mitigation.trains_film();
    for epoch in 0..config.epochs {
        let acc = t.epoch(epoch, &weights, train_film)?;
        t.record(epoch, &acc, Phase::Main);
    }
    let inference = if train_film {
        let b = config.biased_group.expect("validated");
        Some(other_group(&t.groups, b)?)
    } else {
        None
    };
    Ok(t.finish(None, inference))
}

/// Warm-up with native modulation and unweighted loss, discovery of the
/// clean group as the one with the lowest mean warm-up loss, then training
/// with the boundary band of the other group's samples masked out.
pub fn auto_condition_train(samples: &[LabeledSample<'_>], config: &TrainConfig) -> Result<TrainOutput> {
    let config = TrainConfig {
        mitigation: Mitigation::Auto,
        ..config.clone()
    };
    let mut t = Trainer::new(samples, &config)?;
    if t.groups.len() != 2 {
        return Err(Error::Config(alloc::format!(
            "auto mitigation needs exactly two groups, found {}",
            t.groups.len()
        )));
    }
    let unweighted = t.weights_for(None);
    let mut totals = [(0.0, 0usize); 2];
    for epoch in 0..config.warmup_epochs {
        let acc = t.epoch(epoch, &unweighted, true)?;
        for (tot, a) in totals.iter_mut().zip(&acc) {
            tot.0 += a.0;
            tot.1 += a.1;
        }
        t.record(epoch, &acc, Phase::Warmup);
    }
    let means = [totals[0].0 / totals[0].1 as f64, totals[1].0 / totals[1].1 as f64];
    let gap = means[1] - means[0];
    let clean_index = if libm::fabs(gap) < TIE_TOLERANCE || gap > 0.0 { 0 } else { 1 };
    let discovery = Discovery {
        clean_group: t.groups[clean_index],
        biased_group: t.groups[1 - clean_index],
        mean_losses: vec![(t.groups[0], means[0]), (t.groups[1], means[1])],
        low_confidence: libm::fabs(gap) < LOW_CONFIDENCE_GAP,
    };
    let weights = t.weights_for(Some(discovery.biased_group));
    for epoch in config.warmup_epochs..config.epochs {
        let acc = t.epoch(epoch, &weights, true)?;
        t.record(epoch, &acc, Phase::Main);
    }
    let clean = discovery.clean_group;
    Ok(t.finish(Some(discovery), Some(clean)))
}
