//! In-memory pipeline stages and their serializable summaries.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use segbias_core::audit::{self, error_rates, Audit, ErrorRates, FoldPlan, JointDistribution, Thresholds};
use segbias_core::bias::{BiasIndicators, ErrorContingency};
use segbias_core::corpus::{Corpus, LabeledSample};
use segbias_core::eval::{aggregate, evaluate_model, EvalReport, Reference};
use segbias_core::inject::{BiasOperator, InjectionRecord};
use segbias_core::learner::{self, Discovery, HistoryRow, LearnerModel, ProbMap, TrainConfig, TrainOutput};
use segbias_core::separability::{analyze, EmbeddingSet, FisherScore, MmdScore, ProbeScore, SeparabilityConfig};
use segbias_core::tone::{assign_tone, LabColor, ToneGroup};
use segbias_core::GroupId;

use crate::config::{Condition, RunConfig};
use crate::error::{Error, InModule, Result};

/// Out-of-fold audit with folds trained concurrently on `pool`.
///
/// Only images, observed masks and groups are visible here.
pub fn audit_samples(
    samples: &[LabeledSample<'_>],
    folds: usize,
    config: &TrainConfig,
    pool: &rayon::ThreadPool,
) -> Result<Audit> {
    let groups: Vec<GroupId> = samples.iter().map(|s| s.group).collect();
    let plan = FoldPlan::stratified(&groups, folds, config.seed).in_module("cl_audit")?;
    let per_fold: Vec<Result<Vec<(usize, ProbMap)>>> = pool.install(|| {
        (0..folds)
            .into_par_iter()
            .map(|f| audit::train_fold(samples, &plan, f, config).in_module("cl_audit"))
            .collect()
    });
    let mut slots: Vec<Option<ProbMap>> = vec![None; samples.len()];
    for fold in per_fold {
        for (i, p) in fold? {
            slots[i] = Some(p);
        }
    }
    let probs = slots.into_iter().map(|p| p.expect("every sample is held out once")).collect();
    audit::audit_from_probs(samples, plan, probs).in_module("cl_audit")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionSummary {
    pub operator: BiasOperator,
    pub beta: f64,
    pub r_d: usize,
    pub n_corrupted: usize,
}

impl From<&InjectionRecord> for InjectionSummary {
    fn from(r: &InjectionRecord) -> Self {
        Self {
            operator: r.operator,
            beta: r.beta,
            r_d: r.r_d,
            n_corrupted: r.corrupted.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAudit {
    pub group: GroupId,
    pub joint: JointDistribution,
    pub rates: ErrorRates,
}

/// Contents of `audit.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditSummary {
    pub folds: usize,
    pub seed: u64,
    pub injection: Option<InjectionSummary>,
    pub thresholds: Thresholds,
    pub clean_group: GroupId,
    pub biased_group: GroupId,
    pub global: JointDistribution,
    pub groups: Vec<GroupAudit>,
    /// Rows: clean, biased group. Columns: omission, commission, correct.
    pub contingency: ErrorContingency,
    pub bias_indicators: BiasIndicators,
}

impl AuditSummary {
    pub fn new(audit: &Audit, corpus: &Corpus, seed: u64, injection: Option<&InjectionRecord>) -> Result<Self> {
        let (c, b) = (corpus.clean_group(), corpus.biased_group());
        let missing = |g| Error::Invalid(format!("group {g} has no audited pixels"));
        let joint_c = audit.group(c).ok_or_else(|| missing(c))?;
        let joint_b = audit.group(b).ok_or_else(|| missing(b))?;
        let contingency = ErrorContingency::from_joint(joint_c, joint_b);
        Ok(Self {
            folds: audit.plan.k,
            seed,
            injection: injection.map(InjectionSummary::from),
            thresholds: audit.thresholds,
            clean_group: c,
            biased_group: b,
            global: audit.global.clone(),
            groups: audit
                .per_group
                .iter()
                .map(|j| GroupAudit {
                    group: match j.scope {
                        audit::Scope::Group(g) => g,
                        audit::Scope::Global => unreachable!("per-group scopes only"),
                    },
                    joint: j.clone(),
                    rates: error_rates(j),
                })
                .collect(),
            bias_indicators: BiasIndicators::compute(&contingency),
            contingency,
        })
    }

    pub fn rates(&self, g: GroupId) -> Option<ErrorRates> {
        self.groups.iter().find(|a| a.group == g).map(|a| a.rates)
    }
}

/// A trained model for one condition and seed.
#[derive(Debug, Clone)]
pub struct TrainedRun {
    pub condition: String,
    pub seed: u64,
    pub model: LearnerModel,
    /// Forced modulation at inference; each sample's own group when `None`.
    pub inference_group: Option<GroupId>,
    pub discovery: Option<Discovery>,
    pub history: Vec<HistoryRow>,
}

impl TrainedRun {
    pub fn new(condition: impl Into<String>, seed: u64, output: TrainOutput) -> Self {
        Self {
            condition: condition.into(),
            seed,
            model: output.model,
            inference_group: output.inference_group,
            discovery: output.discovery,
            history: output.history,
        }
    }
}

/// Trains every (condition, seed) pair concurrently; results in
/// condition-major, seed-minor order.
pub fn train_conditions(
    samples: &[LabeledSample<'_>],
    config: &RunConfig,
    conditions: &[Condition],
    pool: &rayon::ThreadPool,
) -> Result<Vec<TrainedRun>> {
    let jobs: Vec<(Condition, u64)> = conditions
        .iter()
        .flat_map(|&c| config.seeds.iter().map(move |&s| (c, s)))
        .collect();
    pool.install(|| {
        jobs.into_par_iter()
            .map(|(condition, seed)| {
                let output = learner::train(samples, &config.train_config(condition, seed)).in_module("learner")?;
                Ok(TrainedRun::new(condition.to_string(), seed, output))
            })
            .collect()
    })
}

/// One reference: aggregate over seeds plus the per-seed reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceEval {
    pub aggregate: EvalReport,
    /// Spread of the per-seed gaps.
    pub delta_dice_std: f64,
    pub per_seed: Vec<EvalReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionEval {
    pub condition: String,
    pub seeds: Vec<u64>,
    pub inference_groups: Vec<Option<GroupId>>,
    pub discovery: Vec<Option<Discovery>>,
    pub observed: Option<ReferenceEval>,
    pub clean: Option<ReferenceEval>,
}

/// Contents of `eval.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub conditions: Vec<ConditionEval>,
}

/// Scores every run against the requested references, grouping
/// consecutive runs of the same condition. Scoring against
/// [`Reference::Clean`] is the only place clean masks are read.
pub fn evaluate_runs(
    runs: &[TrainedRun],
    corpus: &Corpus,
    references: &[Reference],
    pool: &rayon::ThreadPool,
) -> Result<EvalSummary> {
    let per_run: Vec<Result<Vec<EvalReport>>> = pool.install(|| {
        runs.par_iter()
            .map(|r| {
                references
                    .iter()
                    .map(|&reference| {
                        evaluate_model(&r.model, corpus, reference, r.inference_group).in_module("evaluation")
                    })
                    .collect()
            })
            .collect()
    });
    let per_run = per_run.into_iter().collect::<Result<Vec<_>>>()?;
    let mut conditions: Vec<ConditionEval> = Vec::new();
    let mut i = 0;
    while i < runs.len() {
        let label = &runs[i].condition;
        let end = i + runs[i..].iter().take_while(|r| &r.condition == label).count();
        let group = &runs[i..end];
        let mut entry = ConditionEval {
            condition: label.clone(),
            seeds: group.iter().map(|r| r.seed).collect(),
            inference_groups: group.iter().map(|r| r.inference_group).collect(),
            discovery: group.iter().map(|r| r.discovery.clone()).collect(),
            observed: None,
            clean: None,
        };
        for (k, &reference) in references.iter().enumerate() {
            let per_seed: Vec<EvalReport> = per_run[i..end].iter().map(|rs| rs[k].clone()).collect();
            let deltas: Vec<f64> = per_seed.iter().map(|r| r.delta_dice).collect();
            let summary = ReferenceEval {
                aggregate: aggregate(&per_seed).in_module("evaluation")?,
                delta_dice_std: segbias_core::eval::mean_std(&deltas).1,
                per_seed,
            };
            match reference {
                Reference::Observed => entry.observed = Some(summary),
                Reference::Clean => entry.clean = Some(summary),
            }
        }
        conditions.push(entry);
        i = end;
    }
    Ok(EvalSummary { conditions })
}

/// Separability scores without the projection coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparabilityScores {
    pub seed: u64,
    pub probe: ProbeScore,
    pub silhouette: f64,
    pub fisher: FisherScore,
    pub mmd: MmdScore,
    pub centroid_distance: f64,
    pub pca_variance: [f64; 2],
    pub pca_rank_deficient: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparabilityMedians {
    pub probe_accuracy: f64,
    pub probe_auroc: f64,
    pub silhouette: f64,
    pub fisher_ratio: f64,
    pub mmd2: f64,
    pub centroid_distance: f64,
}

/// Contents of `separability.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparabilitySummary {
    /// Condition whose models supplied the embeddings.
    pub condition: String,
    pub per_seed: Vec<SeparabilityScores>,
    pub median: SeparabilityMedians,
}

/// One row of `pca_projection.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedSample {
    pub id: String,
    pub group: GroupId,
    pub pc: [f64; 2],
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Pooled hidden features of each run's model, analyzed per seed. The
/// projection returned is the first run's.
pub fn separability_runs(
    runs: &[&TrainedRun],
    samples: &[LabeledSample<'_>],
    config: &SeparabilityConfig,
    pool: &rayon::ThreadPool,
) -> Result<(SeparabilitySummary, Vec<ProjectedSample>)> {
    let first = runs
        .first()
        .ok_or_else(|| Error::Invalid("separability needs at least one trained model".into()))?;
    let reports: Vec<Result<_>> = pool.install(|| {
        runs.par_iter()
            .map(|r| {
                let e = EmbeddingSet::from_model(&r.model, samples).in_module("separability")?;
                analyze(&e, config).in_module("separability")
            })
            .collect()
    });
    let mut per_seed = Vec::with_capacity(runs.len());
    let mut projection = Vec::new();
    for (r, rep) in runs.iter().zip(reports) {
        let rep = rep?;
        if projection.is_empty() {
            projection = samples
                .iter()
                .zip(&rep.pca.coords)
                .map(|(s, c)| ProjectedSample {
                    id: s.id.into(),
                    group: s.group,
                    pc: *c,
                })
                .collect();
        }
        per_seed.push(SeparabilityScores {
            seed: r.seed,
            probe: rep.probe,
            silhouette: rep.silhouette,
            fisher: rep.fisher,
            mmd: rep.mmd,
            centroid_distance: rep.centroid_distance,
            pca_variance: rep.pca.variance,
            pca_rank_deficient: rep.pca.rank_deficient,
        });
    }
    let col = |f: fn(&SeparabilityScores) -> f64| median(&per_seed.iter().map(f).collect::<Vec<_>>());
    let median = SeparabilityMedians {
        probe_accuracy: col(|s| s.probe.accuracy),
        probe_auroc: col(|s| s.probe.auroc),
        silhouette: col(|s| s.silhouette),
        fisher_ratio: col(|s| s.fisher.ratio),
        mmd2: col(|s| s.mmd.mmd2),
        centroid_distance: col(|s| s.centroid_distance),
    };
    Ok((
        SeparabilitySummary {
            condition: first.condition.clone(),
            per_seed,
            median,
        },
        projection,
    ))
}

/// One row of the tone CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ToneRow {
    pub id: String,
    pub lab: LabColor,
    pub ita: f64,
    pub group: ToneGroup,
}

pub fn tone_row(
    id: &str,
    rgb: &segbias_core::image::RgbImage,
    lesion: &segbias_core::mask::BinaryMask,
    k_range: core::ops::RangeInclusive<usize>,
    seed: u64,
) -> Result<ToneRow> {
    if rgb.dims() != lesion.dims() {
        return Err(segbias_core::Error::DimensionMismatch {
            id: id.into(),
            expected: rgb.dims(),
            found: lesion.dims(),
        })
        .in_module("tone_grouping");
    }
    let t = assign_tone(rgb.pixels(), lesion, k_range, seed).for_sample("tone_grouping", id)?;
    Ok(ToneRow {
        id: id.into(),
        lab: t.dominant.color,
        ita: t.ita,
        group: t.group,
    })
}
