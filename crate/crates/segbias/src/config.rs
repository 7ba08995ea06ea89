//! Run configuration: one JSON document, leaf keys overridable as `--section.key value`.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use segbias_core::corpus::GenConfig;
use segbias_core::inject::BiasSpec;
use segbias_core::learner::{Mitigation, PenaltyKind, TrainConfig};
use segbias_core::separability::SeparabilityConfig;

use crate::error::{Error, InModule, Result};
use crate::manifest::read_json;

/// One training recipe: a mitigation mode or a fairness penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Condition {
    pub mitigation: Mitigation,
    pub penalty: PenaltyKind,
}

impl Condition {
    pub const UNMITIGATED: Self = Self {
        mitigation: Mitigation::None,
        penalty: PenaltyKind::None,
    };

    pub fn needs_biased_group(self) -> bool {
        matches!(
            self.mitigation,
            Mitigation::Conditioned | Mitigation::AsymMask | Mitigation::Combined
        )
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.mitigation, self.penalty) {
            (m, PenaltyKind::None) => f.write_str(m.as_str()),
            (Mitigation::None, p) => f.write_str(p.as_str()),
            (m, p) => write!(f, "{}:{}", m.as_str(), p.as_str()),
        }
    }
}

impl FromStr for Condition {
    type Err = Error;

    /// `none`, a mitigation (`conditioned`, `combined`, ...), a penalty
    /// (`dp`, `coral`, ...) or `mitigation:penalty`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Invalid(format!("unknown condition `{s}`"));
        if let Some((m, p)) = s.split_once(':') {
            return Ok(Self {
                mitigation: m.parse().map_err(|_| bad())?,
                penalty: p.parse().map_err(|_| bad())?,
            });
        }
        if let Ok(mitigation) = s.parse::<Mitigation>() {
            return Ok(Self {
                mitigation,
                penalty: PenaltyKind::None,
            });
        }
        let penalty = s.parse::<PenaltyKind>().map_err(|_| bad())?;
        Ok(Self {
            mitigation: Mitigation::None,
            penalty,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditSection {
    pub folds: usize,
}

impl Default for AuditSection {
    fn default() -> Self {
        Self {
            folds: segbias_core::audit::DEFAULT_FOLDS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeparabilitySection {
    pub enabled: bool,
    pub probe_folds: usize,
    pub n_perm: usize,
    pub seed: u64,
}

impl Default for SeparabilitySection {
    fn default() -> Self {
        let d = SeparabilityConfig::default();
        Self {
            enabled: true,
            probe_folds: d.probe_folds,
            n_perm: d.n_perm,
            seed: d.seed,
        }
    }
}

impl SeparabilitySection {
    pub fn analysis(&self) -> SeparabilityConfig {
        SeparabilityConfig {
            probe_folds: self.probe_folds,
            n_perm: self.n_perm,
            seed: self.seed,
        }
    }
}

/// Everything a pipeline run depends on.
///
/// `train.mitigation` and `train.penalty` are replaced per condition; the
/// audit model always trains unmitigated with `train.seed`, and every
/// entry of `seeds` repeats the training and evaluation of each condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub out: PathBuf,
    pub seeds: Vec<u64>,
    pub conditions: Vec<String>,
    pub corpus: GenConfig,
    pub bias: BiasSpec,
    pub train: TrainConfig,
    pub audit: AuditSection,
    pub separability: SeparabilitySection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            out: PathBuf::from("out"),
            seeds: vec![0],
            conditions: vec!["none".into(), "conditioned".into(), "combined".into()],
            corpus: GenConfig::default(),
            bias: BiasSpec::default(),
            train: TrainConfig::default(),
            audit: AuditSection::default(),
            separability: SeparabilitySection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        read_json(path.as_ref())
    }

    /// Applies `(dotted key, raw value)` pairs. Values are read as JSON
    /// when they parse as JSON and as plain strings otherwise.
    pub fn with_overrides(&self, overrides: &[(String, String)]) -> Result<Self> {
        let mut doc = serde_json::to_value(self).expect("serializable");
        for (key, raw) in overrides {
            let mut slot = &mut doc;
            for part in key.split('.') {
                slot = slot
                    .as_object_mut()
                    .and_then(|o| o.get_mut(part))
                    .ok_or_else(|| Error::Invalid(format!("unknown option `--{key}`")))?;
            }
            if slot.is_object() {
                return Err(Error::Invalid(format!("`--{key}` names a section, not a value")));
            }
            *slot = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.clone()));
        }
        serde_json::from_value(doc).map_err(|e| Error::Invalid(e.to_string()))
    }

    pub fn conditions(&self) -> Result<Vec<Condition>> {
        let parsed = self
            .conditions
            .iter()
            .map(|c| c.parse())
            .collect::<Result<Vec<Condition>>>()?;
        for (i, c) in parsed.iter().enumerate() {
            if parsed[..i].contains(c) {
                return Err(Error::Invalid(format!("condition `{c}` listed twice")));
            }
        }
        Ok(parsed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Invalid("at least one seed is required".into()));
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return Err(Error::Invalid("seeds must be distinct".into()));
        }
        if self.conditions()?.is_empty() {
            return Err(Error::Invalid("at least one condition is required".into()));
        }
        self.corpus.validate().in_module("synth_corpus")?;
        self.bias.validate().in_module("bias_injection")?;
        self.train.validate().in_module("learner")?;
        if self.audit.folds < 2 {
            return Err(Error::Invalid("audit.folds must be at least 2".into()));
        }
        if self.separability.probe_folds < 2 {
            return Err(Error::Invalid("separability.probe_folds must be at least 2".into()));
        }
        Ok(())
    }

    /// Training configuration for one condition and seed.
    pub fn train_config(&self, condition: Condition, seed: u64) -> TrainConfig {
        TrainConfig {
            mitigation: condition.mitigation,
            penalty: condition.penalty,
            biased_group: if condition.needs_biased_group() {
                Some(self.corpus.biased_group)
            } else {
                self.train.biased_group
            },
            seed,
            ..self.train.clone()
        }
    }
}

/// Worker pool capped by `SEGBIAS_THREADS` (unset or 0: one per core).
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let n = match std::env::var("SEGBIAS_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::Invalid(format!("SEGBIAS_THREADS must be a non-negative integer, got `{v}`")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| Error::Invalid(format!("cannot start worker pool: {e}")))
}
