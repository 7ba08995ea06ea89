//! End-to-end run: synth, inject, audit, train, evaluate, separability, report.

use std::path::{Path, PathBuf};

use segbias_core::corpus::{generate, Corpus};
use segbias_core::eval::Reference;
use segbias_core::inject::{inject, InjectionRecord};

use crate::artifacts::{self, model_dir, write_history, HISTORY_CSV, INJECTION, MODEL_STEM, RUN_CONFIG};
use crate::checkpoint::{self, Checkpoint};
use crate::config::{Condition, RunConfig};
use crate::error::{Error, InModule, Result};
use crate::manifest::{write_json, write_manifest};
use crate::report::{write_report, ReportInputs};
use crate::stages::{
    audit_samples, evaluate_runs, separability_runs, AuditSummary, EvalSummary, SeparabilitySummary, TrainedRun,
};

/// Directory of the generated corpus inside a run directory.
pub const CORPUS_DIR: &str = "corpus";
/// Directory of the corpus after bias injection.
pub const BIASED_DIR: &str = "biased";

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub corpus: Corpus,
    pub injection: InjectionRecord,
    pub audit: AuditSummary,
    pub runs: Vec<TrainedRun>,
    pub eval: EvalSummary,
    pub separability: Option<SeparabilitySummary>,
}

/// Generated corpus with the configured bias injected.
pub fn synthesize(config: &RunConfig) -> Result<(Corpus, InjectionRecord)> {
    let clean = generate(&config.corpus).in_module("synth_corpus")?;
    inject(&clean, &config.bias).in_module("bias_injection")
}

/// Saves checkpoint and loss history of every run under `out/models`.
pub fn save_runs(out: &Path, runs: &[TrainedRun]) -> Result<Vec<PathBuf>> {
    runs.iter()
        .map(|r| {
            let dir = model_dir(out, &r.condition, r.seed);
            write_history(&dir.join(HISTORY_CSV), &r.history)?;
            checkpoint::save(
                &dir,
                MODEL_STEM,
                &Checkpoint {
                    model: r.model.clone(),
                    inference_group: r.inference_group,
                },
            )
        })
        .collect()
}

/// Runs whose models feed the separability analysis: the unmitigated
/// condition when trained, the first condition otherwise.
pub fn separability_source(runs: &[TrainedRun]) -> Vec<&TrainedRun> {
    let unmitigated = Condition::UNMITIGATED.to_string();
    let pick = if runs.iter().any(|r| r.condition == unmitigated) {
        unmitigated
    } else {
        match runs.first() {
            Some(r) => r.condition.clone(),
            None => return Vec::new(),
        }
    };
    runs.iter().filter(|r| r.condition == pick).collect()
}

/// Runs every stage and writes all artifacts under `config.out`.
pub fn run_pipeline(config: &RunConfig) -> Result<PipelineOutput> {
    config.validate()?;
    if config.bias.target_group != config.corpus.biased_group {
        return Err(Error::Invalid(format!(
            "bias.target_group {} is not the corpus biased group {}",
            config.bias.target_group, config.corpus.biased_group
        )));
    }
    let conditions = config.conditions()?;
    let pool = crate::config::thread_pool()?;
    let out = config.out.as_path();

    let clean = generate(&config.corpus).in_module("synth_corpus")?;
    write_manifest(&clean, out.join(CORPUS_DIR))?;
    let (corpus, injection) = inject(&clean, &config.bias).in_module("bias_injection")?;
    write_manifest(&corpus, out.join(BIASED_DIR))?;
    write_json(&out.join(BIASED_DIR).join(INJECTION), &injection)?;

    // audit and training see observed masks only
    let samples = corpus.labeled();
    let audit = audit_samples(&samples, config.audit.folds, &config.train, &pool)?;
    let audit_summary = AuditSummary::new(&audit, &corpus, config.train.seed, Some(&injection))?;
    artifacts::write_audit(out, &audit_summary, &audit, &corpus)?;

    let runs = crate::stages::train_conditions(&samples, config, &conditions, &pool)?;
    save_runs(out, &runs)?;

    let eval = evaluate_runs(&runs, &corpus, &[Reference::Observed, Reference::Clean], &pool)?;
    artifacts::write_eval(out, &eval)?;

    let separability = if config.separability.enabled {
        let (summary, projection) =
            separability_runs(&separability_source(&runs), &samples, &config.separability.analysis(), &pool)?;
        artifacts::write_separability(out, &summary, &projection)?;
        Some(summary)
    } else {
        None
    };

    write_report(
        out,
        &ReportInputs {
            audit: Some(audit_summary.clone()),
            eval: Some(eval.clone()),
            separability: separability.clone(),
        },
    )?;
    write_json(&out.join(RUN_CONFIG), config)?;
    Ok(PipelineOutput {
        corpus,
        injection,
        audit: audit_summary,
        runs,
        eval,
        separability,
    })
}
