//! File names and writers for every pipeline artifact.

use std::fs;
use std::path::{Path, PathBuf};

use segbias_core::audit::Audit;
use segbias_core::corpus::Corpus;
use segbias_core::learner::HistoryRow;

use crate::error::{Error, Result};
use crate::manifest::write_json;
use crate::pnm;
use crate::stages::{AuditSummary, EvalSummary, ProjectedSample, SeparabilitySummary, ToneRow};

pub const INJECTION: &str = "injection.json";
pub const AUDIT_JSON: &str = "audit.json";
pub const AUDIT_CSV: &str = "audit.csv";
pub const AUDIT_ERRORS_DIR: &str = "audit_errors";
pub const EVAL_JSON: &str = "eval.json";
pub const EVAL_CSV: &str = "eval.csv";
pub const SEPARABILITY_JSON: &str = "separability.json";
pub const PCA_CSV: &str = "pca_projection.csv";
pub const HISTORY_CSV: &str = "history.csv";
pub const REPORT_MD: &str = "report.md";
pub const REPORT_CSV: &str = "report.csv";
pub const RUN_CONFIG: &str = "run_config.json";
pub const MODEL_STEM: &str = "model";

/// Writes rows to a CSV file, creating parent directories.
pub(crate) fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let err = |e: csv::Error| Error::io(path, e.into());
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.write_record(&row).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn num(v: f64) -> String {
    v.to_string()
}

pub(crate) fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn write_history(path: &Path, history: &[HistoryRow]) -> Result<()> {
    write_csv(
        path,
        &["epoch", "group", "mean_loss", "phase"],
        history.iter().map(|r| {
            vec![
                r.epoch.to_string(),
                r.group.to_string(),
                num(r.mean_loss),
                r.phase.as_str().into(),
            ]
        }),
    )
}

/// `audit.json`, `audit.csv` and one disagreement mask per sample.
pub fn write_audit(dir: &Path, summary: &AuditSummary, audit: &Audit, corpus: &Corpus) -> Result<()> {
    write_json(&dir.join(AUDIT_JSON), summary)?;
    let scopes = std::iter::once(("global".to_string(), &summary.global, segbias_core::audit::error_rates(&summary.global)))
        .chain(summary.groups.iter().map(|g| (format!("group_{}", g.group), &g.joint, g.rates)));
    write_csv(
        &dir.join(AUDIT_CSV),
        &[
            "scope",
            "n_obs_bg_conf_bg",
            "n_obs_bg_conf_fg",
            "n_obs_fg_conf_bg",
            "n_obs_fg_conf_fg",
            "q_obs_bg_conf_bg",
            "q_obs_bg_conf_fg",
            "q_obs_fg_conf_bg",
            "q_obs_fg_conf_fg",
            "omission_rate",
            "commission_rate",
            "error_rate",
        ],
        scopes.map(|(name, j, r)| {
            let mut row = vec![name];
            row.extend(j.counts.iter().flatten().map(|c| c.to_string()));
            row.extend(j.q.iter().flatten().map(|&q| num(q)));
            row.extend([num(r.omission), num(r.commission), num(r.error)]);
            row
        }),
    )?;
    let observed: Vec<_> = corpus.samples().iter().map(|s| s.mask_obs()).collect();
    for (s, m) in corpus.samples().iter().zip(audit.error_masks(&observed)) {
        pnm::write_mask(dir.join(AUDIT_ERRORS_DIR).join(format!("{}.pgm", s.id())), &m)?;
    }
    Ok(())
}

/// `eval.json` and its long-format CSV twin.
pub fn write_eval(dir: &Path, summary: &EvalSummary) -> Result<()> {
    write_json(&dir.join(EVAL_JSON), summary)?;
    let mut rows = Vec::new();
    for c in &summary.conditions {
        for re in [&c.observed, &c.clean].into_iter().flatten() {
            let report = &re.aggregate;
            let r = report.reference.as_str();
            for g in [&report.clean, &report.biased] {
                for (metric, mean, std) in [("dice", g.dice_mean, g.dice_std), ("iou", g.iou_mean, g.iou_std)] {
                    rows.push(vec![
                        c.condition.clone(),
                        g.group.to_string(),
                        format!("{metric}_{r}"),
                        num(mean),
                        num(std),
                        report.n_seeds.to_string(),
                    ]);
                }
            }
            rows.push(vec![
                c.condition.clone(),
                "gap".into(),
                format!("delta_dice_{r}"),
                num(report.delta_dice),
                num(re.delta_dice_std),
                report.n_seeds.to_string(),
            ]);
        }
    }
    write_csv(
        &dir.join(EVAL_CSV),
        &["condition", "group", "metric", "mean", "std", "n_seeds"],
        rows,
    )
}

pub fn write_separability(dir: &Path, summary: &SeparabilitySummary, projection: &[ProjectedSample]) -> Result<()> {
    write_json(&dir.join(SEPARABILITY_JSON), summary)?;
    write_csv(
        &dir.join(PCA_CSV),
        &["id", "group", "pc1", "pc2"],
        projection
            .iter()
            .map(|p| vec![p.id.clone(), p.group.to_string(), num(p.pc[0]), num(p.pc[1])]),
    )
}

pub fn write_tone(path: &Path, rows: &[ToneRow]) -> Result<()> {
    write_csv(
        path,
        &["id", "L*", "a*", "b*", "ITA", "group"],
        rows.iter().map(|r| {
            vec![
                r.id.clone(),
                num(r.lab.l),
                num(r.lab.a),
                num(r.lab.b),
                num(r.ita),
                r.group.as_str().into(),
            ]
        }),
    )
}

/// Directory holding the model of one condition and seed.
pub fn model_dir(out: &Path, condition: &str, seed: u64) -> PathBuf {
    out.join("models")
        .join(condition.replace(':', "_"))
        .join(format!("seed_{seed}"))
}
