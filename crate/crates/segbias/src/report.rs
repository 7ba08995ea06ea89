//! Combined audit and mitigation table in Markdown and CSV.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::artifacts::{num, opt, write_csv, AUDIT_JSON, EVAL_JSON, REPORT_CSV, REPORT_MD, SEPARABILITY_JSON};
use crate::error::{Error, Result};
use crate::manifest::read_json;
use crate::stages::{AuditSummary, EvalSummary, ReferenceEval, SeparabilitySummary};

/// Everything the report can draw on; missing parts are left out.
#[derive(Debug, Clone, Default)]
pub struct ReportInputs {
    pub audit: Option<AuditSummary>,
    pub eval: Option<EvalSummary>,
    pub separability: Option<SeparabilitySummary>,
}

impl ReportInputs {
    /// Reads whichever of `audit.json`, `eval.json`, `separability.json` exist in `dir`.
    pub fn load(dir: &Path) -> Result<Self> {
        fn maybe<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Option<T>> {
            if path.exists() {
                read_json(path).map(Some)
            } else {
                Ok(None)
            }
        }
        let inputs = Self {
            audit: maybe(&dir.join(AUDIT_JSON))?,
            eval: maybe(&dir.join(EVAL_JSON))?,
            separability: maybe(&dir.join(SEPARABILITY_JSON))?,
        };
        if inputs.audit.is_none() && inputs.eval.is_none() {
            return Err(Error::Invalid(format!(
                "{} holds neither {AUDIT_JSON} nor {EVAL_JSON}",
                dir.display()
            )));
        }
        Ok(inputs)
    }
}

fn dataset_label(a: &AuditSummary) -> String {
    match &a.injection {
        Some(i) if i.beta == 0.0 => "unbiased".into(),
        Some(i) => format!("{} β={}% r_d={}", i.operator.as_str(), 100.0 * i.beta, i.r_d),
        None => "as loaded".into(),
    }
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map(|x| format!("{x:.digits$}")).unwrap_or_else(|| "n/a".into())
}

/// Clean-group Dice, biased-group Dice and gap, each as mean ± std.
fn dice_cells(re: &Option<ReferenceEval>) -> [String; 3] {
    match re {
        Some(x) => {
            let a = &x.aggregate;
            [
                format!("{:.2} ± {:.2}", a.clean.dice_mean, a.clean.dice_std),
                format!("{:.2} ± {:.2}", a.biased.dice_mean, a.biased.dice_std),
                format!("{:.2} ± {:.2}", a.delta_dice, x.delta_dice_std),
            ]
        }
        None => ["n/a".into(), "n/a".into(), "n/a".into()],
    }
}

pub fn render_markdown(inputs: &ReportInputs) -> String {
    let mut md = String::from("# Label-bias report\n");
    if let Some(a) = &inputs.audit {
        let ind = &a.bias_indicators;
        let err = |g| a.rates(g).map(|r| 100.0 * r.error);
        md.push_str("\n## Part I: audit\n\n");
        md.push_str("| Dataset | ErrR clean (%) | ErrR biased (%) | S | RR_Om | RR_Co | χ² | p | significant at 0.05 |\n");
        md.push_str("|---|---:|---:|---:|---:|---:|---:|---:|:---:|\n");
        let _ = writeln!(
            md,
            "| {} | {} | {} | {} | {:.2} | {:.2} | {} | {} | {} |",
            dataset_label(a),
            fmt_opt(err(a.clean_group), 2),
            fmt_opt(err(a.biased_group), 2),
            fmt_opt(ind.s, 2),
            ind.rr_om,
            ind.rr_co,
            fmt_opt(ind.chi2, 1),
            ind.p_value.map(|p| format!("{p:.2e}")).unwrap_or_else(|| "n/a".into()),
            if ind.significant { "yes" } else { "no" },
        );
        let _ = writeln!(
            md,
            "\nGroups: clean {}, biased {}. {}-fold out-of-fold audit, thresholds t_bg={:.4}, t_fg={:.4}.",
            a.clean_group, a.biased_group, a.folds, a.thresholds.t_bg, a.thresholds.t_fg
        );
    }
    if let Some(e) = &inputs.eval {
        md.push_str("\n## Part II: mitigation\n\n");
        md.push_str("Dice in percent, mean ± std over seeds. Δ = clean group minus biased group.\n\n");
        md.push_str("| Condition | Dice clean (obs) | Dice biased (obs) | Δ observed | Dice clean (true) | Dice biased (true) | Δ true | seeds |\n");
        md.push_str("|---|---:|---:|---:|---:|---:|---:|---:|\n");
        for c in &e.conditions {
            let [a, b, d] = dice_cells(&c.observed);
            let [e, f, g] = dice_cells(&c.clean);
            let _ = writeln!(md, "| {} | {a} | {b} | {d} | {e} | {f} | {g} | {} |", c.condition, c.seeds.len());
        }
    }
    if let Some(s) = &inputs.separability {
        let m = &s.median;
        let _ = write!(
            md,
            "\n## Group separability of `{}` features\n\nMedians over {} seed(s).\n\n\
             | Probe accuracy | Probe AUROC | Silhouette | Fisher ratio | MMD² | Centroid distance |\n\
             |---:|---:|---:|---:|---:|---:|\n\
             | {:.3} | {:.3} | {:.3} | {:.4} | {:.5} | {:.4} |\n",
            s.condition,
            s.per_seed.len(),
            m.probe_accuracy,
            m.probe_auroc,
            m.silhouette,
            m.fisher_ratio,
            m.mmd2,
            m.centroid_distance,
        );
    }
    md
}

const CSV_HEADER: [&str; 17] = [
    "part",
    "row",
    "errr_clean",
    "errr_biased",
    "s",
    "rr_om",
    "rr_co",
    "chi2",
    "p_value",
    "significant_at_0.05",
    "dice_clean_observed",
    "dice_biased_observed",
    "delta_dice_observed",
    "dice_clean_true",
    "dice_biased_true",
    "delta_dice_true",
    "n_seeds",
];

pub fn csv_rows(inputs: &ReportInputs) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    if let Some(a) = &inputs.audit {
        let ind = &a.bias_indicators;
        let err = |g| opt(a.rates(g).map(|r| 100.0 * r.error));
        let mut row = vec![
            "audit".into(),
            dataset_label(a),
            err(a.clean_group),
            err(a.biased_group),
            opt(ind.s),
            num(ind.rr_om),
            num(ind.rr_co),
            opt(ind.chi2),
            opt(ind.p_value),
            ind.significant.to_string(),
        ];
        row.resize(CSV_HEADER.len(), String::new());
        rows.push(row);
    }
    if let Some(e) = &inputs.eval {
        for c in &e.conditions {
            let mut row = vec![String::from("mitigation"), c.condition.clone()];
            row.resize(10, String::new());
            for re in [&c.observed, &c.clean] {
                match re {
                    Some(x) => row.extend([
                        num(x.aggregate.clean.dice_mean),
                        num(x.aggregate.biased.dice_mean),
                        num(x.aggregate.delta_dice),
                    ]),
                    None => row.extend([String::new(), String::new(), String::new()]),
                }
            }
            row.push(c.seeds.len().to_string());
            rows.push(row);
        }
    }
    rows
}

/// Writes `report.md` and `report.csv` into `dir`.
pub fn write_report(dir: &Path, inputs: &ReportInputs) -> Result<()> {
    let md_path = dir.join(REPORT_MD);
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    fs::write(&md_path, render_markdown(inputs)).map_err(|e| Error::io(&md_path, e))?;
    write_csv(&dir.join(REPORT_CSV), &CSV_HEADER, csv_rows(inputs))
}
