//! Command-line front end.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use segbias_core::corpus::generate;
use segbias_core::eval::Reference;
use segbias_core::inject::{inject, BiasOperator};
use segbias_core::tone::DEFAULT_K_RANGE;

use crate::artifacts::{self, INJECTION};
use crate::checkpoint;
use crate::config::{thread_pool, RunConfig};
use crate::error::{Error, InModule, Result};
use crate::manifest::{read_json, read_manifest, write_json, write_manifest};
use crate::pipeline::{run_pipeline, save_runs};
use crate::pnm;
use crate::report::{write_report, ReportInputs};
use crate::stages::{self, AuditSummary, TrainedRun};

/// Configuration sections that accept `--section.key value` overrides.
pub const SECTIONS: [&str; 5] = ["corpus", "bias", "train", "audit", "separability"];

#[derive(Debug, Parser)]
#[command(
    name = "segbias",
    version,
    about = "Simulate, audit and mitigate group-conditional label bias in binary segmentation",
    after_help = "Any leaf of the JSON configuration can be set as --section.key VALUE, \
                  e.g. --train.epochs 10 or --corpus.n_samples 100."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON run configuration; flags take precedence over it
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated training seeds, e.g. 1,2,3
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
}

#[derive(Debug, Args)]
struct BiasFlags {
    /// Fraction of biased-group samples to corrupt
    #[arg(long)]
    beta: Option<f64>,
    /// Corruption operator: erosion, dilation or hbd
    #[arg(long)]
    op: Option<String>,
    /// Operator radius in pixels
    #[arg(long = "r-d")]
    r_d: Option<usize>,
}

#[derive(Debug, Args)]
struct ModelFlags {
    /// Model checkpoint header (model.json); repeat for several seeds
    #[arg(long = "model", required = true)]
    models: Vec<PathBuf>,
    /// Condition label for the loaded models
    #[arg(long, default_value = "model")]
    label: String,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ReferenceChoice {
    Observed,
    Clean,
    Both,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic corpus
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Corrupt the masks of the biased group
    Inject {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        bias: BiasFlags,
    },
    /// Train one model per condition and seed
    Train {
        #[arg(long)]
        manifest: PathBuf,
        /// Comma-separated conditions, e.g. none,conditioned,dp
        #[arg(long, value_delimiter = ',')]
        conditions: Option<Vec<String>>,
        #[command(flatten)]
        common: Common,
    },
    /// Out-of-fold label-error audit with bias indicators
    Audit {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Group separability of pooled model features
    Separability {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        models: ModelFlags,
        #[command(flatten)]
        common: Common,
    },
    /// Dice and IoU per group against observed and/or clean masks
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        models: ModelFlags,
        #[arg(long, value_enum, default_value = "both")]
        reference: ReferenceChoice,
        #[command(flatten)]
        common: Common,
    },
    /// Skin-tone group from the dominant non-lesion color
    Tone {
        /// RGB image (binary PPM); repeat for several images
        #[arg(long = "image", required = true)]
        images: Vec<PathBuf>,
        /// Lesion mask (binary PGM), one per image
        #[arg(long = "lesion", required = true)]
        lesions: Vec<PathBuf>,
        #[arg(long, default_value_t = *DEFAULT_K_RANGE.start())]
        k_min: usize,
        #[arg(long, default_value_t = *DEFAULT_K_RANGE.end())]
        k_max: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV file
        #[arg(long)]
        out: PathBuf,
    },
    /// synth, inject, audit, train, evaluate, separability and report in one go
    Pipeline {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        bias: BiasFlags,
        /// Comma-separated conditions, e.g. none,conditioned,combined
        #[arg(long, value_delimiter = ',')]
        conditions: Option<Vec<String>>,
    },
    /// Render report.md and report.csv from the artifacts in a directory
    Report {
        /// Directory holding audit.json and/or eval.json
        #[arg(long)]
        out: PathBuf,
    },
}

/// `(dotted key, raw value)` pairs taken off the command line.
pub type Overrides = Vec<(String, String)>;

/// Splits `--section.key value` and `--section.key=value` pairs off the
/// arguments; everything else is left for clap.
pub fn split_overrides(args: Vec<OsString>) -> Result<(Vec<OsString>, Overrides)> {
    let mut rest = Vec::with_capacity(args.len());
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    while let Some(arg) = it.next() {
        let key = arg
            .to_str()
            .and_then(|s| s.strip_prefix("--"))
            .filter(|s| s.split_once('.').is_some_and(|(sec, _)| SECTIONS.contains(&sec)))
            .map(String::from);
        let Some(key) = key else {
            rest.push(arg);
            continue;
        };
        let (key, value) = match key.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it
                    .next()
                    .ok_or_else(|| Error::Invalid(format!("`--{key}` needs a value")))?;
                let v = v
                    .into_string()
                    .map_err(|_| Error::Invalid(format!("value of `--{key}` is not UTF-8")))?;
                (key, v)
            }
        };
        overrides.push((key, value));
    }
    Ok((rest, overrides))
}

fn resolve(
    common: &Common,
    overrides: &[(String, String)],
    bias: Option<&BiasFlags>,
    conditions: Option<&Vec<String>>,
) -> Result<RunConfig> {
    let base = match &common.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    let mut config = base.with_overrides(overrides)?;
    if let Some(out) = &common.out {
        config.out = out.clone();
    }
    if let Some(seeds) = &common.seeds {
        config.seeds = seeds.clone();
    }
    if let Some(b) = bias {
        if let Some(beta) = b.beta {
            config.bias.beta = beta;
        }
        if let Some(op) = &b.op {
            config.bias.operator = op.parse::<BiasOperator>().in_module("bias_injection")?;
        }
        if let Some(r_d) = b.r_d {
            config.bias.r_d = r_d;
        }
    }
    if let Some(c) = conditions {
        config.conditions = c.clone();
    }
    config.validate()?;
    Ok(config)
}

/// Seed encoded in a `seed_<n>` parent directory, if any.
fn seed_from_path(path: &Path) -> Option<u64> {
    path.parent()?
        .file_name()?
        .to_str()?
        .strip_prefix("seed_")?
        .parse()
        .ok()
}

fn load_runs(flags: &ModelFlags) -> Result<Vec<TrainedRun>> {
    flags
        .models
        .iter()
        .enumerate()
        .map(|(i, path)| {
            let ck = checkpoint::load(path)?;
            Ok(TrainedRun {
                condition: flags.label.clone(),
                seed: seed_from_path(path).unwrap_or(i as u64),
                model: ck.model,
                inference_group: ck.inference_group,
                discovery: None,
                history: Vec::new(),
            })
        })
        .collect()
}

fn execute(command: Command, overrides: &[(String, String)]) -> Result<()> {
    let pool = thread_pool;
    match command {
        Command::Synth { common } => {
            let config = resolve(&common, overrides, None, None)?;
            let corpus = generate(&config.corpus).in_module("synth_corpus")?;
            let path = write_manifest(&corpus, &config.out)?;
            println!("{}", path.display());
        }
        Command::Inject { manifest, common, bias } => {
            let config = resolve(&common, overrides, Some(&bias), None)?;
            let corpus = read_manifest(&manifest)?;
            let (biased, record) = inject(&corpus, &config.bias).in_module("bias_injection")?;
            let path = write_manifest(&biased, &config.out)?;
            write_json(&config.out.join(INJECTION), &record)?;
            println!("{}", path.display());
        }
        Command::Train {
            manifest,
            conditions,
            common,
        } => {
            let config = resolve(&common, overrides, None, conditions.as_ref())?;
            let corpus = read_manifest(&manifest)?;
            let runs = stages::train_conditions(&corpus.labeled(), &config, &config.conditions()?, &pool()?)?;
            for path in save_runs(&config.out, &runs)? {
                println!("{}", path.display());
            }
        }
        Command::Audit { manifest, common } => {
            let config = resolve(&common, overrides, None, None)?;
            let corpus = read_manifest(&manifest)?;
            let record_path = manifest.parent().unwrap_or(Path::new(".")).join(INJECTION);
            let record = if record_path.exists() {
                Some(read_json(&record_path)?)
            } else {
                None
            };
            let audit = stages::audit_samples(&corpus.labeled(), config.audit.folds, &config.train, &pool()?)?;
            let summary = AuditSummary::new(&audit, &corpus, config.train.seed, record.as_ref())?;
            artifacts::write_audit(&config.out, &summary, &audit, &corpus)?;
            println!("{}", config.out.join(artifacts::AUDIT_JSON).display());
        }
        Command::Separability {
            manifest,
            models,
            common,
        } => {
            let config = resolve(&common, overrides, None, None)?;
            let corpus = read_manifest(&manifest)?;
            let runs = load_runs(&models)?;
            let refs: Vec<&TrainedRun> = runs.iter().collect();
            let (summary, projection) =
                stages::separability_runs(&refs, &corpus.labeled(), &config.separability.analysis(), &pool()?)?;
            artifacts::write_separability(&config.out, &summary, &projection)?;
            println!("{}", config.out.join(artifacts::SEPARABILITY_JSON).display());
        }
        Command::Evaluate {
            manifest,
            models,
            reference,
            common,
        } => {
            let config = resolve(&common, overrides, None, None)?;
            let corpus = read_manifest(&manifest)?;
            let runs = load_runs(&models)?;
            let references: &[Reference] = match reference {
                ReferenceChoice::Observed => &[Reference::Observed],
                ReferenceChoice::Clean => &[Reference::Clean],
                ReferenceChoice::Both => &[Reference::Observed, Reference::Clean],
            };
            let summary = stages::evaluate_runs(&runs, &corpus, references, &pool()?)?;
            artifacts::write_eval(&config.out, &summary)?;
            println!("{}", config.out.join(artifacts::EVAL_JSON).display());
        }
        Command::Tone {
            images,
            lesions,
            k_min,
            k_max,
            seed,
            out,
        } => {
            if images.len() != lesions.len() {
                return Err(Error::Invalid(format!(
                    "{} images but {} lesion masks",
                    images.len(),
                    lesions.len()
                )));
            }
            if k_min < 1 || k_min > k_max {
                return Err(Error::Invalid(format!("bad cluster range {k_min}..={k_max}")));
            }
            let mut rows = Vec::with_capacity(images.len());
            for (image, lesion) in images.iter().zip(&lesions) {
                let id = image
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .unwrap_or("image")
                    .to_string();
                let rgb = pnm::read_rgb(image)?;
                let mask = pnm::read_mask(lesion)?;
                rows.push(stages::tone_row(&id, &rgb, &mask, k_min..=k_max, seed)?);
            }
            artifacts::write_tone(&out, &rows)?;
            println!("{}", out.display());
        }
        Command::Pipeline {
            common,
            bias,
            conditions,
        } => {
            let config = resolve(&common, overrides, Some(&bias), conditions.as_ref())?;
            run_pipeline(&config)?;
            println!("{}", config.out.join(artifacts::REPORT_MD).display());
        }
        Command::Report { out } => {
            if !overrides.is_empty() {
                return Err(Error::Invalid("report takes no configuration overrides".into()));
            }
            write_report(&out, &ReportInputs::load(&out)?)?;
            println!("{}", out.join(artifacts::REPORT_MD).display());
        }
    }
    Ok(())
}

/// Runs the command line and returns the process exit status.
pub fn run(args: impl IntoIterator<Item = impl Into<OsString>>) -> i32 {
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let (rest, overrides) = match split_overrides(args) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let cli = match Cli::try_parse_from(rest) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli.command, &overrides) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
