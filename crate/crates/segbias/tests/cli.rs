use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use segbias::core::image::RgbImage;
use segbias::core::mask::BinaryMask;
use segbias::pnm;

const TINY: [&str; 16] = [
    "--corpus.n_samples",
    "16",
    "--corpus.width",
    "24",
    "--corpus.height",
    "24",
    "--train.epochs",
    "3",
    "--train.warmup_epochs",
    "1",
    "--train.hidden_dim",
    "4",
    "--audit.folds",
    "2",
    "--separability.n_perm",
    "20",
];

fn segbias(args: &[&str], threads: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_segbias"))
        .args(args)
        .env("SEGBIAS_THREADS", threads)
        .output()
        .expect("binary runs")
}

fn ok(out: Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn run_tiny(sub: &[&str], out: &Path, extra: &[&str]) -> String {
    let mut args: Vec<&str> = sub.to_vec();
    args.extend(["--out", out.to_str().unwrap()]);
    args.extend(TINY);
    args.extend(extra);
    ok(segbias(&args, "2"))
}

/// Every JSON and CSV artifact below `dir`, relative path to bytes.
fn tables(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, acc: &mut Vec<(PathBuf, Vec<u8>)>) {
        let mut entries: Vec<_> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
        entries.sort();
        for p in entries {
            if p.is_dir() {
                walk(root, &p, acc);
            } else if matches!(p.extension().and_then(|e| e.to_str()), Some("json" | "csv")) {
                acc.push((p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    let mut acc = Vec::new();
    walk(dir, dir, &mut acc);
    acc
}

#[test]
fn unknown_flag_prints_usage_and_exits_2() {
    let out = segbias(&["pipeline", "--bogus"], "1");
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    let out = segbias(&["pipeline", "--train.bogus", "1"], "1");
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--train.bogus"));
}

#[test]
fn validation_errors_exit_2_and_runtime_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(segbias(&["pipeline", "--out", out, "--beta", "1.5"], "1").status.code(), Some(2));
    assert_eq!(segbias(&["pipeline", "--out", out, "--op", "opening"], "1").status.code(), Some(2));
    assert_eq!(segbias(&["pipeline", "--out", out, "--conditions", "none,fair"], "1").status.code(), Some(2));
    let missing = dir.path().join("nowhere/manifest.json");
    let res = segbias(&["audit", "--manifest", missing.to_str().unwrap(), "--out", out], "1");
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("nowhere"));
    assert_eq!(segbias(&["report", "--out", out], "1").status.code(), Some(2));
    assert_eq!(segbias(&["pipeline", "--out", out], "abc").status.code(), Some(2));
}

#[test]
fn pipeline_writes_every_artifact_and_repeats_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let extra = ["--seeds", "1,2", "--conditions", "none,conditioned,auto,dp", "--beta", "0.5"];
    run_tiny(&["pipeline"], &out, &extra);
    for f in [
        "corpus/manifest.json",
        "biased/manifest.json",
        "biased/injection.json",
        "audit.json",
        "audit.csv",
        "eval.json",
        "eval.csv",
        "separability.json",
        "pca_projection.csv",
        "report.md",
        "report.csv",
        "run_config.json",
        "models/none/seed_1/model.json",
        "models/auto/seed_2/model.bin",
        "models/dp/seed_2/history.csv",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let report = fs::read_to_string(out.join("report.md")).unwrap();
    assert!(report.contains("Part I") && report.contains("Part II"));
    let first = tables(&out);

    // again into the same directory, with a different worker count
    fs::rename(&out, dir.path().join("first")).unwrap();
    let mut args = vec!["pipeline", "--out", out.to_str().unwrap()];
    args.extend(TINY);
    args.extend(extra);
    ok(segbias(&args, "1"));
    let second = tables(&out);
    assert_eq!(first.len(), second.len());
    for ((pa, a), (pb, b)) in first.iter().zip(&second) {
        assert_eq!(pa, pb);
        assert!(a == b, "{} differs between runs", pa.display());
    }
}

#[test]
fn audit_and_training_never_read_clean_masks() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    run_tiny(&["synth"], &dir.path().join("clean"), &[]);
    let manifest = dir.path().join("clean/manifest.json");
    run_tiny(&["inject", "--manifest", manifest.to_str().unwrap(), "--beta", "0.5"], &data, &[]);
    let biased = data.join("manifest.json");
    let biased = biased.to_str().unwrap();

    let go = |tag: &str| {
        let out = dir.path().join(tag);
        run_tiny(&["audit", "--manifest", biased], &out, &[]);
        run_tiny(&["train", "--manifest", biased, "--conditions", "none,combined"], &out, &[]);
        let mut files = tables(&out);
        for m in ["models/none/seed_0/model.bin", "models/combined/seed_0/model.bin"] {
            files.push((m.into(), fs::read(out.join(m)).unwrap()));
        }
        files
    };
    let before = go("a");

    // scramble every clean mask with noise of the right size
    let mut state = 0x9e37_79b9_7f4a_7c15u64;
    let mut scrambled = 0;
    for e in fs::read_dir(data.join("clean")).unwrap() {
        let p = e.unwrap().path();
        let m = pnm::read_mask(&p).unwrap();
        let (w, h) = m.dims();
        let bits = (0..w * h)
            .map(|_| {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                (state >> 63) as u8
            })
            .collect();
        pnm::write_mask(&p, &BinaryMask::from_vec(w, h, bits).unwrap()).unwrap();
        scrambled += 1;
    }
    assert!(scrambled > 0);
    let after = go("b");
    assert_eq!(before, after);
}

#[test]
fn stages_run_separately_from_saved_models() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("p");
    run_tiny(&["pipeline"], &out, &["--conditions", "none", "--seeds", "3"]);
    let manifest = out.join("biased/manifest.json");
    let model = out.join("models/none/seed_3/model.json");
    let ev = dir.path().join("ev");
    run_tiny(
        &[
            "evaluate",
            "--manifest",
            manifest.to_str().unwrap(),
            "--model",
            model.to_str().unwrap(),
            "--label",
            "none",
            "--reference",
            "clean",
        ],
        &ev,
        &[],
    );
    let eval: serde_json::Value = serde_json::from_slice(&fs::read(ev.join("eval.json")).unwrap()).unwrap();
    let cond = &eval["conditions"][0];
    assert_eq!(cond["condition"], "none");
    assert_eq!(cond["seeds"], serde_json::json!([3]));
    assert!(cond["observed"].is_null());
    let piped: serde_json::Value = serde_json::from_slice(&fs::read(out.join("eval.json")).unwrap()).unwrap();
    assert_eq!(cond["clean"], piped["conditions"][0]["clean"]);

    run_tiny(
        &["separability", "--manifest", manifest.to_str().unwrap(), "--model", model.to_str().unwrap()],
        &ev,
        &[],
    );
    assert!(ev.join("separability.json").is_file());
    assert!(ev.join("pca_projection.csv").is_file());

    fs::copy(out.join("audit.json"), ev.join("audit.json")).unwrap();
    ok(segbias(&["report", "--out", ev.to_str().unwrap()], "1"));
    let csv = fs::read_to_string(ev.join("report.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert!(lines[0].starts_with("part,row,errr_clean"));
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("audit,"));
    assert!(lines[2].starts_with("mitigation,none,"));
}

#[test]
fn tone_classifies_images_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let (w, h) = (20, 20);
    let lesion = BinaryMask::from_vec(w, h, (0..w * h).map(|i| u8::from(i % w < 6 && i / w < 6)).collect()).unwrap();
    let lesion_path = dir.path().join("lesion.pgm");
    pnm::write_mask(&lesion_path, &lesion).unwrap();
    // very light and tan skin around a dark brown lesion
    let mut args: Vec<String> = vec!["tone".into()];
    for (name, skin) in [("light", [236u8, 208, 190]), ("tan", [180, 130, 100])] {
        let px = (0..w * h)
            .map(|i| if lesion.as_slice()[i] == 1 { [60, 30, 20] } else { skin })
            .collect();
        let p = dir.path().join(format!("{name}.ppm"));
        pnm::write_rgb(&p, &RgbImage::from_vec(w, h, px).unwrap()).unwrap();
        args.extend(["--image".into(), p.to_str().unwrap().into()]);
        args.extend(["--lesion".into(), lesion_path.to_str().unwrap().into()]);
    }
    let csv_path = dir.path().join("tone.csv");
    args.extend(["--out".into(), csv_path.to_str().unwrap().into()]);
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    ok(segbias(&refs, "1"));

    let mut reader = csv::Reader::from_path(&csv_path).unwrap();
    let header = reader.headers().unwrap().clone();
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(&rows[0][col("id")], "light");
    let ita: Vec<f64> = rows.iter().map(|r| r[col("ITA")].parse().unwrap()).collect();
    // sRGB (236,208,190) and (180,130,100) sit at ITA 70.5 and 19.8
    assert!((ita[0] - 70.50).abs() < 0.05, "light skin ITA {}", ita[0]);
    assert!((ita[1] - 19.83).abs() < 0.05, "tan skin ITA {}", ita[1]);
    assert_eq!(&rows[0][col("group")], "ST1");
    assert_eq!(&rows[1][col("group")], "ST4");

    // mismatched image and lesion lists
    let res = segbias(&["tone", "--image", "a.ppm", "--lesion", "a.pgm", "--lesion", "b.pgm", "--out", "t.csv"], "1");
    assert_eq!(res.status.code(), Some(2));
}
