use segbias::cli::split_overrides;
use segbias::config::{Condition, RunConfig};
use segbias::core::learner::{Mitigation, PenaltyKind};
use segbias::Error;

fn kv(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

#[test]
fn overrides_reach_leaf_keys() {
    let c = RunConfig::default()
        .with_overrides(&kv(&[
            ("train.epochs", "3"),
            ("train.lambda", "0.5"),
            ("bias.operator", "dilation"),
            ("corpus.shape", "polygon_blob"),
            ("separability.enabled", "false"),
        ]))
        .unwrap();
    assert_eq!(c.train.epochs, 3);
    assert_eq!(c.train.lambda, 0.5);
    assert_eq!(c.bias.operator.as_str(), "dilation");
    assert!(!c.separability.enabled);
    c.validate().unwrap();
}

#[test]
fn unknown_and_malformed_overrides_fail() {
    let base = RunConfig::default();
    let err = base.with_overrides(&kv(&[("train.epoch", "3")])).unwrap_err();
    assert!(err.to_string().contains("--train.epoch"), "{err}");
    assert_eq!(err.exit_code(), 2);
    assert!(base.with_overrides(&kv(&[("train", "3")])).is_err());
    assert!(base.with_overrides(&kv(&[("train.epochs", "many")])).is_err());
    assert!(base.with_overrides(&kv(&[("bias.operator", "opening")])).is_err());
}

#[test]
fn validation_rejects_bad_runs() {
    let bad = [
        ("bias.beta", "1.5"),
        ("audit.folds", "1"),
        ("train.epochs", "0"),
        ("corpus.n_samples", "0"),
    ];
    for (k, v) in bad {
        let c = RunConfig::default().with_overrides(&kv(&[(k, v)])).unwrap();
        let err = c.validate().unwrap_err();
        assert_eq!(err.exit_code(), 2, "{k}={v}: {err}");
    }
    let mut c = RunConfig::default();
    c.seeds = vec![1, 1];
    assert!(c.validate().is_err());
    c.seeds = vec![];
    assert!(c.validate().is_err());
    c.seeds = vec![0];
    c.conditions = vec!["none".into(), "none".into()];
    assert!(c.validate().is_err());
}

#[test]
fn config_file_round_trips_through_json() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = RunConfig::default();
    c.seeds = vec![4, 2];
    c.train.hidden_dim = 8;
    let path = dir.path().join("run.json");
    std::fs::write(&path, serde_json::to_string_pretty(&c).unwrap()).unwrap();
    assert_eq!(RunConfig::from_file(&path).unwrap(), c);

    std::fs::write(&path, r#"{"train": {"epochs": 4}, "colour": 1}"#).unwrap();
    assert!(matches!(RunConfig::from_file(&path), Err(Error::Parse { .. })));
    // partial files fill in defaults
    std::fs::write(&path, r#"{"train": {"epochs": 4}}"#).unwrap();
    let partial = RunConfig::from_file(&path).unwrap();
    assert_eq!(partial.train.epochs, 4);
    assert_eq!(partial.train.hidden_dim, RunConfig::default().train.hidden_dim);
}

#[test]
fn conditions_parse_and_print() {
    for s in ["none", "conditioned", "asym_mask", "combined", "auto", "dp", "eo", "mmd_logit", "coral", "mmd_feature", "conditioned:dp"] {
        let c: Condition = s.parse().unwrap();
        assert_eq!(c.to_string(), s);
    }
    let c: Condition = "coral".parse().unwrap();
    assert_eq!(c.mitigation, Mitigation::None);
    assert_eq!(c.penalty, PenaltyKind::Coral);
    assert!("fair".parse::<Condition>().is_err());
    assert!("dp:none".parse::<Condition>().is_err());
}

#[test]
fn train_config_follows_the_condition() {
    let c = RunConfig::default();
    let t = c.train_config("conditioned".parse().unwrap(), 7);
    assert_eq!(t.seed, 7);
    assert_eq!(t.mitigation, Mitigation::Conditioned);
    assert_eq!(t.biased_group, Some(c.corpus.biased_group));
    let t = c.train_config(Condition::UNMITIGATED, 2);
    assert_eq!(t.biased_group, None);
    assert_eq!(t.epochs, c.train.epochs);
}

#[test]
fn section_flags_are_split_from_the_rest() {
    let args = ["segbias", "pipeline", "--train.epochs", "2", "--beta", "0.5", "--corpus.seed=9", "--out", "x"];
    let (rest, overrides) = split_overrides(args.iter().map(Into::into).collect()).unwrap();
    assert_eq!(rest, ["segbias", "pipeline", "--beta", "0.5", "--out", "x"]);
    assert_eq!(overrides, kv(&[("train.epochs", "2"), ("corpus.seed", "9")]));
    assert!(split_overrides(vec!["segbias".into(), "--train.epochs".into()]).is_err());
}
