use trfe_cli::config::{resolve, validate_config, ConfigError, ExperimentConfig, SystemConfig, DEFAULT_SWEEP};

#[test]
fn empty_document_resolves_to_defaults() {
    for raw in ["", "  \n", "{}"] {
        let cfg = validate_config(raw).unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.n_samples, 50_000);
        assert_eq!(cfg.n_betas, 60);
        assert_eq!((cfg.beta_min, cfg.beta_max), (1e-3, 1e3));
        assert_eq!(cfg.n_alpha, 256);
        assert_eq!(cfg.sigma_v, DEFAULT_SWEEP.to_vec());
        assert_eq!(cfg.n_eval, 2000);
        assert_eq!(cfg.epsilon, None);
        assert!(cfg.certify);
        assert!(matches!(cfg.system, SystemConfig::Dubins(_)));
    }
}

#[test]
fn negative_noise_is_a_range_error() {
    match validate_config(r#"{"sigma_v": [-1]}"#) {
        Err(ConfigError::Range(e)) => assert!(e.iter().any(|m| m.contains("sigma_v[0]")), "{e:?}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn every_range_violation_is_listed() {
    match validate_config(r#"{"n_betas": 0, "n_alpha": 0, "beta_min": -1, "sigma_v": [1, 1]}"#) {
        Err(ConfigError::Range(e)) => {
            assert!(e.len() >= 4, "{e:?}");
            assert!(e.iter().any(|m| m.contains("twice")));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn duplicate_keys_are_rejected_with_location() {
    for raw in [
        "{\"seed\": 1,\n \"seed\": 2}",
        r#"{"system": {"name": "dubins", "dt": 0.1, "dt": 0.2}}"#,
    ] {
        match validate_config(raw) {
            Err(ConfigError::Parse(m)) => {
                assert!(m.contains("duplicate"), "{m}");
                assert!(m.contains("line"), "{m}");
            }
            other => panic!("{other:?}"),
        }
    }
}

#[test]
fn all_unknown_keys_are_listed() {
    match validate_config(r#"{"foo": 1, "bar": 2, "system": {"name": "dubins", "baz": 3}}"#) {
        Err(ConfigError::UnknownKeys(k)) => {
            assert_eq!(k.len(), 3, "{k:?}");
            for name in ["foo", "bar", "baz"] {
                assert!(k.iter().any(|s| s.contains(name)), "{k:?}");
            }
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn unknown_system_and_malformed_json_fail_to_parse() {
    assert!(matches!(validate_config(r#"{"system": {"name": "cartpole"}}"#), Err(ConfigError::Parse(_))));
    assert!(matches!(validate_config("{"), Err(ConfigError::Parse(_))));
    assert!(matches!(validate_config("[1, 2]"), Err(ConfigError::Parse(_))));
    assert!(matches!(validate_config(r#"{"n_samples": "many"}"#), Err(ConfigError::Parse(_))));
}

#[test]
fn system_parameters_are_checked() {
    assert!(matches!(
        validate_config(r#"{"system": {"name": "scalar_lqg", "horizon": 0, "r": -1}}"#),
        Err(ConfigError::Range(e)) if e.len() >= 2
    ));
    let cfg = validate_config(r#"{"system": {"name": "scalar_lqg", "a": 0.9}}"#).unwrap();
    match cfg.system {
        SystemConfig::ScalarLqg(c) => {
            assert_eq!(c.a, 0.9);
            assert_eq!(c.horizon, 20);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn desk_profile_caps_sample_counts() {
    let cfg = resolve("", true, false, None).unwrap();
    assert!(cfg.desk_scale);
    assert_eq!(cfg.n_samples, 5000);
    assert_eq!(cfg.n_eval, 500);
    let small = resolve(r#"{"n_samples": 300, "n_eval": 100}"#, true, false, None).unwrap();
    assert_eq!((small.n_samples, small.n_eval), (300, 100));
    assert_eq!(validate_config(r#"{"desk_scale": true}"#).unwrap(), cfg);
}

#[test]
fn environment_seed_and_flags_override() {
    let cfg = resolve(r#"{"seed": 3}"#, false, true, Some("17")).unwrap();
    assert_eq!(cfg.seed, 17);
    assert!(!cfg.certify);
    assert_eq!(resolve(r#"{"seed": 3}"#, false, false, None).unwrap().seed, 3);
    assert!(resolve("", false, false, Some("minus one")).is_err());
}

#[test]
fn hash_ignores_sweep_values_and_output_dir() {
    let a = validate_config(r#"{"sigma_v": [0.1], "output_dir": "x"}"#).unwrap();
    let b = validate_config(r#"{"sigma_v": [0.1, 5]}"#).unwrap();
    assert_eq!(a.hash(), b.hash());
    let c = validate_config(r#"{"seed": 1}"#).unwrap();
    assert_ne!(a.hash(), c.hash());
    assert_ne!(a.hash(), a.clone().desk().hash());
    assert_eq!(a.hash().len(), 64);
}

#[test]
fn resolved_config_round_trips() {
    for cfg in [
        ExperimentConfig::default(),
        resolve(r#"{"system": {"name": "double_integrator"}, "epsilon": 0.01}"#, true, true, Some("5")).unwrap(),
    ] {
        assert_eq!(validate_config(&cfg.to_pretty_json()).unwrap(), cfg);
    }
}
