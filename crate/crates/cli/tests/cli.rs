use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use trfe_cli::config::validate_config;
use trfe_cli::experiment::{COLUMNS, CONFIG_NAME, CSV_NAME, PLOT_NAME};

const SCALAR: &str = r#"{
  "system": {"name": "scalar_lqg", "a": 0.9, "sigma_w": 0.3, "x0_var": 0.05},
  "n_samples": 1000, "n_betas": 20, "n_alpha": 8, "n_eval": 2000,
  "sigma_v": [0.1, 1.0]
}"#;

fn trfe(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_trfe"));
    cmd.args(args).env_remove("TRFE_SEED").env_remove("TRFE_THREADS").env("RUST_LOG", "error");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn run_in(dir: &Path, config: &str, envs: &[(&str, &str)]) -> Output {
    let cfg = dir.join("config.json");
    fs::write(&cfg, config).unwrap();
    let out = dir.join("out");
    trfe(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], envs)
}

fn data_rows(dir: &Path) -> Vec<String> {
    let text = fs::read_to_string(dir.join("out").join(CSV_NAME)).unwrap();
    text.lines().filter(|l| !l.starts_with('#')).skip(1).map(String::from).collect()
}

fn table(dir: &Path) -> Vec<std::collections::HashMap<String, String>> {
    let text = fs::read_to_string(dir.join("out").join(CSV_NAME)).unwrap();
    let data: String = text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
    let mut rdr = csv::Reader::from_reader(data.as_bytes());
    let headers = rdr.headers().unwrap().clone();
    rdr.records()
        .map(|r| headers.iter().map(String::from).zip(r.unwrap().iter().map(String::from)).collect())
        .collect()
}

fn num(row: &std::collections::HashMap<String, String>, k: &str) -> f64 {
    row[k].parse().unwrap_or_else(|_| panic!("{k} = {:?}", row[k]))
}

#[test]
fn config_errors_exit_2_without_writing() {
    let dir = tempfile::tempdir().unwrap();
    for bad in [r#"{"n_betas": 0}"#, "{", r#"{"sigma_v": [-1]}"#, r#"{"colour": 1}"#] {
        let o = run_in(dir.path(), bad, &[]);
        assert_eq!(o.status.code(), Some(2), "{bad}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!dir.path().join("out").exists());
    }
    let missing = trfe(&["run", "--config", "/nonexistent/trfe.json", "--out", "/tmp/x"], &[]);
    assert_eq!(missing.status.code(), Some(2));
    let no_out = dir.path().join("c.json");
    fs::write(&no_out, "{}").unwrap();
    assert_eq!(trfe(&["run", "--config", no_out.to_str().unwrap()], &[]).status.code(), Some(2));
    assert_eq!(trfe(&["oracle"], &[("TRFE_THREADS", "zero")]).status.code(), Some(2));
}

#[test]
fn run_writes_table_config_and_plot_then_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), SCALAR, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("out");
    for f in [CSV_NAME, CONFIG_NAME, PLOT_NAME] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let echoed = validate_config(&fs::read_to_string(out.join(CONFIG_NAME)).unwrap()).unwrap();
    assert_eq!(echoed, validate_config(SCALAR).unwrap());

    let text = fs::read_to_string(out.join(CSV_NAME)).unwrap();
    assert!(text.contains(&format!("# config_hash: {}", echoed.hash())));
    let header = text.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, COLUMNS.join(","));
    assert_eq!(data_rows(dir.path()).len(), 2);

    let o = run_in(dir.path(), SCALAR, &[]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(fs::read_to_string(out.join(CSV_NAME)).unwrap(), text, "completed rows are not recomputed");

    let extended = SCALAR.replace("[0.1, 1.0]", "[0.1, 1.0, 5.0]");
    assert_eq!(run_in(dir.path(), &extended, &[]).status.code(), Some(0));
    let rows = data_rows(dir.path());
    assert_eq!(rows.len(), 3);
    assert!(fs::read_to_string(out.join(CSV_NAME)).unwrap().starts_with(&text));

    let foreign = SCALAR.replace("\"n_betas\": 20", "\"n_betas\": 21");
    let o = run_in(dir.path(), &foreign, &[]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(data_rows(dir.path()), rows);
}

#[test]
fn equal_configs_give_identical_rows() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(run_in(a.path(), SCALAR, &[]).status.code(), Some(0));
    assert_eq!(run_in(b.path(), SCALAR, &[("TRFE_THREADS", "2")]).status.code(), Some(0));
    assert_eq!(data_rows(a.path()), data_rows(b.path()));

    let c = tempfile::tempdir().unwrap();
    assert_eq!(run_in(c.path(), SCALAR, &[("TRFE_SEED", "9")]).status.code(), Some(0));
    let text = fs::read_to_string(c.path().join("out").join(CSV_NAME)).unwrap();
    assert!(text.contains("# seed: 9"));
    assert_ne!(data_rows(a.path()), data_rows(c.path()));
}

#[test]
fn normalized_columns_and_sandwich() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), SCALAR, &[]);
    assert_eq!(o.status.code(), Some(0));
    for row in table(dir.path()) {
        assert_eq!(row["errors"], "");
        // random initial state
        assert_eq!(row["certified"], "false");
        let ol = num(&row, "j_ol");
        assert_eq!(num(&row, "norm_ol"), 1.0);
        for (raw, norm) in [("j_sc", "norm_sc"), ("j_irr_ol", "norm_irr_ol"), ("j_lqg", "norm_lqg")] {
            assert!((num(&row, norm) - num(&row, raw) / ol).abs() <= 1e-12 * (1.0 + num(&row, norm).abs()));
        }
        let (sc, star, lqg, se) = (num(&row, "j_sc"), num(&row, "j_star"), num(&row, "j_lqg"), num(&row, "se_lqg"));
        assert!(sc <= star, "{sc} > {star}");
        assert!(star <= lqg + 3.0 * se, "{star} > {lqg} + 3·{se}");
        assert!(sc >= num(&row, "j_irr_ol"));
        assert!(num(&row, "i_sc") <= num(&row, "i_ol") + 1e-12);
    }
}

#[test]
fn failed_rows_are_recorded_and_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{
      "system": {"name": "dubins", "horizon": 30},
      "n_samples": 200, "n_betas": 3, "beta_min": 900, "beta_max": 1000,
      "n_alpha": 8, "n_eval": 50, "sigma_v": [0.5, 1]
    }"#;
    let o = run_in(dir.path(), cfg, &[]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = table(dir.path());
    assert_eq!(rows.len(), 2);
    for row in &rows {
        assert!(!row["errors"].is_empty());
        assert_eq!(row["j_sc"], "");
    }
}

#[test]
fn plot_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("t.csv");
    fs::write(&csv, "sigma_v,norm_sc,norm_irr_ol,norm_lqg\n0.1,0.1,-1,0.3\n10,0.9,0.8,1\n").unwrap();
    let svg = dir.path().join("p.svg");
    let args = ["plot", "--in", csv.to_str().unwrap(), "--out", svg.to_str().unwrap()];
    assert_eq!(trfe(&args, &[]).status.code(), Some(0));
    let first = fs::read(&svg).unwrap();
    assert_eq!(trfe(&args, &[]).status.code(), Some(0));
    assert_eq!(fs::read(&svg).unwrap(), first);

    fs::write(&csv, "sigma_v,norm_sc,norm_irr_ol,norm_lqg\n0.1,0.1,-1,0.3\n").unwrap();
    let o = trfe(&args, &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("2"));
}
