use std::path::Path;
use std::process::{Command, Output};

fn dprlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dprlab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    let mut rows = vec![header];
    rows.extend(r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()));
    rows
}

#[test]
fn entropy_check_reports_finite_bracket() {
    let o = dprlab(&["entropy-check", "--family", "critical", "--alpha", "-2", "--format", "jsonl"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(v["status"], "finite");
    assert!(v["width"].as_f64().unwrap() < 1e-4);
    assert!((v["value"].as_f64().unwrap() - 2.08).abs() < 0.01);
}

#[test]
fn free_energy_at_beta_zero_is_zero() {
    let o = dprlab(&["free-energy", "--beta", "0", "--replicas", "4", "--n", "5", "--m", "3"]);
    assert_eq!(o.status.code(), Some(0));
    let rows = csv_rows(&stdout(&o));
    let col = rows[0].iter().position(|h| h == "p_hat").unwrap();
    assert_eq!(rows[1][col], "0.0");
}

#[test]
fn uniform_identity_subcommand() {
    let o = dprlab(&["order-stats", "--identity-n", "2", "--replicas", "100000", "--format", "jsonl"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    let (f, se) = (v["freq"].as_f64().unwrap(), v["stderr"].as_f64().unwrap());
    assert!((f - 0.4).abs() <= 4.0 * se);
}

#[test]
fn exit_codes() {
    assert_eq!(dprlab(&["mean-w", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(dprlab(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(dprlab(&["condition-c", "--gamma", "0.4"]).status.code(), Some(2));
    assert_eq!(dprlab(&["mean-w", "--m", "0"]).status.code(), Some(2));
    assert_eq!(
        dprlab(&["coarse-grain-demo", "--family", "nearest_neighbor"]).status.code(),
        Some(2)
    );
    assert_eq!(dprlab(&["--help"]).status.code(), Some(0));
}

#[test]
fn check_lists_defaults_for_empty_config() {
    let o = dprlab(&["free-energy", "--check"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.lines().count() > 3);
    assert!(text.contains("default replicas"));
    assert!(!text.contains("\"error\""));
}

#[test]
fn rows_are_deterministic_and_stamped() {
    let args = ["mean-w", "--betas", "0.5,1.0", "--n", "6", "--m", "5", "--replicas", "50", "--seed", "9"];
    let a = dprlab(&args);
    let mut with_workers = args.to_vec();
    with_workers.extend(["--workers", "1"]);
    let b = dprlab(&with_workers);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let rows = csv_rows(&stdout(&a));
    assert_eq!(&rows[0][..3], ["seed", "config_digest", "version"]);
    assert_eq!(rows.len(), 3);
    for r in &rows[1..] {
        assert_eq!(r[0], "9");
        assert_eq!(r[1].len(), 16);
        assert_eq!(r[2], env!("CARGO_PKG_VERSION"));
    }
    let other = dprlab(&["mean-w", "--betas", "0.5,1.0", "--n", "6", "--m", "5", "--replicas", "50", "--seed", "10"]);
    assert_ne!(a.stdout, other.stdout);
}

#[test]
fn config_file_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "family = \"loglog_tail\"\nb = 1.0\nn_grid = [10000, 100000]\ngamma = 0.6\nseed = 4\n",
    )
    .unwrap();
    let out = dir.path().join("c.csv");
    let o = dprlab(&[
        "condition-c",
        "--config",
        cfg.to_str().unwrap(),
        "--gamma",
        "0.75",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&std::fs::read_to_string(&out).unwrap());
    assert_eq!(rows.len(), 3);
    let g = rows[0].iter().position(|h| h == "gamma").unwrap();
    assert_eq!(rows[1][g], "0.75");
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(Path::new(&format!("{}.meta.json", out.display()))).unwrap())
            .unwrap();
    assert_eq!(meta["config"]["family"], "loglog_tail");
    assert_eq!(meta["config"]["gamma"], 0.75);
    assert_eq!(meta["config"]["seed"], 4);
    assert_eq!(meta["config_digest"], rows[1][1].as_str());
    assert!(meta["config"].get("alpha").is_none());

    std::fs::write(&cfg, "unknown_key = 3\n").unwrap();
    let bad = dprlab(&["mean-w", "--config", cfg.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn martingale_and_lemma_subcommands() {
    let o = dprlab(&["martingale-check", "--n", "3", "--m", "2", "--beta", "1", "--format", "jsonl"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert!(v["max_discrepancy"].as_f64().unwrap() <= 1e-10);
    let o = dprlab(&["lemma-a1", "--p", "0.1", "--betas", "10,50"]);
    assert_eq!(o.status.code(), Some(0));
    let rows = csv_rows(&stdout(&o));
    let col = rows[0].iter().position(|h| h == "excess").unwrap();
    let last: f64 = rows[2][col].parse().unwrap();
    assert!((last - 10f64.ln()).abs() < 1e-6);
}

#[test]
fn remaining_subcommands_run() {
    for args in [
        vec!["sample-walk", "--n", "5", "--family", "log_tail"],
        vec!["size-bias-test", "--n-grid", "4,8", "--m", "6", "--replicas", "40"],
        vec!["coarse-grain-demo", "--n-grid", "3,4", "--replicas", "100"],
        vec!["order-stats", "--n", "400", "--replicas", "30"],
    ] {
        let o = dprlab(&args);
        assert_eq!(o.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(csv_rows(&stdout(&o)).len() > 1);
    }
}
