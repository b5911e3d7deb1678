use std::path::Path;
use std::process::{Command, Output};

fn rommeo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rommeo")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("cfg.json");
    let cfg = r#"{
        "game": "climbing",
        "agents": [{"kind": "rommeo_q"}, {"kind": "rommeo_q"}],
        "episodes": 8,
        "trials": 2,
        "seed": 3
    }"#;
    std::fs::write(&path, cfg).unwrap();
    path
}

#[test]
fn solve_prints_tables_and_argmax() {
    let out = rommeo(&["solve", "--game", "climbing", "--alpha", "1", "--gamma", "0"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("Q*(a, b)") && text.contains("V*") && text.contains("pi*(a | b)") && text.contains("rho*(b)"));
    assert!(text.contains("joint argmax (own, opponent) = (0, 0)"));
}

#[test]
fn solve_rejects_unknown_game() {
    let out = rommeo(&["solve", "--game", "chess"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown game id"));
}

#[test]
fn check_reports_json_and_rejects_empty_suite() {
    let out = rommeo(&["check", "--suite", "environment"]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["passed"], true);
    assert!(report["properties"][0]["samples"].as_u64().unwrap() >= 11);

    let out = rommeo(&["check", "--suite", ""]);
    assert!(!out.status.success());
}

#[test]
fn run_then_plot_writes_the_results_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let out_dir = tmp.path().join("res");
    let out = rommeo(&["run", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap(), "--workers", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["config.json", "summary.json", "trial_0.csv", "trial_1.csv", "learning_curve.svg", "convergence.svg", "rho_vs_pi.svg"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    std::fs::remove_file(out_dir.join("convergence.svg")).unwrap();
    let out = rommeo(&["plot", "--results", out_dir.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(out_dir.join("convergence.svg").exists());
}

#[test]
fn run_overrides_and_reproducibility() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let dirs = [tmp.path().join("a"), tmp.path().join("b")];
    for (d, w) in dirs.iter().zip(["1", "3"]) {
        let out = rommeo(&[
            "run", "--config", cfg.to_str().unwrap(), "--out", d.to_str().unwrap(), "--trials", "3", "--seed", "11",
            "--workers", w, "--no-plots",
        ]);
        assert!(out.status.success());
    }
    for k in 0..3 {
        let f = format!("trial_{k}.csv");
        assert_eq!(std::fs::read(dirs[0].join(&f)).unwrap(), std::fs::read(dirs[1].join(&f)).unwrap());
    }
    let echoed: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dirs[0].join("config.json")).unwrap()).unwrap();
    assert_eq!(echoed["trials"], 3);
    assert_eq!(echoed["seed"], 11);
}

#[test]
fn bad_config_reports_location() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.json");
    std::fs::write(&path, "{\n  \"game\": \"climbing\",\n  \"episodes\": \"ten\"\n}").unwrap();
    let out = rommeo(&["run", "--config", path.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("line"));
}
