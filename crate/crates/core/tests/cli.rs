//! End-to-end checks of the command-line interface: exit codes, config
//! echo, and artifact emission.

use std::path::Path;
use std::process::Command;

fn otbench() -> Command {
    Command::new(env!("CARGO_BIN_EXE_otbench"))
}

#[test]
fn oracle_check_writes_reports_and_exits_zero() {
    let dir = std::env::temp_dir().join("otbench-cli-oracle");
    let _ = std::fs::remove_dir_all(&dir);
    let output = otbench()
        .args([
            "oracle-check",
            "--seed",
            "5",
            "--out-dir",
            dir.to_str().unwrap(),
            "--format",
            "csv,json",
        ])
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    assert!(dir.join("records.csv").exists());
    assert!(dir.join("report.json").exists());
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(json["extras"]["oracle/pass"], serde_json::json!(true));
    assert_eq!(json["seed"], serde_json::json!(5));
}

#[test]
fn missing_config_file_exits_two() {
    let output = otbench()
        .args(["approx", "--config", "/nonexistent/nowhere.toml"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn malformed_config_exits_two() {
    let dir = std::env::temp_dir().join("otbench-cli-bad");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("bad.toml");
    std::fs::write(&path, "experiment = \"approx\"\n[dataset]\nkind = \"nope\"\n").unwrap();
    let output = otbench()
        .args(["approx", "--config", path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn config_experiment_must_match_subcommand() {
    let dir = std::env::temp_dir().join("otbench-cli-mismatch");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("cfg.toml");
    std::fs::write(
        &path,
        "experiment = \"stability\"\n[dataset]\nkind = \"synthetic-mnist\"\nsize = 64\n",
    )
    .unwrap();
    let output = otbench()
        .args(["approx", "--config", path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn print_config_round_trips() {
    let output = otbench()
        .args(["toy-wgan", "--print-config", "--seed", "99"])
        .output()
        .unwrap();
    assert!(output.status.success());
    let text = String::from_utf8(output.stdout).unwrap();
    assert!(text.contains("experiment = \"toy-wgan\""));
    assert!(text.contains("seed = 99"));
    // The echoed config is itself loadable.
    let dir = std::env::temp_dir().join("otbench-cli-echo");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("echo.toml");
    std::fs::write(&path, &text).unwrap();
    let echoed = otbench()
        .args([
            "toy-wgan",
            "--config",
            path.to_str().unwrap(),
            "--print-config",
        ])
        .output()
        .unwrap();
    assert!(echoed.status.success());
}

#[test]
fn tiny_approx_run_emits_consistent_artifacts() {
    let dir = std::env::temp_dir().join("otbench-cli-approx");
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = r#"
experiment = "approx"
seed = 3

[dataset]
kind = "synthetic-mnist"
size = 128
dim = 4
clusters = 3

[protocol]
train_iters = 4
eval_batches = 3
batch_size = 8
repeats = 1

[[methods]]
kind = "ct"
"#;
    let path = dir.join("cfg.toml");
    std::fs::write(&path, cfg).unwrap();
    let run = |out: &Path| {
        let output = otbench()
            .args([
                "approx",
                "--config",
                path.to_str().unwrap(),
                "--out-dir",
                out.to_str().unwrap(),
            ])
            .output()
            .unwrap();
        assert!(
            output.status.success(),
            "stderr: {}",
            String::from_utf8_lossy(&output.stderr)
        );
    };
    let (out_a, out_b) = (dir.join("a"), dir.join("b"));
    run(&out_a);
    run(&out_b);
    for name in ["records.csv", "report.json", "trace.svg"] {
        assert!(out_a.join(name).exists(), "{name} missing");
    }
    // Seeded reruns emit byte-identical CSV.
    let csv_a = std::fs::read(out_a.join("records.csv")).unwrap();
    let csv_b = std::fs::read(out_b.join("records.csv")).unwrap();
    assert_eq!(csv_a, csv_b);
    let svg = std::fs::read_to_string(out_a.join("trace.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
    assert!(svg.contains("polyline"));
}
