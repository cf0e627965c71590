use std::io::Write;
use std::process::{Command, Output, Stdio};

use gna_cli::commands::{AnalyzeReport, PredictReport, RenderReport, SweepReport};
use gna_cli::verify::VerifyReport;
use serde_json::json;

const HUNYUAN: &str = r#"{
  "layout": {"extents": [30, 48, 80]},
  "gna": {"window": [18, 24, 24], "stride": [16, 8, 8]},
  "tiles": {"q_tile": [4, 8, 8], "kv_tile": [2, 8, 8]}
}"#;

fn gnasim(args: &[&str], stdin: &str) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_gnasim"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(stdin.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn with(base: &str, key: &str, value: serde_json::Value) -> String {
    let mut v: serde_json::Value = serde_json::from_str(base).unwrap();
    v[key] = value;
    v.to_string()
}

fn stdout_json<T: serde::de::DeserializeOwned>(out: &Output) -> T {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn analyze_hunyuan_perfect_stride() {
    let out = gnasim(&["analyze"], HUNYUAN);
    let raw: serde_json::Value = stdout_json(&out);
    assert_eq!(raw["simulated_speedup"], json!(11.11));
    assert_eq!(raw["perfect_bs"], json!(true));
    assert_eq!(raw["exact"]["simulated_speedup"], json!({"num": 100, "den": 9}));
    assert!(raw.get("e2e_speedup").is_none());
    let report: AnalyzeReport = stdout_json(&out);
    assert_eq!(report.sparsity, Some(0.91));
}

#[test]
fn analyze_with_workload_reports_e2e() {
    let config = with(
        HUNYUAN,
        "workload",
        json!({"sa_share": 0.607, "total_steps": 50, "sparse_steps": 35}),
    );
    let out = gnasim(&["analyze"], &config);
    let raw: serde_json::Value = stdout_json(&out);
    assert_eq!(raw["e2e_speedup"], json!(1.63));
}

#[test]
fn stride_exceeding_window_is_a_validation_error() {
    let config = with(HUNYUAN, "gna", json!({"window": [18, 24, 24], "stride": [16, 25, 8]}));
    let out = gnasim(&["analyze"], &config);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("axis 1"), "{err}");
    assert!(out.stdout.is_empty());
}

#[test]
fn malformed_and_unknown_keys_exit_2() {
    for config in [
        "{",
        r#"{"layout":{"extents":[4]},"colour":1}"#,
        r#"{"layout":{"extents":[0]}}"#,
    ] {
        let out = gnasim(&["render"], config);
        assert_eq!(out.status.code(), Some(2), "{config}");
    }
    let out = gnasim(&["analyze", "--config", "/nonexistent/gna.json"], "");
    assert_eq!(out.status.code(), Some(2));
    let out = gnasim(&["predict"], HUNYUAN);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("workload"));
}

#[test]
fn json_reports_round_trip() {
    let analyze: AnalyzeReport = stdout_json(&gnasim(&["analyze"], HUNYUAN));
    assert_eq!(
        serde_json::from_str::<AnalyzeReport>(&serde_json::to_string(&analyze).unwrap()).unwrap(),
        analyze
    );

    let small = r#"{"layout":{"extents":[12,12]},"gna":{"window":[6,6]},"tiles":{"q_tile":[2,2],"kv_tile":[3,3]},
                    "workload":{"sa_share":"0.5","total_steps":10,"sparse_steps":7}}"#;
    let sweep: SweepReport = stdout_json(&gnasim(&["sweep"], small));
    assert_eq!(sweep.evaluated, 36);
    let predict: PredictReport = stdout_json(&gnasim(&["predict"], small));
    assert_eq!(predict.rows.len(), sweep.retained.len());
    let verify: VerifyReport = stdout_json(&gnasim(&["verify", "--trials", "4"], ""));
    assert!(verify.passed);
    let render: RenderReport = stdout_json(&gnasim(&["render", "--format", "json"], small));
    assert_eq!(render.tokens, 144);
    assert_eq!(render.attended, 144 * 36);
}

#[test]
fn output_is_byte_stable() {
    for args in [
        &["analyze"][..],
        &["sweep", "--jobs", "1"],
        &["sweep", "--jobs", "3", "--format", "csv"],
    ] {
        let a = gnasim(args, HUNYUAN);
        let b = gnasim(args, HUNYUAN);
        assert!(a.status.success());
        assert_eq!(a.stdout, b.stdout, "{args:?}");
    }
    let one = gnasim(&["sweep", "--jobs", "1"], HUNYUAN);
    let many = gnasim(&["sweep", "--jobs", "4"], HUNYUAN);
    assert_eq!(one.stdout, many.stdout);
    let a = gnasim(&["verify", "--seed", "11", "--trials", "6"], "");
    let b = gnasim(&["verify", "--seed", "11", "--trials", "6"], "");
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn sweep_csv_rows_bounded_by_stride_space() {
    let out = gnasim(&["sweep", "--format", "csv"], HUNYUAN);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "stride_0,stride_1,stride_2,dense_kv_tiles,visited_max,visited_mean,simulated_speedup,flopwise_speedup,perfect_bs,masked_flop_fraction"
    );
    let rows: Vec<&str> = lines.collect();
    assert!(!rows.is_empty() && rows.len() <= 18 * 24 * 24);
    assert!(rows[0].starts_with("1,1,1,900,275,"), "{}", rows[0]);
    assert!(rows.iter().any(|r| r.contains(",11.11,11.11,true,")));
}

#[test]
fn render_ascii_and_pgm() {
    // blocked attention on 4 tokens: two 2x2 blocks
    let config = r#"{"layout":{"extents":[4]},"gna":{"window":[2],"stride":[2]}}"#;
    let out = gnasim(&["render"], config);
    assert_eq!(String::from_utf8(out.stdout).unwrap(), "##..\n##..\n..##\n..##\n");

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mask.pgm");
    let out = gnasim(&["render", "--format", "pgm", "--out", path.to_str().unwrap()], config);
    assert!(out.status.success() && out.stdout.is_empty());
    let bytes = std::fs::read(&path).unwrap();
    let header = b"P5\n4 4\n255\n";
    assert_eq!(&bytes[..header.len()], header);
    assert_eq!(&bytes[header.len()..header.len() + 4], &[255, 255, 0, 0]);
    assert_eq!(bytes.len(), header.len() + 16);

    let out = gnasim(&["render", "--format", "csv"], config);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_file_and_format_override() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.json");
    std::fs::write(&path, with(HUNYUAN, "output", json!({"format": "csv", "precision": 3}))).unwrap();
    let out = gnasim(&["analyze", "--config", path.to_str().unwrap()], "");
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().nth(1).unwrap().contains(",11.111,"), "{text}");
    let out = gnasim(&["analyze", "--config", path.to_str().unwrap(), "--format", "json"], "");
    let raw: serde_json::Value = stdout_json(&out);
    assert_eq!(raw["simulated_speedup"], json!(11.111));
}

#[test]
fn verify_default_passes() {
    let out = gnasim(&["verify"], "");
    let report: VerifyReport = stdout_json(&out);
    assert_eq!(report.bound, vec![8, 8]);
    assert!(report.suites.iter().all(|s| s.passed && s.checked > 0), "{report:?}");
}

#[test]
fn verify_catches_injected_window_fault() {
    let out = gnasim(&["verify", "--inject-fault", "window-left-off-by-one"], "");
    assert_eq!(out.status.code(), Some(3));
    let report: VerifyReport = serde_json::from_slice(&out.stdout).unwrap();
    let fixed = report.suites.iter().find(|s| s.name == "fixed-count").unwrap();
    assert!(!fixed.passed && !fixed.examples.is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).contains("fixed-count"));
}

#[test]
fn verify_uses_config_layout_as_bound() {
    let out = gnasim(&["verify", "--trials", "5"], r#"{"layout":{"extents":[3,4,5]}}"#);
    let report: VerifyReport = stdout_json(&out);
    assert_eq!(report.bound, vec![3, 4, 5]);
}

#[test]
fn predict_listed_speedups() {
    let config = r#"{"workload":{"sa_share":0.607,"total_steps":50,"sparse_steps":35},
                     "predict":{"s_op":["100/9","900/275"]}}"#;
    let report: PredictReport = stdout_json(&gnasim(&["predict"], config));
    let e2e: Vec<f64> = report.rows.iter().map(|r| r.e2e_speedup).collect();
    assert_eq!(e2e, vec![1.63, 1.42]);
    assert_eq!(report.ceiling, Some(1.74));
    let out = gnasim(&["predict", "--format", "csv"], config);
    assert_eq!(
        String::from_utf8(out.stdout).unwrap(),
        "stride,s_op,e2e_speedup\n,11.11,1.63\n,3.27,1.42\n"
    );
}
