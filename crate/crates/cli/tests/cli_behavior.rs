//! End-to-end checks of the command line surface: output formats, file
//! outputs, exit codes and flag validation, all exercised through the real
//! binary.

use std::path::Path;
use std::process::{Command, Output};

fn flowchain(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flowchain"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_of(output: &Output) -> String {
    String::from_utf8(output.stdout.clone()).expect("stdout is UTF-8")
}

fn fixture(name: &str) -> String {
    format!(
        "{}/../../scenarios/{name}",
        env!("CARGO_MANIFEST_DIR")
    )
}

#[test]
fn optimal_prints_the_reference_table() {
    let output = flowchain(&["optimal"]);
    assert!(output.status.success());
    let text = stdout_of(&output);
    let value_of = |key: &str| -> String {
        let line = text
            .lines()
            .find(|line| line.starts_with(key))
            .unwrap_or_else(|| panic!("table misses row {key:?}:\n{text}"));
        line.split_whitespace().last().unwrap().to_owned()
    };
    assert_eq!(value_of("reward rate"), "10");
    assert_eq!(value_of("effort"), "24");
    assert_eq!(value_of("verifier utility"), "90");
    assert_eq!(value_of("vi utility"), "0");
    assert_eq!(value_of("welfare"), "90");
    assert_eq!(value_of("benchmark welfare"), "75");
    assert_eq!(value_of("welfare ratio"), "1.2");
}

#[test]
fn optimal_json_carries_contract_benchmark_and_ratio() {
    let output = flowchain(&[
        "optimal", "--json", "--p", "0.5", "--eps", "0.5", "--alpha", "0.5", "--beta", "10",
    ]);
    assert!(output.status.success());
    let value: serde_json::Value =
        serde_json::from_str(&stdout_of(&output)).expect("output is JSON");
    assert_eq!(value["contract"]["reward"], 10.0);
    assert_eq!(value["contract"]["effort"], 24.0);
    assert_eq!(value["contract"]["welfare"], 90.0);
    assert_eq!(value["benchmark"]["reward"], 5.0);
    assert_eq!(value["benchmark"]["welfare"], 75.0);
    assert_eq!(value["welfare_ratio"], 1.2);
    assert_eq!(value["params"]["beta"], 10.0);
}

#[test]
fn invalid_input_exits_with_the_usage_code() {
    let bad_probability = flowchain(&["optimal", "--p", "1.5"]);
    assert_eq!(bad_probability.status.code(), Some(2));
    assert!(!bad_probability.stderr.is_empty());

    let bad_grid = flowchain(&["sweep", "--vary", "epsilon", "--grid", "abc"]);
    assert_eq!(bad_grid.status.code(), Some(2));

    let unknown_subcommand = flowchain(&["frobnicate"]);
    assert_eq!(unknown_subcommand.status.code(), Some(2));

    let missing_file = flowchain(&["simulate", "--scenario", "/nonexistent/path.json"]);
    assert_eq!(missing_file.status.code(), Some(2));
}

#[test]
fn sweep_streams_csv_rows_for_the_grid() {
    let output = flowchain(&["sweep", "--vary", "p", "--grid", "0.2:0.2:0.8"]);
    assert!(output.status.success());
    let text = stdout_of(&output);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "value,mechanism,r,s,welfare");
    // four grid values, two mechanism rows each
    assert_eq!(lines.len(), 9);
    assert!(lines[1].starts_with("0.2,contract,"));
    assert!(lines[2].starts_with("0.2,stackelberg,"));
    assert!(lines[7].starts_with("0.8,contract,"));
    for line in &lines[1..] {
        assert_eq!(line.split(',').count(), 5, "malformed row {line:?}");
    }
}

#[test]
fn sweep_writes_csv_and_svg_files() {
    let dir = tempfile::tempdir().expect("tempdir");
    let csv_path = dir.path().join("sweep.csv");
    let svg_path = dir.path().join("sweep.svg");
    let output = flowchain(&[
        "sweep",
        "--vary",
        "epsilon",
        "--grid",
        "0.1,0.5,0.9",
        "--out",
        csv_path.to_str().unwrap(),
        "--svg",
        svg_path.to_str().unwrap(),
    ]);
    assert!(output.status.success());

    let csv = std::fs::read_to_string(&csv_path).expect("CSV written");
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "value,mechanism,r,s,welfare");
    assert_eq!(lines.len(), 7);

    let svg = std::fs::read_to_string(&svg_path).expect("SVG written");
    assert!(svg.starts_with("<svg"));
    assert!(svg.ends_with("</svg>\n") || svg.ends_with("</svg>"));
    assert!(svg.contains("epsilon"), "chart should label the axis");
    assert!(svg.contains("contract") && svg.contains("stackelberg"));
}

#[test]
fn simulate_emits_metrics_and_writes_requested_files() {
    let dir = tempfile::tempdir().expect("tempdir");
    let csv_path = dir.path().join("flows.csv");
    let events_path = dir.path().join("events.jsonl");
    let report_path = dir.path().join("report.json");
    let output = flowchain(&[
        "simulate",
        "--name",
        "cli-behavior",
        "--seed",
        "11",
        "--flows",
        "4",
        "--interarrival",
        "5",
        "--out",
        csv_path.to_str().unwrap(),
        "--events",
        events_path.to_str().unwrap(),
        "--report",
        report_path.to_str().unwrap(),
    ]);
    assert!(output.status.success());

    let metrics: serde_json::Value =
        serde_json::from_str(&stdout_of(&output)).expect("metrics are JSON");
    assert_eq!(metrics["scenario"], "cli-behavior");
    assert_eq!(metrics["seed"], 11);
    assert_eq!(metrics["flows_submitted"], 4);
    assert_eq!(metrics["flows_committed"], 4);
    let digest = metrics["event_digest"].as_str().expect("digest present");
    assert_eq!(digest.len(), 64);

    let csv = std::fs::read_to_string(&csv_path).expect("flow CSV written");
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "fid,outcome,latency,plan,reward");
    assert_eq!(lines.len(), 5);
    for line in &lines[1..] {
        assert!(line.contains(",committed,"), "unexpected outcome in {line:?}");
    }

    let events = std::fs::read_to_string(&events_path).expect("event log written");
    let event_lines: Vec<&str> = events.lines().collect();
    assert!(event_lines.len() > 4);
    for line in &event_lines {
        let event: serde_json::Value = serde_json::from_str(line).expect("event line is JSON");
        assert!(event["tick"].is_u64(), "event misses tick: {line}");
    }
    assert!(event_lines.last().unwrap().contains("sim-end"));

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report_path).expect("report written"))
            .expect("report is JSON");
    assert_eq!(report["metrics"]["event_digest"], digest);
    assert_eq!(report["flows"].as_array().unwrap().len(), 4);
    assert_eq!(
        report["events"].as_array().unwrap().len(),
        event_lines.len()
    );
}

#[test]
fn simulate_rejects_mixing_scenario_file_with_builder_flags() {
    let scenario = fixture("demo_legit.json");
    assert!(Path::new(&scenario).exists(), "fixture missing: {scenario}");
    let output = flowchain(&["simulate", "--scenario", &scenario, "--flows", "5"]);
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr).to_string();
    assert!(stderr.contains("--scenario"), "unhelpful error: {stderr}");

    // the seed override is the one allowed companion
    let with_seed = flowchain(&["simulate", "--scenario", &scenario, "--seed", "99"]);
    assert!(with_seed.status.success());
    let metrics: serde_json::Value =
        serde_json::from_str(&stdout_of(&with_seed)).expect("metrics are JSON");
    assert_eq!(metrics["seed"], 99);
}

#[test]
fn scenario_files_reproduce_their_recorded_digest() {
    let scenario = fixture("demo_malicious.json");
    let first = flowchain(&["simulate", "--scenario", &scenario]);
    let second = flowchain(&["simulate", "--scenario", &scenario]);
    assert!(first.status.success() && second.status.success());
    assert_eq!(first.stdout, second.stdout, "reruns must be byte-identical");
    let metrics: serde_json::Value =
        serde_json::from_str(&stdout_of(&first)).expect("metrics are JSON");
    assert!(metrics["malicious_submitted"].as_u64().unwrap() > 0);
    assert_eq!(metrics["malicious_committed"], 0);
}

#[test]
fn verify_exit_codes_separate_conformant_denied_and_errors() {
    let conformant = flowchain(&[
        "verify",
        "--request",
        &fixture("verify/request_conformant.json"),
        "--policy",
        &fixture("verify/policy.json"),
        "--topology",
        &fixture("verify/topology.json"),
    ]);
    assert_eq!(conformant.status.code(), Some(0));
    let verdict: serde_json::Value =
        serde_json::from_str(&stdout_of(&conformant)).expect("verdict is JSON");
    assert_eq!(verdict["verdict"], "conformant");
    assert_eq!(verdict["plan"], "complex");
    assert!(verdict["read_set"].as_array().unwrap().len() == 2);
    assert!(!verdict["write_set"].as_array().unwrap().is_empty());

    let denied = flowchain(&[
        "verify",
        "--request",
        &fixture("verify/request_denied.json"),
        "--policy",
        &fixture("verify/policy.json"),
        "--topology",
        &fixture("verify/topology.json"),
        "--plan",
        "simple",
    ]);
    assert_eq!(denied.status.code(), Some(1));
    let verdict: serde_json::Value =
        serde_json::from_str(&stdout_of(&denied)).expect("verdict is JSON");
    assert!(verdict["verdict"]["rejected"].is_object());
    assert!(verdict["write_set"].as_array().unwrap().is_empty());

    let missing = flowchain(&[
        "verify",
        "--request",
        "/nonexistent/request.json",
        "--policy",
        &fixture("verify/policy.json"),
        "--topology",
        &fixture("verify/topology.json"),
    ]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn precision_flag_rounds_printed_numbers() {
    let default = flowchain(&["optimal", "--eps", "0.1"]);
    assert!(stdout_of(&default).contains("21.7822"));

    let coarse = flowchain(&["optimal", "--eps", "0.1", "--precision", "3"]);
    let text = stdout_of(&coarse);
    assert!(text.contains("21.8"), "expected 3 significant digits:\n{text}");
    assert!(!text.contains("21.7822"));
}
