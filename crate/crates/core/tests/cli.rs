use std::path::{Path, PathBuf};

use tc_sizer::cli::{emit_system_spec, parse_system_spec, run_command_with_env};

fn spec(name: &str) -> String {
    let p: PathBuf = Path::new(env!("CARGO_MANIFEST_DIR")).join("specs").join(name);
    p.to_str().unwrap().to_string()
}

fn run(args: &[&str], env_seed: Option<&str>) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let argv = std::iter::once("tc-sizer").chain(args.iter().copied());
    let code = run_command_with_env(argv, env_seed.map(String::from), &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn json(text: &str) -> serde_json::Value {
    serde_json::from_str(text).unwrap()
}

#[test]
fn analyze_time_critical_table_vi() {
    let (code, out, _) = run(&["analyze", &spec("table-vi-tc.json")], None);
    assert_eq!(code, 0);
    let doc = json(&out);
    assert_eq!(doc["analytics"]["TC2"]["end_to_end_ns"], 3_600_000_000_000u64);
    assert_eq!(doc["analytics"]["TC1"]["end_to_end_ns"], 7_200_000_000_000u64);
    assert_eq!(doc["system_feasible"], true);
    // priorities were absent and got assigned deadline-monotonically
    assert_eq!(doc["stages"]["TC2"]["priority"], 2);
}

#[test]
fn analyze_general_purpose_table_vi() {
    let (code, out, _) = run(&["analyze", &spec("table-vi-gp.json")], None);
    assert_eq!(code, 2);
    let doc = json(&out);
    assert_eq!(doc["analytics"]["TC2"]["end_to_end_ns"], 7_200_000_000_000u64);
    assert_eq!(doc["analytics"]["TC2"]["feasible"], false);
    assert_eq!(doc["system_feasible"], false);
}

#[test]
fn size_microblog() {
    let (code, out, _) = run(&["size", &spec("microblog.json"), "--freqs", "1,4000", "--umax", "1"], None);
    assert_eq!(code, 0);
    assert_eq!(out, "frequency_hz,total_utilization,min_cores\n1,0.001145,1\n4000,4.58,6\n");
}

#[test]
fn size_falls_back_to_spec_options() {
    let (_, with_flags, _) = run(&["size", &spec("microblog.json"), "--freqs", "1,4000"], None);
    let (_, from_options, _) = run(&["size", &spec("microblog.json")], None);
    assert_eq!(with_flags, from_options);
}

#[test]
fn decimate_writes_documented_header() {
    let (code, out, _) = run(&["decimate", &spec("microblog.json"), "--factors", "1,10", "--freq", "1000"], None);
    assert_eq!(code, 0);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("factor,end_to_end_ns,aggregator_utilization,cores_saved"));
    assert_eq!(lines.next(), Some("1,1272000,0.511,0"));
    assert_eq!(lines.count(), 1);
}

#[test]
fn compare_reports_both_counts() {
    let (code, out, _) = run(&["compare", &spec("microblog.json")], None);
    assert_eq!(code, 0);
    let doc = json(&out);
    assert_eq!(doc["ours_cores"], 1);
    assert_eq!(doc["baseline_cores"], 1);
}

#[test]
fn simulate_writes_trace_and_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let (code, out, _) = run(
        &["simulate", &spec("table-vi-tc.json"), "--trace-out", trace.to_str().unwrap()],
        None,
    );
    assert_eq!(code, 0);
    let doc = json(&out);
    assert_eq!(doc["conservative"], true);
    assert_eq!(doc["observed"]["analytics"]["TC2"], 3_600_000_000_000u64);
    let csv = std::fs::read_to_string(trace).unwrap();
    assert!(csv.starts_with("time_ns,core,kind,stage,job\n"));
    assert!(csv.contains("3600000000000,core0,COMPLETE,TC2,0\n"));
}

#[test]
fn simulate_exit_code_follows_analysis() {
    let (code, out, _) = run(&["simulate", &spec("table-vi-gp.json")], None);
    assert_eq!(code, 2);
    assert_eq!(json(&out)["conservative"], true);
}

#[test]
fn seed_precedence() {
    let m = spec("microblog.json");
    let args = |seed: Option<&'static str>| {
        let mut a = vec!["simulate", m.as_str(), "--horizon", "3s", "--release", "jittered"];
        if let Some(s) = seed {
            a.extend(["--seed", s]);
        }
        a
    };
    let seed_of = |out: &str| json(out)["seed"].as_u64().unwrap();
    assert_eq!(seed_of(&run(&args(None), None).1), 0);
    assert_eq!(seed_of(&run(&args(None), Some("11")).1), 11);
    assert_eq!(seed_of(&run(&args(Some("5")), Some("11")).1), 5);
    let (code, _, err) = run(&args(None), Some("eleven"));
    assert_eq!(code, 1);
    assert_eq!(err.lines().count(), 1);
}

#[test]
fn input_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        r#"{"analytics": [{"id": "a", "deadline": "1s", "topology": "s",
            "stages": [{"id": "s", "cost": "1ms", "inter_arrival": "1s"}]}],
            "cluster": [{"id": "core0", "capacity": 1}]}"#,
    )
    .unwrap();
    for args in [
        vec!["analyze", bad.to_str().unwrap()],
        vec!["analyze"],
        vec!["size", "/no/such/file.json", "--freqs", "1"],
        vec!["decimate", &spec("microblog.json"), "--factors", "0", "--freq", "1000"],
    ] {
        let (code, out, err) = run(&args, None);
        assert_eq!(code, 1, "{args:?}");
        assert!(out.is_empty());
        assert_eq!(err.lines().count(), 1, "{err}");
    }
    let (_, _, err) = run(&["analyze", bad.to_str().unwrap()], None);
    assert!(err.contains("/analytics/0/stages/0/deadline"), "{err}");
}

#[test]
fn invalid_system_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("overcost.json");
    std::fs::write(
        &path,
        r#"{"analytics": [{"id": "a", "deadline": "1s", "topology": "s",
            "stages": [{"id": "s", "cost": "2s", "inter_arrival": "1s", "deadline": "1s"}]}],
            "cluster": [{"id": "core0", "capacity": 1}]}"#,
    )
    .unwrap();
    let (code, _, err) = run(&["analyze", path.to_str().unwrap()], None);
    assert_eq!(code, 1);
    assert!(err.contains("cost exceeds deadline"));
}

#[test]
fn shipped_specs_round_trip() {
    for name in ["table-vi-tc.json", "table-vi-gp.json", "microblog.json"] {
        let parsed = parse_system_spec(&std::fs::read_to_string(spec(name)).unwrap()).unwrap();
        assert_eq!(parse_system_spec(&emit_system_spec(&parsed)).unwrap(), parsed, "{name}");
    }
}

#[test]
fn help_exits_zero() {
    let (code, out, _) = run(&["--help"], None);
    assert_eq!(code, 0);
    for cmd in ["analyze", "size", "decimate", "simulate", "compare"] {
        assert!(out.contains(cmd));
    }
}
