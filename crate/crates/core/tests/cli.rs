use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_cran-rsma");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("spawn")
}

const SMALL: [&str; 8] = ["--set", "n_bs=2", "--set", "n_users=3", "--set", "n_files=2", "--set", "m_samples=10"];

fn sweep(out: &Path) -> Output {
    let mut args = vec![
        "sweep",
        "--param",
        "c_max_bps",
        "--values",
        "2e7,6e7",
        "--seeds",
        "0..2",
        "--scheme",
        "all",
        "--no-timing",
        "--set",
        "cache_size_files=1",
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend(SMALL);
    run(&args)
}

#[test]
fn sweep_rows_manifest_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    assert!(sweep(&a).status.success());
    assert!(sweep(&b).status.success());
    let text = std::fs::read_to_string(&a).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "param_value,scheme,seed,mmf_rate_bps,iterations,wall_ms,dropped_streams,status"
    );
    assert_eq!(lines.count(), 2 * 3 * 2);
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("a.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["rows"], 12);
    assert_eq!(manifest["seeds"], serde_json::json!([0, 1]));
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);

    let out = run(&["summarize", a.to_str().unwrap()]);
    assert!(out.status.success());
    let summary = String::from_utf8(out.stdout).unwrap();
    assert_eq!(summary.lines().count(), 1 + 2 * 3);
}

#[test]
fn gain_table() {
    let dir = tempfile::tempdir().unwrap();
    let grouped = dir.path().join("g.csv");
    let single = dir.path().join("s.csv");
    std::fs::write(&grouped, "param_value,scheme,mmf_rate_bps\n8,rs_cmd,3\n").unwrap();
    std::fs::write(&single, "param_value,scheme,mmf_rate_bps\n8,rs_cmd,2\n").unwrap();
    let out = run(&["summarize", grouped.to_str().unwrap(), "--gain-baseline", single.to_str().unwrap()]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().nth(1).unwrap(), "8,rs_cmd,3,2,50.00");
}

#[test]
fn solve_and_generate_write_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["solve", "--scheme", "all", "--no-timing", "--eval-samples", "20", "--set", "cache_size_files=1", "--out"];
    let out_dir = dir.path().join("solve");
    args.push(out_dir.to_str().unwrap());
    args.extend(SMALL);
    let out = run(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for scheme in ["rs_cmd", "tin", "scm_rsma"] {
        let trace = std::fs::read_to_string(out_dir.join(format!("trace_{scheme}.csv"))).unwrap();
        assert!(trace.starts_with("iteration,r_bar_bps,"));
        assert!(trace.lines().count() > 1);
        let result: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out_dir.join(format!("result_{scheme}.json"))).unwrap()).unwrap();
        assert!(result["mmf_rate_bps"].as_f64().unwrap() >= 0.0);
        assert!(result["evaluation"]["evaluated_mmf_bps"].is_number());
    }
    assert!(String::from_utf8(out.stdout).unwrap().contains("cluster 0: p=["));

    let gen_dir = dir.path().join("gen");
    let out = run(&["generate", "--preset", "fig3a", "--seed", "3", "--out", gen_dir.to_str().unwrap()]);
    assert!(out.status.success());
    for f in ["scenario.json", "statistics.csv", "placement.csv", "structure.txt"] {
        assert!(gen_dir.join(f).exists(), "{f}");
    }
}

#[test]
fn bad_input_fails_with_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "param_value,mmf_rate_bps\n1,2\n").unwrap();
    let cases: Vec<Vec<&str>> = vec![
        vec!["summarize", bad.to_str().unwrap()],
        vec!["sweep", "--param", "nope", "--values", "1", "--out", "x.csv"],
        vec!["sweep", "--preset", "fig9", "--out", "x.csv"],
        vec!["solve", "--set", "n_bs=0", "--out", "x"],
        vec!["sweep", "--param", "c_max_bps", "--values", "1", "--seeds", "5..1", "--out", "x.csv"],
    ];
    for args in cases {
        let out = run(&args);
        assert!(!out.status.success(), "{args:?}");
        let err = String::from_utf8(out.stderr).unwrap();
        assert_eq!(err.trim_end().lines().count(), 1, "{err}");
        assert!(err.starts_with("error: "));
    }
    let err = String::from_utf8(run(&["summarize", bad.to_str().unwrap()]).stderr).unwrap();
    assert!(err.contains("'scheme'"));
}

#[test]
fn check_passes() {
    let out = run(&["check"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().all(|l| l.starts_with("PASS")));
}
