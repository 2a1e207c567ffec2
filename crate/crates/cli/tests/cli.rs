use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lifted-filter")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr_json(o: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&o.stderr);
    let line = text.lines().last().unwrap_or_else(|| panic!("no stderr"));
    serde_json::from_str(line).unwrap_or_else(|e| panic!("{e}: {line}"))
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn bundled(name: &str) -> String {
    format!("{}/../core/scenarios/{name}.scn", env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn sample_respects_the_horizon() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    for (scenario, seed, horizon) in [("warehouse", "7", 33), ("office", "1", 20)] {
        let o = run(&["sample", "--scenario", scenario, "--seed", seed, "--horizon", &horizon.to_string(), "--out-dir", out]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let text = read(dir.path(), &format!("{scenario}-seed{seed}.trace"));
        let mut lines = text.lines();
        let header: serde_json::Value = serde_json::from_str(lines.next().unwrap()).unwrap();
        assert_eq!(header["horizon"], horizon);
        // readings at t = 0..=horizon
        assert_eq!(lines.count(), horizon + 1);
        assert!(String::from_utf8_lossy(&o.stdout).contains("wrote"));
    }
}

#[test]
fn missing_scenario_is_a_config_error() {
    let o = run(&["sample", "--seed", "1"]);
    assert_eq!(code(&o), 2);
    assert_eq!(stderr_json(&o)["error"], "config");

    let o = run(&["filter", "--scenario", "nowhere", "--seed", "1"]);
    assert_eq!(code(&o), 2);

    let o = run(&["filter", "--scenario", "warehouse:n=2", "--seed", "1", "--prune", "1.5"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn filter_writes_metrics_and_marginals() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = run(&["filter", "--scenario", "warehouse:n=3", "--seed", "4", "--horizon", "6", "--query", "ID=fl1:loc", "--out-dir", out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let metrics = read(dir.path(), "metrics.csv");
    let mut lines = metrics.lines();
    assert_eq!(lines.next().unwrap(), "engine,t,n_hyp_pre,n_hyp_post_update,n_hyp_post_predict,n_splits,n_merges,ms");
    assert_eq!(lines.count(), 7);
    assert_eq!(read(dir.path(), "metrics.jsonl").lines().count(), 7);

    let marginals = read(dir.path(), "marginals.csv");
    assert!(marginals.starts_with("engine,query,t,value,probability,exact\n"));
    for t in 0..=6 {
        let total: f64 = marginals
            .lines()
            .skip(1)
            .map(|l| l.split(',').collect::<Vec<_>>())
            .filter(|f| f[2] == t.to_string())
            .map(|f| f[4].parse::<f64>().unwrap())
            .sum();
        assert!((total - 1.0).abs() < 1e-9, "t={t}: {total}");
    }
    assert!(dir.path().join("warehouse-seed4.trace").exists());
}

#[test]
fn filter_reads_a_trace_and_a_scenario_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = run(&["sample", "--scenario-file", &bundled("office"), "--seed", "3", "--horizon", "4", "--out-dir", out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let trace = dir.path().join("office-seed3.trace");
    let trace = trace.to_str().unwrap();

    let o = run(&["validate", "--scenario-file", &bundled("office"), "--trace", trace]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let o = run(&["filter", "--scenario-file", &bundled("office"), "--trace", trace, "--out-dir", out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let o = run(&["validate", "--scenario", "warehouse", "--trace", trace]);
    assert_eq!(code(&o), 2);
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    for (i, d) in dirs.iter().enumerate() {
        let mut args = vec!["filter", "--engine", "both", "--scenario", "warehouse:n=4", "--seed", "11", "--horizon", "12"];
        args.extend(["--out-dir", d.path().to_str().unwrap()]);
        if i == 2 {
            args.push("--sequential");
        }
        let o = run(&args);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for name in ["metrics.csv", "metrics.jsonl", "marginals.csv", "warehouse-seed11.trace"] {
        let first = fs::read(dirs[0].path().join(name)).unwrap();
        for d in &dirs[1..] {
            assert_eq!(first, fs::read(d.path().join(name)).unwrap(), "{name}");
        }
    }
}

#[test]
fn grounded_engine_reports_the_guard() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "oracle", "--scenario", "warehouse", "--seed", "7", "--horizon", "33", "--guard", "20000", "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 4);
    let err = stderr_json(&o);
    assert_eq!(err["error"], "explosion_guard");
    assert!(err["t"].as_u64().unwrap() <= 5);
    assert!(err["message"].as_str().unwrap().contains("20000"));
}

#[test]
fn impossible_observation_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = run(&["sample", "--scenario", "warehouse:n=2", "--seed", "1", "--horizon", "3", "--out-dir", out]);
    assert_eq!(code(&o), 0);
    let path = dir.path().join("warehouse-seed1.trace");
    // everyone starts in the parking lot
    let text = read(dir.path(), "warehouse-seed1.trace").replacen("\"p_parking\":true", "\"p_parking\":false", 1);
    fs::write(&path, text).unwrap();
    let o = run(&["filter", "--scenario", "warehouse:n=2", "--trace", path.to_str().unwrap(), "--out-dir", out]);
    assert_eq!(code(&o), 3);
    let err = stderr_json(&o);
    assert_eq!(err["error"], "impossible_observation");
    assert_eq!(err["t"], 0);
}

#[test]
fn compare_agrees_on_small_scenarios() {
    for scenario in ["warehouse:n=3", "office:n=3,items=reduced"] {
        let dir = tempfile::tempdir().unwrap();
        let o = run(&[
            "compare", "--scenario", scenario, "--seed", "2", "--horizon", "8", "--out-dir", dir.path().to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let report = read(dir.path(), "compare.csv");
        let mut lines = report.lines();
        assert_eq!(
            lines.next().unwrap(),
            "t,max_diff,exact,lifted_post_update,grounded_post_update,lifted_post_predict,grounded_post_predict"
        );
        let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(String::from).collect()).collect();
        assert_eq!(rows.len(), 9);
        for r in &rows {
            assert_eq!(r[2], "true");
            let n: Vec<usize> = r[3..].iter().map(|x| x.parse().unwrap()).collect();
            assert!(n[0] <= n[1] && n[2] <= n[3], "{r:?}");
        }
    }
}

#[test]
fn compare_at_horizon_zero() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["compare", "--scenario", "office:n=2", "--seed", "5", "--horizon", "0", "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read(dir.path(), "compare.csv").lines().count(), 2);
}
