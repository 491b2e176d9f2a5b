//! End-to-end tests of the `agecodec` binary: every subcommand is exercised
//! through real process invocations against temp-file inputs and outputs.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use agecodec::pmf::Pmf;
use serde_json::Value;
use tempfile::tempdir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_agecodec"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("the binary runs")
}

fn run_ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "command {args:?} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf-8 output")
}

/// Splits a CSV document into its seed comment, header fields and data rows.
fn read_table(text: &str) -> (String, Vec<String>, Vec<Vec<String>>) {
    let mut lines = text.lines();
    let seed_line = lines.next().expect("seed comment").to_string();
    assert!(seed_line.starts_with("# seed: "), "bad header: {seed_line}");
    let header: Vec<String> = lines
        .next()
        .expect("header row")
        .split(',')
        .map(str::to_string)
        .collect();
    let rows: Vec<Vec<String>> = lines
        .map(|line| line.split(',').map(str::to_string).collect())
        .collect();
    (seed_line, header, rows)
}

fn field(header: &[String], row: &[String], name: &str) -> f64 {
    let pos = header
        .iter()
        .position(|h| h == name)
        .unwrap_or_else(|| panic!("no column {name} in {header:?}"));
    row[pos].parse().unwrap_or_else(|_| panic!("bad {name}: '{}'", row[pos]))
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).expect("file exists")).expect("valid JSON")
}

#[test]
fn design_uniform_256_hits_the_analytic_point() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("design");
    run_ok(&["design", "--dist", "zipf:s=0,n=256", "--out", out.to_str().unwrap()]);

    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    let (seed_line, header, rows) = read_table(&summary);
    assert_eq!(seed_line, "# seed: 0");
    assert_eq!(rows.len(), 1);
    assert!((field(&header, &rows[0], "h") - 8.0).abs() < 1e-12);
    assert!((field(&header, &rows[0], "cost_real") - 12.0).abs() < 1e-8);
    assert!((field(&header, &rows[0], "average") - 11.5).abs() < 1e-8);
    assert!((field(&header, &rows[0], "cost_rounded") - 12.0).abs() < 1e-8);

    let book = read_json(&out.join("codebook.json"));
    let words = book.as_object().unwrap();
    assert_eq!(words.len(), 256);
    assert!(words.values().all(|w| w.as_str().unwrap().len() == 8));

    let design = read_json(&out.join("design.json"));
    assert_eq!(design["seed"], 0);
    assert_eq!(design["converged"], true);
    assert_eq!(design["lengths"].as_array().unwrap().len(), 256);
}

#[test]
fn design_zipf_tilts_toward_flat() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("design");
    run_ok(&["design", "--dist", "zipf:s=1,n=8", "--out", out.to_str().unwrap()]);

    let design = read_json(&out.join("design.json"));
    let p_star: Vec<f64> = design["p_star"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    let p = Pmf::zipf(1.0, 8).unwrap();
    let max_star = p_star.iter().cloned().fold(0.0f64, f64::max);
    let min_star = p_star.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(max_star < p.max_prob(), "{max_star} vs {}", p.max_prob());
    assert!(min_star > p.min_prob(), "{min_star} vs {}", p.min_prob());
}

#[test]
fn design_delay_infeasible_rate_fails_loudly() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("design");
    let result = run(&[
        "design",
        "--dist",
        "zipf:s=0,n=256",
        "--mode",
        "delay",
        "--lambda",
        "0.9",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(
        stderr.contains("is not below the mean-length budget"),
        "stderr: {stderr}"
    );
    assert!(!out.join("summary.csv").exists());
}

#[test]
fn design_accepts_inline_weights() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("design");
    let stdout = run_ok(&[
        "design",
        "--dist",
        "inline:0.5,0.25,0.25",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(stdout.contains("h,cost_real"), "stdout: {stdout}");
    let (_, header, rows) = read_table(&fs::read_to_string(out.join("summary.csv")).unwrap());
    assert!((field(&header, &rows[0], "h") - 1.5).abs() < 1e-12);
    let proposed = field(&header, &rows[0], "cost_real");
    let shannon = field(&header, &rows[0], "cost_shannon_real");
    assert!(proposed <= shannon + 1e-9);
}

#[test]
fn sweep_zipf_never_loses_to_shannon() {
    let dir = tempdir().unwrap();
    let csv = dir.path().join("sweep.csv");
    run_ok(&[
        "sweep",
        "--dist",
        "zipf:n=256",
        "--grid",
        "0:5:0.5",
        "--jobs",
        "2",
        "--out",
        csv.to_str().unwrap(),
    ]);
    let (_, header, rows) = read_table(&fs::read_to_string(&csv).unwrap());
    assert_eq!(header[0], "s");
    assert_eq!(rows.len(), 11);
    let mut previous_s = f64::NEG_INFINITY;
    for row in &rows {
        assert_eq!(row.last().unwrap(), "ok");
        let s = field(&header, row, "s");
        assert!(s > previous_s, "rows out of grid order");
        previous_s = s;
        let proposed = field(&header, row, "age_proposed_real");
        let shannon = field(&header, row, "age_shannon_real");
        assert!(
            proposed <= shannon + 1e-9,
            "s = {s}: proposed {proposed} vs shannon {shannon}"
        );
    }
    // Ascending s means descending entropy, and the optimal age follows it.
    let first = field(&header, &rows[0], "age_proposed_real");
    let last = field(&header, &rows[10], "age_proposed_real");
    assert!(last < first - 5.0, "age should fall with entropy: {first} -> {last}");
}

#[test]
fn sweep_output_is_byte_stable() {
    let dir = tempdir().unwrap();
    let args = |out: &str, jobs: &str| {
        vec![
            "sweep".to_string(),
            "--dist".into(),
            "zipf:n=16".into(),
            "--grid".into(),
            "0:2:0.5".into(),
            "--seed".into(),
            "3".into(),
            "--jobs".into(),
            jobs.into(),
            "--out".into(),
            out.into(),
        ]
    };
    let paths: Vec<_> = (0..3).map(|i| dir.path().join(format!("s{i}.csv"))).collect();
    for (path, jobs) in paths.iter().zip(["1", "4", "2"]) {
        let argv = args(path.to_str().unwrap(), jobs);
        let argv: Vec<&str> = argv.iter().map(String::as_str).collect();
        run_ok(&argv);
    }
    let reference = fs::read(&paths[0]).unwrap();
    assert!(reference.starts_with(b"# seed: 3\n"));
    for path in &paths[1..] {
        assert_eq!(fs::read(path).unwrap(), reference, "outputs differ across runs");
    }
}

#[test]
fn sweep_delay_lower_bound_monotone() {
    let dir = tempdir().unwrap();
    let pmf_path = dir.path().join("head_tail.json");
    let mut weights = vec![0.5];
    weights.extend(vec![0.5 / 255.0; 255]);
    fs::write(&pmf_path, serde_json::to_string(&weights).unwrap()).unwrap();

    let csv = dir.path().join("sweep.csv");
    run_ok(&[
        "sweep",
        "--mode",
        "delay",
        "--dist",
        &format!("file:{}", pmf_path.display()),
        "--grid",
        "0.02:0.16:0.02",
        "--out",
        csv.to_str().unwrap(),
    ]);
    let (_, header, rows) = read_table(&fs::read_to_string(&csv).unwrap());
    assert_eq!(header[0], "lambda");
    assert_eq!(rows.len(), 8);
    let mut previous = 0.0;
    for row in &rows {
        assert_eq!(row.last().unwrap(), "ok");
        let bound = field(&header, row, "delay_proposed_real");
        assert!(bound > previous, "delay bound must rise with lambda");
        previous = bound;
    }
}

#[test]
fn sweep_json_format() {
    let stdout = run_ok(&[
        "sweep",
        "--dist",
        "zipf:n=8",
        "--grid",
        "0:1:0.5",
        "--format",
        "json",
    ]);
    let doc: Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(doc["seed"], 0);
    let rows = doc["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    for row in rows {
        assert_eq!(row["status"], "ok");
        assert!(
            row["age_proposed_real"].as_f64().unwrap()
                <= row["age_shannon_real"].as_f64().unwrap() + 1e-9
        );
    }
}

#[test]
fn sweep_without_grid_is_a_usage_error() {
    let result = run(&["sweep", "--dist", "zipf:n=8"]);
    assert_eq!(result.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(stderr.contains("--grid"), "stderr: {stderr}");
}

#[test]
fn simulate_uniform_pmf_matches_formula() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("report.json");
    run_ok(&[
        "simulate",
        "--dist",
        "zipf:s=0,n=4",
        "--horizon",
        "200000",
        "--seed",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    let doc = read_json(&out);
    assert_eq!(doc["seed"], 1);
    assert_eq!(doc["mode"], "age");
    assert_eq!(doc["lengths"], serde_json::json!([2, 2, 2, 2]));
    assert!((doc["analytic"].as_f64().unwrap() - 2.5).abs() < 1e-12);
    let empirical = doc["report"]["empirical_average"].as_f64().unwrap();
    assert!((empirical - 2.5).abs() < 0.05, "empirical {empirical}");
}

#[test]
fn simulate_randomized_scheme_example() {
    let dir = tempdir().unwrap();
    let write_list = |name: &str, values: &[f64]| {
        let path = dir.path().join(name);
        fs::write(&path, serde_json::to_string(values).unwrap()).unwrap();
        format!("file:{}", path.display())
    };
    let mut weights = vec![0.25; 3];
    weights.extend(vec![0.25 / 61.0; 61]);
    let mut lengths = vec![2.0; 3];
    lengths.extend(vec![8.0; 61]);
    let mut theta = vec![1.0; 3];
    theta.extend(vec![0.0; 61]);
    let dist = write_list("p.json", &weights);
    let lens = write_list("lengths.json", &lengths);
    let probs = write_list("theta.json", &theta);

    let out = dir.path().join("report.json");
    let trace = dir.path().join("trace.csv");
    run_ok(&[
        "simulate",
        "--dist",
        &dist,
        "--lengths",
        &lens,
        "--theta",
        &probs,
        "--skip-length",
        "2",
        "--horizon",
        "400000",
        "--seed",
        "7",
        "--trace",
        trace.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let doc = read_json(&out);
    let analytic = doc["analytic"].as_f64().unwrap();
    assert!((analytic - 19.0 / 6.0).abs() < 1e-9, "analytic {analytic}");
    let empirical = doc["report"]["empirical_average"].as_f64().unwrap();
    let se = doc["report"]["standard_error"].as_f64().unwrap();
    assert!(
        (empirical - analytic).abs() <= (3.0 * se).max(0.01 * analytic),
        "empirical {empirical} vs analytic {analytic} (SE {se})"
    );

    let trace_text = fs::read_to_string(&trace).unwrap();
    let mut lines = trace_text.lines();
    assert_eq!(lines.next(), Some("# seed: 7"));
    assert_eq!(lines.next(), Some("cycle,Y,Z,R"));
    assert!(lines.next().is_some(), "trace should contain cycles");
}

#[test]
fn verify_uniform_alphabet_passes() {
    let stdout = run_ok(&["verify", "--dist", "zipf:s=0,n=4", "--horizon", "200000"]);
    assert!(stdout.contains("all 5 checks passed"), "stdout: {stdout}");
    assert!(!stdout.contains("FAIL"), "stdout: {stdout}");
}

#[test]
fn verify_zipf_age_passes() {
    let stdout = run_ok(&["verify", "--dist", "zipf:s=2,n=64", "--horizon", "400000"]);
    assert!(stdout.contains("PASS oracle"), "stdout: {stdout}");
    assert!(stdout.contains("all 5 checks passed"), "stdout: {stdout}");
}

#[test]
fn verify_given_code_runs_simulation_checks_only() {
    let dir = tempdir().unwrap();
    let theta_path = dir.path().join("theta.json");
    let mut theta = vec![1.0; 3];
    theta.extend(vec![0.0; 61]);
    fs::write(&theta_path, serde_json::to_string(&theta).unwrap()).unwrap();
    let mut weights = vec![0.25; 3];
    weights.extend(vec![0.25 / 61.0; 61]);
    let pmf_path = dir.path().join("p.json");
    fs::write(&pmf_path, serde_json::to_string(&weights).unwrap()).unwrap();
    let mut lengths = String::from("inline:2,2,2");
    lengths.push_str(&",8".repeat(61));

    let stdout = run_ok(&[
        "verify",
        "--dist",
        &format!("file:{}", pmf_path.display()),
        "--lengths",
        &lengths,
        "--theta",
        &format!("file:{}", theta_path.display()),
        "--skip-length",
        "2",
        "--horizon",
        "400000",
        "--seed",
        "7",
    ]);
    assert!(stdout.contains("PASS update-sim"), "stdout: {stdout}");
    assert!(stdout.contains("all 2 checks passed"), "stdout: {stdout}");
    assert!(!stdout.contains("solver"), "stdout: {stdout}");
}

#[test]
fn verify_delay_mode_passes() {
    let stdout = run_ok(&[
        "verify",
        "--dist",
        "zipf:s=0,n=8",
        "--mode",
        "delay",
        "--lambda",
        "0.2",
        "--horizon",
        "150000",
    ]);
    assert!(stdout.contains("PASS queue-sim"), "stdout: {stdout}");
    assert!(stdout.contains("all 6 checks passed"), "stdout: {stdout}");
}

#[test]
fn config_file_supplies_defaults_flags_override() {
    let dir = tempdir().unwrap();
    let config = dir.path().join("run.cfg");
    fs::write(&config, "# demo defaults\ndist = zipf:s=0,n=4\nseed = 9\nmode = age\n").unwrap();

    let from_config = dir.path().join("d1");
    run_ok(&[
        "design",
        "--config",
        config.to_str().unwrap(),
        "--out",
        from_config.to_str().unwrap(),
    ]);
    let summary = fs::read_to_string(from_config.join("summary.csv")).unwrap();
    let (seed_line, header, rows) = read_table(&summary);
    assert_eq!(seed_line, "# seed: 9");
    assert!((field(&header, &rows[0], "h") - 2.0).abs() < 1e-12);

    let overridden = dir.path().join("d2");
    run_ok(&[
        "design",
        "--config",
        config.to_str().unwrap(),
        "--dist",
        "zipf:s=0,n=8",
        "--out",
        overridden.to_str().unwrap(),
    ]);
    let summary = fs::read_to_string(overridden.join("summary.csv")).unwrap();
    let (seed_line, header, rows) = read_table(&summary);
    assert_eq!(seed_line, "# seed: 9");
    assert!((field(&header, &rows[0], "h") - 3.0).abs() < 1e-12);
    assert!((field(&header, &rows[0], "cost_real") - 4.5).abs() < 1e-8);
}
