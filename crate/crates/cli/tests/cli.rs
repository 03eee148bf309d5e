use std::path::PathBuf;
use std::process::{Command, Output};

fn pbc() -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../data/pbc.csv")
        .display()
        .to_string()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coxmic"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn pbc_args(cmd: &str) -> Vec<String> {
    [cmd, "--input", &pbc(), "--drop-cols", "id", "--recode", "status=2:1,*:0", "--recode", "sex=f:1,*:0"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

fn run_pbc(cmd: &str, extra: &[&str]) -> Output {
    let mut args = pbc_args(cmd);
    args.extend(extra.iter().map(|s| s.to_string()));
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    run(&refs)
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// Rows of the rendered table keyed by covariate name.
fn table_rows(text: &str) -> Vec<(String, Vec<String>)> {
    text.lines()
        .skip(1)
        .take_while(|l| !l.trim().is_empty())
        .map(|l| {
            let mut it = l.split_whitespace().map(String::from);
            (it.next().unwrap(), it.collect())
        })
        .collect()
}

#[test]
fn fit_table_reproduces_printed_rows() {
    let o = run_pbc("fit", &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.lines().next().unwrap().split_whitespace().eq([
        "beta0", "gamma", "se.gamma", "z.stat", "p.value", "beta.MIC", "se.beta.MIC"
    ]));
    let rows = table_rows(&text);
    assert_eq!(rows.len(), 17);
    let get = |name: &str| rows.iter().find(|r| r.0 == name).unwrap().1.clone();
    for (name, gamma) in [("age", 0.3309), ("bili", 0.3909), ("albumin", -0.2901), ("stage", 0.3692)] {
        let v: f64 = get(name)[1].parse().unwrap();
        assert!((v - gamma).abs() <= 0.005, "{name}: {v}");
    }
    assert_eq!(get("trt")[6], "NA");
    assert_eq!(get("trt")[5], "0.0000");
}

#[test]
fn json_matches_table_after_rounding() {
    let table = table_rows(&stdout(&run_pbc("fit", &[])));
    let o = run_pbc("fit", &["--output", "json"]);
    assert!(o.status.success());
    let json: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    for (j, (name, cells)) in table.iter().enumerate() {
        assert_eq!(json["names"][j], name.as_str());
        for (col, key) in [(1, "gamma"), (5, "beta")] {
            let v = json[key][j].as_f64().unwrap();
            let shown = format!("{v:.4}");
            let shown = if shown.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
                shown.trim_start_matches('-').to_string()
            } else {
                shown
            };
            assert_eq!(shown, cells[col], "{name} {key}");
        }
        let se_beta = &json["se_beta"][j];
        assert_eq!(se_beta.is_null(), cells[6] == "NA", "{name}");
    }
}

#[test]
fn custom_criterion_needs_lambda0() {
    let o = run_pbc("fit", &["--criterion", "custom"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("lambda0"));
    let ok = run_pbc("fit", &["--criterion", "custom", "--lambda0", "3", "--output", "json"]);
    assert!(ok.status.success());
    let json: serde_json::Value = serde_json::from_slice(&ok.stdout).unwrap();
    assert_eq!(json["penalty"]["lambda0"], 3.0);
}

#[test]
fn user_start_needs_vector_file() {
    let o = run_pbc("fit", &["--start", "user"]);
    assert!(!o.status.success());
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("beta0.txt");
    std::fs::write(&f, "0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0\n").unwrap();
    let with_file = run_pbc("fit", &["--start", "user", "--beta0", f.to_str().unwrap(), "--output", "json"]);
    let zero = run_pbc("fit", &["--start", "zero", "--output", "json"]);
    assert!(with_file.status.success());
    let a: serde_json::Value = serde_json::from_slice(&with_file.stdout).unwrap();
    let b: serde_json::Value = serde_json::from_slice(&zero.stdout).unwrap();
    assert_eq!(a["gamma"], b["gamma"]);
}

#[test]
fn failures_name_the_stage() {
    let o = run(&["fit", "--input", "/nonexistent/file.csv"]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert_eq!(err.lines().count(), 1);
    assert!(err.starts_with("coxmic: load failed:"), "{err}");

    let o = run(&["fit", "--input", &pbc()]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("load failed"));
}

#[test]
fn identical_flags_give_identical_bytes() {
    let a = run_pbc("fit", &["--output", "tsv"]);
    let b = run_pbc("fit", &["--output", "tsv"]);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn plot_data_has_gamma_and_beta_rows() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("plot.tsv");
    let o = run_pbc("fit", &["--emit-plot-data", f.to_str().unwrap()]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(&f).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "parameter\tname\testimate\tlower\tupper\tselected");
    assert_eq!(lines.len(), 1 + 2 * 17);
    let trt_beta = lines.iter().find(|l| l.starts_with("beta\ttrt\t")).unwrap();
    assert!(trt_beta.ends_with("NA\tNA\t0"));
    let age_gamma = lines.iter().find(|l| l.starts_with("gamma\tage\t")).unwrap();
    let f: Vec<f64> = age_gamma.split('\t').skip(2).take(3).map(|v| v.parse().unwrap()).collect();
    assert!(f[1] < f[0] && f[0] < f[2]);
}

#[test]
fn path_over_default_grid() {
    let o = run_pbc("path", &["--a-grid", "10:200"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 192);
    let header: Vec<&str> = lines[0].split('\t').collect();
    let first: Vec<f64> = lines[1].split('\t').map(|v| v.parse().unwrap()).collect();
    assert_eq!(first[0], 10.0);
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    for (name, v) in [("age", 0.2983), ("bili", 0.4135), ("albumin", -0.2799), ("stage", 0.3583)] {
        assert!((first[col(name)] - v).abs() <= 0.01, "{name}");
    }
    assert!(lines[1].split('\t').nth(1).unwrap().contains('.'));
    assert!(String::from_utf8_lossy(&o.stderr).contains("modal support held by"));
}

#[test]
fn singleton_path_equals_fit() {
    let path = run_pbc("path", &["--a-grid", "60"]);
    let fit = run_pbc("fit", &["--a0", "60", "--output", "json"]);
    let json: serde_json::Value = serde_json::from_slice(&fit.stdout).unwrap();
    let text = stdout(&path);
    let row: Vec<f64> = text.lines().nth(1).unwrap().split('\t').map(|v| v.parse().unwrap()).collect();
    assert_eq!(text.lines().count(), 2);
    for (j, b) in json["beta"].as_array().unwrap().iter().enumerate() {
        assert!((row[j + 1] - b.as_f64().unwrap()).abs() <= 5e-7);
    }
}

#[test]
fn unordered_grid_emits_ascending_rows_with_note() {
    let o = run_pbc("path", &["--a-grid", "40,20,30"]);
    let text = stdout(&o);
    let a: Vec<&str> = text.lines().skip(1).map(|l| l.split('\t').next().unwrap()).collect();
    assert_eq!(a, ["20.000000", "30.000000", "40.000000"]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("not ascending"));
}

#[test]
fn simulate_shape_and_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("sim.csv");
    let o = run(&["simulate", "--n", "200", "--p", "10", "--seed", "1", "--out", f.to_str().unwrap()]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(&f).unwrap();
    assert_eq!(text.lines().count(), 201);
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    assert_eq!(header.len(), 12);
    assert_eq!(&header[..3], ["time", "status", "x1"]);
    let fit = run(&["fit", "--input", f.to_str().unwrap()]);
    assert!(fit.status.success(), "{}", String::from_utf8_lossy(&fit.stderr));
}

#[test]
fn bench_reads_grid_config() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("grid.json");
    std::fs::write(
        &f,
        r#"[{"n": 200, "p": 10, "true_beta": [1,1,0,0,0,0,0,0,0,0], "target_censoring": 0.25, "seed": 818}]"#,
    )
    .unwrap();
    let o = run(&["bench", "--grid", f.to_str().unwrap(), "--methods", "mic,stepwise", "--format", "json"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let json: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let rows = json["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["method"], "mic");
    assert_eq!(rows[1]["method"], "stepwise");
    assert!(rows[0]["mean_seconds"].as_f64().unwrap() > 0.0);
    assert!(json["timing"].as_str().unwrap().contains("serially"));
}
