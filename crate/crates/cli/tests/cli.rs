use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const EXAMPLE1: &str = r#"{"k": 2, "n_d": 1, "n_y": 1, "thetas": [[[0.7]], [[0.8]]], "sigma_e2": 0, "sigma_w2": 0,
 "switching": {"epoch_driven": {"blocks": [200, 200]}}}"#;

const SIMO: &str = r#"{"k": 2, "n_d": 1, "n_y": 2, "thetas": [[[0.7], [-0.2]], [[0.8], [0.5]]], "sigma_e2": 1e-4, "sigma_w2": 2e-4,
 "switching": {"epoch_driven": {"blocks": [30, 50]}}}"#;

fn scsid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scsid")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = scsid(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn generate_then_identify_recovers_noiseless_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    let data = dir.path().join("data.csv");
    let est = dir.path().join("est.json");
    fs::write(&spec, EXAMPLE1).unwrap();
    ok(&["generate", "--spec", p(&spec), "--n", "400", "--seed", "5", "--out", p(&data)]);
    ok(&["identify", "--data", p(&data), "--k", "2", "--nd", "1", "--out", p(&est)]);
    let doc = json(&est);
    let mut thetas: Vec<f64> = doc["thetas"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| t[0][0].as_f64().unwrap())
        .collect();
    thetas.sort_by(f64::total_cmp);
    assert!((thetas[0] - 0.7).abs() < 1e-8 && (thetas[1] - 0.8).abs() < 1e-8, "{thetas:?}");
    assert_eq!(doc["misclassification"].as_f64(), Some(0.0));
    let labels = doc["labels"].as_array().unwrap();
    assert_eq!(labels.len(), 400);
    assert!(labels.iter().all(|l| matches!(l.as_u64(), Some(1 | 2))));
}

#[test]
fn identify_refuses_too_few_samples() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("one.csv");
    fs::write(&data, "t,x_1,y_1\n1,0.5,0.35\n").unwrap();
    let out = scsid(&["identify", "--data", p(&data), "--k", "2", "--nd", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("too small"));
}

#[test]
fn malformed_csv_names_file_line_and_field() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("bad.csv");
    fs::write(&data, "t,x_1,y_1\n1,0.5,0.35\n2,0.1,oops\n3,0.2,0.14\n").unwrap();
    let out = scsid(&["identify", "--data", p(&data), "--k", "2", "--nd", "1"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.csv") && err.contains("line 3") && err.contains("y_1"), "{err}");
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(scsid(&["identify", "--k", "2"]).status.code(), Some(2));
    assert_eq!(scsid(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn commands_are_idempotent_and_leave_inputs_alone() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    let data = dir.path().join("data.csv");
    fs::write(&spec, SIMO).unwrap();
    ok(&["generate", "--spec", p(&spec), "--n", "80", "--seed", "9", "--out", p(&data)]);
    let before = fs::read(&data).unwrap();

    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for out in [&a, &b] {
        ok(&["identify", "--data", p(&data), "--k", "2", "--nd", "1", "--sigma-e2", "1e-4", "--sigma-w2", "2e-4", "--out", p(out)]);
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    let crb1 = ok(&["crb", "--spec", p(&spec), "--inputs", p(&data)]);
    let crb2 = ok(&["crb", "--spec", p(&spec), "--inputs", p(&data)]);
    assert_eq!(crb1, crb2);
    let ident1 = ok(&["check-ident", "--inputs", p(&data)]);
    assert_eq!(ident1, ok(&["check-ident", "--inputs", p(&data)]));
    assert_eq!(fs::read(&data).unwrap(), before);
    assert_eq!(fs::read_to_string(&spec).unwrap(), SIMO);

    let again = dir.path().join("again.csv");
    ok(&["generate", "--spec", p(&spec), "--n", "80", "--seed", "9", "--out", p(&again)]);
    assert_eq!(fs::read(&again).unwrap(), before);
}

#[test]
fn crb_table_lists_every_theta_entry() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    let data = dir.path().join("data.csv");
    fs::write(&spec, SIMO).unwrap();
    ok(&["generate", "--spec", p(&spec), "--n", "80", "--out", p(&data)]);
    let csv = ok(&["crb", "--spec", p(&spec), "--inputs", p(&data)]);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("submodel,entry,bound"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 4);
    for row in rows {
        let bound: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
        assert!(bound > 0.0 && bound < 1e-3, "{row}");
    }
    let out = dir.path().join("crb.json");
    ok(&["crb", "--spec", p(&spec), "--inputs", p(&data), "--with-inputs", "--format", "json", "--out", p(&out)]);
    let doc = json(&out);
    assert_eq!(doc["submodels"].as_array().unwrap().len(), 2);
    assert_eq!(doc["submodels"][0]["cov_d_diag"].as_array().unwrap().len(), 30);
}

#[test]
fn check_ident_reports_the_kernel_dimension() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.csv");
    fs::write(&good, "d_1,label\n0.5,1\n-0.3,1\n0.9,2\n0.2,2\n").unwrap();
    let doc: serde_json::Value = serde_json::from_str(&ok(&["check-ident", "--inputs", p(&good)])).unwrap();
    assert_eq!(doc["identifiable"], true);

    let zero = dir.path().join("zero.csv");
    fs::write(&zero, "d_1,d_2,label\n1,0,1\n0,1,1\n2,0,1\n").unwrap();
    let doc: serde_json::Value = serde_json::from_str(&ok(&["check-ident", "--inputs", p(&zero)])).unwrap();
    assert_eq!(doc["identifiable"], false);
    assert_eq!(doc["per_submodel"][0]["zero_multiplicity"], 2);
}

#[test]
fn noiseless_demos_print_the_true_parameters() {
    let out = ok(&["demo", "example1", "--noiseless"]);
    assert!(out.contains("theta1 = 0.7"), "{out}");
    assert!(out.contains("theta2 = 0.8"), "{out}");
    assert!(out.contains("misclassification = 0"), "{out}");
    let out = ok(&["demo", "example2", "--noiseless"]);
    assert!(out.contains("misclassification = 0"), "{out}");
}

#[test]
fn bench_writes_identical_reports_on_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("sc.json");
    fs::write(
        &scenario,
        format!(
            r#"{{"name": "tiny", "spec": {EXAMPLE1}, "horizon": 400, "inputs": {{"uniform_box": {{"lo": -1, "hi": 1}}}},
                "snr_grid": [30, "inf"], "runs": 3, "algorithms": ["scs", "cml"], "seed": 4}}"#
        ),
    )
    .unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["bench", "--scenario", p(&scenario), "--out", p(&a)]);
    ok(&["bench", "--scenario", p(&scenario), "--out", p(&b)]);
    for name in ["report.csv", "report.json", "mse_theta1_0_0.svg", "mse_theta2_0_0.svg"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    let csv = fs::read_to_string(a.join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 2 * 2);
    assert!(csv.contains("inf,scs,\"theta1[0,0]\",0,0,0,0,3,0"), "{csv}");
}
