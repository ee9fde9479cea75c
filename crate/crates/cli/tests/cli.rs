use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn levywave(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_levywave"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .unwrap();
    rdr.records()
        .map(|r| r.unwrap().iter().map(str::to_string).collect())
        .collect()
}

#[test]
fn missing_seed_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = levywave(&["gamma"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--seed"));
}

#[test]
fn gamma_table_for_brownian_motion() {
    let dir = tempfile::tempdir().unwrap();
    let out = levywave(
        &["gamma", "--seed", "1", "--alphas", "0,0.5,1,2"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let rows = read_csv(&dir.path().join("gamma.csv"));
    let expected = [0.0, 0.125, 0.5, 2.0];
    for (row, e) in rows.iter().zip(expected) {
        let g: f64 = row[1].parse().unwrap();
        let gd: f64 = row[2].parse().unwrap();
        assert!((g - e).abs() < 1e-12, "{row:?}");
        assert!((gd - g).abs() < 1e-10);
    }
    let text = fs::read_to_string(dir.path().join("gamma.csv")).unwrap();
    assert!(text.starts_with("# seed=1\n# config_hash="));
}

#[test]
fn symmetric_jump_model_has_equal_conjugates() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model.json");
    fs::write(
        &model,
        r#"{"b": 0.0, "sigma": 0.7, "jump": {"rate": 2.0, "dist": {"type": "double_exp", "p": 0.5, "eta_plus": 2.0, "eta_minus": 2.0}}}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = levywave(
        &[
            "gamma",
            "--seed",
            "4",
            "--model",
            model.to_str().unwrap(),
            "--alphas=-1,-0.3,0.4,1.5",
        ],
        &out_dir,
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for row in read_csv(&out_dir.join("gamma.csv")) {
        let g: f64 = row[1].parse().unwrap();
        let gd: f64 = row[2].parse().unwrap();
        assert!((g - gd).abs() < 1e-10, "{row:?}");
    }
}

#[test]
fn outputs_are_not_overwritten_without_force() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        levywave(&["gamma", "--seed", "1"], dir.path())
            .status
            .code(),
        Some(0)
    );
    let again = levywave(&["gamma", "--seed", "1"], dir.path());
    assert_eq!(again.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&again.stderr).contains("--force"));
    let forced = levywave(&["gamma", "--seed", "1", "--force"], dir.path());
    assert_eq!(forced.status.code(), Some(0));
}

#[test]
fn bad_model_file_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("bad.json");
    fs::write(&model, r#"{"b": 0.0, "sigma": -1.0}"#).unwrap();
    let out = levywave(
        &["gamma", "--seed", "1", "--model", model.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn qsd_beyond_gamma_is_a_clean_non_existence_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = levywave(
        &["qsd", "--seed", "1", "--c", "1", "--r", "0.8"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("non-existence"));
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(v["regime"], "non-existence");
    assert_eq!(v["gamma_c"], 0.5);
    assert_eq!(v["seed"], 1);
}

#[test]
fn qsd_inside_the_existence_region() {
    let dir = tempfile::tempdir().unwrap();
    let out = levywave(
        &[
            "qsd",
            "--seed",
            "2",
            "--c",
            "1",
            "--r",
            "0.375",
            "--n-paths",
            "2000",
            "--verify-paths",
            "20000",
        ],
        dir.path(),
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap())
            .unwrap();
    assert!(v["ks_closed_form"].as_f64().unwrap() < 0.05);
    assert_eq!(read_csv(&dir.path().join("qsd.csv")).len(), 2000);
}

#[test]
fn phase_example_cells() {
    let dir = tempfile::tempdir().unwrap();
    let out = levywave(
        &[
            "phase", "--seed", "5", "--cs", "1", "--rs", "0.3,0.8", "--n-runs", "100",
        ],
        dir.path(),
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    let rows = read_csv(&dir.path().join("phase.csv"));
    assert_eq!(rows[0][4], "Subcritical");
    assert_eq!(rows[1][4], "Supercritical");
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(v["boundary"][0]["gamma_c"], 0.5);
}

#[test]
fn front_and_yaglom_write_their_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = levywave(
        &[
            "front",
            "--seed",
            "1",
            "--r",
            "1",
            "--x-min=-40",
            "--x-max",
            "120",
            "--dx",
            "0.2",
            "--t-end",
            "20",
        ],
        dir.path(),
    );
    // a short run sits below the asymptotic speed, so only the files are checked
    assert!(matches!(out.status.code(), Some(0) | Some(1)));
    assert!(read_csv(&dir.path().join("front_trace.csv")).len() > 20);
    let y = dir.path().join("y");
    let out = levywave(
        &[
            "yaglom",
            "--seed",
            "1",
            "--c",
            "1",
            "--schedule",
            "2,4",
            "--n-paths",
            "20000",
        ],
        &y,
    );
    assert_eq!(out.status.code(), Some(0));
    let rows = read_csv(&y.join("yaglom.csv"));
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1][5].parse::<f64>().unwrap(), 0.0);
}

#[test]
fn same_seed_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "tw",
        "--seed",
        "8",
        "--n-runs",
        "500",
        "--mckean-runs",
        "500",
        "--n-levels",
        "10",
    ];
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    levywave(&args, &a);
    let mut threaded = args.to_vec();
    threaded.extend(["--threads", "3"]);
    levywave(&threaded, &b);
    for f in ["wave.csv", "summary.json"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn quick_check_lists_every_criterion() {
    let dir = tempfile::tempdir().unwrap();
    let out = levywave(
        &[
            "check",
            "--seed",
            "3",
            "--profile",
            "quick",
            "--criteria",
            "1,6,9",
        ],
        dir.path(),
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 3);
}
