use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cvgauss::gaussian::CovarianceMatrix;
use cvgauss::measurement::sample_record;
use serde_json::Value;
use tempfile::TempDir;

fn cvgauss(args: &[&str], threads: Option<usize>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cvgauss"));
    cmd.args(args);
    if let Some(n) = threads {
        cmd.env("RAYON_NUM_THREADS", n.to_string());
    }
    cmd.output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = cvgauss(args, None);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn assert_matches_schema(name: &str, instance: &Value) {
    let path =
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join(format!("schemas/{name}.schema.json"));
    let schema = json(&path);
    let validator = jsonschema::validator_for(&schema).expect("schema compiles");
    let errors: Vec<String> = validator
        .iter_errors(instance)
        .map(|e| e.to_string())
        .collect();
    assert!(errors.is_empty(), "{name}: {errors:#?}");
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

fn simulate(dir: &Path, shots: &str, extra: &[&str]) -> String {
    let out = dir.display().to_string();
    let mut args = vec![
        "simulate",
        "--seed",
        "11",
        "--shots",
        shots,
        "--bootstrap",
        "200",
        "--out",
        &out,
    ];
    args.extend_from_slice(extra);
    ok(&args);
    out
}

#[test]
fn simulate_is_byte_identical_across_runs_and_threads() {
    let tmp = TempDir::new().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let base = [
        "simulate",
        "--seed",
        "5",
        "--shots",
        "3000",
        "--bootstrap",
        "200",
        "--out",
    ];
    let run = |dir: &Path, threads| {
        let mut args = base.to_vec();
        let d = dir.display().to_string();
        args.push(&d);
        assert!(cvgauss(&args, Some(threads)).status.success());
    };
    run(&a, 1);
    run(&b, 4);
    for f in [
        "record.csv",
        "record.csv.json",
        "tomography.json",
        "trajectory.csv",
    ] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    // the summary lists its output paths, which differ by directory
    let (mut sa, mut sb) = (
        json(&a.join("simulation.json")),
        json(&b.join("simulation.json")),
    );
    sa["files"] = Value::Null;
    sb["files"] = Value::Null;
    assert_eq!(sa, sb);
}

#[test]
fn simulate_outputs_follow_schemas_and_show_entanglement() {
    let tmp = TempDir::new().unwrap();
    simulate(tmp.path(), "10000", &[]);
    let sim = json(&tmp.path().join("simulation.json"));
    let tomo = json(&tmp.path().join("tomography.json"));
    assert_matches_schema("simulation", &sim);
    assert_matches_schema("tomography", &tomo);
    assert!(tomo["nu_meas"].as_f64().unwrap() < 0.5);
    assert_eq!(sim["entanglement_claim"], true);
    let c = &tomo["covariance"];
    assert!(c[0][2].as_f64().unwrap() > 0.0, "x1-x2 correlation");
    assert!(c[1][3].as_f64().unwrap() < 0.0, "p1-p2 anticorrelation");

    let trajectory = fs::read_to_string(tmp.path().join("trajectory.csv")).unwrap();
    assert!(trajectory.lines().count() > 100);
}

#[test]
fn analyze_recovers_the_simulated_covariance() {
    let tmp = TempDir::new().unwrap();
    let out = simulate(tmp.path(), "4000", &[]);
    let record = format!("{out}/record.csv");
    let analysis_dir = tmp.path().join("analysis").display().to_string();
    ok(&[
        "analyze",
        &record,
        "--seed",
        "2",
        "--bootstrap",
        "200",
        "--out",
        &analysis_dir,
    ]);
    let report = json(&Path::new(&analysis_dir).join("analysis.json"));
    assert_matches_schema("analysis", &report);

    let sim = json(&tmp.path().join("simulation.json"));
    let truth = &sim["model"]["measured"]["entries"];
    let est = &report["tomography"]["covariance"];
    let n = 4000.0;
    let at = |m: &Value, i: usize, j: usize| m[i][j].as_f64().unwrap();
    for i in 0..4 {
        for j in 0..4 {
            // standard error of a Gaussian sample covariance entry
            let se = ((at(truth, i, i) * at(truth, j, j) + at(truth, i, j).powi(2)) / n).sqrt();
            assert!(
                (at(est, i, j) - at(truth, i, j)).abs() < 5.0 * se,
                "entry ({i},{j})"
            );
        }
    }
    let correction = &report["correction"];
    let nu = correction["nu"]["point"].as_f64().unwrap();
    let model_nu = sim["model"]["nu"].as_f64().unwrap();
    assert!((nu - model_nu).abs() < 0.1, "{nu} vs {model_nu}");
    assert!(correction["nu"]["notation"]
        .as_str()
        .unwrap()
        .contains("(stat)"));
}

#[test]
fn no_correction_omits_the_section() {
    let tmp = TempDir::new().unwrap();
    let out = simulate(tmp.path(), "4000", &[]);
    let record = format!("{out}/record.csv");
    let dir = tmp.path().join("raw").display().to_string();
    ok(&[
        "analyze",
        &record,
        "--seed",
        "2",
        "--bootstrap",
        "200",
        "--no-correction",
        "--out",
        &dir,
    ]);
    let report = json(&Path::new(&dir).join("analysis.json"));
    assert_matches_schema("analysis", &report);
    assert!(report.get("correction").is_none());
    assert!(report["measured"]["nu_meas"]["point"].as_f64().unwrap() < 0.5);
}

#[test]
fn vacuum_record_analyzes_to_ground_state() {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("vacuum.csv");
    sample_record(&CovarianceMatrix::vacuum(2), 20_000, 3)
        .unwrap()
        .save(&path)
        .unwrap();
    let dir = tmp.path().join("out").display().to_string();
    ok(&[
        "analyze",
        path.to_str().unwrap(),
        "--seed",
        "1",
        "--bootstrap",
        "200",
        "--out",
        &dir,
    ]);
    let report = json(&Path::new(&dir).join("analysis.json"));
    assert_matches_schema("analysis", &report);
    let budget = &report["measured"]["nu_meas"];
    let nu_meas = budget["point"].as_f64().unwrap();
    let upper = budget["stat_hi"].as_f64().unwrap() - nu_meas;
    // the minimum-eigenvalue estimate of a separable boundary state reads slightly low
    assert!(
        nu_meas <= 0.5 + 3.0 * upper && 0.5 <= nu_meas + 3.0 * upper,
        "{nu_meas} +{upper}"
    );
    assert_eq!(report["measured"]["entanglement_claim"], false);
    // occupancies are inferred through 1/η, which magnifies sampling noise
    for k in ["occupancy1", "occupancy2"] {
        let n = report["correction"][k]["point"].as_f64().unwrap();
        assert!(n.abs() < 0.1, "{k} = {n}");
    }
}

#[test]
fn zero_duration_entangle_claims_nothing() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), r#"{"entangle_duration_s": 0.0}"#);
    simulate(tmp.path(), "4000", &["--config", &cfg]);
    let sim = json(&tmp.path().join("simulation.json"));
    assert_eq!(sim["entanglement_claim"], false);
    // the cooled drums keep a residual thermal occupancy, so ν_meas sits above ½
    let model = sim["model"]["nu_meas"].as_f64().unwrap();
    let measured = sim["nu_meas"]["point"].as_f64().unwrap();
    assert!(model > 0.5 && model < 0.65, "{model}");
    assert!((measured - model).abs() < 0.02);
}

#[test]
fn malformed_record_is_a_data_error_with_the_row() {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("bad.csv");
    fs::write(
        &path,
        "x1,p1,x2,p2\n0.1,0.2,0.3,0.4\n0.1,oops,0.3,0.4\n0.5,0.6,0.7,0.8\n",
    )
    .unwrap();
    let dir = tmp.path().join("out").display().to_string();
    let out = cvgauss(
        &[
            "analyze",
            path.to_str().unwrap(),
            "--seed",
            "1",
            "--out",
            &dir,
        ],
        None,
    );
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");

    let missing = tmp.path().join("missing.csv");
    let out = cvgauss(&["analyze", missing.to_str().unwrap(), "--seed", "1"], None);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = TempDir::new().unwrap();
    let out = cvgauss(&["simulate", "--out", tmp.path().to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));

    let cfg = write_config(
        tmp.path(),
        "{\n  \"seed\": 1,\n  \"shots\": 100,\n  \"colour\": 3\n}",
    );
    let out = cvgauss(&["simulate", "--config", &cfg], None);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 4"), "{err}");

    let out = cvgauss(&["simulate", "--seed", "1", "--eta1", "1.5"], None);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn calibration_failure_exits_with_four() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"calibration": {"max_sweeps": 1, "tolerance": 1e-9}}"#,
    );
    let dir = tmp.path().join("out").display().to_string();
    let out = cvgauss(
        &["simulate", "--seed", "1", "--config", &cfg, "--out", &dir],
        None,
    );
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn sweep_outputs_and_precondition() {
    let tmp = TempDir::new().unwrap();
    let one = write_config(tmp.path(), r#"{"sweep_durations_s": [4e-6]}"#);
    let out = cvgauss(&["sweep", "--seed", "1", "--config", &one], None);
    assert_eq!(out.status.code(), Some(2));

    let cfg = write_config(
        tmp.path(),
        r#"{"sweep_durations_s": [0.2e-6, 0.6e-6, 4e-6, 12e-6], "couplings": {
            "g_cool1_rad_per_s": 232556.96, "g_cool2_rad_per_s": 219135.32,
            "g_bsb1_rad_per_s": 488278.35, "g_rsb2_rad_per_s": 506437.82}}"#,
    );
    assert_matches_schema("run_config", &json(Path::new(&cfg)));
    let run = |name: &str, threads| {
        let dir = tmp.path().join(name);
        let args = [
            "sweep",
            "--seed",
            "9",
            "--shots",
            "3000",
            "--bootstrap",
            "200",
            "--config",
            &cfg,
            "--out",
        ];
        let mut args = args.to_vec();
        let d = dir.display().to_string();
        args.push(&d);
        assert!(cvgauss(&args, Some(threads)).status.success());
        dir
    };
    let a = run("a", 1);
    let b = run("b", 3);
    for f in ["sweep.csv", "sweep_detail.csv", "sweep.json"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    let summary = json(&a.join("sweep.json"));
    assert_matches_schema("sweep", &summary);
    let csv = fs::read_to_string(a.join("sweep.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "duration_s,nu_meas,nu,angle_deg,n1,n2"
    );
    assert_eq!(csv.lines().count(), 5);

    // before the drums interact they evolve as if alone
    for row in summary["rows"].as_array().unwrap() {
        if row["duration_s"].as_f64().unwrap() < 1e-6 {
            for q in ["x1", "p1", "x2", "p2"] {
                let full = row[format!("var_{q}")].as_f64().unwrap();
                let reference = row[format!("ref_var_{q}")].as_f64().unwrap();
                assert!(
                    (full / reference - 1.0).abs() < 0.01,
                    "{q}: {full} vs {reference}"
                );
            }
        }
    }
}

#[test]
fn default_config_matches_schema() {
    let cfg = serde_json::to_value(cvgauss_cli::RunConfig::default()).unwrap();
    assert_matches_schema("run_config", &cfg);
}
