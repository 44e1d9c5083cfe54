use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use dpmnl_cli::{run, EXIT_DATA, EXIT_OK, EXIT_USAGE};
use tempfile::TempDir;

fn dpmnl(args: &[&str]) -> i32 {
    let mut full = vec!["dpmnl"];
    full.extend_from_slice(args);
    run(full)
}

fn out_arg(dir: &Path) -> String {
    dir.to_str().unwrap().to_string()
}

/// Small simulated dataset shared by the model commands.
fn fixture(tmp: &TempDir, n: &str) -> PathBuf {
    let dir = tmp.path().join("sim");
    let code = dpmnl(&["simulate", "--experiment", "III", "--n", n, "--t", "6", "--seed", "4", "-o", &out_arg(&dir)]);
    assert_eq!(code, EXIT_OK);
    dir.join("data.csv")
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn unknown_experiment_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_dpmnl"))
        .args(["simulate", "--experiment", "V", "-o"])
        .arg(tmp.path())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(EXIT_USAGE));
    assert_eq!(dpmnl(&["simulate", "-o", &out_arg(tmp.path())]), EXIT_USAGE);
    assert_eq!(dpmnl(&["no-such-command"]), EXIT_USAGE);
}

#[test]
fn config_with_unknown_keys_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("run.json");
    fs::write(&cfg, r#"{"simulate": {"experiment": "I", "n": 10}}"#).unwrap();
    let code = dpmnl(&["simulate", "--config", cfg.to_str().unwrap(), "-o", &out_arg(tmp.path())]);
    assert_eq!(code, EXIT_USAGE);
}

#[test]
fn config_values_apply_and_flags_override_them() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("run.json");
    fs::write(&cfg, r#"{"seed": 3, "simulate": {"experiment": "II", "n_individuals": 7, "n_tasks": 2}}"#).unwrap();
    let out = tmp.path().join("o");
    assert_eq!(dpmnl(&["simulate", "--config", cfg.to_str().unwrap(), "--n", "5", "-o", &out_arg(&out)]), EXIT_OK);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("simulation.json")).unwrap()).unwrap();
    assert_eq!(report["experiment"], "II");
    assert_eq!(report["n_individuals"], 5);
    assert_eq!(report["n_tasks"], 2);
    assert_eq!(report["seed"], 3);
    // header + 5 individuals x 2 tasks x 3 alternatives
    assert_eq!(fs::read_to_string(out.join("data.csv")).unwrap().lines().count(), 31);
}

#[test]
fn simulate_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        assert_eq!(dpmnl(&["simulate", "--experiment", "I", "--n", "60", "--seed", "1", "-o", &out_arg(d)]), EXIT_OK);
    }
    let fa = read_dir_sorted(&a);
    assert_eq!(fa, read_dir_sorted(&b));
    let names: Vec<&str> = fa.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, ["data.csv", "run_config.json", "simulation.json", "truth.csv"]);
}

#[test]
fn output_directory_defaults_to_the_environment_variable() {
    let tmp = TempDir::new().unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_dpmnl"))
        .args(["dp-demo", "--alpha", "1", "--draws", "10"])
        .env(dpmnl_cli::OUT_DIR_ENV, tmp.path())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(EXIT_OK));
    assert!(tmp.path().join("dp_demo.csv").exists());
}

#[test]
fn missing_or_malformed_data_is_a_data_error() {
    let tmp = TempDir::new().unwrap();
    let out = out_arg(tmp.path());
    let missing = tmp.path().join("nope.csv");
    assert_eq!(dpmnl(&["estimate", "--model", "mnl", "--data", missing.to_str().unwrap(), "-o", &out]), EXIT_DATA);
    let bad = tmp.path().join("bad.csv");
    fs::write(&bad, "individual_id,task_id,alt_id,chosen,ivtt,ovtt\n1,1,1,1,0.5,0.5\n").unwrap();
    assert_eq!(dpmnl(&["estimate", "--model", "mnl", "--data", bad.to_str().unwrap(), "-o", &out]), EXIT_DATA);
    assert_eq!(dpmnl(&["estimate", "--model", "mnl", "-o", &out]), EXIT_USAGE);
}

#[test]
fn estimate_mnl_writes_a_coefficient_table() {
    let tmp = TempDir::new().unwrap();
    let data = fixture(&tmp, "80");
    let out = tmp.path().join("mnl");
    assert_eq!(dpmnl(&["estimate", "--model", "mnl", "--data", data.to_str().unwrap(), "-o", &out_arg(&out)]), EXIT_OK);
    let coef = fs::read_to_string(out.join("coefficients.csv")).unwrap();
    let mut lines = coef.lines();
    assert_eq!(lines.next(), Some("component,mass,ivtt,ovtt,cost"));
    assert!(lines.next().unwrap().starts_with("1,1,"));
    let model: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("model.json")).unwrap()).unwrap();
    assert_eq!(model["converged"], true);
    assert!(model["loglik"].as_f64().unwrap() < 0.0);
    assert!(out.join("wtp_summary.csv").exists());
}

#[test]
fn estimate_lc_sweep_marks_information_criteria() {
    let tmp = TempDir::new().unwrap();
    let data = fixture(&tmp, "120");
    let out = tmp.path().join("lc");
    let args = ["estimate", "--model", "lc", "--k-min", "1", "--k-max", "3", "--data", data.to_str().unwrap()];
    let mut full = args.to_vec();
    let o = out_arg(&out);
    full.extend(["-o", &o]);
    assert_eq!(dpmnl(&full), EXIT_OK);
    let sweep = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let rows: Vec<&str> = sweep.lines().collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[0].starts_with("k,n_params,loglik,aic,bic"));
    assert_eq!(rows[1..].iter().filter(|r| r.contains(",true,") && r.split(',').nth(7) == Some("true")).count(), 1);
    let model: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("model.json")).unwrap()).unwrap();
    assert_eq!(model["model"], "lc");
    assert!(out.join("trace.csv").exists());
}

#[test]
fn estimate_dpm_reports_alpha_and_occupancy() {
    let tmp = TempDir::new().unwrap();
    let data = fixture(&tmp, "60");
    let out = tmp.path().join("dpm");
    let code = dpmnl(&[
        "estimate", "--model", "dpm", "--truncation", "5", "--seed", "7", "--data", data.to_str().unwrap(), "-o",
        &out_arg(&out),
    ]);
    assert_eq!(code, EXIT_OK);
    let model: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("model.json")).unwrap()).unwrap();
    assert!(model["alpha_hat"].as_f64().unwrap() > 0.0);
    assert_eq!(model["betas"].as_array().unwrap().len(), 5);
    let occ: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("occupied.json")).unwrap()).unwrap();
    assert!(occ["occupied"].as_u64().unwrap() >= 1);
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    assert!(trace.lines().count() >= 2);

    // the mixture feeds summarize
    let sum = tmp.path().join("sum");
    let mixture = out.join("mixture.json");
    let code = dpmnl(&["summarize", "--mixture", mixture.to_str().unwrap(), "--draws", "300", "-o", &out_arg(&sum)]);
    assert_eq!(code, EXIT_OK);
    for f in ["wtp_summary.csv", "ecdf.csv", "kde_1d.csv", "kde_2d.csv", "modes.csv"] {
        assert!(sum.join(f).exists(), "{f}");
    }
    let wtp = fs::read_to_string(sum.join("wtp_summary.csv")).unwrap();
    assert!(wtp.starts_with("attribute,p10,p25,p50,p75,p90,iqr,idr,mean"));
}

#[test]
fn crossval_validates_folds_and_reports_each() {
    let tmp = TempDir::new().unwrap();
    let data = fixture(&tmp, "30");
    let d = data.to_str().unwrap();
    let out = tmp.path().join("cv");
    let o = out_arg(&out);
    assert_eq!(dpmnl(&["crossval", "--model", "mnl", "--folds", "31", "--data", d, "-o", &o]), EXIT_USAGE);
    assert_eq!(dpmnl(&["crossval", "--model", "mnl", "--folds", "1", "--data", d, "-o", &o]), EXIT_USAGE);
    assert_eq!(dpmnl(&["crossval", "--model", "mnl", "--folds", "3", "--seed", "3", "--data", d, "-o", &o]), EXIT_OK);
    let cv = fs::read_to_string(out.join("cv.csv")).unwrap();
    let lines: Vec<&str> = cv.lines().collect();
    assert_eq!(lines.len(), 1 + 3 + 2);
    assert!(lines[4].starts_with("mean,"));
}

#[test]
fn dp_demo_single_atom_for_tiny_alpha() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("dp");
    assert_eq!(dpmnl(&["dp-demo", "--alpha", "1e-8", "--draws", "500", "-o", &out_arg(&out)]), EXIT_OK);
    let csv = fs::read_to_string(out.join("dp_demo.csv")).unwrap();
    let counts: Vec<usize> = csv.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(counts.iter().sum::<usize>(), 500);
    assert_eq!(counts.iter().filter(|c| **c > 0).count(), 1);
}

#[test]
fn dp_demo_mirrors_the_four_panels() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("dp");
    assert_eq!(dpmnl(&["dp-demo", "-o", &out_arg(&out)]), EXIT_OK);
    let csv = fs::read_to_string(out.join("dp_demo.csv")).unwrap();
    let mut alphas: Vec<String> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap().to_string()).collect();
    alphas.dedup();
    assert_eq!(alphas, ["1", "10", "100", "1000"]);
    for a in &alphas {
        let total: usize = csv
            .lines()
            .filter(|l| l.starts_with(&format!("{a},")))
            .map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap())
            .sum();
        assert_eq!(total, 1000);
    }
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let tmp = TempDir::new().unwrap();
    let data = fixture(&tmp, "50");
    let d = data.to_str().unwrap();
    let mut dirs = Vec::new();
    for threads in ["1", "2", "1"] {
        let out = tmp.path().join(format!("t{}-{threads}", dirs.len()));
        let code = dpmnl(&[
            "estimate", "--model", "dpm", "--truncation", "4", "--max-iter", "8", "--seed", "2", "--threads", threads,
            "--data", d, "-o", &out_arg(&out),
        ]);
        assert!(code == EXIT_OK || code == dpmnl_cli::EXIT_NONCONVERGENCE);
        dirs.push(out);
    }
    let first = read_dir_sorted(&dirs[0]);
    assert!(first.len() >= 6);
    for d in &dirs[1..] {
        assert_eq!(read_dir_sorted(d), first);
    }
}
