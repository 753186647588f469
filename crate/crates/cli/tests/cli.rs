//! End-to-end runs of the `heatlab` binary: artifact layout, exit codes,
//! manifest reproducibility, and the documented subcommand examples.

use std::path::Path;
use std::process::{Command, Output};

fn heatlab(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_heatlab"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name))
        .unwrap_or_else(|e| panic!("missing artifact {name}: {e}"))
}

/// Parse a CSV with a header line into rows of fields (quotes are absent
/// from the columns these tests look at).
fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines().skip(1).map(|l| l.split(',').map(|f| f.to_string()).collect()).collect()
}

#[test]
fn deterministic_simulate_matches_the_heat_semigroup() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(
        tmp.path().join("exp.toml"),
        "[grid]\nn_x = 32\nn_t = 64\nhorizon = 0.25\n\
         [model]\ninitial = \"sine\"\nmode = 1\namplitude = 1.0\n\
         drift = \"zero\"\ntruncation = 0.0\nsigma = 0.0\n",
    )
    .unwrap();
    let out = heatlab(
        &["simulate", "--config", "exp.toml", "--output", "sim"],
        tmp.path(),
    );
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let rows = csv_rows(&read(&tmp.path().join("sim"), "trajectory.csv"));
    assert_eq!(rows.len(), 64);
    let lambda = std::f64::consts::PI.powi(2) / 2.0;
    for row in &rows {
        let t: f64 = row[0].parse().unwrap();
        for (j, field) in row[1..].iter().enumerate() {
            let x = (j + 1) as f64 / 32.0;
            let expected = (-lambda * t).exp() * (std::f64::consts::PI * x).sin();
            let got: f64 = field.parse().unwrap();
            assert!(
                (got - expected).abs() < 1e-12,
                "t={t}, x={x}: got {got}, expected {expected}"
            );
        }
    }
}

#[test]
fn manifest_rerun_reproduces_artifacts_bit_for_bit() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("anchor");
    let run = heatlab(
        &[
            "verify-stochastic",
            "--only",
            "walsh-isometry-anchor",
            "--n-x",
            "32",
            "--n-t",
            "64",
            "--paths",
            "64",
            "--anchor-paths",
            "200",
            "--output",
            out_dir.to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert!(run.status.success(), "stderr: {}", String::from_utf8_lossy(&run.stderr));
    let before: Vec<(String, String)> = ["manifest.toml", "checks.csv", "summary.json"]
        .iter()
        .map(|n| (n.to_string(), read(&out_dir, n)))
        .collect();

    let manifest = out_dir.join("manifest.toml");
    let rerun = heatlab(
        &["verify-stochastic", "--config", manifest.to_str().unwrap()],
        tmp.path(),
    );
    assert!(rerun.status.success(), "stderr: {}", String::from_utf8_lossy(&rerun.stderr));
    for (name, snapshot) in &before {
        assert_eq!(&read(&out_dir, name), snapshot, "{name} changed across the rerun");
    }
}

#[test]
fn config_errors_exit_with_code_2() {
    let tmp = tempfile::tempdir().unwrap();

    // Unknown key: rejected at parse time, named in the diagnostic.
    std::fs::write(tmp.path().join("typo.toml"), "[grid]\nn_xx = 12\n").unwrap();
    let out = heatlab(&["simulate", "--config", "typo.toml"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_xx"));

    // Structurally invalid resolved value.
    let out = heatlab(&["simulate", "--n-x", "1", "--output", "x"], tmp.path());
    assert_eq!(out.status.code(), Some(2));

    // Unknown check selection.
    let out = heatlab(
        &["verify-stochastic", "--only", "no-such-check", "--output", "x"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no-such-check"));

    // Malformed worker cap in the environment.
    let out = Command::new(env!("CARGO_BIN_EXE_heatlab"))
        .args(["simulate", "--output", "x"])
        .env("HEATLAB_WORKERS", "many")
        .current_dir(tmp.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn artifacts_stay_inside_the_output_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let run = heatlab(
        &[
            "simulate",
            "--n-x",
            "16",
            "--n-t",
            "32",
            "--horizon",
            "0.1",
            "--output",
            "only-here",
        ],
        tmp.path(),
    );
    assert!(run.status.success(), "stderr: {}", String::from_utf8_lossy(&run.stderr));
    let entries: Vec<String> = std::fs::read_dir(tmp.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert_eq!(entries, vec!["only-here".to_string()]);
}

#[test]
fn verify_lemmas_emits_seven_passing_rows_within_budget() {
    let tmp = tempfile::tempdir().unwrap();
    let started = std::time::Instant::now();
    let run = heatlab(&["verify-lemmas", "--output", "lemmas"], tmp.path());
    let elapsed = started.elapsed();
    assert!(run.status.success(), "stderr: {}", String::from_utf8_lossy(&run.stderr));

    let rows = csv_rows(&read(&tmp.path().join("lemmas"), "checks.csv"));
    assert_eq!(rows.len(), 7);
    for row in &rows {
        assert_eq!(row[1], "true", "check {} did not pass", row[0]);
    }
    assert!(elapsed.as_secs() < 60, "deterministic sweep took {elapsed:?}");
}

#[test]
fn picard_tabulates_contracting_ratios() {
    let tmp = tempfile::tempdir().unwrap();
    let run = heatlab(
        &[
            "picard",
            "--iters",
            "4",
            "--n-x",
            "32",
            "--n-t",
            "64",
            "--paths",
            "200",
            "--output",
            "picard",
        ],
        tmp.path(),
    );
    assert!(run.status.success(), "stderr: {}", String::from_utf8_lossy(&run.stderr));

    let rows = csv_rows(&read(&tmp.path().join("picard"), "picard.csv"));
    assert_eq!(rows.len(), 4);
    let norms: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    for w in norms.windows(2) {
        assert!(w[1] < w[0], "difference norms are not decreasing: {norms:?}");
    }
    let ratios: Vec<f64> = rows[1..].iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(ratios.iter().all(|r| *r < 1.0), "ratios not contracting: {ratios:?}");
}
