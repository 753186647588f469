//! Subcommand executors: compute, then write the artifact set.
//!
//! Every executor writes `manifest.toml` (the resolved configuration), a
//! detail table in CSV, and one machine-readable `summary.json`; some add
//! an SVG curve when plotting is on. Artifact files never contain wall
//! times — report runtimes go to stdout only — so a rerun from the manifest
//! reproduces every file byte-for-byte.

use crate::config::ExperimentConfig;
use heatlab::kernel::{KernelOptions, KernelTable};
use heatlab::noise::NoiseStream;
use heatlab::report::{write_reports_csv, CheckReport};
use heatlab::solver::{picard_contraction, simulate_with};
use heatlab::verifier::fault::run_fault_injection;
use heatlab::verifier::lemmas::{check_kernel_lemma, run_all_lemma_checks, LemmaCheckSpec, LemmaId};
use heatlab::verifier::stochastic as sto;
use heatlab::{Error, Result};
use serde_json::{json, Value};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root).map_err(|e| {
            Error::Config(format!("cannot create output directory {}: {e}", root.display()))
        })?;
        Ok(Self { root: root.to_path_buf() })
    }

    fn write(&self, name: &str, contents: &str) -> Result<()> {
        let path = self.root.join(name);
        std::fs::write(&path, contents)
            .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
    }

    pub fn display(&self) -> std::path::Display<'_> {
        self.root.display()
    }
}

/// Cap the rayon pool: explicit config wins, then `HEATLAB_WORKERS`, then
/// the default pool (all cores).
pub fn init_workers(cfg: &ExperimentConfig) -> Result<()> {
    let n = if cfg.run.workers > 0 {
        cfg.run.workers
    } else if let Ok(s) = std::env::var("HEATLAB_WORKERS") {
        s.trim().parse::<usize>().ok().filter(|&n| n > 0).ok_or_else(|| {
            Error::Config(format!("HEATLAB_WORKERS must be a positive integer, got {s:?}"))
        })?
    } else {
        return Ok(());
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))
}

/// JSON cannot hold non-finite numbers; map them to their display strings
/// so the summary stays both valid and lossless.
fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::String(v.to_string())
    }
}

fn report_json(r: &CheckReport) -> Value {
    json!({
        "name": r.name,
        "passed": r.passed,
        "inconclusive": r.inconclusive,
        "statistic": num(r.statistic),
        "bound": num(r.bound),
        "margin": num(r.margin),
        "stderr": r.stderr.map(num).unwrap_or(Value::Null),
        "levels": r.levels.iter().map(|&v| num(v)).collect::<Vec<_>>(),
        "notes": r.notes,
    })
}

fn write_summary(
    out: &OutDir,
    cfg: &ExperimentConfig,
    subcommand: &str,
    reports: &[CheckReport],
    details: Value,
) -> Result<()> {
    let all_passed =
        if reports.is_empty() { Value::Null } else { json!(reports.iter().all(|r| r.passed)) };
    let summary = json!({
        "subcommand": subcommand,
        "master_seed": cfg.run.master_seed,
        "all_passed": all_passed,
        "reports": reports.iter().map(report_json).collect::<Vec<_>>(),
        "details": details,
    });
    out.write("summary.json", &format!("{summary:#}\n"))
}

/// Shared tail of the check-style subcommands: manifest, stdout lines,
/// `checks.csv`, summary.
fn emit_reports(
    out: &OutDir,
    cfg: &ExperimentConfig,
    subcommand: &str,
    mut reports: Vec<CheckReport>,
) -> Result<()> {
    out.write("manifest.toml", &cfg.manifest(subcommand)?)?;
    for r in &reports {
        println!("{}", r.summary_line());
    }
    for r in &mut reports {
        r.runtime_s = 0.0;
    }
    let mut csv = Vec::new();
    write_reports_csv(&mut csv, &reports)
        .map_err(|e| Error::Config(format!("cannot format checks.csv: {e}")))?;
    out.write("checks.csv", std::str::from_utf8(&csv).expect("csv is utf-8"))?;
    write_summary(out, cfg, subcommand, &reports, Value::Null)?;
    println!("artifacts: {}", out.display());
    Ok(())
}

/// One polyline through `points` in a fixed 640×400 frame with min/max
/// labels — enough for a statistic-vs-parameter curve, nothing more.
fn svg_curve(title: &str, xlabel: &str, ylabel: &str, points: &[(f64, f64)]) -> String {
    let (w, h, ml, mb, mt, mr) = (640.0, 400.0, 70.0, 50.0, 40.0, 20.0);
    let (x0, x1) = points.iter().fold((f64::MAX, f64::MIN), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let (y0, y1) = points.iter().fold((f64::MAX, f64::MIN), |(a, b), p| (a.min(p.1), b.max(p.1)));
    let xspan = if x1 > x0 { x1 - x0 } else { 1.0 };
    let yspan = if y1 > y0 { y1 - y0 } else { 1.0 };
    let px = |x: f64| ml + (x - x0) / xspan * (w - ml - mr);
    let py = |y: f64| h - mb - (y - y0) / yspan * (h - mb - mt);
    let mut path = String::new();
    for (i, &(x, y)) in points.iter().enumerate() {
        let _ = write!(path, "{}{:.2},{:.2}", if i == 0 { "M" } else { " L" }, px(x), py(y));
    }
    format!(
        concat!(
            r##"<svg xmlns="http://www.w3.org/2000/svg" width="640" height="400" viewBox="0 0 640 400">"##,
            "\n",
            r##"<rect x="{ml}" y="{mt}" width="{iw}" height="{ih}" fill="none" stroke="#888"/>"##,
            "\n",
            r##"<path d="{path}" fill="none" stroke="#1a6" stroke-width="1.5"/>"##,
            "\n",
            r##"<text x="320" y="20" text-anchor="middle" font-size="14">{title}</text>"##,
            "\n",
            r##"<text x="320" y="392" text-anchor="middle" font-size="12">{xlabel}</text>"##,
            "\n",
            r##"<text x="14" y="200" text-anchor="middle" font-size="12" transform="rotate(-90 14 200)">{ylabel}</text>"##,
            "\n",
            r##"<text x="{ml}" y="382" text-anchor="middle" font-size="10">{x0:.4}</text>"##,
            "\n",
            r##"<text x="{xr}" y="382" text-anchor="middle" font-size="10">{x1:.4}</text>"##,
            "\n",
            r##"<text x="{yl}" y="{yb}" text-anchor="end" font-size="10">{y0:.4}</text>"##,
            "\n",
            r##"<text x="{yl}" y="{yt}" text-anchor="end" font-size="10">{y1:.4}</text>"##,
            "\n</svg>\n",
        ),
        ml = ml,
        mt = mt,
        iw = w - ml - mr,
        ih = h - mb - mt,
        path = path,
        title = title,
        xlabel = xlabel,
        ylabel = ylabel,
        x0 = x0,
        x1 = x1,
        xr = w - mr,
        yl = ml - 6.0,
        yb = h - mb,
        yt = mt + 4.0,
        y0 = y0,
        y1 = y1,
    )
}

pub fn simulate(cfg: &ExperimentConfig, out: &OutDir) -> Result<()> {
    let sc = cfg.solver_config()?;
    let path = cfg.run.path_index;
    let table = sc.build_table()?;
    let stream = NoiseStream::new(sc.master_seed, path, sc.n_x, sc.dt())?;
    let traj = simulate_with(&sc, path, &table, &stream)?;

    let mut csv = String::from("t");
    for j in 1..sc.n_x {
        let _ = write!(csv, ",{}", j as f64 / sc.n_x as f64);
    }
    csv.push('\n');
    for m in 0..traj.steps() {
        let _ = write!(csv, "{}", traj.time(m));
        for v in traj.row(m) {
            let _ = write!(csv, ",{v}");
        }
        csv.push('\n');
    }
    out.write("manifest.toml", &cfg.manifest("simulate")?)?;
    out.write("trajectory.csv", &csv)?;

    let sup = traj.values().iter().filter(|v| v.is_finite()).fold(0.0f64, |a, &v| a.max(v.abs()));
    let details = json!({
        "path_index": path,
        "blow_up_step": traj.blow_up_step(),
        "sup_abs": num(sup),
    });
    match traj.blow_up_step() {
        Some(step) => println!("path {path}: blew up at step {step} (t={})", traj.time(step)),
        None => println!("path {path}: finite on the whole window, sup |u| = {sup:.6}"),
    }
    if cfg.run.plot {
        let last_alive = (0..traj.steps())
            .rev()
            .find(|&m| traj.row(m).iter().all(|v| v.is_finite()));
        if let Some(m) = last_alive {
            let pts: Vec<(f64, f64)> = traj
                .row(m)
                .iter()
                .enumerate()
                .map(|(j, &v)| ((j + 1) as f64 / sc.n_x as f64, v))
                .collect();
            out.write(
                "profile.svg",
                &svg_curve(&format!("u(t, x) at t = {:.4}", traj.time(m)), "x", "u", &pts),
            )?;
        }
    }
    write_summary(out, cfg, "simulate", &[], details)?;
    println!("artifacts: {}", out.display());
    Ok(())
}

pub fn picard(cfg: &ExperimentConfig, out: &OutDir) -> Result<()> {
    let sc = cfg.solver_config()?;
    let report = picard_contraction(&sc, cfg.run.paths, cfg.picard.iters, cfg.picard.beta)?;

    let mut csv = String::from("iteration,difference_norm,ratio\n");
    for (n, norm) in report.norms.iter().enumerate() {
        let ratio =
            if n == 0 { String::new() } else { report.ratios[n - 1].to_string() };
        let _ = writeln!(csv, "{},{norm},{ratio}", n + 1);
    }
    out.write("manifest.toml", &cfg.manifest("picard")?)?;
    out.write("picard.csv", &csv)?;
    for (n, norm) in report.norms.iter().enumerate() {
        match n {
            0 => println!("iteration 1: ‖U_2 − U_1‖ = {norm:.6e}"),
            _ => println!(
                "iteration {}: norm {norm:.6e}, ratio {:.4}",
                n + 1,
                report.ratios[n - 1]
            ),
        }
    }
    if cfg.run.plot {
        let pts: Vec<(f64, f64)> = report
            .norms
            .iter()
            .enumerate()
            .map(|(n, &v)| ((n + 1) as f64, v.ln()))
            .collect();
        out.write(
            "picard.svg",
            &svg_curve("Picard difference norms", "iteration", "log norm", &pts),
        )?;
    }
    let details = json!({
        "alpha": report.alpha,
        "beta": report.beta,
        "paths_used": report.paths_used,
        "paths_frozen": report.paths_frozen,
        "norms": report.norms.iter().map(|&v| num(v)).collect::<Vec<_>>(),
        "ratios": report.ratios.iter().map(|&v| num(v)).collect::<Vec<_>>(),
    });
    write_summary(out, cfg, "picard", &[], details)?;
    println!("artifacts: {}", out.display());
    Ok(())
}

fn lemma_names() -> String {
    LemmaId::all().map(|id| id.name()).join(", ")
}

pub fn verify_lemmas(cfg: &ExperimentConfig, out: &OutDir) -> Result<()> {
    let reports = if cfg.verify.only.is_empty() {
        run_all_lemma_checks()?
    } else {
        cfg.verify
            .only
            .iter()
            .map(|name| {
                let id = LemmaId::all()
                    .into_iter()
                    .find(|id| id.name() == name)
                    .ok_or_else(|| {
                        Error::Config(format!(
                            "verify.only: unknown lemma check {name:?}; expected one of {}",
                            lemma_names()
                        ))
                    })?;
                check_kernel_lemma(&LemmaCheckSpec::preset(id))
            })
            .collect::<Result<Vec<_>>>()?
    };
    emit_reports(out, cfg, "verify-lemmas", reports)
}

const STOCHASTIC_CHECKS: [&str; 11] = [
    "eigenfunction-decay",
    "kernel-dual-representation",
    "walsh-isometry-anchor",
    "chaining-inequality",
    "moment-bound",
    "comparison-principle",
    "initial-stability",
    "l2-continuity",
    "decay-statistic",
    "operator-norm-scaling",
    "uniqueness-cutoff-agreement",
];

pub fn verify_stochastic(cfg: &ExperimentConfig, out: &OutDir) -> Result<()> {
    let spec = cfg.stochastic_spec();
    let mut reports = if cfg.verify.only.is_empty() {
        sto::run_all_stochastic_checks(&spec)?
    } else {
        // Reject typos before any simulation time is spent.
        for name in &cfg.verify.only {
            if !STOCHASTIC_CHECKS.contains(&name.as_str()) {
                return Err(Error::Config(format!(
                    "verify.only: unknown check {name:?}; expected one of {}",
                    STOCHASTIC_CHECKS.join(", ")
                )));
            }
        }
        let table = KernelTable::with_options(spec.n_x, KernelOptions::default())?;
        let mut v = Vec::with_capacity(cfg.verify.only.len());
        for name in &cfg.verify.only {
            v.push(match name.as_str() {
                "eigenfunction-decay" => sto::eigenfunction_decay(&table)?,
                "kernel-dual-representation" => {
                    sto::dual_representation(&table, 1000, spec.master_seed)?
                }
                "walsh-isometry-anchor" => sto::variance_anchor(&spec)?,
                "chaining-inequality" => sto::check_chaining(&spec)?,
                "moment-bound" => sto::check_moment_bound(&spec)?,
                "comparison-principle" => sto::check_comparison(&spec)?,
                "initial-stability" => sto::check_stability(&spec)?,
                "l2-continuity" => sto::check_l2_continuity(&spec)?,
                "decay-statistic" => sto::check_decay_statistic(&spec)?,
                "operator-norm-scaling" => sto::operator_scaling(&spec)?,
                "uniqueness-cutoff-agreement" => sto::uniqueness_surrogate(&spec)?,
                _ => unreachable!("validated above"),
            });
        }
        v
    };
    if cfg.verify.with_faults {
        reports.extend(run_fault_injection(&spec)?);
    }
    emit_reports(out, cfg, "verify-stochastic", reports)
}

/// The single-check experiment families: `compare`, `stability`, `decay`,
/// `l2-continuity`.
pub fn single_check(cfg: &ExperimentConfig, out: &OutDir, subcommand: &str) -> Result<()> {
    let spec = cfg.stochastic_spec();
    let report = match subcommand {
        "compare" => sto::check_comparison(&spec)?,
        "stability" => sto::check_stability(&spec)?,
        "decay" => sto::check_decay_statistic(&spec)?,
        "l2-continuity" => sto::check_l2_continuity(&spec)?,
        other => unreachable!("no single-check executor for {other}"),
    };
    emit_reports(out, cfg, subcommand, vec![report])
}
