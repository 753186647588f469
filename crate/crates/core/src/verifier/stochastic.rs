//! Certification of the simulated solution against closed forms, scaling
//! laws, and pathwise order relations.
//!
//! Two deterministic anchors — eigenfunction decay through the discrete
//! transforms and agreement of the two kernel representations — pin down the
//! machinery every Monte Carlo check rides on. The ensemble checks then
//! compare simulated statistics against the additive-noise variance oracle,
//! the chaining bound with its explicit constant, the sub-Gaussian moment
//! envelope, the comparison principle, linear response to initial-data
//! perturbations, small-time L² continuity, the weighted small-time decay
//! statistic, and the weight-rate scaling of the two convolution operators.
//!
//! Statistical checks use 3-standard-error bands or pinned slope bands;
//! every report is reproducible bit-for-bit from its configuration and
//! master seed, because path accumulation is merged in a fixed order.

use crate::coefficients::{compute_envelope, Drift, Sigma, TruncatedDrift};
use crate::fields::{
    chaining_constant, empirical_moment_norm, holder_statistic, m_norm, weighted_sup_norm,
    Ensemble, ModulusSpec, Trajectory,
};
use crate::kernel::{eigenvalue, KernelOptions, KernelTable};
use crate::noise::{CounterRng, NoiseStream};
use crate::report::CheckReport;
use crate::solver::{
    lebesgue_convolve, patched_simulate, simulate_ensemble, simulate_with, DriftKind, InitialData,
    PatchedSpec, SolverConfig,
};
use crate::verifier::oracle::variance_oracle_additive;
use crate::{Error, Result};
use rayon::prelude::*;
use std::f64::consts::{E, PI};
use std::time::Instant;

/// Scale knobs shared by the simulation-facing checks. The defaults are the
/// desk scale all tolerances in this module were pinned at; shrinking them
/// is fine for smoke runs but loosens no band.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct StochasticSpec {
    pub master_seed: u64,
    /// Paths for the ensemble checks.
    pub paths: usize,
    /// Paths for the variance anchor, whose 3-standard-error band must be
    /// tight enough to resolve a sub-percent bias.
    pub anchor_paths: usize,
    pub n_x: usize,
    pub n_t: usize,
    pub horizon: f64,
}

impl Default for StochasticSpec {
    fn default() -> Self {
        Self { master_seed: 0, paths: 1000, anchor_paths: 10_000, n_x: 128, n_t: 256, horizon: 0.5 }
    }
}

impl StochasticSpec {
    fn validate(&self) -> Result<()> {
        if self.paths < 8 {
            return Err(Error::Config(format!(
                "ensemble checks need at least 8 paths, got {}",
                self.paths
            )));
        }
        if self.anchor_paths < 16 {
            return Err(Error::Config(format!(
                "the variance anchor needs at least 16 paths, got {}",
                self.anchor_paths
            )));
        }
        self.additive_config().validate()
    }

    /// The additive-noise reference configuration: `b = 0`, `σ ≡ 1`,
    /// `u₀ = 0`. Its solution is the unit stochastic convolution in law.
    fn additive_config(&self) -> SolverConfig {
        SolverConfig {
            n_x: self.n_x,
            n_t: self.n_t,
            horizon: self.horizon,
            initial: InitialData::Zero,
            drift: DriftKind::Plain(Drift::Zero),
            sigma: Sigma::Constant(1.0),
            master_seed: self.master_seed,
            kernel_options: KernelOptions::default(),
        }
    }

    /// The critical-growth reference configuration: `b(z) = ½ + |z| log₊|z|`
    /// truncated at level e³ with cap exponent ½, unit dispersion. The
    /// envelope constants are `M_b = ½`, `K_b = 12`, `L_b = 2`, which
    /// satisfy the smallness condition with room.
    fn llogl_config(&self, initial: InitialData) -> Result<SolverConfig> {
        let drift = TruncatedDrift::new(
            Drift::LLogL { theta1: 0.5, theta2: 1.0 },
            E.powi(3),
            0.5,
        )?;
        Ok(SolverConfig {
            n_x: self.n_x,
            n_t: self.n_t,
            horizon: self.horizon,
            initial,
            drift: DriftKind::Truncated(drift),
            sigma: Sigma::Constant(1.0),
            master_seed: self.master_seed,
            kernel_options: KernelOptions::default(),
        })
    }
}

// ---------------------------------------------------------------------------
// Deterministic anchors
// ---------------------------------------------------------------------------

/// Mode `n` under the discrete semigroup must decay by exactly
/// `e^{-n²π²t/2}`: the statistic is the worst relative deviation of the
/// reconstructed grid profile from the decayed eigenfunction over `n ≤ 8`
/// and `t ∈ {0.01, 0.1, 1}`, at the table's own grid and at twice that
/// resolution. The reference eigenvalues come from the closed form, not the
/// table, so a rescaled spectrum shows up as a violation.
pub fn eigenfunction_decay(table: &KernelTable) -> Result<CheckReport> {
    let start = Instant::now();
    let times = [0.01, 0.1, 1.0];
    let fine = KernelTable::with_options(2 * table.grid_points(), *table.options())?
        .with_spectrum_scale(table.spectrum_scale());
    let mut levels = Vec::new();
    for tbl in [table, &fine] {
        let mut worst = 0.0f64;
        for n in 1..=8usize {
            let mut coeffs = vec![0.0; tbl.mode_count()];
            coeffs[n - 1] = 1.0;
            for &t in &times {
                let decayed = tbl.semigroup_apply(&coeffs, t)?;
                let grid = tbl.inverse_sine_transform(&decayed)?;
                let scale = (-eigenvalue(n) * t).exp();
                let err = grid
                    .iter()
                    .enumerate()
                    .map(|(j, g)| {
                        let x = (j + 1) as f64 / tbl.grid_points() as f64;
                        (g - scale * (n as f64 * PI * x).sin()).abs()
                    })
                    .fold(0.0f64, f64::max);
                worst = worst.max(err / scale);
            }
        }
        levels.push(worst);
    }
    let statistic = levels.iter().copied().fold(0.0f64, f64::max);
    let mut report = CheckReport::upper("eigenfunction-decay", statistic, 1e-10)
        .with_levels(levels)
        .with_note("grid profiles against e^{-n²π²t/2}·sin(nπx), n ≤ 8, t ∈ {0.01, 0.1, 1}");
    report.runtime_s = start.elapsed().as_secs_f64();
    Ok(report)
}

/// The eigen-series and reflected-Gaussian forms of the kernel evaluate the
/// same function; their largest absolute disagreement over a seeded sample
/// of `(t, x, y)` with `t` log-uniform in `[1e-4, 1]` must stay below 1e-8.
/// Both forms are evaluated directly, on either side of the representation
/// switch, so this is the cross-regime consistency certificate.
pub fn dual_representation(table: &KernelTable, samples: usize, seed: u64) -> Result<CheckReport> {
    let start = Instant::now();
    if samples < 16 {
        return Err(Error::Config(format!(
            "representation comparison needs at least 16 samples, got {samples}"
        )));
    }
    let mut rng = CounterRng::new(seed, "kernel-dual-representation");
    let mut coarse = 0.0f64;
    let mut worst = 0.0f64;
    for i in 0..samples {
        let t = (rng.next_unit() * (1e-4f64).ln()).exp();
        let x = rng.next_unit();
        let y = rng.next_unit();
        let d = (table.eval_kernel_spectral(t, x, y)? - table.eval_kernel_image(t, x, y)?).abs();
        worst = worst.max(d);
        if i < samples / 2 {
            coarse = coarse.max(d);
        }
    }
    let mut report = CheckReport::upper("kernel-dual-representation", worst, 1e-8)
        .with_levels(vec![coarse, worst])
        .with_note(format!("{samples} seeded points, t log-uniform in [1e-4, 1]"));
    report.runtime_s = start.elapsed().as_secs_f64();
    Ok(report)
}

// ---------------------------------------------------------------------------
// Variance anchor
// ---------------------------------------------------------------------------

/// Five time fractions crossed with four interior positions: twenty probes.
fn anchor_probes(spec: &StochasticSpec) -> Vec<(usize, usize)> {
    let mut probes = Vec::with_capacity(20);
    for f in [0.125, 0.25, 0.5, 0.75, 1.0] {
        let row = ((f * spec.n_t as f64).round() as usize).clamp(1, spec.n_t) - 1;
        for x in [0.25, 0.5, 0.7, 0.9] {
            let col = ((x * spec.n_x as f64).round() as usize).clamp(1, spec.n_x - 1) - 1;
            probes.push((row, col));
        }
    }
    probes
}

/// Ensemble variance of the additive-noise solution against the exact
/// variance integral, at twenty space-time probes, each within three
/// standard errors of the sample variance. The statistic is the worst
/// probe's deviation in units of its own 3-SE band, so the bound is one.
pub fn variance_anchor(spec: &StochasticSpec) -> Result<CheckReport> {
    variance_anchor_scaled(spec, spec.anchor_paths, 1.0, 1.0)
}

/// Fault-drill surface for [`variance_anchor`]: the same statistic with the
/// kernel spectrum and the noise variance independently rescaled. Scales of
/// one reproduce the clean check; the oracle always uses the true spectrum.
pub fn variance_anchor_scaled(
    spec: &StochasticSpec,
    paths: usize,
    spectrum_scale: f64,
    variance_scale: f64,
) -> Result<CheckReport> {
    let start = Instant::now();
    spec.validate()?;
    if paths < 16 {
        return Err(Error::Config(format!("the variance anchor needs at least 16 paths, got {paths}")));
    }
    let config = spec.additive_config();
    let table = config.build_table()?.with_spectrum_scale(spectrum_scale);
    let reference = config.build_table()?;
    let probes = anchor_probes(spec);
    let dt = config.dt();
    let oracle: Vec<f64> = probes
        .iter()
        .map(|&(row, col)| {
            let t = (row + 1) as f64 * dt;
            let x = (col + 1) as f64 / spec.n_x as f64;
            variance_oracle_additive(&reference, t, x)
        })
        .collect::<Result<_>>()?;

    #[derive(Clone)]
    struct Acc {
        n: Vec<u64>,
        sum: Vec<f64>,
        sum_sq: Vec<f64>,
    }
    impl Acc {
        fn new(len: usize) -> Self {
            Self { n: vec![0; len], sum: vec![0.0; len], sum_sq: vec![0.0; len] }
        }
        fn fold(&mut self, other: &Acc) {
            for i in 0..self.n.len() {
                self.n[i] += other.n[i];
                self.sum[i] += other.sum[i];
                self.sum_sq[i] += other.sum_sq[i];
            }
        }
        /// Worst probe deviation from the oracle in 3-SE units, and its index.
        fn statistic(&self, oracle: &[f64]) -> Result<(f64, usize)> {
            let mut worst = 0.0f64;
            let mut arg = 0usize;
            for (i, &target) in oracle.iter().enumerate() {
                if self.n[i] < 2 {
                    return Err(Error::NumericalFault(
                        "a variance probe lost all of its paths".into(),
                    ));
                }
                let n = self.n[i] as f64;
                let mean = self.sum[i] / n;
                let var = (self.sum_sq[i] - n * mean * mean) / (n - 1.0);
                // Sampling error of a Gaussian sample variance.
                let se = var * (2.0 / (n - 1.0)).sqrt();
                let dev = (var - target).abs() / (3.0 * se);
                if dev > worst {
                    worst = dev;
                    arg = i;
                }
            }
            Ok((worst, arg))
        }
    }

    let ids: Vec<u64> = (0..paths as u64).collect();
    let half = paths as u64 / 2;
    let partials = ids
        .par_chunks(64)
        .map(|chunk| {
            let mut full = Acc::new(probes.len());
            let mut head = Acc::new(probes.len());
            for &p in chunk {
                let stream = NoiseStream::new(config.master_seed, p, config.n_x, dt)?
                    .with_variance_scale(variance_scale);
                let traj = simulate_with(&config, p, &table, &stream)?;
                for (i, &(row, col)) in probes.iter().enumerate() {
                    let v = traj.value(row, col);
                    if v.is_finite() {
                        full.n[i] += 1;
                        full.sum[i] += v;
                        full.sum_sq[i] += v * v;
                        if p < half {
                            head.n[i] += 1;
                            head.sum[i] += v;
                            head.sum_sq[i] += v * v;
                        }
                    }
                }
            }
            Ok((full, head))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut full = Acc::new(probes.len());
    let mut head = Acc::new(probes.len());
    for (f, h) in &partials {
        full.fold(f);
        head.fold(h);
    }

    let (stat_half, _) = head.statistic(&oracle)?;
    let (statistic, arg) = full.statistic(&oracle)?;
    let (row, col) = probes[arg];
    let mut report = CheckReport::upper("walsh-isometry-anchor", statistic, 1.0)
        .with_levels(vec![stat_half, statistic])
        .with_note(format!(
            "worst probe t={:.4}, x={:.4} over {paths} paths",
            (row + 1) as f64 * dt,
            (col + 1) as f64 / spec.n_x as f64
        ));
    report.runtime_s = start.elapsed().as_secs_f64();
    Ok(report)
}

// ---------------------------------------------------------------------------
// Chaining bound
// ---------------------------------------------------------------------------

/// Expected k-th power of the weighted sup norm of the unit stochastic
/// convolution against the chaining bound `(1280 L)^k (𝒩 + C)^k` with the
/// empirically estimated moment norm `𝒩` and two-point modulus `C`, for
/// `k = 8`, `α = ¼`, `ᾱ = ½`, `τ = μ = (1−10⁻³)/2`, `β ∈ {4, 16}` and
/// `β̄ = 2β`. At `k = 8` the modulus floor `k ≥ 4(1/τ + 1/μ) ≈ 16.02` is
/// not met, so the bound is exercised outside its stated hypothesis — with
/// its deliberately loose constant it is expected to hold regardless, and
/// the report says so.
pub fn check_chaining(spec: &StochasticSpec) -> Result<CheckReport> {
    let start = Instant::now();
    spec.validate()?;
    let config = spec.additive_config();
    let ens = simulate_ensemble(&config, spec.paths)?;
    let half = Ensemble::new(ens.paths()[..spec.paths / 2].to_vec())?;

    let k = 8.0;
    let (alpha, alpha_bar) = (0.25, 0.5);
    let (tau, mu) = (0.5 * (1.0 - 1e-3), 0.5 * (1.0 - 1e-3));
    let floor = 4.0 * (1.0 / tau + 1.0 / mu);
    let mut notes = Vec::new();

    let mut worst_of = |ens: &Ensemble, keep_notes: bool| -> Result<f64> {
        let mut worst = 0.0f64;
        for beta in [4.0, 16.0] {
            let modulus = ModulusSpec { k, tau, mu, alpha, alpha_bar, beta };
            let moment = empirical_moment_norm(ens, k, alpha, beta, spec.horizon)?;
            let two_point = holder_statistic(ens, &modulus, spec.horizon)?;
            let l = chaining_constant(alpha, alpha_bar, beta, 2.0 * beta)?;
            let sups: Vec<f64> = ens
                .paths()
                .iter()
                .map(|p| weighted_sup_norm(p, alpha_bar, 2.0 * beta, spec.horizon))
                .collect::<Result<_>>()?;
            let alive: Vec<f64> = sups.into_iter().filter(|s| s.is_finite()).collect();
            if alive.is_empty() {
                return Err(Error::NumericalFault("every chaining path froze".into()));
            }
            let lhs = alive.iter().map(|s| s.powf(k)).sum::<f64>() / alive.len() as f64;
            let rhs = (1280.0 * l * (moment.value + two_point.value)).powf(k);
            if !(lhs.is_finite() && rhs.is_finite()) {
                return Err(Error::NumericalFault(format!(
                    "chaining moments are not finite: lhs={lhs}, rhs={rhs}"
                )));
            }
            worst = worst.max(lhs / rhs);
            if keep_notes {
                notes.push(format!(
                    "β={beta}: lhs={lhs:.3e}, rhs={rhs:.3e}, 𝒩={:.4e}, C={:.4e}, L={l:.6}",
                    moment.value, two_point.value
                ));
            }
        }
        Ok(worst)
    };

    let coarse = worst_of(&half, false)?;
    let statistic = worst_of(&ens, true)?;
    let mut report = CheckReport::upper("chaining-inequality", statistic, 1.0)
        .with_levels(vec![coarse, statistic]);
    report.notes = notes;
    report.notes.push(format!(
        "moment order k=8 sits below the modulus floor 4(1/τ+1/μ) = {floor:.2}; \
         the bound is exercised outside its stated hypothesis"
    ));
    report.runtime_s = start.elapsed().as_secs_f64();
    Ok(report)
}

// ---------------------------------------------------------------------------
// Moment envelope
// ---------------------------------------------------------------------------

/// Smallest envelope constant `A` for which
/// `E|u(t,x)|^k ≤ (2A/t)^{k/4} (‖u₀‖_{L²} + √k)^k e^{4AK_b k t}` holds
/// across a `(t, x, k ≤ 8)` grid, fitted by bisection per grid point and
/// maximized. Passing means the constant exists below 1e6 and moves by
/// less than 10% when half the paths are dropped; blown-up paths fail the
/// check outright with their fraction reported.
pub fn check_moment_bound(spec: &StochasticSpec) -> Result<CheckReport> {
    let start = Instant::now();
    spec.validate()?;
    let config = spec.llogl_config(InitialData::SineMode { mode: 1, amplitude: 1.0 })?;
    let k_b = match &config.drift {
        DriftKind::Truncated(td) => compute_envelope(td)?.k_b,
        DriftKind::Plain(_) => unreachable!("the reference configuration truncates its drift"),
    };
    let u0_l2 = config.initial.l2_norm(config.n_x);
    let ens = simulate_ensemble(&config, spec.paths)?;
    let frozen = ens.frozen_fraction(spec.horizon);

    let dt = config.dt();
    let mut grid = Vec::new();
    for f in [0.125, 0.25, 0.5, 1.0] {
        let row = ((f * spec.n_t as f64).round() as usize).clamp(1, spec.n_t) - 1;
        for x in [0.25, 0.5, 0.75] {
            let col = ((x * spec.n_x as f64).round() as usize).clamp(1, spec.n_x - 1) - 1;
            grid.push((row, col));
        }
    }
    let orders = [1.0, 2.0, 4.0, 8.0];

    // RHS of the envelope at constant `a`, monotone increasing in `a`.
    let envelope = |a: f64, t: f64, k: f64| -> f64 {
        (2.0 * a / t).powf(k / 4.0)
            * (u0_l2 + k.sqrt()).powf(k)
            * (4.0 * a * k_b * k * t).exp()
    };
    const A_LO: f64 = 1e-9;
    const A_HI: f64 = 1e6;

    let fit = |paths: &[Trajectory]| -> Result<Option<f64>> {
        let mut a_needed = A_LO;
        for &(row, col) in &grid {
            let t = (row + 1) as f64 * dt;
            for &k in &orders {
                let mut n = 0usize;
                let mut sum = 0.0f64;
                for p in paths {
                    let v = p.value(row, col);
                    if v.is_finite() {
                        n += 1;
                        sum += v.abs().powf(k);
                    }
                }
                if n == 0 {
                    return Err(Error::NumericalFault(
                        "a moment grid point lost all of its paths".into(),
                    ));
                }
                let target = sum / n as f64;
                if envelope(A_HI, t, k) < target {
                    return Ok(None);
                }
                if envelope(A_LO, t, k) >= target {
                    continue;
                }
                let (mut lo, mut hi) = (A_LO.ln(), A_HI.ln());
                for _ in 0..120 {
                    let mid = 0.5 * (lo + hi);
                    if envelope(mid.exp(), t, k) >= target {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                a_needed = a_needed.max(hi.exp());
            }
        }
        Ok(Some(a_needed))
    };

    let coarse = fit(&ens.paths()[..spec.paths / 2])?;
    let full = fit(ens.paths())?;
    let mut report = match (coarse, full) {
        (Some(c), Some(a)) => {
            CheckReport::upper("moment-bound", a, f64::INFINITY).with_levels_checked(vec![c, a], 0.10)
        }
        _ => CheckReport::upper("moment-bound", f64::INFINITY, f64::INFINITY)
            .inconclusive("no envelope constant below 1e6 dominates the empirical moments"),
    };
    if frozen > 0.0 {
        report.passed = false;
        report.notes.push(format!("blow-up fraction {frozen:.3e}"));
    }
    report.notes.push(format!("K_b={k_b}, ‖u₀‖_L²={u0_l2:.6}, grid {}×{} points", grid.len(), orders.len()));
    report.runtime_s = start.elapsed().as_secs_f64();
    Ok(report)
}

// ---------------------------------------------------------------------------
// Comparison, stability, continuity, decay
// ---------------------------------------------------------------------------

/// Pathwise order preservation: with shared noise, drift, and dispersion,
/// the solution started from zero must stay below the solution started from
/// `sin(πx)`, up to a tolerance of 1e-6 times the larger solution's sup.
/// The statistic is the violating fraction of compared space-time points.
pub fn check_comparison(spec: &StochasticSpec) -> Result<CheckReport> {
    let start = Instant::now();
    spec.validate()?;
    let paths = spec.paths.min(100);
    let low = simulate_ensemble(&spec.llogl_config(InitialData::Zero)?, paths)?;
    let high = simulate_ensemble(
        &spec.llogl_config(InitialData::SineMode { mode: 1, amplitude: 1.0 })?,
        paths,
    )?;

    let scale = high
        .paths()
        .iter()
        .flat_map(|p| p.values().iter())
        .filter(|v| v.is_finite())
        .fold(0.0f64, |a, &v| a.max(v.abs()));
    if scale == 0.0 {
        return Err(Error::NumericalFault("the dominating solution vanished identically".into()));
    }
    let tol = 1e-6 * scale;
    let mut compared = 0u64;
    let mut violations = 0u64;
    for (a, b) in low.paths().iter().zip(high.paths()) {
        for (&va, &vb) in a.values().iter().zip(b.values()) {
            if va.is_finite() && vb.is_finite() {
                compared += 1;
                if va > vb + tol {
                    violations += 1;
                }
            }
        }
    }
    let statistic = violations as f64 / compared as f64;
    let mut report = CheckReport::upper("comparison-principle", statistic, 1e-3).with_note(format!(
        "{violations} of {compared} points above the coupled majorant at tolerance {tol:.3e}, {paths} paths"
    ));
    report.runtime_s = start.elapsed().as_secs_f64();
    Ok(report)
}

fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx = points.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    let sxy = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>();
    sxy / sxx
}

/// Pathwise difference of two coupled runs whose initial data differ by
/// `ε·sin(2πx)`: the parabolic second-moment norm of the difference must
/// respond linearly, a log-log slope of one within ±0.2 over
/// `ε ∈ {10⁻¹, 10⁻², 10⁻³}`.
pub fn check_stability(spec: &StochasticSpec) -> Result<CheckReport> {
    let start = Instant::now();
    spec.validate()?;
    let paths = spec.paths.min(100);
    let base_cfg = spec.llogl_config(InitialData::SineMode { mode: 1, amplitude: 1.0 })?;
    let base = simulate_ensemble(&base_cfg, paths)?;
    let nodes: Vec<f64> = (1..spec.n_x).map(|j| j as f64 / spec.n_x as f64).collect();
    let epsilons = [1e-1, 1e-2, 1e-3];

    let mut norms = Vec::new();
    let mut norms_half = Vec::new();
    for &eps in &epsilons {
        let shifted: Vec<f64> = nodes
            .iter()
            .map(|&x| (PI * x).sin() + eps * (2.0 * PI * x).sin())
            .collect();
        let cfg = spec.llogl_config(InitialData::Samples(shifted))?;
        let perturbed = simulate_ensemble(&cfg, paths)?;
        let diffs = base
            .paths()
            .iter()
            .zip(perturbed.paths())
            .map(|(a, b)| {
                let values: Vec<f64> =
                    a.values().iter().zip(b.values()).map(|(x, y)| x - y).collect();
                let blow_up = match (a.blow_up_step(), b.blow_up_step()) {
                    (Some(p), Some(q)) => Some(p.min(q)),
                    (Some(p), None) | (None, Some(p)) => Some(p),
                    (None, None) => None,
                };
                Trajectory::from_values(
                    a.n_x(),
                    a.n_t(),
                    a.horizon(),
                    a.master_seed(),
                    a.path(),
                    a.config_digest(),
                    blow_up,
                    values,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let half = Ensemble::new(diffs[..paths / 2].to_vec())?;
        let ens = Ensemble::new(diffs)?;
        norms.push(m_norm(&ens, spec.horizon)?.value);
        norms_half.push(m_norm(&half, spec.horizon)?.value);
    }

    let fit = |ns: &[f64]| -> f64 {
        let pts: Vec<(f64, f64)> =
            epsilons.iter().zip(ns).map(|(&e, &m)| (e.ln(), m.ln())).collect();
        least_squares_slope(&pts)
    };
    let slope = fit(&norms);
    let mut report = CheckReport::banded("initial-stability", slope, 1.0, 0.2)
        .with_levels(vec![fit(&norms_half), slope])
        .with_note(format!(
            "M_T(u − ũ) = {:.3e}, {:.3e}, {:.3e} at ε = 1e-1, 1e-2, 1e-3 over {paths} coupled paths",
            norms[0], norms[1], norms[2]
        ));
    report.runtime_s = start.elapsed().as_secs_f64();
    Ok(report)
}

fn median(sorted: &mut Vec<f64>) -> f64 {
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("medians of finite samples"));
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// L² distance from the initial data along dyadic times `T·2⁻ʲ`: the median
/// must decrease along the whole dyadic ladder and end below 0.35 times
/// `‖u₀‖_{L²}`. The noise-only component must fit the √t variance growth:
/// log-log slope of the root-mean-square L² norm in `t` equal to
/// 0.25 ± 0.1 (equivalently 0.5 ± 0.2 for the mean square). The RMS is the
/// fitted quantity because its expectation is exactly the truncated mode
/// sum; the median drags a drifting small-sample skew into the exponent.
pub fn check_l2_continuity(spec: &StochasticSpec) -> Result<CheckReport> {
    let start = Instant::now();
    spec.validate()?;
    let dx = 1.0 / spec.n_x as f64;
    let dyadic: Vec<usize> = (0..)
        .map(|j| spec.n_t >> j)
        .take_while(|&m| m >= 2)
        .map(|m| m - 1)
        .collect();
    if dyadic.len() < 6 {
        return Err(Error::Config(format!(
            "need at least 6 dyadic levels inside {} time steps",
            spec.n_t
        )));
    }

    // Full configuration: distance to the initial profile.
    let cfg = spec.llogl_config(InitialData::SineMode { mode: 1, amplitude: 1.0 })?;
    let ens = simulate_ensemble(&cfg, spec.paths)?;
    let u0: Vec<f64> = (1..spec.n_x).map(|j| (PI * j as f64 / spec.n_x as f64).sin()).collect();
    let med_dist: Vec<f64> = dyadic
        .iter()
        .map(|&row| {
            let mut per_path: Vec<f64> = ens
                .paths()
                .iter()
                .filter(|p| p.row(row).iter().all(|v| v.is_finite()))
                .map(|p| {
                    let sq: f64 =
                        p.row(row).iter().zip(&u0).map(|(v, w)| (v - w).powi(2)).sum();
                    (dx * sq).sqrt()
                })
                .collect();
            median(&mut per_path)
        })
        .collect();
    let last = med_dist.len() - 1;
    let decreasing = med_dist.windows(2).all(|w| w[1] < w[0]);
    let u0_l2 = cfg.initial.l2_norm(spec.n_x);
    let floor_ok = med_dist[last] <= 0.35 * u0_l2;

    // Additive configuration: pure noise growth exponent on the small-time
    // dyadic points, fitted on the root-mean-square L² norm.
    let add = simulate_ensemble(&spec.additive_config(), spec.paths)?;
    let dt = spec.horizon / spec.n_t as f64;
    let fit_points = |paths: &[Trajectory]| -> Vec<(f64, f64)> {
        dyadic[3..]
            .iter()
            .map(|&row| {
                let mut n = 0usize;
                let mut mean_sq = 0.0f64;
                for p in paths {
                    if p.row(row).iter().all(|v| v.is_finite()) {
                        n += 1;
                        mean_sq += dx * p.row(row).iter().map(|v| v * v).sum::<f64>();
                    }
                }
                (((row + 1) as f64 * dt).ln(), (mean_sq / n as f64).sqrt().ln())
            })
            .collect()
    };
    let slope = least_squares_slope(&fit_points(add.paths()));
    let slope_half = least_squares_slope(&fit_points(&add.paths()[..spec.paths / 2]));

    let mut report = CheckReport::banded("l2-continuity", slope, 0.25, 0.1)
        .with_levels(vec![slope_half, slope]);
    report.passed = report.passed && decreasing && floor_ok;
    report.notes.push(format!(
        "median ‖u(t)−u₀‖ along dyadic t↓: {}",
        med_dist.iter().map(|m| format!("{m:.4}")).collect::<Vec<_>>().join(" → ")
    ));
    report.notes.push(format!(
        "decreasing along the dyadic ladder: {decreasing}, final distance within 0.35‖u₀‖: \
         {floor_ok}; mean-square exponent {:.3} against 0.5 ± 0.2",
        2.0 * slope
    ));
    report.runtime_s = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Small-time decay of the weighted sup statistic `S = sup_t t^α ‖u(t)‖_∞`
/// with the singular initial profile and `α = 0.3`: `S` must be finite on
/// every surviving path, its upper tail must fit a stretched-exponential
/// `log P{S > q} ~ q^{2/3}` with negative slope, and the median of
/// `t^α ‖u(t)‖_∞` must not grow as `t ↓` through the earliest grid times.
pub fn check_decay_statistic(spec: &StochasticSpec) -> Result<CheckReport> {
    let start = Instant::now();
    spec.validate()?;
    let alpha = 0.3;
    let cfg = spec.llogl_config(InitialData::SingularProfile)?;
    let ens = simulate_ensemble(&cfg, spec.paths)?;
    let frozen = ens.frozen_fraction(spec.horizon);

    let alive: Vec<&Trajectory> =
        ens.paths().iter().filter(|p| !p.frozen_by(spec.horizon)).collect();
    if alive.len() < 8 {
        return Err(Error::NumericalFault(format!(
            "only {} of {} decay paths survived",
            alive.len(),
            spec.paths
        )));
    }
    let mut stats: Vec<f64> = alive
        .iter()
        .map(|p| {
            (0..p.steps())
                .map(|m| p.time(m).powf(alpha) * p.max_abs_row(m))
                .fold(0.0f64, f64::max)
        })
        .collect();
    let all_finite = stats.iter().all(|s| s.is_finite());
    stats.sort_by(|a, b| a.partial_cmp(b).expect("finite decay statistics"));

    // Upper-tail fit: survival probabilities against q^{2/3}.
    let n = stats.len();
    let targets = [0.5, 0.35, 0.25, 0.18, 0.12, 0.08, 0.05, 0.03, 0.02, 0.01];
    let mut pts = Vec::new();
    for &p in &targets {
        if p * n as f64 >= 5.0 {
            let idx = (((1.0 - p) * n as f64).ceil() as usize).min(n - 1);
            pts.push((stats[idx].powf(2.0 / 3.0), p.ln()));
        }
    }
    let slope = least_squares_slope(&pts);

    // Median of the weighted instantaneous statistic at the earliest times.
    let probe_rows: Vec<usize> =
        [0usize, 3, 15, 63].iter().copied().filter(|&r| r < spec.n_t).collect();
    let meds: Vec<f64> = probe_rows
        .iter()
        .map(|&row| {
            let mut vals: Vec<f64> = alive
                .iter()
                .filter(|p| p.row(row).iter().all(|v| v.is_finite()))
                .map(|p| p.time(row).powf(alpha) * p.max_abs_row(row))
                .collect();
            median(&mut vals)
        })
        .collect();
    let shrinking_down = meds.windows(2).all(|w| w[1] >= 0.99 * w[0]);

    let mut report = CheckReport::upper("decay-statistic", slope, 0.0);
    report.passed = report.passed && all_finite && shrinking_down;
    if frozen > 0.0 {
        report.notes.push(format!("blow-up fraction {frozen:.3e}"));
    }
    report.notes.push(format!(
        "tail fitted on {} survival levels; S range [{:.3e}, {:.3e}] over {} paths",
        pts.len(),
        stats[0],
        stats[n - 1],
        n
    ));
    report.notes.push(format!(
        "median t^α‖u‖_∞ at the earliest rows: {} (must not grow as t ↓)",
        meds.iter().map(|m| format!("{m:.4}")).collect::<Vec<_>>().join(" → ")
    ));
    report.runtime_s = start.elapsed().as_secs_f64();
    Ok(report)
}

// ---------------------------------------------------------------------------
// Operator scaling and the cutoff surrogate
// ---------------------------------------------------------------------------

/// Weight-rate scaling of the two convolution operators. The deterministic
/// convolution of the source `s^{-1/4}` must scale like `β⁻¹` in the
/// `(¼, β)`-weighted norm (slope −1 ± 0.2 over β ∈ {4, 8, 16, 32}); the
/// mean weighted sup of the unit stochastic convolution, weighted by
/// exponent `α − ¼`, must scale like `β^{-α}` (slope −α ± 0.15 for
/// α ∈ {0.3, 0.5}). The statistic is the worst band-normalized deviation.
pub fn operator_scaling(spec: &StochasticSpec) -> Result<CheckReport> {
    let start = Instant::now();
    spec.validate()?;
    let config = spec.additive_config();
    let table = config.build_table()?;
    let betas: [f64; 4] = [4.0, 8.0, 16.0, 32.0];
    let cols = spec.n_x - 1;
    let dt = spec.horizon / spec.n_t as f64;

    // Deterministic part.
    let mut values = Vec::with_capacity(spec.n_t * cols);
    for m in 0..spec.n_t {
        let s = (m + 1) as f64 * dt;
        values.extend(std::iter::repeat(s.powf(-0.25)).take(cols));
    }
    let source = Trajectory::from_values(
        spec.n_x,
        spec.n_t,
        spec.horizon,
        spec.master_seed,
        0,
        0,
        None,
        values,
    )?;
    let convolved = lebesgue_convolve(&source, &table)?;
    let det_pts: Vec<(f64, f64)> = betas
        .iter()
        .map(|&b| {
            Ok((b.ln(), weighted_sup_norm(&convolved, 0.25, b, spec.horizon)?.ln()))
        })
        .collect::<Result<_>>()?;
    let det_slope = least_squares_slope(&det_pts);

    // Stochastic part.
    let paths = spec.paths.min(400);
    let ens = simulate_ensemble(&config, paths)?;
    let noise_slope = |paths: &[Trajectory], alpha: f64| -> Result<f64> {
        let pts: Vec<(f64, f64)> = betas
            .iter()
            .map(|&b| {
                let mut sum = 0.0;
                let mut n = 0usize;
                for p in paths {
                    let s = weighted_sup_norm(p, alpha - 0.25, b, spec.horizon)?;
                    if s.is_finite() {
                        sum += s;
                        n += 1;
                    }
                }
                if n == 0 {
                    return Err(Error::NumericalFault("every scaling path froze".into()));
                }
                Ok((b.ln(), (sum / n as f64).ln()))
            })
            .collect::<Result<_>>()?;
        Ok(least_squares_slope(&pts))
    };

    let mut fits = vec![("deterministic convolution of s^{-1/4}".to_string(), det_slope, -1.0, 0.2)];
    for &alpha in &[0.3, 0.5] {
        let s = noise_slope(ens.paths(), alpha)?;
        fits.push((format!("stochastic convolution at α={alpha}"), s, -alpha, 0.15));
    }
    let statistic = fits
        .iter()
        .map(|(_, slope, target, band)| (slope - target).abs() / band)
        .fold(0.0f64, f64::max);

    let coarse = {
        let mut worst = (det_slope - -1.0f64).abs() / 0.2;
        for &alpha in &[0.3, 0.5] {
            let s = noise_slope(&ens.paths()[..paths / 2], alpha)?;
            worst = worst.max((s - -alpha).abs() / 0.15);
        }
        worst
    };

    let mut report = CheckReport::upper("operator-norm-scaling", statistic, 1.0)
        .with_levels(vec![coarse, statistic]);
    for (what, slope, target, band) in fits {
        report.notes.push(format!("{what}: slope {slope:.4} against {target} ± {band}"));
    }
    report.runtime_s = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Two capped runs of the same path at truncation levels e and e³ with
/// shared noise must agree bitwise below the smaller level's crossing —
/// the cap is inactive there, so any disagreement is a solver fault. The
/// configuration is tuned so the low cap actually engages before the
/// horizon; a run where it never fires cannot certify anything and comes
/// back inconclusive.
pub fn uniqueness_surrogate(spec: &StochasticSpec) -> Result<CheckReport> {
    let start = Instant::now();
    spec.validate()?;
    let config = SolverConfig {
        n_x: spec.n_x,
        n_t: spec.n_t,
        horizon: spec.horizon,
        initial: InitialData::Constant(2.0),
        drift: DriftKind::Plain(Drift::Linear { rate: 8.0 }),
        sigma: Sigma::Constant(1.0),
        master_seed: spec.master_seed,
        kernel_options: KernelOptions::default(),
    };
    let exponent = 0.3;
    let low = patched_simulate(&config, &PatchedSpec { cutoffs: vec![E], exponent }, 0)?;
    let high = patched_simulate(&config, &PatchedSpec { cutoffs: vec![E.powi(3)], exponent }, 0)?;

    let record = low.records[0];
    let mut report = match record.stop_step {
        None => CheckReport::upper("uniqueness-cutoff-agreement", f64::NAN, 1e-12)
            .inconclusive("the low cap never engaged before the horizon; nothing was compared"),
        Some(0) => CheckReport::upper("uniqueness-cutoff-agreement", f64::NAN, 1e-12)
            .inconclusive("the low cap engaged on the first step; nothing was compared"),
        Some(stop) => {
            let cols = spec.n_x - 1;
            let a = low.trajectory.values();
            let b = high.trajectory.values();
            let statistic = a[..stop * cols]
                .iter()
                .zip(&b[..stop * cols])
                .map(|(x, y)| (x - y).abs())
                .fold(0.0f64, f64::max);
            CheckReport::upper("uniqueness-cutoff-agreement", statistic, 1e-12).with_note(format!(
                "levels e and e³ compared on {stop} rows below the crossing at t={:.4}",
                record.stop_time
            ))
        }
    };
    report.runtime_s = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Everything above at one go, in a fixed order.
pub fn run_all_stochastic_checks(spec: &StochasticSpec) -> Result<Vec<CheckReport>> {
    spec.validate()?;
    let table = KernelTable::with_options(spec.n_x, KernelOptions::default())?;
    Ok(vec![
        eigenfunction_decay(&table)?,
        dual_representation(&table, 1000, spec.master_seed)?,
        variance_anchor(spec)?,
        check_chaining(spec)?,
        check_moment_bound(spec)?,
        check_comparison(spec)?,
        check_stability(spec)?,
        check_l2_continuity(spec)?,
        check_decay_statistic(spec)?,
        operator_scaling(spec)?,
        uniqueness_surrogate(spec)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desk(paths: usize, anchor_paths: usize) -> StochasticSpec {
        StochasticSpec { master_seed: 7, paths, anchor_paths, n_x: 64, n_t: 128, horizon: 0.5 }
    }

    #[test]
    fn eigenfunction_decay_reproduces_the_spectrum() {
        let table = KernelTable::new(128).unwrap();
        let report = eigenfunction_decay(&table).unwrap();
        assert!(report.passed, "{}", report.summary_line());
        assert!(report.statistic <= 1e-10);
    }

    #[test]
    fn corrupted_spectrum_breaks_the_decay_anchor() {
        let table = KernelTable::new(128).unwrap().with_spectrum_scale(2.0);
        let report = eigenfunction_decay(&table).unwrap();
        assert!(!report.passed);
        assert!(report.statistic > 1e-3);
    }

    #[test]
    fn kernel_representations_agree_across_the_switch() {
        let table = KernelTable::new(128).unwrap();
        let report = dual_representation(&table, 1000, 0).unwrap();
        assert!(report.passed, "{}", report.summary_line());
        assert!(report.statistic > 0.0 && report.statistic <= 1e-8);
    }

    #[test]
    fn variance_anchor_sits_inside_three_standard_errors() {
        let spec = desk(200, 4000);
        let report = variance_anchor(&spec).unwrap();
        assert!(report.passed, "{}", report.summary_line());
        assert_eq!(report.levels.len(), 2);
    }

    #[test]
    fn variance_anchor_is_bit_reproducible() {
        let spec = desk(200, 500);
        let a = variance_anchor(&spec).unwrap();
        let b = variance_anchor(&spec).unwrap();
        assert_eq!(a.statistic.to_bits(), b.statistic.to_bits());
    }

    #[test]
    fn chaining_bound_holds_with_its_loose_constant() {
        let spec = desk(240, 500);
        let report = check_chaining(&spec).unwrap();
        assert!(report.passed, "{}", report.summary_line());
        // The constant is loose by construction; the ratio should be tiny.
        assert!(report.statistic < 1e-3, "ratio {}", report.statistic);
        assert!(report.notes.iter().any(|n| n.contains("hypothesis")));
    }

    #[test]
    fn moment_envelope_constant_is_finite_and_stable() {
        let spec = desk(400, 500);
        let report = check_moment_bound(&spec).unwrap();
        assert!(report.passed, "{}", report.summary_line());
        assert!(report.statistic.is_finite() && report.statistic > 0.0);
    }

    #[test]
    fn ordered_initial_data_stays_ordered() {
        let spec = desk(60, 500);
        let report = check_comparison(&spec).unwrap();
        assert!(report.passed, "{}", report.summary_line());
    }

    #[test]
    fn perturbation_response_is_linear() {
        let spec = desk(60, 500);
        let report = check_stability(&spec).unwrap();
        assert!(report.passed, "{}", report.summary_line());
    }

    #[test]
    fn l2_distance_shrinks_with_the_square_root_rate() {
        let spec = desk(300, 500);
        let report = check_l2_continuity(&spec).unwrap();
        assert!(report.passed, "{}", report.summary_line());
    }

    #[test]
    fn decay_statistic_has_a_stretched_exponential_tail() {
        let spec = desk(300, 500);
        let report = check_decay_statistic(&spec).unwrap();
        assert!(report.passed, "{}", report.summary_line());
        assert!(report.statistic < 0.0);
    }

    #[test]
    fn convolution_norms_scale_with_the_weight_rate() {
        let spec = desk(200, 500);
        let report = operator_scaling(&spec).unwrap();
        assert!(report.passed, "{}", report.summary_line());
    }

    #[test]
    fn shared_noise_cutoff_runs_agree_bitwise() {
        let spec = desk(60, 500);
        let report = uniqueness_surrogate(&spec).unwrap();
        assert!(report.passed, "{}", report.summary_line());
        assert!(!report.inconclusive, "the low cap must engage for this test to bite");
        assert_eq!(report.statistic, 0.0);
    }
}
