//! Space-time field containers and the weighted norms of the analysis.
//!
//! A [`Trajectory`] is one realization on the uniform grid
//! `{t_1,…,t_{n_t}} × {x_1,…,x_{n_x-1}}` with `t_m = m·dt` and `x_j = j/n_x`;
//! boundary values are identically zero and are not stored. An [`Ensemble`]
//! is a set of trajectories from the same configuration (validated by a
//! shared config digest), indexed by path.
//!
//! The norms implemented here are the discrete versions of
//!
//! * the weighted uniform norm `sup_{t≤T} t^α e^{-βt} |f(t,x)|`
//!   ([`weighted_sup_norm`]),
//! * the weighted moment norm `𝒩_{k,α,β,T}(X) = sup_{t≤T} t^α e^{-βt} ‖X(t,x)‖_k`
//!   ([`empirical_moment_norm`], with `‖·‖_k` estimated over the ensemble),
//! * the parabolic norm `M_T(X) = sup_{t≤T} t^{1/4} ‖X(t,x)‖_2` ([`m_norm`]),
//! * the two-point Hölder quotient
//!   `sup s^α e^{-βs} ‖X(s,x)-X(t,y)‖_k / (|t-s|^τ ∨ |x-y|^μ)`
//!   ([`holder_statistic`]), the constant that feeds the chaining bound.
//!
//! Moment estimates carry a bootstrap standard error (resampling paths with
//! replacement); suprema are taken over the grid only — no continuum
//! extrapolation. All randomness in the estimators (resampling, pair
//! selection) is counter-based off the ensemble's own seed, so repeated
//! evaluation is bit-identical.

use crate::noise::CounterRng;
use crate::{Error, Result};
use rayon::prelude::*;

/// Number of bootstrap resamples behind every reported standard error.
pub const BOOTSTRAP_RESAMPLES: usize = 200;
/// Sup statistics are bootstrapped over this many top-ranked grid candidates.
const BOOTSTRAP_CANDIDATES: usize = 512;
/// Random two-point pairs drawn by [`holder_statistic`] beyond the
/// deterministic temporally adjacent sweep.
pub const HOLDER_RANDOM_PAIRS: usize = 10_000;

/// One simulated path on the solver grid.
#[derive(Debug, Clone)]
pub struct Trajectory {
    n_x: usize,
    n_t: usize,
    horizon: f64,
    master_seed: u64,
    path: u64,
    config_digest: u64,
    /// First step index (0-based row) at which the state became non-finite;
    /// that row and all later ones hold NaN.
    blow_up_step: Option<usize>,
    /// Row-major `(n_t, n_x - 1)`, row `m` holding the field at `t_{m+1}`.
    values: Vec<f64>,
}

impl Trajectory {
    /// Assemble a trajectory from raw rows. `values.len()` must equal
    /// `n_t · (n_x - 1)`.
    #[allow(clippy::too_many_arguments)]
    pub fn from_values(
        n_x: usize,
        n_t: usize,
        horizon: f64,
        master_seed: u64,
        path: u64,
        config_digest: u64,
        blow_up_step: Option<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if n_x < 2 || n_t == 0 {
            return Err(Error::Config(format!("degenerate grid {n_t}×{n_x}")));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Config(format!("horizon must be positive, got {horizon}")));
        }
        let expected = n_t * (n_x - 1);
        if values.len() != expected {
            return Err(Error::LengthMismatch { expected, got: values.len() });
        }
        Ok(Self { n_x, n_t, horizon, master_seed, path, config_digest, blow_up_step, values })
    }

    pub fn grid_points(&self) -> usize {
        self.n_x
    }

    pub fn steps(&self) -> usize {
        self.n_t
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn columns(&self) -> usize {
        self.n_x - 1
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_t as f64
    }

    pub fn dx(&self) -> f64 {
        1.0 / self.n_x as f64
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn path(&self) -> u64 {
        self.path
    }

    pub fn config_digest(&self) -> u64 {
        self.config_digest
    }

    pub fn blow_up_step(&self) -> Option<usize> {
        self.blow_up_step
    }

    /// Time of row `m`: `t_{m+1} = (m+1)·dt`.
    pub fn time(&self, row: usize) -> f64 {
        (row + 1) as f64 * self.dt()
    }

    /// Interior node `x_j`, `j = 1..n_x-1` ↔ column `j-1`.
    pub fn node(&self, col: usize) -> f64 {
        (col + 1) as f64 / self.n_x as f64
    }

    pub fn row(&self, m: usize) -> &[f64] {
        let c = self.columns();
        &self.values[m * c..(m + 1) * c]
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.columns() + col]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Whether the path blew up at or before time `t`.
    pub fn frozen_by(&self, t: f64) -> bool {
        match self.blow_up_step {
            Some(step) => self.time(step) <= t + 1e-12 * self.dt(),
            None => false,
        }
    }

    pub fn max_abs_row(&self, m: usize) -> f64 {
        self.row(m).iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }
}

/// A same-configuration set of trajectories.
#[derive(Debug, Clone)]
pub struct Ensemble {
    paths: Vec<Trajectory>,
}

impl Ensemble {
    pub fn new(paths: Vec<Trajectory>) -> Result<Self> {
        let first = paths.first().ok_or_else(|| Error::Config("empty ensemble".into()))?;
        let (n_x, n_t, digest) = (first.n_x, first.n_t, first.config_digest);
        for p in &paths {
            if p.n_x != n_x || p.n_t != n_t {
                return Err(Error::Config(format!(
                    "mixed grids in ensemble: {}×{} vs {}×{}",
                    p.n_t, p.n_x, n_t, n_x
                )));
            }
            if p.config_digest != digest {
                return Err(Error::Config("trajectories from different configurations".into()));
            }
        }
        Ok(Self { paths })
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn paths(&self) -> &[Trajectory] {
        &self.paths
    }

    pub fn path(&self, i: usize) -> &Trajectory {
        &self.paths[i]
    }

    /// Fraction of paths that blew up at or before `t`.
    pub fn frozen_fraction(&self, t: f64) -> f64 {
        self.paths.iter().filter(|p| p.frozen_by(t)).count() as f64 / self.paths.len() as f64
    }

    fn usable_until(&self, t: f64) -> Vec<&Trajectory> {
        self.paths.iter().filter(|p| !p.frozen_by(t)).collect()
    }
}

/// Point estimate with sampling uncertainty and blow-up accounting.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct NormEstimate {
    pub value: f64,
    /// Bootstrap standard error over paths (0 for deterministic inputs).
    pub stderr: f64,
    pub paths_used: usize,
    pub paths_frozen: usize,
}

/// Two-point modulus parameters for the Hölder statistic and chaining check.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct ModulusSpec {
    /// Moment order.
    pub k: f64,
    /// Temporal Hölder exponent τ ∈ (0,1).
    pub tau: f64,
    /// Spatial Hölder exponent μ ∈ (0,1).
    pub mu: f64,
    /// Weight exponent α > 0 of the reference norm.
    pub alpha: f64,
    /// Target exponent ᾱ > α of the dominated norm.
    pub alpha_bar: f64,
    /// Weight rate β ≥ 1.
    pub beta: f64,
}

impl ModulusSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.k >= 1.0) {
            return Err(Error::Config(format!("moment order must be ≥ 1, got {}", self.k)));
        }
        for (name, v) in [("tau", self.tau), ("mu", self.mu)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0,1), got {v}")));
            }
        }
        if !(self.alpha > 0.0) {
            return Err(Error::Config(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.alpha_bar > self.alpha) {
            return Err(Error::Config(format!(
                "alpha_bar must exceed alpha, got {} ≤ {}",
                self.alpha_bar, self.alpha
            )));
        }
        if !(self.beta >= 1.0) {
            return Err(Error::Config(format!("beta must be ≥ 1, got {}", self.beta)));
        }
        Ok(())
    }

    /// Minimal moment order under which the chaining bound's hypothesis
    /// holds: `k ≥ 4(1/τ + 1/μ)`.
    pub fn chaining_moment_floor(&self) -> f64 {
        4.0 * (1.0 / self.tau + 1.0 / self.mu)
    }

    pub fn satisfies_moment_floor(&self) -> bool {
        self.k >= self.chaining_moment_floor()
    }
}

/// The constant `L` of the chaining bound:
/// `max( 2^ᾱ/(2^{ᾱ-α}-1), Σ_{n≥0} (n+1)^{ᾱ+α} e^{-n(β̄-β)/β} )`.
/// With `β̄ = 2β` the exponential is `e^{-n}` and `L` depends only on
/// `(α, ᾱ)`.
pub fn chaining_constant(alpha: f64, alpha_bar: f64, beta: f64, beta_bar: f64) -> Result<f64> {
    if !(alpha_bar > alpha && alpha > 0.0) {
        return Err(Error::Config(format!("need ᾱ > α > 0, got α={alpha}, ᾱ={alpha_bar}")));
    }
    if !(beta_bar > beta && beta > 0.0) {
        return Err(Error::Config(format!("need β̄ > β > 0, got β={beta}, β̄={beta_bar}")));
    }
    let dyadic = 2.0f64.powf(alpha_bar) / (2.0f64.powf(alpha_bar - alpha) - 1.0);
    let rate = (beta_bar - beta) / beta;
    let mut series = 0.0;
    for n in 0..100_000u32 {
        let term = ((n + 1) as f64).powf(alpha_bar + alpha) * (-(n as f64) * rate).exp();
        series += term;
        if n > 4 && term < 1e-16 * series {
            break;
        }
    }
    Ok(dyadic.max(series))
}

fn validate_weight(alpha: f64, beta: f64) -> Result<()> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::Config(format!("weight exponent alpha must be ≥ 0, got {alpha}")));
    }
    // β = 0 admits the unweighted (M_T-style) variants.
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::Config(format!("weight rate beta must be ≥ 0, got {beta}")));
    }
    Ok(())
}

fn check_time_range(traj: &Trajectory, t_max: f64) -> Result<()> {
    let dt = traj.dt();
    if t_max < dt * (1.0 - 1e-12) {
        return Err(Error::Domain(format!(
            "empty time range: horizon {t_max} lies below the first grid time {dt}"
        )));
    }
    if t_max > traj.horizon() * (1.0 + 1e-9) {
        return Err(Error::Domain(format!(
            "requested horizon {t_max} exceeds the trajectory horizon {}",
            traj.horizon()
        )));
    }
    Ok(())
}

/// `sup_{t_m ≤ T} t_m^α e^{-β t_m} |f(t_m, x_j)|` over the grid.
///
/// Returns NaN if the trajectory froze within `[0, T]` — a blown-up path has
/// no meaningful norm and callers must filter first. Errors when the time
/// range `[dt, T]` is empty or `T` exceeds the trajectory horizon.
pub fn weighted_sup_norm(traj: &Trajectory, alpha: f64, beta: f64, t_max: f64) -> Result<f64> {
    validate_weight(alpha, beta)?;
    check_time_range(traj, t_max)?;
    if traj.frozen_by(t_max) {
        return Ok(f64::NAN);
    }
    let mut sup = 0.0f64;
    for m in 0..traj.steps() {
        let t = traj.time(m);
        if t > t_max + 1e-12 * traj.dt() {
            break;
        }
        let w = t.powf(alpha) * (-beta * t).exp();
        sup = sup.max(w * traj.max_abs_row(m));
    }
    Ok(sup)
}

/// Reduce a `rows × cols` field of magnitudes to
/// `sup_m t_m^α e^{-β t_m} · field(m, j)`, returning the sup and its flat
/// index.
pub(crate) fn weighted_sup_of_field(
    field: &[f64],
    cols: usize,
    dt: f64,
    alpha: f64,
    beta: f64,
) -> (f64, usize) {
    let mut best = 0.0f64;
    let mut arg = 0usize;
    for (idx, v) in field.iter().enumerate() {
        let t = ((idx / cols) + 1) as f64 * dt;
        let w = t.powf(alpha) * (-beta * t).exp() * v;
        if w > best {
            best = w;
            arg = idx;
        }
    }
    (best, arg)
}

fn rows_within(traj: &Trajectory, t_max: f64) -> usize {
    let dt = traj.dt();
    let m = (t_max / dt + 1e-9).floor() as usize;
    m.min(traj.steps())
}

/// Empirical `𝒩_{k,α,β,T}`: pointwise k-th moments over paths, then the
/// weighted grid supremum, with a path-bootstrap standard error.
///
/// Paths frozen within `[0,T]` are excluded and counted in the estimate;
/// a non-finite moment supremum is a numerical fault.
pub fn empirical_moment_norm(
    ens: &Ensemble,
    k: f64,
    alpha: f64,
    beta: f64,
    t_max: f64,
) -> Result<NormEstimate> {
    if !(k >= 1.0) {
        return Err(Error::Config(format!("moment order must be ≥ 1, got {k}")));
    }
    if ens.len() < 2 {
        return Err(Error::Config(format!(
            "moment estimation needs at least 2 paths, got {}",
            ens.len()
        )));
    }
    validate_weight(alpha, beta)?;
    check_time_range(ens.path(0), t_max)?;
    let used = ens.usable_until(t_max);
    if used.is_empty() {
        return Err(Error::Config("no usable paths below the requested horizon".into()));
    }
    let proto = used[0];
    let rows = rows_within(proto, t_max);
    let cols = proto.columns();
    let dt = proto.dt();
    let inv_p = 1.0 / used.len() as f64;

    // Pointwise Σ_p |X_p|^k, accumulated in path order within each row so the
    // reduction is deterministic under any rayon split.
    let mut pow_sum = vec![0.0f64; rows * cols];
    pow_sum.par_chunks_mut(cols).enumerate().for_each(|(m, out)| {
        for p in &used {
            let row = p.row(m);
            for (o, v) in out.iter_mut().zip(row) {
                *o += v.abs().powf(k);
            }
        }
    });
    let moment: Vec<f64> = pow_sum.iter().map(|s| (s * inv_p).powf(1.0 / k)).collect();
    let (value, _) = weighted_sup_of_field(&moment, cols, dt, alpha, beta);
    if !value.is_finite() {
        return Err(Error::NumericalFault(format!(
            "k-th moment supremum is not finite (k={k}, {} paths)",
            used.len()
        )));
    }

    let stderr = bootstrap_sup_stderr(&used, &moment, cols, dt, alpha, beta, k);
    Ok(NormEstimate {
        value,
        stderr,
        paths_used: used.len(),
        paths_frozen: ens.len() - used.len(),
    })
}

/// Bootstrap SE of a weighted moment supremum: resample paths with
/// replacement and re-take the sup over the strongest grid candidates.
fn bootstrap_sup_stderr(
    used: &[&Trajectory],
    moment: &[f64],
    cols: usize,
    dt: f64,
    alpha: f64,
    beta: f64,
    k: f64,
) -> f64 {
    if used.len() < 2 {
        return 0.0;
    }
    // Rank grid points by their weighted moment; the resampled sup is
    // evaluated over the top slice only (the remainder cannot plausibly
    // overtake it under resampling noise).
    let mut ranked: Vec<(f64, usize)> = moment
        .iter()
        .enumerate()
        .map(|(idx, v)| {
            let t = ((idx / cols) + 1) as f64 * dt;
            (t.powf(alpha) * (-beta * t).exp() * v, idx)
        })
        .collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0));
    let candidates: Vec<usize> =
        ranked.iter().take(BOOTSTRAP_CANDIDATES.min(ranked.len())).map(|&(_, i)| i).collect();

    let p_count = used.len();
    let mut table = vec![0.0f64; p_count * candidates.len()];
    for (pi, p) in used.iter().enumerate() {
        for (ci, &idx) in candidates.iter().enumerate() {
            let (m, j) = (idx / cols, idx % cols);
            table[pi * candidates.len() + ci] = p.value(m, j).abs().powf(k);
        }
    }
    let weights: Vec<f64> = candidates
        .iter()
        .map(|&idx| {
            let t = ((idx / cols) + 1) as f64 * dt;
            t.powf(alpha) * (-beta * t).exp()
        })
        .collect();

    let seed = used[0].master_seed ^ used[0].config_digest;
    let mut rng = CounterRng::new(seed, "bootstrap-sup");
    resampled_sup_sd(&mut rng, &table, &weights, p_count, k)
}

/// Shared bootstrap core: draw paths with replacement, recompute the
/// weighted k-norm sup over the candidate columns, return the SD of the
/// resampled sups.
fn resampled_sup_sd(
    rng: &mut CounterRng,
    table: &[f64],
    weights: &[f64],
    p_count: usize,
    k: f64,
) -> f64 {
    let cand = weights.len();
    let inv_p = 1.0 / p_count as f64;
    let mut sups = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    let mut acc = vec![0.0f64; cand];
    for _ in 0..BOOTSTRAP_RESAMPLES {
        acc.iter_mut().for_each(|a| *a = 0.0);
        for _ in 0..p_count {
            let pick = rng.next_index(p_count);
            let row = &table[pick * cand..(pick + 1) * cand];
            for (a, v) in acc.iter_mut().zip(row) {
                *a += v;
            }
        }
        let sup = acc
            .iter()
            .zip(weights)
            .map(|(a, w)| (a * inv_p).powf(1.0 / k) * w)
            .fold(0.0f64, f64::max);
        sups.push(sup);
    }
    let mean = sups.iter().sum::<f64>() / sups.len() as f64;
    let var = sups.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (sups.len() - 1) as f64;
    var.sqrt()
}

/// Parabolic second-moment norm `M_T(X) = sup_{t≤T,x} t^{1/4} ‖X(t,x)‖_2`
/// (no exponential weight).
pub fn m_norm(ens: &Ensemble, t_max: f64) -> Result<NormEstimate> {
    empirical_moment_norm(ens, 2.0, 0.25, 0.0, t_max)
}

/// Empirical two-point Hölder statistic
///
/// ```text
///   sup  s^α e^{-βs} ‖X(s,x) - X(t,y)‖_k / (|t-s|^τ ∨ |x-y|^μ),
/// ```
///
/// the sup running over all temporally adjacent grid pairs plus
/// [`HOLDER_RANDOM_PAIRS`] seeded random pairs with dyadic index gaps.
/// `s` is the earlier of the two times.
pub fn holder_statistic(ens: &Ensemble, spec: &ModulusSpec, t_max: f64) -> Result<NormEstimate> {
    spec.validate()?;
    check_time_range(ens.path(0), t_max)?;
    let used = ens.usable_until(t_max);
    if used.is_empty() {
        return Err(Error::Config("no usable paths below the requested horizon".into()));
    }
    let proto = used[0];
    let rows = rows_within(proto, t_max);
    if rows < 2 {
        return Err(Error::Config("need at least two grid times for a two-point statistic".into()));
    }
    let cols = proto.columns();
    let dt = proto.dt();
    let dx = proto.dx();

    // Pair list: (row_a, col_a, row_b, col_b) with row_a ≤ row_b.
    let mut pairs: Vec<(u32, u32, u32, u32)> = Vec::new();
    for m in 0..rows - 1 {
        for j in 0..cols {
            pairs.push((m as u32, j as u32, (m + 1) as u32, j as u32));
        }
    }
    let seed = proto.master_seed ^ proto.config_digest;
    let mut rng = CounterRng::new(seed, "holder-pairs");
    let max_row_gap_pow = (usize::BITS - 1 - (rows - 1).leading_zeros()) as usize;
    let max_col_gap_pow = (usize::BITS - 1 - (cols.max(2) - 1).leading_zeros()) as usize;
    let mut drawn = 0usize;
    while drawn < HOLDER_RANDOM_PAIRS {
        let dm =
            if rng.next_unit() < 0.5 { 0 } else { 1usize << rng.next_index(max_row_gap_pow + 1) };
        let dj =
            if rng.next_unit() < 0.5 { 0 } else { 1usize << rng.next_index(max_col_gap_pow + 1) };
        if (dm == 0 && dj == 0) || dm >= rows || dj >= cols {
            continue;
        }
        let m = rng.next_index(rows - dm);
        let j = rng.next_index(cols - dj);
        pairs.push((m as u32, j as u32, (m + dm) as u32, (j + dj) as u32));
        drawn += 1;
    }

    let k = spec.k;
    let inv_p = 1.0 / used.len() as f64;
    let pair_quotient_weight = |ma: usize, ja: usize, mb: usize, jb: usize| -> f64 {
        let s = (ma + 1) as f64 * dt;
        let gap_t = ((mb - ma) as f64 * dt).powf(spec.tau);
        let gap_x = ((jb - ja) as f64 * dx).powf(spec.mu);
        s.powf(spec.alpha) * (-spec.beta * s).exp() / gap_t.max(gap_x)
    };
    let quotients: Vec<f64> = pairs
        .par_iter()
        .map(|&(ma, ja, mb, jb)| {
            let (ma, ja, mb, jb) = (ma as usize, ja as usize, mb as usize, jb as usize);
            let mut pow_sum = 0.0f64;
            for p in &used {
                let d = p.value(ma, ja) - p.value(mb, jb);
                pow_sum += d.abs().powf(k);
            }
            (pow_sum * inv_p).powf(1.0 / k) * pair_quotient_weight(ma, ja, mb, jb)
        })
        .collect();

    let value = quotients.iter().fold(0.0f64, |a, &q| a.max(q));
    if !value.is_finite() {
        return Err(Error::NumericalFault("two-point moment quotient is not finite".into()));
    }

    // Bootstrap over paths at the strongest pairs.
    let mut ranked: Vec<(f64, usize)> = quotients.iter().copied().zip(0..).collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0));
    let cand: Vec<usize> = ranked.iter().take(256.min(ranked.len())).map(|&(_, i)| i).collect();
    let mut table = vec![0.0f64; used.len() * cand.len()];
    for (pi, p) in used.iter().enumerate() {
        for (ci, &pair_idx) in cand.iter().enumerate() {
            let (ma, ja, mb, jb) = pairs[pair_idx];
            let d = p.value(ma as usize, ja as usize) - p.value(mb as usize, jb as usize);
            table[pi * cand.len() + ci] = d.abs().powf(k);
        }
    }
    let pair_weight: Vec<f64> = cand
        .iter()
        .map(|&pair_idx| {
            let (ma, ja, mb, jb) = pairs[pair_idx];
            pair_quotient_weight(ma as usize, ja as usize, mb as usize, jb as usize)
        })
        .collect();
    let mut rng = CounterRng::new(seed, "holder-bootstrap");
    let stderr = resampled_sup_sd(&mut rng, &table, &pair_weight, used.len(), k);

    Ok(NormEstimate {
        value,
        stderr,
        paths_used: used.len(),
        paths_frozen: ens.len() - used.len(),
    })
}
