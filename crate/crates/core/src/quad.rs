//! Deterministic quadrature for the verification certificates.
//!
//! Two integrand shapes dominate this crate: weighted time integrals with an
//! integrable power/log singularity at an endpoint (`s^{-α} log₊(1/s)^χ e^{βs}`),
//! and spatial `L¹` distances of kernels (`∫ |G-G'|`), which are smooth except
//! for a few absolute-value kinks. Both get a dedicated entry point:
//!
//! * [`integrate`] — composite Gauss-Legendre panels on cells graded
//!   geometrically toward flagged singular endpoints, refined level by level
//!   (panel counts double) until the relative change drops below tolerance or
//!   the level cap is reached;
//! * [`integrate_abs`] — locates the sign changes of the underlying smooth
//!   function by scan + bisection, then integrates piecewise so the kinks
//!   never meet a panel interior.
//!
//! Every estimate reports whether it converged; callers map non-convergence
//! to an "inconclusive" verdict rather than trusting the value.

/// Which endpoints carry an integrable singularity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Singular {
    None,
    Left,
    Right,
    Both,
}

/// Refinement controls.
#[derive(Debug, Clone, Copy)]
pub struct QuadSpec {
    /// Stop once consecutive levels agree to this relative tolerance.
    pub rel_tol: f64,
    /// Hard cap on refinement levels.
    pub max_levels: u32,
    /// Geometric cells per singular endpoint at the first level (cell k spans
    /// a dyadic fraction `2^{-k-1}..2^{-k}` of the interval). Every refinement
    /// level grades 24 cells deeper, so the sliver left unresolved next to the
    /// singularity shrinks geometrically and the level-to-level change tracks
    /// the true error for any integrable power.
    pub grading_depth: u32,
    /// Gauss panels per cell at level 0; doubles each level.
    pub base_panels: u32,
    /// Floor for the scale that `rel_tol` is measured against. Zero (the
    /// default) makes the test purely relative; callers integrating a family
    /// whose members may vanish (e.g. projections with symmetry zeros) should
    /// set this to the family's natural magnitude so that a zero integral
    /// converges instead of chasing roundoff.
    pub scale_floor: f64,
}

impl Default for QuadSpec {
    fn default() -> Self {
        Self { rel_tol: 1e-4, max_levels: 20, grading_depth: 80, base_panels: 2, scale_floor: 0.0 }
    }
}

impl QuadSpec {
    /// Same rules with doubled starting resolution; the verifier reports
    /// statistics at both this and the base level to certify stability.
    pub fn refined(&self) -> Self {
        Self { base_panels: self.base_panels * 2, ..*self }
    }

    pub fn with_rel_tol(mut self, tol: f64) -> Self {
        self.rel_tol = tol;
        self
    }
}

/// Result of one adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct QuadOutcome {
    pub value: f64,
    pub converged: bool,
    pub levels: u32,
    pub last_rel_change: f64,
}

// 4-point Gauss-Legendre on [-1,1].
const GL_NODES: [f64; 4] = [
    -0.861_136_311_594_052_6,
    -0.339_981_043_584_856_3,
    0.339_981_043_584_856_3,
    0.861_136_311_594_052_6,
];
const GL_WEIGHTS: [f64; 4] = [
    0.347_854_845_137_453_86,
    0.652_145_154_862_546_1,
    0.652_145_154_862_546_1,
    0.347_854_845_137_453_86,
];

fn gauss_cell(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64, panels: u32) -> f64 {
    // Refining below the argument resolution of the endpoints would round
    // Gauss nodes onto the endpoints themselves — and a singular integrand
    // to ±∞. Hold sub-panels at a healthy multiple of an ulp; cells this
    // small are near machine-resolution anyway, so freezing their estimate
    // costs less than an ulp-scale mass.
    let floor_w = 8.0 * f64::EPSILON * a.abs().max(b.abs());
    let panels = if floor_w > 0.0 && ((b - a) / floor_w) < panels as f64 {
        (((b - a) / floor_w).floor() as u32).max(1)
    } else {
        panels
    };
    let h = (b - a) / panels as f64;
    let mut acc = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let mid = lo + 0.5 * h;
        let half = 0.5 * h;
        for (node, w) in GL_NODES.iter().zip(GL_WEIGHTS) {
            acc += w * f(mid + half * node);
        }
    }
    acc * 0.5 * (b - a) / panels as f64
}

/// Cell boundaries used at every level: geometric toward singular endpoints,
/// a handful of uniform cells otherwise.
fn cells(a: f64, b: f64, sing: Singular, depth: u32) -> Vec<(f64, f64)> {
    let len = b - a;
    let graded_up = |lo: f64, span: f64| {
        // (lo, lo+span] split as slivers lo+span·2^{-k-1}..lo+span·2^{-k}.
        let mut out = Vec::with_capacity(depth as usize + 1);
        let mut hi_frac = 2.0_f64.powi(-(depth as i32));
        out.push((lo, lo + span * hi_frac)); // final sliver kept as a cell
        for _ in 0..depth {
            let next = hi_frac * 2.0;
            out.push((lo + span * hi_frac, lo + span * next));
            hi_frac = next;
        }
        out
    };
    let mirror = |cells_up: Vec<(f64, f64)>| {
        cells_up.into_iter().map(|(lo, hi)| (a + b - hi, a + b - lo)).collect::<Vec<_>>()
    };
    match sing {
        Singular::None => {
            let n = 8;
            (0..n)
                .map(|i| (a + len * i as f64 / n as f64, a + len * (i + 1) as f64 / n as f64))
                .collect()
        }
        Singular::Left => graded_up(a, len),
        Singular::Right => mirror(graded_up(a, len)),
        Singular::Both => {
            let mut lo_half = graded_up(a, len / 2.0);
            let hi_half: Vec<(f64, f64)> = graded_up(a, len / 2.0)
                .into_iter()
                .map(|(lo, hi)| (a + b - hi, a + b - lo))
                .collect();
            lo_half.extend(hi_half);
            lo_half
        }
    }
}

/// Integrate `f` over `[a,b]` with the given singularity structure.
///
/// The integrand is never evaluated at a singular endpoint: the innermost
/// sliver cell still uses interior Gauss nodes, and cells too thin for their
/// nodes to stay representably distinct from the endpoint are dropped
/// outright (forfeiting only mass below the endpoint's f64 resolution).
pub fn integrate(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, sing: Singular, spec: &QuadSpec) -> QuadOutcome {
    if !(b > a) {
        return QuadOutcome { value: 0.0, converged: true, levels: 0, last_rel_change: 0.0 };
    }
    let mut prev = f64::NAN;
    let mut value = 0.0;
    let mut change = f64::INFINITY;
    let mut level = 0;
    while level < spec.max_levels {
        let panels = spec.base_panels << level;
        value = cells(a, b, sing, spec.grading_depth + 24 * level)
            .iter()
            // Drop cells narrower than the endpoints' own resolution: their
            // Gauss nodes would be indistinguishable from the (possibly
            // singular) endpoint in f64. Near zero this never triggers —
            // subnormals resolve arbitrarily thin slivers — so only graded
            // cells hugging an endpoint of order one are affected, and the
            // mass forfeited sits below any integrable singularity's
            // contribution over a few ulps.
            .filter(|&&(lo, hi)| hi - lo > 32.0 * f64::EPSILON * lo.abs().max(hi.abs()))
            .map(|&(lo, hi)| gauss_cell(&mut f, lo, hi, panels))
            .sum();
        if prev.is_finite() || prev == 0.0 {
            let scale = value.abs().max(spec.scale_floor).max(1e-300);
            change = (value - prev).abs() / scale;
            if change <= spec.rel_tol {
                return QuadOutcome { value, converged: true, levels: level + 1, last_rel_change: change };
            }
        }
        prev = value;
        level += 1;
    }
    QuadOutcome { value, converged: !value.is_nan() && change <= spec.rel_tol, levels: level, last_rel_change: change }
}

/// Integrate `|f|` over `[a,b]` for piecewise-smooth `f`.
///
/// Sign changes are located on a uniform scan grid and sharpened by
/// bisection; each monotone-sign piece is then integrated as a smooth
/// function. `scan` controls the scan resolution and bounds the number of
/// resolvable sign changes.
pub fn integrate_abs(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, scan: usize, spec: &QuadSpec) -> QuadOutcome {
    let scan = scan.max(8);
    let h = (b - a) / scan as f64;
    let mut breaks = vec![a];
    let mut prev_x = a;
    let mut prev_v = f(a);
    for i in 1..=scan {
        let x = if i == scan { b } else { a + i as f64 * h };
        let v = f(x);
        if (prev_v < 0.0) != (v < 0.0) && prev_v != 0.0 {
            // bisect the bracketing interval down to fp resolution
            let (mut lo, mut hi) = (prev_x, x);
            let mut flo = prev_v;
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                let fm = f(mid);
                if (flo < 0.0) != (fm < 0.0) {
                    hi = mid;
                } else {
                    lo = mid;
                    flo = fm;
                }
            }
            breaks.push(0.5 * (lo + hi));
        }
        prev_x = x;
        prev_v = v;
    }
    breaks.push(b);

    let mut total = 0.0;
    let mut converged = true;
    let mut levels = 0;
    let mut last_change: f64 = 0.0;
    for w in breaks.windows(2) {
        if w[1] <= w[0] {
            continue;
        }
        let out = integrate(|x| f(x).abs(), w[0], w[1], Singular::None, spec);
        total += out.value;
        converged &= out.converged;
        levels = levels.max(out.levels);
        last_change = last_change.max(out.last_rel_change);
    }
    QuadOutcome { value: total, converged, levels, last_rel_change: last_change }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn inverse_square_root_singularity() {
        let spec = QuadSpec::default().with_rel_tol(1e-9);
        let out = integrate(|s| s.powf(-0.5), 0.0, 1.0, Singular::Left, &spec);
        assert!(out.converged);
        assert!((out.value - 2.0).abs() < 1e-8, "got {}", out.value);
    }

    #[test]
    fn strong_singularity_with_log_factor() {
        // Reference by the substitution s = u^4, which removes the
        // singularity: ∫₀¹ s^{-3/4} log(1/s + e) ds = ∫₀¹ 4·log(u^{-4}+e) du.
        let spec = QuadSpec::default().with_rel_tol(1e-9);
        let smooth = integrate(|u: f64| 4.0 * (u.powi(-4) + std::f64::consts::E).ln(), 0.0, 1.0, Singular::Left, &spec);
        let direct = integrate(
            |s: f64| s.powf(-0.75) * (1.0 / s + std::f64::consts::E).ln(),
            0.0,
            1.0,
            Singular::Left,
            &spec,
        );
        assert!(direct.converged && smooth.converged);
        assert!(
            (direct.value - smooth.value).abs() / smooth.value < 1e-7,
            "direct {} vs reference {}",
            direct.value,
            smooth.value
        );
    }

    #[test]
    fn both_endpoints_singular() {
        let spec = QuadSpec::default().with_rel_tol(1e-9);
        let out = integrate(|s: f64| (s * (1.0 - s)).powf(-0.5), 0.0, 1.0, Singular::Both, &spec);
        assert!(out.converged);
        // The left endpoint grades into subnormals, but near s = 1 the
        // argument resolution is one ulp of 1.0, so a band of ~32 ulps is
        // unreachable; its mass under (1-s)^{-1/2} is about 2e-7, which sets
        // the accuracy floor here.
        assert!((out.value - PI).abs() < 1e-6, "got {}", out.value);
    }

    #[test]
    fn smooth_oscillatory() {
        let spec = QuadSpec::default().with_rel_tol(1e-11);
        let k = 7.0;
        let out = integrate(|x: f64| (k * PI * x).sin(), 0.0, 1.0, Singular::None, &spec);
        let exact = (1.0 - (k * PI).cos()) / (k * PI);
        assert!(out.converged);
        assert!((out.value - exact).abs() < 1e-12);
    }

    #[test]
    fn absolute_value_with_kinks() {
        let spec = QuadSpec::default().with_rel_tol(1e-11);
        let out = integrate_abs(|x: f64| (3.0 * PI * x).sin(), 0.0, 1.0, 64, &spec);
        assert!(out.converged);
        assert!((out.value - 2.0 / PI).abs() < 1e-11, "got {}", out.value);
    }

    #[test]
    fn refined_spec_matches_on_smooth_integrands() {
        let spec = QuadSpec::default();
        let base = integrate(|x: f64| x.exp(), 0.0, 1.0, Singular::None, &spec);
        let fine = integrate(|x: f64| x.exp(), 0.0, 1.0, Singular::None, &spec.refined());
        assert!((base.value - fine.value).abs() / fine.value < 1e-10);
    }

    #[test]
    fn empty_interval_is_zero() {
        let out = integrate(|_| 1.0, 1.0, 1.0, Singular::None, &QuadSpec::default());
        assert_eq!(out.value, 0.0);
        assert!(out.converged);
    }
}
