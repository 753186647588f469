//! Closed-form targets for the stochastic checks.
//!
//! In the additive case (`b ≡ 0`, `σ ≡ 1`, `u₀ ≡ 0`) the solution is the
//! Gaussian field `u(t,x) = ∫₀ᵗ∫₀¹ G_{t-s}(x,y) W(dy,ds)` with
//!
//! ```text
//!     Var u(t,x) = ∫₀ᵗ ∫₀¹ G_s(x,y)² dy ds = ∫₀ᵗ G_{2s}(x,x) ds,
//! ```
//!
//! the second equality by the semigroup property. This module computes that
//! variance by adaptive quadrature of the kernel evaluator — a deliberately
//! independent route from the solver's spectral stepping, so agreement
//! between the two is evidence for both.

use crate::kernel::KernelTable;
use crate::quad::{integrate, QuadSpec, Singular};
use crate::{Error, Result};

/// `Var u(t,x)` of the additive-noise solution, by time quadrature of the
/// on-diagonal kernel. The integrand has an inverse-square-root singularity
/// at `s = 0` (`G_{2s}(x,x) ≈ 1/√(4πs)` away from the boundary), which the
/// graded rule absorbs.
pub fn variance_oracle_additive(table: &KernelTable, t: f64, x: f64) -> Result<f64> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("variance time must be positive, got {t}")));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("position {x} outside [0,1]")));
    }
    // Validate once so the closure below cannot hit a domain error.
    table.eval_kernel(2.0 * t, x, x)?;
    let spec = QuadSpec {
        rel_tol: 1e-10,
        // The stationary value is x(1-x); anchor the relative test to its
        // scale so boundary points (variance → 0) terminate.
        scale_floor: 0.25,
        ..QuadSpec::default()
    };
    let out = integrate(
        |s| {
            table
                .eval_kernel(2.0 * s, x, x)
                .expect("kernel arguments validated above")
        },
        0.0,
        t,
        Singular::Left,
        &spec,
    );
    if !out.value.is_finite() {
        return Err(Error::NumericalFault(format!(
            "variance quadrature diverged at t={t}, x={x}"
        )));
    }
    Ok(out.value)
}

/// The same variance through the eigenfunction series,
/// `x(1-x) - Σ_n sin²(nπx) e^{-2λ_n t} / λ_n`, using the closed stationary
/// sum. Converges geometrically for any `t > 0`; used to cross-examine the
/// quadrature route.
pub fn variance_series_additive(t: f64, x: f64) -> Result<f64> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("variance time must be positive, got {t}")));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("position {x} outside [0,1]")));
    }
    let mut transient = 0.0;
    for n in 1..=100_000 {
        let lam = crate::kernel::eigenvalue(n);
        let term = (n as f64 * std::f64::consts::PI * x).sin().powi(2) * (-2.0 * lam * t).exp()
            / lam;
        transient += term;
        // Terms decay like e^{-n²π²t}; once the envelope 1/λ_n e^{-2λ_n t}
        // is far below target precision the remaining tail is smaller still.
        if (-2.0 * lam * t).exp() / lam < 1e-18 {
            break;
        }
    }
    Ok(x * (1.0 - x) - transient)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vanishes_on_the_boundary() {
        let table = KernelTable::new(64).unwrap();
        let v0 = variance_oracle_additive(&table, 0.5, 0.0).unwrap();
        let v1 = variance_oracle_additive(&table, 0.5, 1.0).unwrap();
        assert!(v0.abs() < 1e-12, "left-boundary variance {v0}");
        assert!(v1.abs() < 1e-12, "right-boundary variance {v1}");
    }

    #[test]
    fn saturates_at_the_green_function_diagonal() {
        // The stationary variance is x(1-x); by t = 5 the slowest mode has
        // decayed by e^{-π²·5} ≈ 1e-22, so only quadrature error remains.
        let table = KernelTable::new(64).unwrap();
        let v = variance_oracle_additive(&table, 5.0, 0.5).unwrap();
        assert!((v - 0.25).abs() < 2e-9, "midpoint stationary variance {v}");
        let v = variance_oracle_additive(&table, 5.0, 0.3).unwrap();
        assert!((v - 0.21).abs() < 2e-9, "x=0.3 stationary variance {v}");
    }

    #[test]
    fn short_time_midpoint_is_boundary_free() {
        // Before the heat wave reaches the walls the midpoint behaves like
        // the whole line: ∫₀ᵗ ds/√(4πs) = √(t/π). Image corrections at
        // t = 0.01 are of order e^{-25}.
        let table = KernelTable::new(64).unwrap();
        let v = variance_oracle_additive(&table, 0.01, 0.5).unwrap();
        let free = (0.01f64 / std::f64::consts::PI).sqrt();
        assert!((v - free).abs() < 1e-9, "short-time variance {v} vs free-space {free}");
    }

    #[test]
    fn quadrature_and_series_routes_agree() {
        let table = KernelTable::new(64).unwrap();
        for &(t, x) in &[(0.1, 0.3), (0.05, 0.7), (1.0, 0.5), (0.01, 0.25)] {
            let quad = variance_oracle_additive(&table, t, x).unwrap();
            let series = variance_series_additive(t, x).unwrap();
            assert!(
                (quad - series).abs() < 1e-8,
                "routes disagree at (t,x)=({t},{x}): {quad} vs {series}"
            );
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let table = KernelTable::new(16).unwrap();
        assert!(variance_oracle_additive(&table, 0.0, 0.5).is_err());
        assert!(variance_oracle_additive(&table, -1.0, 0.5).is_err());
        assert!(variance_oracle_additive(&table, 0.5, 1.5).is_err());
        assert!(variance_series_additive(0.0, 0.5).is_err());
    }
}
