//! Drift and dispersion coefficients, their truncations, and growth envelopes.
//!
//! The laboratory's drift of record is the `L log L` family
//!
//! ```text
//!     b(z) = θ₁ + θ₂ |z| log₊(|z|),        log₊(a) = log(a + e),
//! ```
//!
//! which grows just slowly enough that solutions never explode, and fast
//! enough that classical Lipschitz theory does not apply. Well-posedness is
//! reached through a time-dependent truncation `b_N` that caps the argument
//! at `±N/t^α`: the truncated drift is globally Lipschitz at each positive
//! time with a constant that blows up only logarithmically as `t ↓ 0`, which
//! is what [`Envelope`] records.
//!
//! The dispersion coefficient `σ` is always bounded and Lipschitz here;
//! [`Sigma`] carries those two constants alongside the function itself.

use crate::{log_plus, Error, Result};
use std::fmt;
use std::sync::Arc;

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Drift nonlinearity `b(z)`.
#[derive(Clone)]
pub enum Drift {
    /// `b ≡ 0`.
    Zero,
    /// `b(z) = rate · z`.
    Linear { rate: f64 },
    /// `b(z) = θ₁ + θ₂ |z| log₊(|z|)`.
    LLogL { theta1: f64, theta2: f64 },
    /// Arbitrary user closure; no growth envelope is derivable for it.
    Custom { name: String, f: ScalarFn },
}

impl fmt::Debug for Drift {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Drift::Zero => write!(f, "Zero"),
            Drift::Linear { rate } => write!(f, "Linear {{ rate: {rate} }}"),
            Drift::LLogL { theta1, theta2 } => {
                write!(f, "LLogL {{ theta1: {theta1}, theta2: {theta2} }}")
            }
            Drift::Custom { name, .. } => write!(f, "Custom {{ name: {name:?} }}"),
        }
    }
}

impl Drift {
    pub fn eval(&self, z: f64) -> f64 {
        match self {
            Drift::Zero => 0.0,
            Drift::Linear { rate } => rate * z,
            Drift::LLogL { theta1, theta2 } => theta1 + theta2 * z.abs() * log_plus(z.abs()),
            Drift::Custom { f, .. } => f(z),
        }
    }
}

/// Time-dependently truncated drift `b_N(t,z) = b(clamp(z, ±N/t^α))`.
///
/// At `t = 0` the cap is infinite, so `b_N(0,·) = b(·)`. The cap parameters
/// are validated once at construction: `N ≥ e` and `α ∈ (1/4, 1)`.
#[derive(Debug, Clone)]
pub struct TruncatedDrift {
    base: Drift,
    cutoff: f64,
    exponent: f64,
}

impl TruncatedDrift {
    pub fn new(base: Drift, cutoff: f64, exponent: f64) -> Result<Self> {
        if !(cutoff >= std::f64::consts::E) {
            return Err(Error::Config(format!("truncation level must be ≥ e, got {cutoff}")));
        }
        if !(exponent > 0.25 && exponent < 1.0) {
            return Err(Error::Config(format!("truncation exponent must lie in (1/4, 1), got {exponent}")));
        }
        Ok(Self { base, cutoff, exponent })
    }

    pub fn base(&self) -> &Drift {
        &self.base
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    /// The cap `N/t^α` (`+∞` at `t ≤ 0`).
    pub fn threshold(&self, t: f64) -> f64 {
        if t <= 0.0 {
            f64::INFINITY
        } else {
            self.cutoff / t.powf(self.exponent)
        }
    }

    pub fn eval(&self, t: f64, z: f64) -> f64 {
        let cap = self.threshold(t);
        self.base.eval(z.clamp(-cap, cap))
    }
}

/// Growth envelope of a (truncated) drift:
///
/// ```text
///   |b_N(t,z)| ≤ m_b + |z| (k_b + l_b log₊(1/t)),
///   Lip b_N(t,·) ≤ k_b + l_b log₊(1/t),
/// ```
///
/// with field names matching the usual constants `M_b`, `K_b`, `L_b`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Envelope {
    pub m_b: f64,
    pub k_b: f64,
    pub l_b: f64,
}

impl Envelope {
    /// Weight rate used by the contraction argument: `β = 4·C·K_b`.
    pub fn beta(&self, c: f64) -> f64 {
        4.0 * c * self.k_b
    }

    /// Signed margin of the smallness condition
    /// `K_b > L_b·log(8·K_b) + M_σ² + M_b⁴`; positive means satisfied.
    pub fn condition_margin(&self, sigma_bound: f64) -> f64 {
        self.k_b - self.l_b * (8.0 * self.k_b).ln() - sigma_bound.powi(2) - self.m_b.powi(4)
    }
}

/// Envelope of a truncated `L log L` drift:
/// `M_b = |b(0)| = θ₁`, `K_b = 2(θ₂+1)·log N`, `L_b = 2`.
///
/// Other drift families have no canonical envelope here and return
/// [`Error::Unsupported`]; callers may still supply their own constants.
pub fn compute_envelope(drift: &TruncatedDrift) -> Result<Envelope> {
    match drift.base {
        Drift::LLogL { theta1, theta2 } => Ok(Envelope {
            m_b: theta1.abs(),
            k_b: 2.0 * (theta2 + 1.0) * drift.cutoff.ln(),
            l_b: 2.0,
        }),
        ref other => Err(Error::Unsupported(format!(
            "growth envelope is only defined for the L·log L family, not {other:?}"
        ))),
    }
}

/// Dispersion coefficient `σ(z)`, always bounded and Lipschitz.
#[derive(Clone)]
pub enum Sigma {
    Constant(f64),
    Custom { name: String, f: ScalarFn, bound: f64, lipschitz: f64 },
}

impl fmt::Debug for Sigma {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sigma::Constant(c) => write!(f, "Constant({c})"),
            Sigma::Custom { name, bound, lipschitz, .. } => {
                write!(f, "Custom {{ name: {name:?}, bound: {bound}, lipschitz: {lipschitz} }}")
            }
        }
    }
}

impl Sigma {
    pub fn eval(&self, z: f64) -> f64 {
        match self {
            Sigma::Constant(c) => *c,
            Sigma::Custom { f, .. } => f(z),
        }
    }

    /// Uniform bound `M_σ`.
    pub fn bound(&self) -> f64 {
        match self {
            Sigma::Constant(c) => c.abs(),
            Sigma::Custom { bound, .. } => *bound,
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match self {
            Sigma::Constant(_) => 0.0,
            Sigma::Custom { lipschitz, .. } => *lipschitz,
        }
    }
}

/// Outcome of the explosion diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum OsgoodClass {
    /// `∫^∞ dz/b(z)` keeps growing: drift growth is subcritical, consistent
    /// with no finite-time explosion.
    Diverging,
    /// The integral saturates: superlinear growth strong enough to explode.
    Converging,
    /// `b` is not strictly positive on the probe range.
    Undefined,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct OsgoodReport {
    /// Dyadic upper limits `Z`.
    pub levels: Vec<f64>,
    /// `∫₁^Z dz/b(z)` for each level.
    pub integrals: Vec<f64>,
    pub class: OsgoodClass,
}

/// Numerically probe the explosion criterion `∫₁^∞ dz/b(z) = ∞` by computing
/// the integral up to dyadic limits and classifying the tail increments:
/// summable increments (ratio bounded away from 1) indicate convergence.
pub fn osgood_diagnostic(drift: &Drift, z_max: f64) -> Result<OsgoodReport> {
    if !(z_max > 2.0) {
        return Err(Error::Config(format!("diagnostic range must exceed 2, got {z_max}")));
    }
    let doublings = z_max.log2().floor() as usize;
    if doublings < 6 {
        return Err(Error::Config("diagnostic range too short to classify a trend".into()));
    }
    let spec = crate::quad::QuadSpec::default().with_rel_tol(1e-8);
    let mut levels = Vec::with_capacity(doublings);
    let mut integrals = Vec::with_capacity(doublings);
    let mut total = 0.0;
    let mut lo = 1.0_f64;
    for k in 1..=doublings {
        let hi = 2.0_f64.powi(k as i32);
        // Substitute z = e^w to keep the panel count flat across decades.
        let piece = crate::quad::integrate(
            |w: f64| {
                let z = w.exp();
                z / drift.eval(z)
            },
            lo.ln(),
            hi.ln(),
            crate::quad::Singular::None,
            &spec,
        );
        if !piece.value.is_finite() {
            return Err(Error::NumericalFault("non-finite Osgood increment".into()));
        }
        total += piece.value;
        levels.push(hi);
        integrals.push(total);
        lo = hi;
    }
    // Probe positivity on a coarse grid before trusting the classification.
    let positive = (0..200).all(|i| {
        let z = 1.0 + (z_max - 1.0) * i as f64 / 199.0;
        drift.eval(z) > 0.0
    });
    let class = if !positive {
        OsgoodClass::Undefined
    } else {
        // Tail increment ratio → 2^{1-p} for b ~ z^p: below ~0.9 means
        // summable increments (convergent integral), else divergent.
        let k = integrals.len();
        let d1 = integrals[k - 2] - integrals[k - 3];
        let d2 = integrals[k - 1] - integrals[k - 2];
        if d1 <= 0.0 || d2 / d1 < 0.9 {
            OsgoodClass::Converging
        } else {
            OsgoodClass::Diverging
        }
    };
    Ok(OsgoodReport { levels, integrals, class })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    #[test]
    fn llogl_spot_values() {
        let b = Drift::LLogL { theta1: 0.0, theta2: 1.0 };
        assert!((b.eval(1.0) - (1.0 + E).ln()).abs() < 1e-15); // ≈ 1.3133
        assert_eq!(b.eval(0.0), 0.0);
        // Even in z through |z|.
        assert_eq!(b.eval(-2.5), b.eval(2.5));
    }

    #[test]
    fn truncation_spot_values() {
        // Identity drift capped at e/√t: at (t,z) = (1,10) the cap is e.
        let id = TruncatedDrift::new(
            Drift::Custom { name: "identity".into(), f: Arc::new(|z| z) },
            E,
            0.5,
        )
        .unwrap();
        assert!((id.eval(1.0, 10.0) - E).abs() < 1e-15);

        // L log L capped the same way: b(-e) = e·log(2e) ≈ 4.6024.
        let b = TruncatedDrift::new(Drift::LLogL { theta1: 0.0, theta2: 1.0 }, E, 0.5).unwrap();
        assert!((b.eval(1.0, -10.0) - E * (2.0 * E).ln()).abs() < 1e-12);
        // Untruncated below the cap.
        assert_eq!(b.eval(1.0, 1.0), b.base().eval(1.0));
        // t = 0 removes the cap entirely.
        assert_eq!(b.eval(0.0, 1e9), b.base().eval(1e9));
    }

    #[test]
    fn truncation_parameter_validation() {
        let base = Drift::Zero;
        assert!(matches!(TruncatedDrift::new(base.clone(), 2.0, 0.5), Err(Error::Config(_))));
        assert!(matches!(TruncatedDrift::new(base.clone(), E, 0.25), Err(Error::Config(_))));
        assert!(matches!(TruncatedDrift::new(base.clone(), E, 1.0), Err(Error::Config(_))));
        assert!(TruncatedDrift::new(base, E, 0.26).is_ok());
    }

    #[test]
    fn envelope_values_and_margin() {
        let td = TruncatedDrift::new(Drift::LLogL { theta1: 1.0, theta2: 1.0 }, E * E, 0.5).unwrap();
        let env = compute_envelope(&td).unwrap();
        assert_eq!(env.m_b, 1.0);
        assert!((env.k_b - 8.0).abs() < 1e-12); // 2·(1+1)·log(e²) = 8
        assert_eq!(env.l_b, 2.0);
        assert!((env.beta(1.0) - 32.0).abs() < 1e-12);
        // K_b - L_b log(8 K_b) - M_σ² - M_b⁴ at M_σ = 1: 8 - 2 log 64 - 1 - 1 < 0.
        assert!(env.condition_margin(1.0) < 0.0);
        // Larger K_b (bigger cutoff) eventually satisfies the condition.
        let td = TruncatedDrift::new(Drift::LLogL { theta1: 1.0, theta2: 1.0 }, (12.0f64).exp(), 0.5).unwrap();
        let env = compute_envelope(&td).unwrap();
        assert!(env.condition_margin(1.0) > 0.0);
    }

    #[test]
    fn envelope_unsupported_families() {
        let td = TruncatedDrift::new(Drift::Linear { rate: 2.0 }, E, 0.5).unwrap();
        assert!(matches!(compute_envelope(&td), Err(Error::Unsupported(_))));
    }

    #[test]
    fn osgood_llogl_diverges_superlinear_converges() {
        let llogl = Drift::LLogL { theta1: 1.0, theta2: 1.0 };
        let rep = osgood_diagnostic(&llogl, 1e12).unwrap();
        assert_eq!(rep.class, OsgoodClass::Diverging);
        assert!(rep.integrals.windows(2).all(|w| w[1] > w[0]));

        let supercrit = Drift::Custom { name: "z^1.5".into(), f: Arc::new(|z: f64| z.abs().powf(1.5)) };
        let rep = osgood_diagnostic(&supercrit, 1e12).unwrap();
        assert_eq!(rep.class, OsgoodClass::Converging);

        let signed = Drift::Linear { rate: -1.0 };
        let rep = osgood_diagnostic(&signed, 1e12).unwrap();
        assert_eq!(rep.class, OsgoodClass::Undefined);
    }

    #[test]
    fn sigma_constants() {
        let s = Sigma::Constant(-0.5);
        assert_eq!(s.eval(3.0), -0.5);
        assert_eq!(s.bound(), 0.5);
        assert_eq!(s.lipschitz(), 0.0);
        let s = Sigma::Custom {
            name: "damped cosine".into(),
            f: Arc::new(|z: f64| 0.3 * z.cos()),
            bound: 0.3,
            lipschitz: 0.3,
        };
        assert!((s.eval(0.0) - 0.3).abs() < 1e-15);
        assert_eq!(s.bound(), 0.3);
    }
}
