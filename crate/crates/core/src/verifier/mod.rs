//! Certificates for the estimates the well-posedness argument rests on.
//!
//! Two families of checks share the [`crate::report::CheckReport`] format:
//!
//! * **deterministic** — quadrature evidence for the heat-kernel bounds
//!   (mass, sup, spatial/temporal L¹ and L² differences, weighted time
//!   integrals), each either verified against an analytic value or shown
//!   stable under refinement ([`lemmas`]);
//! * **stochastic** — Monte Carlo evidence for the probabilistic estimates:
//!   the noise isometry against the additive-case variance formula
//!   ([`oracle`]), chaining moments, moment growth, comparison, stability,
//!   short-time L² continuity, and the decay statistic ([`stochastic`]).
//!
//! A passing report is only trusted when the same statistic is stable under
//! refinement (quadrature level or grid), which is what the report's level
//! lists record. [`fault`] deliberately breaks the pipeline (rescaled
//! spectrum, inflated noise variance) and asserts the checks notice; a
//! verifier that cannot fail verifies nothing.

pub mod fault;
pub mod lemmas;
pub mod oracle;
pub mod stochastic;
