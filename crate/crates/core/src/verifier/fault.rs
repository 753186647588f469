//! Self-test of the verifier's discriminating power.
//!
//! Each drill corrupts exactly one ingredient — the kernel spectrum or the
//! driving noise variance — and demands that the affected check fail its
//! own bound. A drill passes when the underlying check fails cleanly, so a
//! verifier that has gone numb (bands too wide, oracle accidentally reused
//! on both sides) is caught here rather than silently waving faults
//! through.

use crate::kernel::{KernelOptions, KernelTable};
use crate::report::CheckReport;
use crate::verifier::stochastic::{eigenfunction_decay, variance_anchor_scaled, StochasticSpec};
use crate::Result;
use std::time::Instant;

/// Rewrap a check run on sabotaged input: the drill passes exactly when
/// the inner check failed conclusively.
fn drill(name: &str, inner: CheckReport) -> CheckReport {
    let tripped = !inner.passed && !inner.inconclusive;
    let mut notes =
        vec![format!("sabotaged input must trip `{}`: tripped = {tripped}", inner.name)];
    notes.extend(inner.notes);
    CheckReport {
        name: name.to_string(),
        statistic: inner.statistic,
        bound: inner.bound,
        passed: tripped,
        margin: inner.statistic - inner.bound,
        levels: inner.levels,
        stderr: inner.stderr,
        runtime_s: inner.runtime_s,
        notes,
        inconclusive: inner.inconclusive,
    }
}

/// Three drills: a doubled spectrum against the eigenfunction anchor, the
/// same doubled spectrum against the variance anchor, and a 10% inflation
/// of the noise variance against the variance anchor. The last one is the
/// sensitive drill — it needs the anchor's full path budget for the 3-SE
/// band to resolve the bias.
pub fn run_fault_injection(spec: &StochasticSpec) -> Result<Vec<CheckReport>> {
    let start = Instant::now();
    let corrupted =
        KernelTable::with_options(spec.n_x, KernelOptions::default())?.with_spectrum_scale(2.0);
    let mut spectrum_decay = drill("fault-spectrum-eigenfunction-decay", eigenfunction_decay(&corrupted)?);
    spectrum_decay.runtime_s = start.elapsed().as_secs_f64();

    let spectrum_variance = drill(
        "fault-spectrum-variance-anchor",
        variance_anchor_scaled(spec, spec.paths, 2.0, 1.0)?,
    );
    let noise_variance = drill(
        "fault-noise-variance-anchor",
        variance_anchor_scaled(spec, spec.anchor_paths, 1.0, 1.1)?,
    );
    Ok(vec![spectrum_decay, spectrum_variance, noise_variance])
}
