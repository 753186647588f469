//! The experiment configuration: one TOML file with full defaulting, flag
//! overrides on top, and a manifest round trip.
//!
//! Every run resolves its configuration once (file → defaults → flags →
//! refinement applied), writes the result as `manifest.toml`, and computes
//! everything from the resolved struct. Re-running with the manifest as the
//! config file therefore reproduces the run bit-for-bit; [`SCHEMA`] is the
//! documented default file.

use heatlab::coefficients::{Drift, Sigma, TruncatedDrift};
use heatlab::kernel::KernelOptions;
use heatlab::solver::{DriftKind, InitialData, SolverConfig};
use heatlab::verifier::stochastic::StochasticSpec;
use heatlab::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// The schema, as a complete default configuration file.
pub const SCHEMA: &str = r#"# Experiment configuration. Every key is optional and defaults to the
# value shown here; command-line flags override file values.

# Stamped into the manifest by the runner; ignored on input.
# subcommand = "simulate"

[grid]
n_x = 128      # spatial resolution: interior nodes j/n_x, j = 1..n_x-1
n_t = 256      # time steps covering (0, horizon]
horizon = 0.5

# The model block is consumed by `simulate` and `picard`; the verification
# subcommands pin their own reference models so that their tolerances mean
# something.
[model]
initial = "sine"      # zero | constant | sine | indicator | singular | samples
amplitude = 1.0       # constant value, or sine amplitude
mode = 1              # sine mode number
samples = []          # interior node values when initial = "samples"
drift = "llogl"       # zero | linear | llogl
theta1 = 0.5          # llogl: b(z) = theta1 + theta2*|z|*log_+|z|
theta2 = 1.0
rate = 1.0            # linear drift rate
truncation = 20.085536923187664   # drift cap level N >= e; 0 runs the raw drift
truncation_exponent = 0.5         # cap spread exponent, in (1/4, 1)
sigma = 1.0           # constant dispersion

[run]
master_seed = 0
paths = 1000
anchor_paths = 10000  # budget for the variance anchor and its fault drill
path_index = 0        # which path `simulate` renders
refine = false        # double n_x and n_t once, before anything runs
workers = 0           # rayon threads; 0 defers to HEATLAB_WORKERS, then all cores
plot = false          # also write an SVG curve where the subcommand has one
output = "runs/out"

[verify]
only = []             # check names to run; empty means the full battery
with_faults = false   # append the fault-injection drills (verify-stochastic)

[picard]
iters = 6
# beta = 48.0         # weight rate override; defaults to 4*K_b of the drift
"#;

fn d_n_x() -> usize {
    128
}
fn d_n_t() -> usize {
    256
}
fn d_horizon() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "d_n_x")]
    pub n_x: usize,
    #[serde(default = "d_n_t")]
    pub n_t: usize,
    #[serde(default = "d_horizon")]
    pub horizon: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { n_x: d_n_x(), n_t: d_n_t(), horizon: d_horizon() }
    }
}

fn d_initial() -> String {
    "sine".into()
}
fn d_one() -> f64 {
    1.0
}
fn d_mode() -> usize {
    1
}
fn d_drift() -> String {
    "llogl".into()
}
fn d_theta1() -> f64 {
    0.5
}
fn d_truncation() -> f64 {
    std::f64::consts::E.powi(3)
}
fn d_truncation_exponent() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "d_initial")]
    pub initial: String,
    #[serde(default = "d_one")]
    pub amplitude: f64,
    #[serde(default = "d_mode")]
    pub mode: usize,
    #[serde(default)]
    pub samples: Vec<f64>,
    #[serde(default = "d_drift")]
    pub drift: String,
    #[serde(default = "d_theta1")]
    pub theta1: f64,
    #[serde(default = "d_one")]
    pub theta2: f64,
    #[serde(default = "d_one")]
    pub rate: f64,
    #[serde(default = "d_truncation")]
    pub truncation: f64,
    #[serde(default = "d_truncation_exponent")]
    pub truncation_exponent: f64,
    #[serde(default = "d_one")]
    pub sigma: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            initial: d_initial(),
            amplitude: 1.0,
            mode: 1,
            samples: Vec::new(),
            drift: d_drift(),
            theta1: d_theta1(),
            theta2: 1.0,
            rate: 1.0,
            truncation: d_truncation(),
            truncation_exponent: d_truncation_exponent(),
            sigma: 1.0,
        }
    }
}

fn d_paths() -> usize {
    1000
}
fn d_anchor_paths() -> usize {
    10_000
}
fn d_output() -> String {
    "runs/out".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "d_paths")]
    pub paths: usize,
    #[serde(default = "d_anchor_paths")]
    pub anchor_paths: usize,
    #[serde(default)]
    pub path_index: u64,
    #[serde(default)]
    pub refine: bool,
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub plot: bool,
    #[serde(default = "d_output")]
    pub output: String,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            master_seed: 0,
            paths: d_paths(),
            anchor_paths: d_anchor_paths(),
            path_index: 0,
            refine: false,
            workers: 0,
            plot: false,
            output: d_output(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    #[serde(default)]
    pub only: Vec<String>,
    #[serde(default)]
    pub with_faults: bool,
}

fn d_iters() -> usize {
    6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PicardSection {
    #[serde(default = "d_iters")]
    pub iters: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
}

impl Default for PicardSection {
    fn default() -> Self {
        Self { iters: d_iters(), beta: None }
    }
}

/// The full resolved experiment: what the manifest stores and every
/// executor reads.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subcommand: Option<String>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub verify: VerifySection,
    #[serde(default)]
    pub picard: PicardSection,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Apply the one-shot refinement directive: the manifest stores the
    /// doubled grid with the flag cleared, so re-running it does not double
    /// again.
    pub fn apply_refine(&mut self) {
        if self.run.refine {
            self.grid.n_x *= 2;
            self.grid.n_t *= 2;
            self.run.refine = false;
        }
    }

    /// The manifest is the resolved configuration with the subcommand
    /// stamped in.
    pub fn manifest(&self, subcommand: &str) -> Result<String> {
        let mut stamped = self.clone();
        stamped.subcommand = Some(subcommand.to_string());
        toml::to_string_pretty(&stamped)
            .map_err(|e| Error::Config(format!("cannot serialize manifest: {e}")))
    }

    pub fn solver_config(&self) -> Result<SolverConfig> {
        let m = &self.model;
        let initial = match m.initial.as_str() {
            "zero" => InitialData::Zero,
            "constant" => InitialData::Constant(m.amplitude),
            "sine" => InitialData::SineMode { mode: m.mode, amplitude: m.amplitude },
            "indicator" => InitialData::Indicator,
            "singular" => InitialData::SingularProfile,
            "samples" => InitialData::Samples(m.samples.clone()),
            other => {
                return Err(Error::Config(format!(
                    "model.initial: unknown kind {other:?} (zero | constant | sine | indicator | singular | samples)"
                )))
            }
        };
        let base = match m.drift.as_str() {
            "zero" => Drift::Zero,
            "linear" => Drift::Linear { rate: m.rate },
            "llogl" => Drift::LLogL { theta1: m.theta1, theta2: m.theta2 },
            other => {
                return Err(Error::Config(format!(
                    "model.drift: unknown kind {other:?} (zero | linear | llogl)"
                )))
            }
        };
        let drift = if m.truncation == 0.0 {
            DriftKind::Plain(base)
        } else {
            DriftKind::Truncated(TruncatedDrift::new(base, m.truncation, m.truncation_exponent)?)
        };
        let config = SolverConfig {
            n_x: self.grid.n_x,
            n_t: self.grid.n_t,
            horizon: self.grid.horizon,
            initial,
            drift,
            sigma: Sigma::Constant(m.sigma),
            master_seed: self.run.master_seed,
            kernel_options: KernelOptions::default(),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn stochastic_spec(&self) -> StochasticSpec {
        StochasticSpec {
            master_seed: self.run.master_seed,
            paths: self.run.paths,
            anchor_paths: self.run.anchor_paths,
            n_x: self.grid.n_x,
            n_t: self.grid.n_t,
            horizon: self.grid.horizon,
        }
    }
}
