//! TOML run configuration.
//!
//! ```toml
//! seed = 7
//! threads = 4
//!
//! [reservoir]
//! n_nodes = 961
//! spectral_radius = 0.9
//!
//! [task]
//! t_train = 1000
//! t_test = 500
//!
//! [train]
//! policy = "greedy"
//! minimizers = 20
//!
//! [sweep]
//! sizes = [64, 128, 256]
//!
//! [theory]
//! n = 8
//! ```
//!
//! Every key is optional. Command-line flags override the file, which
//! overrides the built-in defaults.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bench::{SweepConfig, TaskConfig};
use crate::descent::PolicyKind;
use crate::reservoir::{ReservoirConfig, DEFAULT_WASHOUT};
use crate::tasks::{MackeyGlass, TargetScaling, TaskSpec, DEFAULT_TARGET_AMPLITUDE};
use crate::theory::{Centering, SimplexMode};

use super::manifest::RunManifest;
use super::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub reservoir: ReservoirSection,
    pub task: TaskSection,
    pub mackey_glass: MackeyGlass,
    pub train: TrainSection,
    pub sweep: SweepSection,
    pub theory: TheorySection,
    pub gen_task: GenTaskSection,
}

/// Reservoir parameters; the reservoir seed is derived from the run seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReservoirSection {
    pub n_nodes: usize,
    pub spectral_radius: f64,
    pub leak_rate: f64,
    pub input_scale: f64,
    pub bias_scale: f64,
    pub connectivity: f64,
}

impl Default for ReservoirSection {
    fn default() -> Self {
        let d = ReservoirConfig::default();
        Self {
            n_nodes: d.n_nodes,
            spectral_radius: d.spectral_radius,
            leak_rate: d.leak_rate,
            input_scale: d.input_scale,
            bias_scale: d.bias_scale,
            connectivity: d.connectivity,
        }
    }
}

impl ReservoirSection {
    pub fn to_config(&self, seed: u64) -> ReservoirConfig {
        ReservoirConfig {
            n_nodes: self.n_nodes,
            spectral_radius: self.spectral_radius,
            leak_rate: self.leak_rate,
            input_scale: self.input_scale,
            bias_scale: self.bias_scale,
            connectivity: self.connectivity,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskSection {
    pub t_train: usize,
    pub t_test: usize,
    pub washout: usize,
    pub scaling: TargetScaling,
    pub target_amplitude: f64,
}

impl Default for TaskSection {
    fn default() -> Self {
        Self {
            t_train: 1000,
            t_test: 500,
            washout: DEFAULT_WASHOUT,
            scaling: TargetScaling::ReadoutMatched,
            target_amplitude: DEFAULT_TARGET_AMPLITUDE,
        }
    }
}

impl TaskSection {
    pub fn spec(&self) -> TaskSpec {
        TaskSpec {
            t_train: self.t_train,
            t_test: self.t_test,
            washout: self.washout,
            scaling: self.scaling,
            target_amplitude: self.target_amplitude,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub policy: PolicyKind,
    pub minimizers: usize,
    pub max_epochs: usize,
    pub epsilon: f64,
    pub record_test_error: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            policy: PolicyKind::Greedy,
            minimizers: 1,
            max_epochs: 1_000_000,
            epsilon: 0.0,
            record_test_error: true,
        }
    }
}

/// Planted `K_mean` values fitted without running any descent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepFixture {
    pub sizes: Vec<usize>,
    pub markovian: Vec<f64>,
    pub greedy: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub sizes: Vec<usize>,
    pub minimizers_per_size: usize,
    pub policies: Vec<PolicyKind>,
    pub epsilon: f64,
    pub max_epochs: usize,
    pub fixture: Option<SweepFixture>,
}

impl Default for SweepSection {
    fn default() -> Self {
        let d = SweepConfig::default();
        Self {
            sizes: d.sizes,
            minimizers_per_size: d.minimizers_per_size,
            policies: d.policies,
            epsilon: d.epsilon,
            max_epochs: d.max_epochs,
            fixture: None,
        }
    }
}

/// An explicit instance for `theory` instead of random ones.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoryFixture {
    /// State matrix rows (`T` rows of `N` values).
    pub state: Vec<Vec<f64>>,
    pub target: Vec<f64>,
    pub eta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheorySection {
    pub n: usize,
    pub t: usize,
    pub instances: usize,
    pub policy: PolicyKind,
    pub simplex: SimplexMode,
    /// Descents per instance for the contraction check.
    pub trials: usize,
    /// Draws used to estimate `|pi|_inf` for the greedy selector.
    pub calibration_epochs: usize,
    pub beta_sizes: Vec<usize>,
    pub beta_trials: usize,
    pub beta_centering: Centering,
    pub fixture: Option<TheoryFixture>,
}

impl Default for TheorySection {
    fn default() -> Self {
        Self {
            n: 8,
            t: 16,
            instances: 1,
            policy: PolicyKind::Markovian,
            simplex: SimplexMode::ExactVertex,
            trials: 20,
            calibration_epochs: 100_000,
            beta_sizes: vec![100, 200, 400, 800],
            beta_trials: 20,
            beta_centering: Centering::GrandMean,
            fixture: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenTaskSection {
    pub format: String,
}

impl Default for GenTaskSection {
    fn default() -> Self {
        Self {
            format: "csv".into(),
        }
    }
}

impl Config {
    /// Reads a TOML config, or the config snapshot inside a run manifest
    /// when the file ends in `.json`.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        if path.extension().and_then(|e| e.to_str()) == Some("json") {
            let m: RunManifest = serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            return Ok(m.config);
        }
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn task_config(&self) -> TaskConfig {
        TaskConfig {
            t_train: self.task.t_train,
            t_test: self.task.t_test,
            washout: self.task.washout,
            scaling: self.task.scaling,
            target_amplitude: self.task.target_amplitude,
            reservoir: self.reservoir.to_config(0),
            mackey_glass: self.mackey_glass,
        }
    }
}

/// Seed precedence: flag, config file, `BOOLCD_SEED`, then 0.
pub fn resolve_seed(flag: Option<u64>, config: Option<u64>) -> Result<u64, CliError> {
    if let Some(s) = flag.or(config) {
        return Ok(s);
    }
    match std::env::var("BOOLCD_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("BOOLCD_SEED is not a u64: `{v}`"))),
        Err(_) => Ok(0),
    }
}
