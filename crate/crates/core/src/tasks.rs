//! Target signals and training problems.
//!
//! The prediction task is one step ahead: the state row at time `n` is
//! paired with the series value at `n + 1`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::objective::{readout, BooleanWeights, Objective};
use crate::reservoir::{drive_reservoir, ReservoirConfig, StateMatrix};

/// Mackey-Glass delay equation
/// `dx/dt = beta x(t - tau) / (1 + x(t - tau)^n) - gamma x(t)`,
/// integrated with RK4 and sampled once per time unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MackeyGlass {
    pub beta: f64,
    pub gamma: f64,
    pub exponent: f64,
    /// Delay in time units.
    pub tau: usize,
    pub dt: f64,
    /// Samples dropped from the front of the series.
    pub discard: usize,
}

impl Default for MackeyGlass {
    fn default() -> Self {
        Self {
            beta: 0.2,
            gamma: 0.1,
            exponent: 10.0,
            tau: 17,
            dt: 0.1,
            discard: 300,
        }
    }
}

impl MackeyGlass {
    fn rhs(&self, x: f64, delayed: f64) -> f64 {
        self.beta * delayed / (1.0 + delayed.powf(self.exponent)) - self.gamma * x
    }

    /// Integration steps per sample.
    pub fn steps_per_sample(&self) -> usize {
        ((1.0 / self.dt).round() as usize).max(1)
    }

    /// Constant initial history drawn from the seed, in `[0.5, 1.5)`.
    pub fn initial_history(seed: u64) -> f64 {
        0.5 + ChaCha8Rng::seed_from_u64(seed).random::<f64>()
    }

    /// Unstandardized samples from a constant history `history`.
    pub fn integrate(&self, length: usize, history: f64) -> Result<Vec<f64>> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        let per = self.steps_per_sample();
        let total_samples = length + self.discard;
        let steps = total_samples * per;
        let delay = (self.tau as f64 / self.dt).round() as usize;
        let h = self.dt;

        let mut xs = Vec::with_capacity(steps + 1);
        xs.push(history);
        let past = |xs: &Vec<f64>, j: isize| -> f64 {
            if j < 0 {
                history
            } else {
                xs[j as usize]
            }
        };
        for j in 0..steps {
            let x = xs[j];
            let next = if delay == 0 {
                let k1 = self.rhs(x, x);
                let a = x + 0.5 * h * k1;
                let k2 = self.rhs(a, a);
                let b = x + 0.5 * h * k2;
                let k3 = self.rhs(b, b);
                let c = x + h * k3;
                let k4 = self.rhs(c, c);
                x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            } else {
                let jd = j as isize - delay as isize;
                let d0 = past(&xs, jd);
                let d1 = past(&xs, jd + 1);
                let dm = 0.5 * (d0 + d1);
                let k1 = self.rhs(x, d0);
                let k2 = self.rhs(x + 0.5 * h * k1, dm);
                let k3 = self.rhs(x + 0.5 * h * k2, dm);
                let k4 = self.rhs(x + h * k3, d1);
                x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            };
            xs.push(next);
        }
        Ok((self.discard..total_samples).map(|s| xs[(s + 1) * per]).collect())
    }

    /// Samples standardized to zero mean and unit variance.
    pub fn generate(&self, length: usize, seed: u64) -> Result<Vec<f64>> {
        if length == 0 {
            return Err(Error::InvalidParameter("length must be >= 1".into()));
        }
        let raw = self.integrate(length, Self::initial_history(seed))?;
        Ok(standardize(&raw))
    }
}

/// Standardized Mackey-Glass series with the usual parameters.
pub fn mackey_glass(length: usize, tau: usize, dt: f64, seed: u64) -> Result<Vec<f64>> {
    MackeyGlass {
        tau,
        dt,
        ..Default::default()
    }
    .generate(length, seed)
}

/// Zero mean, unit (population) variance. A constant series is only centered.
pub fn standardize(xs: &[f64]) -> Vec<f64> {
    let (m, s) = crate::descent::mean_std(xs);
    let s = if s > 0.0 { s } else { 1.0 };
    xs.iter().map(|x| (x - m) / s).collect()
}

/// `E w + noise` with i.i.d. Gaussian noise.
pub fn synthetic_target(
    state: &StateMatrix,
    planted: &BooleanWeights,
    noise_std: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    let mut y = readout(state, planted)?;
    if noise_std > 0.0 {
        let normal = Normal::new(0.0, noise_std).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in y.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    } else if noise_std < 0.0 {
        return Err(Error::InvalidParameter("noise_std must be >= 0".into()));
    }
    Ok(y)
}

/// How series values are mapped onto training targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetScaling {
    /// Series values are used as they are.
    Identity,
    /// The series is standardized on the training segment, then given the
    /// mean of the half-on readout `E 1 / 2` and `target_amplitude` times
    /// its standard deviation.
    #[default]
    ReadoutMatched,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub t_train: usize,
    pub t_test: usize,
    pub washout: usize,
    #[serde(default)]
    pub scaling: TargetScaling,
    /// Target spread relative to the half-on readout under `ReadoutMatched`.
    #[serde(default = "default_amplitude")]
    pub target_amplitude: f64,
}

/// Default ratio of target spread to half-on readout spread.
pub const DEFAULT_TARGET_AMPLITUDE: f64 = 3.0;

fn default_amplitude() -> f64 {
    DEFAULT_TARGET_AMPLITUDE
}

impl TaskSpec {
    /// Readout-matched targets with the default amplitude.
    pub fn new(t_train: usize, t_test: usize, washout: usize) -> Self {
        Self {
            t_train,
            t_test,
            washout,
            scaling: TargetScaling::ReadoutMatched,
            target_amplitude: DEFAULT_TARGET_AMPLITUDE,
        }
    }
}

/// Everything recorded about a task besides the matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskMeta {
    pub t_train: usize,
    pub t_test: usize,
    pub washout: usize,
    pub n_nodes: usize,
    /// Offset between a state row and its target sample (always 1).
    pub target_shift: usize,
    pub scaling: TargetScaling,
    /// Affine map applied to series values: `target = offset + gain * value`.
    pub target_offset: f64,
    pub target_gain: f64,
    pub reservoir: ReservoirConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub series_seed: Option<u64>,
}

/// A one-step-ahead prediction problem with disjoint train/test segments.
#[derive(Debug, Clone)]
pub struct TaskData {
    /// The series samples that drove the reservoir.
    pub input: Vec<f64>,
    pub target_train: Vec<f64>,
    pub target_test: Vec<f64>,
    pub state_train: StateMatrix,
    /// `None` when the test segment is empty.
    pub state_test: Option<StateMatrix>,
    pub meta: TaskMeta,
}

impl TaskData {
    pub fn n_nodes(&self) -> usize {
        self.state_train.n_nodes()
    }

    /// Input samples aligned with the training rows.
    pub fn input_train(&self) -> &[f64] {
        let w = self.meta.washout;
        &self.input[w..w + self.meta.t_train]
    }

    pub fn train_objective(&self) -> Result<Objective> {
        Objective::new(self.state_train.clone(), self.target_train.clone())
    }

    /// Held-out objective sharing the training objective's shift.
    pub fn test_objective(&self, train: &Objective) -> Result<Option<Objective>> {
        self.state_test
            .as_ref()
            .map(|s| Objective::with_eta(s.clone(), self.target_test.clone(), train.eta()))
            .transpose()
    }
}

/// Drives the reservoir with `series` and pairs each state with the next
/// series value.
pub fn make_task(
    cfg: &ReservoirConfig,
    series: &[f64],
    spec: &TaskSpec,
) -> Result<TaskData> {
    let TaskSpec {
        t_train,
        t_test,
        washout,
        scaling,
        target_amplitude,
    } = *spec;
    if !(target_amplitude > 0.0 && target_amplitude.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "target_amplitude must be positive, got {target_amplitude}"
        )));
    }
    if t_train == 0 {
        return Err(Error::InvalidParameter("t_train must be >= 1".into()));
    }
    let needed = washout + t_train + t_test + 1;
    if series.len() < needed {
        return Err(Error::InputTooShort {
            needed,
            got: series.len(),
        });
    }
    let input = &series[..washout + t_train + t_test];
    let states = drive_reservoir(cfg, input, washout)?;
    let raw_targets = &series[washout + 1..washout + t_train + t_test + 1];

    let state_train = states.rows(0, t_train)?;
    let state_test = if t_test > 0 {
        Some(states.rows(t_train, t_train + t_test)?)
    } else {
        None
    };

    let (offset, gain) = match scaling {
        TargetScaling::Identity => (0.0, 1.0),
        TargetScaling::ReadoutMatched => {
            let (sm, ss) = crate::descent::mean_std(&raw_targets[..t_train]);
            let half: Vec<f64> = (0..t_train)
                .map(|n| 0.5 * state_train.row(n).iter().sum::<f64>())
                .collect();
            let (rm, rs) = crate::descent::mean_std(&half);
            let gain = if ss > 0.0 { target_amplitude * rs / ss } else { 0.0 };
            (rm - gain * sm, gain)
        }
    };
    let map = |v: &f64| offset + gain * v;
    let target_train = raw_targets[..t_train].iter().map(map).collect();
    let target_test = raw_targets[t_train..].iter().map(map).collect();

    Ok(TaskData {
        input: input.to_vec(),
        target_train,
        target_test,
        state_train,
        state_test,
        meta: TaskMeta {
            t_train,
            t_test,
            washout,
            n_nodes: cfg.n_nodes,
            target_shift: 1,
            scaling,
            target_offset: offset,
            target_gain: gain,
            reservoir: cfg.clone(),
            series_seed: None,
        },
    })
}

/// Builds a Mackey-Glass task of exactly the needed length.
pub fn mackey_glass_task(
    cfg: &ReservoirConfig,
    mg: &MackeyGlass,
    spec: &TaskSpec,
    series_seed: u64,
) -> Result<TaskData> {
    let series = mg.generate(spec.washout + spec.t_train + spec.t_test + 1, series_seed)?;
    let mut task = make_task(cfg, &series, spec)?;
    task.meta.series_seed = Some(series_seed);
    Ok(task)
}

/// Re-checks that a task's targets line up with its input series.
pub fn check_alignment(task: &TaskData, series: &[f64]) -> Result<()> {
    check_dim(
        "task targets",
        task.meta.t_train + task.meta.t_test,
        task.target_train.len() + task.target_test.len(),
    )?;
    let w = task.meta.washout;
    for (n, t) in task.target_train.iter().chain(&task.target_test).enumerate() {
        let expected = task.meta.target_offset + task.meta.target_gain * series[w + n + 1];
        if (t - expected).abs() > 1e-12 * expected.abs().max(1.0) {
            return Err(Error::Format(format!("target {n} misaligned")));
        }
    }
    Ok(())
}
