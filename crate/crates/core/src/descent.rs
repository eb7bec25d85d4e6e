//! Randomized single-coordinate descent over Boolean readout weights.
//!
//! Each epoch picks one coordinate, flips it, and keeps the flip only if the
//! training error strictly decreases. Coordinates are picked either
//! uniformly ([`PolicyKind::Markovian`]) or by the biased selector
//! ([`PolicyKind::Greedy`]), which draws `u_i ~ U(0, 1)`, picks
//! `argmax_i u_i * bias_i`, then raises every bias by `1/N` and resets the
//! picked one to zero.
//!
//! A run stops once the error reaches the target, once every coordinate has
//! been rejected since the last accepted flip (which certifies a local
//! coordinatewise minimizer), or at the epoch cap.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::norm_sq;
use crate::objective::{BooleanWeights, Objective};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Markovian,
    Greedy,
}

impl PolicyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Markovian => "markovian",
            Self::Greedy => "greedy",
        }
    }
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "markovian" | "random" => Ok(Self::Markovian),
            "greedy" => Ok(Self::Greedy),
            other => Err(Error::InvalidParameter(format!("unknown policy `{other}`"))),
        }
    }
}

/// Which selector to run and how to seed it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectorPolicy {
    pub kind: PolicyKind,
    pub rng_seed: u64,
}

impl SelectorPolicy {
    pub fn markovian(rng_seed: u64) -> Self {
        Self {
            kind: PolicyKind::Markovian,
            rng_seed,
        }
    }

    pub fn greedy(rng_seed: u64) -> Self {
        Self {
            kind: PolicyKind::Greedy,
            rng_seed,
        }
    }

    pub fn with_seed(self, rng_seed: u64) -> Self {
        Self { rng_seed, ..self }
    }

    /// Selector state for an `n`-coordinate problem. The greedy bias is
    /// drawn i.i.d. uniform on `[0, 1)`.
    pub fn selector(&self, n: usize) -> Selector {
        let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
        let base = match self.kind {
            PolicyKind::Markovian => Vec::new(),
            PolicyKind::Greedy => (0..n).map(|_| rng.random::<f64>()).collect(),
        };
        Selector {
            kind: self.kind,
            n,
            rng,
            base,
            stamp: vec![0; if self.kind == PolicyKind::Greedy { n } else { 0 }],
            clock: 0,
            draws: vec![0.0; n],
        }
    }
}

/// Running coordinate selector.
///
/// The greedy bias of coordinate `i` is `base_i + (clock - stamp_i) / N`,
/// which keeps "unselected for N epochs" at exactly 1.
#[derive(Debug, Clone)]
pub struct Selector {
    kind: PolicyKind,
    n: usize,
    rng: ChaCha8Rng,
    base: Vec<f64>,
    stamp: Vec<u64>,
    clock: u64,
    draws: Vec<f64>,
}

impl Selector {
    /// Greedy selector with an explicit bias vector.
    pub fn greedy_with_bias(bias: Vec<f64>, rng_seed: u64) -> Result<Self> {
        if bias.iter().any(|b| !(*b >= 0.0) || !b.is_finite()) {
            return Err(Error::InvalidParameter(
                "greedy bias must be finite and nonnegative".into(),
            ));
        }
        let n = bias.len();
        Ok(Self {
            kind: PolicyKind::Greedy,
            n,
            rng: ChaCha8Rng::seed_from_u64(rng_seed),
            stamp: vec![0; n],
            base: bias,
            clock: 0,
            draws: vec![0.0; n],
        })
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    /// Current greedy bias vector (empty for the Markovian selector).
    pub fn bias(&self) -> Vec<f64> {
        (0..self.base.len()).map(|i| self.bias_of(i)).collect()
    }

    fn bias_of(&self, i: usize) -> f64 {
        self.base[i] + (self.clock - self.stamp[i]) as f64 / self.n as f64
    }

    /// Draws the next coordinate and advances the selector state.
    pub fn select(&mut self) -> Result<usize> {
        if self.n == 0 {
            return Err(Error::SelectorState("selector has dimension 0".into()));
        }
        match self.kind {
            PolicyKind::Markovian => Ok(self.rng.random_range(0..self.n)),
            PolicyKind::Greedy => {
                if self.base.len() != self.n {
                    return Err(Error::SelectorState("greedy bias is not initialized".into()));
                }
                for d in self.draws.iter_mut() {
                    *d = self.rng.random::<f64>();
                }
                let mut best = 0;
                let mut best_val = f64::NEG_INFINITY;
                for i in 0..self.n {
                    let v = self.draws[i] * self.bias_of(i);
                    if v > best_val {
                        best_val = v;
                        best = i;
                    }
                }
                self.clock += 1;
                self.base[best] = 0.0;
                self.stamp[best] = self.clock;
                Ok(best)
            }
        }
    }
}

/// Free-function form of [`Selector::select`].
pub fn select_coordinate(selector: &mut Selector) -> Result<usize> {
    selector.select()
}

/// Why a run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    LocalMin,
    Epsilon,
    MaxEpochs,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::LocalMin => "local_min",
            Self::Epsilon => "epsilon",
            Self::MaxEpochs => "max_epochs",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescentConfig {
    pub policy: SelectorPolicy,
    pub max_epochs: usize,
    /// Stop once the training mean-square error is at or below this value.
    pub target_error: f64,
    pub stop_on_local_min: bool,
    pub record_test_error: bool,
}

impl DescentConfig {
    pub fn new(policy: SelectorPolicy) -> Self {
        Self {
            policy,
            max_epochs: 1_000_000,
            target_error: 0.0,
            stop_on_local_min: true,
            record_test_error: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 {
            return Err(Error::InvalidParameter("max_epochs must be >= 1".into()));
        }
        if !(self.target_error >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "target_error must be >= 0, got {}",
                self.target_error
            )));
        }
        Ok(())
    }
}

/// Current weights with their cached residual `target - E w`.
#[derive(Debug, Clone)]
pub struct DescentState {
    weights: BooleanWeights,
    residual: Vec<f64>,
    sse: f64,
}

impl DescentState {
    pub fn new(obj: &Objective, weights: BooleanWeights) -> Result<Self> {
        let residual = obj.residual(&weights)?;
        let sse = norm_sq(&residual);
        Ok(Self {
            weights,
            residual,
            sse,
        })
    }

    pub fn weights(&self) -> &BooleanWeights {
        &self.weights
    }

    pub fn mse(&self, horizon: usize) -> f64 {
        self.sse / horizon as f64
    }

    /// Sum of squared residuals of the flipped configuration, without
    /// applying the flip. Costs `O(T)`.
    pub fn flipped_sse(&self, obj: &Objective, l: usize) -> f64 {
        let sign = if self.weights.get(l) { -1.0 } else { 1.0 };
        self.residual
            .iter()
            .zip(obj.column(l))
            .map(|(r, e)| {
                let v = r - sign * e;
                v * v
            })
            .sum()
    }

    /// Flips `l` and updates the residual. Mirrors `flipped_sse` term by
    /// term so the stored error is bit-identical to the compared candidate.
    fn apply_flip(&mut self, obj: &Objective, l: usize) -> f64 {
        let sign = if self.weights.get(l) { -1.0 } else { 1.0 };
        let mut sse = 0.0;
        for (r, e) in self.residual.iter_mut().zip(obj.column(l)) {
            *r -= sign * e;
            sse += *r * *r;
        }
        self.weights.flip(l);
        sse
    }

    /// Tries flipping coordinate `l`; keeps the flip only on a strict
    /// decrease. Returns whether the flip was kept.
    pub fn step(&mut self, obj: &Objective, l: usize) -> bool {
        let candidate = self.flipped_sse(obj, l);
        if candidate < self.sse {
            let sse = self.apply_flip(obj, l);
            debug_assert_eq!(sse.to_bits(), candidate.to_bits());
            self.sse = candidate;
            true
        } else {
            false
        }
    }

    /// Relative gap between the cached error and a full recomputation.
    pub fn drift(&self, obj: &Objective) -> Result<f64> {
        let full = obj.sse(&self.weights)?;
        Ok((full - self.sse).abs() / full.max(f64::MIN_POSITIVE))
    }
}

/// Result of a single accept/reject step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub weights: BooleanWeights,
    /// 1 if the flip was kept, 0 otherwise.
    pub reward: u8,
    /// Mean-square error of the kept configuration.
    pub error: f64,
}

/// Flips coordinate `l` of `w` and keeps it if the error strictly drops.
pub fn step(obj: &Objective, w: &BooleanWeights, l: usize) -> Result<StepOutcome> {
    if l >= obj.n() {
        return Err(Error::InvalidParameter(format!(
            "coordinate {l} out of range for N = {}",
            obj.n()
        )));
    }
    let mut state = DescentState::new(obj, w.clone())?;
    let kept = state.step(obj, l);
    Ok(StepOutcome {
        error: state.mse(obj.horizon()),
        weights: state.weights,
        reward: kept as u8,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub flipped_index: usize,
    /// Training error of the configuration kept after this epoch.
    pub error: f64,
    pub reward: u8,
    pub test_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescentTrace {
    pub initial_error: f64,
    pub initial_test_error: Option<f64>,
    pub records: Vec<EpochRecord>,
    pub final_weights: BooleanWeights,
    /// Epoch of the last accepted flip.
    pub epochs_to_converge: usize,
    pub total_epochs: usize,
    pub accepted_flips: usize,
    pub converged_reason: StopReason,
}

impl DescentTrace {
    pub fn final_error(&self) -> f64 {
        self.records.last().map_or(self.initial_error, |r| r.error)
    }

    pub fn final_test_error(&self) -> Option<f64> {
        self.records
            .last()
            .map_or(self.initial_test_error, |r| r.test_error)
    }

    /// Error after each epoch, with the initial error at index 0.
    pub fn error_curve(&self) -> Vec<f64> {
        std::iter::once(self.initial_error)
            .chain(self.records.iter().map(|r| r.error))
            .collect()
    }
}

/// Runs the descent from `w0` on `obj`.
pub fn run_descent(obj: &Objective, w0: &BooleanWeights, cfg: &DescentConfig) -> Result<DescentTrace> {
    run_descent_monitored(obj, None, w0, cfg)
}

/// Like [`run_descent`], additionally tracking the error of the same
/// weights on a held-out objective when `cfg.record_test_error` is set.
pub fn run_descent_monitored(
    obj: &Objective,
    test: Option<&Objective>,
    w0: &BooleanWeights,
    cfg: &DescentConfig,
) -> Result<DescentTrace> {
    cfg.validate()?;
    let n = obj.n();
    check_dim("initial weights", n, w0.len())?;
    let test = if cfg.record_test_error { test } else { None };
    if let Some(t) = test {
        check_dim("test objective nodes", n, t.n())?;
    }
    let horizon = obj.horizon();

    let mut state = DescentState::new(obj, w0.clone())?;
    let mut test_state = test.map(|t| DescentState::new(t, w0.clone())).transpose()?;
    let test_err = |s: &Option<DescentState>| s.as_ref().zip(test).map(|(s, t)| s.mse(t.horizon()));

    let initial_error = state.mse(horizon);
    let initial_test_error = test_err(&test_state);
    let mut records = Vec::new();
    let mut last_accept = 0;
    let mut accepted = 0;

    if initial_error <= cfg.target_error {
        return Ok(DescentTrace {
            initial_error,
            initial_test_error,
            records,
            final_weights: state.weights,
            epochs_to_converge: 0,
            total_epochs: 0,
            accepted_flips: 0,
            converged_reason: StopReason::Epsilon,
        });
    }

    let mut selector = cfg.policy.selector(n);
    // Coordinates rejected since the last accepted flip, tracked by
    // generation so clearing is O(1).
    let mut rejected_gen = vec![0u64; n];
    let mut generation = 1u64;
    let mut rejected = 0usize;
    let mut reason = StopReason::MaxEpochs;

    for epoch in 1..=cfg.max_epochs {
        let l = selector.select()?;
        let kept = state.step(obj, l);
        if kept {
            if let (Some(ts), Some(t)) = (test_state.as_mut(), test) {
                ts.force_flip(t, l);
            }
            accepted += 1;
            last_accept = epoch;
            generation += 1;
            rejected = 0;
        } else if rejected_gen[l] != generation {
            rejected_gen[l] = generation;
            rejected += 1;
        }
        let error = state.mse(horizon);
        records.push(EpochRecord {
            epoch,
            flipped_index: l,
            error,
            reward: kept as u8,
            test_error: test_err(&test_state),
        });
        if cfg!(debug_assertions) && epoch % 4096 == 0 {
            debug_assert!(state.drift(obj)? <= 1e-9, "residual drift at epoch {epoch}");
        }
        if kept && error <= cfg.target_error {
            reason = StopReason::Epsilon;
            break;
        }
        if cfg.stop_on_local_min && rejected == n {
            reason = StopReason::LocalMin;
            break;
        }
    }

    Ok(DescentTrace {
        initial_error,
        initial_test_error,
        total_epochs: records.len(),
        records,
        final_weights: state.weights,
        epochs_to_converge: last_accept,
        accepted_flips: accepted,
        converged_reason: reason,
    })
}

impl DescentState {
    /// Applies a flip unconditionally (used to mirror training moves on the
    /// held-out residual).
    fn force_flip(&mut self, obj: &Objective, l: usize) {
        self.sse = self.apply_flip(obj, l);
    }
}

/// Per-epoch statistics over an ensemble of runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    /// Mean error per epoch; index 0 is the shared starting error.
    pub mean_error: Vec<f64>,
    pub std_error: Vec<f64>,
    #[serde(rename = "K_mean")]
    pub k_mean: f64,
    #[serde(rename = "K_std")]
    pub k_std: f64,
    pub converged_reason: BTreeMap<String, usize>,
}

#[derive(Debug, Clone)]
pub struct Ensemble {
    pub traces: Vec<DescentTrace>,
    pub summary: EnsembleSummary,
}

/// Runs `n_minimizers` descents from the same start, one per seed.
///
/// Runs execute in parallel; results are ordered by seed position.
pub fn run_ensemble(
    obj: &Objective,
    w0: &BooleanWeights,
    cfg: &DescentConfig,
    n_minimizers: usize,
    seeds: &[u64],
) -> Result<Ensemble> {
    run_ensemble_monitored(obj, None, w0, cfg, n_minimizers, seeds)
}

pub fn run_ensemble_monitored(
    obj: &Objective,
    test: Option<&Objective>,
    w0: &BooleanWeights,
    cfg: &DescentConfig,
    n_minimizers: usize,
    seeds: &[u64],
) -> Result<Ensemble> {
    if n_minimizers == 0 {
        return Err(Error::InvalidParameter("n_minimizers must be >= 1".into()));
    }
    check_dim("ensemble seeds", n_minimizers, seeds.len())?;
    let traces = seeds
        .par_iter()
        .map(|&seed| {
            let cfg = DescentConfig {
                policy: cfg.policy.with_seed(seed),
                ..*cfg
            };
            run_descent_monitored(obj, test, w0, &cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize(&traces);
    Ok(Ensemble { traces, summary })
}

/// Mean and population standard deviation across traces, padding each
/// trace with its final error after it stops.
pub fn summarize(traces: &[DescentTrace]) -> EnsembleSummary {
    let curves: Vec<Vec<f64>> = traces.iter().map(DescentTrace::error_curve).collect();
    let (mean_error, std_error) = padded_mean_std(&curves);
    let ks: Vec<f64> = traces.iter().map(|t| t.epochs_to_converge as f64).collect();
    let (k_mean, k_std) = mean_std(&ks);
    let mut converged_reason = BTreeMap::new();
    for t in traces {
        *converged_reason
            .entry(t.converged_reason.as_str().to_string())
            .or_insert(0) += 1;
    }
    EnsembleSummary {
        mean_error,
        std_error,
        k_mean,
        k_std,
        converged_reason,
    }
}

/// Pointwise mean/std of curves of unequal length, each extended with its
/// last value.
pub fn padded_mean_std(curves: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let len = curves.iter().map(Vec::len).max().unwrap_or(0);
    let mut mean = Vec::with_capacity(len);
    let mut std = Vec::with_capacity(len);
    let mut column = Vec::with_capacity(curves.len());
    for k in 0..len {
        column.clear();
        column.extend(
            curves
                .iter()
                .filter(|c| !c.is_empty())
                .map(|c| c[k.min(c.len() - 1)]),
        );
        let (m, s) = mean_std(&column);
        mean.push(m);
        std.push(s);
    }
    (mean, std)
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Whether no single flip of `w` strictly lowers the training error.
pub fn is_local_minimizer(obj: &Objective, w: &BooleanWeights) -> Result<bool> {
    let state = DescentState::new(obj, w.clone())?;
    Ok((0..obj.n()).all(|l| state.flipped_sse(obj, l) >= state.sse))
}
