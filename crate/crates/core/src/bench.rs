//! Convergence-curve fits and system-size sweeps.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::descent::{self, mean_std, DescentConfig, PolicyKind, SelectorPolicy};
use crate::error::{Error, Result};
use crate::objective::BooleanWeights;
use crate::reservoir::{ReservoirConfig, DEFAULT_WASHOUT};
use crate::tasks::{mackey_glass_task, MackeyGlass, TargetScaling, TaskSpec};
use crate::theory::linear_regression;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum FitParams {
    /// `plateau + amplitude * exp(-k / tau)`.
    ExpDecay { plateau: f64, amplitude: f64, tau: f64 },
    /// `prefactor * N^exponent`.
    PowerLaw { prefactor: f64, exponent: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: FitParams,
    pub r_squared: f64,
    pub residual_std: f64,
    /// The data carried no signal to fit (e.g. a flat curve).
    pub degenerate: bool,
}

impl FitResult {
    pub fn exponent(&self) -> Option<f64> {
        match self.params {
            FitParams::PowerLaw { exponent, .. } => Some(exponent),
            FitParams::ExpDecay { .. } => None,
        }
    }

    /// Decay rate `1 / tau` of an exponential fit.
    pub fn rate(&self) -> Option<f64> {
        match self.params {
            FitParams::ExpDecay { tau, .. } => Some(1.0 / tau),
            FitParams::PowerLaw { .. } => None,
        }
    }
}

fn r_squared(y: &[f64], fitted: impl Iterator<Item = f64>) -> (f64, f64) {
    let (my, _) = mean_std(y);
    let ss_tot: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let ss_res: f64 = y.iter().zip(fitted).map(|(v, f)| (v - f).powi(2)).sum();
    let r2 = if ss_tot > 0.0 { (1.0 - ss_res / ss_tot).clamp(0.0, 1.0) } else { 0.0 };
    (r2, (ss_res / y.len() as f64).sqrt())
}

fn exp_sse(curve: &[f64], p: &Vector3<f64>) -> f64 {
    curve
        .iter()
        .enumerate()
        .map(|(k, v)| (v - p[0] - p[1] * (-p[2] * k as f64).exp()).powi(2))
        .sum()
}

/// Fits `plateau + amplitude * exp(-k / tau)` to a mean error curve.
///
/// The plateau starts at the mean of the last 5% of the curve; amplitude
/// and rate come from a weighted linear fit of `log(curve - plateau)`, and
/// all three are then refined by damped Gauss-Newton on the raw residuals.
pub fn fit_exponential(curve: &[f64]) -> Result<FitResult> {
    if curve.len() < 10 {
        return Err(Error::InvalidParameter(format!(
            "exponential fit needs at least 10 points, got {}",
            curve.len()
        )));
    }
    if curve.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("convergence curve"));
    }
    let (lo, hi) = curve
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    if hi - lo <= 1e-12 * hi.abs().max(lo.abs()) {
        return Ok(FitResult {
            params: FitParams::ExpDecay {
                plateau: curve[0],
                amplitude: 0.0,
                tau: f64::NAN,
            },
            r_squared: 0.0,
            residual_std: 0.0,
            degenerate: true,
        });
    }

    let tail = (curve.len() as f64 * 0.05).ceil() as usize;
    let plateau = curve[curve.len() - tail..].iter().sum::<f64>() / tail as f64;

    // Weighted least squares on the log residual, weights (curve - plateau)^2.
    let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (k, v) in curve.iter().enumerate() {
        let d = v - plateau;
        if d <= 0.0 {
            continue;
        }
        let (w, x, y) = (d * d, k as f64, d.ln());
        sw += w;
        sx += w * x;
        sy += w * y;
        sxx += w * x * x;
        sxy += w * x * y;
    }
    let denom = sw * sxx - sx * sx;
    let (amp0, rate0) = if sw > 0.0 && denom > 0.0 {
        let slope = (sw * sxy - sx * sy) / denom;
        let intercept = (sy - slope * sx) / sw;
        (intercept.exp(), (-slope).max(1e-12))
    } else {
        (curve[0] - plateau, 1.0 / curve.len() as f64)
    };

    let mut p = Vector3::new(plateau, amp0, rate0);
    let mut sse = exp_sse(curve, &p);
    let mut damping = 1e-3;
    for _ in 0..100 {
        let mut jtj = Matrix3::<f64>::zeros();
        let mut jtr = Vector3::<f64>::zeros();
        for (k, v) in curve.iter().enumerate() {
            let k = k as f64;
            let e = (-p[2] * k).exp();
            let j = Vector3::new(1.0, e, -p[1] * k * e);
            let r = v - p[0] - p[1] * e;
            jtj += j * j.transpose();
            jtr += j * r;
        }
        let mut improved = false;
        for _ in 0..20 {
            let mut a = jtj;
            for i in 0..3 {
                a[(i, i)] *= 1.0 + damping;
            }
            let Some(delta) = a.lu().solve(&jtr) else {
                damping *= 10.0;
                continue;
            };
            let cand = p + delta;
            let cand_sse = if cand[2] > 0.0 { exp_sse(curve, &cand) } else { f64::INFINITY };
            if cand_sse < sse {
                let rel = (sse - cand_sse) / sse.max(f64::MIN_POSITIVE);
                p = cand;
                sse = cand_sse;
                damping = (damping / 10.0).max(1e-12);
                improved = rel > 1e-15;
                break;
            }
            damping *= 10.0;
        }
        if !improved {
            break;
        }
    }

    let (r2, resid) = r_squared(
        curve,
        (0..curve.len()).map(|k| p[0] + p[1] * (-p[2] * k as f64).exp()),
    );
    Ok(FitResult {
        params: FitParams::ExpDecay {
            plateau: p[0],
            amplitude: p[1],
            tau: 1.0 / p[2],
        },
        r_squared: r2,
        residual_std: resid,
        degenerate: false,
    })
}

/// Log-log least squares `K = prefactor * N^exponent`.
pub fn fit_power_law(sizes: &[usize], k_means: &[f64]) -> Result<FitResult> {
    crate::error::check_dim("power-law points", sizes.len(), k_means.len())?;
    if sizes.len() < 3 {
        return Err(Error::DegenerateRegression(format!(
            "power-law fit needs at least 3 points, got {}",
            sizes.len()
        )));
    }
    if let Some(k) = k_means.iter().find(|k| !(**k > 0.0)) {
        return Err(Error::InvalidParameter(format!("K must be positive, got {k}")));
    }
    if sizes.contains(&0) {
        return Err(Error::InvalidParameter("sizes must be positive".into()));
    }
    let lx: Vec<f64> = sizes.iter().map(|&n| (n as f64).ln()).collect();
    let ly: Vec<f64> = k_means.iter().map(|k| k.ln()).collect();
    let (exponent, intercept, _, r2) = linear_regression(&lx, &ly)?;
    let resid = (lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - intercept - exponent * x).powi(2))
        .sum::<f64>()
        / lx.len() as f64)
        .sqrt();
    Ok(FitResult {
        params: FitParams::PowerLaw {
            prefactor: intercept.exp(),
            exponent,
        },
        r_squared: r2,
        residual_std: resid,
        degenerate: false,
    })
}

/// Reservoir and signal settings shared by every sweep cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskConfig {
    pub t_train: usize,
    pub t_test: usize,
    pub washout: usize,
    pub scaling: TargetScaling,
    pub target_amplitude: f64,
    /// Template for the reservoir; `n_nodes` and `seed` are set per cell.
    pub reservoir: ReservoirConfig,
    pub mackey_glass: MackeyGlass,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            t_train: 1000,
            t_test: 500,
            washout: DEFAULT_WASHOUT,
            scaling: TargetScaling::ReadoutMatched,
            target_amplitude: crate::tasks::DEFAULT_TARGET_AMPLITUDE,
            reservoir: ReservoirConfig::default(),
            mackey_glass: MackeyGlass::default(),
        }
    }
}

impl TaskConfig {
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
#[serde(default)]
pub struct SweepConfig {
    pub sizes: Vec<usize>,
    pub minimizers_per_size: usize,
    pub policies: Vec<PolicyKind>,
    pub task: TaskConfig,
    /// Training error at which a run stops early.
    pub epsilon: f64,
    pub max_epochs: usize,
    pub seed_base: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            sizes: vec![64, 128, 256, 512, 961],
            minimizers_per_size: 8,
            policies: vec![PolicyKind::Greedy, PolicyKind::Markovian],
            task: TaskConfig::default(),
            epsilon: 0.0,
            max_epochs: 1_000_000,
            seed_base: 0,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() {
            return Err(Error::InvalidParameter("sweep needs at least one size".into()));
        }
        if self.sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter("sweep sizes must be strictly increasing".into()));
        }
        if self.sizes[0] == 0 {
            return Err(Error::InvalidParameter("sweep sizes must be positive".into()));
        }
        if self.minimizers_per_size == 0 {
            return Err(Error::InvalidParameter("minimizers_per_size must be >= 1".into()));
        }
        if self.policies.is_empty() {
            return Err(Error::InvalidParameter("sweep needs at least one policy".into()));
        }
        Ok(())
    }
}

/// SplitMix64 mix of a base seed with a path of integers.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mix = |mut z: u64| {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    };
    parts.iter().fold(mix(base), |acc, &p| mix(acc ^ mix(p)))
}

fn policy_code(kind: PolicyKind) -> u64 {
    match kind {
        PolicyKind::Markovian => 1,
        PolicyKind::Greedy => 2,
    }
}

/// The Mackey-Glass task of the sweep cell at `size`.
pub fn cell_task(task: &TaskConfig, size: usize, seed_base: u64) -> Result<crate::tasks::TaskData> {
    let reservoir = ReservoirConfig {
        n_nodes: size,
        seed: derive_seed(seed_base, &[size as u64, 1]),
        ..task.reservoir.clone()
    };
    mackey_glass_task(
        &reservoir,
        &task.mackey_glass,
        &task.spec(),
        derive_seed(seed_base, &[size as u64, 2]),
    )
}

/// The starting weights shared by every descent at `size`.
pub fn cell_start(size: usize, seed_base: u64) -> BooleanWeights {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed_base, &[size as u64, 4]));
    BooleanWeights::random(size, &mut rng)
}

/// Selector seeds of the minimizers in one cell.
pub fn minimizer_seeds(seed_base: u64, size: usize, policy: PolicyKind, count: usize) -> Vec<u64> {
    (0..count)
        .map(|i| derive_seed(seed_base, &[size as u64, policy_code(policy), i as u64, 3]))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimizerRow {
    pub size: usize,
    pub policy: PolicyKind,
    pub minimizer: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub total_epochs: usize,
    pub final_train_error: f64,
    pub final_test_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub size: usize,
    pub policy: PolicyKind,
    pub k_mean: f64,
    pub k_std: f64,
    pub final_error_mean: f64,
    pub final_error_std: f64,
    pub final_test_error_mean: Option<f64>,
    pub final_test_error_std: Option<f64>,
    /// Shared starting error of the ensemble.
    pub initial_error: f64,
    pub rows: Vec<MinimizerRow>,
    pub mean_curve: Vec<f64>,
    pub std_curve: Vec<f64>,
    pub curve_fit: Option<FitResult>,
    pub converged_reason: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub size: usize,
    pub policy: PolicyKind,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub cells: Vec<CellReport>,
    pub failures: Vec<CellFailure>,
    /// `K_mean` against `N`, per policy (only with three or more sizes).
    pub scaling: BTreeMap<PolicyKind, FitResult>,
}

impl SweepReport {
    pub fn cell(&self, size: usize, policy: PolicyKind) -> Option<&CellReport> {
        self.cells.iter().find(|c| c.size == size && c.policy == policy)
    }

    /// `K_mean(markovian) / K_mean(greedy)` at `size`.
    pub fn speedup(&self, size: usize) -> Option<f64> {
        let m = self.cell(size, PolicyKind::Markovian)?;
        let g = self.cell(size, PolicyKind::Greedy)?;
        Some(m.k_mean / g.k_mean)
    }
}

fn run_cell(
    cfg: &SweepConfig,
    size: usize,
    policy: PolicyKind,
    task: &crate::tasks::TaskData,
    w0: &BooleanWeights,
) -> Result<CellReport> {
    let train = task.train_objective()?;
    let test = task.test_objective(&train)?;
    let seeds = minimizer_seeds(cfg.seed_base, size, policy, cfg.minimizers_per_size);
    let dcfg = DescentConfig {
        policy: SelectorPolicy {
            kind: policy,
            rng_seed: 0,
        },
        max_epochs: cfg.max_epochs,
        target_error: cfg.epsilon,
        stop_on_local_min: true,
        record_test_error: test.is_some(),
    };
    let ens = descent::run_ensemble_monitored(
        &train,
        test.as_ref(),
        w0,
        &dcfg,
        cfg.minimizers_per_size,
        &seeds,
    )?;
    let rows: Vec<MinimizerRow> = ens
        .traces
        .iter()
        .enumerate()
        .map(|(i, t)| MinimizerRow {
            size,
            policy,
            minimizer: i,
            k: t.epochs_to_converge,
            total_epochs: t.total_epochs,
            final_train_error: t.final_error(),
            final_test_error: t.final_test_error(),
        })
        .collect();
    let finals: Vec<f64> = rows.iter().map(|r| r.final_train_error).collect();
    let (fm, fs) = mean_std(&finals);
    let tests: Vec<f64> = rows.iter().filter_map(|r| r.final_test_error).collect();
    let (tm, ts) = if tests.len() == rows.len() {
        let (m, s) = mean_std(&tests);
        (Some(m), Some(s))
    } else {
        (None, None)
    };
    let curve_fit = if ens.summary.mean_error.len() >= 10 {
        Some(fit_exponential(&ens.summary.mean_error)?)
    } else {
        None
    };
    Ok(CellReport {
        size,
        policy,
        k_mean: ens.summary.k_mean,
        k_std: ens.summary.k_std,
        final_error_mean: fm,
        final_error_std: fs,
        final_test_error_mean: tm,
        final_test_error_std: ts,
        initial_error: ens.summary.mean_error[0],
        rows,
        mean_curve: ens.summary.mean_error,
        std_curve: ens.summary.std_error,
        curve_fit,
        converged_reason: ens.summary.converged_reason,
    })
}

/// Runs every `(size, policy)` cell and fits `K` against `N`.
///
/// A cell that fails is recorded in `failures` and the sweep continues.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepReport> {
    cfg.validate()?;
    let per_size: Vec<Vec<std::result::Result<CellReport, CellFailure>>> = cfg
        .sizes
        .par_iter()
        .map(|&size| {
            let task = cell_task(&cfg.task, size, cfg.seed_base);
            let w0 = cell_start(size, cfg.seed_base);
            cfg.policies
                .iter()
                .map(|&policy| {
                    task.as_ref()
                        .map_err(|e| e.to_string())
                        .and_then(|t| run_cell(cfg, size, policy, t, &w0).map_err(|e| e.to_string()))
                        .map_err(|error| CellFailure {
                            size,
                            policy,
                            error,
                        })
                })
                .collect()
        })
        .collect();

    let mut cells = Vec::new();
    let mut failures = Vec::new();
    for r in per_size.into_iter().flatten() {
        match r {
            Ok(c) => cells.push(c),
            Err(f) => failures.push(f),
        }
    }

    let mut scaling = BTreeMap::new();
    if cfg.sizes.len() >= 3 {
        for &policy in &cfg.policies {
            let pts: Vec<(usize, f64)> = cells
                .iter()
                .filter(|c| c.policy == policy)
                .map(|c| (c.size, c.k_mean))
                .collect();
            if pts.len() >= 3 && pts.iter().all(|p| p.1 > 0.0) {
                let (s, k): (Vec<usize>, Vec<f64>) = pts.into_iter().unzip();
                scaling.insert(policy, fit_power_law(&s, &k)?);
            }
        }
    }
    Ok(SweepReport {
        cells,
        failures,
        scaling,
    })
}

fn opt_str(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes `sweep.csv`, `curves/<size>_<policy>.csv` and `fits.json`.
pub fn write_sweep(dir: &Path, report: &SweepReport) -> Result<()> {
    fs::create_dir_all(dir.join("curves"))?;
    let mut w = BufWriter::new(fs::File::create(dir.join("sweep.csv"))?);
    writeln!(w, "size,policy,minimizer,K,final_train_error,final_test_error")?;
    for c in &report.cells {
        for r in &c.rows {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.size,
                r.policy,
                r.minimizer,
                r.k,
                r.final_train_error,
                opt_str(r.final_test_error)
            )?;
        }
    }
    w.flush()?;
    for c in &report.cells {
        let f = fs::File::create(dir.join("curves").join(format!("{}_{}.csv", c.size, c.policy)))?;
        let mut w = BufWriter::new(f);
        crate::io::write_curve_csv(&mut w, &c.mean_curve, &c.std_curve)?;
        w.flush()?;
    }
    fs::write(
        dir.join("fits.json"),
        serde_json::to_string_pretty(&fits_json(report))? + "\n",
    )?;
    Ok(())
}

/// Content of `fits.json`.
pub fn fits_json(report: &SweepReport) -> serde_json::Value {
    let scaling: BTreeMap<String, &FitResult> = report
        .scaling
        .iter()
        .map(|(p, f)| (p.to_string(), f))
        .collect();
    let curves: BTreeMap<String, serde_json::Value> = report
        .cells
        .iter()
        .map(|c| {
            (
                format!("{}_{}", c.size, c.policy),
                serde_json::json!({
                    "fit": c.curve_fit,
                    "K_mean": c.k_mean,
                    "K_std": c.k_std,
                    "final_train_error_mean": c.final_error_mean,
                    "final_train_error_std": c.final_error_std,
                    "final_test_error_mean": c.final_test_error_mean,
                    "final_test_error_std": c.final_test_error_std,
                    "converged_reason": c.converged_reason,
                }),
            )
        })
        .collect();
    let mut sizes: Vec<usize> = report.cells.iter().map(|c| c.size).collect();
    sizes.dedup();
    let speedup: BTreeMap<String, f64> = sizes
        .iter()
        .filter_map(|&s| report.speedup(s).map(|r| (s.to_string(), r)))
        .collect();
    serde_json::json!({
        "scaling": scaling,
        "curves": curves,
        "speedup_markovian_over_greedy": speedup,
        "failures": report.failures,
        "curve_padding": "stopped traces carry their final error forward",
    })
}
