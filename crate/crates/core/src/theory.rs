//! Contraction constants and exhaustive checks on small instances.
//!
//! Everything here enumerates the whole hypercube, so instances are capped
//! at [`MAX_ENUM_N`] nodes (and [`MAX_KAPPA_N`] for the quadratic-cost
//! `kappa` search).
//!
//! Notation: `g = grad phi(x)`, `lambda = lambda_max(E^t E)`,
//! `y = x - g / lambda`, `P` the rounding onto `{-1, 1}^N`, and `pi` the
//! coordinate selection distribution. `kappa` is one minus the largest
//!
//! ```text
//! |D(sqrt pi) (P(y) - y)| / |D(sqrt pi) (x' - y)|
//! ```
//!
//! over hypercube points `x`, candidates `x' != P(x)` (or `x' != P(y)` for
//! the variant reading), and distributions `pi`. The squared ratio is
//! linear-fractional in `pi`, so its maximum over the simplex sits on a
//! vertex and reduces to a per-coordinate maximum.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::descent::{self, DescentConfig, PolicyKind, SelectorPolicy};
use crate::error::{Error, Result};
use crate::linalg::{self, dot, norm_sq};
use crate::objective::{round_to_hypercube, BooleanWeights, Objective, SpinVector};
use crate::reservoir::EntryDistribution;

/// Largest `N` for which the hypercube is enumerated.
pub const MAX_ENUM_N: usize = 16;
/// Largest `T` accepted for a [`SmallInstance`].
pub const MAX_ENUM_T: usize = 32;
/// Largest `N` for the `kappa` search (`4^N * N` work).
pub const MAX_KAPPA_N: usize = 12;

/// An objective small enough to enumerate, with `phi` cached for every
/// hypercube point. Point `x` is indexed by the mask of its `+1` entries.
#[derive(Debug, Clone)]
pub struct SmallInstance {
    objective: Objective,
    phi: Vec<f64>,
}

impl SmallInstance {
    pub fn new(objective: Objective) -> Result<Self> {
        let n = objective.n();
        if n > MAX_ENUM_N {
            return Err(Error::SizeBound { n, max: MAX_ENUM_N });
        }
        if objective.horizon() > MAX_ENUM_T {
            return Err(Error::InvalidParameter(format!(
                "horizon {} exceeds the enumeration bound {MAX_ENUM_T}",
                objective.horizon()
            )));
        }
        let phi = (0..1u64 << n)
            .into_par_iter()
            .map(|m| objective.phi_spin(&SpinVector::from_mask(m, n)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { objective, phi })
    }

    pub fn objective(&self) -> &Objective {
        &self.objective
    }

    pub fn n(&self) -> usize {
        self.objective.n()
    }

    /// Cached `phi` at the point with mask `mask`.
    pub fn phi(&self, mask: u64) -> f64 {
        self.phi[mask as usize]
    }

    pub fn phi_values(&self) -> &[f64] {
        &self.phi
    }

    pub fn global_minimum(&self) -> (u64, f64) {
        self.phi
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |(bm, bv), (m, &v)| {
                if v < bv {
                    (m as u64, v)
                } else {
                    (bm, bv)
                }
            })
    }

    /// Whether no single flip of `mask` strictly lowers `phi`.
    pub fn is_local_minimizer(&self, mask: u64) -> bool {
        let v = self.phi(mask);
        (0..self.n()).all(|i| self.phi(mask ^ 1 << i) >= v)
    }
}

/// A random `T x N` instance: uniform `[0, 1)` states and the target
/// `E u` for a uniform weight vector `u` in the unit box, which no
/// Boolean readout matches exactly.
pub fn random_instance(n: usize, t: usize, seed: u64) -> Result<SmallInstance> {
    let state = crate::reservoir::random_state_matrix(n, t, EntryDistribution::Uniform01, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5_A5A5_A5A5_A5A5);
    let u: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let target = (0..t).map(|r| dot(state.row(r), &u)).collect();
    SmallInstance::new(Objective::new(state, target)?)
}

/// Every local coordinatewise minimizer of the instance, ordered by mask.
pub fn local_minimizers(inst: &SmallInstance) -> Vec<SpinVector> {
    let n = inst.n();
    (0..1u64 << n)
        .filter(|&m| inst.is_local_minimizer(m))
        .map(|m| SpinVector::from_mask(m, n))
        .collect()
}

/// How the inner maximization over selection distributions is done.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimplexMode {
    /// Exact maximum over the whole simplex (attained at a vertex).
    ExactVertex,
    /// Uniform distribution only.
    UniformOnly,
}

/// Which point the candidate `x'` must differ from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Exclusion {
    /// `x' != P(x)`.
    RoundedPoint,
    /// `x' != P(x - grad / lambda)`.
    RoundedStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaReport {
    /// `kappa` clamped to `[0, 1]`.
    pub kappa: f64,
    /// The largest ratio found; `kappa = 1 - max_ratio` before clamping.
    pub max_ratio: f64,
    pub degenerate: bool,
    /// Same quantities with the candidate excluded from `P(x - grad/lambda)`.
    pub kappa_variant: f64,
    pub max_ratio_variant: f64,
    pub variant_degenerate: bool,
    pub mode: SimplexMode,
    pub lambda: f64,
}

/// Per-coordinate ratio `max_i |num_i| / |den_i|` (the vertex maximum).
///
/// Coordinates with `den_i = 0` give `+inf` when `num_i != 0` and are
/// skipped when both vanish.
pub fn vertex_ratio(num: &[f64], den: &[f64]) -> f64 {
    num.iter()
        .zip(den)
        .filter_map(|(&a, &b)| match (a == 0.0, b == 0.0) {
            (true, true) => None,
            (false, true) => Some(f64::INFINITY),
            _ => Some(a.abs() / b.abs()),
        })
        .fold(0.0, f64::max)
}

/// `|num| / |den|` (the ratio under the uniform distribution).
pub fn uniform_ratio(num: &[f64], den: &[f64]) -> f64 {
    let a = norm_sq(num);
    let b = norm_sq(den);
    match (a == 0.0, b == 0.0) {
        (true, _) => 0.0,
        (false, true) => f64::INFINITY,
        _ => (a / b).sqrt(),
    }
}

/// `|D(sqrt pi) num| / |D(sqrt pi) den|` for an explicit distribution.
pub fn weighted_ratio(num: &[f64], den: &[f64], pi: &[f64]) -> f64 {
    let a: f64 = num.iter().zip(pi).map(|(v, p)| p * v * v).sum();
    let b: f64 = den.iter().zip(pi).map(|(v, p)| p * v * v).sum();
    match (a == 0.0, b == 0.0) {
        (true, _) => 0.0,
        (false, true) => f64::INFINITY,
        _ => (a / b).sqrt(),
    }
}

fn max_ratio(inst: &SmallInstance, lambda: f64, mode: SimplexMode, excl: Exclusion) -> Result<f64> {
    let n = inst.n();
    let obj = inst.objective();
    let ratios = (0..1u64 << n)
        .into_par_iter()
        .map(|mask| -> Result<f64> {
            let x = SpinVector::from_mask(mask, n).to_f64();
            let g = obj.grad_phi(&x)?;
            let y: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - gi / lambda).collect();
            let p = round_to_hypercube(&y);
            let num: Vec<f64> = p.to_f64().iter().zip(&y).map(|(pi, yi)| pi - yi).collect();
            let excluded = match excl {
                Exclusion::RoundedPoint => round_to_hypercube(&x).to_mask(),
                Exclusion::RoundedStep => p.to_mask(),
            };
            let mut den = vec![0.0; n];
            let mut best = 0.0f64;
            for cand in (0..1u64 << n).filter(|&c| c != excluded) {
                for (i, d) in den.iter_mut().enumerate() {
                    let xi = if cand >> i & 1 == 1 { 1.0 } else { -1.0 };
                    *d = xi - y[i];
                }
                let r = match mode {
                    SimplexMode::ExactVertex => vertex_ratio(&num, &den),
                    SimplexMode::UniformOnly => uniform_ratio(&num, &den),
                };
                best = best.max(r);
            }
            Ok(best)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ratios.into_iter().fold(0.0, f64::max))
}

/// Computes `kappa` under both readings of the candidate constraint.
pub fn kappa(inst: &SmallInstance, mode: SimplexMode) -> Result<KappaReport> {
    let n = inst.n();
    if n > MAX_KAPPA_N {
        return Err(Error::SizeBound { n, max: MAX_KAPPA_N });
    }
    let lambda = inst.objective().lambda().gram;
    if lambda <= 0.0 {
        return Err(Error::InvalidParameter("lambda must be positive".into()));
    }
    let r = max_ratio(inst, lambda, mode, Exclusion::RoundedPoint)?;
    let rv = max_ratio(inst, lambda, mode, Exclusion::RoundedStep)?;
    let clamp = |r: f64| (1.0 - r).clamp(0.0, 1.0);
    Ok(KappaReport {
        kappa: clamp(r),
        max_ratio: r,
        degenerate: 1.0 - r <= 0.0,
        kappa_variant: clamp(rv),
        max_ratio_variant: rv,
        variant_degenerate: 1.0 - rv <= 0.0,
        mode,
        lambda,
    })
}

/// Inputs of the contraction factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContractionInputs {
    pub kappa: Option<f64>,
    /// `lambda_max(E^t E)`.
    pub lambda: f64,
    pub eta: f64,
    /// Largest selection probability `|pi|_inf`.
    pub pi_inf: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhoReport {
    pub rho: f64,
    /// `rho` outside `(0, 1)`: the bound says nothing about contraction.
    pub vacuous: bool,
    /// `kappa = 0`, which forces `rho = 0`.
    pub degenerate: bool,
}

/// `rho = kappa (1 - |pi|_inf (lambda (1 - kappa) / eta) (eta / (2N) - 1))`.
pub fn rho(inputs: &ContractionInputs) -> Result<RhoReport> {
    let kappa = inputs
        .kappa
        .ok_or_else(|| Error::InvalidParameter("rho needs kappa".into()))?;
    let ContractionInputs {
        lambda, eta, pi_inf, n, ..
    } = *inputs;
    let n = n as f64;
    let spread = lambda * (1.0 - kappa);
    let ratio = if spread == 0.0 { 0.0 } else { spread / eta };
    let rho = kappa * (1.0 - pi_inf * ratio * (eta / (2.0 * n) - 1.0));
    Ok(RhoReport {
        rho,
        vacuous: !(rho > 0.0 && rho < 1.0),
        degenerate: kappa == 0.0,
    })
}

/// Estimate of the largest selection probability of a policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PiEstimate {
    pub pi_inf: f64,
    pub std_error: f64,
}

/// Per-coordinate selection frequencies of a policy over `epochs` draws.
pub fn selection_frequencies(policy: SelectorPolicy, n: usize, epochs: usize) -> Result<Vec<f64>> {
    let mut sel = policy.selector(n);
    let mut counts = vec![0usize; n];
    for _ in 0..epochs {
        counts[sel.select()?] += 1;
    }
    Ok(counts.iter().map(|&c| c as f64 / epochs as f64).collect())
}

/// `|pi|_inf` for a policy: exactly `1/N` for the uniform selector, and
/// the largest empirical selection frequency over a calibration run
/// otherwise (with its binomial standard error).
pub fn pi_inf(policy: SelectorPolicy, n: usize, calibration_epochs: usize) -> Result<PiEstimate> {
    match policy.kind {
        PolicyKind::Markovian => Ok(PiEstimate {
            pi_inf: 1.0 / n as f64,
            std_error: 0.0,
        }),
        PolicyKind::Greedy => {
            let freq = selection_frequencies(policy, n, calibration_epochs)?;
            let p = freq.iter().copied().fold(0.0, f64::max);
            Ok(PiEstimate {
                pi_inf: p,
                std_error: (p * (1.0 - p) / calibration_epochs as f64).sqrt(),
            })
        }
    }
}

/// `E[phi(next) | x]` for one accept/reject step from `mask` under the
/// selection distribution `pi`.
pub fn expected_next_phi(inst: &SmallInstance, mask: u64, pi: &[f64]) -> f64 {
    let v = inst.phi(mask);
    pi.iter()
        .enumerate()
        .map(|(i, p)| {
            let f = inst.phi(mask ^ 1 << i);
            p * if f < v { f } else { v }
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub rho: RhoReport,
    /// Largest `(E[phi(next)] - phi(xbar)) / (phi(x) - phi(xbar))` over
    /// visited states with `phi(x) > phi(xbar)`; `None` if there were none.
    pub worst_ratio: Option<f64>,
    pub steps_checked: usize,
    pub violations: usize,
    pub fraction_satisfied: f64,
}

/// Checks the one-step contraction inequality along `n_trials` descents.
///
/// The expectation over the next coordinate is computed exactly. Each run
/// is compared against its own terminal point `xbar`; states with no gap to
/// `xbar` are excluded.
pub fn verify_contraction(
    inst: &SmallInstance,
    policy: SelectorPolicy,
    pi: &[f64],
    rho: RhoReport,
    n_trials: usize,
    seed: u64,
) -> Result<ContractionReport> {
    let n = inst.n();
    if n > MAX_KAPPA_N {
        return Err(Error::SizeBound { n, max: MAX_KAPPA_N });
    }
    crate::error::check_dim("selection distribution", n, pi.len())?;
    let obj = inst.objective();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: Option<f64> = None;
    let mut checked = 0;
    let mut violations = 0;
    for _ in 0..n_trials {
        let w0 = BooleanWeights::random(n, &mut rng);
        let cfg = DescentConfig::new(policy.with_seed(rng.random()));
        let trace = descent::run_descent(obj, &w0, &cfg)?;
        let bar = inst.phi(trace.final_weights.to_mask());
        let mut w = w0.clone();
        let mut visited = Vec::with_capacity(trace.records.len());
        visited.push(w.to_mask());
        for r in &trace.records {
            if r.reward == 1 {
                w.flip(r.flipped_index);
            }
            visited.push(w.to_mask());
        }
        // The state after the last epoch is not followed by a step.
        visited.pop();
        for mask in visited {
            let gap = inst.phi(mask) - bar;
            if gap <= 0.0 {
                continue;
            }
            let next_gap = expected_next_phi(inst, mask, pi) - bar;
            let ratio = next_gap / gap;
            worst = Some(worst.map_or(ratio, |w: f64| w.max(ratio)));
            checked += 1;
            if next_gap > rho.rho * gap {
                violations += 1;
            }
        }
    }
    Ok(ContractionReport {
        rho,
        worst_ratio: worst,
        steps_checked: checked,
        violations,
        fraction_satisfied: if checked == 0 {
            1.0
        } else {
            (checked - violations) as f64 / checked as f64
        },
    })
}

/// Outcome counts for the intermediate inequalities of the convergence
/// argument, checked at random hypercube points.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct InequalityChecks {
    pub states: usize,
    /// `phi(z) <= phi(x) + <g, z - x> + lambda/2 |z - x|^2` for every
    /// single-flip neighbor `z`.
    pub descent_lemma_violations: usize,
    /// `<xbar - x, D(pi) g> <= phi(xbar) - phi(x) - eta/2 |D(pi)(xbar - x)|^2`,
    /// taken as written. Observational only.
    pub weighted_strong_convexity_violations: usize,
    /// Exact expectation against a sum over explicit accept/reject steps.
    pub expectation_mismatches: usize,
}

pub fn inequality_checks(
    inst: &SmallInstance,
    pi: &[f64],
    n_states: usize,
    seed: u64,
) -> Result<InequalityChecks> {
    let n = inst.n();
    crate::error::check_dim("selection distribution", n, pi.len())?;
    let obj = inst.objective();
    let lambda = obj.lambda().gram;
    let eta = obj.eta();
    let shift = eta * n as f64 / 2.0;
    let t = obj.horizon() as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = InequalityChecks::default();
    for _ in 0..n_states {
        let mask = rng.random_range(0..1u64 << n);
        let x = SpinVector::from_mask(mask, n).to_f64();
        let g = obj.grad_phi(&x)?;
        let fx = inst.phi(mask);
        out.states += 1;

        for i in 0..n {
            // z - x is -2 x_i in coordinate i.
            let step = -2.0 * x[i];
            let bound = fx + g[i] * step + 0.5 * lambda * step * step;
            let fz = inst.phi(mask ^ 1 << i);
            if fz > bound + 1e-9 * bound.abs().max(1.0) {
                out.descent_lemma_violations += 1;
            }
        }

        let cfg = DescentConfig::new(SelectorPolicy::markovian(rng.random()));
        let w = SpinVector::from_mask(mask, n).to_weights();
        let bar_mask = descent::run_descent(obj, &w, &cfg)?.final_weights.to_mask();
        let xbar = SpinVector::from_mask(bar_mask, n).to_f64();
        let diff: Vec<f64> = xbar.iter().zip(&x).map(|(a, b)| a - b).collect();
        let lhs: f64 = diff.iter().zip(&g).zip(pi).map(|((d, gi), p)| d * p * gi).sum();
        let weighted: f64 = diff.iter().zip(pi).map(|(d, p)| (p * d).powi(2)).sum();
        let rhs = inst.phi(bar_mask) - fx - 0.5 * eta * weighted;
        if lhs > rhs + 1e-9 * rhs.abs().max(1.0) {
            out.weighted_strong_convexity_violations += 1;
        }

        let exact = expected_next_phi(inst, mask, pi);
        let mut via_steps = 0.0;
        for (i, p) in pi.iter().enumerate() {
            let o = descent::step(obj, &w, i)?;
            via_steps += p * (t * o.error + shift);
        }
        if (exact - via_steps).abs() > 1e-9 * exact.abs().max(1.0) {
            out.expectation_mismatches += 1;
        }
    }
    Ok(out)
}

/// Whether matrices are centered before taking the spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Centering {
    /// Use the matrix as drawn.
    Raw,
    /// Subtract the sample mean of all entries.
    GrandMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaEstimate {
    pub beta: f64,
    /// 95% confidence interval from the regression's t statistic.
    pub ci: (f64, f64),
    pub r_squared: f64,
    /// `(N, median lambda_max)` per size.
    pub medians: Vec<(usize, f64)>,
}

/// Least-squares line through `(x, y)`: slope, intercept, slope standard
/// error, and R^2.
pub fn linear_regression(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64, f64)> {
    let k = x.len();
    if k < 2 || y.len() != k {
        return Err(Error::DegenerateRegression(format!(
            "need at least two paired points, got {k}"
        )));
    }
    let kf = k as f64;
    let mx = x.iter().sum::<f64>() / kf;
    let my = y.iter().sum::<f64>() / kf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateRegression("abscissae are all equal".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let ss_tot: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { (1.0 - ss_res / ss_tot).max(0.0) };
    let se = if k > 2 {
        (ss_res / (kf - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    Ok((slope, intercept, se, r2))
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        0.5 * (xs[m - 1] + xs[m])
    }
}

/// Largest eigenvalue of `M^t M` for a `t x n` row-major sample, optionally
/// after subtracting the grand mean.
pub fn sample_lambda(mut data: Vec<f64>, t: usize, n: usize, centering: Centering) -> Result<f64> {
    if centering == Centering::GrandMean {
        let mean = data.iter().sum::<f64>() / data.len() as f64;
        data.iter_mut().for_each(|v| *v -= mean);
    }
    linalg::gram_lambda_max(&data, t, n, linalg::POWER_TOL, linalg::POWER_MAX_ITER)
}

/// Spectral growth exponent from an arbitrary matrix source.
///
/// `sample(n, trial)` returns a row-major `n x n` matrix (`T = N`).
pub fn estimate_beta_with<F>(
    sizes: &[usize],
    trials: usize,
    centering: Centering,
    sample: F,
) -> Result<BetaEstimate>
where
    F: Fn(usize, usize) -> Vec<f64> + Sync,
{
    if sizes.len() < 3 {
        return Err(Error::DegenerateRegression(format!(
            "need at least 3 sizes, got {}",
            sizes.len()
        )));
    }
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be >= 1".into()));
    }
    let medians = sizes
        .iter()
        .map(|&n| {
            let mut lambdas = (0..trials)
                .into_par_iter()
                .map(|trial| sample_lambda(sample(n, trial), n, n, centering))
                .collect::<Result<Vec<_>>>()?;
            Ok((n, median(&mut lambdas)))
        })
        .collect::<Result<Vec<_>>>()?;
    if medians.iter().any(|&(_, l)| !(l > 0.0)) {
        return Err(Error::DegenerateRegression(
            "a median eigenvalue is not positive".into(),
        ));
    }
    let lx: Vec<f64> = medians.iter().map(|&(n, _)| (n as f64).ln()).collect();
    let ly: Vec<f64> = medians.iter().map(|&(_, l)| l.ln()).collect();
    let (beta, _, se, r_squared) = linear_regression(&lx, &ly)?;
    let dof = (medians.len() - 2) as f64;
    let tq = StudentsT::new(0.0, 1.0, dof)
        .map_err(|e| Error::DegenerateRegression(e.to_string()))?
        .inverse_cdf(0.975);
    Ok(BetaEstimate {
        beta,
        ci: (beta - tq * se, beta + tq * se),
        r_squared,
        medians,
    })
}

/// Slope of `log median lambda_max` against `log N` for i.i.d. `N x N`
/// matrices from `distribution`.
pub fn estimate_beta(
    sizes: &[usize],
    distribution: EntryDistribution,
    trials: usize,
    seed: u64,
    centering: Centering,
) -> Result<BetaEstimate> {
    estimate_beta_with(sizes, trials, centering, |n, trial| {
        let s = seed ^ (n as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (trial as u64) << 32;
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        (0..n * n).map(|_| distribution.sample(&mut rng)).collect()
    })
}

/// `log(1/eps) / log(1/rho)`.
pub fn predicted_epochs(eps: f64, rho: f64) -> Result<f64> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "rho must lie in (0, 1), got {rho}"
        )));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "eps must lie in (0, 1), got {eps}"
        )));
    }
    Ok((1.0 / eps).ln() / (1.0 / rho).ln())
}

/// `log(1/eps) * N^(1 + alpha - beta)`.
pub fn predicted_epochs_scaling(eps: f64, n: usize, alpha: f64, beta: f64) -> f64 {
    (1.0 / eps).ln() * (n as f64).powf(1.0 + alpha - beta)
}

/// Inner product helper exposed for the identity checks in the guide.
pub fn al_kashi_sides(g: &[f64], y: &[f64], t: f64) -> (f64, f64) {
    let lhs = dot(g, y) + 0.5 * t * norm_sq(y);
    let shifted: Vec<f64> = y.iter().zip(g).map(|(yi, gi)| yi + gi / t).collect();
    let rhs = 0.5 * t * norm_sq(&shifted) - norm_sq(g) / (2.0 * t);
    (lhs, rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reservoir::StateMatrix;

    fn instance(rows: &[Vec<f64>], target: Vec<f64>, eta: f64) -> SmallInstance {
        let e = StateMatrix::from_rows(rows).unwrap();
        SmallInstance::new(Objective::with_eta(e, target, eta).unwrap()).unwrap()
    }

    #[test]
    fn identity_instance_has_unique_minimizer() {
        let inst = instance(&[vec![1.0, 0.0], vec![0.0, 1.0]], vec![1.0, 0.0], 0.0);
        let mins = local_minimizers(&inst);
        assert_eq!(mins.len(), 1);
        assert_eq!(mins[0].spins(), &[1, -1]);
    }

    #[test]
    fn global_min_is_local_min() {
        let inst = instance(
            &[vec![1.0, 0.5, 0.2], vec![0.3, 1.0, 0.1], vec![0.2, 0.4, 1.0]],
            vec![0.9, 0.2, 1.1],
            0.01,
        );
        let (m, _) = inst.global_minimum();
        assert!(local_minimizers(&inst).iter().any(|x| x.to_mask() == m));
    }

    #[test]
    fn size_bounds() {
        let e = crate::reservoir::random_state_matrix(17, 4, EntryDistribution::Uniform01, 1).unwrap();
        let obj = Objective::new(e, vec![0.0; 4]).unwrap();
        assert!(matches!(SmallInstance::new(obj), Err(Error::SizeBound { .. })));
        let e = crate::reservoir::random_state_matrix(13, 4, EntryDistribution::Uniform01, 1).unwrap();
        let inst = SmallInstance::new(Objective::new(e, vec![0.0; 4]).unwrap()).unwrap();
        assert!(matches!(
            kappa(&inst, SimplexMode::ExactVertex),
            Err(Error::SizeBound { .. })
        ));
    }

    #[test]
    fn vertex_ratio_edge_cases() {
        assert_eq!(vertex_ratio(&[1.0, 0.0], &[2.0, 0.0]), 0.5);
        assert_eq!(vertex_ratio(&[1.0, 1.0], &[2.0, 0.0]), f64::INFINITY);
        assert_eq!(vertex_ratio(&[0.0], &[0.0]), 0.0);
    }

    #[test]
    fn rho_examples() {
        let base = ContractionInputs {
            kappa: Some(1.0),
            lambda: 3.0,
            eta: 0.1,
            pi_inf: 0.25,
            n: 4,
        };
        let r = rho(&base).unwrap();
        assert_eq!(r.rho, 1.0);
        assert!(r.vacuous);
        let r = rho(&ContractionInputs {
            kappa: Some(0.0),
            ..base
        })
        .unwrap();
        assert_eq!(r.rho, 0.0);
        assert!(r.degenerate && r.vacuous);
        assert!(rho(&ContractionInputs { kappa: None, ..base }).is_err());
    }

    #[test]
    fn predicted_epochs_examples() {
        assert!((predicted_epochs(0.3, 0.3).unwrap() - 1.0).abs() < 1e-12);
        assert!((predicted_epochs(0.09, 0.3).unwrap() - 2.0).abs() < 1e-12);
        let k = predicted_epochs(1e-2, 0.99).unwrap();
        assert!((k - 458.21).abs() < 0.01, "{k}");
        assert!(predicted_epochs(0.1, 1.0).is_err());
        assert!((predicted_epochs_scaling(1.0 / std::f64::consts::E, 100, 1.0, 1.0) - 100.0).abs() < 1e-9);
    }

    #[test]
    fn beta_needs_three_sizes() {
        assert!(estimate_beta(&[10], EntryDistribution::AbsGaussian, 2, 0, Centering::GrandMean).is_err());
        assert!(estimate_beta(&[10, 20], EntryDistribution::AbsGaussian, 2, 0, Centering::GrandMean).is_err());
    }

    #[test]
    fn regression_recovers_line() {
        let (s, i, se, r2) = linear_regression(&[0.0, 1.0, 2.0, 3.0], &[1.0, 3.0, 5.0, 7.0]).unwrap();
        assert!((s - 2.0).abs() < 1e-12 && (i - 1.0).abs() < 1e-12);
        assert!(se.abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
        assert!(linear_regression(&[1.0, 1.0], &[0.0, 1.0]).is_err());
    }
}
