//! The readout objective in its two conventions.
//!
//! Training reports the mean-square error of the Boolean readout
//! `y = E w`. The analysis works with spins `x = 2w - 1` and the quadratic
//!
//! ```text
//! phi(x) = |a - A x|^2 + (eta / 2) |x|^2,   a = target - E 1 / 2,   A = E / 2
//! ```
//!
//! whose value on the hypercube is `T * mse(w) + eta * N / 2`.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, dot, norm_sq};
use crate::reservoir::StateMatrix;

/// Boolean readout weights, one bit per node.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BooleanWeights(Vec<bool>);

impl BooleanWeights {
    pub fn new(bits: Vec<bool>) -> Self {
        Self(bits)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![false; n])
    }

    pub fn ones(n: usize) -> Self {
        Self(vec![true; n])
    }

    /// Parses a 0/1 vector.
    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        bits.iter()
            .map(|&b| match b {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(Error::InvalidParameter(format!(
                    "Boolean weight must be 0 or 1, got {other}"
                ))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }

    /// Bit `i` of `mask` becomes weight `i`.
    pub fn from_mask(mask: u64, n: usize) -> Self {
        Self((0..n).map(|i| mask >> i & 1 == 1).collect())
    }

    pub fn to_mask(&self) -> u64 {
        self.0
            .iter()
            .enumerate()
            .fold(0u64, |m, (i, &b)| if b { m | 1 << i } else { m })
    }

    pub fn random<R: rand::Rng>(n: usize, rng: &mut R) -> Self {
        Self((0..n).map(|_| rng.random::<bool>()).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn flip(&mut self, i: usize) {
        self.0[i] = !self.0[i];
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn count_ones(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn to_spins(&self) -> SpinVector {
        SpinVector(self.0.iter().map(|&b| if b { 1 } else { -1 }).collect())
    }
}

impl std::fmt::Display for BooleanWeights {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Spin image `x = 2w - 1` of a weight vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SpinVector(Vec<i8>);

impl SpinVector {
    pub fn from_spins(spins: &[i8]) -> Result<Self> {
        if let Some(s) = spins.iter().find(|&&s| s != 1 && s != -1) {
            return Err(Error::InvalidParameter(format!(
                "spin must be -1 or +1, got {s}"
            )));
        }
        Ok(Self(spins.to_vec()))
    }

    pub fn from_mask(mask: u64, n: usize) -> Self {
        BooleanWeights::from_mask(mask, n).to_spins()
    }

    pub fn to_mask(&self) -> u64 {
        self.to_weights().to_mask()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn spins(&self) -> &[i8] {
        &self.0
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&s| f64::from(s)).collect()
    }

    pub fn to_weights(&self) -> BooleanWeights {
        BooleanWeights(self.0.iter().map(|&s| s > 0).collect())
    }

    pub fn flipped(&self, i: usize) -> Self {
        let mut out = self.clone();
        out.0[i] = -out.0[i];
        out
    }
}

impl From<&BooleanWeights> for SpinVector {
    fn from(w: &BooleanWeights) -> Self {
        w.to_spins()
    }
}

impl From<&SpinVector> for BooleanWeights {
    fn from(x: &SpinVector) -> Self {
        x.to_weights()
    }
}

/// `y[n] = sum_i w_i E[n, i]`.
pub fn readout(state: &StateMatrix, w: &BooleanWeights) -> Result<Vec<f64>> {
    check_dim("weight length", state.n_nodes(), w.len())?;
    Ok((0..state.horizon())
        .map(|n| {
            state
                .row(n)
                .iter()
                .zip(w.bits())
                .filter(|(_, &b)| b)
                .map(|(e, _)| e)
                .sum()
        })
        .collect())
}

/// Mean-square error of the readout against `target`.
pub fn mse(state: &StateMatrix, w: &BooleanWeights, target: &[f64]) -> Result<f64> {
    check_dim("target length", state.horizon(), target.len())?;
    let y = readout(state, w)?;
    let sse: f64 = target.iter().zip(&y).map(|(t, y)| (t - y).powi(2)).sum();
    Ok(sse / state.horizon() as f64)
}

/// Largest eigenvalues associated with a state matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaMax {
    /// `lambda_max(E^t E)`.
    pub gram: f64,
    /// Largest eigenvalue of the Hessian of `phi`, `gram / 2 + eta`.
    pub hessian: f64,
}

/// `lambda_max(E^t E)` by power iteration, plus the matching Hessian bound.
pub fn lambda_max(state: &StateMatrix, eta: f64) -> Result<LambdaMax> {
    let gram = linalg::gram_lambda_max(
        state.as_slice(),
        state.horizon(),
        state.n_nodes(),
        linalg::POWER_TOL,
        linalg::POWER_MAX_ITER,
    )?;
    Ok(LambdaMax {
        gram,
        hessian: gram / 2.0 + eta,
    })
}

/// Euclidean projection onto `{-1, 1}^N`. Zero maps to `+1`.
pub fn round_to_hypercube(a: &[f64]) -> SpinVector {
    SpinVector(a.iter().map(|&v| if v >= 0.0 { 1 } else { -1 }).collect())
}

/// Strong-convexity shift used when none is given: `1e-3 * lambda / N`.
pub fn default_eta(lambda_gram: f64, n: usize) -> f64 {
    1e-3 * lambda_gram / n as f64
}

/// Readout training problem: a state matrix paired with a target sequence.
#[derive(Debug, Clone)]
pub struct Objective {
    state: StateMatrix,
    /// Column-major copy of the state matrix.
    columns: Vec<f64>,
    column_norms_sq: Vec<f64>,
    target: Vec<f64>,
    offset: Vec<f64>,
    eta: f64,
    lambda: LambdaMax,
}

impl Objective {
    /// Builds the objective with the default shift [`default_eta`].
    pub fn new(state: StateMatrix, target: Vec<f64>) -> Result<Self> {
        Self::build(state, target, None)
    }

    pub fn with_eta(state: StateMatrix, target: Vec<f64>, eta: f64) -> Result<Self> {
        if !(eta >= 0.0) || !eta.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "eta must be a nonnegative number, got {eta}"
            )));
        }
        Self::build(state, target, Some(eta))
    }

    fn build(state: StateMatrix, target: Vec<f64>, eta: Option<f64>) -> Result<Self> {
        check_dim("target length", state.horizon(), target.len())?;
        if target.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("target"));
        }
        let raw = lambda_max(&state, 0.0)?.gram;
        let eta = eta.unwrap_or_else(|| default_eta(raw, state.n_nodes()));
        let columns = state.to_column_major();
        let t = state.horizon();
        let column_norms_sq = columns.chunks(t).map(norm_sq).collect();
        let offset = (0..t)
            .map(|n| target[n] - 0.5 * state.row(n).iter().sum::<f64>())
            .collect();
        Ok(Self {
            state,
            columns,
            column_norms_sq,
            target,
            offset,
            eta,
            lambda: LambdaMax {
                gram: raw,
                hessian: raw / 2.0 + eta,
            },
        })
    }

    pub fn state(&self) -> &StateMatrix {
        &self.state
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    /// `a = target - E 1 / 2`.
    pub fn offset(&self) -> &[f64] {
        &self.offset
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn lambda(&self) -> LambdaMax {
        self.lambda
    }

    pub fn n(&self) -> usize {
        self.state.n_nodes()
    }

    pub fn horizon(&self) -> usize {
        self.state.horizon()
    }

    /// Intensity trace of node `i`.
    pub fn column(&self, i: usize) -> &[f64] {
        let t = self.horizon();
        &self.columns[i * t..(i + 1) * t]
    }

    pub fn column_norm_sq(&self, i: usize) -> f64 {
        self.column_norms_sq[i]
    }

    /// `target - E w`.
    pub fn residual(&self, w: &BooleanWeights) -> Result<Vec<f64>> {
        check_dim("weight length", self.n(), w.len())?;
        let mut r = self.target.clone();
        for i in (0..self.n()).filter(|&i| w.get(i)) {
            for (rn, e) in r.iter_mut().zip(self.column(i)) {
                *rn -= e;
            }
        }
        Ok(r)
    }

    /// Sum of squared residuals, `|target - E w|^2`.
    pub fn sse(&self, w: &BooleanWeights) -> Result<f64> {
        Ok(norm_sq(&self.residual(w)?))
    }

    pub fn mse(&self, w: &BooleanWeights) -> Result<f64> {
        Ok(self.sse(w)? / self.horizon() as f64)
    }

    /// `A x` with `A = E / 2`.
    fn half_apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.horizon()];
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (o, e) in out.iter_mut().zip(self.column(i)) {
                *o += 0.5 * xi * e;
            }
        }
        out
    }

    /// `phi` extended to real vectors: `|a - A x|^2 + (eta/2)|x|^2`.
    pub fn phi(&self, x: &[f64]) -> Result<f64> {
        check_dim("point length", self.n(), x.len())?;
        let ax = self.half_apply(x);
        let fit: f64 = self
            .offset
            .iter()
            .zip(&ax)
            .map(|(a, v)| (a - v).powi(2))
            .sum();
        Ok(fit + 0.5 * self.eta * norm_sq(x))
    }

    /// `phi` on the hypercube.
    pub fn phi_spin(&self, x: &SpinVector) -> Result<f64> {
        self.phi(&x.to_f64())
    }

    /// `grad phi(x) = -2 A^t (a - A x) + eta x`.
    pub fn grad_phi(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("point length", self.n(), x.len())?;
        let ax = self.half_apply(x);
        let r: Vec<f64> = self.offset.iter().zip(&ax).map(|(a, v)| a - v).collect();
        Ok((0..self.n())
            .map(|i| -dot(self.column(i), &r) + self.eta * x[i])
            .collect())
    }

    /// Dense `E^t E`, row-major `N x N`.
    pub fn gram(&self) -> Vec<f64> {
        let n = self.n();
        let mut g = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = dot(self.column(i), self.column(j));
                g[i * n + j] = v;
                g[j * n + i] = v;
            }
        }
        g
    }
}

/// Free-function form of [`Objective::phi_spin`].
pub fn phi_spin(obj: &Objective, x: &SpinVector) -> Result<f64> {
    obj.phi_spin(x)
}

/// Free-function form of [`Objective::grad_phi`].
pub fn grad_phi(obj: &Objective, x: &[f64]) -> Result<Vec<f64>> {
    obj.grad_phi(x)
}

/// Constants entering the contraction bound for one instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryConstants {
    #[serde(rename = "lambda")]
    pub lambda_smooth: f64,
    pub eta: f64,
    pub kappa: f64,
    pub rho: f64,
    pub alpha: f64,
    pub beta: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small() -> StateMatrix {
        StateMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap()
    }

    #[test]
    fn readout_selects_columns() {
        let e = small();
        let w = BooleanWeights::from_bits(&[1, 0]).unwrap();
        assert_eq!(readout(&e, &w).unwrap(), vec![1.0, 3.0]);
        assert_eq!(readout(&e, &BooleanWeights::zeros(2)).unwrap(), vec![0.0, 0.0]);
        assert_eq!(readout(&e, &BooleanWeights::ones(2)).unwrap(), vec![3.0, 7.0]);
    }

    #[test]
    fn readout_dimension_mismatch() {
        assert!(matches!(
            readout(&small(), &BooleanWeights::zeros(3)),
            Err(Error::Dimension { .. })
        ));
        assert!(mse(&small(), &BooleanWeights::zeros(2), &[1.0]).is_err());
    }

    #[test]
    fn mse_examples() {
        let e = small();
        let w10 = BooleanWeights::from_bits(&[1, 0]).unwrap();
        assert_eq!(mse(&e, &w10, &[1.0, 3.0]).unwrap(), 0.0);
        assert_eq!(mse(&e, &w10, &[1.0, 0.0]).unwrap(), 4.5);
        assert_eq!(mse(&e, &BooleanWeights::zeros(2), &[1.0, 1.0]).unwrap(), 1.0);
    }

    #[test]
    fn bits_validation() {
        assert!(BooleanWeights::from_bits(&[0, 2]).is_err());
        assert!(SpinVector::from_spins(&[1, 0]).is_err());
    }

    #[test]
    fn convention_bridge_on_two_nodes() {
        let obj = Objective::with_eta(small(), vec![1.0, 0.0], 0.25).unwrap();
        for mask in 0..4 {
            let w = BooleanWeights::from_mask(mask, 2);
            let lhs = obj.phi_spin(&w.to_spins()).unwrap();
            let rhs = 2.0 * mse(obj.state(), &w, obj.target()).unwrap() + 0.25 * 2.0 / 2.0;
            assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1.0), "{mask}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn exact_fit_has_zero_phi_without_shift() {
        let obj = Objective::with_eta(small(), vec![1.0, 3.0], 0.0).unwrap();
        let x = BooleanWeights::from_bits(&[1, 0]).unwrap().to_spins();
        assert_eq!(obj.phi_spin(&x).unwrap(), 0.0);
    }

    #[test]
    fn gradient_vanishes_at_origin_with_zero_offset() {
        // target = E 1 / 2 gives a = 0.
        let e = small();
        let target = vec![1.5, 3.5];
        let obj = Objective::with_eta(e, target, 0.0).unwrap();
        assert!(obj.offset().iter().all(|&a| a == 0.0));
        assert_eq!(obj.grad_phi(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn lambda_examples() {
        let id = StateMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let l = lambda_max(&id, 0.0).unwrap();
        assert!((l.gram - 1.0).abs() < 1e-12);
        let d = StateMatrix::from_rows(&[vec![3.0, 0.0], vec![0.0, 4.0]]).unwrap();
        let l = lambda_max(&d, 0.5).unwrap();
        assert!((l.gram - 16.0).abs() < 1e-6);
        assert!((l.hessian - 8.5).abs() < 1e-6);
    }

    #[test]
    fn rounding_examples() {
        assert_eq!(round_to_hypercube(&[0.3, -2.0]).spins(), &[1, -1]);
        assert_eq!(round_to_hypercube(&[0.0, 0.0]).spins(), &[1, 1]);
    }

    #[test]
    fn default_eta_is_lambda_relative() {
        let obj = Objective::new(small(), vec![0.0, 0.0]).unwrap();
        let expected = 1e-3 * obj.lambda().gram / 2.0;
        assert!((obj.eta() - expected).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn mask_round_trip(mask in 0u64..1024) {
            let w = BooleanWeights::from_mask(mask, 10);
            prop_assert_eq!(w.to_mask(), mask);
            prop_assert_eq!(w.to_spins().to_weights(), w);
        }

        #[test]
        fn rounding_is_exact_minimizer(a in proptest::collection::vec(-3.0f64..3.0, 8)) {
            let p = round_to_hypercube(&a);
            let dist = |x: &SpinVector| -> f64 {
                a.iter().zip(x.to_f64()).map(|(ai, xi)| (ai - xi).powi(2)).sum()
            };
            let best = (0..256u64)
                .map(|m| dist(&SpinVector::from_mask(m, 8)))
                .fold(f64::INFINITY, f64::min);
            prop_assert!(dist(&p) <= best + 1e-12);
        }
    }
}
