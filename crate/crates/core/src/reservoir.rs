//! State-matrix generation: a leaky echo-state network read out in
//! intensity, or i.i.d. nonnegative random matrices.
//!
//! Row `n` of a [`StateMatrix`] holds the squared node states at time step
//! `n`; column `i` is the intensity trace of node `i`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Washout used by the task builders when none is given.
pub const DEFAULT_WASHOUT: usize = 100;

/// A `T x N` matrix of nonnegative node intensities, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct StateMatrix {
    horizon: usize,
    n_nodes: usize,
    values: Vec<f64>,
}

impl StateMatrix {
    /// Builds a state matrix from row-major values.
    ///
    /// Entries must be finite and nonnegative, and no column may be
    /// identically zero.
    pub fn new(horizon: usize, n_nodes: usize, values: Vec<f64>) -> Result<Self> {
        if horizon == 0 || n_nodes == 0 {
            return Err(Error::InvalidParameter(format!(
                "state matrix must be nonempty (got {horizon}x{n_nodes})"
            )));
        }
        crate::error::check_dim("state matrix entries", horizon * n_nodes, values.len())?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("state matrix"));
        }
        if let Some(v) = values.iter().find(|&&v| v < 0.0) {
            return Err(Error::InvalidParameter(format!(
                "state matrix entries must be nonnegative, found {v}"
            )));
        }
        for i in 0..n_nodes {
            if (0..horizon).all(|n| values[n * n_nodes + i] == 0.0) {
                return Err(Error::DegenerateReservoir { column: i });
            }
        }
        Ok(Self {
            horizon,
            n_nodes,
            values,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let horizon = rows.len();
        let n_nodes = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(horizon * n_nodes);
        for row in rows {
            crate::error::check_dim("state matrix row length", n_nodes, row.len())?;
            values.extend_from_slice(row);
        }
        Self::new(horizon, n_nodes, values)
    }

    /// Number of time steps `T`.
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Number of nodes `N`.
    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn get(&self, n: usize, i: usize) -> f64 {
        self.values[n * self.n_nodes + i]
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.values[n * self.n_nodes..(n + 1) * self.n_nodes]
    }

    /// Row-major entries.
    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        (0..self.horizon).map(|n| self.get(n, i)).collect()
    }

    /// Entries in column-major order (each node's trace contiguous).
    pub fn to_column_major(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.values.len());
        for i in 0..self.n_nodes {
            out.extend((0..self.horizon).map(|n| self.get(n, i)));
        }
        out
    }

    /// Rows `start..end` as a new matrix.
    pub fn rows(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.horizon {
            return Err(Error::InvalidParameter(format!(
                "row range {start}..{end} invalid for horizon {}",
                self.horizon
            )));
        }
        Self::new(
            end - start,
            self.n_nodes,
            self.values[start * self.n_nodes..end * self.n_nodes].to_vec(),
        )
    }

    pub fn max_entry(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

/// Echo-state reservoir parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReservoirConfig {
    pub n_nodes: usize,
    /// Spectral radius the recurrent matrix is rescaled to.
    pub spectral_radius: f64,
    pub leak_rate: f64,
    pub input_scale: f64,
    /// Scale of the per-node constant drive. Without it, squaring the
    /// states discards the sign of the input.
    pub bias_scale: f64,
    /// Fraction of nonzero recurrent couplings.
    pub connectivity: f64,
    pub seed: u64,
}

impl Default for ReservoirConfig {
    fn default() -> Self {
        Self {
            n_nodes: 100,
            spectral_radius: 0.9,
            leak_rate: 1.0,
            input_scale: 0.5,
            bias_scale: 0.5,
            connectivity: 0.1,
            seed: 0,
        }
    }
}

impl ReservoirConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_nodes == 0 {
            return Err(Error::InvalidParameter("n_nodes must be >= 1".into()));
        }
        if !(self.leak_rate > 0.0 && self.leak_rate <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "leak_rate must lie in (0, 1], got {}",
                self.leak_rate
            )));
        }
        if !(self.connectivity > 0.0 && self.connectivity <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "connectivity must lie in (0, 1], got {}",
                self.connectivity
            )));
        }
        if !(self.spectral_radius >= 0.0) || !self.spectral_radius.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "spectral_radius must be a nonnegative number, got {}",
                self.spectral_radius
            )));
        }
        if !self.input_scale.is_finite() || !self.bias_scale.is_finite() {
            return Err(Error::NonFinite("reservoir scales"));
        }
        Ok(())
    }
}

/// Fixed random weights of an echo-state network.
#[derive(Debug, Clone)]
pub struct Reservoir {
    cfg: ReservoirConfig,
    /// Sparse recurrent matrix, one `(column, weight)` list per row.
    recurrent: Vec<Vec<(usize, f64)>>,
    input_weights: Vec<f64>,
    bias: Vec<f64>,
}

impl Reservoir {
    pub fn new(cfg: &ReservoirConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.n_nodes;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

        let mut dense = DMatrix::<f64>::zeros(n, n);
        for r in 0..n {
            for c in 0..n {
                if rng.random::<f64>() < cfg.connectivity {
                    dense[(r, c)] = StandardNormal.sample(&mut rng);
                }
            }
        }
        let input_weights = (0..n)
            .map(|_| cfg.input_scale * rng.random_range(-1.0..1.0))
            .collect();
        let bias = (0..n)
            .map(|_| cfg.bias_scale * rng.random_range(-1.0..1.0))
            .collect();

        let radius = spectral_radius(&dense);
        let scale = if radius > 0.0 {
            cfg.spectral_radius / radius
        } else {
            0.0
        };
        let recurrent = (0..n)
            .map(|r| {
                (0..n)
                    .filter(|&c| dense[(r, c)] != 0.0)
                    .map(|c| (c, dense[(r, c)] * scale))
                    .collect()
            })
            .collect();

        Ok(Self {
            cfg: cfg.clone(),
            recurrent,
            input_weights,
            bias,
        })
    }

    pub fn config(&self) -> &ReservoirConfig {
        &self.cfg
    }

    pub fn input_weights(&self) -> &[f64] {
        &self.input_weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    /// Recurrent couplings of node `i` as `(source, weight)` pairs.
    pub fn recurrent_row(&self, i: usize) -> &[(usize, f64)] {
        &self.recurrent[i]
    }

    /// Runs the network from the zero state and returns the squared states
    /// after the first `washout` steps.
    pub fn drive(&self, input: &[f64], washout: usize) -> Result<StateMatrix> {
        if input.len() <= washout {
            return Err(Error::InputTooShort {
                needed: washout + 1,
                got: input.len(),
            });
        }
        if input.iter().any(|u| !u.is_finite()) {
            return Err(Error::NonFinite("reservoir input"));
        }
        let n = self.cfg.n_nodes;
        let a = self.cfg.leak_rate;
        let horizon = input.len() - washout;
        let mut state = vec![0.0; n];
        let mut next = vec![0.0; n];
        let mut values = Vec::with_capacity(horizon * n);
        for (t, &u) in input.iter().enumerate() {
            for (i, out) in next.iter_mut().enumerate() {
                let pre: f64 = self.recurrent[i]
                    .iter()
                    .map(|&(j, w)| w * state[j])
                    .sum::<f64>()
                    + self.input_weights[i] * u
                    + self.bias[i];
                *out = (1.0 - a) * state[i] + a * pre.tanh();
            }
            std::mem::swap(&mut state, &mut next);
            if t >= washout {
                values.extend(state.iter().map(|s| s * s));
            }
        }
        StateMatrix::new(horizon, n, values)
    }
}

fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.iter().all(|&x| x == 0.0) {
        return 0.0;
    }
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Drives a freshly built reservoir with `input`, discarding `washout` steps.
///
/// The returned horizon is `input.len() - washout`.
pub fn drive_reservoir(cfg: &ReservoirConfig, input: &[f64], washout: usize) -> Result<StateMatrix> {
    Reservoir::new(cfg)?.drive(input, washout)
}

/// Entry distribution for [`random_state_matrix`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryDistribution {
    /// Uniform on `[0, 1)`.
    Uniform01,
    /// `|Z|` with `Z` standard normal.
    AbsGaussian,
    /// `Z^2` with `Z` standard normal.
    SquaredGaussian,
}

impl EntryDistribution {
    pub fn mean(self) -> f64 {
        match self {
            Self::Uniform01 => 0.5,
            Self::AbsGaussian => (2.0 / std::f64::consts::PI).sqrt(),
            Self::SquaredGaussian => 1.0,
        }
    }

    pub fn variance(self) -> f64 {
        match self {
            Self::Uniform01 => 1.0 / 12.0,
            Self::AbsGaussian => 1.0 - 2.0 / std::f64::consts::PI,
            Self::SquaredGaussian => 2.0,
        }
    }

    pub(crate) fn sample<R: Rng>(self, rng: &mut R) -> f64 {
        match self {
            Self::Uniform01 => rng.random::<f64>(),
            Self::AbsGaussian => {
                let z: f64 = StandardNormal.sample(rng);
                z.abs()
            }
            Self::SquaredGaussian => {
                let z: f64 = StandardNormal.sample(rng);
                z * z
            }
        }
    }
}

/// `t x n` matrix with i.i.d. entries from `distribution`.
pub fn random_state_matrix(
    n: usize,
    t: usize,
    distribution: EntryDistribution,
    seed: u64,
) -> Result<StateMatrix> {
    if n == 0 || t == 0 {
        return Err(Error::InvalidParameter(format!(
            "random state matrix needs n >= 1 and t >= 1 (got n={n}, t={t})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..n * t).map(|_| distribution.sample(&mut rng)).collect();
    StateMatrix::new(t, n, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_zero_column() {
        let err = StateMatrix::from_rows(&[vec![1.0, 0.0], vec![2.0, 0.0]]).unwrap_err();
        assert!(matches!(err, Error::DegenerateReservoir { column: 1 }));
    }

    #[test]
    fn rejects_negative_entries() {
        assert!(StateMatrix::from_rows(&[vec![1.0, -0.5]]).is_err());
    }

    #[test]
    fn zero_drive_without_bias_is_degenerate() {
        let cfg = ReservoirConfig {
            n_nodes: 4,
            bias_scale: 0.0,
            seed: 3,
            ..Default::default()
        };
        let err = drive_reservoir(&cfg, &[0.0; 3], 0).unwrap_err();
        assert!(matches!(err, Error::DegenerateReservoir { .. }));
    }

    #[test]
    fn short_input_is_a_length_error() {
        let cfg = ReservoirConfig::default();
        let err = drive_reservoir(&cfg, &[0.1; 10], 10).unwrap_err();
        assert!(matches!(err, Error::InputTooShort { needed: 11, got: 10 }));
    }

    #[test]
    fn invalid_config_rejected() {
        for cfg in [
            ReservoirConfig {
                n_nodes: 0,
                ..Default::default()
            },
            ReservoirConfig {
                leak_rate: 0.0,
                ..Default::default()
            },
            ReservoirConfig {
                connectivity: 1.5,
                ..Default::default()
            },
        ] {
            assert!(Reservoir::new(&cfg).is_err());
        }
    }

    #[test]
    fn recurrent_matrix_hits_requested_radius() {
        let cfg = ReservoirConfig {
            n_nodes: 60,
            connectivity: 0.2,
            spectral_radius: 0.7,
            seed: 11,
            ..Default::default()
        };
        let res = Reservoir::new(&cfg).unwrap();
        let mut dense = DMatrix::<f64>::zeros(60, 60);
        for i in 0..60 {
            for &(j, w) in res.recurrent_row(i) {
                dense[(i, j)] = w;
            }
        }
        assert!((spectral_radius(&dense) - 0.7).abs() < 1e-9);
    }

    #[test]
    fn uniform_entries_in_unit_interval() {
        let m = random_state_matrix(2, 2, EntryDistribution::Uniform01, 5).unwrap();
        assert!(m.as_slice().iter().all(|&v| (0.0..1.0).contains(&v)));
        let again = random_state_matrix(2, 2, EntryDistribution::Uniform01, 5).unwrap();
        assert_eq!(m, again);
    }

    #[test]
    fn column_major_layout() {
        let m = StateMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(m.to_column_major(), vec![1.0, 3.0, 2.0, 4.0]);
        assert_eq!(m.column(1), vec![2.0, 4.0]);
        assert_eq!(m.rows(1, 2).unwrap().as_slice(), &[3.0, 4.0]);
    }
}
