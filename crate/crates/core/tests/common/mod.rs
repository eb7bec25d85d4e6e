//! Reference implementations used as oracles. They are written directly
//! from the definitions and share no code with the library beyond the
//! data types.
#![allow(dead_code)]

use boolcd::{BooleanWeights, StateMatrix};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_rows(rng: &mut ChaCha8Rng, t: usize, n: usize) -> Vec<Vec<f64>> {
    (0..t)
        .map(|_| (0..n).map(|_| rng.random::<f64>()).collect())
        .collect()
}

pub fn random_target(rng: &mut ChaCha8Rng, t: usize, scale: f64) -> Vec<f64> {
    (0..t).map(|_| scale * rng.random::<f64>()).collect()
}

pub fn naive_readout(rows: &[Vec<f64>], w: &[bool]) -> Vec<f64> {
    rows.iter()
        .map(|r| r.iter().zip(w).filter(|(_, &b)| b).map(|(v, _)| v).sum())
        .collect()
}

pub fn naive_mse(rows: &[Vec<f64>], w: &[bool], target: &[f64]) -> f64 {
    let y = naive_readout(rows, w);
    y.iter()
        .zip(target)
        .map(|(a, b)| (b - a) * (b - a))
        .sum::<f64>()
        / target.len() as f64
}

/// No single flip lowers the error by more than `rel_tol` of its value.
pub fn naive_is_local_min(rows: &[Vec<f64>], target: &[f64], w: &[bool], rel_tol: f64) -> bool {
    let base = naive_mse(rows, w, target);
    (0..w.len()).all(|i| {
        let mut v = w.to_vec();
        v[i] = !v[i];
        naive_mse(rows, &v, target) >= base - rel_tol * base.abs()
    })
}

pub fn rows_of(m: &StateMatrix) -> Vec<Vec<f64>> {
    (0..m.horizon()).map(|n| m.row(n).to_vec()).collect()
}

pub fn dmatrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
}

/// Largest eigenvalue of `E^t E` from a dense symmetric eigensolver.
pub fn dense_lambda(rows: &[Vec<f64>]) -> f64 {
    let e = dmatrix(rows);
    let g = e.transpose() * &e;
    g.symmetric_eigen().eigenvalues.max()
}

/// `|T - E/2 1 - E/2 x|^2 + eta/2 |x|^2`.
pub fn naive_phi(rows: &[Vec<f64>], target: &[f64], eta: f64, x: &[f64]) -> f64 {
    let mut s = 0.0;
    for (r, t) in rows.iter().zip(target) {
        let y: f64 = r.iter().zip(x).map(|(e, xi)| 0.5 * e * (1.0 + xi)).sum();
        s += (t - y) * (t - y);
    }
    s + 0.5 * eta * x.iter().map(|v| v * v).sum::<f64>()
}

/// `-E^t (a - A x) + eta x` with `a = T - E 1 / 2`, `A = E / 2`.
pub fn naive_grad(rows: &[Vec<f64>], target: &[f64], eta: f64, x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut g: Vec<f64> = x.iter().map(|v| eta * v).collect();
    for (r, t) in rows.iter().zip(target) {
        let resid = t - r.iter().zip(x).map(|(e, xi)| 0.5 * e * (1.0 + xi)).sum::<f64>();
        for i in 0..n {
            g[i] -= r[i] * resid;
        }
    }
    g
}

pub fn sign_round(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&a| if a >= 0.0 { 1.0 } else { -1.0 }).collect()
}

pub fn spins(mask: u64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| if mask >> i & 1 == 1 { 1.0 } else { -1.0 })
        .collect()
}

/// All points of the simplex in `n` dimensions whose coordinates are
/// multiples of `1 / steps`.
pub fn simplex_grid(n: usize, steps: usize) -> Vec<Vec<f64>> {
    fn rec(n: usize, left: usize, steps: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        if cur.len() == n - 1 {
            cur.push(left);
            out.push(cur.iter().map(|&c| c as f64 / steps as f64).collect());
            cur.pop();
            return;
        }
        for c in 0..=left {
            cur.push(c);
            rec(n, left - c, steps, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, steps, steps, &mut Vec::new(), &mut out);
    out
}

/// Largest ratio in the definition of kappa, searched over a simplex grid.
/// Returns `(max_ratio, kappa)`.
pub fn grid_kappa(rows: &[Vec<f64>], target: &[f64], eta: f64, steps: usize) -> (f64, f64) {
    let n = rows[0].len();
    let lambda = dense_lambda(rows);
    let grid = simplex_grid(n, steps);
    let mut best = 0.0f64;
    for mask in 0..1u64 << n {
        let x = spins(mask, n);
        let g = naive_grad(rows, target, eta, &x);
        let y: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - b / lambda).collect();
        let p = sign_round(&y);
        let num: Vec<f64> = p.iter().zip(&y).map(|(a, b)| a - b).collect();
        for cand in (0..1u64 << n).filter(|&c| c != mask) {
            let xc = spins(cand, n);
            let den: Vec<f64> = xc.iter().zip(&y).map(|(a, b)| a - b).collect();
            for pi in &grid {
                let a: f64 = num.iter().zip(pi).map(|(v, p)| p * v * v).sum();
                let b: f64 = den.iter().zip(pi).map(|(v, p)| p * v * v).sum();
                let r = if a == 0.0 {
                    0.0
                } else if b == 0.0 {
                    f64::INFINITY
                } else {
                    (a / b).sqrt()
                };
                best = best.max(r);
            }
        }
    }
    (best, (1.0 - best).clamp(0.0, 1.0))
}

pub fn weights(bits: &[bool]) -> BooleanWeights {
    BooleanWeights::new(bits.to_vec())
}
